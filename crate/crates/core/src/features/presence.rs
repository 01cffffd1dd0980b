use std::collections::{BTreeMap, BTreeSet};

use crate::dataset::Cohort;
use crate::preprocess::FeatureMatrix;

pub fn presence_column(seq: &str) -> String {
    format!("present:{seq}")
}

/// The `top_k` peptides with abundance records at the most visits, ties
/// broken by sequence.
pub fn top_peptides(cohort: &Cohort, top_k: usize) -> Vec<String> {
    let visits = presence_sets(cohort);
    let mut ranked: Vec<(&str, usize)> = visits.iter().map(|(s, v)| (*s, v.len())).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().take(top_k).map(|(s, _)| s.to_string()).collect()
}

/// Visits that have an abundance record for each peptide.
pub(crate) fn presence_sets(cohort: &Cohort) -> BTreeMap<&str, BTreeSet<(i64, u32)>> {
    let mut out: BTreeMap<&str, BTreeSet<(i64, u32)>> = BTreeMap::new();
    for p in &cohort.peptides {
        if p.peptide_abundance.is_some() {
            out.entry(p.peptide_sequence.as_str())
                .or_default()
                .insert((p.patient_id, p.visit_month));
        }
    }
    out
}

/// One 0/1 column per selected peptide over every visit of the cohort.
pub fn peptide_presence(cohort: &Cohort, top_k: usize) -> FeatureMatrix {
    let peptides = top_peptides(cohort, top_k);
    let sets = presence_sets(cohort);
    let keys: BTreeSet<(i64, u32)> = cohort
        .clinical
        .iter()
        .chain(&cohort.supplemental)
        .map(|r| (r.patient_id, r.visit_month))
        .chain(cohort.peptides.iter().map(|p| (p.patient_id, p.visit_month)))
        .chain(cohort.proteins.iter().map(|p| (p.patient_id, p.visit_month)))
        .collect();
    let names = peptides.iter().map(|s| presence_column(s)).collect();
    let mut m = FeatureMatrix::empty(names, keys.into_iter().collect());
    for (c, seq) in peptides.iter().enumerate() {
        let set = sets.get(seq.as_str());
        for r in 0..m.n_rows {
            let present = set.is_some_and(|s| s.contains(&m.row_keys[r]));
            m.set(r, c, if present { 1.0 } else { 0.0 });
        }
    }
    m
}

//! Seeded synthetic cohorts that mimic the shape of the real study data:
//! four visits per patient, correlated UPDRS parts that drift upward, a mix of
//! log-normal and symmetric proteomic columns, and calibrated missingness with
//! UPDRS part 4 the most often missing.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{visit_id, ClinicalRecord, Cohort, Medication, PeptideRecord, ProteinRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub visit_months: Vec<u32>,
    pub n_peptides: usize,
    pub n_proteins: usize,
    /// Clinical-only patients written to the supplemental table; one per
    /// sixteen main patients when unset.
    pub n_supplemental_patients: Option<usize>,
    /// Percentage of numeric columns with |skewness| above the profile threshold.
    pub target_pct_skewed: f64,
    /// Percentage of missing cells in the merged feature table.
    pub target_pct_missing: f64,
    /// Population correlation between UPDRS parts 1 and 2.
    pub updrs12_correlation: f64,
    /// Peptides whose detection depends on disease severity.
    pub n_informative_peptides: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn supplemental_patients(&self) -> usize {
        self.n_supplemental_patients
            .unwrap_or_else(|| self.n_patients.div_ceil(16))
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 248,
            visit_months: vec![0, 6, 12, 24],
            n_peptides: 60,
            n_proteins: 20,
            n_supplemental_patients: None,
            target_pct_skewed: 20.58,
            target_pct_missing: 8.9,
            updrs12_correlation: 0.66,
            n_informative_peptides: 5,
            seed: 42,
        }
    }
}

// Per-part location, scale and loading on the latent severity. Parts 1 and 2
// take their loading from `updrs12_correlation`.
const UPDRS_MEAN: [f64; 4] = [10.0, 12.0, 28.0, 6.0];
const UPDRS_SD: [f64; 4] = [3.5, 4.5, 10.0, 2.0];
const LOADING_3: f64 = 0.8;
const LOADING_4: f64 = 0.5;

const UPDRS4_MISSING_RATE: f64 = 0.40;
const UPDRS123_MISSING_RATE: f64 = 0.01;

const AMINO: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_patients == 0 {
            return bad("n_patients must be at least 1".into());
        }
        if self.visit_months.is_empty() {
            return bad("visit_months must not be empty".into());
        }
        let mut sorted = self.visit_months.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.visit_months.len() {
            return bad("visit_months must be distinct".into());
        }
        for (name, pct) in [
            ("target_pct_skewed", self.target_pct_skewed),
            ("target_pct_missing", self.target_pct_missing),
        ] {
            if !(0.0..=100.0).contains(&pct) {
                return bad(format!("{name} must lie in [0, 100], got {pct}"));
            }
        }
        if !(0.0..=1.0).contains(&self.updrs12_correlation) {
            return bad("updrs12_correlation must lie in [0, 1]".into());
        }
        if self.n_peptides > 0 && self.n_proteins == 0 {
            return bad("peptides need at least one protein".into());
        }
        if self.n_informative_peptides > self.n_peptides {
            return bad("n_informative_peptides exceeds n_peptides".into());
        }
        Ok(())
    }

    fn n_proteomic(&self) -> usize {
        self.n_peptides + self.n_proteins
    }
}

struct Visit {
    patient_id: i64,
    month: u32,
    latent: f64,
    supplemental: bool,
}

/// Builds a cohort as a pure function of `config`.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Cohort> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut months = config.visit_months.clone();
    months.sort_unstable();
    let span = f64::from(*months.last().unwrap()).max(1.0);

    // Latent severity: uniform baseline plus a nonnegative linear drift.
    let mut visits = Vec::new();
    let baseline = rand_distr::Uniform::new(-(3f64.sqrt()), 3f64.sqrt());
    let drift = Normal::new(0.5, 0.25).unwrap();
    let mut add_patient = |id: i64, pmonths: &[u32], supplemental: bool, rng: &mut ChaCha8Rng| {
        let b = baseline.sample(rng);
        let d: f64 = drift.sample(rng);
        let d = d.abs();
        for &m in pmonths {
            visits.push(Visit {
                patient_id: id,
                month: m,
                latent: b + d * f64::from(m) / span,
                supplemental,
            });
        }
    };
    for i in 0..config.n_patients {
        add_patient(1001 + i as i64, &months, false, &mut rng);
    }
    for i in 0..config.supplemental_patients() {
        add_patient(9001 + i as i64, &months[..1], true, &mut rng);
    }
    standardize_latent(&mut visits);

    let rows = visits.len();
    let clinical_rows: Vec<usize> = (0..rows).filter(|&r| !visits[r].supplemental).collect();

    // Complete UPDRS table first; missingness is injected afterwards.
    let rho12 = config.updrs12_correlation.sqrt();
    let loadings = [rho12, rho12, LOADING_3, LOADING_4];
    let mut updrs = vec![[None; 4]; rows];
    let mut meds = Vec::with_capacity(rows);
    for (r, v) in visits.iter().enumerate() {
        for k in 0..4 {
            let e: f64 = rng.sample(StandardNormal);
            let l = loadings[k];
            let raw = UPDRS_MEAN[k] + UPDRS_SD[k] * (l * v.latent + (1.0 - l * l).sqrt() * e);
            updrs[r][k] = Some(raw.round().max(0.0));
        }
        let p_on = 0.7 / (1.0 + (-v.latent).exp());
        let u: f64 = rng.gen();
        meds.push(if u < p_on {
            Medication::On
        } else if u < p_on + 0.15 {
            Medication::Off
        } else {
            Medication::Missing
        });
    }

    // Proteomic columns: peptides then proteins.
    let n_cols = 4 + config.n_proteomic();
    let n_skewed = (config.target_pct_skewed / 100.0 * n_cols as f64).round() as usize;
    if n_skewed > config.n_proteomic() {
        return Err(Error::InvalidConfig(format!(
            "target_pct_skewed needs {n_skewed} skewed columns but only {} proteomic columns exist",
            config.n_proteomic()
        )));
    }
    let mut skewed = vec![false; config.n_proteomic()];
    for j in sample(&mut rng, config.n_proteomic(), n_skewed) {
        skewed[j] = true;
    }
    let uniprot: Vec<String> = random_names(&mut rng, config.n_proteins, |rng| {
        format!("P{:05}", rng.gen_range(0..100_000))
    });
    let peptide_names: Vec<String> = random_names(&mut rng, config.n_peptides, |rng| {
        let len = rng.gen_range(8..=20);
        (0..len)
            .map(|_| AMINO[rng.gen_range(0..AMINO.len())] as char)
            .collect()
    });

    let mut proteomic = vec![vec![0.0; clinical_rows.len()]; config.n_proteomic()];
    for (j, col) in proteomic.iter_mut().enumerate() {
        let (lo, hi) = if j < config.n_peptides { (3.0, 6.0) } else { (4.0, 7.0) };
        let scale = 10f64.powf(rng.gen_range(lo..hi));
        let signal = if j < config.n_informative_peptides { 0.4 } else { 0.1 };
        let sigma = rng.gen_range(0.7..1.0);
        for (slot, &r) in col.iter_mut().zip(&clinical_rows) {
            let e: f64 = rng.sample(StandardNormal);
            let g = signal * visits[r].latent + (1.0 - signal * signal).sqrt() * e;
            *slot = if skewed[j] {
                scale * (sigma * g).exp()
            } else {
                scale * (1.0 + 0.12 * g)
            };
        }
    }

    // Missingness budget over the merged table (all visits x all columns).
    let total_cells = rows * n_cols;
    let structural = (rows - clinical_rows.len()) * config.n_proteomic();
    let target = (config.target_pct_missing / 100.0 * total_cells as f64).round() as usize;
    if target < structural {
        return Err(Error::InvalidConfig(format!(
            "supplemental visits alone leave {structural} missing cells, above the target {target}"
        )));
    }
    let budget = target - structural;
    let mut updrs_counts = [
        (UPDRS123_MISSING_RATE * rows as f64).round() as usize,
        (UPDRS123_MISSING_RATE * rows as f64).round() as usize,
        (UPDRS123_MISSING_RATE * rows as f64).round() as usize,
        (UPDRS4_MISSING_RATE * rows as f64).round() as usize,
    ];
    let wanted: usize = updrs_counts.iter().sum();
    if wanted > budget || config.n_proteomic() == 0 {
        let f = if wanted == 0 { 0.0 } else { budget as f64 / wanted as f64 };
        let f = f.min(1.0);
        for c in &mut updrs_counts {
            *c = (*c as f64 * f).floor() as usize;
        }
        updrs_counts[3] += budget.saturating_sub(updrs_counts.iter().sum()).min(rows - updrs_counts[3]);
    }
    let proteomic_budget = budget.saturating_sub(updrs_counts.iter().sum());
    let cap = updrs_counts[3].saturating_sub(1).min(clinical_rows.len());
    let proteomic_counts = spread_budget(&mut rng, proteomic_budget, config.n_proteomic(), cap);

    for (k, &count) in updrs_counts.iter().enumerate() {
        for r in sample(&mut rng, rows, count.min(rows)) {
            updrs[r][k] = None;
        }
    }
    let mut observed = vec![vec![true; clinical_rows.len()]; config.n_proteomic()];
    for (j, &count) in proteomic_counts.iter().enumerate() {
        let picks = if j < config.n_informative_peptides {
            // Severe visits lose informative peptides more often.
            let weights: Vec<f64> = clinical_rows
                .iter()
                .map(|&r| (-1.2 * visits[r].latent).exp())
                .collect();
            weighted_sample(&mut rng, &weights, count)
        } else {
            sample(&mut rng, clinical_rows.len(), count).into_vec()
        };
        for i in picks {
            observed[j][i] = false;
        }
    }

    let mut cohort = Cohort::default();
    for (r, v) in visits.iter().enumerate() {
        let rec = ClinicalRecord {
            visit_id: visit_id(v.patient_id, v.month),
            patient_id: v.patient_id,
            visit_month: v.month,
            updrs: updrs[r],
            medication: meds[r],
        };
        if v.supplemental {
            cohort.supplemental.push(rec);
        } else {
            cohort.clinical.push(rec);
        }
    }
    for (i, &r) in clinical_rows.iter().enumerate() {
        let v = &visits[r];
        let vid = visit_id(v.patient_id, v.month);
        for j in 0..config.n_peptides {
            if observed[j][i] {
                cohort.peptides.push(PeptideRecord {
                    visit_id: vid.clone(),
                    visit_month: v.month,
                    patient_id: v.patient_id,
                    uniprot_id: uniprot[j % config.n_proteins].clone(),
                    peptide_sequence: peptide_names[j].clone(),
                    peptide_abundance: Some(proteomic[j][i]),
                });
            }
        }
        for p in 0..config.n_proteins {
            let j = config.n_peptides + p;
            if observed[j][i] {
                cohort.proteins.push(ProteinRecord {
                    visit_id: vid.clone(),
                    visit_month: v.month,
                    patient_id: v.patient_id,
                    uniprot_id: uniprot[p].clone(),
                    npx: Some(proteomic[j][i]),
                });
            }
        }
    }
    Ok(cohort)
}

fn standardize_latent(visits: &mut [Visit]) {
    let n = visits.len() as f64;
    let mean = visits.iter().map(|v| v.latent).sum::<f64>() / n;
    let var = visits.iter().map(|v| (v.latent - mean).powi(2)).sum::<f64>() / n;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    for v in visits {
        v.latent = (v.latent - mean) / sd;
    }
}

fn random_names(
    rng: &mut ChaCha8Rng,
    n: usize,
    mut make: impl FnMut(&mut ChaCha8Rng) -> String,
) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let name = make(rng);
        if seen.insert(name.clone()) {
            out.push(name);
        }
    }
    out
}

/// Splits `budget` missing cells over `n` columns with uneven weights, each
/// column capped at `cap`.
fn spread_budget(rng: &mut ChaCha8Rng, budget: usize, n: usize, cap: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let wsum: f64 = weights.iter().sum();
    let mut counts: Vec<usize> = weights
        .iter()
        .map(|w| ((budget as f64 * w / wsum).floor() as usize).min(cap))
        .collect();
    // Hand out the rounding remainder one cell at a time.
    let mut left = budget.saturating_sub(counts.iter().sum());
    let mut j = 0;
    let mut stalled = 0;
    while left > 0 && stalled < n {
        if counts[j] < cap {
            counts[j] += 1;
            left -= 1;
            stalled = 0;
        } else {
            stalled += 1;
        }
        j = (j + 1) % n;
    }
    counts
}

/// Weighted sampling without replacement (Efraimidis–Spirakis keys).
fn weighted_sample(rng: &mut ChaCha8Rng, weights: &[f64], k: usize) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            (u.ln() / w, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().take(k).map(|(_, i)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::profile;

    #[test]
    fn default_has_248_patients_with_four_visits() {
        let cohort = generate_synthetic(&SynthConfig::default()).unwrap();
        let mut per_patient = std::collections::BTreeMap::new();
        for r in &cohort.clinical {
            *per_patient.entry(r.patient_id).or_insert(0) += 1;
        }
        assert_eq!(per_patient.len(), 248);
        assert!(per_patient.values().all(|&n| n == 4));
    }

    #[test]
    fn same_seed_same_cohort() {
        let cfg = SynthConfig {
            seed: 7,
            ..SynthConfig::default()
        };
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        let other = SynthConfig { seed: 8, ..cfg };
        assert_ne!(generate_synthetic(&other).unwrap(), generate_synthetic(&SynthConfig { seed: 7, ..SynthConfig::default() }).unwrap());
    }

    #[test]
    fn missing_rate_is_calibrated() {
        let p = profile(&generate_synthetic(&SynthConfig::default()).unwrap()).unwrap();
        assert!((p.pct_missing_cells - 8.9).abs() <= 1.0, "{}", p.pct_missing_cells);
        let u4 = p.per_column_missing["updrs_4"];
        for (col, pct) in &p.per_column_missing {
            if col != "updrs_4" {
                assert!(*pct < u4, "{col} {pct} >= updrs_4 {u4}");
            }
        }
    }

    #[test]
    fn skew_rate_is_calibrated() {
        let p = profile(&generate_synthetic(&SynthConfig::default()).unwrap()).unwrap();
        assert!((p.pct_skewed_columns - 20.58).abs() <= 2.0, "{}", p.pct_skewed_columns);
    }

    #[test]
    fn rejects_bad_configs() {
        for cfg in [
            SynthConfig { n_patients: 0, ..SynthConfig::default() },
            SynthConfig { target_pct_missing: 120.0, ..SynthConfig::default() },
            SynthConfig { visit_months: vec![], ..SynthConfig::default() },
            SynthConfig { target_pct_missing: 0.0, ..SynthConfig::default() },
        ] {
            assert!(matches!(generate_synthetic(&cfg), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn trajectories_trend_upward() {
        let cohort = generate_synthetic(&SynthConfig { target_pct_missing: 2.0, ..SynthConfig::default() }).unwrap();
        let mean_at = |m: u32| {
            let v: Vec<f64> = cohort
                .clinical
                .iter()
                .filter(|r| r.visit_month == m)
                .filter_map(|r| r.updrs[2])
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean_at(24) > mean_at(0));
    }
}

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{ClinicalRecord, Cohort, Medication, PeptideRecord, ProteinRecord};
use crate::error::{Error, Result};

pub const PEPTIDE_HEADER: [&str; 6] = [
    "visit_id",
    "visit_month",
    "patient_id",
    "UniProt",
    "Peptide",
    "PeptideAbundance",
];
pub const PROTEIN_HEADER: [&str; 5] = ["visit_id", "visit_month", "patient_id", "UniProt", "NPX"];
pub const CLINICAL_HEADER: [&str; 8] = [
    "visit_id",
    "patient_id",
    "visit_month",
    "updrs_1",
    "updrs_2",
    "updrs_3",
    "updrs_4",
    "upd23b_clinical_state_on_medication",
];

/// Locations of the four cohort tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortPaths {
    pub peptides: PathBuf,
    pub proteins: PathBuf,
    pub clinical: PathBuf,
    pub supplemental: PathBuf,
}

impl CohortPaths {
    /// The conventional file names inside a data directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        CohortPaths {
            peptides: dir.join("train_peptides.csv"),
            proteins: dir.join("train_proteins.csv"),
            clinical: dir.join("train_clinical_data.csv"),
            supplemental: dir.join("supplemental_clinical_data.csv"),
        }
    }
}

/// Reads the four tables. Empty cells become `None`, never zero.
pub fn load_cohort(paths: &CohortPaths) -> Result<Cohort> {
    Ok(Cohort {
        peptides: read_table(&paths.peptides, &PEPTIDE_HEADER, parse_peptide)?,
        proteins: read_table(&paths.proteins, &PROTEIN_HEADER, parse_protein)?,
        clinical: read_table(&paths.clinical, &CLINICAL_HEADER, parse_clinical)?,
        supplemental: read_table(&paths.supplemental, &CLINICAL_HEADER, parse_clinical)?,
    })
}

/// Writes the four tables with the bit-exact headers `load_cohort` expects.
pub fn write_cohort(cohort: &Cohort, paths: &CohortPaths) -> Result<()> {
    let mut w = csv::Writer::from_path(&paths.peptides)?;
    w.write_record(PEPTIDE_HEADER)?;
    for p in &cohort.peptides {
        w.write_record([
            p.visit_id.clone(),
            p.visit_month.to_string(),
            p.patient_id.to_string(),
            p.uniprot_id.clone(),
            p.peptide_sequence.clone(),
            fmt_opt(p.peptide_abundance),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&paths.proteins)?;
    w.write_record(PROTEIN_HEADER)?;
    for p in &cohort.proteins {
        w.write_record([
            p.visit_id.clone(),
            p.visit_month.to_string(),
            p.patient_id.to_string(),
            p.uniprot_id.clone(),
            fmt_opt(p.npx),
        ])?;
    }
    w.flush()?;

    write_clinical(&cohort.clinical, &paths.clinical)?;
    write_clinical(&cohort.supplemental, &paths.supplemental)
}

fn write_clinical(records: &[ClinicalRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CLINICAL_HEADER)?;
    for r in records {
        w.write_record([
            r.visit_id.clone(),
            r.patient_id.to_string(),
            r.visit_month.to_string(),
            fmt_opt(r.updrs[0]),
            fmt_opt(r.updrs[1]),
            fmt_opt(r.updrs[2]),
            fmt_opt(r.updrs[3]),
            r.medication.as_csv().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// `{}` on f64 prints the shortest representation that parses back exactly.
fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Named access to the cells of one CSV row.
struct Row<'a> {
    record: &'a csv::StringRecord,
    index: &'a HashMap<&'static str, usize>,
}

impl Row<'_> {
    fn str(&self, name: &str) -> &str {
        self.record.get(self.index[name]).unwrap_or("")
    }

    fn req<T: FromStr>(&self, name: &str) -> std::result::Result<T, String> {
        let raw = self.str(name).trim();
        if raw.is_empty() {
            return Err(format!("`{name}` is empty"));
        }
        raw.parse()
            .map_err(|_| format!("`{name}`: cannot parse {raw:?}"))
    }

    fn opt_f64(&self, name: &str) -> std::result::Result<Option<f64>, String> {
        let raw = self.str(name).trim();
        if raw.is_empty() {
            return Ok(None);
        }
        raw.parse::<f64>()
            .map(Some)
            .map_err(|_| format!("`{name}`: cannot parse {raw:?} as a number"))
    }
}

fn parse_peptide(row: &Row) -> std::result::Result<PeptideRecord, String> {
    Ok(PeptideRecord {
        visit_id: row.str("visit_id").to_string(),
        visit_month: row.req("visit_month")?,
        patient_id: row.req("patient_id")?,
        uniprot_id: row.str("UniProt").to_string(),
        peptide_sequence: row.str("Peptide").to_string(),
        peptide_abundance: row.opt_f64("PeptideAbundance")?,
    })
}

fn parse_protein(row: &Row) -> std::result::Result<ProteinRecord, String> {
    Ok(ProteinRecord {
        visit_id: row.str("visit_id").to_string(),
        visit_month: row.req("visit_month")?,
        patient_id: row.req("patient_id")?,
        uniprot_id: row.str("UniProt").to_string(),
        npx: row.opt_f64("NPX")?,
    })
}

fn parse_clinical(row: &Row) -> std::result::Result<ClinicalRecord, String> {
    let med_raw = row.str("upd23b_clinical_state_on_medication");
    let medication = Medication::parse(med_raw)
        .ok_or_else(|| format!("unknown medication state {med_raw:?}"))?;
    Ok(ClinicalRecord {
        visit_id: row.str("visit_id").to_string(),
        patient_id: row.req("patient_id")?,
        visit_month: row.req("visit_month")?,
        updrs: [
            row.opt_f64("updrs_1")?,
            row.opt_f64("updrs_2")?,
            row.opt_f64("updrs_3")?,
            row.opt_f64("updrs_4")?,
        ],
        medication,
    })
}

fn read_table<T>(
    path: &Path,
    schema: &[&'static str],
    parse: impl Fn(&Row) -> std::result::Result<T, String>,
) -> Result<Vec<T>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes.as_slice());
    let headers = reader.headers()?.clone();
    let mut index = HashMap::new();
    for &name in schema {
        let pos = headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                name: name.to_string(),
            })?;
        index.insert(name, pos);
    }

    let mut out = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| Error::RowParse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = Row {
            record: &record,
            index: &index,
        };
        out.push(parse(&row).map_err(|reason| Error::RowParse {
            path: path.to_path_buf(),
            line,
            reason,
        })?);
    }
    Ok(out)
}

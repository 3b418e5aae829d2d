//! Molecule datasets: CSV ingestion/export, conformer averaging, summary statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SinetError};

/// Boltzmann constant in eV/K.
pub const BOLTZMANN_EV_PER_K: f64 = 8.617333262e-5;
/// Room temperature used for conformer averaging unless overridden.
pub const DEFAULT_TEMPERATURE_K: f64 = 298.15;

pub const INCHI_PREFIX: &str = "InChI=";

/// One conformer: its HOMO energy and energy relative to some reference, both eV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conformer {
    pub homo_ev: f64,
    pub rel_energy_ev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeRecord {
    pub id: String,
    pub smiles: String,
    pub inchi: String,
    pub homo_ev: f64,
    #[serde(default)]
    pub conformers: Option<Vec<Conformer>>,
}

impl MoleculeRecord {
    pub fn new(id: impl Into<String>, smiles: impl Into<String>, inchi: impl Into<String>, homo_ev: f64) -> Self {
        Self {
            id: id.into(),
            smiles: smiles.into(),
            inchi: inchi.into(),
            homo_ev,
            conformers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.smiles.is_empty() {
            return Err(SinetError::Data(format!("record {}: empty SMILES", self.id)));
        }
        if !self.inchi.starts_with(INCHI_PREFIX) {
            return Err(SinetError::Data(format!(
                "record {}: InChI {:?} does not start with {INCHI_PREFIX:?}",
                self.id, self.inchi
            )));
        }
        if !self.homo_ev.is_finite() {
            return Err(SinetError::Data(format!("record {}: HOMO is not finite", self.id)));
        }
        if !(-10.0 < self.homo_ev && self.homo_ev < 0.0) {
            warn!(
                "record {}: HOMO {} eV is outside the usual donor range (-10, 0)",
                self.id, self.homo_ev
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetProvenance {
    Source,
    TargetExperimental,
    TargetDft,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub provenance: DatasetProvenance,
    pub records: Vec<MoleculeRecord>,
}

impl Dataset {
    /// Validates every record and id uniqueness.
    pub fn new(name: impl Into<String>, provenance: DatasetProvenance, records: Vec<MoleculeRecord>) -> Result<Self> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            r.validate()?;
            if let Some(first) = seen.insert(&r.id, i) {
                return Err(SinetError::Data(format!(
                    "duplicate id {:?} at records {first} and {i}",
                    r.id
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            provenance,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.homo_ev).collect()
    }

    /// Records at `indices`, in that order.
    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Self {
        Self {
            name: name.into(),
            provenance: self.provenance,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Replaces `homo_ev` by the Boltzmann average wherever conformers are present.
    pub fn apply_boltzmann(&mut self, temperature_k: f64) -> Result<()> {
        for r in &mut self.records {
            if let Some(c) = &r.conformers {
                r.homo_ev = boltzmann_average(c, temperature_k)?;
            }
        }
        Ok(())
    }
}

/// Header names for each logical column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub id: String,
    pub smiles: String,
    pub inchi: String,
    pub homo_ev: String,
    pub conf_homo_ev: String,
    pub conf_rel_e: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            id: "id".into(),
            smiles: "smiles".into(),
            inchi: "inchi".into(),
            homo_ev: "homo_ev".into(),
            conf_homo_ev: "conf_homo_ev".into(),
            conf_rel_e: "conf_rel_e".into(),
        }
    }
}

fn parse_float(s: &str, line: u64, column: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| SinetError::Data(format!("line {line}, column {column}: cannot parse {s:?} as a number")))
}

fn parse_list(s: &str, line: u64, column: &str) -> Result<Vec<f64>> {
    s.split(';').map(|v| parse_float(v, line, column)).collect()
}

/// Reads a dataset from CSV. Line numbers in diagnostics count the header as line 1.
///
/// When `homo_ev` is blank and conformer columns are filled, the value is the
/// Boltzmann average at [`DEFAULT_TEMPERATURE_K`].
pub fn read_csv<R: Read>(
    reader: R,
    name: &str,
    provenance: DatasetProvenance,
    columns: &ColumnMap,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| SinetError::Data(format!("{name}: unreadable header: {e}")))?
        .clone();
    let find = |col: &str| headers.iter().position(|h| h.trim() == col);
    let require = |col: &str| {
        find(col).ok_or_else(|| SinetError::Data(format!("{name}: missing required column {col:?}")))
    };
    let (c_id, c_smiles, c_inchi, c_homo) = (
        require(&columns.id)?,
        require(&columns.smiles)?,
        require(&columns.inchi)?,
        require(&columns.homo_ev)?,
    );
    let c_conf = match (find(&columns.conf_homo_ev), find(&columns.conf_rel_e)) {
        (Some(h), Some(e)) => Some((h, e)),
        (None, None) => None,
        _ => {
            return Err(SinetError::Data(format!(
                "{name}: conformer columns {:?} and {:?} must appear together",
                columns.conf_homo_ev, columns.conf_rel_e
            )))
        }
    };

    let mut records = Vec::new();
    let mut first_line: HashMap<String, u64> = HashMap::new();
    let mut duplicates: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| SinetError::Data(format!("{name}: {e}")))?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |i: usize| row.get(i).unwrap_or("").to_string();
        let id = get(c_id);
        if let Some(&prev) = first_line.get(&id) {
            duplicates.entry(id.clone()).or_insert_with(|| vec![prev]).push(line);
        } else {
            first_line.insert(id.clone(), line);
        }

        let conformers = match c_conf {
            Some((h, e)) if !get(h).trim().is_empty() || !get(e).trim().is_empty() => {
                let homos = parse_list(&get(h), line, &columns.conf_homo_ev)?;
                let energies = parse_list(&get(e), line, &columns.conf_rel_e)?;
                if homos.len() != energies.len() {
                    return Err(SinetError::Data(format!(
                        "line {line}: {} conformer HOMO values but {} relative energies",
                        homos.len(),
                        energies.len()
                    )));
                }
                Some(
                    homos
                        .into_iter()
                        .zip(energies)
                        .map(|(homo_ev, rel_energy_ev)| Conformer { homo_ev, rel_energy_ev })
                        .collect::<Vec<_>>(),
                )
            }
            _ => None,
        };
        let homo_raw = get(c_homo);
        let homo_ev = match (&conformers, homo_raw.trim().is_empty()) {
            (Some(c), true) => boltzmann_average(c, DEFAULT_TEMPERATURE_K)?,
            _ => parse_float(&homo_raw, line, &columns.homo_ev)?,
        };
        let record = MoleculeRecord {
            id,
            smiles: get(c_smiles),
            inchi: get(c_inchi),
            homo_ev,
            conformers,
        };
        record
            .validate()
            .map_err(|e| SinetError::Data(format!("line {line}: {e}")))?;
        records.push(record);
    }
    if !duplicates.is_empty() {
        let list: Vec<String> = duplicates
            .iter()
            .map(|(id, l)| {
                let l: Vec<String> = l.iter().map(u64::to_string).collect();
                format!("{id:?} on lines {}", l.join(" and "))
            })
            .collect();
        return Err(SinetError::Data(format!("{name}: duplicate ids: {}", list.join("; "))));
    }
    Dataset::new(name, provenance, records)
}

/// A molecule to predict: identifiers and notations, no label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoleculeInput {
    pub id: String,
    pub smiles: String,
    pub inchi: String,
}

/// Reads `id`, `smiles` and `inchi` columns; any other column is ignored.
pub fn read_inputs_csv<R: Read>(reader: R, name: &str, columns: &ColumnMap) -> Result<Vec<MoleculeInput>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| SinetError::Data(format!("{name}: unreadable header: {e}")))?
        .clone();
    let require = |col: &str| {
        headers
            .iter()
            .position(|h| h.trim() == col)
            .ok_or_else(|| SinetError::Data(format!("{name}: missing required column {col:?}")))
    };
    let (c_id, c_smiles, c_inchi) = (require(&columns.id)?, require(&columns.smiles)?, require(&columns.inchi)?);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| SinetError::Data(format!("{name}: {e}")))?;
        let get = |i: usize| row.get(i).unwrap_or("").to_string();
        out.push(MoleculeInput {
            id: get(c_id),
            smiles: get(c_smiles),
            inchi: get(c_inchi),
        });
    }
    Ok(out)
}

pub fn load_inputs_csv(path: &Path, columns: &ColumnMap) -> Result<Vec<MoleculeInput>> {
    let file = std::fs::File::open(path).map_err(|e| SinetError::io(path, e))?;
    read_inputs_csv(file, &path.display().to_string(), columns)
}

pub fn load_csv(path: &Path, provenance: DatasetProvenance, columns: &ColumnMap) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| SinetError::io(path, e))?;
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    read_csv(file, &name, provenance, columns)
}

fn join_floats(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Writes the dataset with the default column names. Floats use the shortest
/// representation that parses back to the identical value.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let with_conf = dataset.records.iter().any(|r| r.conformers.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let cols = ColumnMap::default();
    let mut header = vec![cols.id, cols.smiles, cols.inchi, cols.homo_ev];
    if with_conf {
        header.extend([cols.conf_homo_ev, cols.conf_rel_e]);
    }
    let err = |e: csv::Error| SinetError::Data(format!("csv write failed: {e}"));
    w.write_record(&header).map_err(err)?;
    for r in &dataset.records {
        let mut row = vec![r.id.clone(), r.smiles.clone(), r.inchi.clone(), r.homo_ev.to_string()];
        if with_conf {
            let c = r.conformers.as_deref().unwrap_or(&[]);
            row.push(join_floats(c.iter().map(|c| c.homo_ev)));
            row.push(join_floats(c.iter().map(|c| c.rel_energy_ev)));
        }
        w.write_record(&row).map_err(err)?;
    }
    w.flush()
        .map_err(|e| SinetError::Data(format!("csv flush failed: {e}")))
}

pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| SinetError::io(path, e))?;
    write_csv(dataset, std::io::BufWriter::new(file))
}

/// Normalized Boltzmann weights `exp(-ΔE_i/kT) / Σ_j exp(-ΔE_j/kT)`.
///
/// Energies are shifted by their minimum first, so the largest weight is `exp(0)`.
pub fn boltzmann_weights(rel_energies_ev: &[f64], temperature_k: f64) -> Result<Vec<f64>> {
    if rel_energies_ev.is_empty() {
        return Err(SinetError::Empty("no conformers to average".into()));
    }
    if !(temperature_k > 0.0 && temperature_k.is_finite()) {
        return Err(SinetError::Domain(format!(
            "temperature must be positive and finite, got {temperature_k} K"
        )));
    }
    if let Some(bad) = rel_energies_ev.iter().find(|e| !e.is_finite()) {
        return Err(SinetError::NonFinite(format!("conformer energy {bad}")));
    }
    let kt = BOLTZMANN_EV_PER_K * temperature_k;
    let min = rel_energies_ev.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = rel_energies_ev.iter().map(|e| (-(e - min) / kt).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Boltzmann-weighted mean HOMO over conformers.
pub fn boltzmann_average(conformers: &[Conformer], temperature_k: f64) -> Result<f64> {
    if let Some(bad) = conformers.iter().find(|c| !c.homo_ev.is_finite()) {
        return Err(SinetError::NonFinite(format!("conformer HOMO {}", bad.homo_ev)));
    }
    let energies: Vec<f64> = conformers.iter().map(|c| c.rel_energy_ev).collect();
    let weights = boltzmann_weights(&energies, temperature_k)?;
    Ok(weights.iter().zip(conformers).map(|(w, c)| w * c.homo_ev).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub min: usize,
    pub max: usize,
    pub histogram: BTreeMap<usize, usize>,
}

impl LengthStats {
    fn of<'a>(strings: impl Iterator<Item = &'a str>) -> Self {
        let mut histogram = BTreeMap::new();
        for s in strings {
            *histogram.entry(s.chars().count()).or_insert(0) += 1;
        }
        Self {
            min: histogram.keys().next().copied().unwrap_or(0),
            max: histogram.keys().next_back().copied().unwrap_or(0),
            histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    pub homo_min: f64,
    pub homo_max: f64,
    pub homo_mean: f64,
    /// Population standard deviation.
    pub homo_stdev: f64,
    pub smiles_length: LengthStats,
    pub inchi_length: LengthStats,
    pub smiles_charset: usize,
    pub inchi_charset: usize,
}

impl DatasetStats {
    /// Warnings for strings longer than the encoder lengths.
    pub fn length_warnings(&self, smiles_max_len: usize, inchi_max_len: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.smiles_length.max > smiles_max_len {
            out.push(format!(
                "longest SMILES has {} characters, encoder max_len is {smiles_max_len}",
                self.smiles_length.max
            ));
        }
        if self.inchi_length.max > inchi_max_len {
            out.push(format!(
                "longest InChI has {} characters, encoder max_len is {inchi_max_len}",
                self.inchi_length.max
            ));
        }
        for w in &out {
            warn!("{w}");
        }
        out
    }
}

pub fn dataset_stats(dataset: &Dataset) -> Result<DatasetStats> {
    if dataset.is_empty() {
        return Err(SinetError::Empty(format!("dataset {} has no records", dataset.name)));
    }
    let y = dataset.targets();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let charset = |f: fn(&MoleculeRecord) -> &str| {
        dataset
            .records
            .iter()
            .flat_map(|r| f(r).chars())
            .collect::<BTreeSet<_>>()
            .len()
    };
    Ok(DatasetStats {
        count: y.len(),
        homo_min: y.iter().copied().fold(f64::INFINITY, f64::min),
        homo_max: y.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        homo_mean: mean,
        homo_stdev: var.sqrt(),
        smiles_length: LengthStats::of(dataset.records.iter().map(|r| r.smiles.as_str())),
        inchi_length: LengthStats::of(dataset.records.iter().map(|r| r.inchi.as_str())),
        smiles_charset: charset(|r| &r.smiles),
        inchi_charset: charset(|r| &r.inchi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Vocabulary;

    const GOOD: &str = r#"id,smiles,inchi,homo_ev
m1,CCO,"InChI=1S/C2H6O/c1-2-3/h3H,2H2,1H3",-5.1
m2,c1ccccc1,InChI=1S/C6H6/c1-2-4-6-5-3-1/h1-6H,-5.55
m3,CC(=O)O,"InChI=1S/C2H4O2/c1-2(3)4/h1H3,(H,3,4)",-5.25
"#;

    fn read(text: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), "t", DatasetProvenance::Synthetic, &ColumnMap::default())
    }

    #[test]
    fn loads_rows_in_order() {
        let d = read(GOOD).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.records[1].id, "m2");
        assert_eq!(d.records[2].homo_ev, -5.25);
    }

    #[test]
    fn duplicate_ids_name_both_lines() {
        let text = "id,smiles,inchi,homo_ev
m1,C,InChI=1S/CH4/h1H4,-5
m2,C,InChI=1S/CH4/h1H4,-5
m3,C,InChI=1S/CH4/h1H4,-5
m1,C,InChI=1S/CH4/h1H4,-5
";
        let err = read(text).unwrap_err().to_string();
        assert!(err.contains("\"m1\" on lines 2 and 5"), "{err}");
    }

    #[test]
    fn inchi_prefix_is_required() {
        let text = "id,smiles,inchi,homo_ev\nm1,CCO,1S/C2H6O/c1-2-3,-5.0\n";
        let err = read(text).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("InChI="), "{err}");
    }

    #[test]
    fn malformed_float_and_missing_column() {
        let err = read("id,smiles,inchi,homo_ev\nm1,C,InChI=1S/CH4,abc\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("homo_ev"), "{err}");
        let err = read("id,smiles,homo_ev\nm1,C,-5\n").unwrap_err().to_string();
        assert!(err.contains("\"inchi\""), "{err}");
    }

    #[test]
    fn column_map_renames() {
        let text = "name,SMILES,InChI,HOMO\nx,C,InChI=1S/CH4/h1H4,-5.5\n";
        let cols = ColumnMap {
            id: "name".into(),
            smiles: "SMILES".into(),
            inchi: "InChI".into(),
            homo_ev: "HOMO".into(),
            ..ColumnMap::default()
        };
        let d = read_csv(text.as_bytes(), "t", DatasetProvenance::TargetExperimental, &cols).unwrap();
        assert_eq!(d.records[0].id, "x");
    }

    #[test]
    fn conformer_columns_round_trip() {
        let text = "id,smiles,inchi,homo_ev,conf_homo_ev,conf_rel_e
a,C,InChI=1S/CH4/h1H4,,-5.1;-5.3,0;0.1
b,CC,InChI=1S/C2H6/c1-2/h1-2H3,-5.2,,
";
        let d = read(text).unwrap();
        let c = d.records[0].conformers.as_ref().unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(d.records[0].homo_ev, boltzmann_average(c, DEFAULT_TEMPERATURE_K).unwrap());
        assert!(d.records[1].conformers.is_none());

        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        assert_eq!(read(std::str::from_utf8(&buf).unwrap()).unwrap(), d);
    }

    #[test]
    fn boltzmann_examples() {
        let c = |h, e| Conformer { homo_ev: h, rel_energy_ev: e };
        let avg = boltzmann_average(&[c(-5.0, 0.2), c(-6.0, 0.2)], 298.15).unwrap();
        assert!((avg + 5.5).abs() < 1e-15);
        assert_eq!(boltzmann_average(&[c(-5.3, 1.0)], 298.15).unwrap(), -5.3);

        // two-term hand evaluation, kT = 8.617333262e-5 * 298.15
        let kt = 8.617333262e-5 * 298.15;
        let w1 = (-0.1_f64 / kt).exp();
        let expected = (-5.0 + w1 * -5.4) / (1.0 + w1);
        let got = boltzmann_average(&[c(-5.0, 0.0), c(-5.4, 0.1)], 298.15).unwrap();
        assert!((got - expected).abs() < 1e-14);

        assert!(boltzmann_average(&[], 298.15).is_err());
        assert!(boltzmann_average(&[c(-5.0, f64::NAN)], 298.15).is_err());
        assert!(boltzmann_average(&[c(-5.0, 0.0)], 0.0).is_err());
    }

    #[test]
    fn boltzmann_weights_are_a_distribution() {
        let w = boltzmann_weights(&[0.3, 0.0, 0.05, 1.2], 298.15).unwrap();
        assert!(w.iter().all(|&v| v >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stats_single_record() {
        let d = Dataset::new(
            "one",
            DatasetProvenance::Synthetic,
            vec![MoleculeRecord::new("a", "CCO", "InChI=1S/C2H6O/c1-2-3/h3H,2H2,1H3", -5.2)],
        )
        .unwrap();
        let s = dataset_stats(&d).unwrap();
        assert_eq!(s.homo_stdev, 0.0);
        assert_eq!((s.homo_min, s.homo_max, s.homo_mean), (-5.2, -5.2, -5.2));
        assert_eq!(s.smiles_length.max, 3);
        assert_eq!(s.length_warnings(2, 162).len(), 1);
        assert!(s.length_warnings(82, 162).is_empty());
    }

    #[test]
    fn charset_matches_vocabulary() {
        let d = read(GOOD).unwrap();
        let s = dataset_stats(&d).unwrap();
        let smiles: Vec<&str> = d.records.iter().map(|r| r.smiles.as_str()).collect();
        let inchi: Vec<&str> = d.records.iter().map(|r| r.inchi.as_str()).collect();
        assert_eq!(s.smiles_charset, Vocabulary::build(&smiles, false).unwrap().width());
        assert_eq!(s.inchi_charset, Vocabulary::build(&inchi, false).unwrap().width());
        assert!(dataset_stats(&d.subset("empty", &[])).is_err());
    }
}

//! On-disk tables and sidecars of a run directory.
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use qrc_core::bench::{Dataset, FeatureSet, Responses};
use qrc_core::features::{FeatureVector, Standardizer};
use qrc_core::reservoir::ResponseRecord;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const DATASET: &str = "dataset.json";
pub const REFERENCE: &str = "reference.csv";
pub const RESPONSES: &str = "responses.csv";
pub const RESPONSES_META: &str = "responses.json";
pub const FEATURES: &str = "features.csv";
pub const FEATURES_META: &str = "features.json";

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Git-style object hash: SHA-256 of `blob <len>\0<content>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Write through a temporary sibling so readers never see half a file.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serialisable");
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn require(path: &Path, stage: &'static str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            stage,
        })
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path, stage: &'static str) -> Result<T, CliError> {
    require(path, stage)?;
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::artifact(path, e))
}

pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(header.iter().map(|s| s.as_ref()))
            .expect("in-memory write");
        Self { writer }
    }

    pub fn row<S: AsRef<[u8]>, I: IntoIterator<Item = S>>(&mut self, fields: I) {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn save(self, path: &Path) -> Result<(), CliError> {
        let bytes = self.writer.into_inner().expect("in-memory flush");
        write_bytes(path, &bytes)
    }
}

/// Rows of a CSV artifact after checking its header.
pub fn read_table(
    path: &Path,
    header: &[&str],
    stage: &'static str,
) -> Result<Vec<csv::StringRecord>, CliError> {
    require(path, stage)?;
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::artifact(path, e))?;
    let found = reader
        .headers()
        .map_err(|e| CliError::artifact(path, e))?
        .clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::artifact(
            path,
            format!("expected columns {}", header.join(",")),
        ));
    }
    reader
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::artifact(path, e))
}

fn field<T: std::str::FromStr>(
    path: &Path,
    row: &csv::StringRecord,
    i: usize,
) -> Result<T, CliError> {
    row.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| {
        CliError::artifact(
            path,
            format!(
                "bad value in column {i} of row {:?}",
                row.position().map(|p| p.line())
            ),
        )
    })
}

pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<(), CliError> {
    write_json(&dir.join(DATASET), dataset)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    let path = dir.join(DATASET);
    let dataset: Dataset = read_json(&path, "simulate")?;
    dataset
        .validate()
        .map_err(|e| CliError::artifact(&path, e))?;
    Ok(dataset)
}

const RESPONSE_COLUMNS: [&str; 6] = [
    "node",
    "time",
    "occupation",
    "standard_error",
    "imag_occupation",
    "imag_standard_error",
];

#[derive(Debug, Serialize, Deserialize)]
struct ResponsesMeta {
    n_samples: usize,
    n_nodes: usize,
    n_times: usize,
    n_trajectories: usize,
    reference_diverged: usize,
    diverged: Vec<usize>,
}

fn push_record(table: &mut Table, prefix: Option<usize>, record: &ResponseRecord<f64>) {
    for node in 0..record.n_nodes() {
        for (k, &t) in record.times.iter().enumerate() {
            let mut fields: Vec<String> = prefix.map(|s| s.to_string()).into_iter().collect();
            fields.extend([
                node.to_string(),
                fmt(t),
                fmt(record.occupations[[node, k]]),
                fmt(record.standard_errors[[node, k]]),
                fmt(record.imag_occupations[[node, k]]),
                fmt(record.imag_standard_errors[[node, k]]),
            ]);
            table.row(fields);
        }
    }
}

pub fn save_responses(
    dir: &Path,
    responses: &Responses,
    samples: bool,
) -> Result<Vec<PathBuf>, CliError> {
    let r = &responses.reference;
    let mut reference = Table::new(&RESPONSE_COLUMNS);
    push_record(&mut reference, None, r);
    reference.save(&dir.join(REFERENCE))?;
    let mut written = vec![dir.join(REFERENCE)];
    if samples {
        let mut header = vec!["sample"];
        header.extend(RESPONSE_COLUMNS);
        let mut table = Table::new(&header);
        for (i, record) in responses.samples.iter().enumerate() {
            push_record(&mut table, Some(i), record);
        }
        table.save(&dir.join(RESPONSES))?;
        written.push(dir.join(RESPONSES));
    }
    let meta = ResponsesMeta {
        n_samples: responses.samples.len(),
        n_nodes: r.n_nodes(),
        n_times: r.n_times(),
        n_trajectories: r.n_trajectories,
        reference_diverged: r.diverged_count,
        diverged: responses.samples.iter().map(|s| s.diverged_count).collect(),
    };
    write_json(&dir.join(RESPONSES_META), &meta)?;
    written.push(dir.join(RESPONSES_META));
    Ok(written)
}

fn parse_records(
    path: &Path,
    rows: &[csv::StringRecord],
    offset: usize,
    meta: &ResponsesMeta,
    diverged: &[usize],
) -> Result<Vec<ResponseRecord<f64>>, CliError> {
    let (n_nodes, n_times) = (meta.n_nodes, meta.n_times);
    let per_record = n_nodes * n_times;
    if per_record == 0 || rows.len() != per_record * diverged.len() {
        return Err(CliError::artifact(
            path,
            format!("expected {} rows", per_record * diverged.len()),
        ));
    }
    let mut out = Vec::with_capacity(diverged.len());
    for (s, chunk) in rows.chunks(per_record).enumerate() {
        let mut arrays = [(); 4].map(|_| Array2::zeros((n_nodes, n_times)));
        let mut times = vec![0.0; n_times];
        for (j, row) in chunk.iter().enumerate() {
            let (node, k) = (j / n_times, j % n_times);
            if offset == 1 && field::<usize>(path, row, 0)? != s {
                return Err(CliError::artifact(path, "rows are not grouped by sample"));
            }
            if field::<usize>(path, row, offset)? != node {
                return Err(CliError::artifact(path, "rows are not grouped by node"));
            }
            let t: f64 = field(path, row, offset + 1)?;
            if node == 0 {
                times[k] = t;
            } else if t != times[k] {
                return Err(CliError::artifact(path, "nodes disagree on the time grid"));
            }
            for (a, array) in arrays.iter_mut().enumerate() {
                array[[node, k]] = field(path, row, offset + 2 + a)?;
            }
        }
        let [occupations, standard_errors, imag_occupations, imag_standard_errors] = arrays;
        out.push(ResponseRecord {
            times,
            occupations,
            standard_errors,
            imag_occupations,
            imag_standard_errors,
            n_trajectories: meta.n_trajectories,
            diverged_count: diverged[s],
        });
    }
    Ok(out)
}

pub fn load_responses(dir: &Path) -> Result<Responses, CliError> {
    let meta: ResponsesMeta = read_json(&dir.join(RESPONSES_META), "simulate")?;
    let path = dir.join(REFERENCE);
    let rows = read_table(&path, &RESPONSE_COLUMNS, "simulate")?;
    let reference = parse_records(&path, &rows, 0, &meta, &[meta.reference_diverged])?.remove(0);
    let path = dir.join(RESPONSES);
    let mut header = vec!["sample"];
    header.extend(RESPONSE_COLUMNS);
    let rows = read_table(&path, &header, "simulate")?;
    let samples = parse_records(&path, &rows, 1, &meta, &meta.diverged)?;
    Ok(Responses { reference, samples })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeaturesMeta {
    pub window: (f64, f64),
    pub n_bins: usize,
    pub n_nodes: usize,
    pub n_samples: usize,
    pub n_trajectories: usize,
    pub diverged: usize,
    /// Standardiser fitted on the training split.
    pub scaler: Standardizer<f64>,
}

fn feature_header(n_features: usize) -> Vec<String> {
    let mut header = vec!["sample".to_string(), "split".to_string()];
    header.extend((0..n_features).map(|i| format!("f{i}")));
    header
}

pub fn save_features(
    dir: &Path,
    dataset: &Dataset,
    features: &FeatureSet,
) -> Result<Vec<PathBuf>, CliError> {
    let first = features
        .features
        .first()
        .ok_or_else(|| CliError::Usage("no features to write".into()))?;
    let mut table = Table::new(&feature_header(first.len()));
    for (i, fv) in features.features.iter().enumerate() {
        let split = if dataset.test.binary_search(&i).is_ok() {
            "test"
        } else {
            "train"
        };
        let mut fields = vec![i.to_string(), split.to_string()];
        fields.extend(fv.values.iter().map(|&v| fmt(v)));
        table.row(fields);
    }
    table.save(&dir.join(FEATURES))?;
    let meta = FeaturesMeta {
        window: first.window,
        n_bins: first.n_bins,
        n_nodes: first.n_nodes,
        n_samples: features.features.len(),
        n_trajectories: features.n_trajectories,
        diverged: features.diverged,
        scaler: Standardizer::fit_rows(&features.matrix(&dataset.train)?)?,
    };
    write_json(&dir.join(FEATURES_META), &meta)?;
    Ok(vec![dir.join(FEATURES), dir.join(FEATURES_META)])
}

pub fn load_features(dir: &Path) -> Result<FeatureSet, CliError> {
    let meta: FeaturesMeta = read_json(&dir.join(FEATURES_META), "features")?;
    let path = dir.join(FEATURES);
    let dim = meta.n_nodes * meta.n_bins;
    let header = feature_header(dim);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = read_table(&path, &header, "features")?;
    if rows.len() != meta.n_samples {
        return Err(CliError::artifact(
            &path,
            format!("expected {} rows", meta.n_samples),
        ));
    }
    let bin_width = (meta.window.1 - meta.window.0) / meta.n_bins as f64;
    let mut features = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if field::<usize>(&path, row, 0)? != i {
            return Err(CliError::artifact(&path, "rows are not in sample order"));
        }
        let values = (0..dim)
            .map(|j| field(&path, row, 2 + j))
            .collect::<Result<_, _>>()?;
        features.push(FeatureVector {
            values,
            n_nodes: meta.n_nodes,
            n_bins: meta.n_bins,
            window: meta.window,
            bin_width,
        });
    }
    Ok(FeatureSet {
        features,
        n_trajectories: meta.n_trajectories,
        diverged: meta.diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            6.02214076e23,
            f64::MIN_POSITIVE,
            0.30000000000000004,
        ] {
            assert_eq!(fmt(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn hash_matches_git_blob_layout() {
        // sha256 of "blob 0\0"
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}

//! Headered CSV datasets with the label in the last column.

use std::collections::BTreeMap;
use std::path::Path;

use super::{DatasetMeta, LabeledDataset};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Orders label values numerically when they all parse as numbers, otherwise
/// lexicographically.
fn dense_classes(raw: &[String]) -> Vec<String> {
    let mut unique: Vec<String> = raw.to_vec();
    unique.sort();
    unique.dedup();
    let numeric: Option<Vec<f64>> = unique.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut paired: Vec<(f64, String)> = values.into_iter().zip(unique).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        return paired.into_iter().map(|(_, s)| s).collect();
    }
    unique
}

/// Loads a CSV whose last column holds class labels; labels are remapped to
/// dense indices in sorted order. Samples are stored unnormalized.
pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format(path, format!("{other:?}")),
        })?;
    let width = reader.headers()?.len();
    if width < 2 {
        return Err(Error::format(path, "expected a header with at least one feature and a label column"));
    }
    let dim = width - 1;
    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // data rows are 1-based and the header is line 1
        let line = i + 2;
        if record.len() != width {
            return Err(Error::format(
                path,
                format!("ragged row at line {line}: expected {width} fields, found {}", record.len()),
            ));
        }
        for (col, cell) in record.iter().take(dim).enumerate() {
            let value: f32 = cell.parse().ok().filter(|v: &f32| v.is_finite()).ok_or_else(|| {
                Error::format(
                    path,
                    format!("non-numeric cell {cell:?} at line {line}, column {}", col + 1),
                )
            })?;
            features.push(value);
        }
        raw_labels.push(record[dim].to_string());
    }
    if raw_labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let class_names = dense_classes(&raw_labels);
    let index: BTreeMap<&str, usize> = class_names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|s| index[s.as_str()]).collect();
    let n = labels.len();
    let meta = DatasetMeta {
        num_classes: class_names.len(),
        len: n,
        dim,
        name: path
            .file_stem()
            .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned()),
        mean: vec![0.0; dim],
        std: vec![1.0; dim],
        class_names,
    };
    LabeledDataset::new(Tensor::new(vec![n, dim], features)?, labels, meta)
}

/// Writes `f0..f{d-1},label`, using the original label values when known.
pub fn save_csv(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    })?;
    let dim = dataset.dim();
    let mut header: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    writer.write_record(&header)?;
    let names = &dataset.meta().class_names;
    for (row, &label) in dataset.labels().iter().enumerate() {
        let mut fields: Vec<String> = dataset.samples().row(row).iter().map(|v| v.to_string()).collect();
        fields.push(names.get(label).cloned().unwrap_or_else(|| label.to_string()));
        writer.write_record(&fields)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("d.csv");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn labels_are_densely_remapped() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a,b,y\n1,2,5\n3,4,5\n5,6,9\n");
        let ds = load_csv(&p).unwrap();
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.labels(), &[0, 0, 1]);
        assert_eq!(ds.samples().data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        assert_eq!(
            dense_classes(&["10".into(), "9".into(), "10".into()]),
            vec!["9".to_string(), "10".to_string()]
        );
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_csv(&write(&dir, "")).is_err());
        assert!(load_csv(&write(&dir, "a,y\n")).is_err());
        let err = load_csv(&write(&dir, "a,b,y\n1,2,0\n3,0\n")).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = load_csv(&write(&dir, "a,b,y\n1,2,0\n3,x,1\n")).unwrap_err();
        assert!(err.to_string().contains("line 3, column 2"), "{err}");
    }

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let src = write(&dir, "a,b,y\n0.1,-2.5e-7,cat\n3.333333,4,dog\n1e10,0,cat\n");
        let ds = load_csv(&src).unwrap();
        let out = dir.path().join("out.csv");
        save_csv(&ds, &out).unwrap();
        let back = load_csv(&out).unwrap();
        assert_eq!(back.samples(), ds.samples());
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.meta().class_names, ds.meta().class_names);
    }
}

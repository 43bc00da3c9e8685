use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::cka::{features_to_matrix, gram_linear, CenteredGram, CkaValue};
use crate::data::LabeledDataset;
use crate::nn::MlpNetwork;
use crate::seed;
use crate::{Error, Result};

/// Layer-by-layer CKA between two networks, each fed its own dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CkaHeatmap {
    /// Labels of network A's layers (rows).
    pub row_labels: Vec<String>,
    /// Labels of network B's layers (columns).
    pub col_labels: Vec<String>,
    /// `values[i][j]` compares layer `i` of A with layer `j` of B.
    pub values: Vec<Vec<CkaValue>>,
    pub samples: usize,
    pub seed: u64,
}

impl CkaHeatmap {
    pub fn shape(&self) -> (usize, usize) {
        (self.row_labels.len(), self.col_labels.len())
    }

    pub fn diagonal(&self) -> Vec<CkaValue> {
        self.values.iter().enumerate().filter_map(|(i, row)| row.get(i).copied()).collect()
    }

    /// Mean of the non-degenerate diagonal entries.
    pub fn mean_diagonal(&self) -> Option<f64> {
        let vals: Vec<f64> = self.diagonal().into_iter().filter_map(CkaValue::value).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn layer_labels(depth: usize) -> Vec<String> {
    (1..=depth).map(|k| format!("layer{k}")).collect()
}

/// `m` indices drawn class by class in class-major order, `⌊m/C⌋` per class
/// with the remainder going to the lowest classes.
///
/// The draw for each class depends only on `(seed, class)`, so two datasets
/// with the same class count sampled under one seed yield row-aligned
/// classes. A class with too few members is cycled through in shuffled order.
pub fn class_aligned_sample(dataset: &LabeledDataset, m: usize, seed: u64) -> Result<Vec<usize>> {
    let classes = dataset.num_classes();
    let mut out = Vec::with_capacity(m);
    for (class, members) in dataset.class_indices().iter().enumerate() {
        let need = m / classes + usize::from(class < m % classes);
        if need == 0 {
            continue;
        }
        if members.is_empty() {
            return Err(Error::Data(format!("class {class} has no samples to draw from")));
        }
        let mut rng = seed::derived_rng(seed, "cka-sample", class as u64);
        let mut order = members.clone();
        let mut picked: Vec<usize> = Vec::with_capacity(need);
        while picked.len() < need {
            order.shuffle(&mut rng);
            picked.extend(order.iter().take(need - picked.len()));
        }
        out.extend(picked);
    }
    Ok(out)
}

fn centered_layers(net: &MlpNetwork<f32>, data: &LabeledDataset, indices: &[usize]) -> Result<Vec<CenteredGram>> {
    if net.input_dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            found: data.dim(),
        });
    }
    let (x, _) = data.gather(indices)?;
    net.forward_features(&x)?
        .layers
        .iter()
        .map(|a| CenteredGram::new(gram_linear(&features_to_matrix(a)?)?.matrix()))
        .collect()
}

/// CKA between every layer of `net_a` on `data_a` and every layer of `net_b`
/// on `data_b`, using `m` class-aligned samples per side.
///
/// Rows of the grid are spread over up to `workers` threads; the result does
/// not depend on `workers`.
pub fn cka_heatmap(
    net_a: &MlpNetwork<f32>,
    data_a: &LabeledDataset,
    net_b: &MlpNetwork<f32>,
    data_b: &LabeledDataset,
    m: usize,
    seed: u64,
    workers: usize,
) -> Result<CkaHeatmap> {
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2, found: m });
    }
    if data_a.num_classes() != data_b.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: data_a.num_classes(),
            found: data_b.num_classes(),
        });
    }
    let grams_a = centered_layers(net_a, data_a, &class_aligned_sample(data_a, m, seed)?)?;
    let grams_b = centered_layers(net_b, data_b, &class_aligned_sample(data_b, m, seed)?)?;

    let rows = grams_a.len();
    let workers = workers.clamp(1, rows.max(1));
    let mut values: Vec<Option<Result<Vec<CkaValue>>>> = (0..rows).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (ga, gb) = (&grams_a, &grams_b);
                scope.spawn(move || {
                    (w..rows)
                        .step_by(workers)
                        .map(|i| (i, gb.iter().map(|b| ga[i].cka(b)).collect::<Result<Vec<_>>>()))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, row) in h.join().expect("heatmap worker panicked") {
                values[i] = Some(row);
            }
        }
    });
    let values = values
        .into_iter()
        .map(|r| r.expect("every row is assigned"))
        .collect::<Result<Vec<_>>>()?;
    Ok(CkaHeatmap {
        row_labels: layer_labels(grams_a.len()),
        col_labels: layer_labels(grams_b.len()),
        values,
        samples: m,
        seed,
    })
}

/// CSV with a header row of B's layer labels; each row starts with A's label.
pub fn write_heatmap_csv<W: std::io::Write>(heatmap: &CkaHeatmap, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["a\\b".to_string()];
    header.extend(heatmap.col_labels.iter().cloned());
    w.write_record(&header)?;
    for (label, row) in heatmap.row_labels.iter().zip(&heatmap.values) {
        let mut record = vec![label.clone()];
        record.extend(row.iter().map(CkaValue::to_string));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing heatmap: {e}")))
}

pub fn save_heatmap_csv(heatmap: &CkaHeatmap, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_heatmap_csv(heatmap, std::io::BufWriter::new(file))
}

const CELL: usize = 56;
const MARGIN: usize = 72;

/// White at 0 through to deep blue at 1.
fn ramp(v: f64) -> (u8, u8, u8) {
    let t = v.clamp(0.0, 1.0);
    let mix = |lo: f64, hi: f64| (lo + (hi - lo) * t).round() as u8;
    (mix(255.0, 8.0), mix(255.0, 48.0), mix(255.0, 107.0))
}

/// A self-contained SVG grid of the heatmap; degenerate cells are grey.
pub fn render_heatmap_svg(heatmap: &CkaHeatmap) -> String {
    let (rows, cols) = heatmap.shape();
    let width = MARGIN + cols * CELL + 8;
    let height = MARGIN + rows * CELL + 8;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="14">CKA, m = {}</text>"#,
        heatmap.samples
    );
    for (j, label) in heatmap.col_labels.iter().enumerate() {
        let x = MARGIN + j * CELL + CELL / 2;
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">B {label}</text>"#, MARGIN - 8);
    }
    for (i, (label, row)) in heatmap.row_labels.iter().zip(&heatmap.values).enumerate() {
        let y = MARGIN + i * CELL;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">A {label}</text>"#,
            MARGIN - 6,
            y + CELL / 2 + 4
        );
        for (j, v) in row.iter().enumerate() {
            let x = MARGIN + j * CELL;
            let (fill, text, ink) = match v.value() {
                Some(v) => {
                    let (r, g, b) = ramp(v);
                    (format!("rgb({r},{g},{b})"), format!("{v:.2}"), if v > 0.55 { "white" } else { "black" })
                }
                None => ("rgb(190,190,190)".to_string(), "n/a".to_string(), "black"),
            };
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="white"/><text x="{}" y="{}" text-anchor="middle" fill="{ink}">{text}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 4
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn save_heatmap_svg(heatmap: &CkaHeatmap, path: &Path) -> Result<()> {
    std::fs::write(path, render_heatmap_svg(heatmap)).map_err(|e| Error::io(path, e))
}

//! `trace.csv`: one row per outer iteration.
//!
//! Columns are `iteration, lr, l_dd, nce_1..nce_K, weighted_nce, total,
//! bound_1..bound_K`. Floats are written in shortest round-trip form, so a
//! reread trace reproduces the logged values exactly.

use std::path::Path;

use super::LossBreakdown;
use crate::{Error, Result};

pub fn trace_header(layers: usize) -> Vec<String> {
    let mut h = vec!["iteration".to_string(), "lr".into(), "l_dd".into()];
    h.extend((1..=layers).map(|k| format!("nce_{k}")));
    h.push("weighted_nce".into());
    h.push("total".into());
    h.extend((1..=layers).map(|k| format!("bound_{k}")));
    h
}

pub fn write_trace<W: std::io::Write>(trace: &[LossBreakdown], out: W) -> Result<()> {
    let layers = trace.first().map_or(0, |b| b.nce.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(layers))?;
    for b in trace {
        let mut row = vec![b.iteration.to_string(), b.lr.to_string(), b.l_dd.to_string()];
        row.extend(b.nce.iter().map(f64::to_string));
        row.push(b.weighted_nce.to_string());
        row.push(b.total.to_string());
        row.extend(b.bounds.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing trace: {e}")))
}

pub fn save_trace(trace: &[LossBreakdown], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace(trace, std::io::BufWriter::new(file))
}

pub fn load_trace(path: &Path) -> Result<Vec<LossBreakdown>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let layers = header.iter().filter(|h| h.starts_with("nce_")).count();
    if header.len() != 5 + 2 * layers || header.iter().collect::<Vec<_>>() != trace_header(layers) {
        return Err(Error::format(path, "unexpected trace header"));
    }
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let num = |i: usize| -> Result<f64> {
            record[i]
                .parse()
                .map_err(|_| Error::format(path, format!("bad number {:?} at line {}, column {}", &record[i], line + 2, i + 1)))
        };
        let iteration = record[0]
            .parse()
            .map_err(|_| Error::format(path, format!("bad iteration at line {}", line + 2)))?;
        out.push(LossBreakdown {
            iteration,
            lr: num(1)?,
            l_dd: num(2)?,
            nce: (3..3 + layers).map(num).collect::<Result<_>>()?,
            weighted_nce: num(3 + layers)?,
            total: num(4 + layers)?,
            bounds: (5 + layers..5 + 2 * layers).map(num).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let trace = vec![LossBreakdown {
            iteration: 3,
            lr: 0.1,
            l_dd: 0.1 + 0.2,
            nce: vec![1.0 / 3.0, 2.5e-9],
            weighted_nce: 0.7,
            total: 1.234_567_890_123_456_7,
            bounds: vec![-0.5, 0.25],
        }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        save_trace(&trace, &p).unwrap();
        assert_eq!(load_trace(&p).unwrap(), trace);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("iteration,lr,l_dd,nce_1,nce_2,weighted_nce,total,bound_1,bound_2\n"));
    }
}

//! Joining two curve files on loss and summarizing their differences.

use std::io::Read;

use thiserror::Error;

use crate::output::HEADER;

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("{file}: {source}")]
    Csv { file: String, source: csv::Error },
    #[error("{file}: header does not start with `{}`", HEADER.join(","))]
    Header { file: String },
    #[error("{file}: row {row}: {message}")]
    Row { file: String, row: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub loss_db: f64,
    pub key_rate: f64,
}

pub fn read_curve<R: Read>(input: R, file: &str) -> Result<Vec<Sample>, CompareError> {
    let csv_err = |source| CompareError::Csv { file: file.to_string(), source };
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.len() < HEADER.len() || header.iter().zip(HEADER).any(|(a, b)| a != b) {
        return Err(CompareError::Header { file: file.to_string() });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = |k: usize| -> Result<f64, CompareError> {
            rec[k].parse().map_err(|_| CompareError::Row {
                file: file.to_string(),
                row: i + 2,
                message: format!("`{}` is not a number in column {}", &rec[k], HEADER[k]),
            })
        };
        out.push(Sample { loss_db: field(0)?, key_rate: field(1)? });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinedRow {
    pub loss_db: f64,
    pub rate_a: f64,
    pub rate_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<JoinedRow>,
    pub cutoff_a: Option<f64>,
    pub cutoff_b: Option<f64>,
    /// Losses at which the higher curve changes, with the curve that is higher from there on.
    pub crossovers: Vec<(f64, Side)>,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

impl Comparison {
    pub fn cutoff_diff(&self) -> Option<f64> {
        Some(self.cutoff_b? - self.cutoff_a?)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn cutoff(s: &[Sample]) -> Option<f64> {
    s.iter().filter(|x| x.key_rate > 0.0).map(|x| x.loss_db).reduce(f64::max)
}

const LOSS_MATCH: f64 = 1e-9;

pub fn compare(a: &[Sample], b: &[Sample]) -> Comparison {
    let mut rows: Vec<JoinedRow> = a
        .iter()
        .filter_map(|x| {
            b.iter()
                .find(|y| (y.loss_db - x.loss_db).abs() <= LOSS_MATCH)
                .map(|y| JoinedRow { loss_db: x.loss_db, rate_a: x.key_rate, rate_b: y.key_rate })
        })
        .collect();
    rows.sort_by(|x, y| x.loss_db.total_cmp(&y.loss_db));
    let mut crossovers = Vec::new();
    let mut leader: Option<Side> = None;
    for r in &rows {
        let now = if r.rate_a > r.rate_b {
            Some(Side::A)
        } else if r.rate_b > r.rate_a {
            Some(Side::B)
        } else {
            None
        };
        if let (Some(prev), Some(cur)) = (leader, now) {
            if prev != cur {
                crossovers.push((r.loss_db, cur));
            }
        }
        leader = now.or(leader);
    }
    let max_abs_diff = rows.iter().map(|r| (r.rate_a - r.rate_b).abs()).fold(0.0, f64::max);
    Comparison { rows, cutoff_a: cutoff(a), cutoff_b: cutoff(b), crossovers, max_abs_diff }
}

pub fn joined_csv(c: &Comparison) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["loss_db", "key_rate_a", "key_rate_b", "diff"]).expect("writing to memory");
    for r in &c.rows {
        w.write_record([
            format!("{}", r.loss_db),
            format!("{:e}", r.rate_a),
            format!("{:e}", r.rate_b),
            format!("{:e}", r.rate_a - r.rate_b),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

pub fn summary(c: &Comparison) -> String {
    let show = |x: Option<f64>| x.map_or("none".to_string(), |v| format!("{v} dB"));
    let mut s = format!(
        "overlapping loss values: {}\ncutoff a: {}\ncutoff b: {}\ncutoff difference (b - a): {}\nlargest rate difference: {:e}\n",
        c.rows.len(),
        show(c.cutoff_a),
        show(c.cutoff_b),
        show(c.cutoff_diff()),
        c.max_abs_diff,
    );
    if c.crossovers.is_empty() {
        s.push_str("crossover: none\n");
    }
    for (loss, side) in &c.crossovers {
        let name = if *side == Side::A { "a" } else { "b" };
        s.push_str(&format!("crossover: {name} is higher from {loss} dB\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(pairs: &[(f64, f64)]) -> Vec<Sample> {
        pairs.iter().map(|&(loss_db, key_rate)| Sample { loss_db, key_rate }).collect()
    }

    #[test]
    fn identical_curves_have_no_differences() {
        let a = curve(&[(0.0, 1e-8), (10.0, 1e-9), (20.0, 0.0)]);
        let c = compare(&a, &a);
        assert_eq!(c.rows.len(), 3);
        assert_eq!(c.cutoff_diff(), Some(0.0));
        assert_eq!(c.max_abs_diff, 0.0);
        assert!(c.crossovers.is_empty());
    }

    #[test]
    fn crossover_and_cutoffs() {
        let a = curve(&[(0.0, 1e-6), (10.0, 1e-8), (20.0, 0.0), (30.0, 0.0)]);
        let b = curve(&[(0.0, 1e-8), (10.0, 1e-9), (20.0, 1e-10), (30.0, 1e-12)]);
        let c = compare(&a, &b);
        assert_eq!(c.cutoff_a, Some(10.0));
        assert_eq!(c.cutoff_b, Some(30.0));
        assert_eq!(c.cutoff_diff(), Some(20.0));
        assert_eq!(c.crossovers, vec![(20.0, Side::B)]);
    }

    #[test]
    fn disjoint_ranges_do_not_join() {
        let c = compare(&curve(&[(0.0, 1.0)]), &curve(&[(5.0, 1.0)]));
        assert!(c.is_empty());
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "loss,key_rate\n0,1\n";
        assert!(matches!(read_curve(text.as_bytes(), "x"), Err(CompareError::Header { .. })));
    }
}

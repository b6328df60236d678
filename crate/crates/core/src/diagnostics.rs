//! Cross-lingual consistency diagnostics: parallel-score regression, Kendall
//! τ-b matrices and margin-stratified accuracy tables.

use std::cmp::Ordering;
use std::io::Write;

use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::raters::PairJudgment;
use crate::scorer::{evaluate_accuracy, ScorerState};

/// Margins reported by [`margin_accuracy_report`].
pub const REPORT_MARGINS: [f64; 2] = [0.5, 0.8];

/// Integer pair counts behind τ-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub n_pairs: u64,
    /// Pairs tied in x (including those also tied in y).
    pub ties_x: u64,
    /// Pairs tied in y (including those also tied in x).
    pub ties_y: u64,
    pub ties_xy: u64,
    pub discordant: u64,
}

impl PairCounts {
    pub fn concordant_minus_discordant(&self) -> i64 {
        self.n_pairs as i64 - self.ties_x as i64 - self.ties_y as i64 + self.ties_xy as i64 - 2 * self.discordant as i64
    }

    /// τ-b, or `None` when either sequence is constant.
    pub fn tau_b(&self) -> Option<f64> {
        let dx = (self.n_pairs - self.ties_x) as f64;
        let dy = (self.n_pairs - self.ties_y) as f64;
        if dx == 0.0 || dy == 0.0 {
            return None;
        }
        Some((self.concordant_minus_discordant() as f64 / (dx * dy).sqrt()).clamp(-1.0, 1.0))
    }
}

fn tie_pairs<T>(sorted: &[T], eq: impl Fn(&T, &T) -> bool) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `ys` ascending and returns the number of strict inversions.
fn merge_count(ys: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = ys.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut ys[..mid], &mut buf[..mid]) + merge_count(&mut ys[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if ys[i].total_cmp(&ys[j]) != Ordering::Greater {
            buf[k] = ys[i];
            i += 1;
        } else {
            buf[k] = ys[j];
            swaps += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&ys[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&ys[j..n]);
    ys.copy_from_slice(&buf[..n]);
    swaps
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::validation(format!("sequence lengths differ: {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::validation("kendall tau needs at least two observations"));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::validation("kendall tau input contains NaN"));
    }
    Ok(())
}

/// Concordance counts in O(n log n): sort by (x, y), count ties, then count
/// inversions of y with a merge sort.
pub fn pair_counts(xs: &[f64], ys: &[f64]) -> Result<PairCounts> {
    check_pair(xs, ys)?;
    let n = xs.len() as u64;
    let mut pts: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let ties_x = tie_pairs(&pts, |a, b| a.0 == b.0);
    let ties_xy = tie_pairs(&pts, |a, b| a.0 == b.0 && a.1 == b.1);
    let mut y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; y.len()];
    let discordant = merge_count(&mut y, &mut buf);
    let ties_y = tie_pairs(&y, |a, b| a == b);
    Ok(PairCounts {
        n_pairs: n * (n - 1) / 2,
        ties_x,
        ties_y,
        ties_xy,
        discordant,
    })
}

/// Kendall τ-b of two equally long sequences.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64> {
    pair_counts(xs, ys)?
        .tau_b()
        .ok_or_else(|| Error::validation("kendall tau is undefined for a constant sequence"))
}

/// Least-squares fit of `y` on `x` plus the identity-line discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    /// Mean of `(y - x)^2`: distance from perfect agreement, not the fit residual.
    pub mse: f64,
}

pub fn parallel_regression(points: &[(f64, f64)]) -> Result<Regression> {
    if points.len() < 2 {
        return Err(Error::validation("parallel regression needs at least two points"));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::validation("parallel regression input contains non-finite scores"));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::validation("parallel regression is degenerate: all x scores are equal"));
    }
    let slope = sxy / sxx;
    let mse = points.iter().map(|(x, y)| (y - x) * (y - x)).sum::<f64>() / n;
    Ok(Regression {
        slope,
        intercept: mean_y - slope * mean_x,
        mse,
    })
}

/// Scores of parallel documents in two languages and their agreement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParallelEval {
    pub labels: [String; 2],
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub mse: f64,
}

impl ParallelEval {
    pub fn new(lang_x: impl Into<String>, lang_y: impl Into<String>, points: Vec<(f64, f64)>) -> Result<Self> {
        let fit = parallel_regression(&points)?;
        Ok(ParallelEval {
            labels: [lang_x.into(), lang_y.into()],
            points,
            slope: fit.slope,
            intercept: fit.intercept,
            mse: fit.mse,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// Pairwise τ-b between labelled, document-aligned sequences, in the given label order.
pub fn tau_matrix(sequences: &[(String, Vec<f64>)]) -> Result<TauMatrix> {
    if sequences.len() < 2 {
        return Err(Error::validation("tau matrix needs at least two sequences"));
    }
    let k = sequences.len();
    let mut values = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let (li, si) = &sequences[i];
            let (lj, sj) = &sequences[j];
            if si.len() != sj.len() {
                return Err(Error::validation(format!(
                    "sequences `{li}` ({}) and `{lj}` ({}) are not aligned",
                    si.len(),
                    sj.len()
                )));
            }
            let t = kendall_tau(si, sj).map_err(|e| Error::validation(format!("`{li}` vs `{lj}`: {e}")))?;
            values[i][j] = t;
            values[j][i] = t;
        }
    }
    Ok(TauMatrix {
        labels: sequences.iter().map(|(l, _)| l.clone()).collect(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub split: String,
    pub margin: f64,
    pub accuracy: Option<f64>,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyTable {
    pub labels: Vec<String>,
    pub table: Vec<AccuracyRow>,
}

/// Held-in and held-out accuracy at margins 0.5 and 0.8.
pub fn margin_accuracy_report(
    state: &ScorerState,
    held_in: &[PairJudgment],
    held_out: &[PairJudgment],
    corpus: &Corpus,
) -> Result<AccuracyTable> {
    let mut table = Vec::with_capacity(4);
    for (split, judgments) in [("held_in", held_in), ("held_out", held_out)] {
        for r in evaluate_accuracy(state, judgments, corpus, &REPORT_MARGINS)? {
            table.push(AccuracyRow {
                split: split.to_owned(),
                margin: r.margin,
                accuracy: r.accuracy,
                pairs: r.pairs,
            });
        }
    }
    Ok(AccuracyTable {
        labels: vec!["held_in".into(), "held_out".into()],
        table,
    })
}

/// A machine-readable diagnostics document.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    ParallelRegression(ParallelEval),
    TauMatrix(TauMatrix),
    MarginAccuracy(AccuracyTable),
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// Flat CSV for plotting tools.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        match self {
            Report::ParallelRegression(p) => {
                w.write_record(&p.labels)?;
                for (x, y) in &p.points {
                    w.write_record([x.to_string(), y.to_string()])?;
                }
            }
            Report::TauMatrix(t) => {
                let header: Vec<&str> = std::iter::once("label").chain(t.labels.iter().map(String::as_str)).collect();
                w.write_record(&header)?;
                for (label, row) in t.labels.iter().zip(&t.values) {
                    let rec: Vec<String> = std::iter::once(label.clone()).chain(row.iter().map(f64::to_string)).collect();
                    w.write_record(&rec)?;
                }
            }
            Report::MarginAccuracy(a) => {
                w.write_record(["split", "margin", "accuracy", "pairs"])?;
                for r in &a.table {
                    let acc = r.accuracy.map(|v| v.to_string()).unwrap_or_default();
                    w.write_record([r.split.clone(), r.margin.to_string(), acc, r.pairs.to_string()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::Csv(e.into()))
    }
}

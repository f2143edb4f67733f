//! Accuracy matrix and the continual-learning summary metrics.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// `acc(k, j)` is the accuracy on task `k`'s test set after learning task
/// `j` (both 1-based); `j = 0` holds the single-task baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub tasks: usize,
    /// `tasks` rows of `tasks + 1` columns.
    pub acc: Vec<Vec<Option<f64>>>,
}

impl AccuracyMatrix {
    pub fn new(tasks: usize) -> Self {
        AccuracyMatrix {
            tasks,
            acc: vec![vec![None; tasks + 1]; tasks],
        }
    }

    /// Full matrix from dense rows (`rows[k-1][j]`).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let tasks = rows.len();
        AccuracyMatrix {
            tasks,
            acc: rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect(),
        }
    }

    pub fn get(&self, k: usize, j: usize) -> Option<f64> {
        self.acc.get(k.checked_sub(1)?)?.get(j).copied().flatten()
    }

    pub fn set(&mut self, k: usize, j: usize, v: f64) {
        assert!(
            (1..=self.tasks).contains(&k) && j <= self.tasks,
            "acc({k}, {j}) out of range"
        );
        self.acc[k - 1][j] = Some(v);
    }

    fn need(&self, k: usize, j: usize) -> Result<f64, HarnessError> {
        self.get(k, j)
            .ok_or(HarnessError::IncompleteMatrix { task: k, after: j })
    }

    /// Whether every cell needed by [`compute_metrics`] is present.
    pub fn is_complete(&self) -> bool {
        (1..=self.tasks).all(|k| self.get(k, 0).is_some() && (k..=self.tasks).all(|j| self.get(k, j).is_some()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub aa: f64,
    /// Absent for single-task streams.
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
}

/// Average accuracy after the last task, backward transfer and forward
/// transfer:
///
/// - `AA  = 1/K * sum_k acc(k, K)`
/// - `BWT = 1/(K-1) * sum_{k<K} (acc(k, K) - acc(k, k))`
/// - `FWT = 1/(K-1) * sum_{k>=2} (acc(k, k) - acc(k, 0))`
pub fn compute_metrics(m: &AccuracyMatrix) -> Result<Metrics, HarnessError> {
    let k = m.tasks;
    if k == 0 {
        return Err(HarnessError::IncompleteMatrix { task: 0, after: 0 });
    }
    let mut sum = 0.0;
    for t in 1..=k {
        sum += m.need(t, k)?;
    }
    let aa = sum / k as f64;
    if k == 1 {
        return Ok(Metrics {
            aa,
            bwt: None,
            fwt: None,
        });
    }
    let mut b = 0.0;
    for t in 1..k {
        b += m.need(t, k)? - m.need(t, t)?;
    }
    let mut f = 0.0;
    for t in 2..=k {
        f += m.need(t, t)? - m.need(t, 0)?;
    }
    let d = (k - 1) as f64;
    Ok(Metrics {
        aa,
        bwt: Some(b / d),
        fwt: Some(f / d),
    })
}

/// Percent with one decimal, or `-` when absent.
pub fn pct(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.1}", x * 100.0),
        None => "-".into(),
    }
}

/// Plain-text report: the three metrics followed by the matrix.
pub fn render_text(run_id: &str, names: &[String], m: &AccuracyMatrix, metrics: &Metrics) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "run {run_id}");
    let _ = writeln!(out, "AA  {}", pct(Some(metrics.aa)));
    let _ = writeln!(out, "BWT {}", pct(metrics.bwt));
    let _ = writeln!(out, "FWT {}", pct(metrics.fwt));
    let _ = writeln!(out);
    let width = names.iter().map(String::len).max().unwrap_or(4).max(4);
    let mut header = format!("{:width$}", "task");
    for j in 0..=m.tasks {
        let _ = write!(header, " {:>6}", format!("j={j}"));
    }
    let _ = writeln!(out, "{header}");
    for k in 1..=m.tasks {
        let name = names.get(k - 1).cloned().unwrap_or_else(|| format!("task{k}"));
        let mut line = format!("{name:width$}");
        for j in 0..=m.tasks {
            let _ = write!(line, " {:>6}", pct(m.get(k, j)));
        }
        let _ = writeln!(out, "{line}");
    }
    out
}

/// CSV export of the matrix (fractions, empty cells for absent values).
pub fn render_csv(names: &[String], m: &AccuracyMatrix) -> String {
    let mut out = String::from("task");
    for j in 0..=m.tasks {
        let _ = write!(out, ",j{j}");
    }
    out.push('\n');
    for k in 1..=m.tasks {
        out.push_str(&names.get(k - 1).cloned().unwrap_or_else(|| format!("task{k}")));
        for j in 0..=m.tasks {
            out.push(',');
            if let Some(v) = m.get(k, j) {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}

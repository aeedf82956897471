use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "scheme,realization,frame,round,model,accuracy,best_accuracy,obj_p3,h_term,gap_bound,elapsed_ms";

/// One model's test accuracy after one communication round.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub scheme: String,
    pub realization: usize,
    pub frame: usize,
    /// 0-based round whose aggregation produced this model.
    pub round: usize,
    /// 1-based model index.
    pub model: usize,
    pub accuracy: f64,
    pub best_accuracy: f64,
    pub obj_p3: Option<f64>,
    pub h_term: Option<f64>,
    pub gap_bound: Option<f64>,
    pub elapsed_ms: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsRecord {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.scheme,
            self.realization,
            self.frame,
            self.round,
            self.model,
            self.accuracy,
            self.best_accuracy,
            opt(self.obj_p3),
            opt(self.h_term),
            opt(self.gap_bound),
            opt(self.elapsed_ms)
        )
    }
}

pub fn records_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

/// Parse a metrics CSV produced by [`records_to_csv`].
pub fn parse_records_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        other => {
            return Err(Error::Config(format!(
                "unexpected metrics header {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end().split(',').collect();
        let bad = |what: &str| Error::Config(format!("metrics line {}: bad {what}", lineno + 2));
        if f.len() != 11 {
            return Err(bad("column count"));
        }
        let int = |i: usize, what: &str| f[i].parse::<usize>().map_err(|_| bad(what));
        let num = |i: usize, what: &str| f[i].parse::<f64>().map_err(|_| bad(what));
        let maybe = |i: usize, what: &str| -> Result<Option<f64>> {
            if f[i].is_empty() {
                Ok(None)
            } else {
                num(i, what).map(Some)
            }
        };
        out.push(MetricsRecord {
            scheme: f[0].to_string(),
            realization: int(1, "realization")?,
            frame: int(2, "frame")?,
            round: int(3, "round")?,
            model: int(4, "model")?,
            accuracy: num(5, "accuracy")?,
            best_accuracy: num(6, "best_accuracy")?,
            obj_p3: maybe(7, "obj_p3")?,
            h_term: maybe(8, "h_term")?,
            gap_bound: maybe(9, "gap_bound")?,
            elapsed_ms: maybe(10, "elapsed_ms")?,
        });
    }
    Ok(out)
}

/// Mean best-so-far accuracy with a 90% normal-approximation confidence
/// interval across realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: String,
    pub round: usize,
    pub model: usize,
    pub realizations: usize,
    pub mean_best_accuracy: f64,
    /// `1.645 s / sqrt(n)` with `s` the sample standard deviation; zero when
    /// only one realization exists.
    pub ci90_half_width: f64,
    pub single_realization: bool,
}

pub const Z_90: f64 = 1.645;

pub fn aggregate_metrics(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.scheme.clone(), r.round, r.model))
            .or_default()
            .push(r.best_accuracy);
    }
    groups
        .into_iter()
        .map(|((scheme, round, model), xs)| {
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let half = if n > 1 {
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                Z_90 * var.sqrt() / (n as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                scheme,
                round,
                model,
                realizations: n,
                mean_best_accuracy: mean,
                ci90_half_width: half,
                single_realization: n == 1,
            }
        })
        .collect()
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("scheme,round,model,realizations,mean_best_accuracy,ci90_half_width,single_realization\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.scheme, r.round, r.model, r.realizations, r.mean_best_accuracy, r.ci90_half_width, r.single_realization
        );
    }
    out
}

/// Mean over models of the final-round mean best accuracy, per scheme.
pub fn final_means(rows: &[SummaryRow]) -> BTreeMap<String, f64> {
    let mut last: BTreeMap<String, usize> = BTreeMap::new();
    for r in rows {
        let e = last.entry(r.scheme.clone()).or_insert(0);
        *e = (*e).max(r.round);
    }
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| last[&r.scheme] == r.round) {
        let e = acc.entry(r.scheme.clone()).or_insert((0.0, 0));
        e.0 += r.mean_best_accuracy;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

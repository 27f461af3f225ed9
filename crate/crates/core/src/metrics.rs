//! Confusion matrices, F1 scores, bootstrap confidence intervals and
//! confused-pair ranking.
//!
//! Micro-F1 and per-class F1 are computed straight from pooled integer
//! counts (`2·TP / (2·TP + FP + FN)`), so for single-label predictions over
//! the full class set micro-F1 equals accuracy bit for bit — no intermediate
//! rounding can split them.

use crate::error::{Error, Result};
use crate::nncore::Rng;
use crate::par;

/// Square grid of counts, `counts[true][pred]`, over a fixed class order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_indices(truths: &[usize], preds: &[usize], classes: &[String]) -> Result<Self> {
        if truths.len() != preds.len() {
            return Err(Error::invalid(format!(
                "length mismatch: {} truths vs {} predictions",
                truths.len(),
                preds.len()
            )));
        }
        let k = classes.len();
        let mut counts = vec![vec![0usize; k]; k];
        for (&t, &p) in truths.iter().zip(preds) {
            if t >= k || p >= k {
                return Err(Error::invalid(format!(
                    "class index out of range: true {t}, pred {p}, {k} classes"
                )));
            }
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix {
            classes: classes.to_vec(),
            counts,
        })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|r| r.iter().sum::<usize>()).sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Row sum: number of examples whose true class is `i`.
    pub fn support(&self, i: usize) -> usize {
        self.counts[i].iter().sum()
    }

    /// Column sum: number of predictions of class `i`.
    pub fn predicted(&self, i: usize) -> usize {
        self.counts.iter().map(|r| r[i]).sum()
    }

    /// CSV with a `true\pred` corner cell and class codes as headers.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for c in &self.classes {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            s.push_str(&self.classes[i]);
            for v in row {
                s.push(',');
                s.push_str(&v.to_string());
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::invalid("confusion CSV is empty"))?;
        let classes: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
        if classes.is_empty() {
            return Err(Error::invalid("confusion CSV row 1: no class columns"));
        }
        let k = classes.len();
        let mut counts = Vec::with_capacity(k);
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let _code = fields.next();
            let row: Vec<usize> = fields
                .map(|f| {
                    f.trim().parse::<usize>().map_err(|_| {
                        Error::invalid(format!(
                            "confusion CSV row {}: bad count `{f}`",
                            lineno + 1
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != k {
                return Err(Error::invalid(format!(
                    "confusion CSV row {}: expected {k} counts, got {}",
                    lineno + 1,
                    row.len()
                )));
            }
            counts.push(row);
        }
        if counts.len() != k {
            return Err(Error::invalid(format!(
                "confusion CSV: expected {k} rows, got {}",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    /// Aligned text grid, true classes down the side, predictions across.
    pub fn to_text_grid(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.len())
            .chain(
                self.counts
                    .iter()
                    .flatten()
                    .map(|v| v.to_string().len()),
            )
            .max()
            .unwrap_or(1)
            .max(4);
        let mut s = format!("{:>w$} |", "t\\p", w = width);
        for c in &self.classes {
            s.push_str(&format!(" {c:>w$}", w = width));
        }
        s.push('\n');
        s.push_str(&"-".repeat(width + 2 + (width + 1) * self.classes.len()));
        s.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            s.push_str(&format!("{:>w$} |", self.classes[i], w = width));
            for v in row {
                s.push_str(&format!(" {v:>w$}", w = width));
            }
            s.push('\n');
        }
        s
    }
}

/// Per-class precision/recall/F1 plus support.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub code: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub n_resamples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub f1_macro: f64,
    pub f1_micro: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    pub ci_f1_macro: Option<ConfidenceInterval>,
    pub ci_f1_micro: Option<ConfidenceInterval>,
    pub ci_accuracy: Option<ConfidenceInterval>,
    /// Method strings and warnings, recorded for honest comparison.
    pub notes: Vec<String>,
}

impl MetricsReport {
    pub fn metric(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::F1Macro => self.f1_macro,
            MetricKind::F1Micro => self.f1_micro,
            MetricKind::Accuracy => self.accuracy,
        }
    }

    /// Structured plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("f1_macro = {}\n", self.f1_macro));
        s.push_str(&format!("f1_micro = {}\n", self.f1_micro));
        s.push_str(&format!("accuracy = {}\n", self.accuracy));
        for (name, ci) in [
            ("f1_macro", &self.ci_f1_macro),
            ("f1_micro", &self.ci_f1_micro),
            ("accuracy", &self.ci_accuracy),
        ] {
            if let Some(ci) = ci {
                s.push_str(&format!(
                    "ci_{name} = ({}, {}) level={} n={}\n",
                    ci.lower, ci.upper, ci.level, ci.n_resamples
                ));
            }
        }
        s.push_str("per_class: code precision recall f1 support\n");
        for c in &self.per_class {
            s.push_str(&format!(
                "  {} {} {} {} {}\n",
                c.code, c.precision, c.recall, c.f1, c.support
            ));
        }
        for n in &self.notes {
            s.push_str(&format!("note: {n}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    F1Macro,
    F1Micro,
    Accuracy,
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricKind::F1Macro => write!(f, "f1_macro"),
            MetricKind::F1Micro => write!(f, "f1_micro"),
            MetricKind::Accuracy => write!(f, "accuracy"),
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1_macro" => Ok(MetricKind::F1Macro),
            "f1_micro" => Ok(MetricKind::F1Micro),
            "accuracy" => Ok(MetricKind::Accuracy),
            other => Err(Error::invalid(format!("unknown metric `{other}`"))),
        }
    }
}

/// Integer-count F1: `2·TP / (2·TP + FP + FN)`, with 0/0 defined as 0.
fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        0.0
    } else {
        (2 * tp) as f64 / den as f64
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision/recall/F1, macro/micro F1 and accuracy from a
/// confusion matrix. Macro averages over *all* declared classes, including
/// classes absent from the sample (their F1 counts as 0), so cross-fold
/// macro values stay comparable.
pub fn f1_scores(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix has no examples"));
    }
    let k = cm.classes.len();
    let mut per_class = Vec::with_capacity(k);
    let mut f1_sum = 0.0;
    for i in 0..k {
        let tp = cm.counts[i][i];
        let support = cm.support(i);
        let predicted = cm.predicted(i);
        let f1 = f1_from_counts(tp, predicted - tp, support - tp);
        f1_sum += f1;
        per_class.push(ClassScores {
            code: cm.classes[i].clone(),
            precision: ratio(tp, predicted),
            recall: ratio(tp, support),
            f1,
            support,
        });
    }
    let trace = cm.trace();
    Ok(MetricsReport {
        f1_macro: f1_sum / k as f64,
        f1_micro: f1_from_counts(trace, total - trace, total - trace),
        accuracy: ratio(trace, total),
        per_class,
        ci_f1_macro: None,
        ci_f1_micro: None,
        ci_accuracy: None,
        notes: vec!["f1 0/0 convention: 0".to_string()],
    })
}

fn metric_of(truths: &[usize], preds: &[usize], classes: &[String], kind: MetricKind) -> f64 {
    let cm = ConfusionMatrix::from_indices(truths, preds, classes)
        .expect("resampled indices stay in range");
    let r = f1_scores(&cm).expect("non-empty resample");
    r.metric(kind)
}

/// Linear-interpolation empirical quantile over a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap over (truth, prediction) pairs.
///
/// Each resample draws `len` pairs with replacement using its own derived
/// stream (`seed + resample_index`), so the result is independent of
/// evaluation order and identical in parallel and sequential builds.
pub fn bootstrap_ci(
    truths: &[usize],
    preds: &[usize],
    classes: &[String],
    kind: MetricKind,
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(ConfidenceInterval, Vec<String>)> {
    let n = truths.len();
    if n < 2 {
        return Err(Error::invalid("bootstrap needs at least 2 examples"));
    }
    if truths.len() != preds.len() {
        return Err(Error::invalid("bootstrap: truths/preds length mismatch"));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::invalid(format!("bootstrap level {level} not in (0, 1)")));
    }
    let mut notes = Vec::new();
    if n_resamples < 100 {
        notes.push(format!(
            "bootstrap n_resamples={n_resamples} is below 100; interval is unreliable"
        ));
    }
    let mut values = par::map_indexed(n_resamples, n_resamples * n, |i| {
        let mut rng = Rng::derive(seed, i as u64);
        let mut rt = Vec::with_capacity(n);
        let mut rp = Vec::with_capacity(n);
        for _ in 0..n {
            let j = rng.next_below(n as u64) as usize;
            rt.push(truths[j]);
            rp.push(preds[j]);
        }
        metric_of(&rt, &rp, classes, kind)
    });
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((
        ConfidenceInterval {
            lower: quantile(&values, alpha),
            upper: quantile(&values, 1.0 - alpha),
            level,
            n_resamples,
        },
        notes,
    ))
}

/// One unordered pair of classes and its confusion statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusedPair {
    pub code_a: String,
    pub code_b: String,
    /// `cm[a][b] + cm[b][a]`.
    pub mass: usize,
    /// Mass normalized by the pair's combined support.
    pub rate: f64,
}

/// Rank unordered class pairs by symmetric confusion mass normalized by the
/// pair's total support, descending; ties fall back to code order.
pub fn top_confused_pairs(cm: &ConfusionMatrix, n: usize) -> Vec<ConfusedPair> {
    let k = cm.classes.len();
    let mut pairs = Vec::new();
    for a in 0..k {
        for b in (a + 1)..k {
            let mass = cm.counts[a][b] + cm.counts[b][a];
            let support = cm.support(a) + cm.support(b);
            pairs.push(ConfusedPair {
                code_a: cm.classes[a].clone(),
                code_b: cm.classes[b].clone(),
                mass,
                rate: ratio(mass, support),
            });
        }
    }
    pairs.sort_by(|x, y| {
        y.rate
            .total_cmp(&x.rate)
            .then_with(|| x.code_a.cmp(&y.code_a))
            .then_with(|| x.code_b.cmp(&y.code_b))
    });
    pairs.truncate(n);
    pairs
}

//! Evaluation suite for sentence-pair relatedness regression.
//!
//! Computes the five reported metrics (MSE, MAE, R², Pearson, Spearman)
//! plus a five-bin discretization of the [0,1] score range and the
//! confusion matrix over those bins.
//!
//! All operations are pure functions over a [`PredictionSet`]; correlation
//! metrics on constant input return a typed error rather than `NaN` so
//! pipelines fail loudly.

use crate::error::{Error, Result};

/// Number of discretization bins over the score range.
pub const NUM_BINS: usize = 5;

/// Lower edges of the five score bins. Bins are half-open except the last:
/// `[0,0.2) [0.2,0.4) [0.4,0.6) [0.6,0.8) [0.8,1.0]`.
pub const BIN_EDGES: [f64; NUM_BINS] = [0.0, 0.2, 0.4, 0.6, 0.8];

/// Paired label/prediction sequences, validated on construction.
///
/// Labels must lie in `[0,1]`; predictions are unrestricted reals (the
/// model head is unbounded before clamping). Both must be finite and of
/// equal nonzero length.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    labels: Vec<f64>,
    predictions: Vec<f64>,
}

impl PredictionSet {
    pub fn new(labels: Vec<f64>, predictions: Vec<f64>) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::Metric {
                metric: "prediction-set",
                message: format!(
                    "length mismatch: {} labels vs {} predictions",
                    labels.len(),
                    predictions.len()
                ),
            });
        }
        if labels.is_empty() {
            return Err(Error::Metric {
                metric: "prediction-set",
                message: "empty input".into(),
            });
        }
        for (i, &y) in labels.iter().enumerate() {
            if !y.is_finite() || !(0.0..=1.0).contains(&y) {
                return Err(Error::Metric {
                    metric: "prediction-set",
                    message: format!("label {y} at index {i} outside [0,1]"),
                });
            }
        }
        if let Some((i, &p)) = predictions.iter().enumerate().find(|(_, p)| !p.is_finite()) {
            return Err(Error::Metric {
                metric: "prediction-set",
                message: format!("non-finite prediction {p} at index {i}"),
            });
        }
        Ok(Self {
            labels,
            predictions,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }
}

/// Full evaluation result: the five metrics plus the binned confusion
/// matrix (rows = true bin, columns = predicted bin).
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub n: usize,
    pub mse: f64,
    pub mae: f64,
    pub r_squared: f64,
    pub pearson: f64,
    pub spearman: f64,
    pub confusion: [[u64; NUM_BINS]; NUM_BINS],
}

/// Mean squared error, `(1/N) Σ (y_i − ŷ_i)²`.
pub fn mse(ps: &PredictionSet) -> Result<f64> {
    let n = ps.len() as f64;
    let sum: f64 = ps
        .labels
        .iter()
        .zip(&ps.predictions)
        .map(|(&y, &p)| (y - p) * (y - p))
        .sum();
    Ok(sum / n)
}

/// Mean absolute error, `(1/N) Σ |y_i − ŷ_i|`.
pub fn mae(ps: &PredictionSet) -> Result<f64> {
    let n = ps.len() as f64;
    let sum: f64 = ps
        .labels
        .iter()
        .zip(&ps.predictions)
        .map(|(&y, &p)| (y - p).abs())
        .sum();
    Ok(sum / n)
}

/// Coefficient of determination, `1 − SS_res / SS_tot`.
///
/// Undefined for constant labels (`SS_tot = 0`); that case is an error.
pub fn r_squared(ps: &PredictionSet) -> Result<f64> {
    require_len(ps, 2, "r_squared")?;
    let n = ps.len() as f64;
    let mean_y: f64 = ps.labels.iter().sum::<f64>() / n;
    let ss_tot: f64 = ps.labels.iter().map(|&y| (y - mean_y) * (y - mean_y)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Metric {
            metric: "r_squared",
            message: "labels are constant; R² is undefined".into(),
        });
    }
    let ss_res: f64 = ps
        .labels
        .iter()
        .zip(&ps.predictions)
        .map(|(&y, &p)| (y - p) * (y - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Pearson product-moment correlation between labels and predictions.
pub fn pearson(ps: &PredictionSet) -> Result<f64> {
    require_len(ps, 2, "pearson")?;
    pearson_raw(&ps.labels, &ps.predictions, "pearson")
}

/// Spearman rank correlation: Pearson applied to fractional
/// (average-tie) ranks of each sequence.
pub fn spearman(ps: &PredictionSet) -> Result<f64> {
    require_len(ps, 2, "spearman")?;
    let ry = fractional_ranks(&ps.labels);
    let rp = fractional_ranks(&ps.predictions);
    pearson_raw(&ry, &rp, "spearman")
}

/// Maps a score in `[0,1]` to its bin index `0..=4`.
///
/// Lower edges are inclusive, upper edges exclusive, except the last bin
/// which also contains 1.0.
pub fn discretize(score: f64) -> Result<usize> {
    if !score.is_finite() || !(0.0..=1.0).contains(&score) {
        return Err(Error::Metric {
            metric: "discretize",
            message: format!("score {score} outside [0,1]"),
        });
    }
    // Explicit edge comparisons, not division: 0.6/0.2 rounds below 3.0
    // in f64 and would land 0.6 in the wrong bin.
    let bin = if score < 0.2 {
        0
    } else if score < 0.4 {
        1
    } else if score < 0.6 {
        2
    } else if score < 0.8 {
        3
    } else {
        4
    };
    Ok(bin)
}

/// Counts (true bin, predicted bin) co-occurrences into a 5×5 matrix.
///
/// Predictions must already be clamped to `[0,1]`; out-of-range values are
/// rejected by [`discretize`].
pub fn confusion_matrix(ps: &PredictionSet) -> Result<[[u64; NUM_BINS]; NUM_BINS]> {
    let mut matrix = [[0u64; NUM_BINS]; NUM_BINS];
    for (&y, &p) in ps.labels.iter().zip(&ps.predictions) {
        let row = discretize(y)?;
        let col = discretize(p)?;
        matrix[row][col] += 1;
    }
    Ok(matrix)
}

/// Computes the whole metric suite in one pass.
///
/// Predictions are clamped to `[0,1]` for the confusion matrix only; the
/// numeric metrics see the raw values. Errors from individual metrics
/// propagate with the metric name attached.
pub fn evaluate(ps: &PredictionSet) -> Result<EvaluationReport> {
    let clamped: Vec<f64> = ps.predictions.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    let clamped_ps = PredictionSet::new(ps.labels.clone(), clamped)?;
    Ok(EvaluationReport {
        n: ps.len(),
        mse: mse(ps)?,
        mae: mae(ps)?,
        r_squared: r_squared(ps)?,
        pearson: pearson(ps)?,
        spearman: spearman(ps)?,
        confusion: confusion_matrix(&clamped_ps)?,
    })
}

impl EvaluationReport {
    /// Serializes to the structured text format consumed by the report
    /// command: `key = value` lines followed by the row-major confusion
    /// matrix. Deterministic: floats use the shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("n = {}\n", self.n));
        out.push_str(&format!("mse = {}\n", self.mse));
        out.push_str(&format!("mae = {}\n", self.mae));
        out.push_str(&format!("r_squared = {}\n", self.r_squared));
        out.push_str(&format!("pearson = {}\n", self.pearson));
        out.push_str(&format!("spearman = {}\n", self.spearman));
        out.push_str("confusion_matrix =\n");
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses the format produced by [`EvaluationReport::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Report(format!("malformed report: {msg}"));
        let mut n = None;
        let mut vals = std::collections::HashMap::new();
        let mut lines = text.lines();
        for line in lines.by_ref() {
            let line = line.trim();
            if line == "confusion_matrix =" {
                break;
            }
            let (key, value) = line.split_once(" = ").ok_or_else(|| bad(line))?;
            if key == "n" {
                n = Some(value.parse::<usize>().map_err(|e| bad(&e.to_string()))?);
            } else {
                let v: f64 = value.parse().map_err(|_| bad(value))?;
                vals.insert(key.to_string(), v);
            }
        }
        let mut confusion = [[0u64; NUM_BINS]; NUM_BINS];
        for row in confusion.iter_mut() {
            let line = lines.next().ok_or_else(|| bad("missing confusion row"))?;
            let cells: Vec<&str> = line.split_whitespace().collect();
            if cells.len() != NUM_BINS {
                return Err(bad("confusion row width"));
            }
            for (slot, cell) in row.iter_mut().zip(cells) {
                *slot = cell.parse().map_err(|_| bad(cell))?;
            }
        }
        let get = |k: &str| {
            vals.get(k)
                .copied()
                .ok_or_else(|| bad(&format!("missing key {k}")))
        };
        Ok(Self {
            n: n.ok_or_else(|| bad("missing key n"))?,
            mse: get("mse")?,
            mae: get("mae")?,
            r_squared: get("r_squared")?,
            pearson: get("pearson")?,
            spearman: get("spearman")?,
            confusion,
        })
    }
}

/// Fractional (average-tie) ranks, 1-based. Tied values receive the mean
/// of the rank positions they occupy.
pub(crate) fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Values are validated finite upstream, so total ordering is safe.
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) hold equal values; mean 1-based rank.
        let avg = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}

fn require_len(ps: &PredictionSet, min: usize, metric: &'static str) -> Result<()> {
    if ps.len() < min {
        return Err(Error::Metric {
            metric,
            message: format!("need at least {min} pairs, got {}", ps.len()),
        });
    }
    Ok(())
}

fn pearson_raw(x: &[f64], y: &[f64], metric: &'static str) -> Result<f64> {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Metric {
            metric,
            message: "constant sequence; correlation is undefined".into(),
        });
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

//! Metric suites: multiclass confusion measures, the binary lane-change
//! measures with critical false negatives, TTLC confidence curves, LK
//! holdout recall, and the cross-dataset protocol.

use serde::Serialize;
use thiserror::Error;

use crate::classifier::ClassProbs;
use crate::ensemble::{Ensemble, EnsembleError};
use crate::features::{balance_test_set, FeatureError, Observation};
use crate::types::ManeuverLabel;

/// TTLC threshold below which a missed lane change counts as critical.
pub const CRITICAL_TTLC: f64 = 1.5;
/// Default TTLC curve bin width in seconds.
pub const TTLC_BIN_WIDTH: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction/label/ttlc lengths differ")]
    LengthMismatch,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// 3x3 confusion counts; rows are true classes, columns predictions, both
/// in (LCL, LK, LCR) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts(pub [[u64; 3]; 3]);

pub fn confusion(preds: &[ManeuverLabel], labels: &[ManeuverLabel]) -> Result<ConfusionCounts, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch);
    }
    let mut m = [[0u64; 3]; 3];
    for (p, l) in preds.iter().zip(labels) {
        m[l.index()][p.index()] += 1;
    }
    Ok(ConfusionCounts(m))
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.0[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        self.0.iter().map(|row| row[class]).sum()
    }
}

/// Per-class precision/recall plus accuracy. Empty denominators yield
/// `None` rather than a silent zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MulticlassMetrics {
    pub precision: [Option<f64>; 3],
    pub recall: [Option<f64>; 3],
    pub accuracy: Option<f64>,
}

pub fn multiclass_metrics(m: &ConfusionCounts) -> MulticlassMetrics {
    let ratio = |num: u64, den: u64| if den == 0 { None } else { Some(num as f64 / den as f64) };
    let mut precision = [None; 3];
    let mut recall = [None; 3];
    for c in 0..3 {
        precision[c] = ratio(m.0[c][c], m.col_sum(c));
        recall[c] = ratio(m.0[c][c], m.row_sum(c));
    }
    let trace: u64 = (0..3).map(|c| m.0[c][c]).sum();
    MulticlassMetrics { precision, recall, accuracy: ratio(trace, m.total()) }
}

/// Binary lane-change measures. A true positive is a lane change predicted
/// with its true direction; a false positive is an LK instance predicted as
/// a lane change; a critical false negative is a lane change within the
/// TTLC threshold predicted as anything but its true class. Recall uses
/// critical FNs only. Direction-confused lane changes are never FPs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryLcMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    pub critical_fn: u64,
    pub ttlc_threshold: f64,
}

pub fn binary_lc_metrics(
    preds: &[ManeuverLabel],
    labels: &[ManeuverLabel],
    ttlc: &[f64],
    tau: f64,
) -> Result<BinaryLcMetrics, EvalError> {
    if preds.len() != labels.len() || preds.len() != ttlc.len() {
        return Err(EvalError::LengthMismatch);
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut critical_fn = 0u64;
    let mut any_lc = false;
    for ((p, l), t) in preds.iter().zip(labels).zip(ttlc) {
        match l {
            ManeuverLabel::Lk => {
                if p.is_lane_change() {
                    fp += 1;
                }
            }
            _ => {
                any_lc = true;
                if p == l {
                    tp += 1;
                } else if *t <= tau {
                    critical_fn += 1;
                }
            }
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { None } else { Some(num as f64 / den as f64) };
    let precision = ratio(tp, tp + fp);
    let recall = if any_lc { ratio(tp, tp + critical_fn) } else { None };
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(BinaryLcMetrics { precision, recall, f1, tp, fp, critical_fn, ttlc_threshold: tau })
}

/// One TTLC confidence bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtlcBin {
    pub ttlc_center: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: u64,
}

/// Plot-ready confidence curve for one lane-change class, bins ordered by
/// decreasing TTLC; empty bins are omitted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtlcCurve {
    pub label: ManeuverLabel,
    pub bins: Vec<TtlcBin>,
}

/// Bin lane-change observations by TTLC and summarize the predicted
/// probability of the true class per bin. `items` carries
/// (true label, ttlc, predicted probabilities); LK items are ignored.
pub fn ttlc_curve(items: &[(ManeuverLabel, f64, ClassProbs)], bin_width: f64) -> Vec<TtlcCurve> {
    [ManeuverLabel::Lcl, ManeuverLabel::Lcr]
        .into_iter()
        .map(|label| TtlcCurve { label, bins: curve_bins(items, Some(label), bin_width) })
        .collect()
}

/// Same binning pooled over both lane-change classes.
pub fn ttlc_curve_pooled(items: &[(ManeuverLabel, f64, ClassProbs)], bin_width: f64) -> Vec<TtlcBin> {
    curve_bins(items, None, bin_width)
}

fn curve_bins(
    items: &[(ManeuverLabel, f64, ClassProbs)],
    filter: Option<ManeuverLabel>,
    bin_width: f64,
) -> Vec<TtlcBin> {
    let mut by_bin: std::collections::BTreeMap<usize, Vec<f64>> = std::collections::BTreeMap::new();
    for (label, ttlc, probs) in items {
        if !label.is_lane_change() || filter.is_some_and(|f| f != *label) {
            continue;
        }
        // Bin (k*w, (k+1)*w] gets index k.
        let k = (ttlc / bin_width).ceil() as usize;
        let k = k.saturating_sub(1);
        by_bin.entry(k).or_default().push(probs.0[label.index()]);
    }
    by_bin
        .into_iter()
        .rev()
        .map(|(k, vals)| {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            TtlcBin { ttlc_center: (k as f64 + 0.5) * bin_width, mean, std: var.sqrt(), n: vals.len() as u64 }
        })
        .collect()
}

/// Fraction of the held-out LK observations predicted as LK.
pub fn lk_holdout_recall(preds: &[ManeuverLabel]) -> Option<f64> {
    if preds.is_empty() {
        return None;
    }
    Some(preds.iter().filter(|p| **p == ManeuverLabel::Lk).count() as f64 / preds.len() as f64)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rank = |vals: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..vals.len()).collect();
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        let mut ranks = vec![0.0; vals.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && vals[idx[j + 1]] == vals[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                ranks[k] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx.sqrt() * vy.sqrt()))
}

/// Everything the evaluation protocol reports for one model on one test set.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub n_balanced: usize,
    pub n_lk_holdout: usize,
    pub confusion: ConfusionCounts,
    pub multiclass: MulticlassMetrics,
    pub binary: BinaryLcMetrics,
    pub lk_holdout_recall: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

impl EvalReport {
    /// Delimited-text rendering of both metric suites.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("balanced_test_size\t{}\n", self.n_balanced));
        s.push_str(&format!("lk_holdout_size\t{}\n\n", self.n_lk_holdout));
        s.push_str("confusion (rows true, cols predicted)\n\tLCL\tLK\tLCR\n");
        for (i, label) in ManeuverLabel::ALL.iter().enumerate() {
            s.push_str(&format!(
                "{label}\t{}\t{}\t{}\n",
                self.confusion.0[i][0], self.confusion.0[i][1], self.confusion.0[i][2]
            ));
        }
        s.push_str("\nmulticlass\nclass\tprecision\trecall\n");
        for (i, label) in ManeuverLabel::ALL.iter().enumerate() {
            s.push_str(&format!(
                "{label}\t{}\t{}\n",
                opt(self.multiclass.precision[i]),
                opt(self.multiclass.recall[i])
            ));
        }
        s.push_str(&format!("accuracy\t{}\n", opt(self.multiclass.accuracy)));
        s.push_str(&format!(
            "\nbinary_lc (tau={}s)\nprecision\t{}\nrecall\t{}\nf1\t{}\ntp\t{}\nfp\t{}\ncritical_fn\t{}\n",
            self.binary.ttlc_threshold,
            opt(self.binary.precision),
            opt(self.binary.recall),
            opt(self.binary.f1),
            self.binary.tp,
            self.binary.fp,
            self.binary.critical_fn
        ));
        s.push_str(&format!("\nlk_holdout_recall\t{}\n", opt(self.lk_holdout_recall)));
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

/// Balance the test set, run the model, and compute both metric suites plus
/// the LK holdout recall.
pub fn evaluate_model(model: &Ensemble, test: Vec<Observation>, seed: u64) -> Result<EvalReport, EvalError> {
    let balanced = balance_test_set(test, seed)?;
    let preds = model.predict_batch(&balanced.balanced)?;
    let pred_labels: Vec<ManeuverLabel> = preds.iter().map(|(l, _)| *l).collect();
    let labels: Vec<ManeuverLabel> = balanced.balanced.iter().map(|o| o.label).collect();
    let ttlc: Vec<f64> = balanced.balanced.iter().map(|o| o.ttlc).collect();

    let confusion = confusion(&pred_labels, &labels)?;
    let multiclass = multiclass_metrics(&confusion);
    let binary = binary_lc_metrics(&pred_labels, &labels, &ttlc, CRITICAL_TTLC)?;
    let holdout_preds: Vec<ManeuverLabel> = if balanced.lk_holdout.is_empty() {
        Vec::new()
    } else {
        model.predict_batch(&balanced.lk_holdout)?.into_iter().map(|(l, _)| l).collect()
    };

    Ok(EvalReport {
        n_balanced: balanced.balanced.len(),
        n_lk_holdout: balanced.lk_holdout.len(),
        confusion,
        multiclass,
        binary,
        lk_holdout_recall: lk_holdout_recall(&holdout_preds),
    })
}

/// Cross-dataset protocol: a model trained on one data set is evaluated on
/// a class-balanced test set from another, scaled with the training-set
/// scaler that travels with the model.
pub fn cross_dataset_eval(
    model: &Ensemble,
    d2_test: Vec<Observation>,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if model.scaler.is_none() {
        return Err(EvalError::Ensemble(EnsembleError::MissingScaler));
    }
    evaluate_model(model, d2_test, seed)
}

/// Run the model over lane-change observations and produce the per-class
/// TTLC confidence curves.
pub fn ttlc_curve_from_model(
    model: &Ensemble,
    observations: &[Observation],
    bin_width: f64,
) -> Result<Vec<TtlcCurve>, EvalError> {
    let lc: Vec<Observation> =
        observations.iter().filter(|o| o.label.is_lane_change()).cloned().collect();
    let preds = model.predict_batch(&lc)?;
    let items: Vec<(ManeuverLabel, f64, ClassProbs)> =
        lc.iter().zip(&preds).map(|(o, (_, p))| (o.label, o.ttlc, *p)).collect();
    Ok(ttlc_curve(&items, bin_width))
}

/// Curves rendered as delimited text with columns
/// (class, ttlc_center, mean, std, n).
pub fn curves_to_text(curves: &[TtlcCurve]) -> String {
    let mut s = String::from("class\tttlc_center\tmean\tstd\tn\n");
    for curve in curves {
        for bin in &curve.bins {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                curve.label, bin.ttlc_center, bin.mean, bin.std, bin.n
            ));
        }
    }
    s
}

use serde::{Deserialize, Serialize};

use super::{mean, std_dev, EvaluationError};

/// Number of points on the shared x-grid used to pool folds.
pub const POOL_GRID: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Roc,
    WeightedRoc,
    ExpectedRoc,
    Pr,
    Calibration,
}

impl CurveKind {
    pub fn is_roc(self) -> bool {
        matches!(self, CurveKind::Roc | CurveKind::WeightedRoc | CurveKind::ExpectedRoc)
    }
}

/// One fold's curve. For ROC kinds `x` is FPR and `y` TPR; for PR `x` is
/// recall and `y` precision. `summary` is the AUC or average precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub summary: Option<f64>,
}

impl Curve {
    fn missing() -> Self {
        Curve {
            x: Vec::new(),
            y: Vec::new(),
            thresholds: Vec::new(),
            summary: None,
        }
    }
}

/// Distinct-score groups in descending order with their positive and negative
/// mass.
fn grouped_masses(scores: &[f64], pos: &[f64], neg: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut groups: Vec<(f64, f64, f64)> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if g.0 == scores[i] => {
                g.1 += pos[i];
                g.2 += neg[i];
            }
            _ => groups.push((scores[i], pos[i], neg[i])),
        }
    }
    groups
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (xs[1] - xs[0]) * (ys[0] + ys[1]) / 2.0)
        .sum()
}

/// ROC from per-sample positive/negative masses; labels may be fractional.
fn roc_from_masses(scores: &[f64], pos: &[f64], neg: &[f64]) -> Curve {
    let total_pos: f64 = pos.iter().sum();
    let total_neg: f64 = neg.iter().sum();
    if !(total_pos > 0.0 && total_neg > 0.0) {
        return Curve::missing();
    }
    let mut x = vec![0.0];
    let mut y = vec![0.0];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0.0, 0.0);
    for (s, p, n) in grouped_masses(scores, pos, neg) {
        tp += p;
        fp += n;
        x.push(fp / total_neg);
        y.push(tp / total_pos);
        thresholds.push(s);
    }
    // Guard against rounding in the running sums.
    *x.last_mut().unwrap() = 1.0;
    *y.last_mut().unwrap() = 1.0;
    let auc = trapezoid(&x, &y);
    Curve {
        x,
        y,
        thresholds,
        summary: Some(auc),
    }
}

fn check_inputs(scores: &[f64], labels: &[f64], weights: Option<&[f64]>) -> Result<(), EvaluationError> {
    if scores.len() != labels.len() || weights.is_some_and(|w| w.len() != scores.len()) {
        return Err(EvaluationError::Input("scores, labels and weights differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvaluationError::Input("NaN score".into()));
    }
    if labels.iter().any(|&l| l != 0.0 && l != 1.0) {
        return Err(EvaluationError::Input("labels must be 0 or 1".into()));
    }
    if weights.is_some_and(|w| w.iter().any(|&v| !(v >= 0.0) || !v.is_finite())) {
        return Err(EvaluationError::Input("weights must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Threshold sweep over distinct scores, highest first. With weights each
/// sample contributes its weight to the TP or FP mass. Single-class input
/// gives an empty curve with no AUC.
pub fn roc_curve(scores: &[f64], labels: &[f64], weights: Option<&[f64]>) -> Result<Curve, EvaluationError> {
    check_inputs(scores, labels, weights)?;
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let pos: Vec<f64> = (0..labels.len()).map(|i| w(i) * labels[i]).collect();
    let neg: Vec<f64> = (0..labels.len()).map(|i| w(i) * (1.0 - labels[i])).collect();
    Ok(roc_from_masses(scores, &pos, &neg))
}

/// The ROC expected if each propensity were the sample's true treatment
/// probability: a sample adds `p` to the TP mass and `1 - p` to the FP mass.
pub fn expected_roc(propensities: &[f64]) -> Result<Curve, EvaluationError> {
    if propensities.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(EvaluationError::Input("propensities must lie in [0, 1]".into()));
    }
    let neg: Vec<f64> = propensities.iter().map(|p| 1.0 - p).collect();
    Ok(roc_from_masses(propensities, propensities, &neg))
}

/// Precision against recall at each distinct-score threshold. The summary is
/// the average precision `Σ (R_n - R_{n-1}) P_n`.
pub fn pr_curve(scores: &[f64], labels: &[f64]) -> Result<Curve, EvaluationError> {
    check_inputs(scores, labels, None)?;
    let total_pos: f64 = labels.iter().sum();
    if total_pos == 0.0 {
        return Ok(Curve::missing());
    }
    let neg: Vec<f64> = labels.iter().map(|l| 1.0 - l).collect();
    let mut x = vec![0.0];
    let mut y = vec![1.0];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut ap = 0.0;
    for (s, p, n) in grouped_masses(scores, labels, &neg) {
        tp += p;
        fp += n;
        let recall = tp / total_pos;
        let precision = tp / (tp + fp);
        ap += (recall - x.last().unwrap()) * precision;
        x.push(recall);
        y.push(precision);
        thresholds.push(s);
    }
    Ok(Curve {
        x,
        y,
        thresholds,
        summary: Some(ap),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledCurve {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Per-fold curves with their pooled mean on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub kind: CurveKind,
    pub folds: Vec<Curve>,
    pub pooled: PooledCurve,
    pub summary_mean: Option<f64>,
    pub summary_std: Option<f64>,
}

/// `y` at `g` on a curve with non-decreasing `x`. Where several points share an
/// `x` the largest `y` is used, so vertical ROC steps take their upper end.
fn interpolate(x: &[f64], y: &[f64], g: f64) -> f64 {
    let upper = x.partition_point(|&v| v <= g);
    if upper == 0 {
        return y[0];
    }
    let last = upper - 1;
    if x[last] == g || upper == x.len() {
        let first = x.partition_point(|&v| v < x[last]);
        return y[first..=last].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    let t = (g - x[last]) / (x[upper] - x[last]);
    y[last] + t * (y[upper] - y[last])
}

/// Interpolates every fold onto a `POOL_GRID`-point grid over `[0, 1]` and
/// takes the pointwise mean and standard deviation. Folds with no curve
/// (single-class data) are left out of the pooled curve.
pub fn pool_folds(kind: CurveKind, curves: Vec<Curve>) -> CurveSeries {
    let grid: Vec<f64> = (0..POOL_GRID).map(|i| i as f64 / (POOL_GRID - 1) as f64).collect();
    let usable: Vec<&Curve> = curves.iter().filter(|c| !c.x.is_empty()).collect();
    if usable.len() < 2 {
        log::warn!("pooling {} usable fold curve(s); spread reported as 0", usable.len());
    }
    let per_fold: Vec<Vec<f64>> = usable
        .iter()
        .map(|c| {
            let mut ys: Vec<f64> = grid.iter().map(|&g| interpolate(&c.x, &c.y, g)).collect();
            if kind.is_roc() {
                ys[0] = 0.0;
                ys[POOL_GRID - 1] = 1.0;
            }
            ys
        })
        .collect();
    let (mean_curve, std_curve) = if per_fold.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        (0..POOL_GRID)
            .map(|j| {
                let col: Vec<f64> = per_fold.iter().map(|ys| ys[j]).collect();
                (mean(&col), std_dev(&col))
            })
            .unzip()
    };
    let summaries: Vec<f64> = curves.iter().filter_map(|c| c.summary).collect();
    let (summary_mean, summary_std) = if summaries.is_empty() {
        (None, None)
    } else {
        (Some(mean(&summaries)), Some(std_dev(&summaries)))
    };
    CurveSeries {
        kind,
        folds: curves,
        pooled: PooledCurve {
            grid: if per_fold.is_empty() { Vec::new() } else { grid },
            mean: mean_curve,
            std: std_curve,
        },
        summary_mean,
        summary_std,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Weighted Mann-Whitney statistic with ties counted as one half.
    fn concordance(s: &[f64], y: &[f64], w: &[f64]) -> f64 {
        let (mut num, mut pos, mut neg) = (0.0, 0.0, 0.0);
        for i in 0..s.len() {
            if y[i] == 1.0 {
                pos += w[i];
            } else {
                neg += w[i];
            }
        }
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1.0 && y[j] == 0.0 {
                    let c = if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                    num += w[i] * w[j] * c;
                }
            }
        }
        num / (pos * neg)
    }

    #[test]
    fn perfect_separation() {
        let c = roc_curve(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0], None).unwrap();
        assert_eq!(c.summary, Some(1.0));
        let pr = pr_curve(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap();
        let full = pr.x.iter().position(|&r| r == 1.0).unwrap();
        assert!(pr.y[..=full].iter().all(|&p| p == 1.0));
        assert_eq!(pr.summary, Some(1.0));
    }

    #[test]
    fn single_class_is_missing() {
        let c = roc_curve(&[0.1, 0.2], &[1.0, 1.0], None).unwrap();
        assert_eq!(c.summary, None);
        assert!(pr_curve(&[0.1, 0.2], &[0.0, 0.0]).unwrap().summary.is_none());
    }

    #[test]
    fn all_positive_predictions_give_prevalence() {
        let labels: Vec<f64> = (0..10).map(|i| f64::from(i < 3)).collect();
        let pr = pr_curve(&[0.5; 10], &labels).unwrap();
        assert_eq!(pr.x.last(), Some(&1.0));
        assert!((pr.y.last().unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn auc_equals_concordance_with_ties_and_weights() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let n = rng.random_range(2..=200);
            let s: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..20u8)) / 20.0).collect();
            let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.4))).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
            if y.iter().all(|&v| v == y[0]) {
                continue;
            }
            let plain = roc_curve(&s, &y, None).unwrap().summary.unwrap();
            assert!((plain - concordance(&s, &y, &vec![1.0; n])).abs() < 1e-10);
            let weighted = roc_curve(&s, &y, Some(&w)).unwrap().summary.unwrap();
            assert!((weighted - concordance(&s, &y, &w)).abs() < 1e-10);
        }
    }

    #[test]
    fn expected_roc_equal_propensities_is_diagonal() {
        let c = expected_roc(&[0.5; 7]).unwrap();
        assert_eq!(c.x, vec![0.0, 1.0]);
        assert_eq!(c.y, vec![0.0, 1.0]);
        assert_eq!(c.summary, Some(0.5));
    }

    #[test]
    fn expected_roc_two_levels_matches_mass_sums() {
        let (n1, n2) = (30, 70);
        let mut p = vec![0.01; n1];
        p.extend(vec![0.99; n2]);
        let c = expected_roc(&p).unwrap();
        // Every ordered pair (i, j) contributes p_i (1 - p_j), ties at one half.
        let mut num = 0.0;
        for &a in &p {
            for &b in &p {
                let c = if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
                num += a * (1.0 - b) * c;
            }
        }
        let pos: f64 = p.iter().sum();
        let neg: f64 = p.iter().map(|v| 1.0 - v).sum();
        assert!((c.summary.unwrap() - num / (pos * neg)).abs() < 1e-12);
        assert!((c.y[1] - 0.99 * 70.0 / pos).abs() < 1e-12);
        assert!((c.x[1] - 0.01 * 70.0 / neg).abs() < 1e-12);
    }

    #[test]
    fn random_scores_average_precision_near_prevalence() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s: Vec<f64> = (0..2000).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..2000).map(|_| f64::from(rng.random_bool(0.1))).collect();
        let ap = pr_curve(&s, &y).unwrap().summary.unwrap();
        assert!((ap - 0.1).abs() < 0.05, "{ap}");
    }

    #[test]
    fn pooling_interpolates_and_pins() {
        let a = Curve { x: vec![0.0, 1.0], y: vec![0.0, 1.0], thresholds: vec![], summary: Some(0.5) };
        let b = Curve { x: vec![0.0, 0.5, 1.0], y: vec![0.0, 1.0, 1.0], thresholds: vec![], summary: Some(0.75) };
        let pooled = pool_folds(CurveKind::Roc, vec![a, b]);
        assert!((pooled.pooled.mean[25] - 0.375).abs() < 1e-12);
        assert_eq!(pooled.pooled.mean[0], 0.0);
        assert_eq!(pooled.pooled.mean[100], 1.0);
        assert_eq!(pooled.summary_mean, Some(0.625));
        assert_eq!(pooled.summary_std, Some(0.125));
    }

    #[test]
    fn vertical_steps_use_upper_end() {
        let c = Curve { x: vec![0.0, 0.0, 0.5, 0.5, 1.0], y: vec![0.0, 0.4, 0.4, 0.9, 1.0], thresholds: vec![], summary: None };
        assert_eq!(interpolate(&c.x, &c.y, 0.5), 0.9);
        assert_eq!(interpolate(&c.x, &c.y, 0.25), 0.4);
        assert!((interpolate(&c.x, &c.y, 0.75) - 0.95).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn copies_pool_to_themselves(
            s in proptest::collection::vec(0u8..10, 4..50),
            y in proptest::collection::vec(0u8..2, 4..50),
            k in 2usize..6,
        ) {
            let n = s.len().min(y.len());
            let s: Vec<f64> = s[..n].iter().map(|&v| f64::from(v)).collect();
            let y: Vec<f64> = y[..n].iter().map(|&v| f64::from(v)).collect();
            prop_assume!(y.contains(&0.0) && y.contains(&1.0));
            let c = roc_curve(&s, &y, None).unwrap();
            prop_assert!(c.x.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(c.y.windows(2).all(|w| w[0] <= w[1]));
            let pooled = pool_folds(CurveKind::Roc, vec![c.clone(); k]);
            prop_assert!(pooled.pooled.std.iter().all(|&v| v == 0.0));
            let single = pool_folds(CurveKind::Roc, vec![c]);
            prop_assert_eq!(pooled.pooled.mean, single.pooled.mean);
        }
    }
}

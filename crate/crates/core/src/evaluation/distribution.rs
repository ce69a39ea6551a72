use serde::{Deserialize, Serialize};

use super::EvaluationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionMode {
    Histogram,
    /// Histogram densities with the treated arm negated for display.
    #[default]
    PdfReflected,
    Cdf,
}

/// A bin holding samples of one arm only, with at least `min_count` of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuspectBin {
    pub bin: usize,
    pub arm: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSeries {
    pub mode: DistributionMode,
    /// Shared by both arms; `bins + 1` entries.
    pub edges: Vec<f64>,
    /// `counts[arm][bin]`.
    pub counts: Vec<Vec<usize>>,
    /// `values[arm][bin]`: density, reflected density or cumulative fraction.
    pub values: Vec<Vec<f64>>,
    pub min_count: usize,
    pub suspects: Vec<SuspectBin>,
    #[serde(skip)]
    pub sample_bins: Vec<usize>,
    #[serde(skip)]
    pub sample_arms: Vec<usize>,
}

/// Shared-edge histograms of `scores` per arm. Edges span `[0, 1]` when every
/// score lies there, otherwise the data range.
pub fn propensity_distribution(
    scores: &[f64],
    treatment: &[usize],
    mode: DistributionMode,
    bins: usize,
    min_count: usize,
) -> Result<DistributionSeries, EvaluationError> {
    if scores.len() != treatment.len() {
        return Err(EvaluationError::Input("scores and treatment differ in length".into()));
    }
    if bins == 0 || scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
        return Err(EvaluationError::Input("need finite scores and at least one bin".into()));
    }
    if let Some(&a) = treatment.iter().find(|&&a| a > 1) {
        return Err(EvaluationError::Input(format!("binary treatment expected, found arm {a}")));
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if min >= 0.0 && max <= 1.0 {
        (0.0, 1.0)
    } else if min == max {
        (min - 0.5, max + 0.5)
    } else {
        (min, max)
    };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|b| if b == bins { hi } else { lo + b as f64 * width }).collect();
    let sample_bins: Vec<usize> = scores
        .iter()
        .map(|&s| (((s - lo) / width).floor().max(0.0) as usize).min(bins - 1))
        .collect();
    let mut counts = vec![vec![0usize; bins]; 2];
    for (&b, &a) in sample_bins.iter().zip(treatment) {
        counts[a][b] += 1;
    }
    let values = counts
        .iter()
        .enumerate()
        .map(|(arm, c)| {
            let total = c.iter().sum::<usize>().max(1) as f64;
            match mode {
                DistributionMode::Histogram | DistributionMode::PdfReflected => {
                    let sign = if mode == DistributionMode::PdfReflected && arm == 1 { -1.0 } else { 1.0 };
                    c.iter().map(|&k| sign * k as f64 / (total * width)).collect()
                }
                DistributionMode::Cdf => c
                    .iter()
                    .scan(0usize, |acc, &k| {
                        *acc += k;
                        Some(*acc as f64 / total)
                    })
                    .collect(),
            }
        })
        .collect();
    let suspects = (0..bins)
        .filter_map(|b| match (counts[0][b], counts[1][b]) {
            (0, k) if k >= min_count && k > 0 => Some(SuspectBin { bin: b, arm: 1, count: k }),
            (k, 0) if k >= min_count && k > 0 => Some(SuspectBin { bin: b, arm: 0, count: k }),
            _ => None,
        })
        .collect();
    Ok(DistributionSeries {
        mode,
        edges,
        counts,
        values,
        min_count,
        suspects,
        sample_bins,
        sample_arms: treatment.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    #[serde(skip)]
    pub mask: Vec<bool>,
    pub flagged: usize,
    /// Fraction of each arm that falls in a suspect bin.
    pub flagged_fraction: Vec<f64>,
}

/// Marks every sample that falls in a suspect (single-arm) bin.
pub fn positivity_flag(series: &DistributionSeries) -> PositivityReport {
    let suspect: Vec<bool> = (0..series.edges.len() - 1)
        .map(|b| series.suspects.iter().any(|s| s.bin == b))
        .collect();
    let mask: Vec<bool> = series.sample_bins.iter().map(|&b| suspect[b]).collect();
    let mut flagged_arm = [0usize; 2];
    let mut arm_total = [0usize; 2];
    for (&m, &a) in mask.iter().zip(&series.sample_arms) {
        arm_total[a] += 1;
        flagged_arm[a] += usize::from(m);
    }
    PositivityReport {
        flagged: flagged_arm.iter().sum(),
        flagged_fraction: (0..2)
            .map(|a| if arm_total[a] == 0 { 0.0 } else { flagged_arm[a] as f64 / arm_total[a] as f64 })
            .collect(),
        mask,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_arms_have_no_suspects() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scores: Vec<f64> = (0..4000).map(|_| rng.random()).collect();
        let t: Vec<usize> = (0..4000).map(|i| i % 2).collect();
        let series = propensity_distribution(&scores, &t, DistributionMode::Histogram, 20, 10).unwrap();
        assert!(series.suspects.is_empty());
        assert!(positivity_flag(&series).mask.iter().all(|&m| !m));
        // Densities integrate to one.
        let width = series.edges[1] - series.edges[0];
        for arm in 0..2 {
            let area: f64 = series.values[arm].iter().map(|v| v * width).sum();
            assert!((area - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_subgroup_flags_top_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut scores: Vec<f64> = (0..2000).map(|_| rng.random_range(0.1..0.8)).collect();
        let mut t: Vec<usize> = (0..2000).map(|i| i % 2).collect();
        for _ in 0..100 {
            scores.push(1.0 - 1e-6);
            t.push(1);
        }
        let series = propensity_distribution(&scores, &t, DistributionMode::PdfReflected, 20, 10).unwrap();
        assert_eq!(series.suspects, vec![SuspectBin { bin: 19, arm: 1, count: 100 }]);
        assert!(series.values[1].iter().all(|&v| v <= 0.0));
        assert!(series.values[0].iter().all(|&v| v >= 0.0));
        let report = positivity_flag(&series);
        assert_eq!(report.flagged, 100);
        assert!(report.mask[2000..].iter().all(|&m| m));
        assert_eq!(report.flagged_fraction[0], 0.0);
    }

    #[test]
    fn identical_scores_one_shared_bin() {
        let series = propensity_distribution(&[0.42; 30], &[0, 1, 1].repeat(10), DistributionMode::Histogram, 20, 10).unwrap();
        let occupied: Vec<usize> = (0..20).filter(|&b| series.counts[0][b] + series.counts[1][b] > 0).collect();
        assert_eq!(occupied, vec![8]);
        assert!(series.suspects.is_empty());
    }

    #[test]
    fn min_count_above_occupancy_gives_empty_mask() {
        let series = propensity_distribution(&[0.05, 0.95, 0.96], &[0, 1, 1], DistributionMode::Histogram, 20, 10).unwrap();
        assert!(series.suspects.is_empty());
        assert_eq!(positivity_flag(&series).flagged, 0);
    }

    #[test]
    fn cdf_mode_ends_at_one() {
        let series = propensity_distribution(&[0.1, 0.2, 0.7, 0.9], &[0, 1, 0, 1], DistributionMode::Cdf, 10, 10).unwrap();
        for arm in 0..2 {
            assert_eq!(*series.values[arm].last().unwrap(), 1.0);
            assert!(series.values[arm].windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn out_of_unit_range_uses_data_range() {
        let series = propensity_distribution(&[1.0, 3.0, 5.0], &[0, 1, 0], DistributionMode::Histogram, 4, 1).unwrap();
        assert_eq!(series.edges, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(series.counts[0], vec![1, 0, 0, 1]);
    }
}

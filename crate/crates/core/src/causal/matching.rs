use std::collections::BTreeSet;

use super::{CausalError, PropensityScores, WeightKind, WeightVector};

/// Greedy 1:1 nearest-neighbour matching without replacement.
///
/// Treated samples are visited in descending propensity (ties by index); each
/// takes the closest unused control, preferring the lower index among equally
/// close ones. Pairs farther apart than `caliper` stay unmatched. Matched
/// samples get weight 1, everything else 0.
pub fn match_by_propensity(p: &PropensityScores, treatment: &[usize], caliper: f64) -> Result<WeightVector, CausalError> {
    if p.len() != treatment.len() {
        return Err(CausalError::Input(format!(
            "{} scores for {} treatment labels",
            p.len(),
            treatment.len()
        )));
    }
    if !(caliper >= 0.0) {
        return Err(CausalError::Input(format!("caliper must be >= 0, got {caliper}")));
    }
    if let Some(&a) = treatment.iter().find(|&&a| a > 1) {
        return Err(CausalError::Input(format!("matching needs a binary treatment, found arm {a}")));
    }
    let s = &p.scores;
    let mut treated: Vec<usize> = (0..s.len()).filter(|&i| treatment[i] == 1).collect();
    // Scores lie in (0, 1), so the bit pattern orders like the value.
    let mut controls: BTreeSet<(u64, usize)> = (0..s.len())
        .filter(|&i| treatment[i] == 0)
        .map(|i| (s[i].to_bits(), i))
        .collect();
    if treated.is_empty() || controls.is_empty() {
        return Err(CausalError::Positivity("matching needs samples in both arms".into()));
    }
    treated.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let mut weights = vec![0.0; s.len()];
    for t in treated {
        let key = s[t].to_bits();
        let below = controls.range(..(key, usize::MAX)).next_back().map(|&(b, _)| b);
        let above = controls.range((key, 0)..).next().map(|&(b, _)| b);
        let dist = |b: u64| (f64::from_bits(b) - s[t]).abs();
        let best = match (below, above) {
            (Some(lo), Some(hi)) => dist(lo).min(dist(hi)),
            (Some(v), None) | (None, Some(v)) => dist(v),
            (None, None) => break,
        };
        if best > caliper {
            continue;
        }
        let chosen = [below, above]
            .into_iter()
            .flatten()
            .filter(|&b| dist(b) == best)
            .filter_map(|b| controls.range((b, 0)..=(b, usize::MAX)).next().copied())
            .min_by_key(|&(_, i)| i)
            .expect("a nearest control exists");
        controls.remove(&chosen);
        weights[t] = 1.0;
        weights[chosen.1] = 1.0;
    }
    Ok(WeightVector {
        weights,
        kind: WeightKind::Matching,
        truncation: None,
        clipped: p.clipped,
        truncated: 0,
    })
}

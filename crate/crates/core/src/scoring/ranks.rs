//! Rank-based scoring: multi-class Brier (rank and item views), the ranked
//! probability score, and the top-k / bottom-k / storage-tradability
//! families.

use super::ScoringError;
use crate::domain::{PriceDay, ScenarioEnsemble};

/// Default class sizes for the top-k score families.
pub const DEFAULT_TOP_KS: [usize; 4] = [1, 2, 4, 8];

/// Within-day price ranks (1 = cheapest) per ensemble member, plus the
/// observed ranks. Exactly equal prices are ranked by hour index, first
/// occurrence cheapest.
#[derive(Debug, Clone, PartialEq)]
pub struct RankEnsemble {
    member_ranks: Vec<Vec<usize>>,
    observed: Vec<usize>,
}

/// 1-based ranks with ties resolved by position.
fn rank_vector(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0usize; n];
    for (pos, &idx) in order.iter().enumerate() {
        ranks[idx] = pos + 1;
    }
    ranks
}

impl RankEnsemble {
    pub fn from_forecast(
        forecast: &ScenarioEnsemble,
        day: &PriceDay,
    ) -> Result<Self, ScoringError> {
        if forecast.hours() != day.hours() {
            return Err(ScoringError::HourMismatch {
                forecast: forecast.hours(),
                observation: day.hours(),
            });
        }
        Ok(Self {
            member_ranks: forecast.paths().iter().map(|p| rank_vector(p)).collect(),
            observed: rank_vector(day.prices()),
        })
    }

    /// Build from precomputed rank permutations (1-based).
    pub fn new(member_ranks: Vec<Vec<usize>>, observed: Vec<usize>) -> Result<Self, ScoringError> {
        let k = observed.len();
        let is_permutation = |ranks: &[usize]| {
            let mut seen = vec![false; k];
            ranks.len() == k
                && ranks.iter().all(|&r| {
                    if r >= 1 && r <= k && !seen[r - 1] {
                        seen[r - 1] = true;
                        true
                    } else {
                        false
                    }
                })
        };
        if member_ranks.is_empty() {
            return Err(ScoringError::TooFewMembers { need: 1, got: 0 });
        }
        if !is_permutation(&observed) || !member_ranks.iter().all(|m| is_permutation(m)) {
            return Err(ScoringError::BadInput(
                "ranks must be permutations of 1..=hours".into(),
            ));
        }
        Ok(Self {
            member_ranks,
            observed,
        })
    }

    pub fn hours(&self) -> usize {
        self.observed.len()
    }

    pub fn members(&self) -> usize {
        self.member_ranks.len()
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn member_ranks(&self) -> &[Vec<usize>] {
        &self.member_ranks
    }
}

/// Brier scores over one class family (a set of ranks), in `[0, 2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopKScores {
    pub k: usize,
    /// Bottom-k ranks (cheapest hours).
    pub low: f64,
    /// Top-k ranks (most expensive hours).
    pub high: f64,
    /// Union of both.
    pub low_high: f64,
    /// Top-k credit restricted to hours preceded by all k bottom-k hours
    /// (the hours a storage asset could actually trade).
    pub bess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankScores {
    /// Rank view: for each rank class, did we point at the right hour?
    pub brier_per_rank: Vec<f64>,
    /// Item view: for each hour, did we predict its rank?
    pub brier_per_item: Vec<f64>,
    /// Multi-class Brier averaged over hours, bounded in [0, 2]; equals
    /// both the sum of the rank view and the sum of the item view.
    pub brier: f64,
    /// Ranked probability score via cumulative rank indicators, averaged
    /// over hours and thresholds.
    pub rps: f64,
    pub top_k: Vec<TopKScores>,
}

/// All rank-based scores of one day.
pub fn rank_scores(ranks: &RankEnsemble, ks: &[usize]) -> Result<RankScores, ScoringError> {
    let hours = ranks.hours();
    let members = ranks.members() as f64;
    for &k in ks {
        if k < 1 || 2 * k > hours {
            return Err(ScoringError::BadInput(format!(
                "top-k class size {k} invalid for {hours} hours"
            )));
        }
    }

    // Predicted probability that hour h carries rank r, and the observed
    // indicator.
    let mut pred = vec![vec![0.0f64; hours]; hours]; // [hour][rank-1]
    for member in ranks.member_ranks() {
        for (h, &r) in member.iter().enumerate() {
            pred[h][r - 1] += 1.0;
        }
    }
    for row in pred.iter_mut() {
        for v in row.iter_mut() {
            *v /= members;
        }
    }
    let mut obs = vec![vec![0.0f64; hours]; hours];
    for (h, &r) in ranks.observed().iter().enumerate() {
        obs[h][r - 1] = 1.0;
    }

    let k_classes = hours as f64;
    let mut brier_per_rank = vec![0.0; hours];
    let mut brier_per_item = vec![0.0; hours];
    for h in 0..hours {
        for r in 0..hours {
            let d = pred[h][r] - obs[h][r];
            let sq = d * d;
            brier_per_rank[r] += sq / k_classes;
            brier_per_item[h] += sq / k_classes;
        }
    }
    let brier: f64 = brier_per_rank.iter().sum();

    // RPS on cumulative rank indicators.
    let mut rps = 0.0;
    for h in 0..hours {
        let mut cum_pred = 0.0;
        let mut cum_obs = 0.0;
        for r in 0..hours {
            cum_pred += pred[h][r];
            cum_obs += obs[h][r];
            let d = cum_pred - cum_obs;
            rps += d * d;
        }
    }
    rps /= (hours * hours) as f64;

    let class_score = |r: usize, pred: &[Vec<f64>], obs: &[Vec<f64>]| -> f64 {
        (0..hours).map(|h| {
            let d = pred[h][r] - obs[h][r];
            d * d
        })
        .sum()
    };

    let mut top_k = Vec::with_capacity(ks.len());
    for &k in ks {
        let low: f64 =
            (0..k).map(|r| class_score(r, &pred, &obs)).sum::<f64>() / k as f64;
        let high: f64 = (hours - k..hours)
            .map(|r| class_score(r, &pred, &obs))
            .sum::<f64>()
            / k as f64;
        let low_high = 0.5 * (low + high);

        // Tradability-restricted indicators: an hour earns top-k credit
        // only when all k bottom-k hours lie strictly before it.
        let tradable = |ranks: &[usize], h: usize| {
            ranks[h] > hours - k && ranks[..h].iter().filter(|&&r| r <= k).count() >= k
        };
        let mut pred_b = vec![vec![0.0f64; hours]; hours];
        for member in ranks.member_ranks() {
            for h in 0..hours {
                if tradable(member, h) {
                    pred_b[h][member[h] - 1] += 1.0;
                }
            }
        }
        for row in pred_b.iter_mut() {
            for v in row.iter_mut() {
                *v /= members;
            }
        }
        let mut obs_b = vec![vec![0.0f64; hours]; hours];
        for h in 0..hours {
            if tradable(ranks.observed(), h) {
                obs_b[h][ranks.observed()[h] - 1] = 1.0;
            }
        }
        let bess: f64 = (hours - k..hours)
            .map(|r| class_score(r, &pred_b, &obs_b))
            .sum::<f64>()
            / k as f64;

        top_k.push(TopKScores {
            k,
            low,
            high,
            low_high,
            bess,
        });
    }

    Ok(RankScores {
        brier_per_rank,
        brier_per_item,
        brier,
        rps,
        top_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn perfect(hours: usize, members: usize) -> RankEnsemble {
        let ranks: Vec<usize> = (1..=hours).collect();
        RankEnsemble::new(vec![ranks.clone(); members], ranks).unwrap()
    }

    #[test]
    fn perfect_deterministic_forecast_scores_zero() {
        let ranks = perfect(8, 5);
        let scores = rank_scores(&ranks, &[1, 2, 4]).unwrap();
        assert_eq!(scores.brier, 0.0);
        assert_eq!(scores.rps, 0.0);
        for t in &scores.top_k {
            assert_eq!((t.low, t.high, t.low_high, t.bess), (0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn ranks_from_prices_break_ties_by_hour() {
        let day = crate::domain::PriceDay::new("d", vec![5.0, 1.0, 5.0, 0.0]).unwrap();
        let ens = crate::domain::ScenarioEnsemble::new("d", vec![vec![5.0, 1.0, 5.0, 0.0]])
            .unwrap();
        let ranks = RankEnsemble::from_forecast(&ens, &day).unwrap();
        // 0.0 -> rank 1, 1.0 -> rank 2, first 5.0 -> rank 3, second -> 4.
        assert_eq!(ranks.observed(), &[3, 2, 4, 1]);
    }

    #[test]
    fn adjacent_transposition_rps_by_hand() {
        // Observed 1,2,3; forecast deterministic 2,1,3.
        let ranks = RankEnsemble::new(vec![vec![2, 1, 3]], vec![1, 2, 3]).unwrap();
        let scores = rank_scores(&ranks, &[1]).unwrap();
        // Hour 0: cum pred (0,1,1), cum obs (1,1,1): contributes 1.
        // Hour 1: cum pred (1,1,1), cum obs (0,1,1): contributes 1.
        // Hour 2: identical. Total 2 / (3*3).
        assert!((scores.rps - 2.0 / 9.0).abs() < 1e-12);
        assert!(scores.rps > 0.0);
    }

    #[test]
    fn brier_views_are_transposed_sums() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let hours = 6;
        let random_perm = |rng: &mut rand_chacha::ChaCha12Rng| {
            let mut p: Vec<usize> = (1..=hours).collect();
            p.shuffle(rng);
            p
        };
        let members: Vec<Vec<usize>> = (0..20).map(|_| random_perm(&mut rng)).collect();
        let observed = random_perm(&mut rng);
        let ranks = RankEnsemble::new(members, observed).unwrap();
        let scores = rank_scores(&ranks, &[1, 2]).unwrap();
        let rank_sum: f64 = scores.brier_per_rank.iter().sum();
        let item_sum: f64 = scores.brier_per_item.iter().sum();
        assert!((rank_sum - item_sum).abs() < 1e-12);
        assert!((scores.brier - rank_sum).abs() < 1e-12);
        assert!(scores.brier >= 0.0 && scores.brier <= 2.0);
        for t in &scores.top_k {
            for v in [t.low, t.high, t.low_high, t.bess] {
                assert!((0.0..=2.0).contains(&v));
            }
        }
    }

    #[test]
    fn uniform_rank_ensemble_matches_closed_form() {
        // Under a uniform rank prediction the per-rank Brier expectation is
        // (1/K) * ((K-1)/K^2 + ((K-1)/K)^2) = (K-1)/K^2.
        let hours = 4;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let members: Vec<Vec<usize>> = (0..4000)
            .map(|_| {
                let mut p: Vec<usize> = (1..=hours).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        let observed = vec![2, 4, 1, 3];
        let ranks = RankEnsemble::new(members, observed).unwrap();
        let scores = rank_scores(&ranks, &[1]).unwrap();
        let expected = (hours as f64 - 1.0) / (hours as f64 * hours as f64);
        for (r, b) in scores.brier_per_rank.iter().enumerate() {
            assert!(
                (b - expected).abs() < 0.01,
                "rank {}: {} vs {}",
                r + 1,
                b,
                expected
            );
        }
    }

    #[test]
    fn bess_requires_bottom_k_before_top_k() {
        // Observed: cheapest hour AFTER the most expensive one, so the
        // expensive hour earns no tradability credit.
        // prices: h0 expensive (rank 3), h1 mid (2), h2 cheap (1).
        let observed = vec![3, 2, 1];
        // Forecast nails the ranks exactly.
        let ranks = RankEnsemble::new(vec![observed.clone()], observed).unwrap();
        let scores = rank_scores(&ranks, &[1]).unwrap();
        let t = &scores.top_k[0];
        // High-1 is perfect, and BESS-1 is also 0 because forecast and
        // observation agree that nothing is tradable.
        assert_eq!(t.high, 0.0);
        assert_eq!(t.bess, 0.0);

        // Forecast predicts cheap-then-expensive (tradable), observed is
        // expensive-then-cheap (not tradable): BESS-1 penalizes, High-1
        // does too (different hours), but BESS also counts the phantom
        // tradability.
        let ranks =
            RankEnsemble::new(vec![vec![1, 2, 3]], vec![3, 2, 1]).unwrap();
        let scores = rank_scores(&ranks, &[1]).unwrap();
        let t = &scores.top_k[0];
        // Forecast: h2 tradable top-1; observed: none tradable.
        assert!((t.bess - 1.0).abs() < 1e-12);
        assert!((t.high - 2.0).abs() < 1e-12);
    }
}

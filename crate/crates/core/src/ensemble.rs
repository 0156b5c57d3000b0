//! Multi-view voting over the benefit, flow and causal verdicts.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BiasClass, BiasVerdict, ScoreDetail, View};
use crate::seeding::keyed_rng;

pub const DEFAULT_WEIGHTS: [f64; 3] = [0.3, 0.2, 0.5];

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    PriorMajority,
    RandomMajority,
    Weighted,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::PriorMajority => "prior",
            Strategy::RandomMajority => "random",
            Strategy::Weighted => "weighted",
        })
    }
}

impl FromStr for Strategy {
    type Err = VoteError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prior" | "prior_majority" => Ok(Strategy::PriorMajority),
            "random" | "random_majority" => Ok(Strategy::RandomMajority),
            "weighted" => Ok(Strategy::Weighted),
            other => Err(VoteError::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum VoteError {
    #[error("malformed vote config: {0}")]
    Config(String),
    #[error("ballot {index} comes from the {found} view, expected {expected}")]
    BallotOrder { index: usize, expected: View, found: View },
    #[error("no verdicts to count")]
    Empty,
}

/// Voting strategy and its parameters. `prior_counts` is indexed by class
/// ordinal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteConfig {
    pub strategy: Strategy,
    pub weights: [f64; 3],
    pub prior_counts: [u64; 3],
    pub seed: u64,
}

impl Default for VoteConfig {
    fn default() -> Self {
        VoteConfig { strategy: Strategy::default(), weights: DEFAULT_WEIGHTS, prior_counts: [0; 3], seed: 0 }
    }
}

impl VoteConfig {
    pub fn new(strategy: Strategy) -> Self {
        VoteConfig { strategy, ..Default::default() }
    }

    pub fn with_weights(mut self, weights: [f64; 3]) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_priors(mut self, prior_counts: [u64; 3]) -> Self {
        self.prior_counts = prior_counts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), VoteError> {
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(VoteError::Config(format!("negative or non-finite weight in {:?}", self.weights)));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(VoteError::Config(format!("weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Parses "a,b,c".
pub fn parse_weights(raw: &str) -> Result<[f64; 3], VoteError> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| VoteError::Config(format!("weight `{p}`: {e}"))))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|v: Vec<f64>| VoteError::Config(format!("expected 3 weights, got {}", v.len())))
}

/// Largest prior count among `candidates`; ordinal order on ties.
fn by_prior(candidates: &[BiasClass], priors: &[u64; 3]) -> BiasClass {
    let mut best = candidates[0];
    for &c in &candidates[1..] {
        let (pc, pb) = (priors[c.ordinal() as usize], priors[best.ordinal() as usize]);
        if pc > pb || (pc == pb && c.ordinal() < best.ordinal()) {
            best = c;
        }
    }
    best
}

/// Class decided by the ballots alone, plus the per-class tally.
pub fn vote_class(classes: [BiasClass; 3], config: &VoteConfig, sample_id: &str) -> ([f64; 3], BiasClass) {
    let mut tally = [0.0; 3];
    let weights = match config.strategy {
        Strategy::Weighted => config.weights,
        _ => [1.0; 3],
    };
    for (c, w) in classes.iter().zip(weights) {
        tally[c.ordinal() as usize] += w;
    }
    let top = tally.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let leaders: Vec<BiasClass> = BiasClass::ALL.into_iter().filter(|c| tally[c.ordinal() as usize] == top).collect();
    let class = if leaders.len() == 1 {
        leaders[0]
    } else {
        match config.strategy {
            Strategy::RandomMajority => {
                let mut rng = keyed_rng(config.seed, sample_id, "vote");
                classes[rng.random_range(0..3)]
            }
            _ => by_prior(&leaders, &config.prior_counts),
        }
    };
    (tally, class)
}

/// Votes over (benefit, flow, causal) ballots. `sample_id` keys the random
/// strategy's tie breaks.
pub fn vote(ballots: &[BiasVerdict], config: &VoteConfig, sample_id: &str) -> Result<BiasVerdict, VoteError> {
    config.validate()?;
    if ballots.len() != 3 {
        return Err(VoteError::Config(format!("expected 3 ballots, got {}", ballots.len())));
    }
    for (index, (b, expected)) in ballots.iter().zip(View::SINGLE).enumerate() {
        if b.view != expected {
            return Err(VoteError::BallotOrder { index, expected, found: b.view });
        }
    }
    let classes = [ballots[0].class, ballots[1].class, ballots[2].class];
    let (tally, class) = vote_class(classes, config, sample_id);
    let degenerate = ballots.iter().all(|b| b.degenerate);
    Ok(BiasVerdict::new(class, View::Ensemble, degenerate, ScoreDetail::Ensemble { tally })
        .expect("ensemble detail matches ensemble view"))
}

/// Pooled class counts over every view's verdicts.
pub fn compute_priors<'a>(verdicts: impl IntoIterator<Item = &'a BiasClass>) -> Result<[u64; 3], VoteError> {
    let mut counts = [0u64; 3];
    let mut any = false;
    for c in verdicts {
        counts[c.ordinal() as usize] += 1;
        any = true;
    }
    if any {
        Ok(counts)
    } else {
        Err(VoteError::Empty)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BiasClass::{ModalityBalance as MB, UniImage as UI, UniText as UT};

    fn ballots(classes: [BiasClass; 3]) -> Vec<BiasVerdict> {
        let details = [
            ScoreDetail::Benefit { phi_image: 1.0, phi_text: 1.0 },
            ScoreDetail::Flow {
                s_it: 1.0,
                s_tt: 1.0,
                s_it_norm: 0.5,
                s_tt_norm: 0.5,
                aggregation: crate::flow::Aggregation::Sum,
            },
            ScoreDetail::Causal { nde_c: 0.0, nde_e: 0.0, nde_w: 0.0, nde_r: 0.0, tie_balance: 0.0, te_w: 0.0, te_e: 0.0 },
        ];
        classes
            .iter()
            .zip(View::SINGLE)
            .zip(details)
            .map(|((&c, v), d)| BiasVerdict::new(c, v, false, d).unwrap())
            .collect()
    }

    #[test]
    fn majority_wins() {
        let v = vote(&ballots([UI, UI, MB]), &VoteConfig::default(), "s").unwrap();
        assert_eq!(v.class, UI);
        assert_eq!(v.detail, ScoreDetail::Ensemble { tally: [2.0, 1.0, 0.0] });
        assert!(!v.degenerate);
    }

    #[test]
    fn split_goes_to_largest_prior() {
        // priors in ordinal order: UI 60, MB 200, UT 40
        let config = VoteConfig::default().with_priors([60, 200, 40]);
        assert_eq!(vote(&ballots([UI, MB, UT]), &config, "s").unwrap().class, MB);
        let config = VoteConfig::default().with_priors([5, 5, 5]);
        assert_eq!(vote(&ballots([UT, MB, UI]), &config, "s").unwrap().class, UI);
    }

    #[test]
    fn weighted_sums() {
        let config = VoteConfig::new(Strategy::Weighted);
        let v = vote(&ballots([UI, MB, MB]), &config, "s").unwrap();
        assert_eq!(v.class, MB);
        let ScoreDetail::Ensemble { tally } = v.detail else { panic!() };
        assert!((tally[0] - 0.3).abs() < 1e-12 && (tally[1] - 0.7).abs() < 1e-12);
        // causal alone outweighs the other two
        assert_eq!(vote(&ballots([UI, UI, UT]), &config, "s").unwrap().class, UI);
        assert_eq!(vote(&ballots([UI, MB, UT]), &config, "s").unwrap().class, UT);
    }

    #[test]
    fn weighted_tie_uses_priors() {
        // UI 0.25 + 0.25 against UT 0.5
        let config = VoteConfig::new(Strategy::Weighted).with_weights([0.25, 0.25, 0.5]).with_priors([1, 0, 9]);
        assert_eq!(vote(&ballots([UI, UI, UT]), &config, "s").unwrap().class, UT);
        let config = config.with_priors([9, 0, 1]);
        assert_eq!(vote(&ballots([UI, UI, UT]), &config, "s").unwrap().class, UI);
    }

    #[test]
    fn random_is_seeded_per_sample() {
        let config = VoteConfig::new(Strategy::RandomMajority).with_seed(11);
        let picks: Vec<_> = (0..50).map(|i| vote(&ballots([UI, MB, UT]), &config, &format!("s{i}")).unwrap().class).collect();
        let again: Vec<_> = (0..50).map(|i| vote(&ballots([UI, MB, UT]), &config, &format!("s{i}")).unwrap().class).collect();
        assert_eq!(picks, again);
        for c in [UI, MB, UT] {
            assert!(picks.contains(&c));
        }
    }

    #[test]
    fn degenerate_only_when_all_are() {
        let mut b = ballots([MB, MB, MB]);
        b[0].degenerate = true;
        assert!(!vote(&b, &VoteConfig::default(), "s").unwrap().degenerate);
        for x in &mut b {
            x.degenerate = true;
        }
        assert!(vote(&b, &VoteConfig::default(), "s").unwrap().degenerate);
    }

    #[test]
    fn malformed_inputs() {
        let bad = VoteConfig::new(Strategy::Weighted).with_weights([0.5, 0.5, 0.5]);
        assert!(matches!(vote(&ballots([UI, UI, UI]), &bad, "s"), Err(VoteError::Config(_))));
        let neg = VoteConfig::default().with_weights([1.2, -0.2, 0.0]);
        assert!(neg.validate().is_err());
        let mut b = ballots([UI, UI, UI]);
        b.swap(0, 1);
        assert!(matches!(vote(&b, &VoteConfig::default(), "s"), Err(VoteError::BallotOrder { index: 0, .. })));
        assert!(vote(&b[..2], &VoteConfig::default(), "s").is_err());
    }

    #[test]
    fn priors_pool_views() {
        let table = [[MB, MB, UI], [MB, MB, UI]];
        assert_eq!(compute_priors(table.iter().flatten()).unwrap(), [2, 4, 0]);
        assert_eq!(compute_priors(&[UI, UT, MB]).unwrap(), [1, 1, 1]);
        assert_eq!(compute_priors(&[]), Err(VoteError::Empty));
    }

    #[test]
    fn weights_parse() {
        assert_eq!(parse_weights("0.3,0.2,0.5").unwrap(), [0.3, 0.2, 0.5]);
        assert!(parse_weights("0.5,0.5").is_err());
        assert!(parse_weights("a,b,c").is_err());
        assert_eq!("weighted".parse::<Strategy>().unwrap(), Strategy::Weighted);
    }
}

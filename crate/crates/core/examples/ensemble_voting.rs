//! Combining the three view verdicts.

use modbias::ensemble::{compute_priors, vote_class, Strategy, VoteConfig};
use modbias::model::BiasClass::{self, ModalityBalance as MB, UniImage as UI, UniText as UT};

fn main() {
    let dataset: [[BiasClass; 3]; 4] = [[UI, MB, MB], [UI, UT, MB], [MB, MB, MB], [UT, UT, MB]];
    let priors = compute_priors(dataset.iter().flatten()).unwrap();
    println!("pooled priors (UI, MB, UT): {priors:?}");

    let strategies = [
        VoteConfig::new(Strategy::PriorMajority).with_priors(priors),
        VoteConfig::new(Strategy::RandomMajority).with_seed(7),
        VoteConfig::new(Strategy::Weighted).with_priors(priors),
    ];
    for (i, ballots) in dataset.iter().enumerate() {
        let id = format!("s{i}");
        let verdicts: Vec<String> = strategies
            .iter()
            .map(|config| {
                let (tally, class) = vote_class(*ballots, config, &id);
                format!("{}={} {tally:.1?}", config.strategy, class.abbrev())
            })
            .collect();
        let names: Vec<&str> = ballots.iter().map(|c| c.abbrev()).collect();
        println!("{names:?}: {}", verdicts.join("  "));
    }
}

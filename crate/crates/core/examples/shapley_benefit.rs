//! Modality contributions from detector correctness on each input subset.

use std::collections::BTreeMap;

use modbias::benefit::{benefit_value, classify_benefit, shapley_general, shapley_two_modal, Coalition};
use modbias::model::ModalityId;

fn main() {
    // correct on image alone and on both, wrong on text alone
    let outcomes = BTreeMap::from([
        (Coalition::of(&[ModalityId::Image]), true),
        (Coalition::of(&[ModalityId::Text]), false),
        (Coalition::of(&ModalityId::ALL), true),
    ]);
    let v = benefit_value(&outcomes, 2).unwrap();
    println!("benefits: {v:?}");

    let closed = shapley_two_modal(1.0, 0.0, 2.0);
    let as_f64 = v.iter().map(|(c, b)| (*c, *b as f64)).collect();
    let general = shapley_general(&as_f64, 2).unwrap();
    println!("closed form {:?}, enumeration {:?}", closed.phi, general.phi);
    println!("verdict: {}", classify_benefit(&closed).class);

    // nothing is predicted correctly: every value is zero and the verdict is flagged
    let zero = shapley_two_modal(0.0, 0.0, 0.0);
    let verdict = classify_benefit(&zero);
    println!("all wrong: {} (degenerate = {})", verdict.class, verdict.degenerate);

    // the enumeration also handles more players, e.g. image, text and audio
    let three: BTreeMap<Coalition, f64> = Coalition::all(3).map(|c| (c, if c.contains(0) { c.size() as f64 } else { 0.0 })).collect();
    println!("three players: {:?}", shapley_general(&three, 3).unwrap().phi);
}

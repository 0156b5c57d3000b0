//! Modality benefit: Shapley values of a correctness-based benefit game.
//!
//! A coalition of modalities is worth its size when the detector fed only
//! those modalities predicts the label, and nothing otherwise. Each
//! modality's Shapley value is its marginal benefit averaged over every
//! order in which the modalities can join; the larger value names the
//! modality the sample leans on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::gateway::{Category, Gateway, GatewayError};
use crate::model::{BiasClass, BiasVerdict, ModalityId, Sample, ScoreDetail, View};

/// Permutation enumeration is exact up to this many players.
pub const MAX_PLAYERS: usize = 8;

/// Tolerance for comparing Shapley values with more than two players.
pub const GENERAL_TOLERANCE: f64 = 1e-9;

/// A set of players (modalities) as a bitmask over player indices.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Coalition(pub u16);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn full(n: usize) -> Self {
        Coalition(((1u32 << n) - 1) as u16)
    }

    pub fn singleton(player: usize) -> Self {
        Coalition(1 << player)
    }

    pub fn of(modalities: &[ModalityId]) -> Self {
        modalities.iter().fold(Coalition::EMPTY, |c, m| c.with(m.index()))
    }

    pub fn with(self, player: usize) -> Self {
        Coalition(self.0 | (1 << player))
    }

    pub fn contains(self, player: usize) -> bool {
        self.0 & (1 << player) != 0
    }

    pub fn size(self) -> u32 {
        self.0.count_ones()
    }

    /// All `2^n` coalitions over `n` players.
    pub fn all(n: usize) -> impl Iterator<Item = Coalition> {
        (0..(1u32 << n)).map(|m| Coalition(m as u16))
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let members: Vec<usize> = (0..16).filter(|&p| self.contains(p)).collect();
        write!(f, "{members:?}")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BenefitError {
    #[error("no value for coalition {0:?}")]
    MissingCoalition(Coalition),
    #[error("{0} players exceed the enumeration bound of {MAX_PLAYERS}")]
    TooManyPlayers(usize),
    #[error("empty coalition must have benefit 0, got {0}")]
    NonZeroEmpty(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionOutcome {
    pub coalition: Coalition,
    pub correct: bool,
    pub benefit: u32,
}

impl CoalitionOutcome {
    pub fn new(coalition: Coalition, correct: bool) -> Self {
        let benefit = if correct { coalition.size() } else { 0 };
        CoalitionOutcome { coalition, correct, benefit }
    }
}

/// Shapley values per player (index = player / [`ModalityId::index`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyResult {
    pub phi: Vec<f64>,
    /// Every coalition had zero benefit.
    pub degenerate: bool,
}

impl ShapleyResult {
    pub fn phi_of(&self, modality: ModalityId) -> f64 {
        self.phi[modality.index()]
    }
}

/// Benefit of each coalition given whether the detector was correct on it.
/// The empty coalition is fixed at 0 and need not be supplied.
pub fn benefit_value(outcomes: &BTreeMap<Coalition, bool>, n: usize) -> Result<BTreeMap<Coalition, u32>, BenefitError> {
    Coalition::all(n)
        .map(|c| {
            if c == Coalition::EMPTY {
                return Ok((c, 0));
            }
            let correct = *outcomes.get(&c).ok_or(BenefitError::MissingCoalition(c))?;
            Ok((c, CoalitionOutcome::new(c, correct).benefit))
        })
        .collect()
}

/// Exact Shapley values by enumerating all `n!` join orders.
pub fn shapley_general(benefits: &BTreeMap<Coalition, f64>, n: usize) -> Result<ShapleyResult, BenefitError> {
    if n > MAX_PLAYERS {
        return Err(BenefitError::TooManyPlayers(n));
    }
    let mut table = vec![0.0; 1 << n];
    for c in Coalition::all(n) {
        table[c.0 as usize] = *benefits.get(&c).ok_or(BenefitError::MissingCoalition(c))?;
    }

    // Integer-valued games sum exactly in f64, so the only rounding is the
    // final division.
    let mut marginal_sums = vec![0.0f64; n];
    let mut orders = 0u64;
    let mut order: Vec<usize> = (0..n).collect();
    loop {
        let mut predecessors = Coalition::EMPTY;
        for &player in &order {
            let joined = predecessors.with(player);
            marginal_sums[player] += table[joined.0 as usize] - table[predecessors.0 as usize];
            predecessors = joined;
        }
        orders += 1;
        if !next_permutation(&mut order) {
            break;
        }
    }

    let phi = marginal_sums.into_iter().map(|s| s / orders as f64).collect();
    let degenerate = table.iter().all(|&v| v == 0.0);
    Ok(ShapleyResult { phi, degenerate })
}

/// Lexicographic successor; false once `order` is the last permutation.
fn next_permutation(order: &mut [usize]) -> bool {
    let Some(i) = order.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = order.iter().rposition(|&x| x > order[i]).expect("a larger element exists right of i");
    order.swap(i, j);
    order[i + 1..].reverse();
    true
}

/// Closed-form two-modality Shapley values with `V(empty) = 0`.
pub fn shapley_two_modal(v_image: f64, v_text: f64, v_both: f64) -> ShapleyResult {
    let phi_image = 0.5 * ((v_image - 0.0) + (v_both - v_text));
    let phi_text = 0.5 * ((v_text - 0.0) + (v_both - v_image));
    let degenerate = v_image == 0.0 && v_text == 0.0 && v_both == 0.0;
    ShapleyResult { phi: vec![phi_image, phi_text], degenerate }
}

/// Image-vs-text comparison of a two-modality result. Degenerate (all-zero)
/// games fall to the equality branch and keep their flag.
pub fn classify_benefit(result: &ShapleyResult) -> BiasVerdict {
    let phi_image = result.phi_of(ModalityId::Image);
    let phi_text = result.phi_of(ModalityId::Text);
    let class = if phi_image > phi_text {
        BiasClass::UniImage
    } else if phi_image < phi_text {
        BiasClass::UniText
    } else {
        BiasClass::ModalityBalance
    };
    BiasVerdict::new(class, View::Benefit, result.degenerate, ScoreDetail::Benefit { phi_image, phi_text })
        .expect("benefit detail matches benefit view")
}

/// Classification for games with more than two players: the modality with
/// the strictly largest value (beyond [`GENERAL_TOLERANCE`]) wins, otherwise
/// balance.
pub fn dominant_player(result: &ShapleyResult) -> Option<usize> {
    let mut order: Vec<usize> = (0..result.phi.len()).collect();
    order.sort_by(|&a, &b| result.phi[b].total_cmp(&result.phi[a]));
    match order.as_slice() {
        [only] => Some(*only),
        [top, second, ..] if result.phi[*top] - result.phi[*second] > GENERAL_TOLERANCE => Some(*top),
        _ => None,
    }
}

/// Queries the three detector categories and classifies the sample.
pub fn run_benefit(sample: &Sample, gateway: &Gateway) -> Result<BiasVerdict, GatewayError> {
    let image: BTreeSet<ModalityId> = [ModalityId::Image].into();
    let text: BTreeSet<ModalityId> = [ModalityId::Text].into();
    let both: BTreeSet<ModalityId> = [ModalityId::Image, ModalityId::Text].into();

    let label = sample.label as usize;
    let correct_image = gateway.predict_group(Category::ImageOnly, sample, &image)?.pred == label;
    let correct_text = gateway.predict_group(Category::TextOnly, sample, &text)?.pred == label;
    let correct_both = gateway.predict_group(Category::ImageText, sample, &both)?.pred == label;

    let outcomes: BTreeMap<Coalition, bool> = [
        (Coalition::of(&[ModalityId::Image]), correct_image),
        (Coalition::of(&[ModalityId::Text]), correct_text),
        (Coalition::of(&[ModalityId::Image, ModalityId::Text]), correct_both),
    ]
    .into();
    let v = benefit_value(&outcomes, 2).expect("all two-modality coalitions supplied");
    let value = |ms: &[ModalityId]| v[&Coalition::of(ms)] as f64;
    let result = shapley_two_modal(
        value(&[ModalityId::Image]),
        value(&[ModalityId::Text]),
        value(&[ModalityId::Image, ModalityId::Text]),
    );
    Ok(classify_benefit(&result))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn game(values: &[(u16, f64)]) -> BTreeMap<Coalition, f64> {
        values.iter().map(|&(m, v)| (Coalition(m), v)).collect()
    }

    // players: 0 = image (bit 1), 1 = text (bit 2)
    #[test]
    fn benefit_counts_modalities_when_correct() {
        let outcomes: BTreeMap<Coalition, bool> =
            [(Coalition(0b01), true), (Coalition(0b10), false), (Coalition(0b11), true)].into();
        let v = benefit_value(&outcomes, 2).unwrap();
        assert_eq!(v[&Coalition(0b01)], 1);
        assert_eq!(v[&Coalition(0b10)], 0);
        assert_eq!(v[&Coalition(0b11)], 2);
        assert_eq!(v[&Coalition::EMPTY], 0);
    }

    #[test]
    fn benefit_missing_coalition() {
        let outcomes: BTreeMap<Coalition, bool> = [(Coalition(0b01), true)].into();
        assert_eq!(benefit_value(&outcomes, 2), Err(BenefitError::MissingCoalition(Coalition(0b10))));
    }

    #[test]
    fn general_worked_cases() {
        let r = shapley_general(&game(&[(0, 0.0), (1, 1.0), (2, 0.0), (3, 2.0)]), 2).unwrap();
        assert_eq!(r.phi, vec![1.5, 0.5]);
        let r = shapley_general(&game(&[(0, 0.0), (1, 1.0), (2, 1.0), (3, 2.0)]), 2).unwrap();
        assert_eq!(r.phi, vec![1.0, 1.0]);
        let r = shapley_general(&game(&[(0, 0.0), (1, 0.0), (2, 0.0), (3, 0.0)]), 2).unwrap();
        assert_eq!(r.phi, vec![0.0, 0.0]);
        assert!(r.degenerate);
    }

    #[test]
    fn general_errors() {
        assert_eq!(shapley_general(&game(&[(0, 0.0)]), 9), Err(BenefitError::TooManyPlayers(9)));
        assert_eq!(
            shapley_general(&game(&[(0, 0.0), (1, 1.0), (3, 2.0)]), 2),
            Err(BenefitError::MissingCoalition(Coalition(2)))
        );
    }

    #[test]
    fn two_modal_worked_cases() {
        assert_eq!(shapley_two_modal(1.0, 0.0, 2.0).phi, vec![1.5, 0.5]);
        assert_eq!(shapley_two_modal(0.0, 1.0, 2.0).phi, vec![0.5, 1.5]);
        let r = shapley_two_modal(0.0, 0.0, 0.0);
        assert_eq!(r.phi, vec![0.0, 0.0]);
        assert!(r.degenerate);
    }

    #[test]
    fn classification() {
        let v = classify_benefit(&shapley_two_modal(1.0, 0.0, 2.0));
        assert_eq!(v.class, BiasClass::UniImage);
        assert!(!v.degenerate);
        assert_eq!(classify_benefit(&shapley_two_modal(1.0, 1.0, 2.0)).class, BiasClass::ModalityBalance);
        assert_eq!(classify_benefit(&shapley_two_modal(0.0, 1.0, 2.0)).class, BiasClass::UniText);
        let v = classify_benefit(&shapley_two_modal(0.0, 0.0, 0.0));
        assert_eq!(v.class, BiasClass::ModalityBalance);
        assert!(v.degenerate);
    }

    #[test]
    fn classification_shift_invariant() {
        for (a, b) in [(1.5, 0.5), (1.0, 1.0), (0.5, 1.5)] {
            let base = classify_benefit(&ShapleyResult { phi: vec![a, b], degenerate: false }).class;
            for k in [-3.0, 0.5, 10.0] {
                let shifted = classify_benefit(&ShapleyResult { phi: vec![a + k, b + k], degenerate: false }).class;
                assert_eq!(base, shifted);
            }
        }
    }

    #[test]
    fn dummy_player_gets_zero() {
        // player 2 never changes the value
        let mut g = BTreeMap::new();
        for c in Coalition::all(3) {
            let base = match c.0 & 0b011 {
                0 => 0.0,
                1 => 1.0,
                2 => 3.0,
                _ => 5.0,
            };
            g.insert(c, base);
        }
        let r = shapley_general(&g, 3).unwrap();
        assert_eq!(r.phi[2], 0.0);
        assert_eq!(dominant_player(&r), Some(1));
    }

    #[test]
    fn permutation_count() {
        let mut order = vec![0, 1, 2, 3];
        let mut count = 1;
        while next_permutation(&mut order) {
            count += 1;
        }
        assert_eq!(count, 24);
    }
}

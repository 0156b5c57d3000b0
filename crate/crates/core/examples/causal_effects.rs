//! Direct and indirect effects of the image, text and fused branches.

use modbias::causal::{classify_causal, compute_effects, CausalBranchSet};

fn branches(o_e: f64, o_w: f64, o_f: f64) -> CausalBranchSet {
    CausalBranchSet {
        o_c: 0.1,
        o_e,
        o_w,
        o_r: 0.1,
        o_f,
        o_f_ref: 0.0,
        o_c_ref: 0.0,
        o_e_ref: 0.0,
        o_w_ref: 0.0,
        o_r_ref: 0.0,
    }
}

fn main() {
    for (name, set) in [
        ("entity-driven", branches(3.0, 0.1, 0.3)),
        ("keyword-driven", branches(0.1, 3.0, 0.3)),
        ("fusion-driven", branches(0.5, 0.5, 3.0)),
    ] {
        let effects = compute_effects(&set).unwrap();
        println!(
            "{name}: nde_e {:.3} nde_w {:.3} tie {:.3} te_w {:.3} -> {}",
            effects.nde_e,
            effects.nde_w,
            effects.tie_balance,
            effects.te_w,
            classify_causal(&effects).class
        );
    }
}

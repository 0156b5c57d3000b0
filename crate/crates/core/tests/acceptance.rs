//! Acceptance suite. Each criterion runs in isolation and prints one
//! PASS/FAIL line; the process exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use modbias::benefit::{classify_benefit, shapley_general, shapley_two_modal};
use modbias::causal::{closed_form_effects, compute_effects, fused_difference_effects, CausalBranchSet};
use modbias::ensemble::{vote, vote_class, Strategy, VoteConfig};
use modbias::evaluation::{category_report, krippendorff_alpha, per_class_alpha, render_csv, venn_counts};
use modbias::flow::{aggregate_flow, classify_flow_class, default_grid, normalize_flow, Aggregation, FlowScores};
use modbias::gateway::Category;
use modbias::model::{BiasClass, BiasVerdict, ModalityId, ScoreDetail, View};
use modbias::pipeline::{gold_labels, AnalysisOptions, Analysis, Corruption, MockConfig};

use common::{alpha_oracle, as_coalitions, benefit_table, shapley_oracle};
use BiasClass::{ModalityBalance as MB, UniImage as UI, UniText as UT};

fn within(elapsed: Duration, limit_secs: f64) {
    assert!(elapsed.as_secs_f64() < limit_secs, "took {:.2?}, limit {limit_secs} s", elapsed);
}

fn shapley_exhaustive() {
    let start = Instant::now();
    for pattern in 0u8..8 {
        let correct = [false, pattern & 1 != 0, pattern & 2 != 0, pattern & 4 != 0];
        let v = benefit_table(&correct);
        let closed = shapley_two_modal(v[1], v[2], v[3]);
        let general = shapley_general(&as_coalitions(&v), 2).unwrap();
        assert_eq!(closed.phi, general.phi, "pattern {pattern:03b}");
        assert_eq!(closed.degenerate, general.degenerate);
        assert_eq!(closed.phi.iter().sum::<f64>(), v[3], "efficiency, pattern {pattern:03b}");
    }
    let worked = shapley_two_modal(1.0, 0.0, 2.0);
    assert_eq!(worked.phi_of(ModalityId::Image), 1.5);
    assert_eq!(worked.phi_of(ModalityId::Text), 0.5);
    assert_eq!(classify_benefit(&worked).class, UI);
    within(start.elapsed(), 1.0);
}

fn shapley_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for game in 0..1000 {
        let n = rng.random_range(2..=4);
        let correct: Vec<bool> = (0..1 << n).map(|_| rng.random_bool(0.5)).collect();
        let v = benefit_table(&correct);
        let got = shapley_general(&as_coalitions(&v), n).unwrap();
        let want = shapley_oracle(&v, n);
        for (g, w) in got.phi.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-9, "game {game}: {:?} vs {want:?}", got.phi);
        }
    }
    within(start.elapsed(), 10.0);
}

fn causal_algebra() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..10_000 {
        let mut x = || rng.random_range(-6.0..6.0);
        let b = CausalBranchSet {
            o_c: x(),
            o_e: x(),
            o_w: x(),
            o_r: x(),
            o_f: x(),
            o_f_ref: x(),
            o_c_ref: x(),
            o_e_ref: x(),
            o_w_ref: x(),
            o_r_ref: x(),
        };
        let closed = closed_form_effects(&b);
        assert_eq!(closed.te_w, closed.nde_w + closed.tie_balance, "set {i}");
        assert_eq!(closed.te_e, closed.nde_e + closed.tie_balance, "set {i}");
        let full = fused_difference_effects(&b);
        let pairs = [
            (closed.nde_c, full.nde_c),
            (closed.nde_e, full.nde_e),
            (closed.nde_w, full.nde_w),
            (closed.nde_r, full.nde_r),
            (closed.tie_balance, full.tie_balance),
            (closed.te_w, full.te_w),
            (closed.te_e, full.te_e),
            (full.te_w, full.nde_w + full.tie_balance),
        ];
        for (a, f) in pairs {
            assert!((a - f).abs() <= 1e-12, "set {i}: {a} vs {f}");
        }
        assert_eq!(compute_effects(&b).unwrap(), closed);
    }
    within(start.elapsed(), 5.0);
}

fn flow_properties() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let aggregations = [Aggregation::Sum, Aggregation::Avg, Aggregation::Max];
    let mut pool: Vec<FlowScores> = Vec::new();
    for case in 0..1000 {
        let tokens = rng.random_range(4..24);
        let split = rng.random_range(1..tokens);
        let scores: Vec<f64> = (0..tokens).map(|_| rng.random_range(0.0..1.0)).collect();
        let image: Vec<usize> = (0..split).collect();
        let text: Vec<usize> = (split..tokens).collect();
        let agg = aggregations[case % 3];
        let k = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled: Vec<f64> = scores.iter().map(|s| s * k).collect();

        let flows = normalize_flow(aggregate_flow(&scores, &image, &text, agg).unwrap()).unwrap();
        let scaled_flows = normalize_flow(aggregate_flow(&scaled, &image, &text, agg).unwrap()).unwrap();
        assert!((flows.s_it_norm + flows.s_tt_norm - 1.0).abs() <= 1e-12, "case {case}");
        assert!((scaled_flows.s_it_norm + scaled_flows.s_tt_norm - 1.0).abs() <= 1e-12, "case {case}");
        for eps in default_grid() {
            assert_eq!(
                classify_flow_class(&flows, eps),
                classify_flow_class(&scaled_flows, eps),
                "case {case}, scale {k}, epsilon {eps}"
            );
        }
        pool.push(flows);
    }
    let mut last = 0usize;
    for eps in default_grid() {
        let balanced = pool.iter().filter(|f| classify_flow_class(f, eps) == MB).count();
        assert!(balanced >= last, "balance share fell at epsilon {eps}");
        last = balanced;
    }
    within(start.elapsed(), 5.0);
}

fn voting_properties() {
    let start = Instant::now();
    let configs = [
        VoteConfig::new(Strategy::PriorMajority),
        VoteConfig::new(Strategy::PriorMajority).with_priors([0, 0, 9]),
        VoteConfig::new(Strategy::RandomMajority).with_seed(1),
        VoteConfig::new(Strategy::RandomMajority).with_seed(77),
        VoteConfig::new(Strategy::Weighted),
        VoteConfig::new(Strategy::Weighted).with_priors([9, 0, 0]),
        VoteConfig::new(Strategy::Weighted).with_weights([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).with_priors([0, 9, 0]),
    ];
    let mut weighted_ties = 0;
    for a in BiasClass::ALL {
        for b in BiasClass::ALL {
            for c in BiasClass::ALL {
                let ballots = [a, b, c];
                let majority = BiasClass::ALL.into_iter().find(|x| ballots.iter().filter(|y| *y == x).count() >= 2);
                for (k, config) in configs.iter().enumerate() {
                    let (tally, got) = vote_class(ballots, config, &format!("s{k}"));
                    if a == b && b == c {
                        assert_eq!(got, a, "unanimity {ballots:?} under {config:?}");
                    }
                    let Some(m) = majority else { continue };
                    let uniform = config.weights.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-12);
                    if config.strategy != Strategy::Weighted || uniform {
                        assert_eq!(got, m, "dominance {ballots:?} under {config:?}");
                        continue;
                    }
                    // default weights: benefit + flow (0.5) ties causal (0.5)
                    let top = tally.iter().copied().fold(f64::MIN, f64::max);
                    let leaders = tally.iter().filter(|t| **t == top).count();
                    if leaders == 1 {
                        assert_eq!(got, m, "dominance {ballots:?} under {config:?}");
                    } else {
                        assert!(a == b && c != a, "unexpected weighted tie {ballots:?}");
                        weighted_ties += 1;
                    }
                }
            }
        }
    }
    assert_eq!(weighted_ties, 2 * 6);

    let verdict = |class, view| {
        let detail = match view {
            View::Benefit => ScoreDetail::Benefit { phi_image: 0.0, phi_text: 0.0 },
            View::Flow => ScoreDetail::Flow {
                s_it: 1.0,
                s_tt: 1.0,
                s_it_norm: 0.5,
                s_tt_norm: 0.5,
                aggregation: Aggregation::Sum,
            },
            _ => ScoreDetail::Causal {
                nde_c: 0.0,
                nde_e: 0.0,
                nde_w: 0.0,
                nde_r: 0.0,
                tie_balance: 0.0,
                te_w: 0.0,
                te_e: 0.0,
            },
        };
        BiasVerdict::new(class, view, false, detail).unwrap()
    };
    let ballots = [verdict(UI, View::Benefit), verdict(MB, View::Flow), verdict(MB, View::Causal)];
    let out = vote(&ballots, &VoteConfig::new(Strategy::Weighted), "hand").unwrap();
    assert_eq!(out.class, MB);
    let ScoreDetail::Ensemble { tally } = out.detail else { panic!("ensemble detail expected") };
    assert!((tally[0] - 0.3).abs() < 1e-12 && (tally[1] - 0.7).abs() < 1e-12 && tally[2] == 0.0);
    within(start.elapsed(), 1.0);
}

fn accuracies(analysis: &Analysis, gold: &BTreeMap<String, BiasClass>) -> [f64; 4] {
    let views = [View::Benefit, View::Flow, View::Causal, View::Ensemble];
    views.map(|view| {
        let hits = analysis
            .results
            .iter()
            .filter(|r| r.verdict(view).map(|v| v.class) == Some(gold[&r.id]))
            .count();
        hits as f64 / analysis.results.len() as f64
    })
}

fn planted_recovery() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mix = vec![(UI, 0.3), (MB, 0.4), (UT, 0.3)];
    let mut config = MockConfig {
        n: 1000,
        mix,
        seed: 2024,
        out: dir.path().join("clean"),
        options: AnalysisOptions::default(),
        corruption: None,
        serve_exe: None,
    };
    let clean = modbias::pipeline::mock(&config).unwrap();
    let gold = gold_labels(&clean.manifest);
    assert_eq!(gold.len(), 1000);
    let clean_acc = accuracies(&clean.analysis, &gold);
    assert_eq!(clean_acc, [1.0; 4], "clean accuracies (benefit, flow, causal, ensemble)");
    for method in ["benefit", "flow", "causal", "ensemble"] {
        assert_eq!(clean.report.method(method).unwrap().overall_accuracy, 100.0, "{method}");
    }

    config.out = dir.path().join("corrupt");
    config.corruption = Some(Corruption { category: Category::ImageOnly, flip_rate: 0.1, seed: 99 });
    let corrupt = modbias::pipeline::mock(&config).unwrap();
    let corrupt_acc = accuracies(&corrupt.analysis, &gold);
    let degradation: Vec<f64> = (0..4).map(|i| clean_acc[i] - corrupt_acc[i]).collect();
    let worst = degradation[..3].iter().copied().fold(f64::MIN, f64::max);
    println!(
        "    degradation benefit {:.3} flow {:.3} causal {:.3} ensemble {:.3}",
        degradation[0], degradation[1], degradation[2], degradation[3]
    );
    assert!(degradation[3] < worst, "ensemble {} vs worst view {worst}", degradation[3]);
    within(start.elapsed(), 30.0);
}

fn report_format() {
    let start = Instant::now();
    // 10 samples, 5 predicted balanced of which 4 are right
    let rows: [(BiasClass, BiasClass); 10] =
        [(MB, MB), (MB, MB), (MB, MB), (MB, MB), (UI, MB), (UI, UI), (UI, UI), (UT, UT), (UT, UT), (UT, UI)];
    let gold: BTreeMap<String, BiasClass> = rows.iter().enumerate().map(|(i, r)| (format!("s{i}"), r.0)).collect();
    let pred: BTreeMap<String, BiasClass> = rows.iter().enumerate().map(|(i, r)| (format!("s{i}"), r.1)).collect();
    let report = category_report(&pred, &gold).unwrap();
    assert_eq!(report.cell(MB), "0.50[80.00]");
    let csv = render_csv([("multi-view", &report)]);
    assert_eq!(csv, "method,UI,MB,UT,Acc,F1\nmulti-view,0.30[66.67],0.50[80.00],0.20[100.00],80.00,78.52\n");

    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for table in 0..100 {
        let n = rng.random_range(1..60);
        let verdicts: Vec<[Option<BiasClass>; 3]> =
            (0..n).map(|_| [0; 3].map(|_| Some(BiasClass::ALL[rng.random_range(0..3)]))).collect();
        let venn = venn_counts(&verdicts).unwrap();
        for class in BiasClass::ALL {
            let member = |r: &[Option<BiasClass>; 3], views: &[usize]| views.iter().all(|&v| r[v] == Some(class));
            let count = |views: &[usize]| verdicts.iter().filter(|r| member(r, views)).count() as i64;
            let union = verdicts.iter().filter(|r| r.contains(&Some(class))).count() as i64;
            let ie = count(&[0]) + count(&[1]) + count(&[2]) - count(&[0, 1]) - count(&[0, 2]) - count(&[1, 2])
                + count(&[0, 1, 2]);
            assert_eq!(ie, union, "table {table}");
            assert_eq!(venn.union(class) as i64, union, "table {table}");
            for (v, view) in View::SINGLE.into_iter().enumerate() {
                assert_eq!(venn.view_total(class, view) as i64, count(&[v]), "table {table}");
            }
            assert_eq!(venn.region(class, &View::SINGLE) as i64, count(&[0, 1, 2]), "table {table}");
        }
    }
    within(start.elapsed(), 5.0);
}

fn krippendorff() {
    let start = Instant::now();
    let unanimous: Vec<Vec<Option<BiasClass>>> = (0..3).map(|_| vec![Some(UI), Some(MB), Some(UT), Some(MB)]).collect();
    assert_eq!(krippendorff_alpha(&unanimous).unwrap(), 1.0);

    // coincidences o_AA = o_AB = o_BA = o_BB = 2; n_A = n_B = 4; n = 8
    // alpha = 1 - (n - 1) * (o_AB + o_BA) / (n_A n_B + n_B n_A) = 1 - 7 * 4 / 32
    let two_by_four = vec![
        vec![Some('A'), Some('A'), Some('B'), Some('B')],
        vec![Some('A'), Some('B'), Some('A'), Some('B')],
    ];
    let hand = 1.0 - 7.0 * 4.0 / 32.0;
    assert!((krippendorff_alpha(&two_by_four).unwrap() - hand).abs() <= 1e-9);
    assert!((alpha_oracle(&two_by_four) - hand).abs() <= 1e-9);

    let labels = vec![
        vec![Some(UI), Some(MB), Some(UT), Some(MB), Some(UI), None],
        vec![Some(UI), Some(MB), Some(MB), Some(MB), Some(UI), Some(UT)],
        vec![Some(UI), Some(UT), Some(UT), Some(MB), None, Some(UT)],
    ];
    for class in BiasClass::ALL {
        let alpha = per_class_alpha(&labels, class).unwrap();
        let binary: Vec<Vec<Option<bool>>> =
            labels.iter().map(|row| row.iter().map(|l| l.map(|c| c == class)).collect()).collect();
        assert!(alpha.is_finite() && alpha <= 1.0, "{class}: {alpha}");
        assert!((alpha - alpha_oracle(&binary)).abs() <= 1e-9, "{class}");
    }
    assert_eq!(per_class_alpha(&unanimous, MB).unwrap(), 1.0);
    within(start.elapsed(), 1.0);
}

fn main() {
    let criteria: [(&str, fn()); 8] = [
        ("shapley exhaustive n=2", shapley_exhaustive),
        ("shapley brute-force oracle", shapley_oracle_equivalence),
        ("causal algebra", causal_algebra),
        ("flow properties", flow_properties),
        ("voting properties", voting_properties),
        ("planted end-to-end recovery", planted_recovery),
        ("report format and venn", report_format),
        ("krippendorff alpha", krippendorff),
    ];
    panic::set_hook(Box::new(|info| println!("    {info}")));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let ok = panic::catch_unwind(check).is_ok();
        println!("{} {name} ({:.2?})", if ok { "PASS" } else { "FAIL" }, start.elapsed());
        failed += usize::from(!ok);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

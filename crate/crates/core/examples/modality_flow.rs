//! Image-vs-text information flow into the output token.

use modbias::flow::{
    aggregate_flow, calibrate_epsilon, classify_flow, default_grid, normalize_flow, token_scores, Aggregation, FlowConfig,
};
use modbias::gateway::{SaliencyBundle, SaliencyPayload};
use modbias::model::BiasClass;

fn main() {
    // two heads over [bos, img, img, txt, txt, txt, out]
    let attention = vec![vec![0.1, 0.3, 0.2, 0.1, 0.1, 0.1, 0.1], vec![0.0, 0.4, 0.1, 0.2, 0.1, 0.1, 0.1]];
    let gradient = vec![vec![1.0, 2.0, 1.5, 0.5, 0.4, 0.2, 0.0], vec![1.0, 1.0, 2.0, -0.5, 0.6, 0.1, 0.0]];
    let bundle = SaliencyBundle::new(SaliencyPayload::Raw { attention, gradient }, vec![1, 2], vec![3, 4, 5]).unwrap();
    let scores = token_scores(&bundle).unwrap();
    println!("token saliency: {scores:.3?}");

    for aggregation in [Aggregation::Sum, Aggregation::Avg, Aggregation::Max] {
        let raw = aggregate_flow(&scores, &bundle.image_tokens, &bundle.text_tokens, aggregation).unwrap();
        let flows = normalize_flow(raw).unwrap();
        let verdict = classify_flow(&flows, &FlowConfig::new(0.25, aggregation).unwrap());
        println!("{aggregation}: image {:.3} text {:.3} -> {}", flows.s_it_norm, flows.s_tt_norm, verdict.class);
    }

    let labeled: Vec<_> = [(0.9, 0.1, BiasClass::UniImage), (0.55, 0.45, BiasClass::ModalityBalance), (0.4, 0.6, BiasClass::ModalityBalance), (0.2, 0.8, BiasClass::UniText)]
        .into_iter()
        .map(|(it, tt, gold)| {
            let raw = aggregate_flow(&[it, tt], &[0], &[1], Aggregation::Sum).unwrap();
            (normalize_flow(raw).unwrap(), gold)
        })
        .collect();
    let calibration = calibrate_epsilon(&labeled, &default_grid()).unwrap();
    print!("{}", calibration.to_csv());
    println!("chosen epsilon {:.2}", calibration.best_epsilon);
}

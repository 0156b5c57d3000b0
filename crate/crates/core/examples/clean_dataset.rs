//! Keeping only the samples that need both modalities.

use modbias::model::BiasClass::{ModalityBalance as MB, UniImage as UI, UniText as UT};
use modbias::pipeline::{clean, run_planted, AnalysisOptions};

fn main() {
    let (manifest, analysis) = run_planted(200, &[(UI, 0.25), (MB, 0.5), (UT, 0.25)], 9, &AnalysisOptions::default(), None).unwrap();
    let (balanced, summary) = clean(&analysis.results, &manifest, false).unwrap();
    let (unanimous, _) = clean(&analysis.results, &manifest, true).unwrap();
    println!("{} samples, {} balanced, {} unanimously balanced", manifest.samples.len(), summary.kept, unanimous.samples.len());
    for line in balanced.to_string_lines().lines().take(3) {
        println!("{line}");
    }
}

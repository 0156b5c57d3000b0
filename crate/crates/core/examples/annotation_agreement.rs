//! Human labels, their reliability, and how often the views agree.

use modbias::evaluation::{aggregate_annotations, krippendorff_alpha, per_class_alpha, record_class, venn_counts};
use modbias::model::{AnnotatorRecord, BiasClass};

fn rec(id: &str, image: i64, text: i64, balance: i64) -> AnnotatorRecord {
    AnnotatorRecord { annotator_id: id.into(), q_uni_image: image, q_uni_text: text, q_balance: balance }
}

fn main() {
    let samples = [
        vec![rec("a1", 5, 1, 2), rec("a2", 4, 1, 3), rec("a3", 5, 0, 2)],
        vec![rec("a1", 2, 2, 5), rec("a2", 1, 3, 4), rec("a3", 3, 2, 4)],
        vec![rec("a1", 1, 5, 2), rec("a2", 2, 4, 4), rec("a3", 0, 5, 1)],
        vec![rec("a1", 3, 1, 4), rec("a2", 4, 1, 2), rec("a3", 2, 2, 4)],
    ];
    for (i, records) in samples.iter().enumerate() {
        println!("sample {i}: {}", aggregate_annotations(records).unwrap());
    }

    let labels: Vec<Vec<Option<BiasClass>>> =
        (0..3).map(|a| samples.iter().map(|records| Some(record_class(&records[a]))).collect()).collect();
    println!("alpha {:.3}", krippendorff_alpha(&labels).unwrap());
    for class in BiasClass::ALL {
        println!("  {} vs rest {:.3}", class.abbrev(), per_class_alpha(&labels, class).unwrap());
    }

    use BiasClass::{ModalityBalance as MB, UniImage as UI, UniText as UT};
    let verdicts = [[Some(UI), Some(UI), Some(UI)], [Some(MB), Some(UI), Some(MB)], [Some(UT), Some(MB), Some(UT)]];
    print!("{}", venn_counts(&verdicts).unwrap().to_csv());
}

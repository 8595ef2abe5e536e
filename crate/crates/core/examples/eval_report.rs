//! Grounding accuracy table (six platform x element-type cells, micro and
//! macro), ranker classification metrics and element accuracy.

use std::collections::{BTreeMap, HashMap};

use guicurate::fixtures::synthetic_records;
use guicurate::geometry::{BBox, Point};
use guicurate::metrics::{
    classification_report, element_accuracy, grounding_report, macro_accuracy, Prediction,
};

fn main() -> guicurate::Result<()> {
    // cell accuracies of a published row; the macro is their plain mean
    let cells = [97.4, 78.2, 93.8, 65.0, 89.1, 69.9];
    println!(
        "macro of {cells:?} = {:.2}",
        macro_accuracy(&cells).unwrap()
    );

    let gold = synthetic_records(120, 4, 8);
    let mut preds = HashMap::new();
    for (i, r) in gold.iter().enumerate() {
        let c = r.gt_box.center();
        let p = match i % 4 {
            0 => None,
            1 => Some(Prediction::Point(Point::new(c.x + 1000.0, c.y)?)),
            _ => Some(Prediction::Box(r.gt_box)),
        };
        preds.insert(r.id.clone(), p);
    }
    let report = grounding_report(&preds, &gold);
    print!("{}", report.to_table("synthetic"));
    println!("missing predictions flagged: {}", report.missing.len());

    let labels = [
        true, true, true, false, false, false, false, false, false, false,
    ];
    let guess = [
        true, true, false, true, false, false, false, false, false, false,
    ];
    print!("{}", classification_report(&labels, &guess)?.to_table());

    let gold_el: BTreeMap<String, BBox> = (0..4)
        .map(|i| (format!("step{i}"), BBox::new(0.0, 0.0, 50.0, 50.0).unwrap()))
        .collect();
    let pts: HashMap<String, Point> = (0..4)
        .map(|i| {
            (
                format!("step{i}"),
                Point::new(if i == 3 { 80.0 } else { 25.0 }, 25.0).unwrap(),
            )
        })
        .collect();
    println!(
        "element accuracy {:.2}",
        element_accuracy(&pts, &gold_el).accuracy
    );
    Ok(())
}

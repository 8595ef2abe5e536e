//! Ranker training triplets: eligible screenshot groups keep each
//! annotation with probability one half and otherwise swap in the box of
//! another element on the same screenshot.

use guicurate::client::{ClientConfig, MockSettings, ModelClient};
use guicurate::difficulty::{partition_by_difficulty, PredictionCache};
use guicurate::fixtures::synthetic_records;
use guicurate::ranker::{build_training_triplets, EligibilityRule, Label};

fn main() -> guicurate::Result<()> {
    let records = synthetic_records(400, 5, 5);
    let settings = MockSettings {
        seed: 5,
        hit_rate: 0.85,
        ..MockSettings::default()
    };
    let client = ModelClient::mock(ClientConfig::mock("mock-grounder"), settings)?;
    let p = partition_by_difficulty(&records, &client, &mut PredictionCache::new())?;

    let rule = EligibilityRule::default();
    println!("thresholds: {:?}", rule.thresholds);
    let (triplets, stats) = build_training_triplets(&p.easy, &p.outcomes, &rule, 42)?;
    println!("{stats:?}");
    for t in triplets
        .iter()
        .filter(|t| t.label == Label::Negative)
        .take(2)
    {
        println!("negative {}: {:?} -> {}", t.id, t.text, t.bbox);
    }
    println!(
        "{}",
        serde_json::to_string(&triplets[0]).expect("triplet serializes")
    );
    Ok(())
}

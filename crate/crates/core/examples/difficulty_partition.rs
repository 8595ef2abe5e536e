//! Zero-shot difficulty partition with a seeded mock grounder, including
//! the prediction cache that makes re-runs free.

use guicurate::client::{ClientConfig, MockSettings, ModelClient};
use guicurate::difficulty::{partition_by_difficulty, PredictionCache};
use guicurate::fixtures::synthetic_records;

fn main() -> guicurate::Result<()> {
    let records = synthetic_records(200, 5, 11);
    let settings = MockSettings {
        seed: 11,
        hit_rate: 0.6,
        ..MockSettings::default()
    };
    let client = ModelClient::mock(ClientConfig::mock("mock-grounder"), settings)?;

    let mut cache = PredictionCache::new();
    let p = partition_by_difficulty(&records, &client, &mut cache)?;
    println!(
        "easy {}  hard {}  deferred {}  requests {}",
        p.easy.len(),
        p.hard.len(),
        p.deferred.len(),
        client.requests()
    );
    for o in p.outcomes.iter().take(3) {
        println!("{} {:?} raw={:?}", o.id, o.label, o.prediction.raw_output);
    }

    let again = partition_by_difficulty(&records, &client, &mut cache)?;
    assert_eq!(again.hard.len(), p.hard.len());
    println!(
        "second pass requests: {}",
        client.requests() - records.len() as u64
    );
    Ok(())
}

//! Format, solution and length rewards for GRPO rollouts, plus a quick
//! single-threaded throughput measurement.

use std::time::Instant;

use guicurate::geometry::BBox;
use guicurate::reward::{RewardConfig, RewardEngine};

fn main() -> guicurate::Result<()> {
    let engine = RewardEngine::new(RewardConfig::default())?;
    let gt = BBox::new(440.0, 1000.0, 520.0, 1060.0)?;
    let long_think = vec!["step"; 120].join(" ");
    let rollouts = [
        "<think>To play the next song, I should click on the right arrow icon.</think><answer>[445,1016,508,1053]</answer>".to_string(),
        "click the arrow".to_string(),
        format!("<think>{long_think}</think><answer>[10,10,40,40]</answer>"),
    ];
    for r in &rollouts {
        let b = engine.score(r, &gt);
        println!(
            "format {} solution {} length {} total {}  <- {:.50}",
            b.format, b.solution, b.length, b.total, r
        );
    }

    let n = 200_000;
    let t = Instant::now();
    let mut sum = 0u64;
    for i in 0..n {
        sum += engine.score(&rollouts[i % 3], &gt).total as u64;
    }
    let secs = t.elapsed().as_secs_f64();
    println!(
        "{n} rewards in {secs:.3}s ({:.0}/s), checksum {sum}",
        n as f64 / secs
    );
    Ok(())
}

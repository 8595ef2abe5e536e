//! Exhaustive binary expansion of a grounding benchmark: every annotation
//! with its own box (positive) and with every other box on the same
//! screenshot (negative).

use guicurate::geometry::BBox;
use guicurate::ranker::{
    expand_benchmark_binary, expected_binary_count, BenchmarkAnnotation, BenchmarkGroup,
};

fn group(image: &str, n: usize) -> BenchmarkGroup {
    BenchmarkGroup {
        image: image.into(),
        width: 1280,
        height: 720,
        annotations: (0..n)
            .map(|i| BenchmarkAnnotation {
                id: format!("{image}-{i}"),
                instruction: format!("element {i}"),
                bbox: BBox::new(10.0 * i as f64, 0.0, 10.0 * i as f64 + 8.0, 8.0).unwrap(),
            })
            .collect(),
    }
}

fn main() -> guicurate::Result<()> {
    let sizes = [1, 2, 3, 5, 8];
    let groups: Vec<_> = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| group(&format!("s{i}"), n))
        .collect();
    let exp = expand_benchmark_binary(&groups)?;
    println!(
        "group sizes {sizes:?}: {} triplets (expected {}), {:.1}% negative",
        exp.triplets.len(),
        expected_binary_count(&sizes),
        100.0 * exp.negative_fraction()
    );
    for t in exp.triplets.iter().take(4) {
        println!("  {:<8} {:?} {}", t.id, t.label, t.bbox);
    }
    Ok(())
}

//! PCA + k-means diversity selection over mock embeddings: one record per
//! cluster, the one nearest its centroid.

use guicurate::client::{ClientConfig, MockSettings, ModelClient};
use guicurate::diversity::{select_diverse, DiversityConfig, EmbeddingMatrix, EmbeddingRow};
use guicurate::fixtures::synthetic_records;

fn main() -> guicurate::Result<()> {
    let records = synthetic_records(300, 5, 9);
    let client = ModelClient::mock(ClientConfig::mock("mock-embedder"), MockSettings::default())?;
    let rows = records
        .iter()
        .map(|r| {
            Ok(EmbeddingRow {
                id: r.id.clone(),
                vector: client.embed(r)?.values,
            })
        })
        .collect::<guicurate::Result<Vec<_>>>()?;
    let matrix = EmbeddingMatrix::from_rows(rows)?;

    let cfg = DiversityConfig::default();
    let (selected, report) = select_diverse(&records, &matrix, &cfg, 1234)?;
    println!(
        "n={} k={} pca_dim={} iterations={} inertia={:.3}",
        report.n, report.k, report.pca_dim, report.iterations, report.inertia
    );
    println!("cluster sizes {:?}", report.cluster_sizes);
    for r in selected.iter().take(5) {
        println!("  {} {:?}", r.id, r.instruction);
    }
    Ok(())
}

//! Diversity selection: PCA over per-record embeddings, k-means with
//! `ceil(ratio * n)` centroids, then the record nearest each centroid.

pub mod kmeans;
pub mod pca;

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::GroundingRecord;

pub use kmeans::{run_kmeans, Clustering, KMeansParams, Rows};
pub use pca::{fit_pca_project, PcaProjection, DEFAULT_PCA_DIM};

/// Per-record vectors, rows aligned with `ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    rows: DMatrix<f64>,
}

/// Wire layout of one embedding row: `{id, vector}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub id: String,
    pub vector: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn from_rows(rows: Vec<EmbeddingRow>) -> Result<Self> {
        let d = rows.first().map(|r| r.vector.len()).unwrap_or(0);
        if rows.iter().any(|r| r.vector.len() != d) {
            return Err(Error::input("embedding rows have different lengths"));
        }
        if rows.iter().any(|r| r.vector.iter().any(|v| !v.is_finite())) {
            return Err(Error::input("non-finite embedding value"));
        }
        let n = rows.len();
        let mut m = DMatrix::zeros(n, d);
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.vector.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Ok(Self {
            ids: rows.into_iter().map(|r| r.id).collect(),
            rows: m,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    fn row_of(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// Rows are L2-normalized after projection.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiversityConfig {
    pub ratio: f64,
    pub pca_dim: usize,
    pub metric: Metric,
    pub kmeans: KMeansParams,
}

impl Default for DiversityConfig {
    fn default() -> Self {
        Self {
            ratio: 0.10,
            pca_dim: DEFAULT_PCA_DIM,
            metric: Metric::Euclidean,
            kmeans: KMeansParams::default(),
        }
    }
}

/// Clustering summary written next to the selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub n: usize,
    pub k: usize,
    pub pca_dim: usize,
    pub inertia: f64,
    pub iterations: usize,
    pub cluster_sizes: Vec<usize>,
    /// Selected id per cluster index.
    pub selected: Vec<String>,
    pub assignment: BTreeMap<String, usize>,
}

/// Number of centroids for `n` records; guards against `0.1 * 70 = 7.000…1`.
pub fn centroid_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Picks one representative per cluster.
///
/// Records are processed in id order; the representative of a cluster is
/// its member closest to the centroid, ties going to the smallest id. The
/// output is ordered by cluster index.
pub fn select_diverse(
    records: &[GroundingRecord],
    embeddings: &EmbeddingMatrix,
    config: &DiversityConfig,
    seed: u64,
) -> Result<(Vec<GroundingRecord>, DiversityReport)> {
    if !(config.ratio > 0.0 && config.ratio <= 1.0) {
        return Err(Error::input(format!(
            "diversity ratio {} outside (0, 1]",
            config.ratio
        )));
    }
    let mut sorted: Vec<&GroundingRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let n = sorted.len();
    let k = centroid_count(n, config.ratio);

    if n < 2 {
        let selected: Vec<GroundingRecord> = sorted.into_iter().cloned().collect();
        let report = DiversityReport {
            n,
            k,
            pca_dim: 0,
            inertia: 0.0,
            iterations: 0,
            cluster_sizes: vec![n; k],
            selected: selected.iter().map(|r| r.id.clone()).collect(),
            assignment: selected.iter().map(|r| (r.id.clone(), 0)).collect(),
        };
        return Ok((selected, report));
    }

    let index = embeddings.row_of();
    let mut x = DMatrix::zeros(n, embeddings.dim());
    for (i, r) in sorted.iter().enumerate() {
        let row = *index
            .get(r.id.as_str())
            .ok_or_else(|| Error::input(format!("no embedding for record {}", r.id)))?;
        x.set_row(i, &embeddings.matrix().row(row));
    }

    let (_, projected) = fit_pca_project(&x, config.pca_dim)?;
    let d = projected.ncols();
    let mut flat = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = projected.row(i);
        let norm = match config.metric {
            Metric::Euclidean => 1.0,
            Metric::Cosine => row.norm(),
        };
        let scale = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        flat.extend(row.iter().map(|v| v * scale));
    }
    let rows = Rows::new(&flat, d)?;
    let clustering = run_kmeans(rows, k, seed, config.kmeans)?;

    let mut best: Vec<Option<(usize, f64)>> = vec![None; k];
    for i in 0..n {
        let c = clustering.assignment[i];
        let dist = kmeans::sq_dist(rows.row(i), clustering.centroid(c));
        // strict `<` keeps the earliest (smallest id) index on ties
        if best[c].is_none_or(|(_, bd)| dist < bd) {
            best[c] = Some((i, dist));
        }
    }
    let picks: Vec<usize> = best
        .into_iter()
        .enumerate()
        .map(|(c, b)| {
            b.map(|(i, _)| i)
                .ok_or_else(|| Error::Consistency(format!("cluster {c} has no members")))
        })
        .collect::<Result<_>>()?;

    let selected: Vec<GroundingRecord> = picks.iter().map(|&i| sorted[i].clone()).collect();
    let report = DiversityReport {
        n,
        k,
        pca_dim: d,
        inertia: clustering.inertia,
        iterations: clustering.iterations,
        cluster_sizes: clustering.cluster_sizes(),
        selected: selected.iter().map(|r| r.id.clone()).collect(),
        assignment: sorted
            .iter()
            .zip(&clustering.assignment)
            .map(|(r, &c)| (r.id.clone(), c))
            .collect(),
    };
    Ok((selected, report))
}

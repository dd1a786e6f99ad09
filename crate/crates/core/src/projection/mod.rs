//! Two-dimensional projections of embeddings.
//!
//! Four algorithms are available: exact PCA, UMAP, exact t-SNE and the
//! composite PCA→UMAP. All of them are deterministic for a given
//! `random_state`: neighbor search is exact with `(distance, index)` tie
//! breaking and every stochastic loop runs as a single seeded sequence.

mod knn;
mod pca;
mod quality;
mod tsne;
mod umap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::columnar::{Column, Table};
use crate::encoder::EmbeddingMatrix;
use crate::fingerprint::Fingerprint;

pub use knn::{exact_knn, KnnGraph};
pub use pca::{pca, PcaResult};
pub use quality::trustworthiness;
pub use tsne::{tsne, TSNE_MAX_POINTS};
pub use umap::{fit_curve_params, fuzzy_graph, umap, FuzzyGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("need more than {required} points, got {got}")]
    TooFewPoints { required: usize, got: usize },
    #[error("exact t-SNE accepts at most {max} points, got {got}; use UMAP or PCA")]
    TooManyPoints { max: usize, got: usize },
    #[error("input contains NaN or infinite values")]
    NaNInput,
    #[error("input is degenerate: {0}")]
    DegenerateInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("neighborhood size {k} must be below half of {m} points")]
    KTooLarge { k: usize, m: usize },
    #[error("projection produced non-finite coordinates")]
    NonFiniteOutput,
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Umap,
    Tsne,
    Pca,
    PcaThenUmap,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Umap => "umap",
            Algorithm::Tsne => "tsne",
            Algorithm::Pca => "pca",
            Algorithm::PcaThenUmap => "pca_then_umap",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "umap" => Ok(Algorithm::Umap),
            "tsne" => Ok(Algorithm::Tsne),
            "pca" => Ok(Algorithm::Pca),
            "pca_then_umap" => Ok(Algorithm::PcaThenUmap),
            other => Err(format!("unknown projection algorithm `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrParams {
    pub algorithm: Algorithm,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub random_state: u64,
    pub pca_pre_dims: usize,
    pub tsne_perplexity: f64,
}

impl Default for DrParams {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Umap,
            n_neighbors: 15,
            min_dist: 0.1,
            random_state: 0,
            pca_pre_dims: 50,
            tsne_perplexity: 30.0,
        }
    }
}

impl DrParams {
    pub fn with_algorithm(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
    }

    /// Checks the parameters against a point count.
    pub fn validate(&self, m: usize) -> Result<(), ProjectionError> {
        let uses_umap = matches!(self.algorithm, Algorithm::Umap | Algorithm::PcaThenUmap);
        if uses_umap {
            if self.n_neighbors < 2 {
                return Err(ProjectionError::InvalidParam("n_neighbors must be >= 2".into()));
            }
            if !(0.0..1.0).contains(&self.min_dist) {
                return Err(ProjectionError::InvalidParam("min_dist must be in [0, 1)".into()));
            }
            if self.n_neighbors >= m {
                return Err(ProjectionError::TooFewPoints {
                    required: self.n_neighbors,
                    got: m,
                });
            }
        }
        if self.algorithm == Algorithm::PcaThenUmap && self.pca_pre_dims == 0 {
            return Err(ProjectionError::InvalidParam("pca_pre_dims must be >= 1".into()));
        }
        if self.algorithm == Algorithm::Tsne {
            if m > TSNE_MAX_POINTS {
                return Err(ProjectionError::TooManyPoints {
                    max: TSNE_MAX_POINTS,
                    got: m,
                });
            }
            if !(self.tsne_perplexity > 0.0) || self.tsne_perplexity >= (m as f64 - 1.0) / 3.0 {
                return Err(ProjectionError::InvalidParam(format!(
                    "perplexity must be in (0, {:.3}) for {m} points",
                    (m as f64 - 1.0) / 3.0
                )));
            }
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of_params("dr-params", self)
    }
}

/// Thread budget for projection work. Outputs do not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threads {
    /// Run on the calling thread only.
    #[serde(rename = "1")]
    Single,
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    pub coords: Array2<f64>,
    pub fingerprint: Fingerprint,
}

impl ProjectionMatrix {
    pub fn rows(&self) -> usize {
        self.coords.nrows()
    }

    pub fn to_table(&self) -> Table {
        Table::new(vec![
            Column::f64("x", self.coords.column(0).to_vec()),
            Column::f64("y", self.coords.column(1).to_vec()),
        ])
    }
}

pub(crate) fn check_finite(x: ArrayView2<f64>) -> Result<(), ProjectionError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ProjectionError::NaNInput)
    }
}

/// Runs the configured algorithm on a raw matrix.
pub fn project_array(x: ArrayView2<f64>, params: &DrParams) -> Result<Array2<f64>, ProjectionError> {
    check_finite(x)?;
    params.validate(x.nrows())?;
    let coords = match params.algorithm {
        Algorithm::Pca => pca(x, 2.min(x.ncols()))?.scores,
        Algorithm::Umap => umap(x, params)?,
        Algorithm::Tsne => tsne(x, params)?,
        Algorithm::PcaThenUmap => {
            let dims = params.pca_pre_dims.min(x.ncols()).min(x.nrows());
            let reduced = pca(x, dims)?.scores;
            umap(reduced.view(), params)?
        }
    };
    let coords = if coords.ncols() < 2 {
        // One-dimensional input: pad with a zero column.
        let mut padded = Array2::zeros((coords.nrows(), 2));
        padded.column_mut(0).assign(&coords.column(0));
        padded
    } else {
        coords
    };
    if !coords.iter().all(|v| v.is_finite()) {
        return Err(ProjectionError::NonFiniteOutput);
    }
    Ok(coords)
}

/// Projects embeddings to 2-D and fingerprints the result.
pub fn project(embedding: &EmbeddingMatrix, params: &DrParams) -> Result<ProjectionMatrix, ProjectionError> {
    let coords = project_array(embedding.data.view(), params)?;
    Ok(ProjectionMatrix {
        coords,
        fingerprint: Fingerprint::combine("project", &[embedding.fingerprint], &params.fingerprint()),
    })
}

/// As [`project`], inside a thread pool sized by `threads`.
pub fn project_with_threads(
    embedding: &EmbeddingMatrix,
    params: &DrParams,
    threads: Threads,
) -> Result<ProjectionMatrix, ProjectionError> {
    match threads {
        Threads::Auto => project(embedding, params),
        Threads::Single => rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| ProjectionError::ThreadPool(e.to_string()))?
            .install(|| project(embedding, params)),
    }
}

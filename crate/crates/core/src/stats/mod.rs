//! Mixed-model estimation and benchmark screening statistics.

pub mod bhpr;
pub mod design;
pub mod fdr;
pub mod glmm;
pub mod linalg;
pub mod lrt;
pub mod optim;
pub mod quadrature;
pub mod residuals;
pub mod screening;

use thiserror::Error;

pub use bhpr::{bhpr, BhprResult};
pub use design::{Coding, Design, Factor, GroupingKey, ModelSpec, Term};
pub use fdr::bh_fdr;
pub use glmm::{fit_glmm, marginal_loglik, marginal_loglik_grad, predict_cell, FitOptions, GlmmFit};
pub use lrt::{likelihood_ratio_test, LrtResult};
pub use residuals::{residual_cells, CellStatus, ResidualCell, ResidualGrouping, ResidualOptions, ResidualReport};
pub use screening::{
    delta_bloom, delta_model, rank_stability, screen_practices, DeltaModelSource, PracticeScreen, RankStability,
    ScreeningReport, Thresholds,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no trials")]
    EmptyInput,
    #[error("factor {factor} needs at least two observed levels, found {found}")]
    TooFewLevels { factor: String, found: usize },
    #[error("unknown {factor} level `{level}`")]
    UnknownLevel { factor: String, level: String },
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("unknown practice `{0}`")]
    UnknownPractice(String),
    #[error("non-finite likelihood in group `{group}`")]
    NonFinite { group: String },
    #[error("practice `{practice}` has no trials at Bloom level {level}")]
    MissingBloomLevel { practice: String, level: String },
    #[error("models are not nested: {0}")]
    NotNested(String),
    #[error("refit did not converge: {0}")]
    RefitFailed(String),
}

/// Two-sided normal tail probability `P(|Z| > |z|)`.
pub fn normal_two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2)
}

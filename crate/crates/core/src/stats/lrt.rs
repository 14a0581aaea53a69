//! Likelihood-ratio comparison of nested GLMM fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::glmm::GlmmFit;
use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub delta_chi2: f64,
    pub df: usize,
    pub p_value: f64,
}

/// `2 (ℓ_alt − ℓ_null)` referred to χ² with the parameter-count difference.
pub fn likelihood_ratio_test(null: &GlmmFit, alt: &GlmmFit) -> Result<LrtResult, StatsError> {
    if null.n_obs != alt.n_obs {
        return Err(StatsError::NotNested(format!(
            "fitted to different data ({} vs {} trials)",
            null.n_obs, alt.n_obs
        )));
    }
    if null.spec().grouping != alt.spec().grouping || null.sigma_estimated != alt.sigma_estimated {
        return Err(StatsError::NotNested("random-effect structures differ".into()));
    }
    if let Some(extra) = null
        .coefficients
        .iter()
        .find(|c| alt.coefficient(&c.name).is_none())
    {
        return Err(StatsError::NotNested(format!("`{}` absent from the larger model", extra.name)));
    }
    let df = alt.n_params() - null.n_params();
    let delta_chi2 = (2.0 * (alt.loglik - null.loglik)).max(0.0);
    let p_value = if df == 0 {
        1.0
    } else {
        ChiSquared::new(df as f64).expect("df > 0").sf(delta_chi2)
    };
    Ok(LrtResult { delta_chi2, df, p_value })
}

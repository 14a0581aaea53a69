//! Binomial GLMM with one Gaussian random intercept per group, fitted by
//! maximising the marginal likelihood.
//!
//! Each group contributes a one-dimensional integral
//!
//! ```text
//! L_g = ∫ Π_c p_c(u)^{y_c} (1 - p_c(u))^{n_c - y_c} φ(u; 0, σ²) du,   p_c(u) = logistic(η_c + u)
//! ```
//!
//! evaluated by adaptive Gauss–Hermite quadrature: nodes are centred at the
//! mode `û` of the integrand and scaled by `ŝ = (-h''(û))^{-1/2}`. The
//! gradient returned here is the exact derivative of that quadrature value,
//! including the dependence of `û` and `ŝ` on the parameters, so it agrees
//! with finite differences of [`marginal_loglik`] to rounding error.
//!
//! Parameters are packed as `[β_0, β_1, …, β_{p-1}, ln σ]`.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use super::design::{Coding, Design, Factor, ModelSpec};
use super::optim::{max_norm, minimize, Bounds, MinimizeOptions};
use super::quadrature::GaussHermite;
use super::{linalg, normal_two_sided_p, StatsError};
use crate::corpus::TrialRecord;

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn log1pexp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Bernoulli log-likelihood of one cell at linear predictor `eta`.
fn cell_loglik(y: f64, n: f64, eta: f64) -> f64 {
    y * eta - n * log1pexp(eta)
}

struct GroupMode {
    u: f64,
    /// `-h''(û)`
    curvature: f64,
}

/// Mode of `h(u) = Σ_c ℓ_c(η_c + u) + ln φ(u; 0, σ²)` by damped Newton.
fn group_mode(design: &Design, range: std::ops::Range<usize>, eta: &[f64], sigma: f64) -> Option<GroupMode> {
    let prec = 1.0 / (sigma * sigma);
    let h = |u: f64| -> f64 {
        let mut s = -0.5 * u * u * prec;
        for c in range.clone() {
            s += cell_loglik(design.cells[c].successes, design.cells[c].trials, eta[c] + u);
        }
        s
    };
    let mut u = 0.0;
    let mut hu = h(u);
    for _ in 0..200 {
        let mut grad = -u * prec;
        let mut curv = prec;
        for c in range.clone() {
            let cell = &design.cells[c];
            let p = logistic(eta[c] + u);
            grad += cell.successes - cell.trials * p;
            curv += cell.trials * p * (1.0 - p);
        }
        let step = grad / curv;
        if !step.is_finite() {
            return None;
        }
        let mut t = 1.0;
        let mut next = u + step;
        let mut h_next = h(next);
        while h_next < hu - 1e-12 * hu.abs().max(1.0) && t > 1e-8 {
            t *= 0.5;
            next = u + t * step;
            h_next = h(next);
        }
        u = next;
        hu = h_next;
        if (t * step).abs() < 1e-13 * u.abs().max(1.0) {
            break;
        }
    }
    let mut curv = prec;
    for c in range {
        let cell = &design.cells[c];
        let p = logistic(eta[c] + u);
        curv += cell.trials * p * (1.0 - p);
    }
    Some(GroupMode { u, curvature: curv })
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Random-intercept treatment for one objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaMode {
    /// `ln σ` is the last free parameter.
    Free,
    /// σ held at the given value (0 gives plain logistic regression).
    Fixed(f64),
}

/// Marginal log-likelihood at `params = [β…, ln σ]`.
pub fn marginal_loglik(params: &[f64], design: &Design, rule: &GaussHermite) -> Result<f64, StatsError> {
    evaluate(params, design, rule, false).map(|(v, _)| v)
}

/// Marginal log-likelihood and its gradient with respect to `[β…, ln σ]`.
pub fn marginal_loglik_grad(
    params: &[f64],
    design: &Design,
    rule: &GaussHermite,
) -> Result<(f64, Vec<f64>), StatsError> {
    evaluate(params, design, rule, true)
}

/// Plain logistic log-likelihood (σ = 0) and gradient over β.
pub fn fixed_effects_loglik_grad(beta: &[f64], design: &Design) -> (f64, Vec<f64>) {
    let mut ll = 0.0;
    let mut grad = vec![0.0; beta.len()];
    for cell in &design.cells {
        let eta = design.eta(cell, beta);
        ll += cell_loglik(cell.successes, cell.trials, eta);
        let r = cell.successes - cell.trials * logistic(eta);
        for &j in &cell.cols {
            grad[j] += r;
        }
    }
    (ll, grad)
}

fn evaluate(
    params: &[f64],
    design: &Design,
    rule: &GaussHermite,
    want_grad: bool,
) -> Result<(f64, Vec<f64>), StatsError> {
    let p = design.n_fixed();
    assert_eq!(params.len(), p + 1, "params must be [beta..., ln sigma]");
    let beta = &params[..p];
    let rho = params[p];
    let sigma = rho.exp();
    let prec = 1.0 / (sigma * sigma);
    let eta: Vec<f64> = design.cells.iter().map(|c| design.eta(c, beta)).collect();

    let k = rule.len();
    let mut total = 0.0;
    let mut grad = vec![0.0; p + 1];
    let mut log_terms = vec![0.0; k];
    let mut nodes_u = vec![0.0; k];

    for (g, range) in design.group_ranges.iter().enumerate() {
        let mode = group_mode(design, range.clone(), &eta, sigma).ok_or_else(|| StatsError::NonFinite {
            group: design.groups[g].clone(),
        })?;
        let big_h = mode.curvature;
        let s_hat = big_h.powf(-0.5);
        for i in 0..k {
            let u = mode.u + std::f64::consts::SQRT_2 * s_hat * rule.nodes[i];
            nodes_u[i] = u;
            let mut h = -0.5 * u * u * prec - rho - LN_SQRT_2PI;
            for c in range.clone() {
                h += cell_loglik(design.cells[c].successes, design.cells[c].trials, eta[c] + u);
            }
            log_terms[i] = rule.log_weight_plus_sq[i] + h;
        }
        let lse = log_sum_exp(&log_terms);
        let value = 0.5 * LN_2 + s_hat.ln() + lse;
        if !value.is_finite() {
            return Err(StatsError::NonFinite {
                group: design.groups[g].clone(),
            });
        }
        total += value;
        if !want_grad {
            continue;
        }

        // posterior weights over nodes
        let weights: Vec<f64> = log_terms.iter().map(|l| (l - lse).exp()).collect();

        // per-cell quantities at the mode
        let mut sum_t = 0.0;
        let n_cells = range.len();
        let mut v_at_mode = Vec::with_capacity(n_cells);
        let mut t_at_mode = Vec::with_capacity(n_cells);
        for c in range.clone() {
            let cell = &design.cells[c];
            let pr = logistic(eta[c] + mode.u);
            let v = cell.trials * pr * (1.0 - pr);
            let t = v * (1.0 - 2.0 * pr);
            sum_t += t;
            v_at_mode.push(v);
            t_at_mode.push(t);
        }

        // E_π[y - μ(u_k)] per cell, E_π[h_u], E_π[h_u · √2 x_k], E_π[u_k²]
        let mut resid = vec![0.0; n_cells];
        let mut a_term = 0.0;
        let mut b_term = 0.0;
        let mut e_u2 = 0.0;
        for i in 0..k {
            let u = nodes_u[i];
            let w = weights[i];
            if w == 0.0 {
                continue;
            }
            let mut h_u = -u * prec;
            for (j, c) in range.clone().enumerate() {
                let cell = &design.cells[c];
                let r = cell.successes - cell.trials * logistic(eta[c] + u);
                resid[j] += w * r;
                h_u += r;
            }
            a_term += w * h_u;
            b_term += w * h_u * std::f64::consts::SQRT_2 * rule.nodes[i];
            e_u2 += w * u * u;
        }

        // fixed effects
        let mut col_v = vec![0.0; p];
        let mut col_t = vec![0.0; p];
        let mut col_r = vec![0.0; p];
        for (j, c) in range.clone().enumerate() {
            for &col in &design.cells[c].cols {
                col_v[col] += v_at_mode[j];
                col_t[col] += t_at_mode[j];
                col_r[col] += resid[j];
            }
        }
        for col in 0..p {
            let du = -col_v[col] / big_h;
            let dh = col_t[col] + sum_t * du;
            let ds_over_s = -0.5 * dh / big_h;
            let ds = s_hat * ds_over_s;
            grad[col] += ds_over_s + col_r[col] + a_term * du + b_term * ds;
        }
        // ln σ
        let du = 2.0 * mode.u * prec / big_h;
        let dh = -2.0 * prec + sum_t * du;
        let ds_over_s = -0.5 * dh / big_h;
        let ds = s_hat * ds_over_s;
        grad[p] += ds_over_s + (e_u2 * prec - 1.0) + a_term * du + b_term * ds;
    }
    if !total.is_finite() {
        return Err(StatsError::NonFinite { group: "<total>".into() });
    }
    Ok((total, grad))
}

/// Posterior modes of the random intercepts at `params`.
pub fn group_modes(params: &[f64], design: &Design) -> Result<Vec<f64>, StatsError> {
    let p = design.n_fixed();
    let beta = &params[..p];
    let sigma = params[p].exp();
    let eta: Vec<f64> = design.cells.iter().map(|c| design.eta(c, beta)).collect();
    design
        .group_ranges
        .iter()
        .enumerate()
        .map(|(g, r)| {
            group_mode(design, r.clone(), &eta, sigma)
                .map(|m| m.u)
                .ok_or_else(|| StatsError::NonFinite {
                    group: design.groups[g].clone(),
                })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub quad_nodes: usize,
    /// Convergence threshold on the max-norm of the (projected) gradient.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Bound on |β| and on fitted linear predictors under separation.
    pub coef_cap: f64,
    /// `None` estimates σ; `Some(s)` holds it at `s`.
    pub fixed_sigma: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            quad_nodes: 15,
            grad_tol: 1e-6,
            max_iter: 500,
            coef_cap: 15.0,
            fixed_sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmmFit {
    pub coding: Coding,
    /// Intercept first, then one entry per design column.
    pub coefficients: Vec<Coefficient>,
    pub sigma: f64,
    pub sigma_std_error: f64,
    pub sigma_estimated: bool,
    pub blups: BTreeMap<String, f64>,
    pub loglik: f64,
    pub converged: bool,
    pub n_iterations: usize,
    pub gradient_norm: f64,
    pub n_obs: usize,
    pub quad_nodes: usize,
    pub warnings: Vec<String>,
}

impl GlmmFit {
    pub fn spec(&self) -> &ModelSpec {
        &self.coding.spec
    }

    pub fn beta0(&self) -> f64 {
        self.coefficients[0].estimate
    }

    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    /// Estimate for `factor[level]`; 0 for the reference level.
    pub fn effect(&self, factor: Factor, level: &str) -> Option<f64> {
        if self.coding.levels.get(&factor)?.first()? == level {
            return Some(0.0);
        }
        self.coefficient(&format!("{factor}[{level}]")).map(|c| c.estimate)
    }

    /// Number of estimated parameters (fixed effects plus σ when free).
    pub fn n_params(&self) -> usize {
        self.coefficients.len() + usize::from(self.sigma_estimated)
    }

    pub fn linear_predictor(&self, assignment: &BTreeMap<Factor, String>) -> Result<f64, StatsError> {
        let cols = self.coding.active_columns(assignment)?;
        Ok(cols.iter().map(|&c| self.coefficients[c].estimate).sum())
    }

    pub fn blup(&self, group: &str) -> Result<f64, StatsError> {
        self.blups
            .get(group)
            .copied()
            .ok_or_else(|| StatsError::UnknownGroup(group.to_string()))
    }

    /// Fitted probability for a trial, including its group's BLUP.
    pub fn fitted(&self, trial: &TrialRecord) -> Result<f64, StatsError> {
        let eta = self.linear_predictor(&self.coding.assignment_of(trial))?;
        let u = self.blup(&self.spec().grouping.group_of(trial))?;
        Ok(logistic(eta + u))
    }
}

/// `logistic(β_0 + Σ β[levels] + u[group])`.
pub fn predict_cell(fit: &GlmmFit, levels: &[(Factor, &str)], group: &str) -> Result<f64, StatsError> {
    let assignment: BTreeMap<Factor, String> = levels.iter().map(|(f, l)| (*f, l.to_string())).collect();
    let eta = fit.linear_predictor(&assignment)?;
    Ok(logistic(eta + fit.blup(group)?))
}

/// Starting values from a few Newton steps of pooled logistic regression.
fn logistic_start(design: &Design, cap: f64) -> Vec<f64> {
    let p = design.n_fixed();
    let mut beta = vec![0.0; p];
    for _ in 0..25 {
        let mut info = vec![vec![0.0; p]; p];
        let (_, grad) = fixed_effects_loglik_grad(&beta, design);
        for cell in &design.cells {
            let pr = logistic(design.eta(cell, &beta));
            let w = cell.trials * pr * (1.0 - pr);
            for &a in &cell.cols {
                for &b in &cell.cols {
                    info[a][b] += w;
                }
            }
        }
        for (i, row) in info.iter_mut().enumerate() {
            row[i] += 1e-6;
        }
        let Some(l) = linalg::cholesky(&info) else { break };
        let step = linalg::cholesky_solve(&l, &grad);
        let mut change = 0.0f64;
        for j in 0..p {
            beta[j] = (beta[j] + step[j]).clamp(-cap, cap);
            change = change.max(step[j].abs());
        }
        if change < 1e-8 {
            break;
        }
    }
    beta
}

/// Factor levels whose trials are all correct or all incorrect.
fn separation_warnings(trials: &[TrialRecord], coding: &Coding) -> Vec<String> {
    let mut out = Vec::new();
    let correct = trials.iter().filter(|t| t.correct).count();
    if correct == 0 || correct == trials.len() {
        out.push(format!(
            "complete separation: all {} outcomes are {}; coefficients capped",
            trials.len(),
            if correct == 0 { "incorrect" } else { "correct" }
        ));
        return out;
    }
    for factor in coding.levels.keys() {
        let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for t in trials {
            let e = tally.entry(factor.level_of(t)).or_default();
            e.0 += usize::from(t.correct);
            e.1 += 1;
        }
        for (level, (c, n)) in tally {
            if c == 0 || c == n {
                out.push(format!(
                    "separation: {factor}[{level}] has all {} outcomes {}; coefficient capped",
                    n,
                    if c == 0 { "incorrect" } else { "correct" }
                ));
            }
        }
    }
    out
}

pub fn fit_glmm(trials: &[TrialRecord], spec: &ModelSpec, options: &FitOptions) -> Result<GlmmFit, StatsError> {
    let design = Design::build(trials, spec)?;
    fit_design(&design, trials, options)
}

pub fn fit_design(design: &Design, trials: &[TrialRecord], options: &FitOptions) -> Result<GlmmFit, StatsError> {
    let rule = GaussHermite::new(options.quad_nodes.max(1));
    let p = design.n_fixed();
    let cap = options.coef_cap;
    let warnings = separation_warnings(trials, &design.coding);

    let beta_start = logistic_start(design, cap);
    let sigma_free = options.fixed_sigma.is_none();
    let fixed_zero = matches!(options.fixed_sigma, Some(s) if s <= 0.0);
    let rho_fixed = options.fixed_sigma.filter(|s| *s > 0.0).map(f64::ln);

    let mut x0 = beta_start.clone();
    if sigma_free {
        x0.push(0.0);
    }
    let mut lower = vec![-cap; p];
    let mut upper = vec![cap; p];
    if sigma_free {
        lower.push((1e-4f64).ln());
        upper.push((50.0f64).ln());
    }
    let bounds = Bounds { lower, upper };

    let mut objective = |x: &[f64]| -> Result<(f64, Vec<f64>), StatsError> {
        if fixed_zero {
            let (ll, g) = fixed_effects_loglik_grad(x, design);
            return Ok((-ll, g.into_iter().map(|v| -v).collect()));
        }
        let mut full = x.to_vec();
        if let Some(r) = rho_fixed {
            full.push(r);
        }
        let (ll, g) = marginal_loglik_grad(&full, design, &rule)?;
        let mut neg: Vec<f64> = g.into_iter().map(|v| -v).collect();
        if !sigma_free {
            neg.truncate(p);
        }
        Ok((-ll, neg))
    };

    let min = minimize(
        &mut objective,
        &x0,
        &bounds,
        &MinimizeOptions {
            grad_tol: options.grad_tol,
            max_iter: options.max_iter,
            polish_steps: 8,
        },
    )?;
    let converged = min.projected_grad_norm < options.grad_tol;

    let mut warnings = warnings;
    if !converged {
        warnings.push(format!(
            "did not converge: gradient max-norm {:.3e} after {} iterations",
            min.projected_grad_norm, min.iterations
        ));
    }
    if min.x[..p].iter().any(|b| b.abs() >= cap) {
        warnings.push(format!("coefficient reached cap |beta| = {cap}"));
    }

    let covariance = min.hessian.as_ref().and_then(linalg::inverse_spd);
    if covariance.is_none() {
        warnings.push("observed information is not positive definite; standard errors unavailable".into());
    }
    let se = |i: usize| -> f64 {
        covariance
            .as_ref()
            .map(|c| c[i][i])
            .filter(|v| *v > 0.0)
            .map(f64::sqrt)
            .unwrap_or(f64::NAN)
    };

    let coefficients = design
        .coding
        .columns
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let estimate = min.x[i];
            let std_error = se(i);
            let z = estimate / std_error;
            Coefficient {
                name: name.clone(),
                estimate,
                std_error,
                z,
                p_value: normal_two_sided_p(z),
            }
        })
        .collect();

    let (sigma, sigma_std_error) = if sigma_free {
        let s = min.x[p].exp();
        (s, s * se(p))
    } else {
        (options.fixed_sigma.unwrap_or(0.0).max(0.0), 0.0)
    };

    let blups = if fixed_zero {
        design.groups.iter().map(|g| (g.clone(), 0.0)).collect()
    } else {
        let mut full = min.x[..p].to_vec();
        full.push(sigma.ln());
        let modes = group_modes(&full, design)?;
        design.groups.iter().cloned().zip(modes).collect()
    };

    Ok(GlmmFit {
        coding: design.coding.clone(),
        coefficients,
        sigma,
        sigma_std_error,
        sigma_estimated: sigma_free,
        blups,
        loglik: -min.value,
        converged,
        n_iterations: min.iterations,
        gradient_norm: max_norm(&min.gradient),
        n_obs: design.n_obs,
        quad_nodes: rule.len(),
        warnings,
    })
}

/// Log-density of `N(0, σ²)`; used by the tests' brute-force integrals.
pub fn normal_log_density(u: f64, sigma: f64) -> f64 {
    -0.5 * (u / sigma).powi(2) - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Bloom, Domain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trial(model: &str, bloom: Bloom, practice: &str, correct: bool) -> TrialRecord {
        TrialRecord {
            model_id: model.into(),
            mcq_id: format!("{practice}-{}-{model}", bloom.as_str()),
            scenario_id: practice.into(),
            practice_id: practice.into(),
            bloom,
            domain: Domain::Teaching,
            chosen_label: Some(if correct { 'A' } else { 'B' }),
            correct_label: 'A',
            correct,
            raw_response: String::new(),
            error: None,
        }
    }

    fn random_trials(seed: u64, n_practices: usize, per_cell: usize) -> Vec<TrialRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models = ["m0", "m1", "m2"];
        let effects = [0.0, -0.8, 0.5];
        let bloom_eff = [0.3, 0.0, -0.4, -0.9];
        let mut out = Vec::new();
        for p in 0..n_practices {
            let u: f64 = rng.random_range(-1.5..1.5);
            for (mi, m) in models.iter().enumerate() {
                for b in Bloom::ALL {
                    for _ in 0..per_cell {
                        let pr = logistic(0.7 + effects[mi] + bloom_eff[b.rank()] + u);
                        out.push(trial(m, b, &format!("P{p:02}"), rng.random::<f64>() < pr));
                    }
                }
            }
        }
        out
    }

    /// Trapezoid rule on a fine grid over [-10σ, 10σ].
    fn trapezoid_group_loglik(cells: &[(f64, f64, f64)], sigma: f64) -> f64 {
        let n = 200_000;
        let (a, b) = (-10.0 * sigma, 10.0 * sigma);
        let h = (b - a) / n as f64;
        let f = |u: f64| -> f64 {
            let mut l = normal_log_density(u, sigma);
            for &(y, m, eta) in cells {
                l += cell_loglik(y, m, eta + u);
            }
            l.exp()
        };
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..n {
            s += f(a + i as f64 * h);
        }
        (s * h).ln()
    }

    #[test]
    fn single_trial_matches_trapezoid() {
        let trials = vec![trial("m0", Bloom::Apply, "P", true), trial("m1", Bloom::Analyze, "Q", false)];
        let design = Design::build(&trials, &ModelSpec::model_bloom()).unwrap();
        let rule = GaussHermite::new(15);
        // beta0 = 0, other coefficients 0, sigma = 1
        let params = vec![0.0; design.n_fixed() + 1];
        let ll = marginal_loglik(&params, &design, &rule).unwrap();
        let oracle = trapezoid_group_loglik(&[(1.0, 1.0, 0.0)], 1.0) + trapezoid_group_loglik(&[(0.0, 1.0, 0.0)], 1.0);
        assert!((ll - oracle).abs() < 1e-8, "{ll} vs {oracle}");
        // by symmetry each group integrates to 1/2
        assert!((ll - 2.0 * 0.5f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn multi_cell_group_matches_trapezoid() {
        let trials = random_trials(3, 2, 3);
        let design = Design::build(&trials, &ModelSpec::model_bloom()).unwrap();
        let rule = GaussHermite::new(15);
        let mut params: Vec<f64> = (0..design.n_fixed()).map(|i| 0.1 * i as f64 - 0.2).collect();
        params.push(0.8f64.ln());
        let ll = marginal_loglik(&params, &design, &rule).unwrap();
        let mut oracle = 0.0;
        for range in &design.group_ranges {
            let cells: Vec<(f64, f64, f64)> = design.cells[range.clone()]
                .iter()
                .map(|c| (c.successes, c.trials, design.eta(c, &params[..design.n_fixed()])))
                .collect();
            oracle += trapezoid_group_loglik(&cells, 0.8);
        }
        assert!((ll - oracle).abs() < 1e-6, "{ll} vs {oracle}");
    }

    #[test]
    fn vanishing_sigma_gives_logistic_likelihood() {
        let trials = random_trials(5, 4, 2);
        let design = Design::build(&trials, &ModelSpec::model_bloom()).unwrap();
        let rule = GaussHermite::new(15);
        let beta: Vec<f64> = (0..design.n_fixed()).map(|i| 0.05 * i as f64).collect();
        let mut params = beta.clone();
        params.push((1e-7f64).ln());
        let ll = marginal_loglik(&params, &design, &rule).unwrap();
        let (plain, _) = fixed_effects_loglik_grad(&beta, &design);
        assert!((ll - plain).abs() < 1e-8, "{ll} vs {plain}");
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let trials = random_trials(11, 6, 2);
        let design = Design::build(&trials, &ModelSpec::model_bloom()).unwrap();
        let rule = GaussHermite::new(15);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let params: Vec<f64> = (0..=design.n_fixed())
                .map(|i| if i == design.n_fixed() { rng.random_range(-1.5..1.2) } else { rng.random_range(-2.0..2.0) })
                .collect();
            let (_, grad) = marginal_loglik_grad(&params, &design, &rule).unwrap();
            for j in 0..params.len() {
                let h = 1e-5;
                let mut up = params.clone();
                up[j] += h;
                let mut dn = params.clone();
                dn[j] -= h;
                let fd = (marginal_loglik(&up, &design, &rule).unwrap() - marginal_loglik(&dn, &design, &rule).unwrap())
                    / (2.0 * h);
                let scale = fd.abs().max(grad[j].abs()).max(1.0);
                assert!((fd - grad[j]).abs() / scale < 1e-5, "coord {j}: fd {fd} analytic {}", grad[j]);
            }
        }
    }

    #[test]
    fn fixed_zero_sigma_matches_logistic_regression() {
        let trials = random_trials(7, 5, 3);
        let opts = FitOptions {
            fixed_sigma: Some(0.0),
            ..FitOptions::default()
        };
        let fit = fit_glmm(&trials, &ModelSpec::model_bloom(), &opts).unwrap();
        assert!(fit.converged);
        // independent IRLS on the raw trials
        let design = Design::build(&trials, &ModelSpec::model_bloom()).unwrap();
        let beta = logistic_start(&design, 15.0);
        for (c, b) in fit.coefficients.iter().zip(&beta) {
            assert!((c.estimate - b).abs() < 1e-6, "{} {} {}", c.name, c.estimate, b);
        }
        assert!(fit.blups.values().all(|u| *u == 0.0));
    }

    #[test]
    fn reference_level_does_not_change_fitted_probabilities() {
        let trials = random_trials(13, 8, 2);
        let a = fit_glmm(&trials, &ModelSpec::model_bloom(), &FitOptions::default()).unwrap();
        let spec_b = ModelSpec::model_bloom()
            .with_reference(Factor::Model, "m2")
            .with_reference(Factor::Bloom, "remember");
        let b = fit_glmm(&trials, &spec_b, &FitOptions::default()).unwrap();
        assert!(a.converged && b.converged);
        assert_ne!(a.coefficients[0].estimate, b.coefficients[0].estimate);
        for t in &trials {
            let (pa, pb) = (a.fitted(t).unwrap(), b.fitted(t).unwrap());
            assert!((pa - pb).abs() < 1e-8, "{pa} vs {pb}");
        }
        assert!((a.loglik - b.loglik).abs() < 1e-8);
    }

    #[test]
    fn all_correct_warns_without_crashing() {
        let trials: Vec<TrialRecord> = random_trials(1, 3, 1).into_iter().map(|mut t| {
            t.correct = true;
            t
        }).collect();
        let fit = fit_glmm(&trials, &ModelSpec::model_bloom(), &FitOptions::default()).unwrap();
        assert!(fit.warnings.iter().any(|w| w.contains("separation")));
        for t in &trials {
            let p = fit.fitted(t).unwrap();
            assert!(p > 0.0 && p <= 1.0);
        }
    }

    #[test]
    fn predict_cell_identities() {
        let trials = random_trials(2, 4, 2);
        let fit = fit_glmm(&trials, &ModelSpec::model_bloom(), &FitOptions::default()).unwrap();
        let g = fit.blups.keys().next().unwrap().clone();
        let p = predict_cell(&fit, &[(Factor::Model, "m0"), (Factor::Bloom, "analyze")], &g).unwrap();
        assert!((p - logistic(fit.beta0() + fit.blups[&g])).abs() < 1e-15);
        assert!(matches!(
            predict_cell(&fit, &[(Factor::Model, "zz"), (Factor::Bloom, "analyze")], &g),
            Err(StatsError::UnknownLevel { .. })
        ));
        assert!(matches!(
            predict_cell(&fit, &[(Factor::Model, "m0"), (Factor::Bloom, "analyze")], "nope"),
            Err(StatsError::UnknownGroup(_))
        ));
    }
}

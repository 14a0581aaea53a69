//! Per-practice screening: model separation, Bloom separation, below-chance
//! baselines, and ranking stability after dropping flagged practices.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::design::{Factor, GroupingKey, ModelSpec};
use super::glmm::{fit_glmm, logistic, FitOptions, GlmmFit};
use super::StatsError;
use crate::corpus::{Bloom, TrialRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub chance: f64,
    pub model_separation: f64,
    pub model_separation_strong: f64,
    pub bloom_separation: f64,
    pub bloom_negligible: f64,
}

impl Thresholds {
    pub fn with_chance(chance: f64) -> Self {
        Self {
            chance,
            model_separation: 0.20,
            model_separation_strong: 0.50,
            bloom_separation: 0.30,
            bloom_negligible: 0.10,
        }
    }
}

/// Fit whose random intercepts feed the model spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaModelSource {
    /// The screening fit itself: spreads come only from fixed model effects
    /// shifted by the practice intercept.
    PracticeFit,
    /// A companion fit with the same fixed effects and one intercept per
    /// model-practice pair, so each model can deviate on each practice.
    #[default]
    ModelPracticeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    pub thresholds: Thresholds,
    pub delta_model_source: DeltaModelSource,
    pub fit_options: FitOptions,
    pub rank_stability: bool,
}

impl ScreeningConfig {
    pub fn new(thresholds: Thresholds) -> Self {
        Self {
            thresholds,
            delta_model_source: DeltaModelSource::default(),
            fit_options: FitOptions::default(),
            rank_stability: true,
        }
    }
}

/// Observed combinations of levels in a trial set.
#[derive(Debug, Clone, Default)]
struct Layout {
    models: BTreeSet<String>,
    blooms: BTreeSet<Bloom>,
    /// practice → domain
    practices: BTreeMap<String, String>,
}

impl Layout {
    fn of(trials: &[TrialRecord]) -> Self {
        let mut l = Layout::default();
        for t in trials {
            l.models.insert(t.model_id.clone());
            l.blooms.insert(t.bloom);
            l.practices
                .entry(t.practice_id.clone())
                .or_insert_with(|| t.domain.as_str().to_string());
        }
        l
    }
}

/// Fitted probability for one model/Bloom/practice combination.
pub fn cell_probability(
    fit: &GlmmFit,
    model: &str,
    bloom: Bloom,
    domain: &str,
    practice: &str,
) -> Result<f64, StatsError> {
    let mut assignment = BTreeMap::new();
    for factor in fit.coding.levels.keys() {
        let level = match factor {
            Factor::Model => model.to_string(),
            Factor::Bloom => bloom.as_str().to_string(),
            Factor::Domain => domain.to_string(),
        };
        assignment.insert(*factor, level);
    }
    let eta = fit.linear_predictor(&assignment)?;
    let group = fit.spec().grouping.group_for(model, domain, practice);
    Ok(logistic(eta + fit.blup(&group)?))
}

fn model_levels(fit: &GlmmFit) -> Vec<String> {
    let mut m = fit.coding.levels.get(&Factor::Model).cloned().unwrap_or_default();
    m.sort();
    m
}

/// Best-minus-worst model probability on one practice, Bloom averaged over
/// the four levels.
pub fn delta_model(fit: &GlmmFit, practice: &str, domain: &str) -> Result<f64, StatsError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for model in model_levels(fit) {
        let mut s = 0.0;
        for b in Bloom::ALL {
            s += cell_probability(fit, &model, b, domain, practice)?;
        }
        let avg = s / 4.0;
        lo = lo.min(avg);
        hi = hi.max(avg);
    }
    Ok(if hi >= lo { hi - lo } else { 0.0 })
}

/// Empirical spread of per-level accuracy for one practice, pooled over models.
pub fn delta_bloom(trials: &[TrialRecord], practice: &str) -> Result<f64, StatsError> {
    let mut tally = [(0usize, 0usize); 4];
    for t in trials.iter().filter(|t| t.practice_id == practice) {
        let e = &mut tally[t.bloom.rank()];
        e.0 += usize::from(t.correct);
        e.1 += 1;
    }
    let mut rates = Vec::with_capacity(4);
    for b in Bloom::ALL {
        let (c, n) = tally[b.rank()];
        if n == 0 {
            return Err(StatsError::MissingBloomLevel {
                practice: practice.to_string(),
                level: b.as_str().to_string(),
            });
        }
        rates.push(c as f64 / n as f64);
    }
    Ok(spread(&rates))
}

/// Spread over Bloom levels of the fitted probability averaged over models.
pub fn delta_bloom_fitted(fit: &GlmmFit, practice: &str, domain: &str) -> Result<f64, StatsError> {
    let models = model_levels(fit);
    let mut rates = Vec::with_capacity(4);
    for b in Bloom::ALL {
        let mut s = 0.0;
        for m in &models {
            s += cell_probability(fit, m, b, domain, practice)?;
        }
        rates.push(s / models.len() as f64);
    }
    Ok(spread(&rates))
}

fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo
}

fn marginal_probability(
    fit: &GlmmFit,
    layout: &Layout,
    practice: &str,
    domain: &str,
) -> Result<f64, StatsError> {
    let mut s = 0.0;
    let mut n = 0usize;
    for m in &layout.models {
        for &b in &layout.blooms {
            s += cell_probability(fit, m, b, domain, practice)?;
            n += 1;
        }
    }
    Ok(s / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankStability {
    pub before: BTreeMap<String, f64>,
    pub after: BTreeMap<String, f64>,
    pub max_shift: f64,
    pub ranking_identical: bool,
    pub refit_converged: bool,
}

/// Per-model marginal fitted accuracy: mean over the fit's practices and
/// observed Bloom levels.
pub fn marginal_model_accuracy(fit: &GlmmFit, trials: &[TrialRecord]) -> Result<BTreeMap<String, f64>, StatsError> {
    let layout = Layout::of(trials);
    let mut out = BTreeMap::new();
    for m in &layout.models {
        let mut s = 0.0;
        let mut n = 0usize;
        for (practice, domain) in &layout.practices {
            for &b in &layout.blooms {
                s += cell_probability(fit, m, b, domain, practice)?;
                n += 1;
            }
        }
        out.insert(m.clone(), s / n as f64);
    }
    Ok(out)
}

fn ranking(acc: &BTreeMap<String, f64>) -> Vec<&str> {
    let mut v: Vec<(&str, f64)> = acc.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(b.0)));
    v.into_iter().map(|(k, _)| k).collect()
}

/// Refits without the flagged practices and compares per-model marginal accuracy.
pub fn rank_stability(
    fit: &GlmmFit,
    trials: &[TrialRecord],
    flagged: &[String],
    options: &FitOptions,
) -> Result<RankStability, StatsError> {
    let before = marginal_model_accuracy(fit, trials)?;
    if flagged.is_empty() {
        return Ok(RankStability {
            after: before.clone(),
            before,
            max_shift: 0.0,
            ranking_identical: true,
            refit_converged: true,
        });
    }
    let drop: BTreeSet<&str> = flagged.iter().map(String::as_str).collect();
    let kept: Vec<TrialRecord> = trials
        .iter()
        .filter(|t| !drop.contains(t.practice_id.as_str()))
        .cloned()
        .collect();
    let refit = fit_glmm(&kept, fit.spec(), options)?;
    if !refit.converged {
        return Err(StatsError::RefitFailed(refit.warnings.join("; ")));
    }
    let after = marginal_model_accuracy(&refit, &kept)?;
    let max_shift = before
        .iter()
        .map(|(m, b)| (b - after.get(m).copied().unwrap_or(f64::NAN)).abs())
        .fold(0.0f64, f64::max);
    let ranking_identical = ranking(&before) == ranking(&after);
    Ok(RankStability {
        before,
        after,
        max_shift,
        ranking_identical,
        refit_converged: refit.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PracticeScreen {
    pub practice_id: String,
    pub domain: String,
    pub delta_model: f64,
    pub delta_bloom_fitted: f64,
    pub delta_bloom_empirical: f64,
    pub marginal_probability: f64,
    pub below_chance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub model_separation: usize,
    pub bloom_separation_fitted: usize,
    pub bloom_separation_empirical: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub thresholds: Thresholds,
    pub delta_model_source: DeltaModelSource,
    pub practices: Vec<PracticeScreen>,
    pub flagged: Vec<String>,
    pub median_delta_model: f64,
    pub model_separation_count: usize,
    pub model_separation_strong_count: usize,
    pub bloom_separation_fitted_count: usize,
    pub bloom_separation_empirical_count: usize,
    pub bloom_separation_union_count: usize,
    pub bloom_negligible_count: usize,
    pub sweep: Vec<SweepPoint>,
    pub rank_stability: Option<RankStability>,
    pub notices: Vec<String>,
}

impl ScreeningReport {
    pub fn n_practices(&self) -> usize {
        self.practices.len()
    }

    pub fn share(&self, count: usize) -> f64 {
        if self.practices.is_empty() {
            0.0
        } else {
            count as f64 / self.practices.len() as f64
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Counts of values at or above each threshold on a 0.00..=1.00 grid.
pub fn threshold_sweep(values: &[f64], step: f64) -> Vec<(f64, usize)> {
    let n = (1.0 / step).round() as usize;
    (0..=n)
        .map(|i| {
            let t = (i as f64 * step * 1e6).round() / 1e6;
            (t, values.iter().filter(|v| **v >= t - 1e-12).count())
        })
        .collect()
}

/// Screens every practice in `trials` against `fit` (a practice-keyed fit).
pub fn screen_practices(
    fit: &GlmmFit,
    trials: &[TrialRecord],
    config: &ScreeningConfig,
) -> Result<ScreeningReport, StatsError> {
    let layout = Layout::of(trials);
    let th = &config.thresholds;
    let mut notices = Vec::new();

    let companion;
    let delta_fit = match config.delta_model_source {
        DeltaModelSource::PracticeFit => fit,
        DeltaModelSource::ModelPracticeFit if fit.spec().grouping == GroupingKey::ModelPractice => fit,
        DeltaModelSource::ModelPracticeFit => {
            let spec: ModelSpec = fit.spec().clone().with_grouping(GroupingKey::ModelPractice);
            companion = fit_glmm(trials, &spec, &config.fit_options)?;
            if !companion.converged {
                notices.push("model-practice companion fit did not converge".to_string());
            }
            &companion
        }
    };

    let mut practices = Vec::with_capacity(layout.practices.len());
    for (pid, domain) in &layout.practices {
        let marginal = marginal_probability(fit, &layout, pid, domain)?;
        let empirical = match delta_bloom(trials, pid) {
            Ok(v) => v,
            Err(e) => {
                notices.push(e.to_string());
                f64::NAN
            }
        };
        practices.push(PracticeScreen {
            practice_id: pid.clone(),
            domain: domain.clone(),
            delta_model: delta_model(delta_fit, pid, domain)?,
            delta_bloom_fitted: delta_bloom_fitted(fit, pid, domain)?,
            delta_bloom_empirical: empirical,
            marginal_probability: marginal,
            below_chance: marginal < th.chance,
        });
    }

    let flagged: Vec<String> = practices
        .iter()
        .filter(|p| p.below_chance)
        .map(|p| p.practice_id.clone())
        .collect();
    let dm: Vec<f64> = practices.iter().map(|p| p.delta_model).collect();
    let dbf: Vec<f64> = practices.iter().map(|p| p.delta_bloom_fitted).collect();
    let dbe: Vec<f64> = practices.iter().map(|p| p.delta_bloom_empirical).collect();
    let count = |v: &[f64], t: f64| v.iter().filter(|x| **x >= t).count();

    let sweep_m = threshold_sweep(&dm, 0.01);
    let sweep_f = threshold_sweep(&dbf, 0.01);
    let sweep_e = threshold_sweep(&dbe, 0.01);
    let sweep = sweep_m
        .iter()
        .zip(&sweep_f)
        .zip(&sweep_e)
        .map(|((m, f), e)| SweepPoint {
            threshold: m.0,
            model_separation: m.1,
            bloom_separation_fitted: f.1,
            bloom_separation_empirical: e.1,
        })
        .collect();

    let rank = if config.rank_stability {
        match rank_stability(fit, trials, &flagged, &config.fit_options) {
            Ok(r) => Some(r),
            Err(e) => {
                notices.push(format!("rank stability suppressed: {e}"));
                None
            }
        }
    } else {
        None
    };

    Ok(ScreeningReport {
        thresholds: th.clone(),
        delta_model_source: config.delta_model_source,
        median_delta_model: median(&dm),
        model_separation_count: count(&dm, th.model_separation),
        model_separation_strong_count: count(&dm, th.model_separation_strong),
        bloom_separation_fitted_count: count(&dbf, th.bloom_separation),
        bloom_separation_empirical_count: count(&dbe, th.bloom_separation),
        bloom_separation_union_count: practices
            .iter()
            .filter(|p| p.delta_bloom_fitted >= th.bloom_separation || p.delta_bloom_empirical >= th.bloom_separation)
            .count(),
        bloom_negligible_count: practices
            .iter()
            .filter(|p| p.delta_bloom_fitted < th.bloom_negligible)
            .count(),
        practices,
        flagged,
        sweep,
        rank_stability: rank,
        notices,
    })
}

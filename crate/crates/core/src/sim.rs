//! Synthetic trial generators: direct GLMM simulation for estimator checks,
//! and latent-threshold fixtures that reproduce fixed per-model, per-Bloom
//! accuracy tables while planting practice- and scenario-level structure.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{label_for, Bloom, Domain, TrialRecord};
use crate::stats::glmm::logistic;

pub const MODEL_IDS: [&str; 8] = [
    "deepseek-v3",
    "gpt-4o",
    "gpt-4o-mini",
    "kimi-k2",
    "llama-33-70b",
    "mixtral-8x7b",
    "qwen-25-72b",
    "qwen-3-80b",
];

/// Log-odds effects relative to deepseek-v3 and analyze, teaching domain.
pub const TEACHING_INTERCEPT: f64 = 1.997;
pub const TEACHING_MODEL_EFFECTS: [f64; 8] = [0.0, -0.345, -0.131, -0.098, -1.900, -2.760, -0.024, -0.299];
/// remember, understand, apply, analyze
pub const TEACHING_BLOOM_EFFECTS: [f64; 4] = [-0.728, -1.064, -1.385, 0.0];

pub const DIET_INTERCEPT: f64 = 0.372;
pub const DIET_MODEL_EFFECTS: [f64; 8] = [0.0, 0.073, 0.117, 0.355, -0.149, -0.297, -0.077, 0.215];
pub const DIET_BLOOM_EFFECTS: [f64; 4] = [0.392, -0.062, 0.236, 0.0];

/// Accuracy by model (rows, `MODEL_IDS` order) and Bloom level
/// (remember, understand, apply, analyze).
pub const TEACHING_ACCURACY: [[f64; 4]; 8] = [
    [0.699, 0.730, 0.595, 0.904],
    [0.712, 0.608, 0.482, 0.879],
    [0.717, 0.662, 0.618, 0.850],
    [0.692, 0.659, 0.620, 0.897],
    [0.512, 0.299, 0.215, 0.427],
    [0.206, 0.206, 0.199, 0.213],
    [0.756, 0.689, 0.577, 0.905],
    [0.669, 0.630, 0.575, 0.852],
];

pub const DIET_ACCURACY: [[f64; 4]; 8] = [
    [0.646, 0.586, 0.610, 0.585],
    [0.657, 0.600, 0.620, 0.606],
    [0.700, 0.561, 0.653, 0.615],
    [0.691, 0.612, 0.677, 0.695],
    [0.629, 0.523, 0.595, 0.547],
    [0.648, 0.492, 0.571, 0.488],
    [0.657, 0.558, 0.583, 0.545],
    [0.729, 0.574, 0.649, 0.598],
];

pub fn practice_ids(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i:02}")).collect()
}

/// Builds a trial record with a deterministic answer key.
fn make_trial(
    domain: &Domain,
    model: &str,
    scenario: usize,
    practice: &str,
    bloom: Bloom,
    correct: bool,
    rng: &mut impl Rng,
) -> TrialRecord {
    let k = domain.option_count();
    let key = label_for((scenario * 4 + bloom.rank()) * 7 % k);
    let chosen = if correct {
        key
    } else {
        let off = rng.random_range(1..k);
        label_for(((key as u8 - b'A') as usize + off) % k)
    };
    let prefix = &domain.as_str()[..1];
    let scenario_id = format!("{prefix}{scenario:04}");
    TrialRecord {
        model_id: model.to_string(),
        mcq_id: format!("{scenario_id}-{}", bloom.as_str()),
        scenario_id,
        practice_id: practice.to_string(),
        bloom,
        domain: domain.clone(),
        chosen_label: Some(chosen),
        correct_label: key,
        correct,
        raw_response: chosen.to_string(),
        error: None,
    }
}

/// Parameters for sampling trials directly from a random-intercept logistic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmmSimSpec {
    pub domain: Domain,
    pub intercept: f64,
    /// Per model, reference first with effect 0.
    pub models: Vec<(String, f64)>,
    /// remember, understand, apply, analyze
    pub bloom_effects: [f64; 4],
    pub sigma: f64,
    pub practices: Vec<String>,
    /// Scenarios per model; each scenario yields one trial per Bloom level.
    pub n_scenarios: usize,
    pub seed: u64,
}

impl GlmmSimSpec {
    /// Teaching coefficients, 36 practices, 600 scenarios, σ = 1.2.
    pub fn teaching(seed: u64) -> Self {
        Self {
            domain: Domain::Teaching,
            intercept: TEACHING_INTERCEPT,
            models: MODEL_IDS
                .iter()
                .zip(TEACHING_MODEL_EFFECTS)
                .map(|(m, e)| (m.to_string(), e))
                .collect(),
            bloom_effects: TEACHING_BLOOM_EFFECTS,
            sigma: 1.2,
            practices: practice_ids("SM", 36),
            n_scenarios: 600,
            seed,
        }
    }

    /// Random intercepts drawn for this spec, in practice order.
    pub fn draw_intercepts(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let normal = Normal::new(0.0, self.sigma.max(0.0)).expect("finite sigma");
        self.practices.iter().map(|_| normal.sample(rng)).collect()
    }
}

/// Scenario `s` belongs to practice `s mod P`.
pub fn simulate_glmm(spec: &GlmmSimSpec) -> Vec<TrialRecord> {
    simulate_with_extra(spec, |_, _| 0.0)
}

/// As [`simulate_glmm`] plus an additive log-odds term per (model index, domain).
pub fn simulate_with_extra(spec: &GlmmSimSpec, extra: impl Fn(usize, &Domain) -> f64) -> Vec<TrialRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let u = spec.draw_intercepts(&mut rng);
    let mut out = Vec::with_capacity(spec.models.len() * spec.n_scenarios * 4);
    for (mi, (model, effect)) in spec.models.iter().enumerate() {
        let shift = extra(mi, &spec.domain);
        for s in 0..spec.n_scenarios {
            let p_idx = s % spec.practices.len();
            for b in Bloom::ALL {
                let eta = spec.intercept + effect + spec.bloom_effects[b.rank()] + u[p_idx] + shift;
                let correct = rng.random::<f64>() < logistic(eta);
                out.push(make_trial(&spec.domain, model, s, &spec.practices[p_idx], b, correct, &mut rng));
            }
        }
    }
    out
}

/// A practice-level departure planted into a latent fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    /// Index into the practice list.
    pub practice: usize,
    /// `None` shifts every model.
    pub model: Option<usize>,
    pub shift: f64,
}

/// Latent-threshold fixture: for each (model, Bloom) cell exactly
/// `round(accuracy × n_scenarios)` trials are correct, namely those with the
/// largest latent score
///
/// ```text
/// loading_m · u_p + v_{m,p} + w_{m,s} + ε
/// ```
///
/// where `u` is a practice effect, `v` a model-by-practice deviation, `w` a
/// (model, scenario) effect shared by the four Bloom variants, and `ε` is
/// standard logistic noise. `w` is stratified within every (model, practice)
/// so it adds no between-practice variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFixtureSpec {
    pub domain: Domain,
    pub models: Vec<String>,
    pub accuracy: Vec<[f64; 4]>,
    pub practices: Vec<String>,
    pub n_scenarios: usize,
    pub sigma_practice: f64,
    pub sigma_model_practice: f64,
    pub sigma_scenario: f64,
    /// Per-model multiplier on the practice effect.
    pub loadings: Vec<f64>,
    pub planted: Vec<Planted>,
    pub seed: u64,
}

/// Standard normal quantile.
fn normal_quantile(p: f64) -> f64 {
    statrs::distribution::ContinuousCDF::inverse_cdf(&statrs::distribution::Normal::standard(), p)
}

pub fn latent_fixture(spec: &LatentFixtureSpec) -> Vec<TrialRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_p = spec.practices.len();
    let n_m = spec.models.len();
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let u: Vec<f64> = (0..n_p).map(|_| spec.sigma_practice * std.sample(&mut rng)).collect();
    let mut v: Vec<Vec<f64>> = (0..n_m)
        .map(|_| (0..n_p).map(|_| spec.sigma_model_practice * std.sample(&mut rng)).collect())
        .collect();
    for plant in &spec.planted {
        match plant.model {
            Some(m) => v[m][plant.practice] += plant.shift,
            None => v.iter_mut().for_each(|row| row[plant.practice] += plant.shift),
        }
    }

    // stratified scenario effects per (model, practice)
    let mut scenarios_of: Vec<Vec<usize>> = vec![Vec::new(); n_p];
    for s in 0..spec.n_scenarios {
        scenarios_of[s % n_p].push(s);
    }
    let mut w = vec![vec![0.0; spec.n_scenarios]; n_m];
    for row in w.iter_mut() {
        for group in &scenarios_of {
            let n = group.len();
            let mut q: Vec<f64> = (0..n)
                .map(|k| spec.sigma_scenario * normal_quantile((k as f64 + 0.5) / n as f64))
                .collect();
            q.shuffle(&mut rng);
            for (&s, val) in group.iter().zip(q) {
                row[s] = val;
            }
        }
    }

    let mut out = Vec::with_capacity(n_m * spec.n_scenarios * 4);
    for m in 0..n_m {
        let mut outcome = vec![[false; 4]; spec.n_scenarios];
        for b in Bloom::ALL {
            let mut scored: Vec<(f64, usize)> = (0..spec.n_scenarios)
                .map(|s| {
                    let p = s % n_p;
                    let x: f64 = rng.random_range(1e-12..1.0);
                    let noise = (x / (1.0 - x)).ln();
                    (spec.loadings[m] * u[p] + v[m][p] + w[m][s] + noise, s)
                })
                .collect();
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores").then(a.1.cmp(&b.1)));
            let k = (spec.accuracy[m][b.rank()] * spec.n_scenarios as f64).round() as usize;
            for &(_, s) in scored.iter().take(k) {
                outcome[s][b.rank()] = true;
            }
        }
        for (s, row) in outcome.iter().enumerate() {
            let p = s % n_p;
            for b in Bloom::ALL {
                out.push(make_trial(
                    &spec.domain,
                    &spec.models[m],
                    s,
                    &spec.practices[p],
                    b,
                    row[b.rank()],
                    &mut rng,
                ));
            }
        }
    }
    out
}

/// Per-(model, Bloom) accuracy of a trial set.
pub fn accuracy_by_cell(trials: &[TrialRecord]) -> BTreeMap<(String, Bloom), f64> {
    let mut tally: BTreeMap<(String, Bloom), (usize, usize)> = BTreeMap::new();
    for t in trials {
        let e = tally.entry((t.model_id.clone(), t.bloom)).or_default();
        e.0 += usize::from(t.correct);
        e.1 += 1;
    }
    tally.into_iter().map(|(k, (c, n))| (k, c as f64 / n as f64)).collect()
}

impl LatentFixtureSpec {
    /// Teaching fixture: 8 models × 600 scenarios × 4 levels over 36 practices.
    /// Mixtral's correct answers concentrate on seven practices and Llama
    /// collapses on two.
    pub fn teaching() -> Self {
        let n_p = 36;
        let mut planted: Vec<Planted> = (0..7)
            .map(|i| Planted {
                practice: (i * 5 + 2) % n_p,
                model: Some(5),
                shift: 15.0,
            })
            .collect();
        planted.extend((0..2).map(|i| Planted {
            practice: (i * 11 + 4) % n_p,
            model: Some(4),
            shift: -4.0,
        }));
        Self {
            domain: Domain::Teaching,
            models: MODEL_IDS.iter().map(|s| s.to_string()).collect(),
            accuracy: TEACHING_ACCURACY.to_vec(),
            practices: practice_ids("SM", n_p),
            n_scenarios: 600,
            sigma_practice: 0.8,
            sigma_model_practice: 0.3,
            sigma_scenario: 3.0,
            loadings: vec![1.0; 8],
            planted,
            seed: 6,
        }
    }

    /// Diet fixture: 55 practices, five of which every model mostly misses.
    pub fn diet() -> Self {
        let n_p = 55;
        Self {
            domain: Domain::Diet,
            models: MODEL_IDS.iter().map(|s| s.to_string()).collect(),
            accuracy: DIET_ACCURACY.to_vec(),
            practices: practice_ids("DG", n_p),
            n_scenarios: 600,
            sigma_practice: 0.5,
            sigma_model_practice: 1.2,
            sigma_scenario: 3.0,
            loadings: vec![1.0; 8],
            planted: Self::diet_hard_practices()
                .into_iter()
                .map(|p| Planted {
                    practice: p,
                    model: None,
                    shift: -6.0,
                })
                .collect(),
            seed: 1,
        }
    }

    /// Practice indices planted as near-unanswerable in [`Self::diet`].
    pub fn diet_hard_practices() -> Vec<usize> {
        (0..5).map(|p| p * 11 + 3).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latent_fixture_reproduces_accuracy_table() {
        let spec = LatentFixtureSpec::teaching();
        let trials = latent_fixture(&spec);
        assert_eq!(trials.len(), 8 * 2400);
        let acc = accuracy_by_cell(&trials);
        for (m, row) in spec.models.iter().zip(&spec.accuracy) {
            for b in Bloom::ALL {
                let got = acc[&(m.clone(), b)];
                assert!((got - row[b.rank()]).abs() <= 0.5 / 600.0 + 1e-12, "{m} {b}: {got}");
            }
        }
    }

    #[test]
    fn fixtures_are_seed_deterministic() {
        let a = latent_fixture(&LatentFixtureSpec::diet());
        let b = latent_fixture(&LatentFixtureSpec::diet());
        assert_eq!(a, b);
    }

    #[test]
    fn glmm_simulation_layout() {
        let spec = GlmmSimSpec {
            n_scenarios: 72,
            ..GlmmSimSpec::teaching(3)
        };
        let trials = simulate_glmm(&spec);
        assert_eq!(trials.len(), 8 * 72 * 4);
        for t in &trials {
            assert!(t.check().is_ok());
        }
        let per_practice = trials.iter().filter(|t| t.practice_id == "SM_01").count();
        assert_eq!(per_practice, 8 * 2 * 4);
    }
}

//! Exit-gate checks, run one after another. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails. Run with `--nocapture` to see the lines on success.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use praxbench_core::corpus::text::content_hash;
use praxbench_core::corpus::{Bloom, DietProfile, Domain, McqItem, Profile, Scenario, TeachingProfile, TrialRecord};
use praxbench_core::exam::{administer, sample_exam};
use praxbench_core::extract::{extract_practices, ExtractConfig};
use praxbench_core::factory::{derive_rng, run_generation, validate_scenario, GenerationConfig, GenerationOutput, ValidationRuleSet, Violation};
use praxbench_core::gateway::{FixtureStore, SyntheticBackend};
use praxbench_core::sim::{
    latent_fixture, simulate_glmm, simulate_with_extra, GlmmSimSpec, LatentFixtureSpec, TEACHING_BLOOM_EFFECTS,
    TEACHING_INTERCEPT, TEACHING_MODEL_EFFECTS, MODEL_IDS,
};
use praxbench_core::stats::bhpr::RateMatrix;
use praxbench_core::stats::quadrature::GaussHermite;
use praxbench_core::stats::screening::ScreeningConfig;
use praxbench_core::stats::{
    bh_fdr, bhpr, fit_glmm, likelihood_ratio_test, marginal_loglik, marginal_loglik_grad, residual_cells,
    screen_practices, BhprResult, Design, FitOptions, GlmmFit, ModelSpec, ResidualOptions, Thresholds,
};
use praxbench_core::corpus::keywords::KeywordList;
use praxbench_core::Gateway;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: &'static str, pass: bool, detail: impl Into<String>) -> Line {
    Line {
        id,
        pass,
        detail: detail.into(),
    }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// 1 ------------------------------------------------------------------

/// Published Teaching SEs, by coefficient name. Informational only.
const PUBLISHED_SE: [(&str, f64); 11] = [
    ("(Intercept)", 0.144),
    ("Model[gpt-4o]", 0.068),
    ("Model[gpt-4o-mini]", 0.069),
    ("Model[kimi-k2]", 0.069),
    ("Model[llama-33-70b]", 0.069),
    ("Model[mixtral-8x7b]", 0.075),
    ("Model[qwen-25-72b]", 0.070),
    ("Model[qwen-3-80b]", 0.068),
    ("Bloom[apply]", 0.051),
    ("Bloom[remember]", 0.051),
    ("Bloom[understand]", 0.051),
];

fn teaching_truth() -> BTreeMap<String, f64> {
    let mut t = BTreeMap::new();
    t.insert("(Intercept)".to_string(), TEACHING_INTERCEPT);
    for (m, e) in MODEL_IDS.iter().zip(TEACHING_MODEL_EFFECTS).skip(1) {
        t.insert(format!("Model[{m}]"), e);
    }
    for b in [Bloom::Remember, Bloom::Understand, Bloom::Apply] {
        t.insert(format!("Bloom[{}]", b.as_str()), TEACHING_BLOOM_EFFECTS[b.rank()]);
    }
    t
}

fn max_abs_z(fit: &GlmmFit, truth: &BTreeMap<String, f64>, published: bool) -> f64 {
    let published: BTreeMap<&str, f64> = if published { PUBLISHED_SE.into_iter().collect() } else { BTreeMap::new() };
    fit.coefficients
        .iter()
        .map(|c| {
            let se = published.get(c.name.as_str()).copied().unwrap_or(c.std_error);
            ((c.estimate - truth[&c.name]) / se).abs()
        })
        .fold(0.0, f64::max)
}

fn criterion_1() -> Vec<Line> {
    let truth = teaching_truth();
    let (mut ok, mut ok_published, mut slowest, mut all_converged) = (0, 0, Duration::ZERO, true);
    for seed in 0..20 {
        let trials = simulate_glmm(&GlmmSimSpec::teaching(1000 + seed));
        assert_eq!(trials.len(), 8 * 2400);
        let t0 = Instant::now();
        let fit = fit_glmm(&trials, &ModelSpec::model_bloom(), &FitOptions::default()).unwrap();
        slowest = slowest.max(t0.elapsed());
        all_converged &= fit.converged;
        assert_eq!(fit.coefficients.len(), truth.len());
        ok += usize::from(max_abs_z(&fit, &truth, false) <= 3.0);
        ok_published += usize::from(max_abs_z(&fit, &truth, true) <= 3.0);
    }
    vec![
        line(
            "1 glmm recovery",
            ok >= 19 && slowest < Duration::from_secs(120) && all_converged,
            format!(
                "{ok}/20 seeds with every effect within 3 fitted SE (need 19); slowest fit {:.2}s (limit 120s)",
                slowest.as_secs_f64()
            ),
        ),
        line(
            "1 (info) published SEs",
            true,
            format!("{ok_published}/20 seeds within 3 published SE; not gated, see notes"),
        ),
    ]
}

// 2, 3 -----------------------------------------------------------------

fn criteria_2_3() -> Vec<Line> {
    let trials = simulate_glmm(&GlmmSimSpec::teaching(1000));
    let design = Design::build(&trials, &ModelSpec::model_bloom()).unwrap();
    let rule = GaussHermite::new(15);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = design.n_fixed();
        let params: Vec<f64> = (0..=n)
            .map(|i| if i == n { rng.random_range(-1.5..1.0) } else { rng.random_range(-2.5..2.5) })
            .collect();
        let (_, grad) = marginal_loglik_grad(&params, &design, &rule).unwrap();
        for j in 0..params.len() {
            let h = 1e-5 * params[j].abs().max(1.0);
            let (mut up, mut dn) = (params.clone(), params.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (marginal_loglik(&up, &design, &rule).unwrap() - marginal_loglik(&dn, &design, &rule).unwrap()) / (2.0 * h);
            let rel = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1.0);
            worst = worst.max(rel);
        }
    }
    let elapsed = t0.elapsed();

    let fit = fit_glmm(&trials, &ModelSpec::model_bloom(), &FitOptions::default()).unwrap();
    let mut params: Vec<f64> = fit.coefficients.iter().map(|c| c.estimate).collect();
    params.push(fit.sigma.ln());
    let l15 = marginal_loglik(&params, &design, &GaussHermite::new(15)).unwrap();
    let l30 = marginal_loglik(&params, &design, &GaussHermite::new(30)).unwrap();
    vec![
        line(
            "2 gradient check",
            worst < 1e-5 && elapsed < Duration::from_secs(10),
            format!("max relative error {worst:.2e} (limit 1e-5) over 100 points in {:.2}s (limit 10s)", elapsed.as_secs_f64()),
        ),
        line(
            "3 quadrature convergence",
            (l30 - l15).abs() < 1e-6,
            format!("|loglik(30) - loglik(15)| = {:.2e} (limit 1e-6)", (l30 - l15).abs()),
        ),
    ]
}

// 4 -------------------------------------------------------------------

/// Largest k with at least k p-values at or below k q / m.
fn bh_oracle(p: &[f64], q: f64) -> Vec<bool> {
    let m = p.len();
    let k = (1..=m)
        .rev()
        .find(|&k| {
            let cut = k as f64 * q / m as f64;
            p.iter().filter(|&&x| x <= cut).count() >= k
        })
        .unwrap_or(0);
    if k == 0 {
        return vec![false; m];
    }
    let cut = k as f64 * q / m as f64;
    p.iter().map(|&x| x <= cut).collect()
}

fn criterion_4() -> Vec<Line> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for case in 0..1000 {
        let m = rng.random_range(1..=500);
        let q = [0.01, 0.05, 0.1, 0.2][case % 4];
        let p: Vec<f64> = (0..m)
            .map(|_| match rng.random_range(0..4) {
                // mixture of nulls, strong signals and ties
                0 => rng.random::<f64>().powi(4) * 0.01,
                1 => (rng.random::<f64>() * 20.0).round() / 400.0,
                _ => rng.random::<f64>(),
            })
            .collect();
        mismatches += usize::from(bh_fdr(&p, q) != bh_oracle(&p, q));
    }
    vec![line("4 bh-fdr oracle", mismatches == 0, format!("{mismatches}/1000 vectors differ from brute force"))]
}

// 5 -------------------------------------------------------------------

fn brute_bhpr(trials: &[TrialRecord]) -> (RateMatrix, RateMatrix) {
    let mut sgs = [[None; 4]; 4];
    let mut sgf = [[None; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let (mut sh, mut sn, mut fh, mut fnn) = (0usize, 0usize, 0usize, 0usize);
            for (ai, a) in trials.iter().enumerate() {
                for (bi, b) in trials.iter().enumerate() {
                    let paired = a.model_id == b.model_id && a.scenario_id == b.scenario_id;
                    if !paired || a.bloom.rank() != i || b.bloom.rank() != j || (i == j && ai != bi) {
                        continue;
                    }
                    if a.correct {
                        sn += 1;
                        sh += usize::from(b.correct);
                    } else {
                        fnn += 1;
                        fh += usize::from(b.correct);
                    }
                }
            }
            sgs[i][j] = (sn > 0).then(|| sh as f64 / sn as f64);
            sgf[i][j] = (fnn > 0).then(|| fh as f64 / fnn as f64);
        }
    }
    (sgs, sgf)
}

fn tiny_trial(model: usize, scenario: usize, bloom: usize, correct: bool) -> TrialRecord {
    TrialRecord {
        model_id: format!("m{model}"),
        mcq_id: format!("s{scenario}-{bloom}"),
        scenario_id: format!("s{scenario}"),
        practice_id: "P".into(),
        bloom: Bloom::ALL[bloom],
        domain: Domain::Diet,
        chosen_label: None,
        correct_label: 'A',
        correct,
        raw_response: String::new(),
        error: None,
    }
}

fn criterion_5() -> Vec<Line> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(0..60);
        let trials: Vec<TrialRecord> = (0..n)
            .map(|_| tiny_trial(rng.random_range(0..3), rng.random_range(0..6), rng.random_range(0..4), rng.random()))
            .collect();
        let r = bhpr(&trials);
        mismatches += usize::from((r.sgs, r.sgf) != brute_bhpr(&trials));
    }
    let mut out = vec![line("5a bhpr oracle", mismatches == 0, format!("{mismatches}/200 random sets differ from direct counting"))];
    for (name, spec) in [("teaching", LatentFixtureSpec::teaching()), ("diet", LatentFixtureSpec::diet())] {
        let r = bhpr(&latent_fixture(&spec));
        let sgs_min = BhprResult::off_diagonal(&r.sgs).fold(1.0, f64::min);
        let sgf_max = BhprResult::off_diagonal(&r.sgf).fold(0.0, f64::max);
        // per model, SGS(i->j) <= P(j) / P(i) for any pairing of trials;
        // report the tightest such bound implied by the accuracy table
        let bound = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .flat_map(|(i, j)| spec.accuracy.iter().map(move |row| (row[j] / row[i]).min(1.0)))
            .fold(1.0, f64::min);
        out.push(line(
            if name == "teaching" { "5b bhpr fixture (teaching)" } else { "5c bhpr fixture (diet)" },
            sgs_min >= 0.85 && sgf_max <= 0.40,
            format!(
                "min sgs {sgs_min:.3} (need >= 0.85), max sgf {sgf_max:.3} (need <= 0.40); marginals cap min sgs at {bound:.3}"
            ),
        ));
    }
    out
}

// 6 -------------------------------------------------------------------

fn criterion_6() -> Vec<Line> {
    let options = FitOptions::default();
    let diet = latent_fixture(&LatentFixtureSpec::diet());
    let fit = fit_glmm(&diet, &ModelSpec::model_bloom(), &options).unwrap();
    let rep = screen_practices(&fit, &diet, &ScreeningConfig::new(Thresholds::with_chance(0.25))).unwrap();
    let rs = rep.rank_stability.clone().expect("rank stability computed");
    let diet_ok = rep.flagged.len() == 5 && rs.max_shift <= 0.07 && rs.ranking_identical;

    let teaching = latent_fixture(&LatentFixtureSpec::teaching());
    let fit = fit_glmm(&teaching, &ModelSpec::model_bloom(), &options).unwrap();
    let rep_t = screen_practices(&fit, &teaching, &ScreeningConfig::new(Thresholds::with_chance(0.20))).unwrap();
    let teaching_ok = rep_t.flagged.is_empty() && (rep_t.median_delta_model - 0.714).abs() <= 0.05;
    vec![
        line(
            "6a screening (diet)",
            diet_ok,
            format!(
                "{} flags (need 5), max_shift {:.3} (need <= 0.07), ranking identical {}",
                rep.flagged.len(),
                rs.max_shift,
                rs.ranking_identical
            ),
        ),
        line(
            "6b screening (teaching)",
            teaching_ok,
            format!("{} flags (need 0), median delta_model {:.3} (need 0.714 +/- 0.05)", rep_t.flagged.len(), rep_t.median_delta_model),
        ),
    ]
}

// 7 -------------------------------------------------------------------

fn criterion_7() -> Vec<Line> {
    let mut shares = Vec::new();
    for seed in 0..20 {
        let trials = simulate_glmm(&GlmmSimSpec::teaching(7000 + seed));
        let fit = fit_glmm(&trials, &ModelSpec::model_bloom(), &FitOptions::default()).unwrap();
        let r = residual_cells(&fit, &trials, &ResidualOptions::default()).unwrap();
        shares.push(r.n_flagged() as f64 / r.cells.len() as f64);
    }
    let mean_share = shares.iter().sum::<f64>() / shares.len() as f64;

    let teaching = latent_fixture(&LatentFixtureSpec::teaching());
    let fit = fit_glmm(&teaching, &ModelSpec::model_bloom(), &FitOptions::default()).unwrap();
    let r = residual_cells(&fit, &teaching, &ResidualOptions::default()).unwrap();
    vec![
        line("7a residual null calibration", mean_share <= 0.06, format!("mean flagged share {:.4} over 20 seeds (limit 0.06)", mean_share)),
        line(
            "7b residual fixture",
            r.cells.len() == 288 && r.n_flagged().abs_diff(38) <= 5,
            format!("{} of {} cells flagged (need 38 +/- 5 of 288)", r.n_flagged(), r.cells.len()),
        ),
    ]
}

// 8 -------------------------------------------------------------------

const EXAMINEES: [(&str, f64); 3] = [("synth-a", 0.9), ("synth-b", 0.6), ("synth-c", 0.3)];

fn gateways(store: &Arc<FixtureStore>, replay: bool) -> (Gateway, Vec<(String, Gateway)>) {
    let make = |id: &str, skill: f64| {
        if replay {
            Gateway::replay(id, store.clone())
        } else {
            Gateway::live(id, Arc::new(SyntheticBackend::new(id).with_skill(skill))).recording_into(store.clone())
        }
    };
    let roster = EXAMINEES.iter().map(|(id, s)| (id.to_string(), make(id, *s))).collect();
    (make("synth-writer", 0.8), roster)
}

struct Pipeline {
    generations: Vec<GenerationOutput>,
    trials: Vec<Vec<TrialRecord>>,
}

/// Generate N in {1, 10, 100, 600}, then exam N in {1, 10, 100} and 600.
fn pipeline(store: &Arc<FixtureStore>, replay: bool) -> Pipeline {
    let (writer, roster) = gateways(store, replay);
    let guideline = std::fs::read_to_string(workspace_root().join("fixtures/guidelines/diet.txt")).unwrap();
    let practices = extract_practices(&guideline, &writer, &ExtractConfig::new(Domain::Diet, "DG")).unwrap().practices;
    let mut out = Pipeline {
        generations: Vec::new(),
        trials: Vec::new(),
    };
    for n in [1usize, 10, 100, 600] {
        let config = GenerationConfig::new(Domain::Diet, n, 8);
        let gen = run_generation(&practices, &config, &writer, &ValidationRuleSet::for_domain(&Domain::Diet)).unwrap();
        let plan = sample_exam(&gen.mcqs, n, &mut derive_rng(8, "exam", n as u64)).unwrap();
        out.trials.push(administer(&plan, &gen.mcqs, &roster, None).unwrap());
        out.generations.push(gen);
    }
    out
}

fn balanced(mcqs: &[McqItem], n: usize) -> bool {
    let mut per_level: BTreeMap<Bloom, usize> = BTreeMap::new();
    for m in mcqs {
        *per_level.entry(m.bloom).or_default() += 1;
    }
    mcqs.len() == 4 * n && Bloom::ALL.iter().all(|b| per_level.get(b).copied().unwrap_or(0) == n)
}

fn criterion_8() -> Vec<Line> {
    let store = Arc::new(FixtureStore::new());
    let live = pipeline(&store, false);
    let t0 = Instant::now();
    let replayed = pipeline(&store, true);
    let elapsed = t0.elapsed();

    let mut ok = true;
    let mut detail = Vec::new();
    for ((n, gen), trials) in [1usize, 10, 100, 600].iter().zip(&live.generations).zip(&live.trials) {
        let m = EXAMINEES.len();
        let mut per_model: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for t in trials {
            per_model.entry(&t.model_id).or_default().push(&t.mcq_id);
        }
        let sets: Vec<&Vec<&str>> = per_model.values().collect();
        let identical = sets.windows(2).all(|w| w[0] == w[1]);
        let this = balanced(&gen.mcqs, gen.scenarios.len())
            && gen.scenarios.len() == *n
            && trials.len() == 4 * n * m
            && identical;
        ok &= this;
        detail.push(format!("N={n}: {} MCQs, {} trials", gen.mcqs.len(), trials.len()));
    }
    let same = live.generations == replayed.generations && live.trials == replayed.trials;
    ok &= same && elapsed < Duration::from_secs(5);
    detail.push(format!("replay identical {same}, replay time {:.2}s (limit 5s)", elapsed.as_secs_f64()));
    vec![line("8 pipeline arithmetic", ok, detail.join("; "))]
}

// 9 -------------------------------------------------------------------

fn diet_profile() -> Profile {
    Profile::Diet(DietProfile {
        name: "Ana".into(),
        age: 40,
        sex: "female".into(),
        health_condition: "hypertension".into(),
        primary_goal: "lower blood pressure".into(),
        cooking_habits: "cooks on weekends".into(),
        food_avoidance: "shellfish".into(),
        traits: vec!["busy".into(), "social".into()],
    })
}

fn teaching_profile() -> Profile {
    Profile::Teaching(TeachingProfile {
        instructor_name: "Dr. Ray".into(),
        discipline: "Chemistry".into(),
        class_name: "General Chemistry".into(),
        class_size: 120,
        format: "lecture".into(),
        years_experience: 9,
        ocean_scores: vec![5, 6, 4, 7, 3],
        narrative_summary: "Methodical lecturer.".into(),
    })
}

fn scenario(text: &str, profile: Profile) -> Scenario {
    Scenario {
        id: "x0001".into(),
        practice_id: "P_01".into(),
        profile,
        text: text.into(),
        key_question: "What should change".into(),
        content_hash: content_hash(text),
    }
}

fn criterion_9() -> Vec<Line> {
    let source = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/clean_scenarios.txt")).unwrap();
    let clean: Vec<(Domain, &str)> = source
        .split("\n\n")
        .map(|p| {
            let (d, t) = p.trim().split_once(": ").unwrap();
            (d.parse().unwrap(), t)
        })
        .collect();
    let mut clean_failures = Vec::new();
    for (i, (domain, text)) in clean.iter().enumerate() {
        let profile = if *domain == Domain::Diet { diet_profile() } else { teaching_profile() };
        if let Err(v) = validate_scenario(&scenario(text, profile), &ValidationRuleSet::for_domain(domain)) {
            clean_failures.push(format!("#{i}: {:?}", v));
        }
    }

    // each phrase goes into a 70-word clean diet scenario
    let base: Vec<&str> = clean[0].1.split_whitespace().collect();
    let keywords = KeywordList::default_list();
    let rules = ValidationRuleSet::for_domain(&Domain::Diet);
    let mut keyword_failures = Vec::new();
    for phrase in keywords.phrases() {
        let insert = format!("Later Ana mentions {phrase} briefly.");
        let keep = 70 - insert.split_whitespace().count();
        let text = format!("{} {insert}", base[..keep].join(" "));
        assert_eq!(text.split_whitespace().count(), 70);
        let tagged = match validate_scenario(&scenario(&text, diet_profile()), &rules) {
            Ok(()) => false,
            Err(v) => {
                v.iter().all(|x| x.tag() == "leakage_keyword")
                    && v.contains(&Violation::LeakageKeyword { phrase: phrase.clone() })
            }
        };
        if !tagged {
            keyword_failures.push(phrase.clone());
        }
    }

    let text = clean[1].1;
    rules.dedup_store.insert(&content_hash(text));
    let dup = validate_scenario(&scenario(&text.to_uppercase(), diet_profile()), &rules);
    let dup_ok = matches!(dup.as_ref().map_err(|v| v.as_slice()), Err([Violation::DuplicateHash { .. }]));

    vec![
        line(
            "9a blocklist soundness",
            keyword_failures.is_empty() && !keywords.is_empty(),
            format!("{} of {} phrases rejected with leakage_keyword; missed {:?}", keywords.phrases().len() - keyword_failures.len(), keywords.phrases().len(), keyword_failures),
        ),
        line(
            "9b clean fixtures",
            clean.len() == 20 && clean_failures.is_empty(),
            format!("{} of {} curated scenarios pass {:?}", clean.len() - clean_failures.len(), clean.len(), clean_failures),
        ),
        line("9c duplicate by hash", dup_ok, format!("re-cased duplicate -> {:?}", dup.err().map(|v| v.iter().map(|x| x.tag()).collect::<Vec<_>>()))),
    ]
}

// 10 ------------------------------------------------------------------

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap());
    }
    out
}

fn criterion_10() -> Vec<Line> {
    let config = workspace_root().join("fixtures/configs/diet_demo.toml");
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    let mut failures = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        for stage in ["extract", "generate", "exam", "analyze"] {
            let status = Command::new(env!("CARGO_BIN_EXE_praxbench"))
                .arg("--config")
                .arg(&config)
                .arg("--replay")
                .arg("--out-dir")
                .arg(&out)
                .arg(stage)
                .env("RUST_LOG", "warn")
                .status()
                .unwrap();
            if !status.success() {
                failures.push(format!("{run}/{stage}: {status}"));
            }
        }
        trees.push(tree(&out));
    }
    let identical = trees[0] == trees[1];
    vec![line(
        "10 replay determinism",
        failures.is_empty() && identical && trees[0].len() >= 20,
        format!("{} files per run, identical {identical}, failures {failures:?}", trees[0].len()),
    )]
}

// 11 ------------------------------------------------------------------

/// Three domains of teaching-scale data; `extra` shifts one Model×Domain cell.
fn three_domains(seed: u64, extra: f64) -> Vec<TrialRecord> {
    let mut trials = Vec::new();
    for (d, domain) in [Domain::Teaching, Domain::Diet, Domain::Caregiving].into_iter().enumerate() {
        let mut spec = GlmmSimSpec::teaching(seed * 3 + d as u64);
        spec.domain = domain.clone();
        spec.practices = spec.practices.iter().map(|p| format!("{}{p}", &domain.as_str()[..1])).collect();
        trials.extend(simulate_with_extra(&spec, |m, dom| if m == 1 && *dom == Domain::Diet { extra } else { 0.0 }));
    }
    trials
}

fn criterion_11() -> Vec<Line> {
    let options = FitOptions::default();
    let null_data = three_domains(500, 0.0);
    let fit = fit_glmm(&null_data, &ModelSpec::pooled_main_effects(), &options).unwrap();
    let same = likelihood_ratio_test(&fit, &fit).unwrap();
    let identical_ok = same.delta_chi2 == 0.0 && same.p_value == 1.0;

    let mut detected = 0;
    let mut dfs = Vec::new();
    for seed in 0..20 {
        let trials = three_domains(600 + seed, 0.5);
        let null = fit_glmm(&trials, &ModelSpec::pooled_main_effects(), &options).unwrap();
        let alt = fit_glmm(&trials, &ModelSpec::pooled_with_model_domain(), &options).unwrap();
        let r = likelihood_ratio_test(&null, &alt).unwrap();
        dfs.push(r.df);
        detected += usize::from(r.p_value < 0.05);
    }
    dfs.dedup();
    vec![
        line(
            "11a lrt identical specs",
            identical_ok,
            format!("delta_chi2 {}, p {}", same.delta_chi2, same.p_value),
        ),
        line("11b lrt power", detected >= 18, format!("{detected}/20 seeds detect the planted 0.5 interaction (need 18)")),
        line("11c lrt df", dfs == [14], format!("df {:?} (need 14)", dfs)),
    ]
}

#[test]
fn acceptance() {
    let criteria: Vec<fn() -> Vec<Line>> = vec![
        criterion_1,
        criteria_2_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
        criterion_11,
    ];
    // sequential so the timed criteria are not measured under contention
    let lines: Vec<Line> = criteria.into_iter().flat_map(|c| c()).collect();
    println!("acceptance:");
    for l in &lines {
        println!("  {} {:<30} {}", if l.pass { "PASS" } else { "FAIL" }, l.id, l.detail);
    }
    let failed: Vec<&str> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

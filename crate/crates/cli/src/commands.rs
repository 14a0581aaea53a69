//! Stage commands. Each reads its upstream artifacts from the output
//! directory, writes its own, and leaves a manifest behind.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use praxbench_core::corpus::{load_corpus, save_corpus, Dialogue, Domain, McqItem, Practice, Record, Scenario, TrialRecord};
use praxbench_core::exam::{administer, audit, sample_exam};
use praxbench_core::extract::{extract_practices, ExtractConfig, ReviewList};
use praxbench_core::factory::{derive_rng, run_generation, FactoryError, GenerationConfig, ValidationRuleSet};
use praxbench_core::gateway::{FixtureStore, Limiter, OpenAiBackend, OpenAiConfig, SyntheticBackend};
use praxbench_core::report::{self, AccuracyTable};
use praxbench_core::sim::{latent_fixture, LatentFixtureSpec};
use praxbench_core::stats::screening::ScreeningConfig;
use praxbench_core::stats::{
    bhpr, fit_glmm, likelihood_ratio_test, residual_cells, screen_practices, BhprResult, FitOptions, GlmmFit, LrtResult,
    ModelSpec, ResidualOptions, ResidualReport, ScreeningReport, Thresholds,
};
use praxbench_core::Gateway;
use serde::Serialize;

use crate::config::{EndpointKind, GatewayMode, RunConfig};
use crate::error::CliError;
use crate::manifest::Manifest;

pub const PRACTICES: &str = "practices.jsonl";
pub const SCENARIOS: &str = "scenarios.jsonl";
pub const MCQS: &str = "mcqs.jsonl";
pub const DIALOGUES: &str = "dialogues.jsonl";
pub const TRIALS: &str = "trials.jsonl";

/// Shared state for one invocation.
pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    store: Option<Arc<FixtureStore>>,
}

impl Context {
    pub fn new(config: RunConfig, out_dir: impl Into<PathBuf>) -> Result<Self, CliError> {
        config.validate()?;
        let out_dir = out_dir.into();
        std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
        let store = match (config.gateway.mode, &config.gateway.fixtures) {
            (GatewayMode::Replay, Some(path)) => {
                if !path.exists() {
                    return Err(CliError::MissingInput(path.clone()));
                }
                Some(Arc::new(FixtureStore::load(path)?))
            }
            (GatewayMode::Record, Some(path)) if path.exists() => Some(Arc::new(FixtureStore::load(path)?)),
            (GatewayMode::Record, _) => Some(Arc::new(FixtureStore::new())),
            _ => None,
        };
        Ok(Self { config, out_dir, store })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Gateway for a roster id. Replay mode never constructs a backend.
    pub fn gateway(&self, id: &str) -> Result<Gateway, CliError> {
        let limiter = Arc::new(Limiter::new(self.config.gateway.concurrency));
        if self.config.gateway.mode == GatewayMode::Replay {
            let store = self.store.clone().expect("replay store loaded");
            return Ok(Gateway::replay(id, store).with_limiter(limiter));
        }
        let endpoint = self
            .config
            .endpoints
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| CliError::Config(format!("endpoint `{id}` is not in the roster")))?;
        let backend: Arc<dyn praxbench_core::gateway::Backend> = match &endpoint.kind {
            EndpointKind::Synthetic { skill, leak_rate } => {
                Arc::new(SyntheticBackend::new(id).with_skill(*skill).with_leak_rate(*leak_rate))
            }
            EndpointKind::Openai {
                base_url,
                model,
                api_key_env,
            } => {
                let mut cfg = OpenAiConfig {
                    base_url: base_url.clone(),
                    model: model.clone(),
                    api_key_env: "OPENAI_API_KEY".into(),
                    timeout_secs: 60,
                };
                if let Some(env) = api_key_env {
                    cfg.api_key_env = env.clone();
                }
                Arc::new(OpenAiBackend::new(cfg)?)
            }
        };
        let gw = Gateway::live(id, backend).with_limiter(limiter);
        Ok(match (&self.store, self.config.gateway.mode) {
            (Some(store), GatewayMode::Record) => gw.recording_into(store.clone()),
            _ => gw,
        })
    }

    /// Persists recorded exchanges in record mode.
    fn flush_fixtures(&self) -> Result<(), CliError> {
        if let (GatewayMode::Record, Some(store), Some(path)) =
            (self.config.gateway.mode, &self.store, &self.config.gateway.fixtures)
        {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            store.save(path)?;
        }
        Ok(())
    }

    fn manifest(&self, stage: &str) -> Manifest {
        Manifest::new(stage, self.config.digest(), self.config.seed)
    }

    fn load<T: Record>(&self, path: &Path) -> Result<Vec<T>, CliError> {
        if !path.exists() {
            return Err(CliError::MissingInput(path.to_path_buf()));
        }
        Ok(load_corpus(path)?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("artifact serialises") + "\n";
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn default_prefix(domain: &Domain) -> String {
    match domain {
        Domain::Diet => "DG".into(),
        Domain::Teaching => "SM".into(),
        Domain::Caregiving => "CG".into(),
        Domain::Other(name) => name.chars().take(2).collect::<String>().to_uppercase(),
    }
}

pub fn cmd_extract(ctx: &Context) -> Result<(), CliError> {
    let domain = ctx.config.require_domain()?;
    let section = &ctx.config.extract;
    let input = section
        .input
        .clone()
        .ok_or_else(|| CliError::Config("extract.input is not set".into()))?;
    if !input.exists() {
        return Err(CliError::MissingInput(input));
    }
    let raw = std::fs::read_to_string(&input).map_err(|e| CliError::io(&input, e))?;
    let mut config = ExtractConfig::new(domain.clone(), section.id_prefix.clone().unwrap_or_else(|| default_prefix(&domain)));
    config.summarize = section.summarize;
    let mut manifest = ctx.manifest("extract");
    manifest.input(&input)?;
    if let Some(path) = &section.review {
        if !path.exists() {
            return Err(CliError::MissingInput(path.clone()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        config.review = ReviewList::parse(&text)?;
        manifest.input(path)?;
    }
    let gw = ctx.gateway(ctx.config.generator_id()?)?;
    let extraction = extract_practices(&raw, &gw, &config)?;
    ctx.flush_fixtures()?;

    let practices_path = ctx.path(PRACTICES);
    save_corpus(&extraction.practices, &practices_path)?;
    let report_path = ctx.path("extraction.json");
    write_json(&report_path, &extraction)?;
    manifest.output(&practices_path)?;
    manifest.output(&report_path)?;
    manifest.write(&ctx.out_dir)?;
    log::info!(
        "extracted {} practices ({} chunks skipped, {} dropped)",
        extraction.practices.len(),
        extraction.skipped_chunks.len(),
        extraction.dropped.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct GenerationLedger<'a> {
    failures: &'a [praxbench_core::factory::FailureRecord],
    retired: &'a [String],
    aborted: bool,
}

pub fn cmd_generate(ctx: &Context) -> Result<(), CliError> {
    let domain = ctx.config.require_domain()?;
    let seed = ctx.config.require_seed()?;
    let practices_path = ctx.path(PRACTICES);
    let practices: Vec<Practice> = ctx.load(&practices_path)?;
    let section = &ctx.config.generate;
    let mut config = GenerationConfig::new(domain.clone(), section.n_scenarios, seed);
    config.regeneration_cap = section.regeneration_cap;
    config.fixed_position = section.fixed_position;
    config.workers = section.workers.max(1);
    let rules = ValidationRuleSet::for_domain(&domain);

    let ledger_path = ctx.path("generation_ledger.json");
    let gw = if section.n_scenarios == 0 {
        None
    } else {
        Some(ctx.gateway(ctx.config.generator_id()?)?)
    };
    let output = match &gw {
        None => Default::default(),
        Some(gw) => match run_generation(&practices, &config, gw, &rules) {
            Ok(o) => o,
            Err(FactoryError::Aborted {
                failures,
                attempted,
                threshold,
                ledger,
            }) => {
                ctx.flush_fixtures()?;
                write_json(
                    &ledger_path,
                    &GenerationLedger {
                        failures: &ledger,
                        retired: &[],
                        aborted: true,
                    },
                )?;
                return Err(CliError::Gate {
                    message: format!("{failures} of {attempted} units failed (limit {threshold})"),
                    ledger: ledger_path,
                });
            }
            Err(e) => return Err(CliError::Factory(e)),
        },
    };
    ctx.flush_fixtures()?;

    let mut manifest = ctx.manifest("generate");
    manifest.input(&practices_path)?;
    let scenarios_path = ctx.path(SCENARIOS);
    let mcqs_path = ctx.path(MCQS);
    let dialogues_path = ctx.path(DIALOGUES);
    save_corpus::<Scenario>(&output.scenarios, &scenarios_path)?;
    save_corpus::<McqItem>(&output.mcqs, &mcqs_path)?;
    save_corpus::<Dialogue>(&output.dialogues, &dialogues_path)?;
    write_json(
        &ledger_path,
        &GenerationLedger {
            failures: &output.ledger,
            retired: &output.retired,
            aborted: false,
        },
    )?;
    for p in [&scenarios_path, &mcqs_path, &dialogues_path, &ledger_path] {
        manifest.output(p)?;
    }
    manifest.write(&ctx.out_dir)?;
    log::info!(
        "generated {} scenarios, {} MCQs, {} dialogues",
        output.scenarios.len(),
        output.mcqs.len(),
        output.dialogues.len()
    );
    Ok(())
}

pub fn cmd_exam(ctx: &Context) -> Result<(), CliError> {
    let seed = ctx.config.require_seed()?;
    let mcqs_path = ctx.path(MCQS);
    let mcqs: Vec<McqItem> = ctx.load(&mcqs_path)?;
    let plan = sample_exam(&mcqs, ctx.config.exam.n_scenarios, &mut derive_rng(seed, "exam", 0))?;
    let roster = ctx
        .config
        .examinees()
        .into_iter()
        .map(|id| ctx.gateway(&id).map(|g| (id, g)))
        .collect::<Result<Vec<_>, _>>()?;
    if roster.is_empty() && !plan.is_empty() {
        return Err(CliError::Config("no examinee endpoints configured".into()));
    }

    let checkpoint = ctx.path("exam_checkpoint.jsonl");
    let trials = administer(&plan, &mcqs, &roster, Some(&checkpoint))?;
    ctx.flush_fixtures()?;
    // completion order inside the checkpoint is not deterministic
    std::fs::remove_file(&checkpoint).map_err(|e| CliError::io(&checkpoint, e))?;

    let plan_path = ctx.path("exam_plan.json");
    let trials_path = ctx.path(TRIALS);
    let audit_path = ctx.path("audit.json");
    write_json(&plan_path, &plan)?;
    save_corpus(&trials, &trials_path)?;
    let report = audit(&trials, &mcqs);
    write_json(&audit_path, &report)?;

    let mut manifest = ctx.manifest("exam");
    manifest.input(&mcqs_path)?;
    for p in [&plan_path, &trials_path, &audit_path] {
        manifest.output(p)?;
    }
    manifest.write(&ctx.out_dir)?;
    if !report.ok() {
        return Err(CliError::Gate {
            message: format!("exam audit failed ({} mismatches)", report.mismatches.len()),
            ledger: audit_path,
        });
    }
    log::info!("administered {} trials", trials.len());
    Ok(())
}

fn load_trials(ctx: &Context, paths: &[PathBuf]) -> Result<(Vec<TrialRecord>, Vec<PathBuf>), CliError> {
    let paths: Vec<PathBuf> = if paths.is_empty() {
        vec![ctx.path(TRIALS)]
    } else {
        paths.to_vec()
    };
    let mut all = Vec::new();
    for p in &paths {
        all.extend(ctx.load::<TrialRecord>(p)?);
    }
    if all.is_empty() {
        return Err(CliError::Numerical(praxbench_core::StatsError::EmptyInput));
    }
    Ok((all, paths))
}

/// Everything the analysis computes, as written to `analysis.json`.
#[derive(Debug, Serialize)]
pub struct Analysis {
    pub fit: GlmmFit,
    pub screening: ScreeningReport,
    pub residuals: ResidualReport,
    pub bhpr: BhprResult,
    /// Model×Domain interaction test; only with more than one domain.
    pub lrt: Option<LrtResult>,
}

pub fn analyze(trials: &[TrialRecord], config: &RunConfig) -> Result<Analysis, CliError> {
    let domains: BTreeSet<&Domain> = trials.iter().map(|t| &t.domain).collect();
    let options = FitOptions::default();
    let (spec, lrt) = if domains.len() > 1 {
        let null = fit_glmm(trials, &ModelSpec::pooled_main_effects(), &options)?;
        let alt = fit_glmm(trials, &ModelSpec::pooled_with_model_domain(), &options)?;
        (ModelSpec::pooled_main_effects(), Some(likelihood_ratio_test(&null, &alt)?))
    } else {
        (ModelSpec::model_bloom(), None)
    };
    let fit = fit_glmm(trials, &spec, &options)?;
    if !fit.converged {
        log::warn!("fit did not converge: {}", fit.warnings.join("; "));
    }
    let chance = config.analyze.chance.unwrap_or_else(|| {
        let d = if domains.len() == 1 {
            domains.iter().next().map(|d| (*d).clone())
        } else {
            config.domain.clone()
        };
        d.unwrap_or(Domain::Teaching).chance_level()
    });
    let mut thresholds = Thresholds::with_chance(chance);
    if let Some(t) = config.analyze.model_separation {
        thresholds.model_separation = t;
    }
    if let Some(t) = config.analyze.bloom_separation {
        thresholds.bloom_separation = t;
    }
    let mut screening_config = ScreeningConfig::new(thresholds);
    screening_config.delta_model_source = config.analyze.delta_model_source;
    screening_config.rank_stability = config.analyze.rank_stability;
    let screening = screen_practices(&fit, trials, &screening_config)?;
    let residuals = residual_cells(&fit, trials, &ResidualOptions::default())?;
    Ok(Analysis {
        bhpr: bhpr(trials),
        fit,
        screening,
        residuals,
        lrt,
    })
}

fn write_descriptive(ctx: &Context, trials: &[TrialRecord], manifest: &mut Manifest) -> Result<(), CliError> {
    let table = AccuracyTable::from_trials(trials);
    for (name, text) in [
        ("accuracy.csv", table.to_csv()),
        ("accuracy.md", table.to_markdown()),
        ("null_rates.csv", report::null_rates(trials)),
    ] {
        let path = ctx.path(name);
        write_text(&path, &text)?;
        manifest.output(&path)?;
    }
    Ok(())
}

pub fn cmd_analyze(ctx: &Context, trial_paths: &[PathBuf], svg: bool) -> Result<(), CliError> {
    let (trials, paths) = load_trials(ctx, trial_paths)?;
    let mut manifest = ctx.manifest("analyze");
    for p in &paths {
        manifest.input(p)?;
    }
    let analysis = analyze(&trials, &ctx.config)?;
    let json_path = ctx.path("analysis.json");
    write_json(&json_path, &analysis)?;
    manifest.output(&json_path)?;
    write_descriptive(ctx, &trials, &mut manifest)?;
    let mut files = vec![
        ("fit.csv", report::fit_summary(&analysis.fit)),
        ("screening.csv", report::screening_csv(&analysis.screening)),
        ("screening_summary.csv", report::screening_summary(&analysis.screening)),
        ("sweep.csv", report::sweep_csv(&analysis.screening)),
        ("bhpr.csv", report::bhpr_csv(&analysis.bhpr)),
        ("residuals.csv", report::scatter_csv(&analysis.residuals)),
    ];
    if let Some(lrt) = &analysis.lrt {
        files.push(("lrt.csv", report::lrt_summary("model_x_domain", lrt)));
    }
    if svg {
        files.push(("residuals.svg", report::scatter_svg(&analysis.residuals)));
    }
    for (name, text) in files {
        let path = ctx.path(name);
        write_text(&path, &text)?;
        manifest.output(&path)?;
    }
    manifest.write(&ctx.out_dir)?;
    log::info!(
        "analysed {} trials: {} practices flagged, {} residual cells flagged",
        trials.len(),
        analysis.screening.flagged.len(),
        analysis.residuals.n_flagged()
    );
    Ok(())
}

/// Descriptive tables only; no model fitting.
pub fn cmd_report(ctx: &Context, trial_paths: &[PathBuf]) -> Result<(), CliError> {
    let (trials, paths) = load_trials(ctx, trial_paths)?;
    let mut manifest = ctx.manifest("report");
    for p in &paths {
        manifest.input(p)?;
    }
    write_descriptive(ctx, &trials, &mut manifest)?;
    manifest.write(&ctx.out_dir)
}

/// Writes the latent-threshold trial fixtures.
pub fn cmd_fixture(ctx: &Context) -> Result<(), CliError> {
    for (name, spec) in [
        ("teaching_trials.jsonl", LatentFixtureSpec::teaching()),
        ("diet_trials.jsonl", LatentFixtureSpec::diet()),
    ] {
        save_corpus(&latent_fixture(&spec), &ctx.path(name))?;
    }
    Ok(())
}

//! Executes one experiment for every configured seed.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use srpo_core::density::{self, MotivatingResult};
use srpo_core::mdp::HipMdpFamily;
use srpo_core::srpo::{self, TrainOutput};
use srpo_core::theory::{self, SuiteConfig};
use srpo_core::{solvers, PolicyTable};

use crate::config::{Experiment, Format, RunConfig};
use crate::manifest::{RunManifest, SeedRecord, SeedStatus};
use crate::output::{csv_bytes, json_bytes, write_atomic};

/// What one seed produced.
#[derive(Debug, Default)]
struct SeedOutcome {
    files: Vec<PathBuf>,
    final_mean_return: Option<f64>,
    counterexamples: Option<usize>,
}

struct SeedContext<'a> {
    cfg: &'a RunConfig,
    experiment: Experiment,
    family: &'a HipMdpFamily,
    seed: u64,
}

impl SeedContext<'_> {
    fn write(&self, out: &mut SeedOutcome, name: String, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.cfg.output_dir.join(&name), bytes)?;
        out.files.push(PathBuf::from(name));
        Ok(())
    }

    fn stem(&self, what: &str) -> String {
        format!("{what}_seed{}", self.seed)
    }
}

#[derive(Serialize)]
struct SolveRow {
    member: usize,
    theta: f64,
    state: usize,
    value: f64,
    greedy_action: usize,
}

#[derive(Serialize)]
struct SolvedMember {
    member: usize,
    theta: f64,
    v: Vec<f64>,
    q: Vec<Vec<f64>>,
    greedy_actions: Vec<usize>,
    expected_return: f64,
}

#[derive(Serialize)]
struct OccupancyRow {
    member: usize,
    theta: f64,
    state: usize,
    occupancy: f64,
}

#[derive(Serialize)]
struct MemberOccupancy {
    member: usize,
    theta: f64,
    occupancy: Vec<f64>,
    expected_return: f64,
}

#[derive(Serialize)]
struct TrainedMember {
    member: usize,
    theta: f64,
    final_return: f64,
    greedy_actions: Vec<usize>,
}

#[derive(Serialize)]
struct PolicyFile<'a> {
    experiment: Experiment,
    seed: u64,
    final_mean_return: f64,
    members: Vec<TrainedMember>,
    #[serde(skip_serializing_if = "Option::is_none")]
    discriminator: Option<&'a srpo::Discriminator>,
}

#[derive(Serialize)]
struct DensityRow {
    member_i: usize,
    member_j: usize,
    state_l1: f64,
    state_js: f64,
    action_l1: f64,
    action_js: f64,
}

fn theta(family: &HipMdpFamily, i: usize) -> f64 {
    family.theta_labels()[i]
}

fn greedy_actions(pi: &PolicyTable) -> Vec<usize> {
    (0..pi.n_states()).map(|s| pi.mode(s)).collect()
}

fn run_solve(ctx: &SeedContext) -> Result<SeedOutcome> {
    let mut members = Vec::new();
    for (i, m) in ctx.family.members().iter().enumerate() {
        let vt = solvers::solve_optimal(m)?;
        let pi = solvers::greedy_policy(&vt)?;
        let expected_return = solvers::expected_return(m, &pi)?;
        members.push(SolvedMember { member: i, theta: theta(ctx.family, i), greedy_actions: greedy_actions(&pi), v: vt.v, q: vt.q, expected_return });
    }
    let mut out = SeedOutcome::default();
    match ctx.cfg.format {
        Format::Csv => {
            let rows: Vec<SolveRow> = members
                .iter()
                .flat_map(|m| {
                    m.v.iter().enumerate().map(move |(s, v)| SolveRow {
                        member: m.member,
                        theta: m.theta,
                        state: s,
                        value: *v,
                        greedy_action: m.greedy_actions[s],
                    })
                })
                .collect();
            ctx.write(&mut out, format!("{}.csv", ctx.stem("solve")), &csv_bytes(&rows)?)?;
        }
        Format::Json => ctx.write(&mut out, format!("{}.json", ctx.stem("solve")), &json_bytes(&members)?)?,
    }
    Ok(out)
}

fn run_occupancy(ctx: &SeedContext) -> Result<SeedOutcome> {
    let mut members = Vec::new();
    for (i, m) in ctx.family.members().iter().enumerate() {
        let pi = solvers::greedy_policy(&solvers::solve_optimal(m)?)?;
        let d = solvers::occupancy(m, &pi)?;
        let expected_return = solvers::return_from_occupancy(m, &pi, &d);
        members.push(MemberOccupancy { member: i, theta: theta(ctx.family, i), occupancy: d.d, expected_return });
    }
    let mut out = SeedOutcome::default();
    match ctx.cfg.format {
        Format::Csv => {
            let rows: Vec<OccupancyRow> = members
                .iter()
                .flat_map(|m| {
                    m.occupancy.iter().enumerate().map(move |(s, d)| OccupancyRow { member: m.member, theta: m.theta, state: s, occupancy: *d })
                })
                .collect();
            ctx.write(&mut out, format!("{}.csv", ctx.stem("occupancy")), &csv_bytes(&rows)?)?;
        }
        Format::Json => ctx.write(&mut out, format!("{}.json", ctx.stem("occupancy")), &json_bytes(&members)?)?,
    }
    Ok(out)
}

fn train(ctx: &SeedContext) -> Result<TrainOutput> {
    let (cfg, family, seed) = (ctx.cfg, ctx.family, ctx.seed);
    Ok(match ctx.experiment {
        Experiment::TrainSrpo => srpo::srpo_train(family, &cfg.srpo, &cfg.learner, seed)?,
        Experiment::TrainBaseline => srpo::baseline_train(family, &cfg.learner, seed)?,
        Experiment::TrainBehaviorReg => srpo::behavior_regularized_train(family, &cfg.srpo, &cfg.learner, seed)?,
        other => return Err(anyhow!("{other} is not a training experiment")),
    })
}

fn run_training(ctx: &SeedContext) -> Result<SeedOutcome> {
    let trained = train(ctx)?;
    let mut out = SeedOutcome::default();
    match ctx.cfg.format {
        Format::Csv => ctx.write(&mut out, format!("{}.csv", ctx.stem("log")), &csv_bytes(&trained.log)?)?,
        Format::Json => ctx.write(&mut out, format!("{}.json", ctx.stem("log")), &json_bytes(&trained.log)?)?,
    }
    let final_mean_return = trained.final_mean_return();
    let members = trained
        .policies
        .iter()
        .enumerate()
        .map(|(i, pi)| TrainedMember {
            member: i,
            theta: theta(ctx.family, i),
            final_return: trained.final_return_of(i).unwrap_or(f64::NAN),
            greedy_actions: greedy_actions(pi),
        })
        .collect();
    let policy = PolicyFile {
        experiment: ctx.experiment,
        seed: ctx.seed,
        final_mean_return,
        members,
        discriminator: trained.discriminator.as_ref(),
    };
    ctx.write(&mut out, format!("{}.json", ctx.stem("policy")), &json_bytes(&policy)?)?;
    out.final_mean_return = Some(final_mean_return);
    Ok(out)
}

fn run_theory(ctx: &SeedContext) -> Result<SeedOutcome> {
    let settings = &ctx.cfg.theory;
    let suite = SuiteConfig { n_random_policies: settings.n_random_policies };
    let reports = theory::generate_report_suite_with(ctx.family, settings.n_pairs, ctx.seed, &suite)?;
    let mut out = SeedOutcome::default();
    match ctx.cfg.format {
        Format::Csv => {
            let rows = theory::summary_rows(&reports);
            ctx.write(&mut out, format!("{}.csv", ctx.stem("theory")), &csv_bytes(&rows)?)?;
        }
        Format::Json => {
            let mut buf = Vec::new();
            theory::write_jsonl(&reports, &mut buf)?;
            ctx.write(&mut out, format!("{}.jsonl", ctx.stem("theory")), &buf)?;
        }
    }
    let counter = reports.iter().flat_map(|r| &r.checks).filter(|c| c.is_counterexample()).count();
    out.counterexamples = Some(counter);
    Ok(out)
}

fn run_density(ctx: &SeedContext) -> Result<SeedOutcome> {
    let res: MotivatingResult = density::motivating_example_with(ctx.family, ctx.seed, &ctx.cfg.density)?;
    let mut out = SeedOutcome::default();
    match ctx.cfg.format {
        Format::Csv => {
            let rows: Vec<DensityRow> = res
                .comparisons
                .iter()
                .map(|c| DensityRow {
                    member_i: c.members.0,
                    member_j: c.members.1,
                    state_l1: c.state.l1_distance,
                    state_js: c.state.js_divergence,
                    action_l1: c.action.l1_distance,
                    action_js: c.action.js_divergence,
                })
                .collect();
            ctx.write(&mut out, format!("{}.csv", ctx.stem("density")), &csv_bytes(&rows)?)?;
        }
        Format::Json => ctx.write(&mut out, format!("{}.json", ctx.stem("density")), &json_bytes(&res)?)?,
    }
    Ok(out)
}

fn run_seed(ctx: &SeedContext) -> Result<SeedOutcome> {
    match ctx.experiment {
        Experiment::Solve => run_solve(ctx),
        Experiment::Occupancy => run_occupancy(ctx),
        Experiment::TrainSrpo | Experiment::TrainBaseline | Experiment::TrainBehaviorReg => run_training(ctx),
        Experiment::VerifyTheory => run_theory(ctx),
        Experiment::Density => run_density(ctx),
    }
}

/// Run one seed, turning errors and panics into a failed record.
fn isolated(ctx: &SeedContext) -> SeedRecord {
    log::info!("{} seed {}: start", ctx.experiment, ctx.seed);
    let result = panic::catch_unwind(AssertUnwindSafe(|| run_seed(ctx)))
        .unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(anyhow!("panicked: {msg}"))
        });
    match result {
        Ok(out) => {
            let mut record = SeedRecord {
                seed: ctx.seed,
                status: SeedStatus::Ok,
                files: out.files,
                error: None,
                final_mean_return: out.final_mean_return,
                counterexamples: out.counterexamples,
            };
            if let Some(n) = out.counterexamples.filter(|&n| n > 0) {
                record.status = SeedStatus::Failed;
                record.error = Some(format!("{n} premise-holding counterexamples"));
            }
            log::info!("{} seed {}: {:?}", ctx.experiment, ctx.seed, record.status);
            record
        }
        Err(e) => {
            log::error!("{} seed {} failed: {e:#}", ctx.experiment, ctx.seed);
            SeedRecord {
                seed: ctx.seed,
                status: SeedStatus::Failed,
                files: Vec::new(),
                error: Some(format!("{e:#}")),
                final_mean_return: None,
                counterexamples: None,
            }
        }
    }
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

/// Validate `cfg`, run every seed with at most `parallel` seeds at a time and
/// write the manifest. Seed failures are recorded in the manifest, not returned.
pub fn run(cfg: &RunConfig, parallel: usize) -> Result<RunManifest> {
    cfg.validate()?;
    cfg.prepare_output_dir()?;
    let experiment = cfg.experiment.expect("validated");
    let config_hash = cfg.hash()?;
    let started_at = timestamp();
    let family = cfg.env.build().context("building the environment family")?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .context("starting the worker pool")?;
    let seeds = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| isolated(&SeedContext { cfg, experiment, family: &family, seed }))
            .collect::<Vec<_>>()
    });

    let manifest = RunManifest {
        experiment,
        config_hash,
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: timestamp(),
        env: cfg.env.clone(),
        seeds,
    };
    manifest.write(&cfg.output_dir)?;
    Ok(manifest)
}

/// Resolve a manifest's per-seed files against its directory.
pub fn seed_files(manifest_path: &Path, manifest: &RunManifest) -> Vec<PathBuf> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    manifest.seeds.iter().flat_map(|s| s.files.iter().map(|f| dir.join(f))).collect()
}

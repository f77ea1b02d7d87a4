//! `faceforge` command-line pipeline: seeded, resumable stages from seed
//! scans to geometry images, kernel statistics and evaluation reports.

pub mod config;
pub mod error;
pub mod stages;
pub mod stamp;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{Config, EvalMode};
use crate::error::CliError;
use crate::stages::{with_dependencies, Pipeline, Stage};
use crate::stamp::{append_ledger, hash_json, hash_tree, LedgerEntry, Stamp, PARTIAL, STAMP};

#[derive(Debug, Parser)]
#[command(name = "faceforge", version, about = "Synthesize 3D face corpora and evaluate face identification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Output root.
    #[arg(long, global = true, default_value = "faceforge-out")]
    pub out: PathBuf,
    /// Keep per-item files of an interrupted stage instead of starting it over.
    #[arg(long, global = true)]
    pub resume: bool,
    /// Re-run stages even when their stamps match.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pairwise shape distances between input identities.
    Distances,
    /// Most dissimilar or most similar identity pairs.
    Pairs,
    /// Midpoint identities from the selected pairs.
    Synth,
    /// Occlusion-aware views from the camera layout.
    Views,
    /// Three-channel geometry images of every view.
    Images,
    /// Window variance and keypoint density per kernel size.
    Kstats,
    /// Identification and verification reports from feature files.
    Eval(EvalArgs),
    /// Every stage in order; eval runs when configured.
    All,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Feature file (F3DF or CSV) used for every manifest entry.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<EvalMode>,
    #[arg(long)]
    pub openness: Option<f64>,
    /// Exact number of unknown identities; overrides --openness.
    #[arg(long)]
    pub unknowns: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Skipped,
}

pub fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    if let Command::Eval(a) = &cli.command {
        if let Some(m) = &a.manifest {
            cfg.eval.manifest = Some(m.clone());
            cfg.eval.synthetic = None;
        }
        if a.features.is_some() {
            cfg.eval.features = a.features.clone();
        }
        if let Some(m) = a.mode {
            cfg.eval.mode = m;
        }
        if let Some(o) = a.openness {
            cfg.eval.openness = o;
            cfg.eval.unknowns = None;
        }
        if a.unknowns.is_some() {
            cfg.eval.unknowns = a.unknowns;
        }
        if let Some(f) = a.folds {
            cfg.eval.folds = f;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn requested(cli: &Cli, cfg: &Config) -> Vec<Stage> {
    match cli.command {
        Command::Distances => vec![Stage::Distances],
        Command::Pairs => vec![Stage::Pairs],
        Command::Synth => vec![Stage::Synth],
        Command::Views => vec![Stage::Views],
        Command::Images => vec![Stage::Images],
        Command::Kstats => vec![Stage::Kstats],
        Command::Eval(_) => vec![Stage::Eval],
        Command::All => {
            let mut v = vec![Stage::Kstats];
            if cfg.eval.is_configured() {
                v.push(Stage::Eval);
            }
            v
        }
    }
}

fn check_inputs(stages: &[Stage], cfg: &Config) -> Result<(), CliError> {
    let needs_input = stages.iter().any(|s| *s != Stage::Eval);
    if needs_input {
        match (&cfg.input.dir, &cfg.input.synthetic) {
            (None, None) => return Err(CliError::Config("no input: set input.dir or input.synthetic".into())),
            (Some(d), _) if !d.is_dir() => {
                return Err(CliError::Config(format!("input directory {} does not exist", d.display())))
            }
            _ => {}
        }
    }
    if stages.contains(&Stage::Eval) {
        match (&cfg.eval.manifest, &cfg.eval.synthetic) {
            (None, None) => return Err(CliError::Config("eval needs --manifest or eval.synthetic".into())),
            (Some(m), _) if !m.is_file() => {
                return Err(CliError::Config(format!("manifest {} does not exist", m.display())))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Runs one stage unless its stamp shows identical config and inputs with
/// untouched outputs.
fn run_stage(
    p: &Pipeline,
    s: Stage,
    upstream: &[(Stage, String)],
    resume: bool,
    force: bool,
) -> Result<(Outcome, Stamp), (String, String, String)> {
    let config_hash = hash_json(&p.stage_config(s));
    let dir = p.dir(s);
    let input_hash = p.input_hash(s, upstream).map_err(|e| (config_hash.clone(), String::new(), e))?;
    let fail = |e: String| (config_hash.clone(), input_hash.clone(), e);
    let want = |output_hash: String| Stamp {
        stage: s.name().into(),
        seed: p.cfg.seed,
        config_hash: config_hash.clone(),
        input_hash: input_hash.clone(),
        output_hash,
    };
    if !force {
        if let Some(st) = Stamp::read(&dir, STAMP) {
            if st.config_hash == config_hash && st.input_hash == input_hash {
                let now = hash_tree(&dir).map_err(|e| fail(e.to_string()))?;
                if now == st.output_hash {
                    return Ok((Outcome::Skipped, st));
                }
                log::info!("{}: outputs changed since the last run; recomputing", s.name());
            }
        }
    }
    let partial = want(String::new());
    let keep = resume && !force && Stamp::read(&dir, PARTIAL).is_some_and(|st| st == partial);
    if !keep && dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| fail(e.to_string()))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| fail(e.to_string()))?;
    let _ = std::fs::remove_file(dir.join(STAMP));
    partial.write(&dir, PARTIAL).map_err(|e| fail(e.to_string()))?;
    p.execute(s, keep).map_err(fail)?;
    let stamp = want(hash_tree(&dir).map_err(|e| fail(e.to_string()))?);
    std::fs::remove_file(dir.join(PARTIAL)).map_err(|e| fail(e.to_string()))?;
    stamp.write(&dir, STAMP).map_err(|e| fail(e.to_string()))?;
    Ok((Outcome::Ran, stamp))
}

/// Executes the requested stages and their prerequisites. Every attempt is
/// appended to the run ledger at the output root.
pub fn run_stages(cfg: Config, out: &Path, stages: &[Stage], resume: bool, force: bool) -> Result<Vec<(Stage, Outcome)>, CliError> {
    let plan = with_dependencies(stages);
    check_inputs(&plan, &cfg)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Config(format!("{}: {e}", out.display())))?;
    let p = Pipeline {
        cfg,
        out: out.to_path_buf(),
    };
    let mut done: Vec<(Stage, String)> = Vec::new();
    let mut outcomes = Vec::new();
    for s in plan {
        let upstream: Vec<(Stage, String)> = done.iter().filter(|(d, _)| s.deps().contains(d)).cloned().collect();
        let t = Instant::now();
        let result = run_stage(&p, s, &upstream, resume, force);
        let secs = t.elapsed().as_secs_f64();
        let entry = match &result {
            Ok((o, st)) => LedgerEntry {
                stage: s.name().into(),
                status: if *o == Outcome::Ran { "ran" } else { "skipped" }.into(),
                duration_s: secs,
                config_hash: st.config_hash.clone(),
                input_hash: st.input_hash.clone(),
                output_hash: Some(st.output_hash.clone()),
                error: None,
            },
            Err((c, i, e)) => LedgerEntry {
                stage: s.name().into(),
                status: "failed".into(),
                duration_s: secs,
                config_hash: c.clone(),
                input_hash: i.clone(),
                output_hash: None,
                error: Some(e.clone()),
            },
        };
        if let Err(e) = append_ledger(out, &entry) {
            log::warn!("could not append to the run ledger: {e}");
        }
        match result {
            Ok((o, st)) => {
                log::info!("{}: {} in {secs:.2}s", s.name(), entry.status);
                done.push((s, st.output_hash));
                outcomes.push((s, o));
            }
            Err((_, _, msg)) => {
                return Err(CliError::Stage {
                    stage: s.name(),
                    msg,
                })
            }
        }
    }
    Ok(outcomes)
}

pub fn run(cli: &Cli) -> Result<Vec<(Stage, Outcome)>, CliError> {
    let cfg = load_config(cli)?;
    #[cfg(feature = "parallel")]
    if cli.common.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.common.workers).build_global() {
            log::warn!("worker pool already configured: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    if cli.common.workers > 1 {
        log::warn!("built without the parallel feature; --workers ignored");
    }
    let stages = requested(cli, &cfg);
    run_stages(cfg, &cli.common.out, &stages, cli.common.resume, cli.common.force)
}

//! Command implementations: input loading with provenance hashes, output
//! tables with embedded manifests, and the error-to-exit-code mapping.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use copa_core::autodiff::checkpoint::Checkpoint;
use copa_core::comms::{CommsConfig, StrategyLedger};
use copa_core::env::{parse_scenario_set, write_scenario_set, Scenario};
use copa_core::eval::{self, BaselinePolicy};
use copa_core::manifest::{content_hash, manifest_header};
use copa_core::trainer::config::RunConfig;
use copa_core::trainer::rollout::rollout_episode;
use copa_core::trainer::run::{train as train_loop, MetricsRow, TrainSink};
use copa_core::trainer::{ModelBundle, TrainError};
use copa_core::verify::{run_suite, SuiteKind};

pub enum CliError {
    /// Bad configuration or malformed input files — exit code 2.
    Config(String),
    /// Anything else that stops the run — exit code 1.
    Failure(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failure(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Failure(m) => m,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Config(m),
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

// ------------------------------------------------------------ input files

struct LoadedConfig {
    cfg: RunConfig,
    hash: String,
    path: String,
}

fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let cfg = RunConfig::parse(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(LoadedConfig {
        cfg,
        hash: content_hash(text.as_bytes()),
        path: path.display().to_string(),
    })
}

struct LoadedSet {
    set: Vec<(u64, Scenario)>,
    hash: String,
    path: String,
}

fn load_scenarios(path: &Path) -> Result<LoadedSet, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read scenarios {}: {e}", path.display())))?;
    let set = parse_scenario_set(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(LoadedSet {
        set,
        hash: content_hash(text.as_bytes()),
        path: path.display().to_string(),
    })
}

struct LoadedModel {
    bundle: ModelBundle,
    hash: String,
    path: String,
}

fn load_model(path: &Path) -> Result<LoadedModel, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Failure(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let ck = Checkpoint::read_from(&mut bytes.as_slice())
        .map_err(|e| CliError::Failure(format!("corrupt checkpoint {}: {e}", path.display())))?;
    let bundle = ModelBundle::from_checkpoint(ck)?;
    Ok(LoadedModel {
        bundle,
        hash: content_hash(&bytes),
        path: path.display().to_string(),
    })
}

fn apply_period(cfg: &mut RunConfig, period: Option<usize>) -> Result<(), CliError> {
    if let Some(p) = period {
        cfg.trainer.period = p;
        cfg.validate().map_err(|e| CliError::Config(format!("--period {p}: {e}")))?;
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<(), CliError> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(CliError::Config(format!("β must be finite and ≥ 0, got {beta}")));
    }
    Ok(())
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, contents)?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    if let Some(path) = out {
        write_output(path, contents)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

// ----------------------------------------------------------------- train

/// Streams metrics rows to `metrics.csv` as they arrive and saves periodic
/// checkpoints; write errors are deferred so the training loop stays
/// oblivious to the file system.
struct FileSink {
    writer: io::BufWriter<fs::File>,
    deferred: Option<io::Error>,
    outdir: PathBuf,
    seed: u64,
    config_hash: String,
}

impl FileSink {
    fn new(
        metrics_path: &Path,
        header: &str,
        outdir: PathBuf,
        seed: u64,
        config_hash: String,
    ) -> Result<Self, CliError> {
        let file = fs::File::create(metrics_path)?;
        let mut writer = io::BufWriter::new(file);
        writer.write_all(header.as_bytes())?;
        writer.write_all(b"step,mean_return,loss_rl,loss_var,f,epsilon\n")?;
        Ok(FileSink { writer, deferred: None, outdir, seed, config_hash })
    }

    fn stamp(&self, ck: &mut Checkpoint) {
        ck.set_str("command", "train");
        ck.set_u64("seed", self.seed);
        ck.set_str("config_hash", &self.config_hash);
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush()?;
        match self.deferred {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }
}

impl TrainSink for FileSink {
    fn on_metrics(&mut self, row: &MetricsRow) {
        println!(
            "step {:>9}  return {:>10.3}  loss_rl {:>12.6}  loss_var {:>12.6}  f {:>6.4}  eps {:.4}",
            row.step, row.mean_return, row.loss_rl, row.loss_var, row.f, row.epsilon
        );
        if self.deferred.is_some() {
            return;
        }
        let line = format!(
            "{},{},{},{},{},{}\n",
            row.step, row.mean_return, row.loss_rl, row.loss_var, row.f, row.epsilon
        );
        let r = self
            .writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush());
        if let Err(e) = r {
            self.deferred = Some(e);
        }
    }

    fn on_checkpoint(&mut self, bundle: &ModelBundle) -> Result<(), TrainError> {
        let mut ck = bundle.to_checkpoint();
        self.stamp(&mut ck);
        let path = self.outdir.join(format!("checkpoint-{:09}.ckpt", bundle.env_steps));
        ck.save(&path)?;
        println!("checkpoint {}", path.display());
        Ok(())
    }
}

pub fn train(config: &Path, seed: u64, out: &Path, resume: Option<&Path>) -> Result<(), CliError> {
    let lc = load_config(config)?;
    fs::create_dir_all(out)?;
    let metrics_path = out.join("metrics.csv");
    if metrics_path.exists() {
        return Err(CliError::Config(format!(
            "{} already holds a run (metrics.csv exists); every run owns a fresh directory",
            out.display()
        )));
    }
    let resumed = resume.map(load_model).transpose()?;

    let mut pairs = vec![
        ("seed", seed.to_string()),
        ("config", lc.path.clone()),
        ("config_hash", lc.hash.clone()),
        ("env", lc.cfg.env.name().to_string()),
        ("split", lc.cfg.split.name().to_string()),
    ];
    if let Some(m) = &resumed {
        pairs.push(("resume_checkpoint", m.path.clone()));
        pairs.push(("resume_checkpoint_hash", m.hash.clone()));
    }
    let header = manifest_header("train", &pairs);

    let mut sink = FileSink::new(&metrics_path, &header, out.to_path_buf(), seed, lc.hash.clone())?;
    let outcome = train_loop(&lc.cfg, seed, resumed.map(|m| m.bundle), &mut sink)?;
    let rows = outcome.rows.len();
    sink.finish()?;

    let mut ck = outcome.bundle.to_checkpoint();
    ck.set_str("command", "train");
    ck.set_u64("seed", seed);
    ck.set_str("config_hash", &lc.hash);
    let model_path = out.join("model.ckpt");
    ck.save(&model_path)?;
    write_output(&out.join("config.txt"), &format!("{header}{}", lc.cfg.to_text()))?;

    let saved_hash = content_hash(&fs::read(&model_path)?);
    println!(
        "done: {} env steps, {} episodes, {} updates, {} metrics rows",
        outcome.bundle.env_steps, outcome.bundle.episodes, outcome.bundle.updates, rows
    );
    println!("model {} ({})", model_path.display(), &saved_hash[..12]);
    Ok(())
}

// ------------------------------------------------------------------ eval

pub fn eval(
    config: &Path,
    checkpoints: &[PathBuf],
    scenarios: &Path,
    beta: f64,
    period: Option<usize>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    check_beta(beta)?;
    let lc = load_config(config)?;
    let mut cfg = lc.cfg;
    apply_period(&mut cfg, period)?;
    let ls = load_scenarios(scenarios)?;
    let models: Vec<LoadedModel> = checkpoints.iter().map(|p| load_model(p)).collect::<Result<_, _>>()?;

    let mut pairs = vec![
        ("config", lc.path.clone()),
        ("config_hash", lc.hash.clone()),
        ("scenarios", ls.path.clone()),
        ("scenarios_hash", ls.hash.clone()),
        ("beta", beta.to_string()),
        ("period", cfg.trainer.period.to_string()),
    ];
    for m in &models {
        pairs.push(("checkpoint", m.path.clone()));
        pairs.push(("checkpoint_hash", m.hash.clone()));
    }
    let header = manifest_header("eval", &pairs);

    let mut body = String::from("model,scenario,seed,return\n");
    let mut summary = String::new();
    let mut means = Vec::new();
    for (mi, m) in models.iter().enumerate() {
        let rep = eval::evaluate(&cfg, &m.bundle, &ls.set, beta)?;
        for (i, ((sd, _), r)) in ls.set.iter().zip(&rep.returns).enumerate() {
            writeln!(body, "{mi},{i},{sd},{r}").unwrap();
        }
        writeln!(
            summary,
            "# model_{mi} mean={} stderr_scenarios={} f={} deliveries={} agent_steps={} n={}",
            rep.mean,
            rep.stderr,
            rep.f,
            rep.deliveries,
            rep.agent_steps,
            rep.returns.len()
        )
        .unwrap();
        means.push(rep.mean);
    }
    if models.len() > 1 {
        let (mm, ms) = eval::mean_stderr(&means);
        writeln!(summary, "# models mean={mm} stderr_models={ms} n={}", means.len()).unwrap();
    }

    print!("{summary}");
    emit(out, &format!("{header}{body}{summary}"))
}

// ------------------------------------------------------------ sweep-beta

pub fn sweep_beta(
    config: &Path,
    checkpoint: &Path,
    scenarios: &Path,
    betas: &[f64],
    period: Option<usize>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    for &b in betas {
        check_beta(b)?;
    }
    let lc = load_config(config)?;
    let mut cfg = lc.cfg;
    apply_period(&mut cfg, period)?;
    let ls = load_scenarios(scenarios)?;
    let m = load_model(checkpoint)?;

    let rows = eval::sweep_beta(&cfg, &m.bundle, &ls.set, betas)?;

    let pairs = vec![
        ("config", lc.path.clone()),
        ("config_hash", lc.hash.clone()),
        ("scenarios", ls.path.clone()),
        ("scenarios_hash", ls.hash.clone()),
        ("checkpoint", m.path.clone()),
        ("checkpoint_hash", m.hash.clone()),
        ("period", cfg.trainer.period.to_string()),
    ];
    let header = manifest_header("sweep-beta", &pairs);

    let mut body = String::from("beta,f_replay,mean_return,stderr,f_live\n");
    for r in &rows {
        writeln!(body, "{},{},{},{},{}", r.beta, r.f_replay, r.mean_return, r.stderr, r.f_live)
            .unwrap();
        println!(
            "beta {:>8.3}  f_replay {:.4}  return {:>10.3} ± {:.3}  f_live {:.4}",
            r.beta, r.f_replay, r.mean_return, r.stderr, r.f_live
        );
    }
    emit(out, &format!("{header}{body}"))
}

// -------------------------------------------------------------- baseline

pub fn baseline(
    policy: BaselinePolicy,
    config: &Path,
    scenarios: &Path,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let lc = load_config(config)?;
    let ls = load_scenarios(scenarios)?;
    let rep = eval::run_baseline(&lc.cfg, policy, &ls.set)?;

    let pairs = vec![
        ("policy", policy.name().to_string()),
        ("config", lc.path.clone()),
        ("config_hash", lc.hash.clone()),
        ("scenarios", ls.path.clone()),
        ("scenarios_hash", ls.hash.clone()),
        ("env", lc.cfg.env.name().to_string()),
    ];
    let header = manifest_header("baseline", &pairs);

    let mut body = String::from("scenario,seed,return\n");
    for (i, ((sd, _), r)) in ls.set.iter().zip(&rep.returns).enumerate() {
        writeln!(body, "{i},{sd},{r}").unwrap();
    }
    let summary = format!(
        "# baseline={} mean={} stderr_scenarios={} n={}\n",
        policy.name(),
        rep.mean,
        rep.stderr,
        rep.returns.len()
    );
    print!("{summary}");
    emit(out, &format!("{header}{body}{summary}"))
}

// ---------------------------------------------------------------- verify

pub fn verify(
    suite: Option<SuiteKind>,
    trials: Option<usize>,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let kinds: Vec<SuiteKind> = match suite {
        Some(k) => vec![k],
        None => SuiteKind::all().to_vec(),
    };
    let mut text = String::new();
    let mut failed = Vec::new();
    for k in kinds {
        let rep = run_suite(k, trials.unwrap_or_else(|| k.default_trials()), seed);
        print!("{}", rep.render());
        io::stdout().flush().ok();
        text.push_str(&rep.render());
        if !rep.pass {
            failed.push(rep.suite);
        }
    }
    let header = manifest_header("verify", &[("seed", seed.to_string())]);
    emit(out, &format!("{header}{text}"))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failure(format!("suites failed: {}", failed.join(", "))))
    }
}

// ---------------------------------------------------------- export-trace

pub fn export_trace(
    config: &Path,
    checkpoint: &Path,
    scenarios: &Path,
    index: usize,
    beta: f64,
    period: Option<usize>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    check_beta(beta)?;
    let lc = load_config(config)?;
    let mut cfg = lc.cfg;
    apply_period(&mut cfg, period)?;
    let ls = load_scenarios(scenarios)?;
    let m = load_model(checkpoint)?;
    let (seed, scen) = ls.set.get(index).ok_or_else(|| {
        CliError::Config(format!("scenario index {index} out of range (set has {})", ls.set.len()))
    })?;

    let mut env = cfg.make_env()?;
    let dims = cfg.net_dims(env.as_ref());
    if dims != m.bundle.dims {
        return Err(CliError::Config(format!(
            "checkpoint dims {:?} do not match config dims {dims:?}",
            m.bundle.dims
        )));
    }
    let comms = CommsConfig::new(cfg.trainer.period, beta, dims.d_z).map_err(TrainError::from)?;
    let ep = rollout_episode(
        env.as_mut(),
        scen,
        &m.bundle.online,
        &m.bundle.dims,
        &comms,
        cfg.trainer.coach_enabled,
        0.0,
        *seed,
    )?;

    // Re-run the gate over the recorded proposals (deterministic, same
    // decisions) to recover the per-tick delivery counts.
    let mut sent_at: HashMap<usize, usize> = HashMap::new();
    let mut ledger = StrategyLedger::new(dims.d_z);
    for tick in &ep.proposals {
        let sent = ledger
            .tick(tick.step, &comms, &tick.items)
            .map_err(TrainError::from)?
            .iter()
            .filter(|d| d.sent)
            .count();
        sent_at.insert(tick.step, sent);
    }

    let n_slots = ep.record.steps.first().map(|s| s.alive.len()).unwrap_or(0);
    let mut body = String::from("step,tick,delivered,reward,cum_return");
    for i in 0..n_slots {
        write!(body, ",alive_{i},action_{i}").unwrap();
    }
    body.push('\n');
    let mut cum = 0.0;
    for (t, s) in ep.record.steps.iter().enumerate() {
        cum += s.reward;
        let is_tick = t % cfg.trainer.period == 0;
        let delivered = sent_at.get(&t).copied().unwrap_or(0);
        write!(body, "{t},{},{delivered},{},{}", is_tick as u8, s.reward, cum).unwrap();
        for i in 0..n_slots {
            write!(body, ",{},{}", s.alive[i] as u8, s.actions[i]).unwrap();
        }
        body.push('\n');
    }

    let pairs = vec![
        ("config", lc.path.clone()),
        ("config_hash", lc.hash.clone()),
        ("scenarios", ls.path.clone()),
        ("scenarios_hash", ls.hash.clone()),
        ("checkpoint", m.path.clone()),
        ("checkpoint_hash", m.hash.clone()),
        ("index", index.to_string()),
        ("seed", seed.to_string()),
        ("beta", beta.to_string()),
        ("period", cfg.trainer.period.to_string()),
    ];
    let header = manifest_header("export-trace", &pairs);

    println!(
        "scenario {index}: {} steps, return {}, deliveries {} over {} agent-steps",
        ep.record.len(),
        ep.record.ret,
        ep.deliveries,
        ep.agent_steps
    );
    emit(out, &format!("{header}{body}"))
}

// --------------------------------------------------------- gen-scenarios

pub fn gen_scenarios(config: &Path, count: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    let lc = load_config(config)?;
    let set = eval::generate_scenario_set(&lc.cfg, count, seed)?;
    let pairs = vec![
        ("config", lc.path.clone()),
        ("config_hash", lc.hash.clone()),
        ("env", lc.cfg.env.name().to_string()),
        ("split", lc.cfg.split.name().to_string()),
        ("count", count.to_string()),
        ("seed", seed.to_string()),
    ];
    let header = manifest_header("gen-scenarios", &pairs);
    write_output(out, &format!("{header}{}", write_scenario_set(&set)))?;
    println!("wrote {count} scenarios to {}", out.display());
    Ok(())
}

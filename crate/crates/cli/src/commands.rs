use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use magin::config::{seed_from_env, to_config_string, BITS_PER_MB};
use magin::mappo::{evaluate, EvalSummary, Policy, Trainer};
use magin::nn::Checkpoint;
use magin::{load_config, Range, ScenarioConfig, TrainConfig, Variant};
use rayon::prelude::*;

use crate::output::{
    checkpoint_name, prepare_run_dir, summary_header, summary_values, write_file, Manifest, MetricsWriter,
    CSV_SCHEMA, MANIFEST_FILE, METRICS_FILE, SNAPSHOT_FILE,
};

pub const VERSION: &str = concat!("magin ", env!("CARGO_PKG_VERSION"));

/// Config file (or defaults) with the seed resolved as flag, then
/// environment, then file.
pub fn resolve_config(path: Option<&Path>, seed: Option<u64>) -> Result<(ScenarioConfig, TrainConfig)> {
    let (scenario, mut train) = match path {
        Some(p) => load_config(p).with_context(|| format!("loading {}", p.display()))?,
        None => (ScenarioConfig::default(), TrainConfig::default()),
    };
    if let Some(s) = seed.or_else(seed_from_env) {
        train.seed = s;
    }
    Ok((scenario, train))
}

pub struct TrainArgs {
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
    pub out: PathBuf,
    pub checkpoint_every: usize,
}

/// Trains and writes the run directory; returns the final checkpoint path.
pub fn train(args: TrainArgs) -> Result<PathBuf> {
    let TrainArgs {
        scenario,
        train,
        out,
        checkpoint_every,
    } = args;
    let ck_dir = prepare_run_dir(&out)?;
    write_file(&out.join(SNAPSHOT_FILE), &to_config_string(&scenario, &train))?;
    let mut manifest = Manifest::default();
    manifest
        .push("command", "train")
        .push("version", VERSION)
        .push("csv_schema", CSV_SCHEMA)
        .push("variant", train.variant.as_str())
        .push("seed", train.seed)
        .push("episodes", train.episodes)
        .push("checkpoint_every", checkpoint_every)
        .push("config", SNAPSHOT_FILE)
        .push("metrics", METRICS_FILE);
    manifest.write(&out)?;

    let mut metrics = MetricsWriter::create(&out.join(METRICS_FILE))?;
    let mut trainer = Trainer::new(scenario, train)?;
    info!(
        "training {} for {} episodes into {}",
        trainer.train.variant,
        trainer.train.episodes,
        out.display()
    );
    trainer.run(|t, rec| {
        metrics
            .episode(rec.episode + 1, &rec.slots, &rec.aggregate)
            .map_err(|e| format!("{e:#}"))?;
        let done = rec.episode + 1;
        info!(
            "episode {done}: iotd reward {:.4}, E_all {:.4}, alpha {:.3}",
            rec.aggregate.reward_iotd, rec.aggregate.e_all, rec.aggregate.mean_alpha
        );
        if checkpoint_every > 0 && done % checkpoint_every == 0 && done == t.episodes_done() {
            let path = ck_dir.join(checkpoint_name(done));
            write_file(&path, &t.checkpoint().to_text()).map_err(|e| format!("{e:#}"))?;
        }
        Ok(())
    })?;
    let last = ck_dir.join(checkpoint_name(trainer.episodes_done()));
    if !last.exists() {
        write_file(&last, &trainer.checkpoint().to_text())?;
    }
    Ok(last)
}

pub fn load_policy(path: &Path, scenario: &ScenarioConfig) -> Result<Policy> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    let ck = Checkpoint::from_text(&text).with_context(|| format!("parsing {}", path.display()))?;
    Policy::from_checkpoint(&ck, scenario).with_context(|| format!("loading {}", path.display()))
}

/// Policy from a checkpoint, or a freshly initialized one for the config.
pub fn policy_for(checkpoint: Option<&Path>, scenario: &ScenarioConfig, train: &TrainConfig) -> Result<Policy> {
    match checkpoint {
        Some(p) => load_policy(p, scenario),
        None => Ok(Policy::new(scenario, train)),
    }
}

pub fn eval_row(policy: &Policy, scenario: &ScenarioConfig, episodes: usize, seed: u64) -> Result<Vec<String>> {
    let (summary, _) = evaluate(policy, scenario, episodes, seed)?;
    Ok(summary_row(policy.variant, &summary, seed))
}

fn summary_row(variant: Variant, s: &EvalSummary, seed: u64) -> Vec<String> {
    let mut row = vec![variant.as_str().to_string(), s.episodes.to_string(), seed.to_string()];
    row.extend(summary_values(s));
    row
}

pub fn write_table(out: Option<&Path>, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let sink: Box<dyn std::io::Write> = match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            }
            Box::new(fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?)
        }
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn eval_header() -> Vec<String> {
    summary_header(&[])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    /// Task size in MB, fixed per grid point.
    TaskSize,
    /// IoTD CPU frequency in GHz.
    LocalCpu,
    NIotds,
    NUavs,
    /// UAV bandwidth in MHz.
    Bandwidth,
    /// Task deadline in ms.
    TMax,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::TaskSize => "task-size",
            Axis::LocalCpu => "local-cpu",
            Axis::NIotds => "n-iotds",
            Axis::NUavs => "n-uavs",
            Axis::Bandwidth => "bandwidth",
            Axis::TMax => "t-max",
        }
    }

    pub fn apply(self, base: &ScenarioConfig, v: f64) -> Result<ScenarioConfig> {
        let mut s = base.clone();
        let count = || -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                bail!("{} expects positive integers, got {v}", self.name())
            }
        };
        match self {
            Axis::TaskSize => s.task_size_bits = Range::point(v * BITS_PER_MB),
            Axis::LocalCpu => s.cpu_iotd = Range::point(v * 1e9),
            Axis::NIotds => s.n_iotds = count()?,
            Axis::NUavs => s.n_uavs = count()?,
            Axis::Bandwidth => s.bandwidth_uav = Range::point(v * 1e6),
            Axis::TMax => s.deadline = Range::point(v * 1e-3),
        }
        s.validate().with_context(|| format!("{} = {v}", self.name()))?;
        Ok(s)
    }
}

pub struct SweepArgs {
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub checkpoint: Option<PathBuf>,
    /// Train each point for this many episodes before evaluating.
    pub train_episodes: Option<usize>,
    pub eval_episodes: usize,
    pub out: PathBuf,
    pub parallel: bool,
}

/// One summary row per grid point in `out/summary.csv`; training sweeps
/// also leave a run directory per point.
pub fn sweep(args: SweepArgs) -> Result<Vec<Vec<String>>> {
    let SweepArgs {
        scenario,
        train,
        axis,
        values,
        checkpoint,
        train_episodes,
        eval_episodes,
        out,
        parallel,
    } = args;
    fs::create_dir_all(&out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    let points: Vec<(usize, f64, ScenarioConfig)> = values
        .iter()
        .enumerate()
        .map(|(k, &v)| Ok((k, v, axis.apply(&scenario, v)?)))
        .collect::<Result<_>>()?;

    let run_point = |(k, v, sc): &(usize, f64, ScenarioConfig)| -> Result<Vec<String>> {
        let policy = match train_episodes {
            Some(n) => {
                let dir = out.join(format!("point-{k:02}"));
                let mut tc = train.clone();
                tc.episodes = n;
                let ck = self::train(TrainArgs {
                    scenario: sc.clone(),
                    train: tc,
                    out: dir.clone(),
                    checkpoint_every: 0,
                })?;
                let mut manifest = Manifest::parse(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
                manifest.push("sweep_axis", axis.name()).push("sweep_value", v);
                manifest.write(&dir)?;
                load_policy(&ck, sc)?
            }
            None => policy_for(checkpoint.as_deref(), sc, &train)?,
        };
        let mut row = vec![axis.name().to_string(), v.to_string()];
        row.extend(eval_row(&policy, sc, eval_episodes, train.seed)?);
        Ok(row)
    };
    let rows: Vec<Vec<String>> = if parallel {
        points.par_iter().map(run_point).collect::<Result<_>>()?
    } else {
        points.iter().map(run_point).collect::<Result<_>>()?
    };
    let header = summary_header(&["axis", "value"]);
    write_table(Some(&out.join("summary.csv")), &header, &rows)?;
    Ok(rows)
}

/// Long-format `run,variant,episode,metric,value` rows from the aggregate
/// lines of each run's metrics.
pub fn plotdata(inputs: &[PathBuf], out: Option<&Path>) -> Result<usize> {
    let mut rows = Vec::new();
    for input in inputs {
        let (csv_path, dir) = if input.is_dir() {
            (input.join(METRICS_FILE), input.clone())
        } else {
            (input.clone(), input.parent().map(Path::to_path_buf).unwrap_or_default())
        };
        if !csv_path.is_file() {
            bail!("no metrics file at {}", csv_path.display());
        }
        let run = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| csv_path.display().to_string());
        let variant = fs::read_to_string(dir.join(MANIFEST_FILE))
            .ok()
            .and_then(|t| Manifest::parse(&t).ok())
            .and_then(|m| m.get("variant").map(str::to_string))
            .unwrap_or_else(|| "unknown".into());
        let mut reader =
            csv::Reader::from_path(&csv_path).with_context(|| format!("cannot read {}", csv_path.display()))?;
        let header = reader.headers()?.clone();
        if header.get(0) != Some("episode") || header.get(1) != Some("slot") {
            bail!("{} is not a metrics file", csv_path.display());
        }
        let before = rows.len();
        for rec in reader.records() {
            let rec = rec?;
            if rec.get(1) != Some("-1") {
                continue;
            }
            let episode = rec.get(0).unwrap_or_default().to_string();
            for (name, value) in header.iter().zip(rec.iter()).skip(2) {
                rows.push(vec![
                    run.clone(),
                    variant.clone(),
                    episode.clone(),
                    name.to_string(),
                    value.to_string(),
                ]);
            }
        }
        if rows.len() == before {
            bail!("{} has no episode rows", csv_path.display());
        }
    }
    let header: Vec<String> = ["run", "variant", "episode", "metric", "value"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_table(out, &header, &rows)?;
    Ok(rows.len())
}

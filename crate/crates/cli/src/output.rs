//! Run-directory layout, the metrics CSV schema and the flat manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use magin::env::SlotMetrics;
use magin::mappo::EvalSummary;

pub const CSV_SCHEMA: &str = "magin-metrics-v1";
pub const MANIFEST_MAGIC: &str = "magin-run 1";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SNAPSHOT_FILE: &str = "config.snapshot";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub const METRIC_COLUMNS: [&str; 12] = [
    "reward_iotd",
    "reward_uav",
    "reward_haps",
    "e_all",
    "mean_alpha",
    "mean_f_alloc",
    "mean_delay",
    "fairness",
    "deadline_violations",
    "queue_violations",
    "boundary_violations",
    "collisions",
];

pub fn metric_values(m: &SlotMetrics) -> [String; 12] {
    [
        m.reward_iotd.to_string(),
        m.reward_uav.to_string(),
        m.reward_haps.to_string(),
        m.e_all.to_string(),
        m.mean_alpha.to_string(),
        m.mean_f_alloc.to_string(),
        m.mean_delay.to_string(),
        m.fairness.to_string(),
        m.deadline_violations.to_string(),
        m.queue_violations.to_string(),
        m.boundary_violations.to_string(),
        m.collisions.to_string(),
    ]
}

pub fn summary_values(s: &EvalSummary) -> [String; 12] {
    [
        s.reward_iotd.to_string(),
        s.reward_uav.to_string(),
        s.reward_haps.to_string(),
        s.e_all.to_string(),
        s.mean_alpha.to_string(),
        s.mean_f_alloc.to_string(),
        s.mean_delay.to_string(),
        s.fairness.to_string(),
        s.deadline_violations.to_string(),
        s.queue_violations.to_string(),
        s.boundary_violations.to_string(),
        s.collisions.to_string(),
    ]
}

/// Append-only writer of per-slot and per-episode metrics rows.
pub struct MetricsWriter {
    csv: csv::Writer<BufWriter<File>>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut csv = csv::Writer::from_writer(BufWriter::new(file));
        let mut header = vec!["episode", "slot"];
        header.extend(METRIC_COLUMNS);
        csv.write_record(&header)?;
        Ok(Self { csv })
    }

    /// Writes the slot rows of one episode followed by its aggregate row
    /// (slot −1). Episodes are numbered from 1.
    pub fn episode(&mut self, episode: usize, slots: &[SlotMetrics], aggregate: &SlotMetrics) -> Result<()> {
        let ep = episode.to_string();
        for (t, m) in slots.iter().enumerate() {
            let slot = t.to_string();
            let mut row = vec![ep.as_str(), slot.as_str()];
            let vals = metric_values(m);
            row.extend(vals.iter().map(String::as_str));
            self.csv.write_record(&row)?;
        }
        let vals = metric_values(aggregate);
        let mut row = vec![ep.as_str(), "-1"];
        row.extend(vals.iter().map(String::as_str));
        self.csv.write_record(&row)?;
        self.csv.flush()?;
        Ok(())
    }
}

/// Ordered `key = value` lines under a magic header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MANIFEST_MAGIC}\n");
        for (k, v) in &self.entries {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_MAGIC) {
            bail!("not a run manifest (missing `{MANIFEST_MAGIC}` header)");
        }
        let mut m = Manifest::default();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(" = ")
                .with_context(|| format!("malformed manifest line `{line}`"))?;
            m.push(k, v);
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(MANIFEST_FILE), &self.to_text())
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(text.as_bytes())
        .with_context(|| format!("cannot write {}", path.display()))
}

/// Creates `dir` and its checkpoint subdirectory.
pub fn prepare_run_dir(dir: &Path) -> Result<PathBuf> {
    let ck = dir.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ck).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(ck)
}

pub fn checkpoint_name(episodes_done: usize) -> String {
    format!("ep{episodes_done:03}.ckpt")
}

pub fn summary_header(leading: &[&str]) -> Vec<String> {
    leading
        .iter()
        .copied()
        .chain(["variant", "episodes", "seed"])
        .chain(METRIC_COLUMNS)
        .map(str::to_string)
        .collect()
}

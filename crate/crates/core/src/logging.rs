//! Per-step JSONL traces, their reload with integrity checks, and the
//! aggregations shared by suite reports and plot-data export.
//!
//! Trace files live at `<output>/<run_id>/<policy>_<seed>.jsonl`, where the
//! policy id has every character outside `[A-Za-z0-9._-]` replaced by `-`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::Action;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLogRecord {
    pub run_id: String,
    pub benchmark: String,
    pub config_hash: String,
    pub policy_id: String,
    pub seed: u64,
    pub instance_id: String,
    pub episode: u64,
    pub step: u64,
    pub action: Action,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Vec<f64>>,
    /// Duration of this step (policy decision plus environment step).
    pub wall_time_ns: u64,
}

pub fn sanitize_policy_id(policy_id: &str) -> String {
    policy_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '-' })
        .collect()
}

pub fn trace_path(output_dir: &Path, run_id: &str, policy_id: &str, seed: u64) -> PathBuf {
    output_dir.join(run_id).join(format!("{}_{seed}.jsonl", sanitize_policy_id(policy_id)))
}

/// Appends records as JSON lines; buffered, flushed at episode ends.
pub struct TraceWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(TraceWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &StepLogRecord) -> Result<()> {
        let line = serde_json::to_string(record).expect("records serialize");
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn end_episode(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// One episode recomputed from its step records.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub run_id: String,
    pub benchmark: String,
    pub policy_id: String,
    pub seed: u64,
    pub instance_id: String,
    pub episode: u64,
    pub steps: usize,
    pub cumulative_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub records: Vec<StepLogRecord>,
    pub episodes: Vec<EpisodeRecord>,
}

/// Parses JSONL text. Duplicate `(run_id, policy, seed, instance, episode,
/// step)` keys and mixed config hashes within a run are integrity errors.
pub fn parse_trace(text: &str, origin: &str) -> Result<Trace> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let record: StepLogRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    check_integrity(&records, origin)?;
    let episodes = derive_episodes(&records);
    Ok(Trace { records, episodes })
}

pub fn reload(path: &Path) -> Result<Trace> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| Error::io(path, e))?);
        text.push('\n');
    }
    parse_trace(&text, &path.display().to_string())
}

/// Reloads every `.jsonl` file of a run directory, in file-name order, as one trace.
pub fn reload_run(dir: &Path) -> Result<Trace> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut records = Vec::new();
    for f in files {
        records.extend(reload(&f)?.records);
    }
    check_integrity(&records, &dir.display().to_string())?;
    let episodes = derive_episodes(&records);
    Ok(Trace { records, episodes })
}

fn check_integrity(records: &[StepLogRecord], origin: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    let mut hashes: BTreeMap<&str, &str> = BTreeMap::new();
    for r in records {
        let key = (&r.run_id, &r.policy_id, r.seed, &r.instance_id, r.episode, r.step);
        if !seen.insert(key) {
            return Err(Error::Integrity(format!(
                "{origin}: duplicate record run {} policy {} seed {} instance {} episode {} step {}",
                r.run_id, r.policy_id, r.seed, r.instance_id, r.episode, r.step
            )));
        }
        let h = hashes.entry(&r.run_id).or_insert(&r.config_hash);
        if *h != r.config_hash {
            return Err(Error::Integrity(format!(
                "{origin}: run {} mixes config hashes {} and {}",
                r.run_id, h, r.config_hash
            )));
        }
    }
    Ok(())
}

/// Episodes sorted by key; rewards are summed in step order.
fn derive_episodes(records: &[StepLogRecord]) -> Vec<EpisodeRecord> {
    type Key<'a> = (&'a str, &'a str, u64, &'a str, u64);
    let mut groups: BTreeMap<Key<'_>, Vec<&StepLogRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((&r.run_id, &r.policy_id, r.seed, &r.instance_id, r.episode))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|mut steps| {
            steps.sort_by_key(|r| r.step);
            let mut cumulative_reward = 0.0;
            for r in &steps {
                cumulative_reward += r.reward;
            }
            let first = steps[0];
            EpisodeRecord {
                run_id: first.run_id.clone(),
                benchmark: first.benchmark.clone(),
                policy_id: first.policy_id.clone(),
                seed: first.seed,
                instance_id: first.instance_id.clone(),
                episode: first.episode,
                steps: steps.len(),
                cumulative_reward,
            }
        })
        .collect()
}

/// Population mean and standard deviation. Identical values have a std of
/// exactly 0, even when the rounded mean differs from them.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if !values.is_empty() && values.iter().all(|v| v.to_bits() == values[0].to_bits()) {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Input row for [`summarize`]: one finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub benchmark: String,
    pub policy_id: String,
    pub seed: u64,
    pub instance_id: String,
    pub episode: u64,
    pub cumulative_reward: f64,
    pub steps: usize,
}

impl From<&EpisodeRecord> for EpisodeOutcome {
    fn from(e: &EpisodeRecord) -> Self {
        EpisodeOutcome {
            benchmark: e.benchmark.clone(),
            policy_id: e.policy_id.clone(),
            seed: e.seed,
            instance_id: e.instance_id.clone(),
            episode: e.episode,
            cumulative_reward: e.cumulative_reward,
            steps: e.steps,
        }
    }
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub benchmark: String,
    pub policy: String,
    pub seed: u64,
    pub instance_id: String,
    pub episodes: usize,
    pub mean_cum_reward: f64,
    pub std_cum_reward: f64,
    pub steps_mean: f64,
}

/// Rows per (policy, seed, instance), sorted by that key; episodes enter in episode order.
pub fn summarize(outcomes: &[EpisodeOutcome]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(&str, u64, &str), Vec<&EpisodeOutcome>> = BTreeMap::new();
    for o in outcomes {
        groups.entry((&o.policy_id, o.seed, &o.instance_id)).or_default().push(o);
    }
    groups
        .into_values()
        .map(|mut eps| {
            eps.sort_by_key(|e| e.episode);
            let rewards: Vec<f64> = eps.iter().map(|e| e.cumulative_reward).collect();
            let steps: Vec<f64> = eps.iter().map(|e| e.steps as f64).collect();
            let (mean, std) = mean_std(&rewards);
            SummaryRow {
                benchmark: eps[0].benchmark.clone(),
                policy: eps[0].policy_id.clone(),
                seed: eps[0].seed,
                instance_id: eps[0].instance_id.clone(),
                episodes: eps.len(),
                mean_cum_reward: mean,
                std_cum_reward: std,
                steps_mean: mean_std(&steps).0,
            }
        })
        .collect()
}

/// Per-policy performance across seeds with a normal-approximation 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub benchmark: String,
    pub policy: String,
    pub seeds: usize,
    pub mean: f64,
    pub std: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub incomplete_cells: usize,
}

pub fn ci95(values: &[f64]) -> (f64, f64, f64, f64) {
    let (mean, std) = mean_std(values);
    let half = 1.96 * std / (values.len() as f64).sqrt();
    (mean, std, mean - half, mean + half)
}

/// Per seed, the uniform mean over instances of per-instance mean returns;
/// then mean, std and interval across seeds. Policies keep first-seen order.
pub fn policy_rows(rows: &[SummaryRow]) -> Vec<PolicyRow> {
    let mut order: Vec<&str> = Vec::new();
    let mut per_seed: BTreeMap<(&str, u64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        if !order.contains(&r.policy.as_str()) {
            order.push(&r.policy);
        }
        per_seed.entry((&r.policy, r.seed)).or_default().push(r.mean_cum_reward);
    }
    order
        .into_iter()
        .map(|policy| {
            let values: Vec<f64> = per_seed
                .iter()
                .filter(|((p, _), _)| *p == policy)
                .map(|(_, v)| mean_std(v).0)
                .collect();
            let (mean, std, lo, hi) = ci95(&values);
            PolicyRow {
                benchmark: rows.iter().find(|r| r.policy == policy).expect("row").benchmark.clone(),
                policy: policy.to_string(),
                seeds: values.len(),
                mean,
                std,
                ci95_low: lo,
                ci95_high: hi,
                incomplete_cells: 0,
            }
        })
        .collect()
}

pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    fs::write(path, csv_string(rows)?).map_err(|e| Error::io(path, e))
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Domain(format!("csv serialization: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Domain(format!("csv serialization: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    PolicyPerformance,
    PerInstance,
    ActionTrajectory,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::PolicyPerformance, PlotKind::PerInstance, PlotKind::ActionTrajectory];

    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::PolicyPerformance => "policy_performance",
            PlotKind::PerInstance => "per_instance",
            PlotKind::ActionTrajectory => "action_trajectory",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown plot kind `{s}`; expected policy_performance, per_instance or action_trajectory")))
    }
}

#[derive(Debug, Serialize)]
struct InstanceRow<'a> {
    benchmark: &'a str,
    policy: &'a str,
    instance_id: &'a str,
    episodes: usize,
    mean_cum_reward: f64,
    std_cum_reward: f64,
}

#[derive(Debug, Serialize)]
struct TrajectoryRow<'a> {
    policy: &'a str,
    seed: u64,
    instance_id: &'a str,
    episode: u64,
    step: u64,
    action: String,
    reward: f64,
}

/// Plot-ready CSV text for one aggregation kind.
pub fn to_plot_data(trace: &Trace, kind: PlotKind) -> Result<String> {
    if trace.records.is_empty() {
        return Err(Error::Domain("no records to aggregate".into()));
    }
    let outcomes: Vec<EpisodeOutcome> = trace.episodes.iter().map(EpisodeOutcome::from).collect();
    match kind {
        PlotKind::PolicyPerformance => csv_string(&policy_rows(&summarize(&outcomes))),
        PlotKind::PerInstance => {
            let mut groups: BTreeMap<(&str, &str), Vec<&EpisodeOutcome>> = BTreeMap::new();
            for o in &outcomes {
                groups.entry((&o.policy_id, &o.instance_id)).or_default().push(o);
            }
            let rows: Vec<InstanceRow<'_>> = groups
                .into_iter()
                .map(|((policy, instance_id), eps)| {
                    let rewards: Vec<f64> = eps.iter().map(|e| e.cumulative_reward).collect();
                    let (mean, std) = mean_std(&rewards);
                    InstanceRow {
                        benchmark: &eps[0].benchmark,
                        policy,
                        instance_id,
                        episodes: eps.len(),
                        mean_cum_reward: mean,
                        std_cum_reward: std,
                    }
                })
                .collect();
            csv_string(&rows)
        }
        PlotKind::ActionTrajectory => {
            let mut recs: Vec<&StepLogRecord> = trace.records.iter().collect();
            recs.sort_by(|a, b| {
                (&a.policy_id, a.seed, &a.instance_id, a.episode, a.step).cmp(&(&b.policy_id, b.seed, &b.instance_id, b.episode, b.step))
            });
            let rows: Vec<TrajectoryRow<'_>> = recs
                .into_iter()
                .map(|r| TrajectoryRow {
                    policy: &r.policy_id,
                    seed: r.seed,
                    instance_id: &r.instance_id,
                    episode: r.episode,
                    step: r.step,
                    action: r.action.to_string(),
                    reward: r.reward,
                })
                .collect();
            csv_string(&rows)
        }
    }
}

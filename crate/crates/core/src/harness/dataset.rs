use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::batch::{summarize, MetricsSummary};
use super::session::{TickRow, TrialRecord, TrialStats};
use super::HarnessError;
use crate::environment::{ProtocolConfig, TaskId, TrialOutcome};
use crate::operators::TeleopMode;

pub const DATASET_FORMAT: &str = "teleosim-dataset-v1";

/// JSON written next to every trial CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub software_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub task: TaskId,
    pub mode: TeleopMode,
    pub operator: String,
    pub dt: f64,
    pub rows: usize,
    pub joints: usize,
    pub outcome: TrialOutcome,
    pub stats: TrialStats,
    pub protocol: ProtocolConfig,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
}

pub fn file_stem(task: &TaskId, mode: TeleopMode, seed: u64) -> String {
    format!("{}_{}_{}", task, mode.as_str(), seed)
}

/// Column names with units for `n` joints.
pub fn header(n: usize) -> Vec<String> {
    let mut h = vec!["t[s]".to_string()];
    let joints = |h: &mut Vec<String>, name: &str, unit: &str| {
        for i in 1..=n {
            h.push(format!("{name}{i}[{unit}]"));
        }
    };
    joints(&mut h, "q_l", "rad");
    joints(&mut h, "dq_l", "rad/s");
    joints(&mut h, "q_f", "rad");
    joints(&mut h, "dq_f", "rad/s");
    for c in ["ee_x[m]", "ee_y[m]", "ee_z[m]", "ee_qw[-]", "ee_qx[-]", "ee_qy[-]", "ee_qz[-]"] {
        h.push(c.into());
    }
    for c in ["f_x[N]", "f_y[N]", "f_z[N]", "m_x[N·m]", "m_y[N·m]", "m_z[N·m]"] {
        h.push(c.into());
    }
    joints(&mut h, "tau_c_l", "N·m");
    joints(&mut h, "tau_c_f", "N·m");
    joints(&mut h, "tau_d_f", "N·m");
    h.push("eta[-]".into());
    h.push("stage[-]".into());
    h
}

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `{task}_{mode}_{seed}.csv` and `.json` into `dir`.
pub fn write_dataset(record: &TrialRecord, protocol: &ProtocolConfig, dir: &Path) -> Result<DatasetFiles, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let stem = file_stem(&record.task, record.mode, record.seed);
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let n = record.rows.first().map_or(0, |r| r.q_l.len());

    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| HarnessError::io(&csv_path, e))?;
    w.write_record(header(n)).map_err(|e| HarnessError::io(&csv_path, e))?;
    let mut rec: Vec<String> = Vec::with_capacity(7 * n + 16);
    for r in &record.rows {
        rec.clear();
        rec.push(num(r.t));
        for v in [&r.q_l, &r.dq_l, &r.q_f, &r.dq_f] {
            rec.extend(v.iter().map(|x| num(*x)));
        }
        rec.extend(r.ee_f.iter().map(|x| num(*x)));
        rec.extend(r.f_ext_f.iter().map(|x| num(*x)));
        for v in [&r.tau_c_l, &r.tau_c_f, &r.tau_d_f] {
            rec.extend(v.iter().map(|x| num(*x)));
        }
        rec.push(r.eta.to_string());
        rec.push(r.stage.to_string());
        w.write_record(&rec).map_err(|e| HarnessError::io(&csv_path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(&csv_path, e))?;

    let sidecar = Sidecar {
        format: DATASET_FORMAT.into(),
        software_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: record.config_hash.clone(),
        seed: record.seed,
        task: record.task.clone(),
        mode: record.mode,
        operator: record.operator.clone(),
        dt: record.dt,
        rows: record.rows.len(),
        joints: n,
        outcome: record.outcome,
        stats: record.stats,
        protocol: *protocol,
    };
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| HarnessError::io(&json_path, e))?;
    fs::write(&json_path, text).map_err(|e| HarnessError::io(&json_path, e))?;
    Ok(DatasetFiles {
        csv: csv_path,
        json: json_path,
    })
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::io(path, e))
}

/// Reads the tick rows of a trial CSV.
pub fn read_rows(path: &Path) -> Result<Vec<TickRow>, HarnessError> {
    let bad = |m: String| HarnessError::io(path, m);
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    let cols = r.headers().map_err(|e| HarnessError::io(path, e))?.len();
    if cols < 16 || (cols - 16) % 7 != 0 {
        return Err(bad(format!("{cols} columns")));
    }
    let n = (cols - 16) / 7;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| HarnessError::io(path, e))?;
        let f: Vec<f64> = rec
            .iter()
            .take(cols - 2)
            .map(|s| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        let int = |i: usize| rec[i].parse::<u8>().map_err(|e| bad(format!("{:?}: {e}", &rec[i])));
        let seg = |k: usize| f[1 + k * n..1 + (k + 1) * n].to_vec();
        let o = 1 + 4 * n;
        rows.push(TickRow {
            t: f[0],
            q_l: seg(0),
            dq_l: seg(1),
            q_f: seg(2),
            dq_f: seg(3),
            ee_f: f[o..o + 7].try_into().expect("seven values"),
            f_ext_f: f[o + 7..o + 13].try_into().expect("six values"),
            tau_c_l: f[o + 13..o + 13 + n].to_vec(),
            tau_c_f: f[o + 13 + n..o + 13 + 2 * n].to_vec(),
            tau_d_f: f[o + 13 + 2 * n..o + 13 + 3 * n].to_vec(),
            eta: int(cols - 2)?,
            stage: int(cols - 1)?,
        });
    }
    Ok(rows)
}

/// Rebuilds batch statistics from the sidecars in `dir`.
pub fn summarize_dir(dir: &Path) -> Result<MetricsSummary, HarnessError> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut cells: BTreeMap<(TaskId, TeleopMode), (ProtocolConfig, Vec<(u64, TrialOutcome)>)> = BTreeMap::new();
    for p in &paths {
        let Ok(s) = read_sidecar(p) else { continue };
        if s.format != DATASET_FORMAT {
            continue;
        }
        cells
            .entry((s.task.clone(), s.mode))
            .or_insert_with(|| (s.protocol, Vec::new()))
            .1
            .push((s.seed, s.outcome));
    }
    if cells.is_empty() {
        return Err(HarnessError::io(dir, "no trial sidecars found"));
    }
    let mut summary = MetricsSummary::default();
    for ((task, mode), (protocol, mut outcomes)) in cells {
        outcomes.sort_by_key(|(s, _)| *s);
        summary.cells.push(summarize(task, mode, outcomes, Vec::new(), &protocol));
    }
    Ok(summary)
}

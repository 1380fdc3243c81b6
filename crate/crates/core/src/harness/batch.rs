use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{SessionConfig, TaskSelect};
use super::session::{run_trial, TrialRecord};
use super::HarnessError;
use crate::environment::{ProtocolConfig, TaskId, TrialOutcome};
use crate::operators::TeleopMode;

/// Tasks × modes to run, each cell with `trials_per_cell` seeds starting at
/// `seed0`.
#[derive(Clone, Debug)]
pub struct BatchSpec {
    pub base: SessionConfig,
    pub tasks: Vec<TaskSelect>,
    pub modes: Vec<TeleopMode>,
    pub trials_per_cell: usize,
    pub seed0: u64,
    pub parallel: bool,
}

impl BatchSpec {
    pub fn new(base: SessionConfig, tasks: Vec<TaskSelect>, modes: Vec<TeleopMode>, trials_per_cell: usize, seed0: u64) -> Self {
        Self {
            base,
            tasks,
            modes,
            trials_per_cell,
            seed0,
            parallel: true,
        }
    }

    /// Config of one trial.
    pub fn trial_config(&self, task: &TaskSelect, mode: TeleopMode, i: usize) -> SessionConfig {
        let mut cfg = self.base.clone();
        cfg.task = task.clone();
        cfg.mode = mode;
        cfg.seed = self.seed0 + i as u64;
        cfg
    }
}

/// Metrics restricted to successful trials.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuccessOnly {
    pub mean_t_total: Option<f64>,
    pub mean_t_stage1: Option<f64>,
    pub mean_t_stage2: Option<f64>,
    pub efficiency: f64,
}

/// Statistics of one task × mode cell. Times in s; failed trials count at
/// the total limit and a stage that was not completed counts at the stage
/// limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub task: TaskId,
    pub mode: TeleopMode,
    pub trials: usize,
    pub successes: usize,
    /// %.
    pub success_rate: f64,
    pub mean_t_total: f64,
    pub median_t_total: f64,
    pub iqr_t_total: f64,
    pub mean_t_stage1: f64,
    pub mean_t_stage2: f64,
    /// Completion rate per mean minute.
    pub efficiency: f64,
    pub success_only: SuccessOnly,
    pub outcomes: Vec<(u64, TrialOutcome)>,
    /// Seeds whose trial failed to run, with the error.
    pub errors: Vec<(u64, String)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub cells: Vec<CellSummary>,
}

impl MetricsSummary {
    pub fn cell(&self, task: &TaskId, mode: TeleopMode) -> Option<&CellSummary> {
        self.cells.iter().find(|c| &c.task == task && c.mode == mode)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (h - lo as f64)
}

/// `rate` in %, `mean_t` in s.
pub fn efficiency(rate: f64, mean_t: f64) -> f64 {
    if rate <= 0.0 || mean_t <= 0.0 {
        0.0
    } else {
        (rate / 100.0) / (mean_t / 60.0)
    }
}

/// Aggregates the outcomes of one cell.
pub fn summarize(
    task: TaskId,
    mode: TeleopMode,
    outcomes: Vec<(u64, TrialOutcome)>,
    errors: Vec<(u64, String)>,
    protocol: &ProtocolConfig,
) -> CellSummary {
    let n = outcomes.len();
    let ok: Vec<&TrialOutcome> = outcomes.iter().map(|(_, o)| o).filter(|o| o.success).collect();
    let totals: Vec<f64> = outcomes
        .iter()
        .map(|(_, o)| if o.success { o.t_total } else { protocol.total_limit })
        .collect();
    let stage1: Vec<f64> = outcomes
        .iter()
        .map(|(_, o)| {
            if o.success || o.t_stage2 > 0.0 {
                o.t_stage1
            } else {
                protocol.stage_limit
            }
        })
        .collect();
    let stage2: Vec<f64> = outcomes
        .iter()
        .map(|(_, o)| if o.success { o.t_stage2 } else { protocol.stage_limit })
        .collect();
    let mut sorted = totals.clone();
    sorted.sort_by(f64::total_cmp);
    let rate = if n == 0 { 0.0 } else { 100.0 * ok.len() as f64 / n as f64 };
    let mean_t = mean(&totals);

    let ok_mean = |f: fn(&TrialOutcome) -> f64| {
        if ok.is_empty() {
            None
        } else {
            Some(ok.iter().map(|o| f(o)).sum::<f64>() / ok.len() as f64)
        }
    };
    let ok_total = ok_mean(|o| o.t_total);
    CellSummary {
        task,
        mode,
        trials: n,
        successes: ok.len(),
        success_rate: rate,
        mean_t_total: mean_t,
        median_t_total: quantile(&sorted, 0.5),
        iqr_t_total: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
        mean_t_stage1: mean(&stage1),
        mean_t_stage2: mean(&stage2),
        efficiency: efficiency(rate, mean_t),
        success_only: SuccessOnly {
            mean_t_total: ok_total,
            mean_t_stage1: ok_mean(|o| o.t_stage1),
            mean_t_stage2: ok_mean(|o| o.t_stage2),
            efficiency: ok_total.map_or(0.0, |t| efficiency(rate, t)),
        },
        outcomes,
        errors,
    }
}

/// Runs every cell of the batch. `sink` sees each finished record (e.g. to
/// write it to disk) and may fail it. Results do not depend on `parallel`.
pub fn run_batch_with<F>(spec: &BatchSpec, sink: F) -> Result<MetricsSummary, HarnessError>
where
    F: Fn(&TrialRecord) -> Result<(), HarnessError> + Sync,
{
    if spec.trials_per_cell == 0 {
        return Err(HarnessError::Config("trials_per_cell must be at least 1".into()));
    }
    spec.base.validate()?;
    let mut cells = Vec::new();
    for task in &spec.tasks {
        let id = task.resolve()?.id;
        for &mode in &spec.modes {
            cells.push((task.clone(), id.clone(), mode));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.trials_per_cell).map(move |i| (c, i)))
        .collect();
    let run = |&(c, i): &(usize, usize)| {
        let (task, _, mode) = &cells[c];
        let cfg = spec.trial_config(task, *mode, i);
        let seed = cfg.seed;
        let result = run_trial(&cfg).and_then(|rec| {
            sink(&rec)?;
            Ok(rec.outcome)
        });
        (c, seed, result.map_err(|e| e.to_string()))
    };
    let results: Vec<_> = if spec.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };

    let mut summary = MetricsSummary::default();
    for (c, (_, id, mode)) in cells.iter().enumerate() {
        let mut outcomes = Vec::new();
        let mut errors = Vec::new();
        for (rc, seed, r) in &results {
            if *rc != c {
                continue;
            }
            match r {
                Ok(o) => outcomes.push((*seed, *o)),
                Err(e) => errors.push((*seed, e.clone())),
            }
        }
        summary
            .cells
            .push(summarize(id.clone(), *mode, outcomes, errors, &spec.base.protocol));
    }
    Ok(summary)
}

pub fn run_batch(spec: &BatchSpec) -> Result<MetricsSummary, HarnessError> {
    run_batch_with(spec, |_| Ok(()))
}

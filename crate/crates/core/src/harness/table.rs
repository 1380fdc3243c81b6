use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::batch::{CellSummary, MetricsSummary};
use super::HarnessError;
use crate::environment::TaskId;
use crate::operators::TeleopMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Markdown,
    Csv,
}

impl FromStr for TableFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(TableFormat::Markdown),
            "csv" => Ok(TableFormat::Csv),
            _ => Err(HarnessError::Config(format!("unknown table format {s:?}"))),
        }
    }
}

/// Which statistic fills the cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableMetric {
    #[default]
    SuccessRate,
    MeanTime,
    MeanStage1,
    MeanStage2,
    Efficiency,
}

impl TableMetric {
    pub fn title(self) -> &'static str {
        match self {
            TableMetric::SuccessRate => "Success Rate [%]",
            TableMetric::MeanTime => "Mean Time [s]",
            TableMetric::MeanStage1 => "Position Guiding [s]",
            TableMetric::MeanStage2 => "Guided Insertion [s]",
            TableMetric::Efficiency => "Efficiency [1/min]",
        }
    }

    fn value(self, c: &CellSummary) -> f64 {
        match self {
            TableMetric::SuccessRate => c.success_rate,
            TableMetric::MeanTime => c.mean_t_total,
            TableMetric::MeanStage1 => c.mean_t_stage1,
            TableMetric::MeanStage2 => c.mean_t_stage2,
            TableMetric::Efficiency => c.efficiency,
        }
    }
}

impl FromStr for TableMetric {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "success" | "success_rate" => Ok(TableMetric::SuccessRate),
            "time" | "mean_time" => Ok(TableMetric::MeanTime),
            "stage1" => Ok(TableMetric::MeanStage1),
            "stage2" => Ok(TableMetric::MeanStage2),
            "efficiency" => Ok(TableMetric::Efficiency),
            _ => Err(HarnessError::Config(format!("unknown table metric {s:?}"))),
        }
    }
}

/// Modes as rows, tasks as columns, plus a per-row average over the cells
/// present. Missing cells are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

fn task_order(t: &TaskId) -> (usize, String) {
    (t.column().unwrap_or(usize::MAX), t.as_str().to_string())
}

/// Lays the summary out in the paper's table shape.
pub fn build_table(summary: &MetricsSummary, metric: TableMetric) -> Table {
    let mut tasks: Vec<TaskId> = Vec::new();
    for c in &summary.cells {
        if !tasks.contains(&c.task) {
            tasks.push(c.task.clone());
        }
    }
    tasks.sort_by_key(task_order);
    let mut rows = Vec::new();
    for mode in TeleopMode::ALL {
        if !summary.cells.iter().any(|c| c.mode == mode) {
            continue;
        }
        let mut vals: Vec<Option<f64>> = tasks
            .iter()
            .map(|t| summary.cell(t, mode).map(|c| metric.value(c)))
            .collect();
        let present: Vec<f64> = vals.iter().flatten().copied().collect();
        vals.push(Some(present.iter().sum::<f64>() / present.len() as f64));
        rows.push((mode.label().to_string(), vals));
    }
    let mut columns: Vec<String> = tasks.iter().map(|t| t.as_str().to_string()).collect();
    columns.push("Average".into());
    Table {
        title: metric.title().into(),
        columns,
        rows,
    }
}

fn fmt_cell(v: &Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.1}"),
        None => "-".into(),
    }
}

pub fn export_table(summary: &MetricsSummary, format: TableFormat, metric: TableMetric) -> String {
    render(&build_table(summary, metric), format)
}

pub fn render(table: &Table, format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Markdown => {
            out.push_str(&format!("| {} | {} |\n", table.title, table.columns.join(" | ")));
            out.push_str(&format!("|---|{}\n", "---:|".repeat(table.columns.len())));
            for (name, vals) in &table.rows {
                let cells: Vec<String> = vals.iter().map(fmt_cell).collect();
                out.push_str(&format!("| {} | {} |\n", name, cells.join(" | ")));
            }
        }
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut head = vec![table.title.clone()];
            head.extend(table.columns.iter().cloned());
            w.write_record(&head).expect("in-memory write");
            for (name, vals) in &table.rows {
                let mut rec = vec![name.clone()];
                rec.extend(vals.iter().map(fmt_cell));
                w.write_record(&rec).expect("in-memory write");
            }
            out = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input");
        }
    }
    out
}

fn parse_cell(s: &str) -> Result<Option<f64>, HarnessError> {
    let s = s.trim();
    if s == "-" {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| HarnessError::Config(format!("bad table cell {s:?}")))
}

fn from_records(records: Vec<Vec<String>>) -> Result<Table, HarnessError> {
    let mut it = records.into_iter();
    let head = it.next().ok_or_else(|| HarnessError::Config("empty table".into()))?;
    let (title, columns) = head.split_first().ok_or_else(|| HarnessError::Config("empty header".into()))?;
    let mut rows = Vec::new();
    for rec in it {
        let (name, cells) = rec.split_first().ok_or_else(|| HarnessError::Config("empty row".into()))?;
        if cells.len() != columns.len() {
            return Err(HarnessError::Config(format!("row {name:?} has {} cells", cells.len())));
        }
        let vals = cells.iter().map(|c| parse_cell(c)).collect::<Result<_, _>>()?;
        rows.push((name.trim().to_string(), vals));
    }
    Ok(Table {
        title: title.trim().to_string(),
        columns: columns.iter().map(|c| c.trim().to_string()).collect(),
        rows,
    })
}

pub fn parse_markdown(text: &str) -> Result<Table, HarnessError> {
    let records = text
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with('|') && !l.starts_with("|---"))
        .map(|l| {
            l.trim_matches('|')
                .split('|')
                .map(|c| c.trim().to_string())
                .collect::<Vec<_>>()
        })
        .collect();
    from_records(records)
}

pub fn parse_csv(text: &str) -> Result<Table, HarnessError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let records = r
        .records()
        .map(|rec| {
            rec.map(|r| r.iter().map(str::to_string).collect())
                .map_err(|e| HarnessError::Config(e.to_string()))
        })
        .collect::<Result<_, _>>()?;
    from_records(records)
}

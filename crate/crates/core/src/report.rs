//! Experiment summary tables: training-set rows with hours, per-style WERs,
//! significance stars against a designated baseline, and lowest-per-column
//! flags, rendered as text, markdown, or JSON.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::significance::Stars;

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub label: String,
    pub hours: f64,
    /// Mean pair similarity, for selection-comparison tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    pub wer_read: f64,
    pub wer_hmi: f64,
    pub wer_avg: f64,
    #[serde(default)]
    pub stars_read: Stars,
    #[serde(default)]
    pub stars_hmi: Stars,
    #[serde(default)]
    pub is_baseline: bool,
}

/// Output formats for [`render_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Markdown,
    Json,
}

impl TableFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            TableFormat::Text => "text",
            TableFormat::Markdown => "markdown",
            TableFormat::Json => "json",
        }
    }
}

impl fmt::Display for TableFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(TableFormat::Text),
            "markdown" => Ok(TableFormat::Markdown),
            "json" => Ok(TableFormat::Json),
            other => Err(format!("unknown format \"{other}\" (expected text, markdown, json)")),
        }
    }
}

/// Errors raised while loading rows or rendering tables.
#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot render an empty table")]
    EmptyTable,
    #[error("no row is marked as the baseline")]
    NoBaseline,
    #[error("{count} rows are marked as the baseline; expected exactly one")]
    MultipleBaselines { count: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Serialize)]
struct RenderedCell {
    wer: f64,
    display: String,
    stars: String,
    lowest: bool,
}

#[derive(Debug, Serialize)]
struct RenderedRow {
    label: String,
    is_baseline: bool,
    hours: f64,
    hours_display: String,
    hours_delta: f64,
    hours_delta_display: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    similarity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    similarity_display: Option<String>,
    read: RenderedCell,
    hmi: RenderedCell,
    avg: RenderedCell,
}

#[derive(Debug, Serialize)]
struct RenderedTable {
    rows: Vec<RenderedRow>,
}

/// Reads a JSON array of rows.
pub fn read_rows(path: &Path) -> Result<Vec<ExperimentRow>, ReportError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text)
        .map_err(|source| ReportError::Parse { path: path.to_path_buf(), source })
}

/// Renders rows in the requested format.
///
/// Hours and WERs are shown at 0.1 precision with stars appended to the Read
/// and HMI cells; every row attaining a column's minimum WER is flagged,
/// `[value]` in text and `**value**` in markdown. A delta-hours column
/// against the baseline makes hour accounting auditable. The JSON rendering
/// carries full-precision values alongside the display strings.
pub fn render_table(rows: &[ExperimentRow], format: TableFormat) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::EmptyTable);
    }
    let baselines = rows.iter().filter(|r| r.is_baseline).count();
    match baselines {
        1 => {}
        0 => return Err(ReportError::NoBaseline),
        count => return Err(ReportError::MultipleBaselines { count }),
    }
    let baseline_hours = rows.iter().find(|r| r.is_baseline).expect("counted above").hours;

    let min_of = |get: fn(&ExperimentRow) -> f64| {
        rows.iter().map(get).fold(f64::INFINITY, f64::min)
    };
    let min_read = min_of(|r| r.wer_read);
    let min_hmi = min_of(|r| r.wer_hmi);
    let min_avg = min_of(|r| r.wer_avg);

    let cell = |wer: f64, stars: Stars, min: f64| RenderedCell {
        wer,
        display: format!("{wer:.1}"),
        stars: stars.to_string(),
        lowest: wer == min,
    };
    let rendered: Vec<RenderedRow> = rows
        .iter()
        .map(|row| {
            let hours_delta = row.hours - baseline_hours;
            RenderedRow {
                label: row.label.clone(),
                is_baseline: row.is_baseline,
                hours: row.hours,
                hours_display: format!("{:.1}", row.hours),
                hours_delta,
                hours_delta_display: if row.is_baseline {
                    String::new()
                } else {
                    format!("{hours_delta:+.1}")
                },
                similarity: row.similarity,
                similarity_display: row.similarity.map(|s| format!("{s:.2}")),
                read: cell(row.wer_read, row.stars_read, min_read),
                hmi: cell(row.wer_hmi, row.stars_hmi, min_hmi),
                avg: cell(row.wer_avg, Stars::None, min_avg),
            }
        })
        .collect();
    let table = RenderedTable { rows: rendered };

    Ok(match format {
        TableFormat::Json => {
            let mut text =
                serde_json::to_string_pretty(&table).expect("table serialization cannot fail");
            text.push('\n');
            text
        }
        TableFormat::Text => render_text(&table),
        TableFormat::Markdown => render_markdown(&table),
    })
}

fn label_text(row: &RenderedRow) -> String {
    if row.is_baseline {
        format!("{} (baseline)", row.label)
    } else {
        row.label.clone()
    }
}

fn cell_text(cell: &RenderedCell) -> String {
    let value = if cell.lowest {
        format!("[{}]", cell.display)
    } else {
        cell.display.clone()
    };
    format!("{value}{}", cell.stars)
}

fn cell_markdown(cell: &RenderedCell) -> String {
    let value = if cell.lowest {
        format!("**{}**", cell.display)
    } else {
        cell.display.clone()
    };
    format!("{value}{}", cell.stars.replace('*', "\\*"))
}

fn with_similarity(table: &RenderedTable) -> bool {
    table.rows.iter().any(|r| r.similarity.is_some())
}

fn table_cells(table: &RenderedTable, cell: fn(&RenderedCell) -> String) -> Vec<Vec<String>> {
    let similarity = with_similarity(table);
    table
        .rows
        .iter()
        .map(|row| {
            let mut cells = vec![
                label_text(row),
                row.hours_display.clone(),
                row.hours_delta_display.clone(),
            ];
            if similarity {
                cells.push(row.similarity_display.clone().unwrap_or_default());
            }
            cells.extend([cell(&row.read), cell(&row.hmi), cell(&row.avg)]);
            cells
        })
        .collect()
}

fn header(table: &RenderedTable) -> Vec<String> {
    let mut header = vec!["Training data".to_owned(), "hours".to_owned(), "+hours".to_owned()];
    if with_similarity(table) {
        header.push("similarity".to_owned());
    }
    header.extend(["Read".to_owned(), "HMI".to_owned(), "Avg.".to_owned()]);
    header
}

fn render_text(table: &RenderedTable) -> String {
    let header = header(table);
    let body = table_cells(table, cell_text);
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in &body {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }

    let mut out = String::new();
    let mut write_row = |cells: &[String]| {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            if i == 0 {
                line.push_str(&format!("{cell:<width$}", width = widths[0]));
            } else {
                line.push_str(&format!("{cell:>width$}", width = widths[i]));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    };
    write_row(&header);
    write_row(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for row in &body {
        write_row(row);
    }
    out
}

fn render_markdown(table: &RenderedTable) -> String {
    let header = header(table);
    let body = table_cells(table, cell_markdown);
    let mut out = String::new();
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    let aligns: Vec<&str> =
        header.iter().enumerate().map(|(i, _)| if i == 0 { "---" } else { "---:" }).collect();
    out.push_str(&format!("| {} |\n", aligns.join(" | ")));
    for row in &body {
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    out
}

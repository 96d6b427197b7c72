//! Text tables, key-value files and CSVs for metrics, losses and ablations.

use std::fmt::Write as _;

use situate_core::datamodel::Window;
use situate_core::decoder::Prediction;
use situate_core::evalkit::{angular_metrics, l2_metrics, MetricsReport};
use situate_core::objective::TERM_NAMES;
use situate_core::pipeline::{AblationRow, AblationSuite, EpochReport};

use crate::error::Result;

/// Column headers of the main table, in display order.
pub const METRIC_COLUMNS: [&str; 6] = ["Hand", "Head Dist", "Head Dir", "Gaze", "Object Center", "Object AP"];
pub const HARD_COLUMNS: [&str; 2] = ["Hard Object Center", "Hard Object AP"];

fn ap_cell(ap: Option<f64>) -> String {
    ap.map_or_else(|| "n/a".into(), |v| format!("{v:.2}"))
}

fn metric_cells(m: &MetricsReport) -> Vec<String> {
    vec![
        format!("{:.2}", m.hand_mm),
        format!("{:.2}", m.head_dist_mm),
        format!("{:.2}", m.head_dir_deg),
        format!("{:.2}", m.gaze_deg),
        format!("{:.2}", m.object_center_mm),
        ap_cell(m.object_ap),
    ]
}

fn render(headers: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> =
        (0..headers.len()).map(|c| rows.iter().map(|r| r[c].len()).chain([headers[c].len()]).max().unwrap_or(0)).collect();
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (s, w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(headers);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

/// One row per named report, with the hard-split columns when given.
/// Distances in mm, angles in degrees, AP in percent.
pub fn metrics_table(rows: &[(&str, &MetricsReport, Option<&MetricsReport>)]) -> String {
    let with_hard = rows.iter().any(|r| r.2.is_some());
    let mut headers = vec![String::new()];
    headers.extend(METRIC_COLUMNS.iter().map(|s| s.to_string()));
    if with_hard {
        headers.extend(HARD_COLUMNS.iter().map(|s| s.to_string()));
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, all, hard)| {
            let mut r = vec![name.to_string()];
            r.extend(metric_cells(all));
            if with_hard {
                match hard {
                    Some(h) => r.extend([format!("{:.2}", h.object_center_mm), ap_cell(h.object_ap)]),
                    None => r.extend(["n/a".to_string(), "n/a".to_string()]),
                }
            }
            r
        })
        .collect();
    render(&headers, &body)
}

/// `key=value` lines for one report, keys prefixed by `prefix`.
pub fn metrics_kv(prefix: &str, m: &MetricsReport) -> String {
    let mut s = String::new();
    for (k, v) in [
        ("hand_mm", m.hand_mm),
        ("head_dist_mm", m.head_dist_mm),
        ("head_dir_deg", m.head_dir_deg),
        ("gaze_deg", m.gaze_deg),
        ("object_center_mm", m.object_center_mm),
    ] {
        let _ = writeln!(s, "{prefix}{k}={v}");
    }
    match m.object_ap {
        Some(ap) => {
            let _ = writeln!(s, "{prefix}object_ap={ap}");
        }
        None => {
            let _ = writeln!(s, "{prefix}object_ap=nan");
        }
    }
    let _ = writeln!(s, "{prefix}windows={}", m.windows);
    s
}

pub fn loss_csv_header() -> String {
    format!("epoch,lr,{},total", TERM_NAMES.join(","))
}

pub fn loss_csv_row(r: &EpochReport) -> String {
    let terms: Vec<String> = r.terms.0.iter().map(|v| format!("{v:.10e}")).collect();
    format!("{},{:.10e},{},{:.10e}", r.epoch + 1, r.lr, terms.join(","), r.total)
}

pub fn loss_csv(history: &[EpochReport]) -> String {
    let mut s = loss_csv_header();
    s.push('\n');
    for r in history {
        s.push_str(&loss_csv_row(r));
        s.push('\n');
    }
    s
}

fn ablation_cells(row: &AblationRow) -> Vec<String> {
    let mut r = vec![row.name.clone()];
    r.extend(row.columns().iter().map(|v| v.map_or_else(|| "n/a".into(), |x| format!("{x:.2}"))));
    r
}

/// Ablation rows by the eight metric columns, then the K-sweep.
pub fn ablation_tables(suite: &AblationSuite) -> String {
    let mut headers = vec![String::new()];
    headers.extend(AblationRow::COLUMNS.iter().map(|s| s.to_string()));
    let rows: Vec<Vec<String>> = suite.rows.iter().map(ablation_cells).collect();
    let mut out = render(&headers, &rows);
    out.push('\n');
    let k_headers: Vec<String> = ["K", "Hand", "Object Center", "Object AP"].iter().map(|s| s.to_string()).collect();
    let k_rows: Vec<Vec<String>> = suite
        .k_sweep
        .iter()
        .map(|k| vec![k.k.to_string(), format!("{:.2}", k.hand_mm), format!("{:.2}", k.object_center_mm), ap_cell(k.object_ap)])
        .collect();
    out.push_str(&render(&k_headers, &k_rows));
    out
}

/// Ablation rows and the K-sweep as two CSV blocks separated by a blank line.
pub fn ablation_csv(suite: &AblationSuite) -> String {
    let cols: Vec<String> = AblationRow::COLUMNS.iter().map(|c| c.to_lowercase().replace(' ', "_")).collect();
    let mut s = format!("config,{}\n", cols.join(","));
    for row in &suite.rows {
        let cells: Vec<String> = row.columns().iter().map(|v| v.map_or("nan".into(), |x| format!("{x:.10e}"))).collect();
        let _ = writeln!(s, "{},{}", row.name, cells.join(","));
    }
    s.push_str("\nk,hand,object_center,object_ap\n");
    for k in &suite.k_sweep {
        let ap = k.object_ap.map_or("nan".into(), |x| format!("{x:.10e}"));
        let _ = writeln!(s, "{},{:.10e},{:.10e},{ap}", k.k, k.hand_mm, k.object_center_mm);
    }
    s
}

pub const PER_WINDOW_HEADER: &str = "window,start,hand_mm,head_dist_mm,head_dir_deg,gaze_deg,object_center_mm";

/// One CSV line of per-window trajectory errors.
pub fn per_window_row(index: usize, pred: &Prediction, w: &Window) -> Result<String> {
    let (hand, head, center) = l2_metrics(pred, &w.future)?;
    let (dir, gaze) = angular_metrics(&pred.future, &w.future)?;
    Ok(format!("{index},{},{hand:.6},{head:.6},{dir:.6},{gaze:.6},{center:.6}", w.start))
}

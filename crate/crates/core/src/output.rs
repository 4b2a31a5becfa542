//! CSV and SVG output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{ExperimentResult, RunTrace};

pub const SUMMARY_HEADER: &str = "method,setting,problem,iteration,mean_utility_gap,n_reps";
pub const TRACE_HEADER: &str =
    "t,x_index,w_index,y_f,y_g,n_H,n_L,n_M,c_best,recommend_index,utility_gap,status";
const PADDING_NOTE: &str =
    "# runs that stop before the budget hold their final utility gap for the remaining iterations";

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub setting: String,
    pub problem: String,
    pub iteration: usize,
    pub mean_utility_gap: f64,
    pub n_reps: usize,
}

pub fn summary_rows(result: &ExperimentResult) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for m in &result.methods {
        for (i, &g) in m.mean_gap.iter().enumerate() {
            rows.push(SummaryRow {
                method: m.method.to_string(),
                setting: result.setting.as_str().to_string(),
                problem: result.problem.to_string(),
                iteration: i + 1,
                mean_utility_gap: g,
                n_reps: m.traces.len(),
            });
        }
    }
    rows
}

pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    s.push_str(PADDING_NOTE);
    s.push('\n');
    s.push_str(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.method, r.setting, r.problem, r.iteration, r.mean_utility_gap, r.n_reps
        );
    }
    s
}

pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>> {
    let bad = |line: &str| Error::InvalidParameter(format!("malformed summary line '{line}'"));
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(Error::InvalidParameter("summary header missing".into()));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(line));
            }
            Ok(SummaryRow {
                method: f[0].to_string(),
                setting: f[1].to_string(),
                problem: f[2].to_string(),
                iteration: f[3].parse().map_err(|_| bad(line))?,
                mean_utility_gap: f[4].parse().map_err(|_| bad(line))?,
                n_reps: f[5].parse().map_err(|_| bad(line))?,
            })
        })
        .collect()
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

pub fn format_trace(trace: &RunTrace) -> String {
    let mut s = String::new();
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in &trace.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            opt(&r.x_index),
            opt(&r.w_index),
            opt(&r.y_f),
            opt(&r.y_g),
            r.n_h,
            r.n_l,
            r.n_m,
            r.c_best,
            opt(&r.recommendation),
            r.utility_gap,
            r.status.as_str()
        );
    }
    s
}

/// Writes `summary.csv`, `status.csv` and one `<method>/trace_<rep>.csv` per
/// replication under `out_dir`.
pub fn emit_csv(result: &ExperimentResult, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("summary.csv"), format_summary(&summary_rows(result)))?;
    let mut status = String::from("method,status,count\n");
    for m in &result.methods {
        let dir = out_dir.join(m.method.as_str());
        fs::create_dir_all(&dir)?;
        for (rep, tr) in m.traces.iter().enumerate() {
            fs::write(dir.join(format!("trace_{rep}.csv")), format_trace(tr))?;
        }
        let mut counts: Vec<(&str, usize)> = Vec::new();
        for tr in &m.traces {
            let s = tr.final_status().map(|s| s.as_str()).unwrap_or("empty");
            match counts.iter_mut().find(|(k, _)| *k == s) {
                Some(c) => c.1 += 1,
                None => counts.push((s, 1)),
            }
        }
        for (s, c) in counts {
            let _ = writeln!(status, "{},{},{}", m.method, s, c);
        }
    }
    fs::write(out_dir.join("status.csv"), status)?;
    Ok(())
}

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Mean utility gap against iteration, one polyline per curve, log vertical
/// axis when every value is positive.
pub fn render_plot(curves: &[(String, Vec<f64>)]) -> Result<String> {
    if curves.is_empty() {
        return Err(Error::Empty("curves"));
    }
    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (70.0, 150.0, 20.0, 50.0);
    let values = || curves.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite());
    let log = values().all(|v| v > 0.0);
    let tf = |v: f64| if log { v.log10() } else { v };
    let mut lo = values().map(tf).fold(f64::INFINITY, f64::min);
    let mut hi = values().map(tf).fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let n = curves.iter().map(|(_, v)| v.len()).max().unwrap_or(1).max(2);
    let px = |i: usize| left + (w - left - right) * i as f64 / (n - 1) as f64;
    let py = |v: f64| top + (h - top - bottom) * (hi - tf(v)) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (left, w - right, top, h - bottom);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {y0} L{x0} {y1} L{x1} {y1}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">iteration</text>"#,
        (x0 + x1) / 2.0,
        h - 12.0
    );
    let ylabel = if log { "mean utility gap (log)" } else { "mean utility gap" };
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 18 {})">{ylabel}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (label, v) in [(lo, y1), (hi, y0)] {
        let shown = if log { 10f64.powf(label) } else { label };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="11">{shown:.3e}</text>"#,
            x0 - 4.0,
            v + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{x0}" y="{}" text-anchor="middle" font-size="11">1</text>"#,
        y1 + 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{x1}" y="{}" text-anchor="middle" font-size="11">{n}</text>"#,
        y1 + 16.0
    );
    for (k, (name, v)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = v
            .iter()
            .enumerate()
            .filter(|(_, y)| y.is_finite())
            .map(|(i, &y)| format!("{:.2},{:.2}", px(i), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = top + 18.0 * k as f64 + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            w - right + 10.0,
            w - right + 30.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12">{name}</text>"#,
            w - right + 36.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(result: &ExperimentResult, out_dir: &Path) -> Result<()> {
    let curves: Vec<(String, Vec<f64>)> = result
        .methods
        .iter()
        .map(|m| (m.method.to_string(), m.mean_gap.clone()))
        .collect();
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("utility_gap.svg"), render_plot(&curves)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{RunStatus, TraceRow};

    fn row(t: usize, status: RunStatus) -> TraceRow {
        TraceRow {
            t,
            x_index: Some(1),
            w_index: Some(2),
            y_f: Some(0.1),
            y_g: Some(-3.25),
            n_h: 1,
            n_l: 2,
            n_m: 3,
            c_best: 0.5,
            recommendation: None,
            utility_gap: 1.0 / 3.0,
            status,
        }
    }

    #[test]
    fn empty_trace_is_header_only() {
        assert_eq!(format_trace(&RunTrace::default()), format!("{TRACE_HEADER}\n"));
        let s = format_summary(&[]);
        assert_eq!(s.lines().filter(|l| !l.starts_with('#')).count(), 1);
    }

    #[test]
    fn three_iterations_make_four_lines() {
        let tr = RunTrace {
            rows: vec![row(1, RunStatus::Continue), row(2, RunStatus::Continue), row(3, RunStatus::BudgetExhausted)],
        };
        let s = format_trace(&tr);
        assert_eq!(s.lines().count(), 4);
        assert!(s.ends_with("budget_exhausted\n"));
        assert!(s.contains(",0.3333333333333333,"));
    }

    #[test]
    fn summary_round_trips_exactly() {
        let rows: Vec<SummaryRow> = (1..=5)
            .map(|i| SummaryRow {
                method: "proposed".into(),
                setting: "simulator".into(),
                problem: "synthetic".into(),
                iteration: i,
                mean_utility_gap: (i as f64).sqrt() / 7.0 + 1e-300,
                n_reps: 3,
            })
            .collect();
        assert_eq!(parse_summary(&format_summary(&rows)).unwrap(), rows);
    }

    #[test]
    fn plot_scales() {
        let flat = render_plot(&[("a".into(), vec![1.0, 1.0, 1.0])]).unwrap();
        assert_eq!(flat.matches("<polyline").count(), 1);
        assert!(flat.contains("(log)"));
        let zero = render_plot(&[("a".into(), vec![1.0, 0.0])]).unwrap();
        assert!(!zero.contains("(log)"));
        let names = ["proposed", "random", "us", "drbo", "drptr", "ccbo"];
        let six: Vec<(String, Vec<f64>)> = names.iter().map(|n| (n.to_string(), vec![2.0, 1.0])).collect();
        let svg = render_plot(&six).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 6);
        let pos: Vec<usize> = names.iter().map(|n| svg.find(&format!(">{n}<")).unwrap()).collect();
        assert!(pos.windows(2).all(|p| p[0] < p[1]));
        assert!(render_plot(&[]).is_err());
    }
}

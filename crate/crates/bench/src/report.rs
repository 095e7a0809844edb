//! CSV and SVG output of comparison reports.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use sfe_core::lti::fmt_full;
use sfe_core::{Matrix, Result};

use crate::experiment::{AlgorithmRun, ExperimentReport};
use crate::stats::ErrorStats;

/// Writes `estimates.csv`, `summary.csv`, `errors.csv`, `faulty_data.csv`,
/// `identification_data.csv`, `xi.csv` and `errors.svg` into `dir`.
/// Timing goes to `timing.txt` so the CSV files are reproducible.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_estimates(report, File::create(dir.join("estimates.csv"))?)?;
    write_errors(report, File::create(dir.join("errors.csv"))?)?;
    write_summary(report, File::create(dir.join("summary.csv"))?)?;
    report
        .faulty_data
        .write_csv(File::create(dir.join("faulty_data.csv"))?)?;
    report
        .identification_data
        .write_csv(File::create(dir.join("identification_data.csv"))?)?;
    if let Some(xi) = &report.xi {
        xi.write_csv(File::create(dir.join("xi.csv"))?)?;
    }
    std::fs::write(dir.join("errors.svg"), error_svg(report))?;
    std::fs::write(dir.join("timing.txt"), timing_text(report))?;
    Ok(())
}

fn runs(report: &ExperimentReport) -> Vec<(&'static str, Option<&AlgorithmRun>)> {
    report
        .results
        .iter()
        .map(|r| (r.name, r.outcome.as_ref().ok()))
        .collect()
}

/// `k, f1.., <alg>_f1..` over the whole run; empty fields where an
/// estimate is unavailable.
pub fn write_estimates<W: std::io::Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let n_f = report.faults.ncols();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string()];
    header.extend((1..=n_f).map(|j| format!("f{j}")));
    let runs = runs(report);
    for (name, _) in &runs {
        header.extend((1..=n_f).map(|j| format!("{name}_f{j}")));
    }
    w.write_record(&header)?;
    for k in 0..report.faults.nrows() {
        let mut rec = vec![k.to_string()];
        rec.extend(report.faults.row(k).iter().map(|v| fmt_full(*v)));
        for (_, run) in &runs {
            match run.and_then(|r| r.estimates[k].as_ref()) {
                Some(est) => rec.extend(est.iter().map(|v| fmt_full(*v))),
                None => rec.extend(std::iter::repeat_n(String::new(), n_f)),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Errors `f̂ − f` over the evaluation window.
pub fn write_errors<W: std::io::Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let n_f = report.faults.ncols();
    let mut w = csv::Writer::from_writer(out);
    let runs = runs(report);
    let mut header = vec!["k".to_string()];
    for (name, _) in &runs {
        header.extend((1..=n_f).map(|j| format!("{name}_e{j}")));
    }
    w.write_record(&header)?;
    let ev = &report.evaluation;
    for k in ev.start..ev.start + ev.length {
        let mut rec = vec![k.to_string()];
        for (_, run) in &runs {
            match run.and_then(|r| r.estimates[k].as_ref()) {
                Some(est) => rec.extend((0..n_f).map(|j| fmt_full(est[j] - report.faults[(k, j)]))),
                None => rec.extend(std::iter::repeat_n(String::new(), n_f)),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per algorithm: status, mean, covariance (row-major), trace,
/// ellipse semi-axes and orientation, filter spectral radius.
pub fn write_summary<W: std::io::Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let n_f = report.faults.ncols();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "algorithm",
        "status",
        "samples",
        "window_start",
        "window_length",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=n_f).map(|j| format!("mean_{j}")));
    for i in 1..=n_f {
        header.extend((1..=n_f).map(|j| format!("cov_{i}{j}")));
    }
    header.push("trace".into());
    header.extend((1..=n_f).map(|j| format!("semi_axis_{j}")));
    header.extend(["angle_deg", "degenerate", "spectral_radius", "message"].map(String::from));
    w.write_record(&header)?;
    let width = header.len();
    for r in &report.results {
        let mut rec = vec![r.name.to_string()];
        match &r.outcome {
            Ok(run) => {
                let s: &ErrorStats = &run.stats;
                rec.push("ok".into());
                rec.push(s.samples.to_string());
                rec.push(report.evaluation.start.to_string());
                rec.push(report.evaluation.length.to_string());
                rec.extend(s.mean.iter().map(|v| fmt_full(*v)));
                for i in 0..n_f {
                    rec.extend((0..n_f).map(|j| fmt_full(s.covariance[(i, j)])));
                }
                rec.push(fmt_full(s.trace()));
                rec.extend(s.ellipse.semi_axes.iter().map(|v| fmt_full(*v)));
                rec.push(s.ellipse.angle_deg().map(fmt_full).unwrap_or_default());
                rec.push(s.degenerate.to_string());
                rec.push(run.spectral_radius.map(fmt_full).unwrap_or_default());
                rec.push(String::new());
            }
            Err(msg) => {
                rec.push("failed".into());
                rec.resize(width - 1, String::new());
                rec.push(msg.clone());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn timing_text(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let n = report.faults.nrows().max(1) as f64;
    for r in &report.results {
        if let Ok(run) = &r.outcome {
            let _ = writeln!(
                s,
                "{}: setup {:.3} ms, run {:.3} ms, {:.3} us/sample",
                r.name,
                run.setup_time.as_secs_f64() * 1e3,
                run.run_time.as_secs_f64() * 1e3,
                run.run_time.as_secs_f64() * 1e6 / n
            );
        }
    }
    s
}

const PANEL: f64 = 300.0;
const MARGIN: f64 = 40.0;

/// Error scatter with the 3σ contour, one panel per algorithm. With a
/// single fault the panels show the error over time with `±√3σ` bands;
/// with more than two only the first two components are drawn.
pub fn error_svg(report: &ExperimentReport) -> String {
    let n_f = report.faults.ncols();
    let runs = runs(report);
    let ev = &report.evaluation;
    let errors: Vec<Option<Matrix>> = runs
        .iter()
        .map(|(_, run)| {
            run.map(|r| {
                Matrix::from_fn(ev.length, n_f, |t, j| {
                    let k = ev.start + t;
                    r.estimates[k]
                        .as_ref()
                        .map_or(f64::NAN, |e| e[j] - report.faults[(k, j)])
                })
            })
        })
        .collect();
    // common symmetric scale over all panels
    let mut lim = errors
        .iter()
        .flatten()
        .flat_map(|e| e.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    if lim == 0.0 {
        lim = 1.0;
    }
    lim *= 1.1;
    let cols = runs.len().clamp(1, 2);
    let rows = runs.len().div_ceil(cols);
    let width = cols as f64 * (PANEL + MARGIN) + MARGIN;
    let height = rows as f64 * (PANEL + MARGIN) + MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (idx, ((name, run), err)) in runs.iter().zip(&errors).enumerate() {
        let ox = MARGIN + (idx % cols) as f64 * (PANEL + MARGIN);
        let oy = MARGIN + (idx / cols) as f64 * (PANEL + MARGIN);
        let _ = writeln!(s, r#"<g transform="translate({ox},{oy})">"#);
        let _ = writeln!(
            s,
            r#"<rect width="{PANEL}" height="{PANEL}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(s, r#"<text x="4" y="-6">{name}</text>"#);
        let (Some(run), Some(err)) = (run, err) else {
            let _ = writeln!(s, r#"<text x="10" y="{}">failed</text></g>"#, PANEL / 2.0);
            continue;
        };
        if n_f >= 2 {
            let px = |v: f64| PANEL / 2.0 + v / lim * PANEL / 2.0;
            let py = |v: f64| PANEL / 2.0 - v / lim * PANEL / 2.0;
            let _ = writeln!(
                s,
                r##"<line x1="0" y1="{c}" x2="{PANEL}" y2="{c}" stroke="#ccc"/><line x1="{c}" y1="0" x2="{c}" y2="{PANEL}" stroke="#ccc"/>"##,
                c = PANEL / 2.0
            );
            for t in 0..err.nrows() {
                let (x, y) = (err[(t, 0)], err[(t, 1)]);
                if x.is_finite() && y.is_finite() {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="1.2" fill="steelblue"/>"#,
                        px(x),
                        py(y)
                    );
                }
            }
            // 3σ contour of the first two components
            let stats = &run.stats;
            let sub = stats.covariance.view((0, 0), (2, 2)).into_owned();
            let eig = nalgebra::SymmetricEigen::new(sub);
            let mut path = String::new();
            for i in 0..=72 {
                let th = i as f64 / 72.0 * std::f64::consts::TAU;
                let mut p = [stats.mean[0], stats.mean[1]];
                for a in 0..2 {
                    let r = (3.0 * eig.eigenvalues[a].max(0.0)).sqrt()
                        * if a == 0 { th.cos() } else { th.sin() };
                    p[0] += r * eig.eigenvectors[(0, a)];
                    p[1] += r * eig.eigenvectors[(1, a)];
                }
                let _ = write!(
                    path,
                    "{}{:.2},{:.2} ",
                    if i == 0 { "M" } else { "L" },
                    px(p[0]),
                    py(p[1])
                );
            }
            let _ = writeln!(
                s,
                r#"<path d="{}" fill="none" stroke="crimson" stroke-width="1.5"/>"#,
                path.trim_end()
            );
            let _ = writeln!(
                s,
                r#"<text x="4" y="{}">e1 (±{lim:.3})</text>"#,
                PANEL - 4.0
            );
        } else {
            let len = err.nrows().max(1) as f64;
            let px = |t: usize| t as f64 / len * PANEL;
            let py = |v: f64| PANEL / 2.0 - v / lim * PANEL / 2.0;
            let mut path = String::new();
            for t in 0..err.nrows() {
                let _ = write!(
                    path,
                    "{}{:.2},{:.2} ",
                    if t == 0 { "M" } else { "L" },
                    px(t),
                    py(err[(t, 0)])
                );
            }
            let _ = writeln!(
                s,
                r#"<path d="{}" fill="none" stroke="steelblue"/>"#,
                path.trim_end()
            );
            let half = run.stats.ellipse.semi_axes[0];
            for v in [run.stats.mean[0] - half, run.stats.mean[0] + half] {
                let _ = writeln!(
                    s,
                    r#"<line x1="0" y1="{y:.2}" x2="{PANEL}" y2="{y:.2}" stroke="crimson"/>"#,
                    y = py(v)
                );
            }
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

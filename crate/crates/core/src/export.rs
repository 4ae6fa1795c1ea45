//! CSV and SVG output for batch reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{BatchReport, PlannerSummary};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let io = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    Error::io(path, io)
}

fn check(report: &BatchReport) -> Result<()> {
    if report.planners.is_empty() {
        return Err(Error::InvalidConfig("report has no planners".into()));
    }
    Ok(())
}

/// Writes `metrics_<planner>.csv` for each planner and `summary.csv`.
pub fn export_csv(report: &BatchReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    check(report)?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for p in &report.planners {
        let path = dir.join(format!("metrics_{}.csv", p.planner));
        write_metrics(p, &path).map_err(|e| csv_err(&path, e))?;
        written.push(path);
    }
    let path = dir.join("summary.csv");
    write_summary(report, &path).map_err(|e| csv_err(&path, e))?;
    written.push(path);
    Ok(written)
}

fn write_metrics(p: &PlannerSummary, path: &Path) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "mean_D", "std_D", "mean_P", "std_P"])?;
    for k in 0..p.mean_distance.len() {
        w.write_record([
            k.to_string(),
            p.mean_distance[k].to_string(),
            p.std_distance[k].to_string(),
            p.mean_variance[k].to_string(),
            p.std_variance[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(report: &BatchReport, path: &Path) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "planner",
        "runs",
        "reached",
        "median_steps",
        "first_seed",
        "padding",
    ])?;
    for p in &report.planners {
        w.write_record([
            p.planner.to_string(),
            p.runs.len().to_string(),
            p.reached.to_string(),
            p.median_steps
                .map_or_else(|| "not_reached".to_string(), |m| m.to_string()),
            report
                .seeds
                .first()
                .map_or(String::new(), |s| s.to_string()),
            "carry_forward".to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const COLORS: [&str; 6] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02",
];

/// Writes `distance.svg` and `variance.svg` line charts of the per-step
/// means.
pub fn export_svg(report: &BatchReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    check(report)?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    type Series = fn(&PlannerSummary) -> &[f64];
    let charts: [(&str, &str, Series); 2] = [
        ("distance.svg", "mean distance to target", |p| {
            &p.mean_distance
        }),
        ("variance.svg", "mean posterior variance (trace)", |p| {
            &p.mean_variance
        }),
    ];
    let mut written = Vec::new();
    for (file, title, series) in charts {
        let path = dir.join(file);
        let lines: Vec<(&str, &[f64])> = report
            .planners
            .iter()
            .map(|p| (p.planner, series(p)))
            .collect();
        fs::write(&path, line_chart(title, &lines)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn line_chart(title: &str, lines: &[(&str, &[f64])]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const L: f64 = 60.0;
    const R: f64 = 120.0;
    const T: f64 = 30.0;
    const B: f64 = 40.0;
    let n = lines.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(2);
    let ymax = lines
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let ymax = if ymax > 0.0 { ymax } else { 1.0 };
    let sx = |k: usize| L + (W - L - R) * k as f64 / (n - 1) as f64;
    let sy = |y: f64| T + (H - T - B) * (1.0 - y / ymax);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{L}" y="18">{title}</text>"#);
    let _ = writeln!(
        s,
        r#"<polyline points="{L},{T} {L},{y0} {x1},{y0}" fill="none" stroke="black"/>"#,
        y0 = H - B,
        x1 = W - R
    );
    let _ = writeln!(
        s,
        r#"<text x="{x}" y="{y}" text-anchor="middle">step</text>"#,
        x = (L + W - R) / 2.0,
        y = H - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">0</text>"#,
        L - 4.0,
        H - B
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{ymax:.3}</text>"#,
        L - 4.0,
        T + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
        W - R,
        H - B + 16.0,
        n - 1
    );
    for (i, (name, v)) in lines.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = v
            .iter()
            .enumerate()
            .map(|(k, y)| format!("{:.2},{:.2}", sx(k), sy(*y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = T + 16.0 * i as f64 + 10.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{name}</text>"#,
            W - R + 10.0
        );
    }
    s.push_str("</svg>\n");
    s
}

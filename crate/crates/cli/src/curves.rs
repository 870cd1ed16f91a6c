//! Dose-quality curves: CSV and a static SVG chart of projection SSIM
//! against total photons on a log axis, one polyline per series.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hdrec_core::TomoError;

use crate::error::{CliError, Result};
use crate::sweep::{SweepFailure, SweepPoint};

pub const CURVES_HEADER: &str = "series,n_pairs,b0_low,total_photons,proj_ssim,proj_psnr,recon_ssim";

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

pub fn points_csv(points: &[SweepPoint]) -> String {
    let mut out = format!("{CURVES_HEADER}\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.series(),
            p.n_pairs,
            p.b0_low,
            p.total_photons,
            p.proj_mean_ssim,
            p.proj_mean_psnr,
            p.recon_ssim
        )
        .unwrap();
    }
    out
}

pub fn read_points_csv(path: &Path) -> Result<Vec<SweepPoint>> {
    let err = |message: String| CliError::Csv {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let header = reader.headers().map_err(|e| err(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CURVES_HEADER {
        return Err(err(format!("expected header '{CURVES_HEADER}'")));
    }
    let mut points = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let r = record.map_err(|e| err(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            r[i].parse().map_err(|_| err(format!("row {}: bad number '{}'", line + 1, &r[i])))
        };
        let n_pairs: usize = r[1]
            .parse()
            .map_err(|_| err(format!("row {}: bad n_pairs '{}'", line + 1, &r[1])))?;
        let point = SweepPoint {
            n_pairs,
            b0_low: num(2)?,
            total_photons: num(3)?,
            proj_mean_ssim: num(4)?,
            proj_mean_psnr: num(5)?,
            recon_ssim: num(6)?,
            baseline: &r[0] == "uniform",
        };
        if point.series() != r[0] {
            return Err(err(format!("row {}: series '{}' does not match n_pairs {n_pairs}", line + 1, &r[0])));
        }
        points.push(point);
    }
    Ok(points)
}

struct Frame {
    width: f64,
    height: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    x_min: f64,
    x_max: f64,
}

impl Frame {
    fn x(&self, photons: f64) -> f64 {
        let span = self.x_max - self.x_min;
        let t = if span > 0.0 { (photons.log10() - self.x_min) / span } else { 0.5 };
        self.left + t * (self.width - self.left - self.right)
    }

    fn y(&self, ssim: f64) -> f64 {
        let t = ssim.clamp(0.0, 1.0);
        self.height - self.bottom - t * (self.height - self.top - self.bottom)
    }
}

/// Series labels in order of first appearance.
fn series_labels(points: &[SweepPoint]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for p in points {
        let s = p.series();
        if !labels.contains(&s) {
            labels.push(s);
        }
    }
    labels
}

pub fn points_svg(points: &[SweepPoint]) -> String {
    let logs: Vec<f64> = points.iter().map(|p| p.total_photons.log10()).collect();
    let f = Frame {
        width: 640.0,
        height: 400.0,
        left: 60.0,
        right: 140.0,
        top: 20.0,
        bottom: 50.0,
        x_min: logs.iter().cloned().fold(f64::INFINITY, f64::min),
        x_max: logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    };
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
        f.width, f.height
    )
    .unwrap();
    let (x0, x1) = (f.left, f.width - f.right);
    let (y0, y1) = (f.height - f.bottom, f.top);
    writeln!(s, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, f.width, f.height).unwrap();
    writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#).unwrap();
    writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#).unwrap();
    for decade in f.x_min.floor() as i32..=f.x_max.ceil() as i32 {
        let d = decade as f64;
        if d < f.x_min - 1e-9 || d > f.x_max + 1e-9 {
            continue;
        }
        let x = f.x(10f64.powi(decade));
        writeln!(s, r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="black"/>"#, y0 + 5.0).unwrap();
        writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{decade}</text>"#, y0 + 18.0).unwrap();
    }
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let y = f.y(v);
        writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#, x0 - 5.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, x0 - 8.0, y + 4.0).unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">total photons per detector pixel</text>"#,
        (x0 + x1) / 2.0,
        f.height - 10.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text transform="translate(15,{:.2}) rotate(-90)" text-anchor="middle">mean projection SSIM</text>"#,
        (y0 + y1) / 2.0
    )
    .unwrap();

    for (k, label) in series_labels(points).iter().enumerate() {
        let color = if label == "uniform" { "black" } else { PALETTE[k % PALETTE.len()] };
        let mut series: Vec<&SweepPoint> = points.iter().filter(|p| &p.series() == label).collect();
        series.sort_by(|a, b| a.total_photons.total_cmp(&b.total_photons));
        let coords: Vec<String> = series
            .iter()
            .map(|p| format!("{:.2},{:.2}", f.x(p.total_photons), f.y(p.proj_mean_ssim)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        )
        .unwrap();
        for p in &series {
            writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                f.x(p.total_photons),
                f.y(p.proj_mean_ssim)
            )
            .unwrap();
        }
        let ly = f.top + 10.0 + 18.0 * k as f64;
        writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.5"/>"#,
            x1 + 15.0,
            x1 + 35.0
        )
        .unwrap();
        writeln!(s, r#"<text x="{}" y="{}">{label}</text>"#, x1 + 40.0, ly + 4.0).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the CSV to `path` and the chart next to it with an `.svg`
/// extension.
pub fn emit_curves(points: &[SweepPoint], path: &Path) -> Result<()> {
    if points.is_empty() {
        return Err(TomoError::Parameter("no points to plot".into()).into());
    }
    fs::write(path, points_csv(points)).map_err(|e| TomoError::io(path, e))?;
    let svg = path.with_extension("svg");
    fs::write(&svg, points_svg(points)).map_err(|e| TomoError::io(&svg, e))?;
    Ok(())
}

pub fn write_failures(failures: &[SweepFailure], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let io = |e: csv::Error| CliError::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    w.write_record(["job", "n_pairs", "b0_low", "error"]).map_err(io)?;
    for f in failures {
        w.write_record([f.job.clone(), f.n_pairs.to_string(), f.b0_low.to_string(), f.message.clone()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| TomoError::io(path, e))?;
    Ok(())
}

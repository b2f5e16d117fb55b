//! Reward-over-time chart: trailing moving average, CSV and a standalone SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Trailing mean over the last `window` values; shorter prefixes average
/// whatever is available.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

pub fn render_csv(rewards: &[f64], window: usize) -> String {
    let ma = moving_average(rewards, window);
    let mut s = String::from("episode,reward,moving_avg\n");
    for (i, (r, m)) in rewards.iter().zip(&ma).enumerate() {
        let _ = writeln!(s, "{},{},{}", i + 1, r, m);
    }
    s
}

pub fn render_svg(rewards: &[f64], window: usize, title: &str) -> String {
    const W: f64 = 720.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let ma = moving_average(rewards, window);
    let n = rewards.len().max(2) as f64;
    let lo = rewards.iter().chain(&ma).cloned().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = rewards.iter().chain(&ma).cloned().fold(f64::NEG_INFINITY, f64::max).max(lo + 1e-9);
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (n - 1.0);
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let points = |vals: &[f64]| {
        vals.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v))).collect::<Vec<_>>().join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#, W / 2.0, title);
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    for (v, anchor_y) in [(lo, y(lo)), (hi, y(hi))] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.3}</text>"#, PAD - 4.0, anchor_y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">episode</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(s, r##"<polyline fill="none" stroke="#9ab" stroke-width="1" points="{}"/>"##, points(rewards));
    let _ = writeln!(s, r##"<polyline fill="none" stroke="#c33" stroke-width="2" points="{}"/>"##, points(&ma));
    let _ = writeln!(s, r##"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="#9ab">reward</text>"##, W - PAD - 150.0, PAD - 8.0);
    let _ = writeln!(s, r##"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="#c33">moving average ({window})</text>"##, W - PAD - 100.0, PAD - 8.0);
    s.push_str("</svg>\n");
    s
}

/// Writes the SVG to `svg_path` and the series CSV next to it (same stem,
/// `.csv`). Returns the CSV path.
pub fn emit_plot(rewards: &[f64], window: usize, svg_path: &Path) -> Result<PathBuf> {
    if rewards.is_empty() {
        return Err(Error::Input("nothing to plot: no episodes".into()));
    }
    let csv_path = svg_path.with_extension("csv");
    fs::write(&csv_path, render_csv(rewards, window))?;
    fs::write(svg_path, render_svg(rewards, window, "Reward over time"))?;
    Ok(csv_path)
}

//! Self-contained SVG renderings of the columnar artifacts.
//!
//! Output depends only on the input file: coordinates are printed with fixed
//! precision and nothing time- or environment-dependent is embedded.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use tvar_core::{Error, Result};

use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// `date`, a value column V and `lower`/`upper` (or `lower_V`/`upper_V`).
    LineWithBand,
    /// `date,horizon,beta` in long format, drawn as a date × horizon heatmap.
    SurfaceLongFormat,
    /// `frequency,density,lower,upper`: log density with a confidence cross.
    SpectrumPanel,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line_with_band" => Ok(Self::LineWithBand),
            "surface_long_format" | "surface" => Ok(Self::SurfaceLongFormat),
            "spectrum_panel" | "spectrum" => Ok(Self::SpectrumPanel),
            _ => Err(Error::Config(format!("unknown plot kind `{s}`"))),
        }
    }
}

const W: f64 = 800.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
/// Most date columns drawn in a heatmap; longer samples are thinned evenly.
const MAX_SURFACE_COLUMNS: usize = 400;

/// Renders `artifact` as `kind` into `output`. `value` names the plotted
/// column for line plots; the second column is used when absent.
pub fn emit_plot(artifact: &Path, kind: PlotKind, output: &Path, value: Option<&str>) -> Result<()> {
    let t = Table::read(artifact)?;
    let title = artifact.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let svg = match kind {
        PlotKind::LineWithBand => line_with_band(&t, value, title)?,
        PlotKind::SurfaceLongFormat => surface(&t, title)?,
        PlotKind::SpectrumPanel => spectrum_panel(&t, title)?,
    };
    std::fs::write(output, svg)?;
    Ok(())
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return None;
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { lo.abs().max(1.0) * 0.05 };
    Some((lo - pad, hi + pad))
}

/// About five round tick values covering `(lo, hi)`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(title));
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(s: &mut String, f: &Frame, xlabels: &[(f64, String)], ylabel: &str) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(s, r#"<rect x="{x0:.1}" y="{y0:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
    for v in ticks(f.y.0, f.y.1) {
        let y = f.py(v);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, fmt_tick(v));
    }
    for (x, label) in xlabels {
        let px = f.px(*x);
        let _ = writeln!(s, r#"<line x1="{px:.1}" y1="{y1:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/>"#, y1 + 4.0);
        let _ = writeln!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y1 + 16.0, escape(label));
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Year labels at roughly ten evenly spaced dates.
fn date_labels(dates: &[&str]) -> Vec<(f64, String)> {
    let step = (dates.len() / 10).max(1);
    (0..dates.len()).step_by(step).map(|i| (i as f64, dates[i].split('-').next().unwrap_or("").to_string())).collect()
}

/// Polyline segments through the defined points.
fn polylines(s: &mut String, f: &Frame, ys: &[Option<f64>], style: &str) {
    let mut pts = String::new();
    let flush = |pts: &mut String, s: &mut String| {
        if !pts.is_empty() {
            let _ = writeln!(s, r#"<polyline fill="none" {style} points="{}"/>"#, pts.trim_end());
            pts.clear();
        }
    };
    for (i, y) in ys.iter().enumerate() {
        match y {
            Some(y) if y.is_finite() => {
                let _ = write!(pts, "{:.2},{:.2} ", f.px(i as f64), f.py(*y));
            }
            _ => flush(&mut pts, s),
        }
    }
    flush(&mut pts, s);
}

fn line_with_band(t: &Table, value: Option<&str>, title: &str) -> Result<String> {
    let dates = t.strings("date")?;
    let value = match value {
        Some(v) => v.to_string(),
        None => t.headers.iter().find(|h| *h != "date").cloned().ok_or_else(|| Error::Config("no value column".into()))?,
    };
    let (lo_name, hi_name) = if t.has(&format!("lower_{value}")) {
        (format!("lower_{value}"), format!("upper_{value}"))
    } else {
        ("lower".to_string(), "upper".to_string())
    };
    let y = t.numbers(&value)?;
    let lo = t.numbers(&lo_name)?;
    let hi = t.numbers(&hi_name)?;
    if dates.len() < 2 {
        return Err(Error::Data("line plot needs at least two rows".into()));
    }
    let all = y.iter().chain(&lo).chain(&hi).flatten().copied();
    let yr = range(all).ok_or_else(|| Error::Data(format!("column `{value}` has no finite values")))?;
    let f = Frame { x: (0.0, (dates.len() - 1) as f64), y: yr };
    let mut s = open(title);
    axes(&mut s, &f, &date_labels(&dates), &value);
    polylines(&mut s, &f, &lo, r##"stroke="#555" stroke-dasharray="4 3" stroke-width="0.8""##);
    polylines(&mut s, &f, &hi, r##"stroke="#555" stroke-dasharray="4 3" stroke-width="0.8""##);
    polylines(&mut s, &f, &y, r##"stroke="#1f4e9c" stroke-width="1.2""##);
    s.push_str("</svg>\n");
    Ok(s)
}

fn surface(t: &Table, title: &str) -> Result<String> {
    let dates = t.strings("date")?;
    let horizon = t.numbers("horizon")?;
    let beta = t.numbers("beta")?;
    let mut cols: Vec<&str> = Vec::new();
    let mut cells: Vec<(usize, usize, f64)> = Vec::with_capacity(dates.len());
    let mut hmax = 0usize;
    for ((d, h), b) in dates.iter().zip(&horizon).zip(&beta) {
        let (Some(h), Some(b)) = (h, b) else { return Err(Error::Data("surface rows need horizon and beta".into())) };
        if cols.last() != Some(d) {
            cols.push(d);
        }
        let h = *h as usize;
        hmax = hmax.max(h);
        cells.push((cols.len() - 1, h, *b));
    }
    if cols.is_empty() || hmax == 0 {
        return Err(Error::Data("surface needs at least one date and horizon ≥ 1".into()));
    }
    let keep = cols.len().div_ceil(MAX_SURFACE_COLUMNS);
    let ncols = cols.len().div_ceil(keep);
    // β₀ = 1 by construction; scale colours on the responses
    let scale = cells.iter().filter(|c| c.1 > 0).map(|c| c.2.abs()).fold(0.0, f64::max).max(1e-12);
    let f = Frame { x: (0.0, ncols as f64), y: (0.5, hmax as f64 + 0.5) };
    let mut s = open(title);
    let labels: Vec<(f64, String)> = date_labels(&cols).into_iter().map(|(x, l)| (x / keep as f64, l)).collect();
    axes(&mut s, &f, &labels, "horizon (months)");
    let cw = (W - LEFT - RIGHT) / ncols as f64;
    let ch = (H - TOP - BOTTOM) / hmax as f64;
    for (c, h, b) in cells {
        if h == 0 || c % keep != 0 {
            continue;
        }
        let x = f.px((c / keep) as f64);
        let y = f.py(h as f64 + 0.5);
        let _ = writeln!(s, r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#, cw + 0.05, ch + 0.05, diverging(b / scale));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">|β| max {}</text>"#, W - RIGHT, H - 8.0, fmt_tick(scale));
    s.push_str("</svg>\n");
    Ok(s)
}

/// Blue (−1) through white (0) to red (+1).
fn diverging(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let fade = |c: f64| (255.0 - (255.0 - c) * v.abs()).round() as u8;
    let (r, g, b) = if v >= 0.0 { (fade(178.0), fade(24.0), fade(43.0)) } else { (fade(33.0), fade(102.0), fade(172.0)) };
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn spectrum_panel(t: &Table, title: &str) -> Result<String> {
    let freq: Vec<f64> = t.numbers("frequency")?.into_iter().flatten().collect();
    let dens = t.numbers("density")?;
    let lower = t.numbers("lower")?;
    let upper = t.numbers("upper")?;
    if freq.len() != dens.len() || freq.len() < 2 {
        return Err(Error::Data("spectrum needs at least two complete rows".into()));
    }
    let logd: Vec<Option<f64>> = dens.iter().map(|d| d.filter(|v| *v > 0.0).map(f64::log10)).collect();
    let yr = range(logd.iter().flatten().copied()).ok_or_else(|| Error::Data("spectrum has no positive density".into()))?;
    // confidence cross: its height is the interval around a unit density, in
    // log units, and it is centred near the top right
    let ratio = |v: &[Option<f64>]| v[0].zip(dens[0]).filter(|(_, d)| *d > 0.0).map(|(b, d)| (b / d).log10());
    let (dl, du) = (ratio(&lower).unwrap_or(0.0), ratio(&upper).unwrap_or(0.0));
    let f = Frame { x: (freq[0], freq[freq.len() - 1]), y: (yr.0.min(yr.1 - (du - dl)), yr.1) };
    let mut s = open(title);
    let labels: Vec<(f64, String)> = ticks(f.x.0, f.x.1).into_iter().map(|x| (x, fmt_tick(x))).collect();
    axes(&mut s, &f, &labels, "log10 density");
    let pts: String = freq
        .iter()
        .zip(&logd)
        .filter_map(|(x, y)| y.map(|y| format!("{:.2},{:.2}", f.px(*x), f.py(y))))
        .collect::<Vec<_>>()
        .join(" ");
    let _ = writeln!(s, r##"<polyline fill="none" stroke="#1f4e9c" stroke-width="1.2" points="{pts}"/>"##);
    let cx = f.px(f.x.0 + 0.85 * (f.x.1 - f.x.0));
    let centre = f.y.1 - 0.1 * (f.y.1 - f.y.0) - du;
    let (ytop, ybot) = (f.py(centre + du), f.py(centre + dl));
    let ymid = f.py(centre);
    let half = 0.02 * (W - LEFT - RIGHT);
    let _ = writeln!(s, r#"<line x1="{cx:.2}" y1="{ytop:.2}" x2="{cx:.2}" y2="{ybot:.2}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{:.2}" y1="{ymid:.2}" x2="{:.2}" y2="{ymid:.2}" stroke="black"/>"#, cx - half, cx + half);
    s.push_str("</svg>\n");
    Ok(s)
}

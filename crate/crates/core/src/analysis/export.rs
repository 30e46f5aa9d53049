//! CSV tables and SVG plots of aggregated curves.
//!
//! The SVG is an 800x600 document:
//!
//! ```text
//! <svg viewBox="0 0 800 600">
//!   <title/>
//!   <rect class="background"/>
//!   <g class="axes"> lines, tick marks and tick labels </g>
//!   <g class="series" data-name="..."> one per series
//!     <polygon class="band"/>   mean +/- 1 std
//!     <path class="mean"/>
//!   </g>
//!   <text class="x-label"/> <text class="y-label"/>
//! </svg>
//! ```
//!
//! Coordinates are printed with two decimals, so identical inputs give
//! identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::curves::{AggregateCurve, XKind};
use crate::error::{Error, Result};
use crate::numfmt::g17;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Header `x,mean,std,n`, one row per grid point.
pub fn write_csv(aggregate: &AggregateCurve) -> String {
    let mut out = String::from("x,mean,std,n\n");
    for i in 0..aggregate.grid.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            g17(aggregate.grid[i]),
            g17(aggregate.mean[i]),
            g17(aggregate.std[i]),
            aggregate.n_curves
        );
    }
    out
}

pub struct PlotSeries<'a> {
    pub name: &'a str,
    pub curve: &'a AggregateCurve,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

pub fn render_svg(series: &[PlotSeries<'_>], title: &str, x_label: &str, y_label: &str) -> String {
    let all = || series.iter().map(|s| s.curve);
    let x_lo = all()
        .flat_map(|c| c.grid.first().copied())
        .fold(f64::INFINITY, f64::min);
    let x_hi = all()
        .flat_map(|c| c.grid.last().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let y_lo = all()
        .flat_map(|c| c.mean.iter().zip(&c.std).map(|(m, s)| m - s))
        .fold(f64::INFINITY, f64::min);
    let y_hi = all()
        .flat_map(|c| c.mean.iter().zip(&c.std).map(|(m, s)| m + s))
        .fold(f64::NEG_INFINITY, f64::max);
    let (x_lo, x_hi) = if x_hi > x_lo && x_lo.is_finite() {
        (x_lo, x_hi)
    } else {
        padded_range(x_lo, x_hi)
    };
    let (y_lo, y_hi) = padded_range(y_lo, y_hi);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 800 600" width="800" height="600" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(title));
    let _ = writeln!(
        svg,
        r#"<rect class="background" x="0" y="0" width="800" height="600" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text class="title" x="400" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        escape(title)
    );

    let _ = writeln!(svg, r#"<g class="axes" stroke="black" stroke-width="1">"#);
    let (x0, y0, x1, y1) = (LEFT, TOP + plot_h, LEFT + plot_w, TOP);
    let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/>"#);
    for i in 0..TICKS {
        let f = i as f64 / (TICKS - 1) as f64;
        let xv = x_lo + f * (x_hi - x_lo);
        let yv = y_lo + f * (y_hi - y_lo);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle" stroke="none">{}</text>"#,
            y0 + 20.0,
            tick_label(xv)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0:.2}" y2="{py:.2}"/>"#,
            x0 - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" stroke="none">{}</text>"#,
            x0 - 8.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(svg, "</g>");

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let c = s.curve;
        let _ = writeln!(svg, r#"<g class="series" data-name="{}">"#, escape(s.name));
        let mut band = String::new();
        for (x, (m, sd)) in c.grid.iter().zip(c.mean.iter().zip(&c.std)) {
            let _ = write!(band, "{:.2},{:.2} ", sx(*x), sy(m + sd));
        }
        for (x, (m, sd)) in c.grid.iter().zip(c.mean.iter().zip(&c.std)).rev() {
            let _ = write!(band, "{:.2},{:.2} ", sx(*x), sy(m - sd));
        }
        let _ = writeln!(
            svg,
            r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let mut d = String::new();
        for (i, (x, m)) in c.grid.iter().zip(&c.mean).enumerate() {
            let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, sx(*x), sy(*m));
        }
        let _ = writeln!(
            svg,
            r#"<path class="mean" d="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            d.trim_end()
        );
        let ly = TOP + 15.0 + 18.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<text class="legend" x="{:.2}" y="{ly:.2}" fill="{color}" text-anchor="end">{}</text>"#,
            LEFT + plot_w - 5.0,
            escape(s.name)
        );
        let _ = writeln!(svg, "</g>");
    }

    let _ = writeln!(
        svg,
        r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 20.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text class="y-label" x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportedFiles {
    pub csv: PathBuf,
    pub svg: PathBuf,
}

/// Writes `<name>.csv` and `<name>.svg` into `out_dir`.
pub fn export_results(
    aggregate: &AggregateCurve,
    out_dir: impl AsRef<Path>,
    name: &str,
    metric: &str,
) -> Result<ExportedFiles> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv = out_dir.join(format!("{name}.csv"));
    let svg = out_dir.join(format!("{name}.svg"));
    fs::write(&csv, write_csv(aggregate)).map_err(|e| Error::io(&csv, e))?;
    let x_label = match aggregate.x_kind {
        XKind::Round => "round",
        XKind::Cost => "cumulative cost",
    };
    let plot = render_svg(
        &[PlotSeries {
            name: metric,
            curve: aggregate,
        }],
        name,
        x_label,
        metric,
    );
    fs::write(&svg, plot).map_err(|e| Error::io(&svg, e))?;
    Ok(ExportedFiles { csv, svg })
}

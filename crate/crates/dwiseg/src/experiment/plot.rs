//! Hand-rolled SVG charts: the DSC-vs-size learning curve and grouped
//! detection-metric bars. SVG keeps the outputs dependency-free and
//! byte-deterministic; PNG is intentionally not built in.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiment::{best_x_selection, CellStatus, ExperimentResult, Regime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotFormat {
    Svg,
    Png,
}

impl FromStr for PlotFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<PlotFormat> {
        match s {
            "svg" => Ok(PlotFormat::Svg),
            "png" => Ok(PlotFormat::Png),
            other => Err(Error::Config(format!("unknown plot format '{other}'"))),
        }
    }
}

fn require_svg(format: PlotFormat) -> Result<()> {
    match format {
        PlotFormat::Svg => Ok(()),
        PlotFormat::Png => Err(Error::Config(
            "png output is not supported; emit svg and convert externally".into(),
        )),
    }
}

fn regime_color(regime: Regime) -> &'static str {
    match regime {
        Regime::Transfer => "#1f77b4",
        Regime::Scratch => "#d62728",
        Regime::NoTraining => "#7f7f7f",
    }
}

/// Mean-over-seeds metrics per (regime, size) at the selected X (best X for
/// trained regimes, none for the baseline).
struct SeriesPoint {
    mean_dsc: f64,
    sensitivity: f64,
    specificity: f64,
    precision: Option<f64>,
}

fn series_points(result: &ExperimentResult) -> BTreeMap<(Regime, usize), SeriesPoint> {
    let best_x = best_x_selection(result);
    let mut acc: BTreeMap<(Regime, usize), (f64, f64, f64, f64, usize, usize)> = BTreeMap::new();
    for cell in &result.cells {
        if !matches!(cell.status, CellStatus::Ok) {
            continue;
        }
        let Some(report) = &cell.report else { continue };
        let key = (cell.key.regime, cell.key.size);
        let selected = match cell.key.x {
            None => true,
            Some(x) => best_x.get(&key).is_some_and(|&bx| (bx - x).abs() < 1e-9),
        };
        if !selected {
            continue;
        }
        let e = acc.entry(key).or_insert((0.0, 0.0, 0.0, 0.0, 0, 0));
        e.0 += report.mean_dsc;
        e.1 += report.sensitivity;
        e.2 += report.specificity;
        if let Some(p) = report.precision {
            e.3 += p;
            e.5 += 1;
        }
        e.4 += 1;
    }
    acc.into_iter()
        .map(|(k, (dsc, sens, spec, prec, n, np))| {
            let n = n as f64;
            (
                k,
                SeriesPoint {
                    mean_dsc: dsc / n,
                    sensitivity: sens / n,
                    specificity: spec / n,
                    precision: (np > 0).then(|| prec / np as f64),
                },
            )
        })
        .collect()
}

const CURVE_W: f64 = 640.0;
const CURVE_H: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 56.0;

fn svg_header(w: f64, h: f64, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        w / 2.0
    )
}

pub(crate) fn curve_plot_svg(result: &ExperimentResult) -> String {
    let points = series_points(result);
    let sizes = &result.plan.finetune_sizes;
    let (min_s, max_s) = (sizes[0] as f64, *sizes.last().unwrap() as f64);
    let plot_w = CURVE_W - MARGIN_L - MARGIN_R;
    let plot_h = CURVE_H - MARGIN_T - MARGIN_B;
    let sx = |size: f64| {
        if max_s > min_s {
            MARGIN_L + (size - min_s) / (max_s - min_s) * plot_w
        } else {
            MARGIN_L + plot_w / 2.0
        }
    };
    let sy = |dsc: f64| MARGIN_T + (1.0 - dsc) * plot_h;

    let mut svg = svg_header(
        CURVE_W,
        CURVE_H,
        &format!("{} DSC vs fine-tune size", result.zone),
    );
    // Axes and gridlines.
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.1}</text>",
            MARGIN_L + plot_w,
            MARGIN_L - 8.0,
            y + 4.0
        );
    }
    for &size in sizes {
        let x = sx(size as f64);
        let _ = writeln!(
            svg,
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{size}</text>",
            MARGIN_T + plot_h + 20.0
        );
    }
    let _ = writeln!(
        svg,
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.1}\" stroke=\"black\"/>\
         <line x1=\"{MARGIN_L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">fine-tune size (patients)</text>\
         <text x=\"16\" y=\"{:.1}\" transform=\"rotate(-90 16 {:.1})\" text-anchor=\"middle\">mean DSC</text>",
        MARGIN_T + plot_h,
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h,
        MARGIN_L + plot_w / 2.0,
        MARGIN_T + plot_h + 40.0,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
    );

    for (i, &regime) in result.plan.regimes.iter().enumerate() {
        let series: Vec<(f64, f64)> = sizes
            .iter()
            .filter_map(|&size| {
                points
                    .get(&(regime, size))
                    .map(|p| (sx(size as f64), sy(p.mean_dsc)))
            })
            .collect();
        if series.is_empty() {
            continue;
        }
        let path: Vec<String> = series
            .iter()
            .map(|(x, y)| format!("{x:.1},{y:.1}"))
            .collect();
        let color = regime_color(regime);
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            path.join(" ")
        );
        for (x, y) in &series {
            let _ = writeln!(svg, "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"3\" fill=\"{color}\"/>");
        }
        let ly = MARGIN_T + 16.0 + i as f64 * 18.0;
        let lx = MARGIN_L + plot_w + 12.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{lx:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\">{regime}</text>",
            ly - 4.0,
            lx + 22.0,
            ly - 4.0,
            lx + 28.0,
            ly
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// DSC learning curve: one line per regime over fine-tune sizes, at each
/// regime's best X (the baseline is X-free and flat by construction).
pub fn emit_curve_plot(
    result: &ExperimentResult,
    out_path: &Path,
    format: PlotFormat,
) -> Result<()> {
    require_svg(format)?;
    let svg = curve_plot_svg(result);
    std::fs::write(out_path, svg).map_err(|e| Error::io(out_path, e))
}

const METRICS: [(&str, &str); 3] = [
    ("sensitivity", "#1f77b4"),
    ("specificity", "#2ca02c"),
    ("precision", "#ff7f0e"),
];

pub(crate) fn metric_bars_svg(result: &ExperimentResult, sizes: &[usize]) -> Result<String> {
    let selected: Vec<usize> = if sizes.is_empty() {
        result.plan.finetune_sizes.clone()
    } else {
        sizes.to_vec()
    };
    for size in &selected {
        if !result.plan.finetune_sizes.contains(size) {
            return Err(Error::Config(format!("size {size} is not in the plan")));
        }
    }
    let points = series_points(result);
    let bar_w = 16.0;
    let group_w = bar_w * 3.0 + 12.0;
    let block_w = group_w * result.plan.regimes.len() as f64 + 28.0;
    let plot_h = 300.0;
    let width = (MARGIN_L + block_w * selected.len() as f64 + 180.0).max(420.0);
    let height = plot_h + MARGIN_T + 96.0;
    let mut svg = svg_header(width, height, &format!("{} detection metrics", result.zone));
    let sy = |v: f64| MARGIN_T + 24.0 + (1.0 - v) * plot_h;
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN_L}\" y1=\"{0:.1}\" x2=\"{1:.1}\" y2=\"{0:.1}\" stroke=\"#dddddd\"/>\
             <text x=\"{2:.1}\" y=\"{3:.1}\" text-anchor=\"end\">{v:.1}</text>",
            sy(v),
            width - 150.0,
            MARGIN_L - 8.0,
            sy(v) + 4.0
        );
    }
    let base_y = sy(0.0);
    for (si, &size) in selected.iter().enumerate() {
        let block_x = MARGIN_L + si as f64 * block_w;
        for (ri, &regime) in result.plan.regimes.iter().enumerate() {
            let group_x = block_x + ri as f64 * group_w;
            let Some(p) = points.get(&(regime, size)) else {
                continue;
            };
            let values = [p.sensitivity, p.specificity, p.precision.unwrap_or(f64::NAN)];
            for (mi, ((_, color), value)) in METRICS.iter().zip(values).enumerate() {
                if value.is_nan() {
                    continue;
                }
                let x = group_x + mi as f64 * bar_w;
                let y = sy(value);
                let _ = writeln!(
                    svg,
                    "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{color}\"/>",
                    bar_w - 2.0,
                    base_y - y
                );
            }
            let _ = writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">{regime}</text>",
                group_x + group_w / 2.0 - 6.0,
                base_y + 16.0
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">n={size}</text>",
            block_x + block_w / 2.0 - 14.0,
            base_y + 34.0
        );
    }
    for (mi, (name, color)) in METRICS.iter().enumerate() {
        let ly = MARGIN_T + 24.0 + mi as f64 * 18.0;
        let lx = width - 140.0;
        let _ = writeln!(
            svg,
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\">{name}</text>",
            ly - 10.0,
            lx + 18.0,
            ly
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Grouped sensitivity/specificity/precision bars per regime for the chosen
/// sizes (all plan sizes when `sizes` is empty).
pub fn emit_metric_bars(
    result: &ExperimentResult,
    sizes: &[usize],
    out_path: &Path,
    format: PlotFormat,
) -> Result<()> {
    require_svg(format)?;
    let svg = metric_bars_svg(result, sizes)?;
    std::fs::write(out_path, svg).map_err(|e| Error::io(out_path, e))
}

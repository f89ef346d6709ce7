//! SVG rendering of interval rules over time-series panels.
//!
//! A figure has one row per class and five columns: three maximally diverse
//! class members, the prototypical member and the class mean. Each condition
//! of a displayed rule is drawn as a red vertical segment at its timestep,
//! spanning the interval clipped to the panel's y-range.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassLabel, Dataset};
use crate::error::{Error, Result};
use crate::rule::Rule;
use crate::ruleset::RuleSet;

#[derive(Debug, Clone, PartialEq)]
pub struct Exemplars {
    pub class: ClassLabel,
    pub diverse: Vec<usize>,
    pub prototype: usize,
    pub mean: Vec<f64>,
    /// Set when an instance had to be shown more than once.
    pub reused: bool,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Index of the largest value; ties go to the earliest position.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn select_exemplars(dataset: &Dataset, class: ClassLabel) -> Result<Exemplars> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    select_exemplars_among(dataset, class, &all)
}

/// Exemplars drawn from `candidates` that carry label `class`.
///
/// The prototype is the member closest to the class mean. Diverse members
/// come from farthest-point sampling started at the member farthest from
/// the mean.
pub fn select_exemplars_among(
    dataset: &Dataset,
    class: ClassLabel,
    candidates: &[usize],
) -> Result<Exemplars> {
    let members: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&n| dataset.label(n) == class)
        .collect();
    if members.is_empty() {
        return Err(Error::Config(format!("class {class} has no instances to plot")));
    }
    let width = dataset.feature_count();
    let mut mean = vec![0.0; width];
    for &n in &members {
        for (m, v) in mean.iter_mut().zip(dataset.instance(n)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= members.len() as f64;
    }
    let to_mean: Vec<f64> = members
        .iter()
        .map(|&n| distance(dataset.instance(n), &mean))
        .collect();
    let prototype = members[argmax(to_mean.iter().map(|d| -d))];

    let mut picked = vec![argmax(to_mean.iter().copied())];
    while picked.len() < 3 {
        let next = argmax(members.iter().map(|&n| {
            picked
                .iter()
                .map(|&p| distance(dataset.instance(n), dataset.instance(members[p])))
                .fold(f64::INFINITY, f64::min)
        }));
        picked.push(next);
    }
    let diverse: Vec<usize> = picked.iter().map(|&i| members[i]).collect();
    let mut distinct = diverse.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let reused = members.len() < 4 || distinct.len() < 3;
    if reused {
        log::warn!("class {class}: fewer than four distinct instances, exemplars repeat");
    }
    Ok(Exemplars {
        class,
        diverse,
        prototype,
        mean,
        reused,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotSpec {
    pub panel_width: f64,
    /// Height of one channel sub-panel.
    pub channel_height: f64,
    pub gap: f64,
    pub margin: f64,
    pub font_size: f64,
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self {
            panel_width: 220.0,
            channel_height: 120.0,
            gap: 24.0,
            margin: 30.0,
            font_size: 10.0,
        }
    }
}

pub const COLUMNS: usize = 5;
const GRID: &str = "#d9d9d9";
const DIVERSE: &str = "#2ca02c";
const PROTOTYPE: &str = "#ff7f0e";
const MEAN: &str = "#1b7a1b";
const MARKER: &str = "#d62728";
const ARROW: f64 = 5.0;

/// Horizontal position of timestep `t` inside a panel of `width`.
pub fn x_position(t: usize, timesteps: usize, width: f64) -> f64 {
    if timesteps <= 1 {
        width / 2.0
    } else {
        t as f64 / (timesteps - 1) as f64 * width
    }
}

struct YScale {
    lo: f64,
    hi: f64,
    height: f64,
}

impl YScale {
    fn y(&self, v: f64) -> f64 {
        (self.hi - v.clamp(self.lo, self.hi)) / (self.hi - self.lo) * self.height
    }
}

fn channel_ranges(dataset: &Dataset) -> Vec<(f64, f64)> {
    let c = dataset.channels();
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); c];
    for (i, v) in dataset.values().iter().enumerate() {
        let r = &mut ranges[i % c];
        r.0 = r.0.min(*v);
        r.1 = r.1.max(*v);
    }
    ranges
        .into_iter()
        .map(|(lo, hi)| {
            let pad = if hi > lo { (hi - lo) * 0.05 } else { 1.0 };
            (lo - pad, hi + pad)
        })
        .collect()
}

fn f2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Panel<'a> {
    title: String,
    series: &'a [f64],
    colour: &'a str,
    instance: Option<usize>,
    rule: Option<&'a Rule>,
}

/// Renders the class grid for `ruleset`. Exemplars are drawn from the
/// instances the rule set explains when the class has any, otherwise from
/// the whole dataset.
pub fn render_svg(dataset: &Dataset, ruleset: &RuleSet, spec: &PlotSpec) -> Result<String> {
    for (_, rule) in ruleset.present_rules() {
        rule.check_bounds(dataset.timesteps(), dataset.channels())?;
    }
    let classes = dataset.classes();
    let explained: Vec<usize> = ruleset.rules.keys().copied().collect();
    let mut rows = Vec::with_capacity(classes.len());
    for &class in &classes {
        let among_explained = explained.iter().any(|&n| dataset.label(n) == class);
        let ex = if among_explained {
            select_exemplars_among(dataset, class, &explained)?
        } else {
            select_exemplars(dataset, class)?
        };
        rows.push(ex);
    }

    let (t, c) = (dataset.timesteps(), dataset.channels());
    let ranges = channel_ranges(dataset);
    let cell_h = spec.channel_height * c as f64 + spec.font_size * 2.5;
    let width = spec.margin * 2.0 + COLUMNS as f64 * spec.panel_width + (COLUMNS - 1) as f64 * spec.gap;
    let height = spec.margin * 2.0 + rows.len() as f64 * (cell_h + spec.gap);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="{fs}">"#,
        w = f2(width),
        h = f2(height),
        fs = f2(spec.font_size)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-weight="bold">{} {}</text>"#,
        f2(spec.margin),
        f2(spec.margin * 0.6),
        escape(dataset.name()),
        escape(&ruleset.provenance)
    );

    for (r, ex) in rows.iter().enumerate() {
        let mut panels: Vec<Panel<'_>> = ex
            .diverse
            .iter()
            .enumerate()
            .map(|(i, &n)| Panel {
                title: format!("class {} diverse {} (#{n})", ex.class, i + 1),
                series: dataset.instance(n),
                colour: DIVERSE,
                instance: Some(n),
                rule: ruleset.rule(n),
            })
            .collect();
        panels.push(Panel {
            title: format!("class {} prototype (#{})", ex.class, ex.prototype),
            series: dataset.instance(ex.prototype),
            colour: PROTOTYPE,
            instance: Some(ex.prototype),
            rule: ruleset.rule(ex.prototype),
        });
        panels.push(Panel {
            title: format!("class {} mean", ex.class),
            series: &ex.mean,
            colour: MEAN,
            instance: None,
            rule: None,
        });

        for (col, panel) in panels.iter().enumerate() {
            let x0 = spec.margin + col as f64 * (spec.panel_width + spec.gap);
            let y0 = spec.margin + r as f64 * (cell_h + spec.gap);
            render_cell(&mut out, panel, x0, y0, t, c, &ranges, ex.class, spec);
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn render_cell(
    out: &mut String,
    panel: &Panel<'_>,
    x0: f64,
    y0: f64,
    timesteps: usize,
    channels: usize,
    ranges: &[(f64, f64)],
    class: ClassLabel,
    spec: &PlotSpec,
) {
    let w = spec.panel_width;
    let h = spec.channel_height;
    let instance_attr = panel
        .instance
        .map_or_else(String::new, |n| format!(r#" data-instance="{n}""#));
    let _ = writeln!(
        out,
        r#"<text class="title" x="{}" y="{}">{}</text>"#,
        f2(x0),
        f2(y0 - 4.0),
        escape(&panel.title)
    );
    for ch in 0..channels {
        let scale = YScale {
            lo: ranges[ch].0,
            hi: ranges[ch].1,
            height: h,
        };
        let _ = writeln!(
            out,
            r#"<g class="panel" data-class="{class}" data-channel="{ch}"{instance_attr} transform="translate({},{})">"#,
            f2(x0),
            f2(y0 + ch as f64 * h)
        );
        let _ = writeln!(
            out,
            r#"<rect x="0" y="0" width="{}" height="{}" fill="none" stroke="{GRID}"/>"#,
            f2(w),
            f2(h)
        );
        for i in 1..4 {
            let gy = h * i as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<line class="grid" x1="0" y1="{y}" x2="{}" y2="{y}" stroke="{GRID}" stroke-width="0.5"/>"#,
                f2(w),
                y = f2(gy)
            );
        }
        for i in 1..4 {
            let gx = w * i as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<line class="grid" x1="{x}" y1="0" x2="{x}" y2="{}" stroke="{GRID}" stroke-width="0.5"/>"#,
                f2(h),
                x = f2(gx)
            );
        }
        let points: Vec<String> = (0..timesteps)
            .map(|t| {
                let v = panel.series[t * channels + ch];
                format!("{},{}", f2(x_position(t, timesteps, w)), f2(scale.y(v)))
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
            points.join(" "),
            panel.colour
        );
        if let Some(rule) = panel.rule {
            for cond in rule.conditions().iter().filter(|c| c.feature.channel == ch) {
                let x = x_position(cond.feature.timestep, timesteps, w);
                let lower = cond.interval.lower();
                let upper = cond.interval.upper();
                let (ya, yb) = (scale.y(lower), scale.y(upper));
                let _ = writeln!(
                    out,
                    r#"<line class="marker" data-t="{}" data-c="{ch}" x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="{MARKER}" stroke-width="1.5"/>"#,
                    cond.feature.timestep,
                    f2(ya),
                    f2(yb),
                    x = f2(x)
                );
                if upper == f64::INFINITY {
                    let _ = writeln!(
                        out,
                        r#"<polygon class="arrow" points="{},{} {},{} {},{}" fill="{MARKER}"/>"#,
                        f2(x - ARROW / 2.0),
                        f2(yb + ARROW),
                        f2(x + ARROW / 2.0),
                        f2(yb + ARROW),
                        f2(x),
                        f2(yb)
                    );
                }
                if lower == f64::NEG_INFINITY {
                    let _ = writeln!(
                        out,
                        r#"<polygon class="arrow" points="{},{} {},{} {},{}" fill="{MARKER}"/>"#,
                        f2(x - ARROW / 2.0),
                        f2(ya - ARROW),
                        f2(x + ARROW / 2.0),
                        f2(ya - ARROW),
                        f2(x),
                        f2(ya)
                    );
                }
            }
        }
        out.push_str("</g>\n");
    }
    let legend = match (panel.instance, panel.rule) {
        (None, _) => "class mean".to_string(),
        (Some(_), None) => "no rule".to_string(),
        (Some(_), Some(rule)) => {
            let conf = rule.confidence().map_or_else(|| "undefined".into(), f2);
            format!("CONF={conf} COV={}", f2(rule.coverage()))
        }
    };
    let _ = writeln!(
        out,
        r#"<text class="legend" x="{}" y="{}">{}</text>"#,
        f2(x0),
        f2(y0 + channels as f64 * h + spec.font_size * 1.5),
        escape(&legend)
    );
}

/// `<dataset>_<provenance>.svg` with characters outside `[A-Za-z0-9+_-]`
/// replaced by `_`.
pub fn figure_file_name(dataset: &str, provenance: &str) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || matches!(c, '+' | '_' | '-') {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    };
    format!("{}_{}.svg", clean(dataset), clean(provenance))
}

/// Renders and writes the figure into `out_dir`, returning its path.
pub fn write_svg(dataset: &Dataset, ruleset: &RuleSet, spec: &PlotSpec, out_dir: &Path) -> Result<PathBuf> {
    let svg = render_svg(dataset, ruleset, spec)?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(figure_file_name(dataset.name(), &ruleset.provenance));
    fs::write(&path, svg)?;
    Ok(path)
}

//! SVG learning curves: reward against episodes, one series per algorithm,
//! mean line over a shaded one-std band.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::runner::{read_csv, RunRecord, METRIC_REWARD};
use crate::error::Result;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// `(episodes, mean, std)` points of one algorithm, sorted by episodes.
pub type Series = Vec<(f64, f64, f64)>;

/// Case name to per-algorithm series.
pub fn collect_series(records: &[RunRecord]) -> BTreeMap<String, BTreeMap<String, Series>> {
    let mut raw: BTreeMap<String, BTreeMap<String, BTreeMap<usize, Vec<f64>>>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.metric == METRIC_REWARD) {
        let case = format!("{}_S{}_A{}_O{}_H{}", r.instance_kind, r.states, r.actions, r.observations, r.horizon);
        raw.entry(case).or_default().entry(r.algo.clone()).or_default().entry(r.episodes_used).or_default().push(r.value);
    }
    raw.into_iter()
        .map(|(case, algos)| {
            let series = algos
                .into_iter()
                .map(|(algo, pts)| {
                    let s = pts
                        .into_iter()
                        .map(|(x, ys)| {
                            let n = ys.len() as f64;
                            let m = ys.iter().sum::<f64>() / n;
                            let sd = (ys.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / n).sqrt();
                            (x as f64, m, sd)
                        })
                        .collect();
                    (algo, s)
                })
                .collect();
            (case, series)
        })
        .collect()
}

/// Renders one chart. No series gives bare axes.
pub fn render_svg(title: &str, series: &BTreeMap<String, Series>) -> String {
    let pts = series.values().flatten();
    let x_max = pts.clone().map(|p| p.0).fold(0.0, f64::max).max(1.0);
    let mut y_lo = pts.clone().map(|p| p.1 - p.2).fold(f64::INFINITY, f64::min);
    let mut y_hi = pts.map(|p| p.1 + p.2).fold(f64::NEG_INFINITY, f64::max);
    if !y_lo.is_finite() || !y_hi.is_finite() {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    if y_hi - y_lo < 1e-9 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + x / x_max * pw;
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * ph;

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="18" font-size="13" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<path d="M{LEFT:.1},{TOP:.1} L{LEFT:.1},{:.1} L{:.1},{:.1}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw,
        TOP + ph
    );
    for k in 0..=4 {
        let fx = x_max * k as f64 / 4.0;
        let fy = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{:.0}</text>"#, sx(fx), TOP + ph + 15.0, fx);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{:.2}</text>"#, LEFT - 5.0, sy(fy) + 3.0, fy);
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">episodes</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0);
    let _ = writeln!(out, r#"<text x="14" y="{:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 14 {:.1})">reward</text>"#, TOP + ph / 2.0, TOP + ph / 2.0);

    for (i, (algo, s)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if !s.is_empty() {
            let upper = s.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1 + p.2)));
            let lower = s.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1 - p.2)));
            let band: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
            let line: Vec<String> = s.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
            let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
            for p in s {
                let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(p.0), sy(p.1));
            }
        }
        let ly = TOP + 12.0 + 16.0 * i as f64;
        let lx = WIDTH - RIGHT + 10.0;
        let _ = writeln!(out, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 16.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#, lx + 20.0, ly + 3.0, escape(algo));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `<case>.svg` for every case in the CSV, or `empty.svg` when there are no reward rows.
pub fn emit_plots(csv: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let records = read_csv(csv)?;
    fs::create_dir_all(out_dir)?;
    let cases = collect_series(&records);
    let mut written = Vec::new();
    if cases.is_empty() {
        let path = out_dir.join("empty.svg");
        fs::write(&path, render_svg("no data", &BTreeMap::new()))?;
        written.push(path);
    }
    for (case, series) in &cases {
        let path = out_dir.join(format!("{case}.svg"));
        fs::write(&path, render_svg(case, series))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::runner::{write_csv, CSV_HEADER};

    fn rec(algo: &str, seed: u64, episodes: usize, value: f64) -> RunRecord {
        RunRecord {
            algo: algo.into(),
            instance_kind: "block_mdp".into(),
            states: 2,
            actions: 2,
            observations: 3,
            horizon: 5,
            seed: Some(seed),
            episodes_used: episodes,
            metric: METRIC_REWARD.into(),
            value,
        }
    }

    fn tmp(name: &str) -> PathBuf {
        std::env::temp_dir().join(format!("privileged-rl-plot-{}-{name}", std::process::id()))
    }

    #[test]
    fn one_series_per_algorithm() {
        let rs = vec![rec("a", 0, 10, 1.0), rec("a", 1, 10, 2.0), rec("b", 0, 10, 1.5), rec("c", 0, 20, 0.5)];
        let cases = collect_series(&rs);
        assert_eq!(cases.len(), 1);
        let series = cases.values().next().unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(series["a"], vec![(10.0, 1.5, 0.5)]);
        let svg = render_svg("case", series);
        assert_eq!(svg.matches("<polyline").count(), 3);
    }

    #[test]
    fn empty_csv_gives_bare_axes() {
        let dir = tmp("empty");
        fs::create_dir_all(&dir).unwrap();
        let csv = dir.join("r.csv");
        fs::write(&csv, format!("{CSV_HEADER}\n")).unwrap();
        let files = emit_plots(&csv, &dir).unwrap();
        assert_eq!(files.len(), 1);
        let svg = fs::read_to_string(&files[0]).unwrap();
        assert!(svg.contains("<path") && !svg.contains("<polyline"));
        fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn byte_stable() {
        let dir = tmp("stable");
        fs::create_dir_all(&dir).unwrap();
        let csv = dir.join("r.csv");
        write_csv(&csv, &[rec("a", 0, 10, 1.0), rec("a", 0, 20, 2.0)]).unwrap();
        let first = fs::read(&emit_plots(&csv, &dir.join("1")).unwrap()[0]).unwrap();
        let second = fs::read(&emit_plots(&csv, &dir.join("2")).unwrap()[0]).unwrap();
        assert_eq!(first, second);
        fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn malformed_csv_is_an_error() {
        let dir = tmp("bad");
        fs::create_dir_all(&dir).unwrap();
        let csv = dir.join("r.csv");
        fs::write(&csv, "x,y\n1,2\n").unwrap();
        assert!(emit_plots(&csv, &dir).is_err());
        fs::remove_dir_all(dir).ok();
    }
}

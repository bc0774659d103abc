//! Run artifacts on disk: per-episode CSV, JSON-lines logs and SVG charts.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

use super::config::{EnvKind, TransferMode};
use super::{EpisodeMetrics, RunArtifacts};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

pub fn write_episode_csv(path: &Path, episodes: &[EpisodeMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for e in episodes {
        w.serialize(e).map_err(|e| csv_err(path, e))?;
    }
    if episodes.is_empty() {
        w.write_record([
            "seed",
            "step",
            "episode",
            "length",
            "unique_achievements",
            "intrinsic_return",
            "extrinsic_return",
            "rewarded_goals",
            "success_rate",
            "task_success",
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_episode_csv(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Numeric value of a CSV column, if the episode has one.
pub fn metric_value(e: &EpisodeMetrics, metric: &str) -> Option<f64> {
    match metric {
        "unique_achievements" => Some(e.unique_achievements as f64),
        "intrinsic_return" => Some(e.intrinsic_return),
        "extrinsic_return" => Some(e.extrinsic_return),
        "rewarded_goals" => Some(e.rewarded_goals as f64),
        "length" => Some(e.length as f64),
        "success_rate" => e.success_rate,
        "task_success" => e.task_success.map(|b| b as u8 as f64),
        _ => None,
    }
}

/// One line of a chart: `(step, value)` points per seed.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartSeries {
    pub label: String,
    pub seeds: Vec<Vec<(f64, f64)>>,
}

impl ChartSeries {
    pub fn from_episodes(label: &str, episodes: &[EpisodeMetrics], metric: &str) -> Self {
        let mut seeds: Vec<(u64, Vec<(f64, f64)>)> = Vec::new();
        for e in episodes {
            let Some(v) = metric_value(e, metric) else {
                continue;
            };
            match seeds.iter_mut().find(|(s, _)| *s == e.seed) {
                Some((_, pts)) => pts.push((e.step as f64, v)),
                None => seeds.push((e.seed, vec![(e.step as f64, v)])),
            }
        }
        ChartSeries {
            label: label.to_string(),
            seeds: seeds.into_iter().map(|(_, p)| p).collect(),
        }
    }

    fn x_max(&self) -> f64 {
        self.seeds.iter().flatten().map(|p| p.0).fold(0.0, f64::max)
    }

    /// `(bin centre, mean, std)` across seeds, each seed first averaged
    /// within a bin and carried forward over empty bins.
    pub fn band(&self, bins: usize, x_max: f64) -> Vec<(f64, f64, f64)> {
        let width = x_max.max(1.0) / bins as f64;
        let per_seed: Vec<Vec<Option<f64>>> = self
            .seeds
            .iter()
            .map(|pts| {
                let mut sums = vec![(0.0, 0usize); bins];
                for &(x, y) in pts {
                    let b = ((x / width) as usize).min(bins - 1);
                    sums[b].0 += y;
                    sums[b].1 += 1;
                }
                let mut last = None;
                sums.into_iter()
                    .map(|(s, n)| {
                        if n > 0 {
                            last = Some(s / n as f64);
                        }
                        last
                    })
                    .collect()
            })
            .collect();
        (0..bins)
            .filter_map(|b| {
                let vals: Vec<f64> = per_seed.iter().filter_map(|s| s[b]).collect();
                if vals.is_empty() {
                    return None;
                }
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
                Some(((b as f64 + 0.5) * width, m, var.sqrt()))
            })
            .collect()
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Vertical extent covering every plotted band, padded by 5%.
pub fn chart_y_range(bands: &[Vec<(f64, f64, f64)>]) -> (f64, f64) {
    let lo = bands.iter().flatten().map(|p| p.1 - p.2).fold(f64::INFINITY, f64::min);
    let hi = bands.iter().flatten().map(|p| p.1 + p.2).fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean ± std line chart over steps.
pub fn render_chart(title: &str, y_label: &str, series: &[ChartSeries], bins: usize) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x_max = series.iter().map(ChartSeries::x_max).fold(1.0, f64::max);
    let bands: Vec<_> = series.iter().map(|s| s.band(bins.max(1), x_max)).collect();
    let (y0, y1) = chart_y_range(&bands);
    let sx = |x: f64| left + pw * x / x_max;
    let sy = |y: f64| top + ph * (1.0 - (y - y0) / (y1 - y0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        left + pw / 2.0,
        esc(title)
    );
    for i in 0..=5 {
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        let fx = x_max * i as f64 / 5.0;
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" x2=\"{:.1}\" y1=\"{:.1}\" y2=\"{:.1}\" stroke=\"#e0e0e0\"/>",
            left + pw,
            sy(fy),
            sy(fy)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.2}</text>",
            left - 6.0,
            sy(fy) + 4.0,
            fy
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            sx(fx),
            top + ph + 18.0,
            fx.round()
        );
    }
    let _ = writeln!(
        s,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">step</text>",
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        "<text transform=\"translate(18 {:.1}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
        top + ph / 2.0,
        esc(y_label)
    );
    for (i, (series, band)) in series.iter().zip(&bands).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if band.is_empty() {
            continue;
        }
        let upper: Vec<String> = band
            .iter()
            .map(|(x, m, sd)| format!("{:.1},{:.1}", sx(*x), sy(m + sd)))
            .collect();
        let lower: Vec<String> = band
            .iter()
            .rev()
            .map(|(x, m, sd)| format!("{:.1},{:.1}", sx(*x), sy(m - sd)))
            .collect();
        let _ = writeln!(
            s,
            "<polygon points=\"{} {}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>",
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = band
            .iter()
            .map(|(x, m, _)| format!("{:.1},{:.1}", sx(*x), sy(*m)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            line.join(" ")
        );
        let ly = top + 16.0 + 20.0 * i as f64;
        let _ = writeln!(
            s,
            "<line x1=\"{:.1}\" x2=\"{:.1}\" y1=\"{ly:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"3\"/>",
            left + pw + 12.0,
            left + pw + 32.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            left + pw + 38.0,
            ly + 4.0,
            esc(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Column charted for a run by default.
pub fn default_metric(art: &RunArtifacts) -> &'static str {
    if art.config.transfer.mode != TransferMode::None {
        "extrinsic_return"
    } else if art.config.env == EnvKind::Housegrid {
        "success_rate"
    } else {
        "unique_achievements"
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes every artifact of a run under `dir` and returns the paths.
pub fn emit_reports(art: &RunArtifacts, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let p = dir.join("config.toml");
    write_file(&p, art.config.to_toml()?.as_bytes())?;
    written.push(p);

    let episodes: Vec<EpisodeMetrics> = art.episodes().cloned().collect();
    let p = dir.join("episodes.csv");
    write_episode_csv(&p, &episodes)?;
    written.push(p);

    let events: Vec<_> = art.seeds.iter().flat_map(|s| s.events.iter().cloned()).collect();
    let p = dir.join("events.jsonl");
    write_jsonl(&p, &events)?;
    written.push(p);

    let transcript: Vec<_> = art.seeds.iter().flat_map(|s| s.transcript.iter().cloned()).collect();
    if !transcript.is_empty() {
        let p = dir.join("transcript.jsonl");
        write_jsonl(&p, &transcript)?;
        written.push(p);
    }

    for s in &art.seeds {
        if let Some(bytes) = &s.checkpoint {
            let d = dir.join(format!("seed_{}", s.seed));
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            let p = d.join("checkpoint.bin");
            write_file(&p, bytes)?;
            written.push(p);
        }
    }

    let summary = serde_json::json!({
        "name": art.config.name,
        "method": art.config.method.label(),
        "config_hash": art.config_hash,
        "seeds": art.seeds.iter().map(|s| serde_json::json!({
            "seed": s.seed,
            "episodes": s.episodes.len(),
            "env_steps": s.env_steps,
            "updates": s.updates,
            "network_calls": s.network_calls,
            "guide_hash": s.guide_hash,
        })).collect::<Vec<_>>(),
    });
    let p = dir.join("summary.json");
    write_file(&p, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    written.push(p);

    let metric = default_metric(art);
    let series = ChartSeries::from_episodes(&art.config.name, &episodes, metric);
    let p = dir.join("chart.svg");
    write_file(&p, render_chart(&art.config.name, metric, &[series], 50).as_bytes())?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(seed: u64, step: u64, v: usize) -> EpisodeMetrics {
        EpisodeMetrics {
            seed,
            step,
            episode: step / 10,
            length: 10,
            unique_achievements: v,
            intrinsic_return: 0.5,
            extrinsic_return: 0.0,
            rewarded_goals: 1,
            success_rate: None,
            task_success: None,
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let rows: Vec<_> = (0..2).flat_map(|s| (1..=3).map(move |i| ep(s, i * 10, i as usize))).collect();
        write_episode_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert_eq!(read_episode_csv(&p).unwrap(), rows);
    }

    #[test]
    fn chart_covers_data() {
        let rows: Vec<_> = (0..3)
            .flat_map(|s| (1..=20).map(move |i| ep(s, i * 10, (i as usize + s as usize) % 7)))
            .collect();
        let series = ChartSeries::from_episodes("x", &rows, "unique_achievements");
        let band = series.band(10, 200.0);
        let (lo, hi) = chart_y_range(std::slice::from_ref(&band));
        for (_, m, sd) in &band {
            assert!(lo <= m - sd && m + sd <= hi);
        }
        let svg = render_chart("t", "y", &[series], 10);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}

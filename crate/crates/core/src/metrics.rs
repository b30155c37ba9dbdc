//! Tracking error and jerk from episode logs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::env::EpisodeLog;
use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// Mean rover-to-target distance (m).
    pub ate_pos: f64,
    /// Mean absolute heading difference (rad).
    pub ate_yaw: f64,
    /// Time-averaged jerk magnitude (m/s³).
    pub jerk_abs: f64,
    /// Jerk as a percentage of a baseline run.
    pub jerk_rel: Option<f64>,
    pub n_steps: usize,
    pub lap_count: usize,
}

impl MetricsSummary {
    pub fn from_log(log: &EpisodeLog, lap_count: usize) -> Result<Self> {
        let (ate_pos, ate_yaw) = ate(log)?;
        Ok(Self {
            ate_pos,
            ate_yaw,
            jerk_abs: jerk(log)?,
            jerk_rel: None,
            n_steps: log.len(),
            lap_count,
        })
    }

    pub fn with_baseline(mut self, baseline_jerk: f64) -> Self {
        self.jerk_rel = Some(jerk_rel(self.jerk_abs, baseline_jerk));
        self
    }

    /// Averages several summaries with equal weight per summary.
    pub fn mean(items: &[MetricsSummary]) -> Option<Self> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let rel: Vec<f64> = items.iter().filter_map(|m| m.jerk_rel).collect();
        Some(Self {
            ate_pos: items.iter().map(|m| m.ate_pos).sum::<f64>() / n,
            ate_yaw: items.iter().map(|m| m.ate_yaw).sum::<f64>() / n,
            jerk_abs: items.iter().map(|m| m.jerk_abs).sum::<f64>() / n,
            jerk_rel: (rel.len() == items.len()).then(|| rel.iter().sum::<f64>() / n),
            n_steps: items.iter().map(|m| m.n_steps).sum(),
            lap_count: items.iter().map(|m| m.lap_count).sum(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Mean position and absolute yaw error over all records.
pub fn ate(log: &EpisodeLog) -> Result<(f64, f64)> {
    if log.is_empty() {
        return Err(Error::usage("ate: empty log"));
    }
    let n = log.len() as f64;
    let mut pos = 0.0;
    let mut yaw = 0.0;
    for r in &log.records {
        pos += (r.rover.position - r.target.position).norm();
        yaw += wrap_angle(r.rover.yaw - r.target.yaw).abs();
    }
    Ok((pos / n, yaw / n))
}

fn check_uniform(log: &EpisodeLog) -> Result<f64> {
    let t: Vec<f64> = log.records.iter().map(|r| r.t).collect();
    let dt = if log.dt > 0.0 { log.dt } else { t[1] - t[0] };
    if !(dt > 0.0) {
        return Err(Error::usage("jerk: non-increasing timestamps"));
    }
    for w in t.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * (1.0 + w[1].abs()) {
            return Err(Error::usage(format!(
                "jerk: non-uniform timestamps near t={} (expected spacing {dt})",
                w[0]
            )));
        }
    }
    Ok(dt)
}

/// Time-averaged norm of the third derivative of the rover position.
///
/// Interior points use the second-order central stencil (exact on cubics); the two
/// samples at each end are excluded. Four samples fall back to one forward difference.
pub fn jerk(log: &EpisodeLog) -> Result<f64> {
    let n = log.len();
    if n < 4 {
        return Err(Error::usage("jerk: need at least 4 samples"));
    }
    let dt = check_uniform(log)?;
    let p: Vec<Vec2> = log.records.iter().map(|r| r.rover.position).collect();
    let dt3 = dt * dt * dt;
    if n == 4 {
        return Ok(((p[3] - p[2] * 3.0 + p[1] * 3.0 - p[0]) * (1.0 / dt3)).norm());
    }
    let mut acc = 0.0;
    for i in 2..n - 2 {
        let j = (p[i + 2] - p[i + 1] * 2.0 + p[i - 1] * 2.0 - p[i - 2]) * (0.5 / dt3);
        acc += j.norm();
    }
    Ok(acc / (n - 4) as f64)
}

pub fn jerk_rel(jerk_abs: f64, baseline: f64) -> f64 {
    100.0 * jerk_abs / baseline
}

/// Index of the record that closes the rover's first lap: after the rover has covered
/// at least 90 % of `path_length`, the first local minimum of its distance to `start`.
pub fn first_lap_end(log: &EpisodeLog, start: Vec2, path_length: f64) -> Option<usize> {
    let mut travelled = 0.0;
    let mut prev = log.records.first()?.rover.position;
    let mut i90 = None;
    for (i, r) in log.records.iter().enumerate().skip(1) {
        travelled += (r.rover.position - prev).norm();
        prev = r.rover.position;
        if travelled >= 0.9 * path_length {
            i90 = Some(i);
            break;
        }
    }
    let i90 = i90?;
    let d = |i: usize| (log.records[i].rover.position - start).norm();
    let mut best = i90;
    for i in i90 + 1..log.len() {
        if d(i) > d(best) {
            return Some(best);
        }
        best = i;
    }
    None
}

/// An aligned text table with row and column labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub corner: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<String>)>,
}

impl Table {
    pub fn render(&self) -> String {
        let ncol = self.columns.len() + 1;
        let mut width = vec![0usize; ncol];
        width[0] = self
            .rows
            .iter()
            .map(|r| r.0.chars().count())
            .chain([self.corner.chars().count()])
            .max()
            .unwrap_or(0);
        for (j, c) in self.columns.iter().enumerate() {
            width[j + 1] = self
                .rows
                .iter()
                .filter_map(|r| r.1.get(j))
                .map(|s| s.chars().count())
                .chain([c.chars().count()])
                .max()
                .unwrap_or(0);
        }
        let line = |cells: Vec<&str>| {
            let mut s = String::new();
            for (j, c) in cells.iter().enumerate() {
                let pad = width[j].saturating_sub(c.chars().count());
                if j == 0 {
                    let _ = write!(s, "{c}{}", " ".repeat(pad));
                } else {
                    let _ = write!(s, " | {}{c}", " ".repeat(pad));
                }
            }
            s.trim_end().to_string()
        };
        let mut out = String::new();
        if !self.title.is_empty() {
            out.push_str(&self.title);
            out.push('\n');
        }
        let header: Vec<&str> = std::iter::once(self.corner.as_str())
            .chain(self.columns.iter().map(String::as_str))
            .collect();
        out.push_str(&line(header));
        out.push('\n');
        let rule: usize = width.iter().sum::<usize>() + 3 * (ncol - 1);
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for (label, cells) in &self.rows {
            let row: Vec<&str> = std::iter::once(label.as_str())
                .chain(cells.iter().map(String::as_str))
                .collect();
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvStepRecord;
    use crate::geom::Pose2;

    fn log_from(pos: impl Fn(f64) -> Vec2, n: usize) -> EpisodeLog {
        let dt = 0.04;
        EpisodeLog {
            dt,
            records: (0..n)
                .map(|i| {
                    let t = (i + 1) as f64 * dt;
                    EnvStepRecord {
                        t,
                        rover: Pose2::new(pos(t), 0.0),
                        target: Pose2::new(pos(t) + Vec2::new(0.05, 0.0), 0.0),
                        ..Default::default()
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn ate_examples() {
        let log = log_from(|t| Vec2::new(t, 0.0), 20);
        let (p, y) = ate(&log).unwrap();
        assert!((p - 0.05).abs() < 1e-12 && y == 0.0);
        assert!(ate(&EpisodeLog::new(0.04)).is_err());
    }

    #[test]
    fn jerk_of_lines_and_cubics() {
        let lin = log_from(|t| Vec2::new(0.3 * t + 1.0, -0.2 * t), 50);
        assert!(jerk(&lin).unwrap() < 1e-9);
        let c = Vec2::new(0.3, -0.4);
        let cub = log_from(|t| c * (t * t * t), 50);
        assert!((jerk(&cub).unwrap() - 6.0 * c.norm()).abs() < 1e-6);
        let four = log_from(|t| c * (t * t * t), 4);
        assert!((jerk(&four).unwrap() - 6.0 * c.norm()).abs() < 1e-6);
    }

    #[test]
    fn jerk_rejects_irregular_time() {
        let mut log = log_from(|t| Vec2::new(t, 0.0), 10);
        log.records[5].t += 0.01;
        assert!(matches!(jerk(&log), Err(Error::Usage(_))));
    }

    #[test]
    fn self_baseline_is_hundred_percent() {
        let log = log_from(|t| Vec2::new(t.sin(), (2.0 * t).cos()), 100);
        let j = jerk(&log).unwrap();
        assert!((jerk_rel(j, j) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn first_lap_on_a_circle() {
        let r = 1.0;
        let w = 0.5;
        let log = log_from(|t| Vec2::new(r * (w * t).cos(), r * (w * t).sin()), 1000);
        let start = Vec2::new(r, 0.0);
        let end = first_lap_end(&log, start, std::f64::consts::TAU * r).unwrap();
        let t = log.records[end].t;
        assert!((t * w - std::f64::consts::TAU).abs() < 0.04 * w + 1e-9, "{t}");
    }

    #[test]
    fn table_aligns_columns() {
        let t = Table {
            title: "ATE".into(),
            corner: "speed".into(),
            columns: vec!["A".into(), "Longer".into()],
            rows: vec![("5 cm/s".into(), vec!["1.0".into(), "22.5".into()])],
        };
        let s = t.render();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[1], "speed  |   A | Longer");
        assert_eq!(lines[3], "5 cm/s | 1.0 |   22.5");
    }
}

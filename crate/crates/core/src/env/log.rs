//! Per-step records and episode logs (CSV and JSONL).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::observe::Observation;
use super::reward::RewardTerms;
use crate::error::{Error, Result};
use crate::geom::{Pose2, Vec2};
use crate::ACT_DIM;

/// One control step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvStepRecord {
    /// Time at the end of the step (s).
    pub t: f64,
    pub rover: Pose2,
    pub target: Pose2,
    pub raw_action: [f64; ACT_DIM],
    /// Action that drove the dynamics: filtered, delayed and clamped.
    pub applied_action: [f64; ACT_DIM],
    pub observation: Observation,
    pub reward: RewardTerms,
    pub terminated: bool,
    pub truncated: bool,
}

pub const COLUMNS: [&str; 24] = [
    "t",
    "x",
    "y",
    "yaw",
    "tx",
    "ty",
    "tyaw",
    "a0_raw",
    "a1_raw",
    "a0_applied",
    "a1_applied",
    "r_total",
    "dist_penalty",
    "heading_reward",
    "pos_align_reward",
    "yaw_align_reward",
    "stillness_reward",
    "action_rate_penalty",
    "obs_x",
    "obs_y",
    "obs_sin",
    "obs_cos",
    "terminated",
    "truncated",
];

impl EnvStepRecord {
    pub fn values(&self) -> [f64; 24] {
        let o = self.observation.to_array();
        let r = self.reward.terms();
        [
            self.t,
            self.rover.position.x,
            self.rover.position.y,
            self.rover.yaw,
            self.target.position.x,
            self.target.position.y,
            self.target.yaw,
            self.raw_action[0],
            self.raw_action[1],
            self.applied_action[0],
            self.applied_action[1],
            self.reward.total,
            r[0],
            r[1],
            r[2],
            r[3],
            r[4],
            r[5],
            o[0],
            o[1],
            o[2],
            o[3],
            self.terminated as u8 as f64,
            self.truncated as u8 as f64,
        ]
    }

    pub fn from_values(v: &[f64; 24]) -> Self {
        Self {
            t: v[0],
            rover: Pose2::new(Vec2::new(v[1], v[2]), v[3]),
            target: Pose2::new(Vec2::new(v[4], v[5]), v[6]),
            raw_action: [v[7], v[8]],
            applied_action: [v[9], v[10]],
            reward: RewardTerms {
                total: v[11],
                dist_penalty: v[12],
                heading_reward: v[13],
                pos_align_reward: v[14],
                yaw_align_reward: v[15],
                stillness_reward: v[16],
                action_rate_penalty: v[17],
            },
            observation: Observation::from_array([v[18], v[19], v[20], v[21]]),
            terminated: v[22] != 0.0,
            truncated: v[23] != 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub dt: f64,
    pub records: Vec<EnvStepRecord>,
}

impl EpisodeLog {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.records.iter().map(|r| r.reward.total).sum()
    }

    /// Records from index `start` on.
    pub fn slice_from(&self, start: usize) -> EpisodeLog {
        EpisodeLog {
            dt: self.dt,
            records: self.records[start.min(self.records.len())..].to_vec(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{}", COLUMNS.join(","))?;
        for r in &self.records {
            let vals: Vec<String> = r.values().iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", vals.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for r in &self.records {
            let mut m = serde_json::Map::new();
            for (k, v) in COLUMNS.iter().zip(r.values()) {
                m.insert((*k).to_string(), serde_json::Value::from(v));
            }
            serde_json::to_writer(&mut w, &m)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`write_csv`](Self::write_csv). Columns may appear in any
    /// order; `dt` is taken from the first two timestamps.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(path, "empty file"))??;
        let names: Vec<&str> = header.trim().split(',').collect();
        let index: Vec<usize> = COLUMNS
            .iter()
            .map(|c| {
                names
                    .iter()
                    .position(|n| n == c)
                    .ok_or_else(|| Error::format(path, format!("missing column '{c}'")))
            })
            .collect::<Result<_>>()?;
        let mut records = Vec::new();
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format(path, format!("line {}: {e}", ln + 2)))?;
            if fields.len() != names.len() {
                return Err(Error::format(path, format!("line {}: wrong field count", ln + 2)));
            }
            let mut v = [0.0; 24];
            for (slot, &i) in v.iter_mut().zip(&index) {
                *slot = fields[i];
            }
            records.push(EnvStepRecord::from_values(&v));
        }
        let dt = if records.len() >= 2 {
            records[1].t - records[0].t
        } else {
            0.0
        };
        Ok(Self { dt, records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EpisodeLog {
        let mut log = EpisodeLog::new(0.04);
        for k in 0..5 {
            let f = k as f64;
            log.records.push(EnvStepRecord {
                t: 0.04 * (f + 1.0),
                rover: Pose2::new(Vec2::new(0.1 * f, -0.2), 0.3 / 7.0),
                target: Pose2::new(Vec2::new(1.0 / 3.0, f), -1.0),
                raw_action: [0.1, -0.7],
                applied_action: [0.05, 1e-17],
                truncated: k == 4,
                ..Default::default()
            });
        }
        log
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ep.csv");
        let log = sample();
        log.write_csv(&p).unwrap();
        let back = EpisodeLog::read_csv(&p).unwrap();
        assert_eq!(back.records, log.records);
        let header = std::fs::read_to_string(&p).unwrap();
        assert!(header.starts_with("t,x,y,yaw,tx,ty,tyaw,a0_raw,a1_raw,a0_applied,a1_applied,r_total"));
    }

    #[test]
    fn jsonl_has_one_object_per_step() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ep.jsonl");
        sample().write_jsonl(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[4]["truncated"], 1.0);
        assert_eq!(rows[0]["ty"], 0.0);
    }

    #[test]
    fn malformed_csv_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "t,x\n0,1\n").unwrap();
        assert!(matches!(EpisodeLog::read_csv(&p), Err(Error::Format { .. })));
    }
}

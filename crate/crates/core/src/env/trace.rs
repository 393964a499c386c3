//! Per-step episode traces. The CSV holds a header, one row per control step
//! and the termination reason as a trailing comment; a JSON sidecar next to
//! it carries the episode description and settings needed for exact replay.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EnvSettings, EpisodeConfig, EpisodeSpec, Termination};
use crate::error::{Error, Result};
use crate::reward::RewardBreakdown;
use crate::vehicle::{Action, VehicleState, ACTION_DIM};

const END_PREFIX: &str = "# termination: ";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// Reference-frame position, m.
    pub position: [f64; 3],
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub forward_speed: f64,
    pub action: [f64; ACTION_DIM],
    pub reward: RewardBreakdown,
    pub value: Option<f64>,
}

impl TraceRow {
    pub fn new(step: usize, state: &VehicleState, action: &Action, reward: &RewardBreakdown) -> Self {
        let p = state.position;
        Self {
            step,
            position: [p.x, p.y, p.z],
            yaw: state.yaw,
            pitch: state.pitch,
            roll: state.roll,
            forward_speed: state.forward_speed,
            action: action.0,
            reward: *reward,
            value: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub spec: EpisodeSpec,
    pub config: EpisodeConfig,
    pub settings: EnvSettings,
    pub rows: Vec<TraceRow>,
    pub termination: Option<Termination>,
}

fn header() -> Vec<String> {
    let mut h: Vec<String> = ["step", "x", "y", "z", "yaw", "pitch", "roll", "forward_speed"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..ACTION_DIM).map(|i| format!("a{i}")));
    h.extend(RewardBreakdown::FIELDS.iter().map(|s| s.to_string()));
    h.push("value".into());
    h
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    spec: EpisodeSpec,
    config: EpisodeConfig,
    settings: EnvSettings,
}

/// Location of the JSON sidecar belonging to a trace CSV.
pub fn sidecar_path(csv: &Path) -> std::path::PathBuf {
    csv.with_extension("json")
}

impl EpisodeTrace {
    pub fn new(spec: EpisodeSpec, config: EpisodeConfig, settings: EnvSettings) -> Self {
        Self {
            spec,
            config,
            settings,
            rows: Vec::new(),
            termination: None,
        }
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.rows.iter().map(|r| Action(r.action))
    }

    pub fn total_reward(&self) -> f64 {
        self.rows.iter().map(|r| r.reward.total).sum()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut out = String::new();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header())?;
        for r in &self.rows {
            let mut rec = vec![r.step.to_string()];
            // `{:?}` on f64 prints the shortest representation that round-trips.
            let mut num = |v: f64| rec.push(format!("{v:?}"));
            r.position.iter().for_each(|&v| num(v));
            [r.yaw, r.pitch, r.roll, r.forward_speed].into_iter().for_each(&mut num);
            r.action.iter().for_each(|&v| num(v));
            r.reward.values().into_iter().for_each(&mut num);
            rec.push(r.value.map(|v| format!("{v:?}")).unwrap_or_default());
            w.write_record(&rec)?;
        }
        let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        if let Some(t) = self.termination {
            writeln!(out, "{END_PREFIX}{t}").unwrap();
        }
        Ok(out)
    }

    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Sidecar {
            spec: self.spec.clone(),
            config: self.config.clone(),
            settings: self.settings.clone(),
        })?)
    }

    /// Writes the CSV to `path` and the sidecar next to it.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_csv_string()?)?;
        fs::write(sidecar_path(path), self.sidecar_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side = sidecar_path(path);
        let json = fs::read_to_string(&side).map_err(|e| Error::Config(format!("{}: {e}", side.display())))?;
        Self::parse(&fs::read_to_string(path)?, &json, path)
    }

    pub fn parse(text: &str, sidecar: &str, path: &Path) -> Result<Self> {
        let Sidecar { spec, config, settings } =
            serde_json::from_str(sidecar).map_err(|e| parse_err(&sidecar_path(path), e.line(), e.to_string()))?;
        let mut termination = None;
        let mut body = String::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(t) = line.strip_prefix(END_PREFIX) {
                termination = Some(t.trim().parse().map_err(|e: Error| parse_err(path, i + 1, e.to_string()))?);
            } else if !line.starts_with('#') {
                body.push_str(line);
                body.push('\n');
            }
        }

        let expected = header();
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if found != expected {
            return Err(parse_err(path, 1, "unexpected column layout"));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let f = |k: usize| -> Result<f64> {
                rec[k].parse().map_err(|_| parse_err(path, line, format!("bad number `{}`", &rec[k])))
            };
            let step = rec[0].parse().map_err(|_| parse_err(path, line, "bad step index"))?;
            let mut action = [0.0; ACTION_DIM];
            for (j, a) in action.iter_mut().enumerate() {
                *a = f(8 + j)?;
            }
            let r0 = 8 + ACTION_DIM;
            let mut rv = [0.0; 11];
            for (j, v) in rv.iter_mut().enumerate() {
                *v = f(r0 + j)?;
            }
            let value_col = r0 + 11;
            let value = if rec[value_col].is_empty() { None } else { Some(f(value_col)?) };
            rows.push(TraceRow {
                step,
                position: [f(1)?, f(2)?, f(3)?],
                yaw: f(4)?,
                pitch: f(5)?,
                roll: f(6)?,
                forward_speed: f(7)?,
                action,
                reward: RewardBreakdown {
                    r_tar: rv[0],
                    r_prog: rv[1],
                    r_head: rv[2],
                    r_roll: rv[3],
                    r_speed: rv[4],
                    r_forces: rv[5],
                    r_slip_long: rv[6],
                    r_slip_lat: rv[7],
                    r_energy: rv[8],
                    r_side: rv[9],
                    total: rv[10],
                },
                value,
            });
        }
        Ok(Self {
            spec,
            config,
            settings,
            rows,
            termination,
        })
    }
}

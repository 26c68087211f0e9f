//! Line-delimited JSON episode traces: world frames at a fixed cadence plus
//! the planner's per-cycle decision records, with validation for replay.

use crate::world::{ObjectState, RobotState, WorldState};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("record {index}: {reason}")]
    Corrupt { index: usize, reason: String },
    #[error("trace contains no records")]
    Empty,
}

/// One simulated sub-step snapshot.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Frame {
    pub time: f64,
    pub robot: RobotState,
    pub objects: Vec<ObjectState>,
}

impl Frame {
    pub fn of(state: &WorldState) -> Self {
        Frame {
            time: state.time,
            robot: state.robot,
            objects: state.objects.clone(),
        }
    }
}

/// One planning cycle: candidate sequence lengths, their evaluated costs,
/// and the executed choice.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Decision {
    pub cycle: usize,
    pub lengths: Vec<usize>,
    pub values: Vec<f64>,
    pub chosen: usize,
    /// Speed ||u|| of the executed first action.
    pub speed: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Frame(Frame),
    Decision(Decision),
}

/// Default trace cadence [s]: one frame per 20 ms simulated.
pub const DEFAULT_CADENCE: f64 = 0.02;

/// Streams records to a file. IO errors are stashed and surfaced by
/// [`finish`](TraceWriter::finish) so frame callbacks stay infallible.
pub struct TraceWriter {
    out: BufWriter<File>,
    cadence: f64,
    last_emit: Option<f64>,
    error: Option<io::Error>,
    pub frames: usize,
    pub decisions: usize,
}

impl TraceWriter {
    pub fn create(path: &Path, cadence: f64) -> Result<Self, TraceError> {
        Ok(TraceWriter {
            out: BufWriter::new(File::create(path)?),
            cadence,
            last_emit: None,
            error: None,
            frames: 0,
            decisions: 0,
        })
    }

    fn emit(&mut self, record: &Record) {
        if self.error.is_some() {
            return;
        }
        let line = serde_json::to_string(record).expect("trace records serialize");
        if let Err(e) = self.out.write_all(line.as_bytes()).and_then(|_| self.out.write_all(b"\n"))
        {
            self.error = Some(e);
        }
    }

    /// Record a sub-step state, subsampled to the cadence.
    pub fn frame(&mut self, state: &WorldState) {
        let due = match self.last_emit {
            None => true,
            Some(last) => state.time - last >= self.cadence - 1e-9,
        };
        if !due {
            return;
        }
        self.last_emit = Some(state.time);
        self.frames += 1;
        self.emit(&Record::Frame(Frame::of(state)));
    }

    pub fn decision(&mut self, decision: Decision) {
        self.decisions += 1;
        self.emit(&Record::Decision(decision));
    }

    pub fn finish(mut self) -> Result<(), TraceError> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        self.out.flush()?;
        Ok(())
    }
}

/// Summary statistics from a validated trace.
#[derive(Clone, Debug, Default, Serialize)]
pub struct TraceStats {
    pub frames: usize,
    pub decisions: usize,
    pub start_time: f64,
    pub end_time: f64,
    pub objects: usize,
    pub fallen: usize,
}

/// Parse a trace file, checking per-frame invariants (monotone time, finite
/// values, constant object count, monotone fallen flags, non-negative
/// gripper opening). On failure reports the first offending record index.
pub fn validate_trace(path: &Path) -> Result<TraceStats, TraceError> {
    let records = read_trace(path)?;
    validate_records(&records)
}

pub fn read_trace(path: &Path) -> Result<Vec<Record>, TraceError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            return Err(TraceError::Corrupt {
                index,
                reason: "blank line".into(),
            });
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| TraceError::Corrupt {
            index,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(records)
}

pub fn validate_records(records: &[Record]) -> Result<TraceStats, TraceError> {
    if records.is_empty() {
        return Err(TraceError::Empty);
    }
    let mut stats = TraceStats::default();
    let mut last_time: Option<f64> = None;
    let mut object_count: Option<usize> = None;
    let mut fallen: Vec<bool> = Vec::new();
    for (index, record) in records.iter().enumerate() {
        let corrupt = |reason: &str| TraceError::Corrupt {
            index,
            reason: reason.to_string(),
        };
        match record {
            Record::Frame(frame) => {
                let state = WorldState {
                    robot: frame.robot,
                    objects: frame.objects.clone(),
                    time: frame.time,
                };
                if !state.is_finite() {
                    return Err(corrupt("non-finite value"));
                }
                if frame.robot.opening < 0.0 {
                    return Err(corrupt("negative gripper opening"));
                }
                if let Some(t) = last_time {
                    if frame.time < t {
                        return Err(corrupt("time went backwards"));
                    }
                }
                if let Some(n) = object_count {
                    if frame.objects.len() != n {
                        return Err(corrupt("object count changed"));
                    }
                } else {
                    object_count = Some(frame.objects.len());
                    fallen = vec![false; frame.objects.len()];
                    stats.start_time = frame.time;
                }
                for (i, obj) in frame.objects.iter().enumerate() {
                    if fallen[i] && !obj.fallen {
                        return Err(corrupt("fallen flag reverted"));
                    }
                    fallen[i] = obj.fallen;
                }
                last_time = Some(frame.time);
                stats.end_time = frame.time;
                stats.frames += 1;
            }
            Record::Decision(d) => {
                if d.chosen >= d.lengths.len() || d.values.len() != d.lengths.len() {
                    return Err(corrupt("malformed decision record"));
                }
                stats.decisions += 1;
            }
        }
    }
    if stats.frames == 0 {
        return Err(TraceError::Corrupt {
            index: 0,
            reason: "no frames".into(),
        });
    }
    stats.objects = object_count.unwrap_or(0);
    stats.fallen = fallen.iter().filter(|f| **f).count();
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{RobotState, WorldState};

    fn state(time: f64) -> WorldState {
        WorldState {
            robot: RobotState::at(0.0, 0.0, 0.0, 0.05),
            objects: vec![],
            time,
        }
    }

    #[test]
    fn cadence_subsamples_frames() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut w = TraceWriter::create(&path, 0.02).unwrap();
        for k in 0..100 {
            w.frame(&state(k as f64 * 0.002));
        }
        let frames = w.frames;
        w.finish().unwrap();
        assert!(frames <= 11, "expected ~10 frames, got {frames}");
        let stats = validate_trace(&path).unwrap();
        assert_eq!(stats.frames, frames);
    }

    #[test]
    fn corrupt_line_reports_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut w = TraceWriter::create(&path, 0.0).unwrap();
        w.frame(&state(0.0));
        w.frame(&state(0.002));
        w.finish().unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 10);
        std::fs::write(&path, bytes).unwrap();
        match validate_trace(&path) {
            Err(TraceError::Corrupt { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected corrupt, got {other:?}"),
        }
    }

    #[test]
    fn empty_trace_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        std::fs::write(&path, b"").unwrap();
        assert!(matches!(validate_trace(&path), Err(TraceError::Empty)));
    }

    #[test]
    fn reversed_time_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let lines: Vec<String> = [1.0, 0.5]
            .iter()
            .map(|&t| serde_json::to_string(&Record::Frame(Frame::of(&state(t)))).unwrap())
            .collect();
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        assert!(matches!(
            validate_trace(&path),
            Err(TraceError::Corrupt { index: 1, .. })
        ));
    }
}

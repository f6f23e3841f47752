//! JSON-lines trajectory and event logs.

use std::io::{BufRead, Write};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{Action, AircraftId, AircraftState};

/// One aircraft at one control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub sim_time_s: f64,
    pub aircraft_id: AircraftId,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub h: f64,
    pub s: f64,
    pub z_diff: f64,
    pub s_diff: f64,
    pub h_diff: f64,
    pub action_index: usize,
    pub controllable: bool,
    pub reward: f64,
}

impl TrajectoryRecord {
    pub fn new(time: f64, state: &AircraftState, action: Action, reward: f64) -> Self {
        Self {
            sim_time_s: time,
            aircraft_id: state.id,
            x: state.x,
            y: state.y,
            z: state.z,
            h: state.h,
            s: state.s,
            z_diff: state.z_diff(),
            s_diff: state.s_diff(),
            h_diff: state.h_diff(),
            action_index: action.index(),
            controllable: state.controllable,
            reward,
        }
    }
}

pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, records: &[T]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_jsonl<R: BufRead, T: DeserializeOwned>(input: R) -> std::io::Result<Vec<T>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{EventKind, WorldEvent};

    #[test]
    fn event_log_round_trips() {
        let events = vec![
            WorldEvent {
                kind: EventKind::Spawned,
                time: 0.0,
                aircraft: vec![0, 1],
            },
            WorldEvent {
                kind: EventKind::Conflict,
                time: 35.0,
                aircraft: vec![0, 1],
            },
        ];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &events).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(r#"{"kind":"Spawned","time":0.0,"aircraft":[0,1]}"#));
        let back: Vec<WorldEvent> = read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, events);
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = read_jsonl::<_, WorldEvent>(&b"{}\n"[..]).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}

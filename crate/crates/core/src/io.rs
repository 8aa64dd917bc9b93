//! Line-delimited JSON streams.
//!
//! Frame line: `{"t":0.0,"skeletons":[{"id":3,"cost":0.1,"kps":{"left_wrist":[x,y,z,c]}}]}`.
//! Trajectory line: `{"t":0.0,"p":[x,y,z]}`. `id`, `cost` and `height` are
//! optional. Units are meters and seconds.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::Trajectory;
use crate::skeleton::{Frame, Joint, Keypoint, Point3, Skeleton};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamp {got} does not follow {previous}")]
    NonMonotoneTimestamp { line: usize, previous: f64, got: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkeletonRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<f64>,
    kps: BTreeMap<String, [f64; 4]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    t: f64,
    skeletons: Vec<SkeletonRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryRecord {
    t: f64,
    p: [f64; 3],
}

fn parse_error(line: usize, message: impl ToString) -> StreamError {
    StreamError::Parse {
        line,
        message: message.to_string(),
    }
}

/// One JSON line for `frame`, without the newline.
pub fn frame_to_line(frame: &Frame) -> String {
    let record = FrameRecord {
        t: frame.timestamp,
        skeletons: frame
            .skeletons
            .iter()
            .map(|s| SkeletonRecord {
                id: s.track_id,
                cost: s.assignment_cost,
                height: s.estimated_height,
                kps: s
                    .keypoints
                    .iter()
                    .map(|(j, k)| {
                        (
                            j.as_str().to_owned(),
                            [k.position.x, k.position.y, k.position.z, k.confidence],
                        )
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string(&record).expect("frame records always serialize")
}

/// Parses one frame line; `line` is 1-based and used in errors.
pub fn frame_from_line(text: &str, line: usize) -> Result<Frame, StreamError> {
    let record: FrameRecord = serde_json::from_str(text).map_err(|e| parse_error(line, e))?;
    if !record.t.is_finite() {
        return Err(parse_error(line, "timestamp must be finite"));
    }
    let mut skeletons = Vec::with_capacity(record.skeletons.len());
    for s in record.skeletons {
        let mut skeleton = Skeleton {
            track_id: s.id,
            assignment_cost: s.cost,
            estimated_height: s.height,
            ..Skeleton::default()
        };
        for (name, [x, y, z, c]) in s.kps {
            let joint: Joint = name.parse().map_err(|e| parse_error(line, e))?;
            if ![x, y, z, c].iter().all(|v| v.is_finite()) {
                return Err(parse_error(line, format!("non-finite value in `{name}`")));
            }
            if !(0.0..=1.0).contains(&c) {
                return Err(parse_error(line, format!("confidence {c} of `{name}` outside [0, 1]")));
            }
            skeleton.insert(joint, Keypoint::new(Point3::new(x, y, z), c));
        }
        skeletons.push(skeleton);
    }
    Ok(Frame::new(record.t, skeletons))
}

/// Frames in file order. Blank lines are skipped; timestamps must increase.
pub fn parse_stream(reader: impl BufRead) -> Result<Vec<Frame>, StreamError> {
    let mut frames: Vec<Frame> = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let text = text?;
        let line = i + 1;
        if text.trim().is_empty() {
            continue;
        }
        let frame = frame_from_line(&text, line)?;
        if let Some(prev) = frames.last() {
            if !(frame.timestamp > prev.timestamp) {
                return Err(StreamError::NonMonotoneTimestamp {
                    line,
                    previous: prev.timestamp,
                    got: frame.timestamp,
                });
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn read_stream(path: impl AsRef<Path>) -> Result<Vec<Frame>, StreamError> {
    parse_stream(BufReader::new(File::open(path)?))
}

pub fn write_frames(mut writer: impl Write, frames: &[Frame]) -> std::io::Result<()> {
    for f in frames {
        writeln!(writer, "{}", frame_to_line(f))?;
    }
    writer.flush()
}

pub fn write_stream(path: impl AsRef<Path>, frames: &[Frame]) -> std::io::Result<()> {
    write_frames(BufWriter::new(File::create(path)?), frames)
}

pub fn write_trajectory_to(mut writer: impl Write, traj: &Trajectory) -> std::io::Result<()> {
    for (t, p) in traj.samples() {
        let record = TrajectoryRecord {
            t: *t,
            p: [p.x, p.y, p.z],
        };
        writeln!(writer, "{}", serde_json::to_string(&record).expect("finite record"))?;
    }
    writer.flush()
}

pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> std::io::Result<()> {
    write_trajectory_to(BufWriter::new(File::create(path)?), traj)
}

pub fn parse_trajectory(reader: impl BufRead, label: &str) -> Result<Trajectory, StreamError> {
    let mut traj = Trajectory::empty(label);
    for (i, text) in reader.lines().enumerate() {
        let text = text?;
        let line = i + 1;
        if text.trim().is_empty() {
            continue;
        }
        let r: TrajectoryRecord = serde_json::from_str(&text).map_err(|e| parse_error(line, e))?;
        if !(r.t.is_finite() && r.p.iter().all(|v| v.is_finite())) {
            return Err(parse_error(line, "non-finite value"));
        }
        let previous = traj.samples().last().map(|s| s.0);
        if !traj.push(r.t, Point3::from(r.p)) {
            return Err(StreamError::NonMonotoneTimestamp {
                line,
                previous: previous.unwrap_or(f64::NAN),
                got: r.t,
            });
        }
    }
    Ok(traj)
}

pub fn read_trajectory(path: impl AsRef<Path>, label: &str) -> Result<Trajectory, StreamError> {
    parse_trajectory(BufReader::new(File::open(path)?), label)
}

/// Trajectory of `joint` on the skeleton labeled `track` in each frame.
pub fn joint_trajectory(frames: &[Frame], track: u64, joint: Joint, label: &str) -> Trajectory {
    let mut traj = Trajectory::empty(label);
    for f in frames {
        if let Some(p) = f
            .skeletons
            .iter()
            .find(|s| s.track_id == Some(track))
            .and_then(|s| s.position(joint))
        {
            traj.push(f.timestamp, p);
        }
    }
    traj
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_frames() -> Vec<Frame> {
        let mut s = Skeleton::from_keypoints([
            (
                Joint::LeftWrist,
                Keypoint::new(Point3::new(0.1, -0.2, 1.0 / 3.0), 0.875),
            ),
            (Joint::Nose, Keypoint::new(Point3::new(1e-17, 2.5, 1.7), 1.0)),
        ]);
        s.track_id = Some(4);
        s.assignment_cost = Some(0.123456789012345);
        vec![
            Frame::new(0.0, vec![s.clone(), Skeleton::default()]),
            Frame::new(1.0 / 30.0, vec![]),
            Frame::new(2.0 / 30.0, vec![s]),
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        let frames = sample_frames();
        let mut buf = Vec::new();
        write_frames(&mut buf, &frames).unwrap();
        assert_eq!(parse_stream(buf.as_slice()).unwrap(), frames);
    }

    #[test]
    fn parse_error_cites_line() {
        let mut text = String::new();
        for k in 0..16 {
            text.push_str(&format!("{{\"t\":{k},\"skeletons\":[]}}\n"));
        }
        text.push_str("{not json}\n");
        match parse_stream(text.as_bytes()) {
            Err(StreamError::Parse { line, .. }) => assert_eq!(line, 17),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let text = "{\"t\":1,\"skeletons\":[]}\n{\"t\":1,\"skeletons\":[]}\n";
        assert!(matches!(
            parse_stream(text.as_bytes()),
            Err(StreamError::NonMonotoneTimestamp { line: 2, .. })
        ));
    }

    #[test]
    fn bad_joint_and_confidence_rejected() {
        let unknown = r#"{"t":0,"skeletons":[{"kps":{"tail":[0,0,0,1]}}]}"#;
        assert!(matches!(
            frame_from_line(unknown, 3),
            Err(StreamError::Parse { line: 3, .. })
        ));
        let conf = r#"{"t":0,"skeletons":[{"kps":{"nose":[0,0,0,1.5]}}]}"#;
        assert!(frame_from_line(conf, 1).is_err());
    }

    #[test]
    fn trajectory_round_trip() {
        let traj = Trajectory::new(
            "x",
            vec![
                (0.0, Point3::new(0.1, 0.2, 0.3)),
                (0.5, Point3::new(1.0 / 7.0, 0.0, -2.0)),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trajectory_to(&mut buf, &traj).unwrap();
        assert_eq!(parse_trajectory(buf.as_slice(), "x").unwrap(), traj);
    }
}

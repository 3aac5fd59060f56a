//! Line-delimited JSON frame log for replay.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Frame, World};
use crate::error::{Error, Result};
use crate::grid::{Beam, BinaryGrid, Pose2D, Scan};

/// One frame as written to the log. Static truth is not repeated; it comes
/// from the scenario on replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: f64,
    /// Ego pose `[x, y, theta]`.
    pub pose: [f64; 3],
    /// Range per beam, `null` for no return.
    pub ranges: Vec<Option<f64>>,
    /// Cell indices covered by obstacles.
    pub dynamic: Vec<usize>,
}

impl FrameRecord {
    pub fn from_frame(frame: &Frame) -> Self {
        let p = frame.ego_pose_truth;
        Self {
            t: frame.time,
            pose: [p.x, p.y, p.theta],
            ranges: frame
                .scan
                .beams()
                .iter()
                .map(|b| (!b.is_max_range).then_some(b.range))
                .collect(),
            dynamic: frame
                .truth_dynamic
                .as_slice()
                .iter()
                .enumerate()
                .filter_map(|(i, &d)| d.then_some(i))
                .collect(),
        }
    }

    pub fn into_frame(self, world: &World) -> Result<Frame> {
        let bearings = world.spec().bearings();
        if bearings.len() != self.ranges.len() {
            return Err(Error::Scenario(format!(
                "record at t = {} has {} beams, scenario has {}",
                self.t,
                self.ranges.len(),
                bearings.len()
            )));
        }
        let max_range = world.spec().sensor.max_range;
        let beams = bearings
            .iter()
            .zip(&self.ranges)
            .map(|(&bearing, r)| match r {
                Some(range) => Beam { bearing, range: *range, is_max_range: false },
                None => Beam { bearing, range: max_range, is_max_range: true },
            })
            .collect();
        let g = world.geometry();
        let mut dynamic = BinaryGrid::new(g.width(), g.height());
        for &i in &self.dynamic {
            if i >= g.len() {
                return Err(Error::Scenario(format!("cell index {i} outside the grid")));
            }
            dynamic.as_mut_slice()[i] = true;
        }
        Ok(Frame {
            time: self.t,
            ego_pose_truth: Pose2D { x: self.pose[0], y: self.pose[1], theta: self.pose[2] },
            scan: Scan::new(beams, max_range)?,
            truth_static: Arc::clone(world.truth_static()),
            truth_dynamic: dynamic,
        })
    }
}

pub fn write_frame_log<'a, W: Write>(
    mut out: W,
    frames: impl IntoIterator<Item = &'a Frame>,
) -> Result<()> {
    for frame in frames {
        serde_json::to_writer(&mut out, &FrameRecord::from_frame(frame))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_frame_log<R: BufRead>(input: R, world: &World) -> Result<Vec<Frame>> {
    let mut frames = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FrameRecord = serde_json::from_str(&line)?;
        frames.push(record.into_frame(world)?);
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{scenario_traffic_light, simulate, TrafficLightParams};

    #[test]
    fn log_round_trips_bit_exactly() {
        let mut spec = scenario_traffic_light(&TrafficLightParams::default());
        spec.duration = 0.3;
        let sim = simulate(spec, 5).unwrap();
        let world = sim.world().clone();
        let frames: Vec<Frame> = sim.collect();
        let mut buf = Vec::new();
        write_frame_log(&mut buf, &frames).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), frames.len());
        let back = read_frame_log(&buf[..], &world).unwrap();
        assert_eq!(back, frames);
    }
}

//! Synthetic ground truth and a noisy ray-cast range sensor.

mod log;
mod scenarios;
mod world;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::grid::{Beam, BinaryGrid, GridGeometry, Pose2D, Scan};
use crate::raycast::GridRay;

pub use log::{read_frame_log, write_frame_log, FrameRecord};
pub use scenarios::{scenario_intersection, scenario_traffic_light, IntersectionParams, TrafficLightParams};
pub use world::{
    rasterize_box, EgoSpec, FilterSpec, GridSpec, ObstacleSpec, PoseWaypoint, RectSpec,
    SensorSpec, WallSpec, Waypoint, World, WorldSpec,
};

/// Smallest range a noisy return is clipped to.
const MIN_RANGE: f64 = 1e-3;

/// Ground truth and measurement at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub time: f64,
    pub ego_pose_truth: Pose2D,
    pub scan: Scan,
    pub truth_static: Arc<BinaryGrid>,
    pub truth_dynamic: BinaryGrid,
}

/// Noise-free range of every beam against `occupied`. `None` means no return
/// within `max_range`.
///
/// The range of a return is the distance along the beam to the projection of
/// the first occupied cell's center, kept within the part of the beam inside
/// that cell.
pub fn cast_ranges(
    geom: &GridGeometry,
    occupied: &BinaryGrid,
    pose: &Pose2D,
    bearings: &[f64],
    max_range: f64,
) -> Vec<Option<f64>> {
    bearings
        .iter()
        .map(|&bearing| {
            let (s, c) = (pose.theta + bearing).sin_cos();
            GridRay::new(geom, pose.position(), (c, s), max_range)
                .find(|x| occupied.get(x.cell.x, x.cell.y))
                .map(|x| {
                    let center = geom.cell_center(x.cell);
                    let along = (center.x - pose.x) * c + (center.y - pose.y) * s;
                    along.clamp(x.t_enter, x.t_exit)
                })
        })
        .collect()
}

/// Deterministic frame generator for one world and seed.
#[derive(Debug, Clone)]
pub struct Simulator {
    world: World,
    bearings: Vec<f64>,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    tick: usize,
}

impl Simulator {
    pub fn new(world: World, seed: u64) -> Result<Self> {
        let sigma = world.spec().sensor.noise_sigma;
        let noise = if sigma > 0.0 {
            Some(Normal::new(0.0, sigma).map_err(|e| {
                crate::error::Error::Scenario(format!("noise model: {e}"))
            })?)
        } else {
            None
        };
        let bearings = world.spec().bearings();
        Ok(Self {
            world,
            bearings,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise,
            tick: 0,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    fn frame_at(&mut self, tick: usize) -> Frame {
        let world = &self.world;
        let time = world.time_of(tick);
        let pose = world.spec().ego.pose_at(time);
        let truth_dynamic = world.truth_dynamic(time);
        let mut occupied = truth_dynamic.clone();
        for (o, &s) in occupied.as_mut_slice().iter_mut().zip(world.truth_static().as_slice()) {
            *o |= s;
        }
        let max_range = world.spec().sensor.max_range;
        let ranges = cast_ranges(world.geometry(), &occupied, &pose, &self.bearings, max_range);
        let beams = self
            .bearings
            .iter()
            .zip(ranges)
            .map(|(&bearing, r)| match r {
                Some(r) => {
                    let noisy = match &self.noise {
                        Some(n) => r + n.sample(&mut self.rng),
                        None => r,
                    };
                    Beam {
                        bearing,
                        range: noisy.clamp(MIN_RANGE, max_range),
                        is_max_range: false,
                    }
                }
                None => Beam {
                    bearing,
                    range: max_range,
                    is_max_range: true,
                },
            })
            .collect();
        let scan = Scan::new(beams, max_range).expect("simulated beams are valid");
        Frame {
            time,
            ego_pose_truth: pose,
            scan,
            truth_static: Arc::clone(world.truth_static()),
            truth_dynamic,
        }
    }
}

impl Iterator for Simulator {
    type Item = Frame;

    fn next(&mut self) -> Option<Frame> {
        if self.tick >= self.world.spec().frame_count() {
            return None;
        }
        let frame = self.frame_at(self.tick);
        self.tick += 1;
        Some(frame)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.world.spec().frame_count() - self.tick;
        (left, Some(left))
    }
}

/// Validates `spec` and returns its frame stream.
pub fn simulate(spec: WorldSpec, seed: u64) -> Result<Simulator> {
    Simulator::new(World::new(spec)?, seed)
}

//! Parameterized builders for the two canonical street scenes.

use std::f64::consts::TAU;

use super::world::{
    EgoSpec, FilterSpec, GridSpec, ObstacleSpec, PoseWaypoint, RectSpec, SensorSpec, WallSpec,
    Waypoint, WorldSpec,
};
use crate::grid::Pose2D;

/// Sampling interval of generated obstacle schedules, seconds.
const SCHEDULE_STEP: f64 = 0.5;
const CAR: [f64; 2] = [4.5, 1.8];

/// Ego waits at a red light between a car ahead and a car behind. Both
/// stand still until `release_time`, then drive off: the front car straight
/// ahead, the rear car into the other lane and past the ego.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficLightParams {
    /// 0, 1 (front car only) or 2.
    pub obstacles: usize,
    pub release_time: f64,
    pub duration: f64,
    pub resolution: f64,
    pub max_range: f64,
    pub noise_sigma: f64,
    pub beam_count: usize,
    pub v_max: f64,
    /// Cruise speed of the departing cars.
    pub car_speed: f64,
    pub car_accel: f64,
    /// Nonzero makes the ego drive along its lane from `x = -20`.
    pub ego_speed: f64,
}

impl Default for TrafficLightParams {
    fn default() -> Self {
        Self {
            obstacles: 2,
            release_time: 30.0,
            duration: 60.0,
            resolution: 0.2,
            max_range: 100.0,
            noise_sigma: 0.03,
            beam_count: 720,
            v_max: 10.0,
            car_speed: 8.0,
            car_accel: 2.0,
            ego_speed: 0.0,
        }
    }
}

/// Ego stands beside a tram in dense traffic. Every mover waits until
/// `release_time` and then all of them accelerate along +x together.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionParams {
    /// Cars besides the tram, at most 6.
    pub cars: usize,
    pub release_time: f64,
    pub duration: f64,
    pub resolution: f64,
    pub max_range: f64,
    pub noise_sigma: f64,
    pub beam_count: usize,
    pub v_max: f64,
    pub car_speed: f64,
    pub car_accel: f64,
    /// Nonzero makes the ego follow the traffic for 30 m after release.
    pub ego_speed: f64,
}

impl Default for IntersectionParams {
    fn default() -> Self {
        Self {
            cars: 4,
            release_time: 10.0,
            duration: 30.0,
            resolution: 0.2,
            max_range: 25.0,
            noise_sigma: 0.03,
            beam_count: 720,
            v_max: 10.0,
            car_speed: 8.0,
            car_accel: 2.5,
            ego_speed: 0.0,
        }
    }
}

fn point_on(path: &[[f64; 2]], mut s: f64) -> [f64; 2] {
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        if s <= len {
            let f = if len > 0.0 { s / len } else { 0.0 };
            return [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
        }
        s -= len;
    }
    *path.last().expect("non-empty path")
}

/// Waits at `path[0]` until `start`, then accelerates along the polyline up
/// to `cruise` and follows it to its end.
fn drive(path: &[[f64; 2]], start: f64, accel: f64, cruise: f64) -> Vec<Waypoint> {
    let total: f64 = path
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum();
    let t_acc = cruise / accel;
    let s_acc = 0.5 * accel * t_acc * t_acc;
    let dist = |tau: f64| {
        if tau <= t_acc {
            0.5 * accel * tau * tau
        } else {
            s_acc + cruise * (tau - t_acc)
        }
    };
    let t_end = if total <= s_acc {
        (2.0 * total / accel).sqrt()
    } else {
        t_acc + (total - s_acc) / cruise
    };
    let wp = |t: f64, p: [f64; 2]| Waypoint { t, x: p[0], y: p[1] };
    let mut out = vec![wp(0.0, path[0])];
    if start > 0.0 {
        out.push(wp(start, path[0]));
    }
    let mut k = 1;
    while (k as f64) * SCHEDULE_STEP < t_end {
        let tau = k as f64 * SCHEDULE_STEP;
        out.push(wp(start + tau, point_on(path, dist(tau))));
        k += 1;
    }
    out.push(wp(start + t_end, *path.last().expect("non-empty path")));
    out
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> RectSpec {
    RectSpec { min: [x0, y0], max: [x1, y1] }
}

fn sensor(beam_count: usize, max_range: f64, noise_sigma: f64) -> SensorSpec {
    SensorSpec {
        beam_count,
        fov: TAU,
        max_range,
        noise_sigma,
        rate: 10.0,
    }
}

pub fn scenario_traffic_light(p: &TrafficLightParams) -> WorldSpec {
    let lane = -1.75;
    let mut rects = Vec::new();
    for (x0, x1) in [(-46.0, -26.0), (-20.0, -4.0), (4.0, 20.0), (26.0, 46.0)] {
        rects.push(rect(x0, 6.0, x1, 12.0));
        rects.push(rect(x0, -12.0, x1, -6.0));
    }
    for x in [-30.0, -10.0, 10.0, 30.0] {
        rects.push(rect(x - 0.2, 4.6, x + 0.2, 5.0));
        rects.push(rect(x - 0.2, -5.0, x + 0.2, -4.6));
    }
    let cars = [
        ("front", vec![[7.0, lane], [60.0, lane]]),
        ("rear", vec![[-7.0, lane], [-3.0, -lane], [60.0, -lane]]),
    ];
    let obstacles = cars
        .into_iter()
        .take(p.obstacles.min(2))
        .map(|(name, path)| ObstacleSpec {
            name: name.into(),
            size: CAR,
            waypoints: drive(&path, p.release_time, p.car_accel, p.car_speed),
        })
        .collect();
    let ego = if p.ego_speed > 0.0 {
        EgoSpec {
            waypoints: vec![
                PoseWaypoint { t: 0.0, x: -20.0, y: lane, theta: 0.0 },
                PoseWaypoint { t: p.duration, x: -20.0 + p.ego_speed * p.duration, y: lane, theta: 0.0 },
            ],
        }
    } else {
        EgoSpec::stationary(Pose2D::new(0.0, lane, 0.0))
    };
    WorldSpec {
        name: "traffic_light".into(),
        duration: p.duration,
        grid: GridSpec { min: [-50.0, -20.0], max: [50.0, 20.0], resolution: p.resolution },
        sensor: sensor(p.beam_count, p.max_range, p.noise_sigma),
        filter: FilterSpec { v_max: p.v_max, ..FilterSpec::default() },
        rects,
        walls: vec![],
        obstacles,
        ego,
    }
}

pub fn scenario_intersection(p: &IntersectionParams) -> WorldSpec {
    let mut rects = vec![
        // parked cars along the south curb
        rect(-20.0, -7.4, -15.5, -5.6),
        rect(13.0, -7.4, 17.5, -5.6),
    ];
    // south block with gaps for side streets
    for (x0, x1) in [(-24.0, -15.0), (-12.0, -3.0), (0.0, 9.0), (12.0, 21.0)] {
        rects.push(rect(x0, -14.0, x1, -9.0));
    }
    // lamp posts
    for k in 0..9 {
        let x = -13.0 + 3.5 * k as f64;
        rects.push(rect(x - 0.2, -7.9, x + 0.2, -7.5));
    }
    // buildings at the map edge
    for (x0, x1) in [(-40.0, -32.0), (32.0, 40.0)] {
        rects.push(rect(x0, -16.0, x1, -9.0));
        rects.push(rect(x0, 10.0, x1, 16.0));
    }
    rects.push(rect(-24.0, 10.0, 24.0, 16.0));
    // traffic island between the ego lane and the south lane
    rects.push(rect(-3.0, -2.1, 3.0, -1.5));
    // the street ends at a building to the west
    rects.push(rect(-27.0, -9.0, -24.0, 10.0));
    let walls = [(-30.0, -26.0), (23.0, 30.0)]
        .into_iter()
        .map(|(x0, x1)| WallSpec { from: [x0, -9.0], to: [x1, -9.0] })
        .collect();

    let end = 90.0;
    let mut movers = vec![ObstacleSpec {
        name: "tram".into(),
        size: [24.0, 2.6],
        waypoints: drive(&[[2.0, 7.0], [end + 24.0, 7.0]], p.release_time, p.car_accel, p.car_speed),
    }];
    // queue in the lane between the ego and the tram, then the south lane
    let slots = [
        ("north_1", -6.0, 3.0),
        ("north_2", 6.0, 3.0),
        ("north_3", -12.0, 3.0),
        ("north_4", 12.0, 3.0),
        ("south_1", -9.0, -3.5),
        ("south_2", 6.0, -3.5),
    ];
    for &(name, x, y) in slots.iter().take(p.cars.min(slots.len())) {
        movers.push(ObstacleSpec {
            name: name.into(),
            size: CAR,
            waypoints: drive(&[[x, y], [end, y]], p.release_time, p.car_accel, p.car_speed),
        });
    }

    let ego = if p.ego_speed > 0.0 {
        let t1 = p.release_time;
        // stop before the map edge
        let t2 = t1 + 30.0 / p.ego_speed;
        EgoSpec {
            waypoints: vec![
                PoseWaypoint { t: 0.0, x: 0.0, y: 0.0, theta: 0.0 },
                PoseWaypoint { t: t1, x: 0.0, y: 0.0, theta: 0.0 },
                PoseWaypoint { t: t2, x: p.ego_speed * (t2 - t1), y: 0.0, theta: 0.0 },
            ],
        }
    } else {
        EgoSpec::stationary(Pose2D::new(0.0, 0.0, 0.0))
    };
    WorldSpec {
        name: "intersection".into(),
        duration: p.duration,
        grid: GridSpec { min: [-40.0, -16.0], max: [40.0, 16.0], resolution: p.resolution },
        sensor: sensor(p.beam_count, p.max_range, p.noise_sigma),
        filter: FilterSpec { v_max: p.v_max, ..FilterSpec::default() },
        rects,
        walls,
        obstacles: movers,
        ego,
    }
}

//! Scenario runner: simulated frames through a mapper, with known poses or
//! scan-matched ones, scored against ground truth.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::{StepStats, TgmFilter};
use crate::grid::{BinaryGrid, Field, Pose2D, TgmMap};
use crate::kernel::TransitionKernel;
use crate::matcher::{localize, MatchConfig, SmoothStaticField};
use crate::ogm::OgmMap;
use crate::raycast::observe;
use crate::render::{render_map, Raster};
use crate::sim::{Simulator, World, WorldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MapperKind {
    Tgm,
    Ogm,
    ClampedOgm,
}

impl MapperKind {
    pub fn label(self) -> &'static str {
        match self {
            MapperKind::Tgm => "tgm",
            MapperKind::Ogm => "ogm",
            MapperKind::ClampedOgm => "cogm",
        }
    }
}

impl fmt::Display for MapperKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MapperKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tgm" => Ok(MapperKind::Tgm),
            "ogm" => Ok(MapperKind::Ogm),
            "cogm" | "c-ogm" => Ok(MapperKind::ClampedOgm),
            other => Err(Error::Config(format!(
                "unknown mapper {other:?}, expected tgm, ogm or cogm"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PoseMode {
    Truth,
    Slam,
}

impl PoseMode {
    pub fn label(self) -> &'static str {
        match self {
            PoseMode::Truth => "truth",
            PoseMode::Slam => "slam",
        }
    }
}

impl fmt::Display for PoseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PoseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "truth" | "ground-truth" => Ok(PoseMode::Truth),
            "slam" => Ok(PoseMode::Slam),
            other => Err(Error::Config(format!(
                "unknown pose mode {other:?}, expected truth or slam"
            ))),
        }
    }
}

/// Optional replacements for scenario parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub prior_static: Option<f64>,
    pub prior_dynamic: Option<f64>,
    pub static_limits: Option<[f64; 2]>,
    pub dynamic_limits: Option<[f64; 2]>,
    pub v_max: Option<f64>,
    pub resolution: Option<f64>,
    pub max_range: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut WorldSpec) {
        let f = &mut spec.filter;
        if let Some(v) = self.prior_static {
            f.prior_static = v;
        }
        if let Some(v) = self.prior_dynamic {
            f.prior_dynamic = v;
        }
        if let Some(v) = self.static_limits {
            f.static_limits = v;
        }
        if let Some(v) = self.dynamic_limits {
            f.dynamic_limits = v;
        }
        if let Some(v) = self.v_max {
            f.v_max = v;
        }
        if let Some(v) = self.resolution {
            spec.grid.resolution = v;
        }
        if let Some(v) = self.max_range {
            spec.sensor.max_range = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: WorldSpec,
    pub mapper: MapperKind,
    pub pose: PoseMode,
    pub overrides: Overrides,
    /// Seconds at which to write map images.
    pub snapshots: Vec<f64>,
    pub seed: u64,
    /// Where artifacts go; `None` runs without writing anything.
    pub out_dir: Option<PathBuf>,
    pub matcher: MatchConfig,
}

impl RunConfig {
    pub fn new(scenario: WorldSpec, mapper: MapperKind, pose: PoseMode) -> Self {
        Self {
            scenario,
            mapper,
            pose,
            overrides: Overrides::default(),
            snapshots: Vec::new(),
            seed: 0,
            out_dir: None,
            matcher: MatchConfig::default(),
        }
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.mapper, self.pose)
    }

    /// Scenario with overrides applied.
    pub fn effective_scenario(&self) -> WorldSpec {
        let mut spec = self.scenario.clone();
        self.overrides.apply(&mut spec);
        spec
    }

    fn validate(&self, spec: &WorldSpec) -> Result<()> {
        for &t in &self.snapshots {
            if !(0.0..=spec.duration).contains(&t) {
                return Err(Error::Config(format!(
                    "snapshot time {t} outside the scenario duration {}",
                    spec.duration
                )));
            }
        }
        Ok(())
    }
}

enum Mapper {
    Tgm { filter: TgmFilter, map: TgmMap },
    Ogm { map: OgmMap, ism: crate::filter::InverseSensorModel },
}

impl Mapper {
    fn new(kind: MapperKind, world: &World) -> Result<Self> {
        let spec = world.spec();
        let f = &spec.filter;
        let geom = *world.geometry();
        Ok(match kind {
            MapperKind::Tgm => {
                let kernel = TransitionKernel::uniform_disk(f.v_max, spec.dt(), geom.resolution())?;
                Mapper::Tgm {
                    filter: TgmFilter::new(kernel, f.ism()?, f.limits()?),
                    map: TgmMap::new(geom, f.prior_static, f.prior_dynamic)?,
                }
            }
            MapperKind::Ogm => Mapper::Ogm {
                map: OgmMap::new(geom),
                ism: f.ism()?,
            },
            MapperKind::ClampedOgm => Mapper::Ogm {
                map: OgmMap::clamped(geom, f.ogm_clamp[0], f.ogm_clamp[1])?,
                ism: f.ism()?,
            },
        })
    }

    /// Layer the matcher and the metrics read: static belief for the TGM,
    /// occupancy for the baselines.
    fn static_field(&self) -> std::borrow::Cow<'_, Field> {
        match self {
            Mapper::Tgm { map, .. } => std::borrow::Cow::Borrowed(map.static_layer()),
            Mapper::Ogm { map, .. } => std::borrow::Cow::Owned(map.probability_field()),
        }
    }

    fn integrate(&mut self, frame_scan: &crate::grid::Scan, pose: &Pose2D) -> Result<(usize, StepStats)> {
        match self {
            Mapper::Tgm { filter, map } => {
                let obs = observe(map.geometry(), frame_scan, pose);
                let (next, stats) = filter.step_observed(map, &obs, None)?;
                *map = next;
                Ok((obs.len(), stats))
            }
            Mapper::Ogm { map, ism } => {
                let obs = observe(map.geometry(), frame_scan, pose);
                map.apply_observation(&obs, ism);
                Ok((obs.len(), StepStats { observed: obs.len(), ..StepStats::default() }))
            }
        }
    }

    fn observed_cells(&self, frame_scan: &crate::grid::Scan, pose: &Pose2D) -> crate::raycast::ScanObservation {
        let geom = match self {
            Mapper::Tgm { map, .. } => map.geometry(),
            Mapper::Ogm { map, .. } => map.geometry(),
        };
        observe(geom, frame_scan, pose)
    }

    fn render(&self) -> Raster {
        match self {
            Mapper::Tgm { map, .. } => render_map(map),
            Mapper::Ogm { map, .. } => map.render(),
        }
    }
}

/// Per-frame ground truth and estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub t: f64,
    pub truth: Pose2D,
    pub estimate: Pose2D,
}

impl PoseSample {
    pub fn position_error(&self) -> f64 {
        (self.estimate.x - self.truth.x).hypot(self.estimate.y - self.truth.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub frames: usize,
    /// Cells observed at least once.
    pub observed_cells: usize,
    /// Share of observed cells whose thresholded static belief matches the
    /// truth at the end of the run.
    pub static_accuracy: f64,
    /// Cells believed static at the end that were only ever covered by movers.
    pub trace_count: usize,
    pub pose_rmse: f64,
    pub poses: Vec<PoseSample>,
    /// Seconds spent in matching, prediction and update per frame.
    pub step_times: Vec<f64>,
    /// Frames whose match failed and kept the motion-model pose.
    pub match_fallbacks: usize,
    pub degenerate_updates: usize,
}

impl RunMetrics {
    /// Mean position error over frames at or after `t`.
    pub fn mean_position_error_since(&self, t: f64) -> f64 {
        let errs: Vec<f64> = self
            .poses
            .iter()
            .filter(|p| p.t >= t - 1e-9)
            .map(PoseSample::position_error)
            .collect();
        if errs.is_empty() {
            0.0
        } else {
            errs.iter().sum::<f64>() / errs.len() as f64
        }
    }

    pub fn mean_step_time(&self) -> f64 {
        if self.step_times.is_empty() {
            0.0
        } else {
            self.step_times.iter().sum::<f64>() / self.step_times.len() as f64
        }
    }

    pub fn max_step_time(&self) -> f64 {
        self.step_times.iter().copied().fold(0.0, f64::max)
    }
}

/// Pose trace with fixed six-decimal formatting.
pub fn poses_csv(poses: &[PoseSample]) -> String {
    let mut out = String::from("t,truth_x,truth_y,truth_theta,est_x,est_y,est_theta\n");
    for p in poses {
        let _ = writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            p.t, p.truth.x, p.truth.y, p.truth.theta, p.estimate.x, p.estimate.y, p.estimate.theta
        );
    }
    out
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    mapper: &'a str,
    pose: &'a str,
    seed: u64,
    frames: usize,
    observed_cells: usize,
    static_accuracy: f64,
    trace_count: usize,
    pose_rmse: f64,
    mean_step_ms: f64,
    max_step_ms: f64,
    match_fallbacks: usize,
    degenerate_updates: usize,
    complete: bool,
    note: &'a str,
}

const METRIC_NOTE: &str = "static_accuracy and trace_count are this tool's own map-quality \
measures over cells observed at least once; trace_count counts cells with static belief above \
0.5 that only moving obstacles ever covered";

fn snapshot_name(t: f64) -> String {
    format!("map_t{:07.2}.ppm", t)
}

struct Scores {
    observed_cells: usize,
    static_accuracy: f64,
    trace_count: usize,
}

fn score(
    belief: &Field,
    observed: &[bool],
    truth_static: &BinaryGrid,
    ever_dynamic: &BinaryGrid,
    final_dynamic: &BinaryGrid,
) -> Scores {
    let mut observed_cells = 0;
    let mut scored = 0usize;
    let mut correct = 0usize;
    let mut trace_count = 0;
    for (i, &p) in belief.as_slice().iter().enumerate() {
        let is_static = truth_static.as_slice()[i];
        let now_dynamic = final_dynamic.as_slice()[i];
        if !is_static && !now_dynamic && ever_dynamic.as_slice()[i] && p > 0.5 {
            trace_count += 1;
        }
        if !observed[i] {
            continue;
        }
        observed_cells += 1;
        if is_static {
            scored += 1;
            correct += usize::from(p > 0.5);
        } else if !now_dynamic {
            scored += 1;
            correct += usize::from(p < 0.5);
        }
    }
    Scores {
        observed_cells,
        static_accuracy: if scored == 0 { 1.0 } else { correct as f64 / scored as f64 },
        trace_count,
    }
}

/// Runs one configuration. Artifacts are written when `out_dir` is set; a
/// failed run leaves a `FAILED` marker next to whatever it wrote.
pub fn run(config: &RunConfig) -> Result<RunMetrics> {
    let result = run_inner(config);
    if let (Err(e), Some(dir)) = (&result, &config.out_dir) {
        if dir.is_dir() {
            let _ = fs::write(dir.join("FAILED"), format!("{e}\n"));
        }
    }
    result
}

fn run_inner(config: &RunConfig) -> Result<RunMetrics> {
    let spec = config.effective_scenario();
    config.validate(&spec)?;
    let world = World::new(spec)?;
    let mut mapper = Mapper::new(config.mapper, &world)?;
    let out = config.out_dir.as_deref();
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let _ = fs::remove_file(dir.join("FAILED"));
    }

    let geom = *world.geometry();
    let dt = world.spec().dt();
    let mut observed = vec![false; geom.len()];
    let mut ever_dynamic = BinaryGrid::new(geom.width(), geom.height());
    let mut final_dynamic = ever_dynamic.clone();
    let mut poses: Vec<PoseSample> = Vec::new();
    let mut history: Vec<Pose2D> = Vec::new();
    let mut step_times = Vec::new();
    let mut match_fallbacks = 0;
    let mut degenerate_updates = 0;
    let mut pending: Vec<f64> = config.snapshots.clone();
    pending.sort_by(f64::total_cmp);
    pending.dedup();

    let sim = Simulator::new(world.clone(), config.seed)?;
    for frame in sim {
        let started = Instant::now();
        let estimate = match (config.pose, history.last()) {
            (PoseMode::Slam, Some(_)) => {
                let field = mapper.static_field();
                let sf = SmoothStaticField::new(&geom, &field)?;
                let loc = localize(&frame.scan, &history, &sf, &config.matcher)?;
                match_fallbacks += usize::from(loc.fallback);
                loc.pose
            }
            _ => frame.ego_pose_truth,
        };
        let (_, stats) = mapper.integrate(&frame.scan, &estimate)?;
        step_times.push(started.elapsed().as_secs_f64());
        degenerate_updates += stats.degenerate;

        let obs = mapper.observed_cells(&frame.scan, &estimate);
        for &i in obs.hits.iter().chain(&obs.frees) {
            observed[i] = true;
        }
        for (e, &d) in ever_dynamic
            .as_mut_slice()
            .iter_mut()
            .zip(frame.truth_dynamic.as_slice())
        {
            *e |= d;
        }
        history.push(estimate);
        poses.push(PoseSample {
            t: frame.time,
            truth: frame.ego_pose_truth,
            estimate,
        });
        while let Some(&t) = pending.first() {
            if t > frame.time + 0.5 * dt {
                break;
            }
            if let Some(dir) = out {
                mapper.render().write_ppm(dir.join(snapshot_name(t)))?;
            }
            pending.remove(0);
        }
        final_dynamic = frame.truth_dynamic;
    }

    let scores = score(
        &mapper.static_field(),
        &observed,
        world.truth_static(),
        &ever_dynamic,
        &final_dynamic,
    );
    let sq: f64 = poses.iter().map(|p| p.position_error().powi(2)).sum();
    let metrics = RunMetrics {
        frames: poses.len(),
        observed_cells: scores.observed_cells,
        static_accuracy: scores.static_accuracy,
        trace_count: scores.trace_count,
        pose_rmse: if poses.is_empty() { 0.0 } else { (sq / poses.len() as f64).sqrt() },
        poses,
        step_times,
        match_fallbacks,
        degenerate_updates,
    };

    if let Some(dir) = out {
        mapper.render().write_ppm(dir.join("map_final.ppm"))?;
        fs::write(dir.join("poses.csv"), poses_csv(&metrics.poses))?;
        let summary = Summary {
            scenario: &world.spec().name,
            mapper: config.mapper.label(),
            pose: config.pose.label(),
            seed: config.seed,
            frames: metrics.frames,
            observed_cells: metrics.observed_cells,
            static_accuracy: metrics.static_accuracy,
            trace_count: metrics.trace_count,
            pose_rmse: metrics.pose_rmse,
            mean_step_ms: 1e3 * metrics.mean_step_time(),
            max_step_ms: 1e3 * metrics.max_step_time(),
            match_fallbacks: metrics.match_fallbacks,
            degenerate_updates: metrics.degenerate_updates,
            complete: true,
            note: METRIC_NOTE,
        };
        fs::write(dir.join("summary.txt"), toml::to_string(&summary)?)?;
    }
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    /// Aligned text table. Timing is left out so equal inputs give equal text.
    pub fn to_table(&self) -> String {
        let header = ["run", "frames", "observed", "static_acc", "traces", "pose_rmse", "fallbacks"];
        let mut rows: Vec<[String; 7]> = vec![header.map(String::from)];
        for r in &self.rows {
            let m = &r.metrics;
            rows.push([
                r.label.clone(),
                m.frames.to_string(),
                m.observed_cells.to_string(),
                format!("{:.4}", m.static_accuracy),
                m.trace_count.to_string(),
                format!("{:.4}", m.pose_rmse),
                m.match_fallbacks.to_string(),
            ]);
        }
        let mut widths = [0usize; 7];
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        for row in &rows {
            let line: Vec<String> = row
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(k, (cell, w))| {
                    if k == 0 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Runs several configurations of one scenario and seed in the given order.
/// Each run writes into `<out_dir>/<label>` when `out_dir` is set.
pub fn compare(configs: &[RunConfig], out_dir: Option<&Path>) -> Result<Comparison> {
    let Some(first) = configs.first() else {
        return Err(Error::Config("compare needs at least two configurations".into()));
    };
    if configs.len() < 2 {
        return Err(Error::Config("compare needs at least two configurations".into()));
    }
    for c in &configs[1..] {
        if c.scenario != first.scenario || c.seed != first.seed {
            return Err(Error::Config(
                "compared runs must share one scenario and seed".into(),
            ));
        }
    }
    let mut rows = Vec::with_capacity(configs.len());
    for (k, c) in configs.iter().enumerate() {
        let mut c = c.clone();
        let mut label = c.label();
        if configs[..k].iter().any(|o| o.label() == label) {
            label = format!("{label}-{k}");
        }
        c.out_dir = out_dir.map(|d| d.join(&label));
        rows.push(ComparisonRow {
            label,
            metrics: run(&c)?,
        });
    }
    let comparison = Comparison { rows };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("comparison.txt"), comparison.to_table())?;
    }
    Ok(comparison)
}

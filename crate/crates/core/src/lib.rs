//! Transitional grid maps: a recursive Bayesian filter that tracks, per grid
//! cell, the belief of being free, statically occupied or dynamically
//! occupied.
//!
//! The crate also carries the pieces needed to exercise the filter end to
//! end: log-odds occupancy baselines, a scan matcher that localizes against
//! the static layer only, a synthetic world with a ray-cast range sensor, and
//! a scenario runner.

pub mod error;
pub mod filter;
pub mod grid;
pub mod harness;
pub mod kernel;
pub mod matcher;
pub mod ogm;
pub mod predict;
pub mod raycast;
pub mod render;
pub mod sim;

pub use error::{Error, Result};
pub use grid::{
    BinaryGrid, Beam, CellBelief, CellIndex, Field, GridGeometry, Point2, Pose2D, Region, Scan,
    TgmMap,
};
pub use filter::{
    apply_saturation, inverse_sensor_model, update_cell, InverseSensorModel, SaturationLimits,
    StepStats, TgmFilter,
};
pub use kernel::{transition_probability, TransitionKernel};
pub use matcher::{
    constant_velocity_seed, localize, match_scan, Localization, MatchConfig, MatchResult,
    SmoothStaticField,
};
pub use ogm::{ogm_step, OgmMap};
pub use predict::{predict, predict_bruteforce, Prediction};
pub use raycast::{observe, Crossing, GridRay, ScanObservation};
pub use render::{render_map, render_probability, Raster};

//! JSON configuration schema and its mapping onto the solver types.
//!
//! The schema is strict: unknown fields are rejected so that typos surface
//! as configuration errors instead of silently falling back to defaults.

use anyhow::{bail, Context, Result};
use capflow_core::domain::GridSpec;
use capflow_core::flow::{BetaSpec, FlowConfig, StationaryStop};
use capflow_core::shapes::Shape;
use capflow_core::stepper::StepOptions;
use capflow_core::energy::StencilKind;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub grid: GridConfig,
    /// Wetting-band coercivity parameter; the wall coefficient is clamped to
    /// `|beta| <= 1 - 2 kappa`.
    pub kappa: f64,
    pub beta: BetaConfig,
    pub stencil: StencilConfig,
    /// Implicit step length.
    pub h: f64,
    /// Physical end time; `floor(t_end / h)` steps are taken.
    pub t_end: f64,
    /// Optional stated volume target, validated against the rasterized
    /// initial volume within one cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_target: Option<f64>,
    /// Union of analytic regions forming the initial set.
    pub initial: Vec<ShapeConfig>,
    /// Regions removed from the union after rasterization. Grid-aligned
    /// boxes remove exactly their own cell count, so a bump in `initial`
    /// plus an equal-count carve perturbs a shape at constant volume.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub carve: Vec<ShapeConfig>,
    /// Keep every n-th state as a snapshot (0 keeps only forced ones).
    #[serde(default)]
    pub snapshot_every: usize,
    /// Extra step indices whose states are always kept.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forced_snapshots: Vec<usize>,
    /// Stop early once this many consecutive steps each move at most the
    /// stated number of cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_when_stationary: Option<StationaryConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Interface dimension: 1 for planar runs, 2 for spatial runs.
    pub d: usize,
    pub dx: f64,
    pub n_horiz: usize,
    pub n_vert: usize,
    /// Lower corner of the horizontal extent; the second entry is ignored
    /// on planar grids.
    #[serde(default)]
    pub horiz_min: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaConfig {
    /// One value across the whole wall.
    Constant { value: f64 },
    /// Piecewise-constant samples spread uniformly across the bottom span.
    Table { values: Vec<f64> },
    /// Linear profile from the left wall edge to the right.
    Ramp { from: f64, to: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StencilConfig {
    N4,
    N8,
    N16,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    /// Axis-aligned box, coordinates `[x, y, z]`.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Ball intersected with the half-space.
    Ball { center: [f64; 3], radius: f64 },
    /// Spherical cap resting on the wall at the horizontal origin.
    Cap { base_radius: f64, cos_contact: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryConfig {
    pub window: usize,
    pub max_cells: usize,
}

fn to_shape(s: &ShapeConfig) -> Shape {
    match s {
        ShapeConfig::Box { min, max } => Shape::Box { min: *min, max: *max },
        ShapeConfig::Ball { center, radius } => Shape::Ball { center: *center, radius: *radius },
        ShapeConfig::Cap { base_radius, cos_contact } => {
            Shape::Cap { base_radius: *base_radius, cos_contact: *cos_contact }
        }
    }
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let echo: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("config {} is not valid JSON", path.display()))?;
        let parsed: RunConfigFile = serde_json::from_str(&text)
            .with_context(|| format!("config {} does not match the schema", path.display()))?;
        parsed.validate()?;
        Ok((parsed, echo))
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa <= 0.5) {
            bail!("kappa must lie in (0, 1/2], got {}", self.kappa);
        }
        let band = 1.0 - 2.0 * self.kappa;
        let check_band = |v: f64| -> Result<()> {
            if v.abs() > band + 1e-12 {
                bail!("wall coefficient {v} exceeds the admissible band |beta| <= {band}");
            }
            Ok(())
        };
        match &self.beta {
            BetaConfig::Constant { value } => check_band(*value)?,
            // Table and ramp values are clamped into the band by design;
            // only the constant profile is strict, because a single
            // out-of-band value there is always a configuration mistake.
            BetaConfig::Table { values } => {
                if values.is_empty() {
                    bail!("beta table must not be empty");
                }
            }
            BetaConfig::Ramp { .. } => {}
        }
        if self.initial.is_empty() {
            bail!("initial must list at least one shape");
        }
        Ok(())
    }

    pub fn to_flow_config(&self) -> Result<FlowConfig> {
        let g = &self.grid;
        let grid = GridSpec::new(g.d, g.dx, g.n_horiz, g.n_vert, g.horiz_min)
            .map_err(|e| anyhow::anyhow!("invalid grid: {e}"))?;
        Ok(FlowConfig {
            grid,
            kappa: self.kappa,
            beta: match &self.beta {
                BetaConfig::Constant { value } => BetaSpec::Constant { value: *value },
                BetaConfig::Table { values } => BetaSpec::Table { values: values.clone() },
                BetaConfig::Ramp { from, to } => BetaSpec::Ramp { from: *from, to: *to },
            },
            stencil: match self.stencil {
                StencilConfig::N4 => StencilKind::N4,
                StencilConfig::N8 => StencilKind::N8,
                StencilConfig::N16 => StencilKind::N16,
            },
            h: self.h,
            t_end: self.t_end,
            m0: self.volume_target,
            initial: self.initial.iter().map(to_shape).collect(),
            initial_carve: self.carve.iter().map(to_shape).collect(),
            snapshot_every: self.snapshot_every,
            forced_snapshots: self.forced_snapshots.clone(),
            stop_when_stationary: self
                .stop_when_stationary
                .as_ref()
                .map(|s| StationaryStop { window: s.window, max_cells: s.max_cells }),
            step: StepOptions::default(),
        })
    }
}

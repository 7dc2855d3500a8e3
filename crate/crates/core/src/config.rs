//! Run configuration: JSON schema, presets, and default resolution.
//!
//! A run is described by a preset (optional) with a user JSON document merged
//! on top. Every default filled in during resolution is recorded so the run
//! metadata can echo it.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{config_err, Result};
use crate::field::FieldSpec;
use crate::grid::{build_mesh_pair, MeshPair};
use crate::indicator::IndicatorMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// One PG-LOD solve per patch size.
    Kconv,
    /// Adaptive solves over the moving-sine coefficient sequence.
    TolSweep,
    Darcy2d,
    Darcy3d,
    /// A single PG-LOD solve.
    SingleSolve,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    FineFem,
    CoarseFem,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub dim: usize,
    #[serde(default)]
    pub domain: Option<Vec<[f64; 2]>>,
    pub coarse: Vec<usize>,
    pub refine: Vec<usize>,
    #[serde(default)]
    pub dirichlet_axes: Option<Vec<usize>>,
}

impl MeshConfig {
    pub fn build(&self) -> Result<MeshPair> {
        let d = self.dim;
        if !(1..=3).contains(&d) {
            return Err(config_err!("mesh dim must be 1, 2 or 3, got {d}"));
        }
        let domain = self.domain.clone().unwrap_or_else(|| vec![[0.0, 1.0]; d]);
        let axes = self.dirichlet_axes.clone().unwrap_or_else(|| vec![0]);
        if domain.len() != d || self.coarse.len() != d || self.refine.len() != d {
            return Err(config_err!("mesh domain/coarse/refine must have {d} entries"));
        }
        let mut flags = vec![[false, false]; d];
        for &a in &axes {
            *flags.get_mut(a).ok_or_else(|| config_err!("dirichlet axis {a} out of range"))? = [true, true];
        }
        build_mesh_pair(&domain, &self.coarse, &self.refine, &flags)
    }
}

/// Accept a single value or a list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Zero,
    Constant { value: f64 },
}

/// Boundary function `g`, linear along one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub axis: usize,
    pub at_lo: f64,
    pub at_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SaturationSpec {
    Constant { value: f64 },
    /// `inside` on coarse elements whose midpoint lies in the closed ball.
    Ball { center: Vec<f64>, radius: f64, inside: f64, outside: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub start: i64,
    pub end: i64,
}

/// The user-facing schema; unset fields get defaults during resolution.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    pub mesh: Option<MeshConfig>,
    pub field: Option<FieldSpec>,
    pub seed: Option<u64>,
    pub k: Option<OneOrMany<usize>>,
    pub tol: Option<OneOrMany<f64>>,
    pub indicator_mode: Option<IndicatorMode>,
    pub literal_threshold: Option<bool>,
    pub include_rhs_correction: Option<bool>,
    pub reference: Option<Vec<Reference>>,
    pub sweep: Option<SweepRange>,
    pub steps: Option<usize>,
    pub dt: Option<f64>,
    pub s_boundary: Option<f64>,
    pub initial_saturation: Option<SaturationSpec>,
    pub clamp_saturation: Option<bool>,
    pub source: Option<SourceSpec>,
    pub boundary: Option<BoundarySpec>,
    pub record_wall_time: Option<bool>,
    /// Saturation dump interval in steps; 0 dumps the final step only.
    pub dump_every: Option<usize>,
    /// Required for meshes above the desk-scale limit.
    pub paper_scale: Option<bool>,
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub experiment: Experiment,
    pub mesh: MeshConfig,
    pub field: FieldSpec,
    pub seed: Option<u64>,
    pub k: Vec<usize>,
    pub tol: Vec<f64>,
    pub indicator_mode: IndicatorMode,
    pub literal_threshold: bool,
    pub include_rhs_correction: bool,
    pub reference: Vec<Reference>,
    pub sweep: SweepRange,
    pub steps: usize,
    pub dt: f64,
    pub s_boundary: f64,
    pub initial_saturation: SaturationSpec,
    pub clamp_saturation: bool,
    pub source: SourceSpec,
    pub boundary: BoundarySpec,
    pub record_wall_time: bool,
    pub dump_every: usize,
    pub paper_scale: bool,
}

pub const PRESETS: &[&str] = &[
    "kconv-desk",
    "tolsweep-desk",
    "darcy2d-desk",
    "darcy3d-desk",
    "kconv-paper",
    "tolsweep-paper",
    "darcy2d-paper",
    "darcy3d-paper",
];

/// Preset document, before user overrides.
pub fn preset(name: &str) -> Result<Value> {
    let mesh2 = |c: usize, r: usize| json!({"dim": 2, "coarse": [c, c], "refine": [r, r], "dirichlet_axes": [0]});
    let mesh3 = |c: usize, r: usize| json!({"dim": 3, "coarse": [c, c, c], "refine": [r, r, r], "dirichlet_axes": [0]});
    let kconv = |mesh: Value| {
        json!({"experiment": "kconv", "mesh": mesh, "field": {"kind": "checkerboard_base", "seed": 1}, "k": [1, 2, 3, 4]})
    };
    let sweep = |mesh: Value| {
        json!({
            "experiment": "tol_sweep", "mesh": mesh, "field": {"kind": "checkerboard_base", "seed": 1},
            "k": 3, "tol": [0.5, 0.1, 0.05, 0.01], "indicator_mode": "fine", "sweep": {"start": 0, "end": 127},
            "reference": ["fine_fem"]
        })
    };
    let darcy2d = |mesh: Value, steps: usize, k: Value, tol: Value| {
        json!({
            "experiment": "darcy2d", "mesh": mesh,
            "field": {"kind": "lognormal2d", "seed": 1, "stddev": 3.0, "corr_len": 0.05},
            "k": k, "tol": tol, "indicator_mode": "coarse", "steps": steps, "dt": 1.0 / steps as f64,
            "s_boundary": 1.0, "initial_saturation": {"kind": "constant", "value": 0.0},
            "reference": ["fine_fem", "coarse_fem"]
        })
    };
    let darcy3d = |mesh: Value, steps: usize, k: Value, tol: Value| {
        json!({
            "experiment": "darcy3d", "mesh": mesh, "field": {"kind": "product3d", "seed": 1},
            "k": k, "tol": tol, "indicator_mode": "coarse", "steps": steps, "dt": 1.0, "s_boundary": 0.0,
            "initial_saturation": {"kind": "ball", "center": [0.5, 0.5, 0.5], "radius": 0.25, "inside": 1.0, "outside": 0.0},
            "reference": []
        })
    };
    let v = match name {
        "kconv-desk" => kconv(mesh2(16, 16)),
        "kconv-paper" => kconv(mesh2(32, 16)),
        "tolsweep-desk" => sweep(mesh2(16, 8)),
        "tolsweep-paper" => sweep(mesh2(32, 16)),
        "darcy2d-desk" => darcy2d(mesh2(16, 8), 200, json!(2), json!(0.05)),
        "darcy2d-paper" => darcy2d(mesh2(64, 8), 2000, json!([1, 2, 3]), json!([0.4, 0.2, 0.1, 0.05, 0.025, 0.0125])),
        "darcy3d-desk" => darcy3d(mesh3(8, 4), 50, json!(1), json!([0.1, 0.01, 0.001])),
        "darcy3d-paper" => darcy3d(mesh3(16, 8), 200, json!([1, 2]), json!([0.1, 0.01])),
        _ => return Err(config_err!("unknown preset '{name}'; available: {}", PRESETS.join(", "))),
    };
    Ok(v)
}

/// Recursive merge of JSON objects; `over` wins on scalars and arrays.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Merge preset and user document, then parse.
pub fn load(preset_name: Option<&str>, user: Option<Value>) -> Result<RunConfig> {
    let mut doc = match preset_name {
        Some(p) => preset(p)?,
        None => json!({}),
    };
    if let Some(u) = user {
        if !u.is_object() {
            return Err(config_err!("config must be a JSON object"));
        }
        // a user-supplied field replaces the preset field wholesale
        if let (Some(obj), Some(f)) = (doc.as_object_mut(), u.get("field")) {
            obj.insert("field".into(), f.clone());
        }
        merge(&mut doc, u);
    }
    serde_json::from_value(doc).map_err(|e| config_err!("{e}"))
}

fn field_with_seed(f: &FieldSpec, seed: u64) -> FieldSpec {
    match f.clone() {
        FieldSpec::CheckerboardBase { .. } => FieldSpec::CheckerboardBase { seed },
        FieldSpec::Sweep { n, .. } => FieldSpec::Sweep { seed, n },
        FieldSpec::Lognormal2d { stddev, corr_len, sampler, .. } => FieldSpec::Lognormal2d { seed, stddev, corr_len, sampler },
        FieldSpec::Product3d { .. } => FieldSpec::Product3d { seed },
        FieldSpec::Darcy { permeability, saturation } => {
            FieldSpec::Darcy { permeability: Box::new(field_with_seed(&permeability, seed)), saturation }
        }
        other => other,
    }
}

/// Largest mesh the desk limit allows without `paper_scale`.
const DESK_FINE_CELLS: usize = 1 << 17;

impl RunConfig {
    /// Fill defaults; returns the resolved config and the names of every
    /// field that was defaulted.
    pub fn resolve(&self) -> Result<(Resolved, Vec<String>)> {
        let mut applied = Vec::new();
        macro_rules! or_default {
            ($field:ident, $value:expr) => {
                match &self.$field {
                    Some(v) => v.clone(),
                    None => {
                        applied.push(stringify!($field).to_string());
                        $value
                    }
                }
            };
        }
        let experiment = self.experiment.ok_or_else(|| config_err!("'experiment' is required (or use a preset)"))?;
        let mesh = self.mesh.clone().ok_or_else(|| config_err!("'mesh' is required (or use a preset)"))?;
        let field = self.field.clone().ok_or_else(|| config_err!("'field' is required (or use a preset)"))?;
        let field = match self.seed {
            Some(s) => field_with_seed(&field, s),
            None => field,
        };
        let darcy = matches!(experiment, Experiment::Darcy2d | Experiment::Darcy3d);
        let k = or_default!(k, OneOrMany::One(1)).to_vec();
        let tol = or_default!(tol, OneOrMany::One(0.0)).to_vec();
        let indicator_mode = or_default!(indicator_mode, if darcy { IndicatorMode::Coarse } else { IndicatorMode::Fine });
        let steps = or_default!(steps, if darcy { 200 } else { 1 });
        let r = Resolved {
            experiment,
            seed: self.seed,
            k,
            tol,
            indicator_mode,
            literal_threshold: or_default!(literal_threshold, false),
            include_rhs_correction: or_default!(include_rhs_correction, true),
            reference: or_default!(
                reference,
                match experiment {
                    Experiment::Darcy2d => vec![Reference::FineFem, Reference::CoarseFem],
                    Experiment::Darcy3d => vec![],
                    _ => vec![Reference::FineFem],
                }
            ),
            sweep: or_default!(sweep, SweepRange { start: 0, end: 127 }),
            steps,
            dt: or_default!(dt, 1.0 / steps as f64),
            s_boundary: or_default!(s_boundary, 1.0),
            initial_saturation: or_default!(initial_saturation, SaturationSpec::Constant { value: 0.0 }),
            clamp_saturation: or_default!(clamp_saturation, false),
            source: or_default!(source, SourceSpec::Zero),
            boundary: or_default!(boundary, BoundarySpec { axis: 0, at_lo: 1.0, at_hi: 0.0 }),
            record_wall_time: or_default!(record_wall_time, false),
            dump_every: or_default!(dump_every, 0),
            paper_scale: or_default!(paper_scale, false),
            mesh,
            field,
        };
        r.validate()?;
        Ok((r, applied))
    }
}

impl Resolved {
    fn validate(&self) -> Result<()> {
        let mesh = self.mesh.build()?;
        if self.k.is_empty() || self.tol.is_empty() {
            return Err(config_err!("k and tol lists must be nonempty"));
        }
        if let Some(t) = self.tol.iter().find(|t| !(**t >= 0.0)) {
            return Err(config_err!("TOL must be >= 0, got {t}"));
        }
        if self.steps == 0 {
            return Err(config_err!("steps must be >= 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(config_err!("dt must be positive, got {}", self.dt));
        }
        if self.sweep.end < self.sweep.start {
            return Err(config_err!("sweep end {} precedes start {}", self.sweep.end, self.sweep.start));
        }
        if self.boundary.axis >= self.mesh.dim {
            return Err(config_err!("boundary axis {} out of range", self.boundary.axis));
        }
        if !mesh.has_dirichlet() {
            return Err(config_err!("at least one Dirichlet axis is required"));
        }
        if let SaturationSpec::Ball { center, .. } = &self.initial_saturation {
            if center.len() != self.mesh.dim {
                return Err(config_err!("ball center needs {} coordinates", self.mesh.dim));
            }
        }
        match self.experiment {
            Experiment::Darcy2d if self.mesh.dim != 2 => return Err(config_err!("darcy2d needs a 2D mesh")),
            Experiment::Darcy3d if self.mesh.dim != 3 => return Err(config_err!("darcy3d needs a 3D mesh")),
            _ => {}
        }
        if self.indicator_mode == IndicatorMode::Fine && matches!(self.experiment, Experiment::Darcy2d | Experiment::Darcy3d) {
            return Err(config_err!("Darcy runs use coarse indicators"));
        }
        if mesh.fine().num_cells() > DESK_FINE_CELLS && !self.paper_scale {
            return Err(config_err!(
                "fine mesh has {} cells; set \"paper_scale\": true to run beyond {DESK_FINE_CELLS}",
                mesh.fine().num_cells()
            ));
        }
        Ok(())
    }
}

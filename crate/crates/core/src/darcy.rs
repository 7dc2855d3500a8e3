//! Sequentially coupled two-phase Darcy flow on the coarse grid: pressure by
//! PG-LOD with a saturation-dependent coefficient, conservative coarse face
//! fluxes, and explicit upwind transport of the saturation.

use std::collections::BTreeMap;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::adaptive::{AdaptiveConfig, LaggingStore, StepInput, StepOutcome};
use crate::corrector::{CorrectorOptions, CorrectorSet};
use crate::error::{config_err, Error, Result};
use crate::fem::{gather, solve_fine_reference, Coefficient, Source};
use crate::grid::{Face, FaceKind, MAX_DIM};
use crate::indicator::{ElementIndicators, IndicatorMode};
use crate::linalg::{dense_spd_solve, SpdSolver, TripletBuilder};
use crate::space::Discretization;

/// Phase mobilities `λ_w = s³`, `λ_n = (1−s)³`, total `λ` and fractional
/// flow `ψ = λ_w / λ`, evaluated at `s` clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mobility {
    pub water: f64,
    pub oil: f64,
    pub total: f64,
    pub frac: f64,
}

pub fn mobility(s: f64) -> Mobility {
    let s = s.clamp(0.0, 1.0);
    let water = s * s * s;
    let oil = (1.0 - s) * (1.0 - s) * (1.0 - s);
    let total = water + oil;
    Mobility { water, oil, total, frac: water / total }
}

/// One-sided face flux data of one element's correctors: for each face of
/// each patch element, the flux along `n_F` of `ψ_i = χ_T φ_i − Q̃φ_i`
/// (columns `u`) and of `χ_T g − Q̃g + R̃f` (`fg`), summed over the patch
/// elements adjacent to the face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxTable {
    pub faces: Vec<usize>,
    /// Global coarse nodes of the basis functions.
    pub cols: Vec<usize>,
    /// Row-major `faces x cols`.
    pub u: Vec<f64>,
    pub fg: Vec<f64>,
}

/// Visit the fine cells of coarse element `side` touching face `face`, with
/// the weight `⟨a⟩ |segment| / (h_axis 2^{d-1})` such that the face flux of a
/// Q1 function is `−weight · Σ (v_upper − v_lower)` over corner pairs along
/// the axis.
fn for_each_face_cell(disc: &Discretization, face: &Face, side: usize, coef: &dyn Fn(usize) -> f64, mut f: impl FnMut(usize, f64)) {
    let mesh = &disc.mesh;
    let fine = mesh.fine();
    let r = mesh.refine();
    let ax = face.axis;
    let d = mesh.dim();
    let tm = mesh.coarse().cell_multi(side);
    let mut lo = [0; MAX_DIM];
    let mut hi = [1; MAX_DIM];
    for a in 0..d {
        lo[a] = tm[a] * r[a];
        hi[a] = lo[a] + r[a];
    }
    let lower_side = face.lower == Some(side);
    let layer = if lower_side { hi[ax] - 1 } else { lo[ax] };
    lo[ax] = layer;
    hi[ax] = layer + 1;
    let seg: f64 = (0..d).filter(|&b| b != ax).map(|b| fine.h(b)).product();
    let scale = seg / fine.h(ax) / (1usize << (d - 1)) as f64;
    let nf = fine.cells()[ax];
    crate::grid::for_each_in_box(lo, hi, |m| {
        let c = fine.cell_index(m);
        let a_in = coef(c);
        let neighbor = if lower_side {
            (m[ax] + 1 < nf).then(|| {
                let mut n = m;
                n[ax] += 1;
                n
            })
        } else {
            (m[ax] > 0).then(|| {
                let mut n = m;
                n[ax] -= 1;
                n
            })
        };
        let avg = match neighbor {
            Some(n) => {
                let a_out = coef(fine.cell_index(n));
                2.0 * a_in * a_out / (a_in + a_out)
            }
            None => 2.0 * a_in,
        };
        f(c, avg * scale);
    });
}

/// `Σ (v[c | bit] − v[c])` over corners with the axis bit clear.
#[inline]
fn axis_difference(v: &[f64], axis: usize, corners: usize) -> f64 {
    let bit = 1 << axis;
    (0..corners).filter(|c| c & bit == 0).map(|c| v[c | bit] - v[c]).sum()
}

/// Build the flux table of an element from its correctors. `coef` is the
/// coefficient at corrector time on all fine cells (its values on the patch
/// are the snapshot).
pub fn flux_table(disc: &Discretization, cs: &CorrectorSet, coef: &dyn Fn(usize) -> f64, g: &[f64]) -> FluxTable {
    let mesh = &disc.mesh;
    let fine = mesh.fine();
    let n = disc.corners();
    let nb = cs.nbasis();
    let elements = cs.patch.elements(mesh);
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    for &e in &elements {
        for &(fi, _) in &disc.faces.element_faces[e] {
            let len = rows.len();
            rows.entry(fi).or_insert(len);
        }
    }
    // stable, sorted face order
    let faces: Vec<usize> = rows.keys().copied().collect();
    for (i, fi) in faces.iter().enumerate() {
        rows.insert(*fi, i);
    }
    let mut u = vec![0.0; faces.len() * nb];
    let mut fg = vec![0.0; faces.len()];
    let mut vals = [0.0; 8];
    for &e in &elements {
        let in_center = e == cs.element;
        for &(fi, _) in &disc.faces.element_faces[e] {
            let face = &disc.faces.faces[fi];
            let row = rows[&fi];
            for_each_face_cell(disc, face, e, coef, |c, w| {
                let nodes = fine.cell_nodes(c);
                let local: Vec<usize> =
                    (0..n).map(|k| cs.patch.local_of_global_node(mesh, nodes[k]).expect("face cell in patch")).collect();
                let off = disc.basis.offset_index(fine.cell_multi(c));
                for j in 0..nb {
                    let q = &cs.q[j];
                    for k in 0..n {
                        vals[k] = -q[local[k]];
                    }
                    if in_center {
                        let phi = disc.basis.values(off, cs.basis_corners[j]);
                        for k in 0..n {
                            vals[k] += phi[k];
                        }
                    }
                    u[row * nb + j] -= w * axis_difference(&vals, face.axis, n);
                }
                for k in 0..n {
                    vals[k] = cs.r_f[local[k]] - cs.q_g[local[k]];
                }
                if in_center {
                    let gl = gather(fine, c, g);
                    for k in 0..n {
                        vals[k] += gl[k];
                    }
                }
                fg[row] -= w * axis_difference(&vals, face.axis, n);
            });
        }
    }
    FluxTable { faces, cols: cs.basis_nodes.clone(), u, fg }
}

/// `σ̄_F = ½ Σ_T (Σ_i α_i σ̃_{u,F,i} + σ̃_{fg,F})`.
pub fn preflux<'a>(disc: &Discretization, alpha: &[f64], tables: impl IntoIterator<Item = Option<&'a FluxTable>>) -> Result<Vec<f64>> {
    let mut sigma = vec![0.0; disc.faces.len()];
    let mut count = 0;
    for (t, table) in tables.into_iter().enumerate() {
        let tb = table.ok_or_else(|| Error::IncompleteState(format!("flux table of element {t} is missing")))?;
        let nb = tb.cols.len();
        for (r, &fi) in tb.faces.iter().enumerate() {
            let mut s = tb.fg[r];
            for (j, &z) in tb.cols.iter().enumerate() {
                s += alpha[z] * tb.u[r * nb + j];
            }
            sigma[fi] += 0.5 * s;
        }
        count += 1;
    }
    if count != disc.mesh.coarse().num_cells() {
        return Err(Error::IncompleteState(format!("{count} flux tables for {} elements", disc.mesh.coarse().num_cells())));
    }
    Ok(sigma)
}

/// Pre-flux of a fine function (the reference method): the average of the
/// two one-sided harmonic-coefficient traces, one trace on the boundary.
pub fn fine_preflux(disc: &Discretization, a: &Coefficient, v: &[f64]) -> Vec<f64> {
    let fine = disc.mesh.fine();
    let n = disc.corners();
    disc.faces
        .faces
        .iter()
        .map(|face| {
            let mut s = 0.0;
            for side in face.elements() {
                for_each_face_cell(disc, face, side, &|c| a.get(c), |c, w| {
                    s -= w * axis_difference(&gather(fine, c, v), face.axis, n);
                });
            }
            0.5 * s
        })
        .collect()
}

/// `∫_T f` per coarse element.
pub fn element_sources(disc: &Discretization, f: &Source) -> Vec<f64> {
    let mesh = &disc.mesh;
    (0..mesh.coarse().num_cells())
        .map(|t| {
            if f.is_zero() {
                return 0.0;
            }
            mesh.fine_cells_of_coarse(t)
                .into_iter()
                .map(|c| f.cell_load(&disc.re, mesh.fine(), c).iter().sum::<f64>())
                .sum()
        })
        .collect()
}

/// Closest face field to `sigma_bar` (unweighted least squares) that is
/// exactly conservative: `Σ_F θ_{T,F} σ_F = ∫_T f` on every element, with
/// Neumann faces fixed at zero.
pub fn conservative_flux(disc: &Discretization, sigma_bar: &[f64], sources: &[f64]) -> Result<Vec<f64>> {
    let fs = &disc.faces;
    let nel = fs.element_faces.len();
    let free = |fi: usize| fs.faces[fi].kind != FaceKind::Neumann;
    let mut rhs: Vec<f64> = (0..nel)
        .map(|t| sources[t] - fs.element_faces[t].iter().filter(|(fi, _)| free(*fi)).map(|&(fi, th)| th * sigma_bar[fi]).sum::<f64>())
        .collect();
    let any_dirichlet = fs.faces.iter().any(|f| f.kind == FaceKind::Dirichlet);
    // D Dᵀ: graph Laplacian of interior faces plus one per Dirichlet face
    let mut trip = TripletBuilder::new(nel, nel);
    for face in &fs.faces {
        match (face.lower, face.upper, face.kind) {
            (Some(a), Some(b), _) => {
                trip.push(a, a, 1.0);
                trip.push(b, b, 1.0);
                trip.push(a, b, -1.0);
                trip.push(b, a, -1.0);
            }
            (Some(a), None, FaceKind::Dirichlet) | (None, Some(a), FaceKind::Dirichlet) => trip.push(a, a, 1.0),
            _ => {}
        }
    }
    let y = if any_dirichlet {
        SpdSolver::new(&trip.build())?.solve_vec(&rhs)
    } else {
        let total: f64 = rhs.iter().sum();
        let scale: f64 = rhs.iter().map(|x| x.abs()).sum::<f64>() + sources.iter().map(|x| x.abs()).sum::<f64>();
        if total.abs() > 1e-12 * scale.max(1e-300) {
            return Err(Error::Infeasible(format!("sources sum to {total:e} with no Dirichlet faces")));
        }
        if nel == 1 {
            vec![0.0]
        } else {
            let full = trip.build().to_dense();
            let m = Mat::<f64>::from_fn(nel - 1, nel - 1, |i, j| full[(i + 1, j + 1)]);
            let mut b = Mat::<f64>::from_fn(nel - 1, 1, |i, _| rhs[i + 1]);
            dense_spd_solve(&m, &mut b)?;
            std::iter::once(0.0).chain((0..nel - 1).map(|i| b[(i, 0)])).collect()
        }
    };
    rhs.clear();
    Ok(fs
        .faces
        .iter()
        .enumerate()
        .map(|(fi, face)| {
            if !free(fi) {
                return 0.0;
            }
            let yl = face.lower.map_or(0.0, |t| y[t]);
            let yu = face.upper.map_or(0.0, |t| y[t]);
            sigma_bar[fi] + yl - yu
        })
        .collect())
}

/// Largest per-element conservation residual.
pub fn conservation_residual(disc: &Discretization, sigma: &[f64], sources: &[f64]) -> f64 {
    disc.faces
        .element_faces
        .iter()
        .enumerate()
        .map(|(t, ef)| (ef.iter().map(|&(fi, th)| th * sigma[fi]).sum::<f64>() - sources[t]).abs())
        .fold(0.0, f64::max)
}

fn upwind(face: &Face, th: f64, sg: f64, own: f64, s: &[f64], s_b: f64) -> f64 {
    match (face.lower, face.upper) {
        (Some(a), Some(b)) => {
            if sg >= 0.0 {
                s[a]
            } else {
                s[b]
            }
        }
        _ => {
            if th * sg > 0.0 {
                own
            } else {
                s_b
            }
        }
    }
}

/// Net outflow through the domain boundary: `(total, water)`, the water part
/// using the same upwinding as the transport step.
pub fn boundary_outflow(disc: &Discretization, s: &[f64], sigma: &[f64], s_b: f64) -> (f64, f64) {
    let fs = &disc.faces;
    let mut total = 0.0;
    let mut water = 0.0;
    for (fi, face) in fs.boundary_faces() {
        let (t, th) = match (face.lower, face.upper) {
            (Some(t), None) => (t, 1.0),
            (None, Some(t)) => (t, -1.0),
            _ => continue,
        };
        let q = th * sigma[fi];
        total += q;
        water += q * mobility(upwind(face, th, sigma[fi], s[t], s, s_b)).frac;
    }
    (total, water)
}

/// Explicit upwind update of the coarse saturation.
pub fn transport_step(disc: &Discretization, s: &[f64], sigma: &[f64], dt: f64, s_b: f64) -> Vec<f64> {
    let fs = &disc.faces;
    let vol = disc.mesh.coarse().cell_volume();
    let psi = |x: f64| mobility(x).frac;
    (0..s.len())
        .map(|t| {
            let mut div = 0.0;
            for &(fi, th) in &fs.element_faces[t] {
                let face = &fs.faces[fi];
                let sg = sigma[fi];
                if sg == 0.0 {
                    continue;
                }
                div += th * sg * psi(upwind(face, th, sg, s[t], s, s_b));
            }
            s[t] - dt / vol * div
        })
        .collect()
}

/// Pressure discretization of an upscaling run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Adaptive PG-LOD with coarse indicators.
    Lod,
    /// Fine-scale finite elements.
    FineReference,
    /// Standard coarse Q1 finite elements.
    CoarseFem,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpscalingConfig {
    pub method: Method,
    pub k: usize,
    pub tol: f64,
    pub literal_threshold: bool,
    pub steps: usize,
    pub dt: f64,
    pub s_boundary: f64,
    pub clamp_saturation: bool,
}

#[derive(Clone, Debug)]
pub struct UpscalingStep {
    pub n: usize,
    pub recomputed: Vec<usize>,
    pub indicators: Vec<ElementIndicators>,
    pub alpha: Vec<f64>,
    pub flux: Vec<f64>,
    pub saturation: Vec<f64>,
    /// Elements outside `[0, 1]` before optional clamping.
    pub violations: usize,
}

/// Total mobility per coarse element, times the fine permeability.
pub fn darcy_coefficient(disc: &Discretization, perm: &Coefficient, lambda: &[f64]) -> Result<Coefficient> {
    let mesh = &disc.mesh;
    Coefficient::new((0..mesh.fine().num_cells()).map(|c| lambda[mesh.coarse_cell_of_fine(c)] * perm.get(c)).collect())
}

/// Run the coupled pressure/transport iteration, calling `observe` after
/// every step.
pub fn run_upscaling(
    disc: &Discretization,
    perm: &Coefficient,
    s0: &[f64],
    f: &Source,
    g: &[f64],
    cfg: &UpscalingConfig,
    mut observe: impl FnMut(&UpscalingStep) -> Result<()>,
) -> Result<Vec<f64>> {
    let mesh = &disc.mesh;
    let nel = mesh.coarse().num_cells();
    if s0.len() != nel {
        return Err(config_err!("initial saturation has {} values, expected {nel}", s0.len()));
    }
    if !(cfg.dt > 0.0) {
        return Err(config_err!("time step must be positive, got {}", cfg.dt));
    }
    perm.check_mesh(mesh)?;
    let sources = element_sources(disc, f);
    let mut s = s0.to_vec();
    let mut store: Option<LaggingStore> = None;
    for n in 1..=cfg.steps {
        let lambda: Vec<f64> = s.iter().map(|&x| mobility(x).total).collect();
        let a = darcy_coefficient(disc, perm, &lambda)?;
        let input = StepInput { a: &a, mobility: Some(&lambda), f, g };
        let (sigma_bar, out) = match cfg.method {
            Method::FineReference => {
                let u = solve_fine_reference(mesh, &a, f, g)?;
                let full: Vec<f64> = u.iter().zip(g).map(|(p, q)| p + q).collect();
                (fine_preflux(disc, &a, &full), None)
            }
            Method::Lod | Method::CoarseFem => {
                let out = lod_pressure(disc, cfg, &mut store, &input, n)?;
                let st = store.as_ref().expect("store initialized");
                let sb = preflux(disc, &out.alpha, st.records.iter().map(|r| r.flux.as_ref()))?;
                (sb, Some(out))
            }
        };
        let sigma = conservative_flux(disc, &sigma_bar, &sources)?;
        let mut next = transport_step(disc, &s, &sigma, cfg.dt, cfg.s_boundary);
        let mut violations = 0;
        for (t, x) in next.iter_mut().enumerate() {
            if *x < -1e-12 || *x > 1.0 + 1e-12 {
                violations += 1;
                log::warn!("step {n}: saturation {x} out of range on element {t}");
                if cfg.clamp_saturation {
                    *x = x.clamp(0.0, 1.0);
                }
            }
        }
        s = next;
        let (recomputed, indicators, alpha) = match out {
            Some(o) => (o.recomputed, o.indicators, o.alpha),
            None => ((0..nel).collect(), vec![ElementIndicators::default(); nel], Vec::new()),
        };
        observe(&UpscalingStep { n, recomputed, indicators, alpha, flux: sigma, saturation: s.clone(), violations })?;
    }
    Ok(s)
}

fn lod_pressure(
    disc: &Discretization,
    cfg: &UpscalingConfig,
    store: &mut Option<LaggingStore>,
    input: &StepInput,
    n: usize,
) -> Result<StepOutcome> {
    match store {
        Some(st) if cfg.method == Method::Lod => st.step(disc, input, n),
        Some(st) => {
            let all: Vec<usize> = (0..disc.mesh.coarse().num_cells()).collect();
            st.recompute(disc, input, &all, n)?;
            st.step = n;
            let (system, alpha) = st.solve(disc, input)?;
            let nel = all.len();
            Ok(StepOutcome { step: n, recomputed: all, indicators: vec![ElementIndicators::default(); nel], system, alpha })
        }
        None => {
            let mut ac = match cfg.method {
                Method::CoarseFem => {
                    let mut c = AdaptiveConfig::new(0, 0.0, IndicatorMode::Coarse);
                    c.corrector = CorrectorOptions { zero_correctors: true, ..Default::default() };
                    c
                }
                _ => AdaptiveConfig::new(cfg.k, cfg.tol, IndicatorMode::Coarse),
            };
            ac.literal_threshold = cfg.literal_threshold;
            ac.flux_tables = true;
            let (st, out) = LaggingStore::init(disc, ac, input, n)?;
            *store = Some(st);
            Ok(out)
        }
    }
}

/// `sqrt(Σ_T |T| (s_T − r_T)²)`
pub fn saturation_l2_error(disc: &Discretization, s: &[f64], reference: &[f64]) -> f64 {
    let vol = disc.mesh.coarse().cell_volume();
    (s.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * vol).sqrt()
}

//! Experiment drivers and their CSV/JSON artifacts.
//!
//! `execute` produces an in-memory [`Report`]; `write_outputs` serializes it.
//! Artifacts carry no timestamps, and wall times are zero unless requested,
//! so reruns with any thread count produce identical files.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde_json::json;

use crate::adaptive::{build_records, AdaptiveConfig, LaggingStore, StepInput, StepOutcome};
use crate::config::{Experiment, Reference, Resolved, SaturationSpec, SourceSpec};
use crate::darcy::{
    boundary_outflow, conservation_residual, element_sources, run_upscaling, saturation_l2_error, Method,
    UpscalingConfig,
};
use crate::error::{config_err, Error, Result};
use crate::fem::{sample_nodal, solve_fine_reference, Coefficient, Source};
use crate::field::{checkerboard_base, sweep_coefficient, FieldSpec};
use crate::indicator::ElementIndicators;
use crate::pglod::{energy_error, l2_coarse_error};
use crate::space::Discretization;

/// Mesh, source and boundary function shared by every run of an experiment.
pub struct Problem {
    pub disc: Discretization,
    pub f: Source,
    pub g: Vec<f64>,
}

impl Problem {
    pub fn new(r: &Resolved) -> Result<Self> {
        let mesh = r.mesh.build()?;
        let fine = mesh.fine();
        let f = match r.source {
            SourceSpec::Zero => Source::zero(&mesh),
            SourceSpec::Constant { value } => Source::Cellwise(vec![value; fine.num_cells()]),
        };
        let b = &r.boundary;
        let (lo, hi) = (fine.lo()[b.axis], fine.hi()[b.axis]);
        let g = sample_nodal(fine, |x| b.at_lo + (b.at_hi - b.at_lo) * (x[b.axis] - lo) / (hi - lo));
        Ok(Self { disc: Discretization::new(mesh), f, g })
    }

    fn input<'a>(&'a self, a: &'a Coefficient, mobility: Option<&'a [f64]>) -> StepInput<'a> {
        StepInput { a, mobility, f: &self.f, g: &self.g }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KconvRow {
    pub k: usize,
    pub energy: f64,
    pub l2_coarse: f64,
    /// Coarse nodal values of the full solution.
    pub coarse_solution: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRow {
    pub n: i64,
    pub recomputed: Vec<usize>,
    pub fraction: f64,
    pub energy: Option<f64>,
    pub l2_coarse: Option<f64>,
    pub wall_ms: f64,
    pub indicators: Vec<ElementIndicators>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRun {
    pub tol: f64,
    pub k: usize,
    pub rows: Vec<StepRow>,
}

impl SweepRun {
    pub fn mean_fraction(&self) -> f64 {
        self.rows.iter().map(|r| r.fraction).sum::<f64>() / self.rows.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DarcyRow {
    pub step: StepRow,
    pub sat_min: f64,
    pub sat_max: f64,
    /// Largest per-element conservation residual, relative to the mean |σ|.
    pub conservation: f64,
    /// Boundary outflow minus total source, relative to the boundary |σ| sum.
    pub global_balance: f64,
    /// Discrete water mass balance of the transport step, relative.
    pub mass_balance: f64,
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DarcyRun {
    pub label: String,
    pub method: Method,
    pub k: usize,
    pub tol: f64,
    pub rows: Vec<DarcyRow>,
    pub dumps: Vec<(usize, Vec<f64>)>,
    pub final_saturation: Vec<f64>,
    pub final_flux: Vec<f64>,
    pub final_alpha: Vec<f64>,
}

impl DarcyRun {
    pub fn mean_fraction(&self) -> f64 {
        self.rows.iter().map(|r| r.step.fraction).sum::<f64>() / self.rows.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub sat_l2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Report {
    Kconv(Vec<KconvRow>),
    Sweep(Vec<SweepRun>),
    Darcy { runs: Vec<DarcyRun>, comparisons: Vec<Comparison> },
}

fn adaptive_config(r: &Resolved, k: usize, tol: f64) -> AdaptiveConfig {
    let mut c = AdaptiveConfig::new(k, tol, r.indicator_mode);
    c.literal_threshold = r.literal_threshold;
    c.corrector.include_rhs_correction = r.include_rhs_correction;
    c
}

fn wants_fine(r: &Resolved) -> bool {
    r.reference.contains(&Reference::FineFem)
}

pub fn execute(r: &Resolved) -> Result<Report> {
    let p = Problem::new(r)?;
    match r.experiment {
        Experiment::Kconv | Experiment::SingleSolve => kconv(r, &p).map(Report::Kconv),
        Experiment::TolSweep => tol_sweep(r, &p).map(Report::Sweep),
        Experiment::Darcy2d | Experiment::Darcy3d => darcy(r, &p),
    }
}

fn coarse_values(p: &Problem, alpha: &[f64]) -> Vec<f64> {
    let mesh = &p.disc.mesh;
    alpha.iter().enumerate().map(|(z, a)| a + p.g[mesh.fine_node_of_coarse(z)]).collect()
}

fn kconv(r: &Resolved, p: &Problem) -> Result<Vec<KconvRow>> {
    let a = r.field.generate(&p.disc.mesh)?;
    let u_h = if wants_fine(r) { Some(solve_fine_reference(&p.disc.mesh, &a, &p.f, &p.g)?) } else { None };
    let mut rows = Vec::new();
    for &k in &r.k {
        let mut cfg = adaptive_config(r, k, 0.0);
        cfg.retain_correctors = true;
        let (store, out) = LaggingStore::init(&p.disc, cfg, &p.input(&a, None), 0)?;
        let (energy, l2_coarse) = match &u_h {
            Some(u_h) => {
                let u_hat = store.reconstruct(&p.disc, &out.alpha)?;
                (energy_error(&p.disc, &a, u_h, &p.g, &u_hat), l2_coarse_error(&p.disc, u_h, &p.g, &out.alpha))
            }
            None => (f64::NAN, f64::NAN),
        };
        log::info!("k={k}: energy error {energy:e}, coarse L2 error {l2_coarse:e}");
        rows.push(KconvRow { k, energy, l2_coarse, coarse_solution: coarse_values(p, &out.alpha) });
    }
    Ok(rows)
}

fn sweep_seed(field: &FieldSpec) -> Result<u64> {
    match field {
        FieldSpec::CheckerboardBase { seed } | FieldSpec::Sweep { seed, .. } => Ok(*seed),
        _ => Err(config_err!("tol_sweep needs a checkerboard_base or sweep field")),
    }
}

fn tol_sweep(r: &Resolved, p: &Problem) -> Result<Vec<SweepRun>> {
    let mesh = &p.disc.mesh;
    let base = checkerboard_base(mesh.fine(), sweep_seed(&r.field)?)?;
    let ns: Vec<i64> = (r.sweep.start..=r.sweep.end).collect();
    let coefs = ns.iter().map(|&n| sweep_coefficient(mesh.fine(), &base, n)).collect::<Result<Vec<_>>>()?;
    let refs = if wants_fine(r) {
        Some(coefs.iter().map(|a| solve_fine_reference(mesh, a, &p.f, &p.g)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let k = r.k[0];
    let mut base_cfg = adaptive_config(r, k, r.tol[0]);
    base_cfg.retain_correctors = refs.is_some() || base_cfg.retain_correctors;
    let cfgs: Vec<AdaptiveConfig> = r.tol.iter().map(|&tol| AdaptiveConfig { tol, ..base_cfg.clone() }).collect();
    let row = |i: usize, store: &LaggingStore, out: StepOutcome, wall_ms: f64| -> Result<StepRow> {
        let (energy, l2_coarse) = match &refs {
            Some(refs) => {
                let u_hat = store.reconstruct(&p.disc, &out.alpha)?;
                (
                    Some(energy_error(&p.disc, &coefs[i], &refs[i], &p.g, &u_hat)),
                    Some(l2_coarse_error(&p.disc, &refs[i], &p.g, &out.alpha)),
                )
            }
            None => (None, None),
        };
        Ok(StepRow {
            n: ns[i],
            fraction: out.recomputed_fraction(),
            recomputed: out.recomputed,
            energy,
            l2_coarse,
            wall_ms,
            indicators: out.indicators,
        })
    };
    let mut rows: Vec<Vec<StepRow>> = vec![Vec::new(); cfgs.len()];
    if r.record_wall_time {
        // one run at a time so each step's timing is its own
        for (j, cfg) in cfgs.iter().enumerate() {
            let mut store: Option<LaggingStore> = None;
            for (i, a) in coefs.iter().enumerate() {
                let clock = Instant::now();
                let input = p.input(a, None);
                let out = match store.as_mut() {
                    None => {
                        let (st, out) = LaggingStore::init(&p.disc, cfg.clone(), &input, i)?;
                        store = Some(st);
                        out
                    }
                    Some(st) => st.step(&p.disc, &input, i)?,
                };
                let wall_ms = clock.elapsed().as_secs_f64() * 1e3;
                rows[j].push(row(i, store.as_ref().expect("store initialized"), out, wall_ms)?);
            }
        }
    } else {
        // Runs differ only in tol, so a record built for element t at step i
        // is the same in every run. Build each one once and hand out copies.
        let nel = mesh.coarse().num_cells();
        let mut stores = Vec::with_capacity(cfgs.len());
        for (i, a) in coefs.iter().enumerate() {
            let input = p.input(a, None);
            if i == 0 {
                let all: Vec<usize> = (0..nel).collect();
                let records = build_records(&p.disc, &base_cfg, &input, &all, i)?;
                for (j, cfg) in cfgs.iter().enumerate() {
                    let (st, out) = LaggingStore::init_with(&p.disc, cfg.clone(), &input, i, records.clone())?;
                    rows[j].push(row(i, &st, out, 0.0)?);
                    stores.push(st);
                }
                continue;
            }
            let flagged = stores.iter().map(|st| st.flag(&p.disc, &input, i)).collect::<Result<Vec<_>>>()?;
            let mut union: Vec<usize> = flagged.iter().flat_map(|(_, f)| f.iter().copied()).collect();
            union.sort_unstable();
            union.dedup();
            let pool = build_records(&p.disc, &base_cfg, &input, &union, i)?;
            for (j, (st, (indicators, f))) in stores.iter_mut().zip(flagged).enumerate() {
                let fresh = f.iter().map(|t| pool[union.binary_search(t).expect("flagged element in union")].clone()).collect();
                let out = st.finish(&p.disc, &input, i, indicators, fresh)?;
                rows[j].push(row(i, st, out, 0.0)?);
            }
        }
    }
    Ok(r.tol
        .iter()
        .zip(rows)
        .map(|(&tol, rows)| {
            log::info!("TOL={tol}: mean recomputed fraction {:.4}", rows.iter().map(|r| r.fraction).sum::<f64>() / rows.len() as f64);
            SweepRun { tol, k, rows }
        })
        .collect())
}

/// Initial saturation per coarse element.
pub fn initial_saturation(r: &Resolved, disc: &Discretization) -> Vec<f64> {
    let coarse = disc.mesh.coarse();
    (0..coarse.num_cells())
        .map(|t| match &r.initial_saturation {
            SaturationSpec::Constant { value } => *value,
            SaturationSpec::Ball { center, radius, inside, outside } => {
                let m = coarse.cell_midpoint(t);
                let d2: f64 = center.iter().enumerate().map(|(a, c)| (m[a] - c) * (m[a] - c)).sum();
                if d2 <= radius * radius {
                    *inside
                } else {
                    *outside
                }
            }
        })
        .collect()
}

fn darcy_run(r: &Resolved, p: &Problem, perm: &Coefficient, s0: &[f64], method: Method, k: usize, tol: f64) -> Result<DarcyRun> {
    let disc = &p.disc;
    let label = match method {
        Method::Lod => format!("lod_k{k}_tol{tol}"),
        Method::FineReference => "fine_fem".to_string(),
        Method::CoarseFem => "coarse_fem".to_string(),
    };
    let cfg = UpscalingConfig {
        method,
        k,
        tol,
        literal_threshold: r.literal_threshold,
        steps: r.steps,
        dt: r.dt,
        s_boundary: r.s_boundary,
        clamp_saturation: r.clamp_saturation,
    };
    let sources = element_sources(disc, &p.f);
    let total_source: f64 = sources.iter().sum();
    let vol = disc.mesh.coarse().cell_volume();
    let mut prev = s0.to_vec();
    let mut rows = Vec::new();
    let mut dumps = Vec::new();
    let mut last_flux = Vec::new();
    let mut last_alpha = Vec::new();
    let mut clock = Instant::now();
    let final_s = run_upscaling(disc, perm, s0, &p.f, &p.g, &cfg, |st| {
        let wall_ms = if r.record_wall_time { clock.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        let mean_abs = st.flux.iter().map(|x| x.abs()).sum::<f64>() / st.flux.len().max(1) as f64;
        let conservation = conservation_residual(disc, &st.flux, &sources) / mean_abs.max(f64::MIN_POSITIVE);
        let (out_total, out_water) = boundary_outflow(disc, &prev, &st.flux, r.s_boundary);
        let bnd_abs: f64 = disc.faces.boundary_faces().map(|(fi, _)| st.flux[fi].abs()).sum();
        let global_balance = (out_total - total_source).abs() / bnd_abs.max(f64::MIN_POSITIVE);
        let dm: f64 = st.saturation.iter().zip(&prev).map(|(a, b)| (a - b) * vol).sum();
        let scale = vol * prev.iter().map(|x| x.abs()).sum::<f64>() + r.dt * bnd_abs;
        let mass_balance =
            if r.clamp_saturation && st.violations > 0 { f64::NAN } else { (dm + r.dt * out_water).abs() / scale.max(f64::MIN_POSITIVE) };
        let (sat_min, sat_max) = st.saturation.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let nel = st.saturation.len();
        rows.push(DarcyRow {
            step: StepRow {
                n: st.n as i64,
                fraction: st.recomputed.len() as f64 / nel as f64,
                recomputed: st.recomputed.clone(),
                energy: None,
                l2_coarse: None,
                wall_ms,
                indicators: st.indicators.clone(),
            },
            sat_min,
            sat_max,
            conservation,
            global_balance,
            mass_balance,
            violations: st.violations,
        });
        if r.dump_every > 0 && st.n % r.dump_every == 0 && st.n != r.steps {
            dumps.push((st.n, st.saturation.clone()));
        }
        prev.clone_from(&st.saturation);
        last_flux.clone_from(&st.flux);
        last_alpha.clone_from(&st.alpha);
        clock = Instant::now();
        Ok(())
    })?;
    dumps.push((r.steps, final_s.clone()));
    log::info!("{label}: final saturation range [{:.4}, {:.4}]", rows.last().map_or(0.0, |x| x.sat_min), rows.last().map_or(0.0, |x| x.sat_max));
    Ok(DarcyRun { label, method, k, tol, rows, dumps, final_saturation: final_s, final_flux: last_flux, final_alpha: last_alpha })
}

fn darcy(r: &Resolved, p: &Problem) -> Result<Report> {
    let perm = r.field.generate(&p.disc.mesh)?;
    let s0 = initial_saturation(r, &p.disc);
    let mut runs = Vec::new();
    for &k in &r.k {
        for &tol in &r.tol {
            runs.push(darcy_run(r, p, &perm, &s0, Method::Lod, k, tol)?);
        }
    }
    let lod = runs.len();
    if r.reference.contains(&Reference::FineFem) {
        runs.push(darcy_run(r, p, &perm, &s0, Method::FineReference, 0, 0.0)?);
    }
    if r.reference.contains(&Reference::CoarseFem) {
        runs.push(darcy_run(r, p, &perm, &s0, Method::CoarseFem, 0, 0.0)?);
    }
    let cmp = |a: &DarcyRun, b: &DarcyRun| Comparison {
        a: a.label.clone(),
        b: b.label.clone(),
        sat_l2: saturation_l2_error(&p.disc, &a.final_saturation, &b.final_saturation),
    };
    let mut comparisons = Vec::new();
    match runs.iter().find(|x| x.method == Method::FineReference) {
        Some(fine) => {
            for x in runs.iter().filter(|x| x.method != Method::FineReference) {
                comparisons.push(cmp(x, fine));
            }
        }
        None => {
            for i in 0..lod {
                for j in i + 1..lod {
                    comparisons.push(cmp(&runs[i], &runs[j]));
                }
            }
        }
    }
    Ok(Report::Darcy { runs, comparisons })
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

fn coord_header(dim: usize) -> Vec<&'static str> {
    ["x", "y", "z"][..dim].to_vec()
}

fn write_coarse_solution(path: &Path, disc: &Discretization, values: &[f64]) -> Result<()> {
    let coarse = disc.mesh.coarse();
    let d = coarse.dim();
    let mut header = vec!["node_index"];
    header.extend(coord_header(d));
    header.push("value");
    write_rows(
        path,
        &header,
        values.iter().enumerate().map(|(z, v)| {
            let x = coarse.node_coord(z);
            let mut row = vec![z.to_string()];
            row.extend(x[..d].iter().map(|&c| num(c)));
            row.push(num(*v));
            row
        }),
    )
}

fn write_steps(path: &Path, k: usize, tol: f64, rows: &[StepRow], darcy: Option<&[DarcyRow]>) -> Result<()> {
    let mut header =
        vec!["n", "TOL", "k", "recomputed_count", "recomputed_fraction", "energy_err", "l2_coarse_err", "wall_ms"];
    if darcy.is_some() {
        header.extend(["sat_min", "sat_max"]);
    }
    write_rows(
        path,
        &header,
        rows.iter().enumerate().map(|(i, s)| {
            let mut row = vec![
                s.n.to_string(),
                num(tol),
                k.to_string(),
                s.recomputed.len().to_string(),
                num(s.fraction),
                opt(s.energy),
                opt(s.l2_coarse),
                num(s.wall_ms),
            ];
            if let Some(d) = darcy {
                row.extend([num(d[i].sat_min), num(d[i].sat_max)]);
            }
            row
        }),
    )
}

fn write_masks(dir: &Path, tag: &str, rows: &[StepRow], nel: usize) -> Result<()> {
    let mut mask_rows = Vec::new();
    let mut ind_rows = Vec::new();
    for s in rows {
        let mut flag = vec![false; nel];
        for &t in &s.recomputed {
            flag[t] = true;
        }
        for t in 0..nel {
            mask_rows.push(vec![s.n.to_string(), t.to_string(), u8::from(flag[t]).to_string()]);
            let e = s.indicators.get(t).copied().unwrap_or_default();
            ind_rows.push(vec![s.n.to_string(), t.to_string(), num(e.e_u), num(e.e_f), num(e.e_g), u8::from(flag[t]).to_string()]);
        }
    }
    write_rows(&dir.join(format!("mask_{tag}.csv")), &["n", "element", "recomputed"], mask_rows)?;
    write_rows(&dir.join(format!("indicators_{tag}.csv")), &["step", "element", "e_u", "e_f", "e_g", "recomputed"], ind_rows)
}

fn write_flux(path: &Path, disc: &Discretization, sigma: &[f64]) -> Result<()> {
    let d = disc.mesh.dim();
    let mut header = vec!["face_index", "axis"];
    header.extend(["i", "j", "k"][..d].iter().copied());
    header.push("sigma");
    write_rows(
        path,
        &header,
        disc.faces.faces.iter().enumerate().map(|(fi, f)| {
            let mut row = vec![fi.to_string(), f.axis.to_string()];
            row.extend(f.position[..d].iter().map(|p| p.to_string()));
            row.push(num(sigma[fi]));
            row
        }),
    )
}

fn write_saturation(path: &Path, disc: &Discretization, s: &[f64]) -> Result<()> {
    let coarse = disc.mesh.coarse();
    let d = coarse.dim();
    let mut header = vec!["element"];
    header.extend(coord_header(d));
    header.push("saturation");
    write_rows(
        path,
        &header,
        s.iter().enumerate().map(|(t, v)| {
            let m = coarse.cell_midpoint(t);
            let mut row = vec![t.to_string()];
            row.extend(m[..d].iter().map(|&c| num(c)));
            row.push(num(*v));
            row
        }),
    )
}

/// Write every artifact of `report` into `dir`; returns the file names.
pub fn write_outputs(r: &Resolved, applied: &[String], preset: Option<&str>, report: &Report, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let p = Problem::new(r)?;
    let disc = &p.disc;
    let nel = disc.mesh.coarse().num_cells();
    match report {
        Report::Kconv(rows) => {
            write_rows(
                &dir.join("errors.csv"),
                &["k", "energy_err", "l2_coarse_err"],
                rows.iter().map(|x| vec![x.k.to_string(), num(x.energy), num(x.l2_coarse)]),
            )?;
            for x in rows {
                write_coarse_solution(&dir.join(format!("coarse_solution_k{}.csv", x.k)), disc, &x.coarse_solution)?;
            }
        }
        Report::Sweep(runs) => {
            for run in runs {
                let tag = format!("tol{}", run.tol);
                write_steps(&dir.join(format!("summary_{tag}.csv")), run.k, run.tol, &run.rows, None)?;
                write_masks(dir, &tag, &run.rows, nel)?;
            }
        }
        Report::Darcy { runs, comparisons } => {
            for run in runs {
                let tag = &run.label;
                let steps: Vec<StepRow> = run.rows.iter().map(|x| x.step.clone()).collect();
                write_steps(&dir.join(format!("summary_{tag}.csv")), run.k, run.tol, &steps, Some(&run.rows))?;
                write_rows(
                    &dir.join(format!("diagnostics_{tag}.csv")),
                    &["n", "conservation_residual", "global_balance", "mass_balance", "violations"],
                    run.rows.iter().map(|x| {
                        vec![
                            x.step.n.to_string(),
                            num(x.conservation),
                            num(x.global_balance),
                            num(x.mass_balance),
                            x.violations.to_string(),
                        ]
                    }),
                )?;
                if run.method == Method::Lod {
                    write_masks(dir, tag, &steps, nel)?;
                }
                if !run.final_alpha.is_empty() {
                    write_coarse_solution(&dir.join(format!("coarse_solution_{tag}.csv")), disc, &coarse_values(&p, &run.final_alpha))?;
                }
                write_flux(&dir.join(format!("flux_{tag}.csv")), disc, &run.final_flux)?;
                for (n, s) in &run.dumps {
                    write_saturation(&dir.join(format!("saturation_{tag}_n{n:05}.csv")), disc, s)?;
                }
            }
            write_rows(
                &dir.join("comparison.csv"),
                &["run", "against", "sat_l2_diff", "mean_recomputed_fraction"],
                comparisons.iter().map(|c| {
                    let frac = runs.iter().find(|x| x.label == c.a).map_or(f64::NAN, |x| x.mean_fraction());
                    vec![c.a.clone(), c.b.clone(), num(c.sat_l2), num(frac)]
                }),
            )?;
        }
    }
    let mut files: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != "metadata.json")
        .collect();
    files.sort();
    let meta = json!({
        "program": "lodadapt",
        "version": env!("CARGO_PKG_VERSION"),
        "preset": preset,
        "config": r,
        "applied_defaults": applied,
        "seed": r.seed,
        "files": files,
    });
    fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(files)
}

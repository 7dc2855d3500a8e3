//! Adaptive corrector recomputation over a sequence of coefficients.
//!
//! The store holds one record per coarse element: the coefficient snapshot
//! its correctors were computed with, the resulting system contribution and,
//! depending on the indicator mode, either the coarse indicator tables or the
//! correctors themselves.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corrector::{compute_element_correctors, element_contribution, CorrectorOptions, CorrectorSet, ElementContribution};
use crate::darcy::{flux_table, FluxTable};
use crate::error::{config_err, Error, Result};
use crate::fem::{Coefficient, Source};
use crate::indicator::{
    coarse_indicator_data, delta_max, evaluate_coarse, fine_indicators, mobility_delta, CoarseIndicatorData,
    ElementIndicators, IndicatorMode,
};
use crate::pglod::{assemble_global, reconstruct, solve_coarse, GlobalSystem};
use crate::space::Discretization;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub k: usize,
    pub tol: f64,
    pub mode: IndicatorMode,
    /// Threshold the squared coarse estimates instead of their roots.
    pub literal_threshold: bool,
    pub corrector: CorrectorOptions,
    /// Keep fine corrector vectors between steps (always on in fine mode).
    pub retain_correctors: bool,
    /// Build face flux tables for the Darcy driver.
    pub flux_tables: bool,
}

impl AdaptiveConfig {
    pub fn new(k: usize, tol: f64, mode: IndicatorMode) -> Self {
        Self {
            k,
            tol,
            mode,
            literal_threshold: false,
            corrector: CorrectorOptions::default(),
            retain_correctors: mode == IndicatorMode::Fine,
            flux_tables: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0) {
            return Err(config_err!("TOL must be a nonnegative number, got {}", self.tol));
        }
        if self.mode == IndicatorMode::Fine && !self.retain_correctors {
            return Err(config_err!("fine indicators need retained correctors"));
        }
        Ok(())
    }
}

/// The lagging coefficient an element's correctors were computed with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Snapshot {
    /// `Ã` on the fine cells of the patch (patch-local order).
    Cells(Vec<f64>),
    /// Lagging total mobility per patch element (Darcy runs, where
    /// `Ã = λ̃ K` and `K` is fixed).
    Mobility(Vec<f64>),
}

impl Snapshot {
    fn hash(&self) -> String {
        let (tag, v) = match self {
            Snapshot::Cells(v) => (0u8, v),
            Snapshot::Mobility(v) => (1u8, v),
        };
        let mut h = Sha256::new();
        h.update([tag]);
        for x in v {
            h.update(x.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub element: usize,
    /// Step index of the last recomputation.
    pub age: usize,
    pub snapshot: Snapshot,
    pub contribution: ElementContribution,
    pub coarse: Option<CoarseIndicatorData>,
    pub flux: Option<FluxTable>,
    pub correctors: Option<CorrectorSet>,
}

/// Current coefficient of one step. `mobility` (per coarse element) is set
/// in Darcy runs, where `a = λ K`.
#[derive(Clone, Copy)]
pub struct StepInput<'a> {
    pub a: &'a Coefficient,
    pub mobility: Option<&'a [f64]>,
    pub f: &'a Source,
    pub g: &'a [f64],
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub step: usize,
    pub recomputed: Vec<usize>,
    /// Per element, evaluated before recomputation (zeros at init).
    pub indicators: Vec<ElementIndicators>,
    pub system: GlobalSystem,
    pub alpha: Vec<f64>,
}

impl StepOutcome {
    pub fn recomputed_fraction(&self) -> f64 {
        self.recomputed.len() as f64 / self.indicators.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct LaggingStore {
    pub config: AdaptiveConfig,
    pub step: usize,
    pub records: Vec<ElementRecord>,
}

fn build_record(disc: &Discretization, cfg: &AdaptiveConfig, t: usize, input: &StepInput, step: usize) -> Result<ElementRecord> {
    let a = input.a;
    let cs = compute_element_correctors(disc, t, cfg.k, &|c| a.get(c), input.f, input.g, cfg.corrector)?;
    let contribution = element_contribution(disc, &cs);
    let coarse = match cfg.mode {
        IndicatorMode::Coarse => Some(coarse_indicator_data(disc, &cs, input.f, input.g)?),
        IndicatorMode::Fine => None,
    };
    let flux = cfg.flux_tables.then(|| flux_table(disc, &cs, &|c| a.get(c), input.g));
    let snapshot = match input.mobility {
        Some(lam) => Snapshot::Mobility(cs.patch.elements(&disc.mesh).iter().map(|&e| lam[e]).collect()),
        None => Snapshot::Cells(cs.coef.clone()),
    };
    Ok(ElementRecord {
        element: t,
        age: step,
        snapshot,
        contribution,
        coarse,
        flux,
        correctors: cfg.retain_correctors.then_some(cs),
    })
}

/// Fresh records of `elements` with the current coefficient, in the given
/// order. Records depend on the configuration only through `k`, the
/// indicator mode and the corrector/flux options, not on `tol`.
pub fn build_records(
    disc: &Discretization,
    cfg: &AdaptiveConfig,
    input: &StepInput,
    elements: &[usize],
    step: usize,
) -> Result<Vec<ElementRecord>> {
    elements.par_iter().map(|&t| build_record(disc, cfg, t, input, step)).collect()
}

fn check_input(disc: &Discretization, input: &StepInput) -> Result<()> {
    input.a.check_mesh(&disc.mesh)?;
    input.f.check_mesh(&disc.mesh)?;
    if input.g.len() != disc.mesh.fine().num_nodes() {
        return Err(config_err!("boundary function has {} values, expected {}", input.g.len(), disc.mesh.fine().num_nodes()));
    }
    if let Some(m) = input.mobility {
        if m.len() != disc.mesh.coarse().num_cells() || m.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(config_err!("mobility must hold one positive value per coarse element"));
        }
    }
    Ok(())
}

impl LaggingStore {
    /// Compute all correctors with the first coefficient and solve.
    pub fn init(disc: &Discretization, config: AdaptiveConfig, input: &StepInput, step: usize) -> Result<(Self, StepOutcome)> {
        config.validate()?;
        check_input(disc, input)?;
        let nel = disc.mesh.coarse().num_cells();
        let records = build_records(disc, &config, input, &(0..nel).collect::<Vec<_>>(), step)?;
        Self::init_with(disc, config, input, step, records)
    }

    /// Like [`LaggingStore::init`] with records computed by the caller, one
    /// per element in element order.
    pub fn init_with(
        disc: &Discretization,
        config: AdaptiveConfig,
        input: &StepInput,
        step: usize,
        records: Vec<ElementRecord>,
    ) -> Result<(Self, StepOutcome)> {
        config.validate()?;
        check_input(disc, input)?;
        let nel = disc.mesh.coarse().num_cells();
        if records.len() != nel || records.iter().enumerate().any(|(t, r)| r.element != t) {
            return Err(Error::IncompleteState("init needs one record per element, in order".into()));
        }
        let store = Self { config, step, records };
        let (system, alpha) = store.solve(disc, input)?;
        let outcome = StepOutcome {
            step,
            recomputed: (0..nel).collect(),
            indicators: vec![ElementIndicators::default(); nel],
            system,
            alpha,
        };
        Ok((store, outcome))
    }

    /// Indicators of every element against the current coefficient.
    pub fn indicators(&self, disc: &Discretization, input: &StepInput) -> Result<Vec<ElementIndicators>> {
        self.records.par_iter().map(|r| self.element_indicators(disc, r, input)).collect()
    }

    fn element_indicators(&self, disc: &Discretization, r: &ElementRecord, input: &StepInput) -> Result<ElementIndicators> {
        let mesh = &disc.mesh;
        let a = input.a;
        match self.config.mode {
            IndicatorMode::Fine => {
                let cs = r.correctors.as_ref().ok_or_else(|| Error::Unavailable(format!("correctors of element {}", r.element)))?;
                fine_indicators(disc, cs, &|c| a.get(c), input.f, input.g)
            }
            IndicatorMode::Coarse => {
                let data = r.coarse.as_ref().ok_or_else(|| Error::Unavailable(format!("coarse tables of element {}", r.element)))?;
                let p = crate::grid::patch(mesh, r.element, self.config.k)?;
                match (&r.snapshot, input.mobility) {
                    (Snapshot::Mobility(lam_lag), Some(lam)) => {
                        let local = |e: usize| p.local_element(mesh, e).expect("element in patch");
                        let delta = |e: usize| mobility_delta(lam_lag[local(e)], lam[e]);
                        let rho = lam_lag[local(r.element)] / lam[r.element];
                        Ok(evaluate_coarse(data, &delta, rho))
                    }
                    (Snapshot::Cells(snap), _) => {
                        let mut delta = vec![0.0f64; p.num_elements()];
                        let mut rho = 0.0f64;
                        let center = p.local_element(mesh, r.element).expect("center in patch");
                        p.for_each_fine_cell(mesh, |local, global, _, cl| {
                            let (at, ac) = (snap[local], a.get(global));
                            delta[cl] = delta[cl].max(delta_max([(at, ac)]));
                            if cl == center {
                                rho = rho.max(at / ac);
                            }
                        });
                        let d = |e: usize| delta[p.local_element(mesh, e).expect("element in patch")];
                        Ok(evaluate_coarse(data, &d, rho))
                    }
                    (Snapshot::Mobility(_), None) => {
                        Err(Error::IncompleteState("mobility snapshot without current mobility".into()))
                    }
                }
            }
        }
    }

    /// One step: evaluate indicators, recompute flagged elements, solve.
    pub fn step(&mut self, disc: &Discretization, input: &StepInput, step: usize) -> Result<StepOutcome> {
        let (indicators, flagged) = self.flag(disc, input, step)?;
        let fresh = build_records(disc, &self.config, input, &flagged, step)?;
        self.finish(disc, input, step, indicators, fresh)
    }

    /// First half of [`LaggingStore::step`]: indicators of every element and
    /// the elements that exceed the tolerance.
    pub fn flag(&self, disc: &Discretization, input: &StepInput, step: usize) -> Result<(Vec<ElementIndicators>, Vec<usize>)> {
        check_input(disc, input)?;
        if step < self.step {
            return Err(config_err!("step {step} precedes the store step {}", self.step));
        }
        let indicators = self.indicators(disc, input)?;
        let flagged = indicators
            .iter()
            .enumerate()
            .filter(|(_, e)| e.exceeds(self.config.tol, self.config.literal_threshold))
            .map(|(t, _)| t)
            .collect();
        Ok((indicators, flagged))
    }

    /// Second half of [`LaggingStore::step`]: install the fresh records of
    /// the flagged elements and solve.
    pub fn finish(
        &mut self,
        disc: &Discretization,
        input: &StepInput,
        step: usize,
        indicators: Vec<ElementIndicators>,
        fresh: Vec<ElementRecord>,
    ) -> Result<StepOutcome> {
        let recomputed: Vec<usize> = fresh.iter().map(|r| r.element).collect();
        for r in fresh {
            let t = r.element;
            self.records[t] = r;
        }
        self.step = step;
        let (system, alpha) = self.solve(disc, input)?;
        Ok(StepOutcome { step, recomputed, indicators, system, alpha })
    }

    /// Recompute the given elements with the current coefficient.
    pub fn recompute(&mut self, disc: &Discretization, input: &StepInput, elements: &[usize], step: usize) -> Result<()> {
        let fresh = build_records(disc, &self.config, input, elements, step)?;
        for r in fresh {
            let t = r.element;
            self.records[t] = r;
        }
        Ok(())
    }

    /// Assemble the mixed-age system with the current true coefficient and
    /// solve it.
    pub fn solve(&self, disc: &Discretization, input: &StepInput) -> Result<(GlobalSystem, Vec<f64>)> {
        let sys = assemble_global(disc, self.records.iter().map(|r| &r.contribution), input.a, input.f, input.g)?;
        let alpha = solve_coarse(disc, &sys)?;
        Ok((sys, alpha))
    }

    /// Fine reconstruction; needs retained correctors.
    pub fn reconstruct(&self, disc: &Discretization, alpha: &[f64]) -> Result<Vec<f64>> {
        let sets = self
            .records
            .iter()
            .map(|r| r.correctors.as_ref().ok_or_else(|| Error::Unavailable(format!("correctors of element {} were not retained", r.element))))
            .collect::<Result<Vec<_>>>()?;
        reconstruct(disc, alpha, sets)
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest { config: self.config.clone(), step: self.step, elements: self.records.len() };
        fs::write(dir.join("store.json"), serde_json::to_vec_pretty(&manifest)?)?;
        for r in &self.records {
            let entry = CheckpointEntry { snapshot_hash: r.snapshot.hash(), record: r.clone() };
            fs::write(dir.join(format!("element_{:06}.json", r.element)), serde_json::to_vec(&entry)?)?;
        }
        Ok(())
    }

    pub fn load_checkpoint(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("store.json"))?)?;
        let mut records = Vec::with_capacity(manifest.elements);
        for t in 0..manifest.elements {
            let path = dir.join(format!("element_{t:06}.json"));
            let bytes = fs::read(&path).map_err(|e| Error::IncompleteState(format!("{}: {e}", path.display())))?;
            let entry: CheckpointEntry = serde_json::from_slice(&bytes)?;
            if entry.record.element != t {
                return Err(Error::Format(format!("{} holds element {}", path.display(), entry.record.element)));
            }
            if entry.record.snapshot.hash() != entry.snapshot_hash {
                return Err(Error::Format(format!("{}: coefficient snapshot hash mismatch", path.display())));
            }
            records.push(entry.record);
        }
        Ok(Self { config: manifest.config, step: manifest.step, records })
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: AdaptiveConfig,
    step: usize,
    elements: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    snapshot_hash: String,
    record: ElementRecord,
}

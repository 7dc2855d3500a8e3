//! Global Petrov-Galerkin coarse system: assembly from element
//! contributions, direct solve, and fine-scale reconstruction.

use crate::corrector::{CorrectorSet, ElementContribution};
use crate::error::{Error, Result};
use crate::fem::{gather, l2_sq_on, norms, prolong, Coefficient, Source};
use crate::interp::interpolate;
use crate::linalg::{sparse_matvec, LuSolver, SparseMat, TripletBuilder};
use crate::space::Discretization;

/// Numbering of the non-Dirichlet coarse nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseDofs {
    pub nodes: Vec<usize>,
    pub dof_of_node: Vec<Option<usize>>,
}

impl CoarseDofs {
    pub fn new(disc: &Discretization) -> Self {
        let mesh = &disc.mesh;
        let mut nodes = Vec::new();
        let mut dof_of_node = vec![None; mesh.coarse().num_nodes()];
        for (z, slot) in dof_of_node.iter_mut().enumerate() {
            if !mesh.coarse_node_is_dirichlet(z) {
                *slot = Some(nodes.len());
                nodes.push(z);
            }
        }
        Self { nodes, dof_of_node }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct GlobalSystem {
    pub dofs: CoarseDofs,
    pub matrix: SparseMat,
    pub rhs: Vec<f64>,
}

/// `(f, φ_i)_T − (A grad g, grad φ_i)_T` for the corners of `T`.
pub fn true_load_terms(disc: &Discretization, a: &Coefficient, f: &Source, g: &[f64], t: usize) -> [f64; 8] {
    let mesh = &disc.mesh;
    let n = disc.corners();
    let mut out = [0.0; 8];
    let mut w = [0.0; 8];
    let f_zero = f.is_zero();
    for cell in mesh.fine_cells_of_coarse(t) {
        let off = disc.basis.offset_index(mesh.fine().cell_multi(cell));
        let gl = gather(mesh.fine(), cell, g);
        disc.re.stiff_apply(&gl[..n], &mut w[..n]);
        let ac = a.get(cell);
        let load = if f_zero { [0.0; 8] } else { f.cell_load(&disc.re, mesh.fine(), cell) };
        for (cc, o) in out.iter_mut().enumerate().take(n) {
            let phi = disc.basis.values(off, cc);
            *o += (0..n).map(|c| phi[c] * (load[c] - ac * w[c])).sum::<f64>();
        }
    }
    out
}

/// Sum the stored lagging blocks and the fresh true-coefficient terms.
/// Contributions may arrive in any order; the sum is always formed in
/// element order.
pub fn assemble_global<'a>(
    disc: &Discretization,
    contribs: impl IntoIterator<Item = &'a ElementContribution>,
    a: &Coefficient,
    f: &Source,
    g: &[f64],
) -> Result<GlobalSystem> {
    let mesh = &disc.mesh;
    let nel = mesh.coarse().num_cells();
    let mut by_element: Vec<Option<&ElementContribution>> = vec![None; nel];
    for c in contribs {
        let slot = by_element
            .get_mut(c.element)
            .ok_or_else(|| Error::IncompleteState(format!("contribution for unknown element {}", c.element)))?;
        if slot.is_some() {
            return Err(Error::IncompleteState(format!("duplicate contribution for element {}", c.element)));
        }
        *slot = Some(c);
    }
    let dofs = CoarseDofs::new(disc);
    let nd = dofs.len();
    let mut trip = TripletBuilder::new(nd, nd);
    let mut rhs = vec![0.0; nd];
    for (t, c) in by_element.iter().enumerate() {
        let c = c.ok_or_else(|| Error::IncompleteState(format!("missing contribution for element {t}")))?;
        let nb = c.cols.len();
        for (r, &zi) in c.rows.iter().enumerate() {
            let Some(i) = dofs.dof_of_node[zi] else { continue };
            for (jj, &zj) in c.cols.iter().enumerate() {
                if let Some(j) = dofs.dof_of_node[zj] {
                    trip.push(i, j, c.k_block[r * nb + jj]);
                }
            }
            rhs[i] += c.b_block[r];
        }
        let tl = true_load_terms(disc, a, f, g, t);
        let nodes = mesh.coarse().cell_nodes(t);
        for cc in 0..disc.corners() {
            if let Some(i) = dofs.dof_of_node[nodes[cc]] {
                rhs[i] += tl[cc];
            }
        }
    }
    Ok(GlobalSystem { dofs, matrix: trip.build(), rhs })
}

/// Solve for the coarse coefficients `α` (coarse nodal vector, zero on
/// Dirichlet nodes).
pub fn solve_coarse(disc: &Discretization, sys: &GlobalSystem) -> Result<Vec<f64>> {
    if sys.dofs.is_empty() {
        return Ok(vec![0.0; disc.mesh.coarse().num_nodes()]);
    }
    if !disc.mesh.has_dirichlet() {
        return Err(Error::SolverFailure("no Dirichlet boundary: the coarse system is singular".into()));
    }
    let x = LuSolver::new(&sys.matrix)
        .map_err(|e| Error::SolverFailure(format!("coarse system: {e}; the patch size k may be too small for this contrast")))?
        .solve_vec(&sys.rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure("coarse system is singular; the patch size k may be too small for this contrast".into()));
    }
    let kx = sparse_matvec(&sys.matrix, &x);
    let res = kx.iter().zip(&sys.rhs).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let bn = sys.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if res > 1e-10 * bn.max(f64::MIN_POSITIVE) {
        log::warn!("coarse solve residual {res:e} relative to |b| = {bn:e}");
    }
    let mut alpha = vec![0.0; disc.mesh.coarse().num_nodes()];
    for (d, &z) in sys.dofs.nodes.iter().enumerate() {
        alpha[z] = x[d];
    }
    Ok(alpha)
}

/// `û = Σ α_i (φ_i − Q̃φ_i) + R̃f − Q̃g` on the fine nodes (the part in `V`;
/// the physical solution adds `g`).
pub fn reconstruct<'a>(
    disc: &Discretization,
    alpha: &[f64],
    sets: impl IntoIterator<Item = &'a CorrectorSet>,
) -> Result<Vec<f64>> {
    let mesh = &disc.mesh;
    let mut u = prolong(mesh, alpha);
    let mut seen = vec![false; mesh.coarse().num_cells()];
    for cs in sets {
        if std::mem::replace(&mut seen[cs.element], true) {
            return Err(Error::IncompleteState(format!("duplicate correctors for element {}", cs.element)));
        }
        for (j, &z) in cs.basis_nodes.iter().enumerate() {
            cs.scatter_add(mesh, &cs.q[j], -alpha[z], &mut u);
        }
        cs.scatter_add(mesh, &cs.r_f, 1.0, &mut u);
        cs.scatter_add(mesh, &cs.q_g, -1.0, &mut u);
    }
    if let Some(t) = seen.iter().position(|&s| !s) {
        return Err(Error::Unavailable(format!("correctors of element {t} were not retained")));
    }
    Ok(u)
}

/// Relative errors against a fine reference `u_h` (both without `g`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMeasures {
    /// `|u_h − û|_A / |u_h + g|_A`
    pub energy: f64,
    /// `‖I_H u_h − α‖_{L2} / ‖u_h + g‖_{L2}`
    pub l2_coarse: f64,
}

pub fn energy_error(disc: &Discretization, a: &Coefficient, u_h: &[f64], g: &[f64], u_hat: &[f64]) -> f64 {
    let diff: Vec<f64> = u_h.iter().zip(u_hat).map(|(p, q)| p - q).collect();
    let full: Vec<f64> = u_h.iter().zip(g).map(|(p, q)| p + q).collect();
    let den = norms(&disc.mesh, a, &full).energy;
    norms(&disc.mesh, a, &diff).energy / den
}

pub fn l2_coarse_error(disc: &Discretization, u_h: &[f64], g: &[f64], alpha: &[f64]) -> f64 {
    let mesh = &disc.mesh;
    let ih = interpolate(mesh, &disc.stencil, u_h);
    let diff: Vec<f64> = ih.iter().zip(alpha).map(|(p, q)| p - q).collect();
    let full: Vec<f64> = u_h.iter().zip(g).map(|(p, q)| p + q).collect();
    let cells = 0..mesh.fine().num_cells();
    let num = l2_sq_on(mesh, &prolong(mesh, &diff), cells.clone()).max(0.0).sqrt();
    num / l2_sq_on(mesh, &full, cells).max(0.0).sqrt()
}

//! Localized element correctors and their contributions to the global
//! Petrov-Galerkin system.
//!
//! For an element `T` with patch `U = U_k(T)` and lagging coefficient `Ã`,
//! each corrector `q` lies in the fine space of `U` (zero on fixed nodes and
//! in the kernel of `I_H`) and solves `(Ã grad q, grad w)_U = rhs(w)` for all
//! such `w`. The kernel condition is enforced with Lagrange multipliers,
//! eliminated through the Schur complement of the patch stiffness.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::fem::{gather, Source};
use crate::grid::{classify_fine_dofs, patch, MeshPair, Patch, MAX_DIM};
use crate::interp::kernel_constraints;
use crate::linalg::{dense_spd_solve, SpdSolver};
use crate::space::Discretization;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorOptions {
    /// Compute `R f`; when off it is taken as zero.
    pub include_rhs_correction: bool,
    /// Skip the corrector solves entirely (standard coarse FEM).
    pub zero_correctors: bool,
}

impl Default for CorrectorOptions {
    fn default() -> Self {
        Self { include_rhs_correction: true, zero_correctors: false }
    }
}

/// Correctors of one element, stored as patch-local nodal vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorSet {
    pub element: usize,
    pub k: usize,
    pub patch: Patch,
    /// Non-Dirichlet corners of `T` (corner-bit order) and their global nodes.
    pub basis_corners: Vec<usize>,
    pub basis_nodes: Vec<usize>,
    /// Non-Dirichlet coarse nodes in the closure of the patch.
    pub patch_nodes: Vec<usize>,
    /// `Q̃ φ_j` for each basis corner.
    pub q: Vec<Vec<f64>>,
    /// `R̃ f`.
    pub r_f: Vec<f64>,
    /// `Q̃ g`.
    pub q_g: Vec<f64>,
    /// Lagging coefficient on the patch fine cells (patch-local order).
    pub coef: Vec<f64>,
}

/// Per fine cell of a patch, everything needed to evaluate corrector-based
/// integrands.
pub struct CellView<'a> {
    pub local: usize,
    pub global: usize,
    /// Patch-local index of the coarse element containing the cell.
    pub coarse_local: usize,
    pub in_center: bool,
    pub offset: usize,
    pub corners: &'a [usize],
    pub coef: f64,
}

impl CorrectorSet {
    pub fn nbasis(&self) -> usize {
        self.basis_corners.len()
    }

    /// Visit each fine cell of the patch.
    pub fn for_each_cell(&self, disc: &Discretization, mut f: impl FnMut(&CellView)) {
        let mesh = &disc.mesh;
        let center_local = self.patch.local_element(mesh, self.element).expect("center in patch");
        self.patch.for_each_fine_cell(mesh, |local, global, corners, coarse_local| {
            let view = CellView {
                local,
                global,
                coarse_local,
                in_center: coarse_local == center_local,
                offset: disc.basis.offset_index(mesh.fine().cell_multi(global)),
                corners,
                coef: self.coef[local],
            };
            f(&view);
        });
    }

    /// Corner values on a cell of `χ_T φ_j − Q̃ φ_j` for basis index `j`.
    #[inline]
    pub fn psi_basis(&self, disc: &Discretization, v: &CellView, j: usize, out: &mut [f64]) {
        let q = &self.q[j];
        if v.in_center {
            let phi = disc.basis.values(v.offset, self.basis_corners[j]);
            for (c, &n) in v.corners.iter().enumerate() {
                out[c] = phi[c] - q[n];
            }
        } else {
            for (c, &n) in v.corners.iter().enumerate() {
                out[c] = -q[n];
            }
        }
    }

    /// Corner values of `χ_T g − Q̃ g`, with `g` given on global fine nodes.
    #[inline]
    pub fn psi_g(&self, disc: &Discretization, v: &CellView, g: &[f64], out: &mut [f64]) {
        if v.in_center {
            let gl = gather(disc.mesh.fine(), v.global, g);
            for (c, &n) in v.corners.iter().enumerate() {
                out[c] = gl[c] - self.q_g[n];
            }
        } else {
            for (c, &n) in v.corners.iter().enumerate() {
                out[c] = -self.q_g[n];
            }
        }
    }

    /// Corner values of `R̃ f`.
    #[inline]
    pub fn psi_f(&self, v: &CellView, out: &mut [f64]) {
        for (c, &n) in v.corners.iter().enumerate() {
            out[c] = self.r_f[n];
        }
    }

    /// Scatter-add `scale * vec` (patch-local) into a global fine vector.
    pub fn scatter_add(&self, mesh: &MeshPair, vec: &[f64], scale: f64, out: &mut [f64]) {
        if scale == 0.0 {
            return;
        }
        for (l, &v) in vec.iter().enumerate() {
            if v != 0.0 {
                out[self.patch.global_fine_node(mesh, l)] += scale * v;
            }
        }
    }
}

/// Compute all correctors of element `t` on its `k`-layer patch with the
/// lagging coefficient `coef` (indexed by global fine cell).
pub fn compute_element_correctors(
    disc: &Discretization,
    t: usize,
    k: usize,
    coef: &dyn Fn(usize) -> f64,
    f: &Source,
    g: &[f64],
    opts: CorrectorOptions,
) -> Result<CorrectorSet> {
    let mesh = &disc.mesh;
    let p = patch(mesh, t, k)?;
    let part = classify_fine_dofs(mesh, &p);
    let coarse = mesh.coarse();
    let t_nodes = coarse.cell_nodes(t);
    let basis_corners: Vec<usize> =
        (0..coarse.num_corners()).filter(|&c| !mesh.coarse_node_is_dirichlet(t_nodes[c])).collect();
    let basis_nodes: Vec<usize> = basis_corners.iter().map(|&c| t_nodes[c]).collect();
    let nb = basis_corners.len();
    let nloc = p.num_fine_nodes();
    let n = disc.corners();

    let mut local_coef = vec![0.0; p.num_fine_cells()];
    p.for_each_fine_cell(mesh, |local, global, _, _| local_coef[local] = coef(global));

    let mut cs = CorrectorSet {
        element: t,
        k,
        patch: p,
        basis_corners,
        basis_nodes,
        patch_nodes: part.constrained_coarse.clone(),
        q: vec![vec![0.0; nloc]; nb],
        r_f: vec![0.0; nloc],
        q_g: vec![0.0; nloc],
        coef: local_coef,
    };
    if opts.zero_correctors {
        return Ok(cs);
    }
    let nfree = part.num_free();
    if nfree == 0 {
        return Ok(cs);
    }
    let with_f = opts.include_rhs_correction && !f.is_zero();

    // Right-hand sides: columns are the basis corners, then g, then f.
    let nrhs = nb + 2;
    let mut rhs = Mat::<f64>::zeros(nfree, nrhs);
    let mut w = [0.0; 8];
    cs.for_each_cell(disc, |v| {
        if !v.in_center {
            return;
        }
        for j in 0..nb {
            disc.re.stiff_apply(disc.basis.values(v.offset, cs.basis_corners[j]), &mut w[..n]);
            for c in 0..n {
                if let Some(d) = part.dof_of_node[v.corners[c]] {
                    rhs[(d, j)] += v.coef * w[c];
                }
            }
        }
        let gl = gather(mesh.fine(), v.global, g);
        disc.re.stiff_apply(&gl[..n], &mut w[..n]);
        let load = if with_f { f.cell_load(&disc.re, mesh.fine(), v.global) } else { [0.0; 8] };
        for c in 0..n {
            if let Some(d) = part.dof_of_node[v.corners[c]] {
                rhs[(d, nb)] += v.coef * w[c];
                rhs[(d, nb + 1)] += load[c];
            }
        }
    });

    let kmat = crate::fem::assemble_stiffness(mesh, &cs.patch, coef, &part)?;
    let solver = SpdSolver::cached(&disc.symbolic, &kmat)?;
    let mut x = rhs;
    solver.solve_in_place(&mut x);

    let cmat = kernel_constraints(mesh, &disc.stencil, &cs.patch, &part);
    let m = cmat.nrows();
    if m > 0 {
        let mut y = Mat::<f64>::zeros(nfree, m);
        for (r, row) in cmat.rows.iter().enumerate() {
            for &(j, wv) in row {
                y[(j, r)] = wv;
            }
        }
        solver.solve_in_place(&mut y);
        let s = Mat::<f64>::from_fn(m, m, |a, b| cmat.rows[a].iter().map(|&(j, wv)| wv * y[(j, b)]).sum());
        let s = Mat::<f64>::from_fn(m, m, |a, b| 0.5 * (s[(a, b)] + s[(b, a)]));
        let mut lam = Mat::<f64>::from_fn(m, nrhs, |a, c| cmat.rows[a].iter().map(|&(j, wv)| wv * x[(j, c)]).sum());
        dense_spd_solve(&s, &mut lam).map_err(|_| {
            config_err!("kernel constraints of element {t} are rank deficient on its patch (k = {k})")
        })?;
        x -= &y * &lam;
    }

    for (d, &l) in part.free.iter().enumerate() {
        for j in 0..nb {
            cs.q[j][l] = x[(d, j)];
        }
        cs.q_g[l] = x[(d, nb)];
        if with_f {
            cs.r_f[l] = x[(d, nb + 1)];
        }
    }
    Ok(cs)
}

/// Dense `K_T` block and lagging load part `b̃_T` of one element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementContribution {
    pub element: usize,
    /// Global coarse nodes (test functions), non-Dirichlet.
    pub rows: Vec<usize>,
    /// Global coarse nodes of `T` (trial functions), non-Dirichlet.
    pub cols: Vec<usize>,
    /// Row-major `rows x cols`.
    pub k_block: Vec<f64>,
    pub b_block: Vec<f64>,
}

/// Map from the coarse nodes of a patch closure to the row index among the
/// non-Dirichlet patch nodes.
fn patch_row_map(mesh: &MeshPair, cs: &CorrectorSet) -> (Vec<Option<usize>>, [usize; MAX_DIM]) {
    let plo = cs.patch.coarse_lo();
    let ext = cs.patch.coarse_extent();
    let mut counts = [1; MAX_DIM];
    for a in 0..mesh.dim() {
        counts[a] = ext[a] + 1;
    }
    let mut map = vec![None; counts.iter().product()];
    for (r, &z) in cs.patch_nodes.iter().enumerate() {
        let zm = mesh.coarse().node_multi(z);
        let l = (zm[0] - plo[0]) + counts[0] * ((zm[1] - plo[1]) + counts[1] * (zm[2] - plo[2]));
        map[l] = Some(r);
    }
    (map, counts)
}

/// Both stiffness and load contributions, computed in one pass over the patch.
pub fn element_contribution(disc: &Discretization, cs: &CorrectorSet) -> ElementContribution {
    let mesh = &disc.mesh;
    let n = disc.corners();
    let nb = cs.nbasis();
    let nr = cs.patch_nodes.len();
    let (map, counts) = patch_row_map(mesh, cs);
    let pext = cs.patch.coarse_extent();
    let mut k_block = vec![0.0; nr * nb];
    let mut b_block = vec![0.0; nr];
    let mut psi = [0.0; 8];
    let mut w = [0.0; 8];
    let mut rows_of_corner = [None; 8];
    let mut last_coarse = usize::MAX;
    cs.for_each_cell(disc, |v| {
        if v.coarse_local != last_coarse {
            last_coarse = v.coarse_local;
            let cl = v.coarse_local;
            let tm = [cl % pext[0], (cl / pext[0]) % pext[1], cl / (pext[0] * pext[1])];
            for (cc, slot) in rows_of_corner.iter_mut().enumerate().take(n) {
                let off = mesh.coarse().corner_offset(cc);
                let l = (tm[0] + off[0]) + counts[0] * ((tm[1] + off[1]) + counts[1] * (tm[2] + off[2]));
                *slot = map[l];
            }
        }
        for j in 0..nb {
            cs.psi_basis(disc, v, j, &mut psi[..n]);
            disc.re.stiff_apply(&psi[..n], &mut w[..n]);
            for cc in 0..n {
                if let Some(r) = rows_of_corner[cc] {
                    let phi = disc.basis.values(v.offset, cc);
                    let s: f64 = (0..n).map(|c| phi[c] * w[c]).sum();
                    k_block[r * nb + j] += v.coef * s;
                }
            }
        }
        for c in 0..n {
            psi[c] = cs.q_g[v.corners[c]] - cs.r_f[v.corners[c]];
        }
        if psi[..n].iter().any(|&x| x != 0.0) {
            disc.re.stiff_apply(&psi[..n], &mut w[..n]);
            for cc in 0..n {
                if let Some(r) = rows_of_corner[cc] {
                    let phi = disc.basis.values(v.offset, cc);
                    b_block[r] += v.coef * (0..n).map(|c| phi[c] * w[c]).sum::<f64>();
                }
            }
        }
    });
    ElementContribution {
        element: cs.element,
        rows: cs.patch_nodes.clone(),
        cols: cs.basis_nodes.clone(),
        k_block,
        b_block,
    }
}

/// `K_T` alone.
pub fn stiffness_contribution(disc: &Discretization, cs: &CorrectorSet) -> Vec<f64> {
    element_contribution(disc, cs).k_block
}

/// `b̃_T` alone: `−(Ã grad R̃f, grad φ_i) + (Ã grad Q̃g, grad φ_i)`.
pub fn load_contribution(disc: &Discretization, cs: &CorrectorSet) -> Vec<f64> {
    element_contribution(disc, cs).b_block
}

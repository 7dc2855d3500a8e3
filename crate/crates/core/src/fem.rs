//! Q1 finite elements on the fine grid: element matrices, assembly on patches,
//! the fine reference solve and norms.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::grid::{classify_fine_dofs, patch, DofPartition, Grid, MeshPair, Patch, MAX_DIM};
use crate::linalg::{SpdSolver, SparseMat, TripletBuilder};

/// A strictly positive scalar field, one value per fine cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    values: Vec<f64>,
    min: f64,
    max: f64,
}

impl Coefficient {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(config_err!("coefficient has no values"));
        }
        let mut min = f64::INFINITY;
        let mut max = 0.0f64;
        for (i, &v) in values.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err!("coefficient value {v} at cell {i} is not positive and finite"));
            }
            min = min.min(v);
            max = max.max(v);
        }
        Ok(Self { values, min, max })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| c * v).collect())
    }

    pub fn check_mesh(&self, mesh: &MeshPair) -> Result<()> {
        if self.values.len() != mesh.fine().num_cells() {
            return Err(config_err!(
                "coefficient has {} values but the fine mesh has {} cells",
                self.values.len(),
                mesh.fine().num_cells()
            ));
        }
        Ok(())
    }
}

/// Right-hand side source term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Source {
    /// Q1 nodal values on the fine grid.
    Nodal(Vec<f64>),
    /// One constant per fine cell.
    Cellwise(Vec<f64>),
}

impl Source {
    pub fn zero(mesh: &MeshPair) -> Self {
        Source::Cellwise(vec![0.0; mesh.fine().num_cells()])
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Source::Nodal(v) | Source::Cellwise(v) => v.iter().all(|&x| x == 0.0),
        }
    }

    pub fn check_mesh(&self, mesh: &MeshPair) -> Result<()> {
        let (len, want) = match self {
            Source::Nodal(v) => (v.len(), mesh.fine().num_nodes()),
            Source::Cellwise(v) => (v.len(), mesh.fine().num_cells()),
        };
        if len != want {
            return Err(config_err!("source has {len} values, expected {want}"));
        }
        Ok(())
    }

    /// `(f, phi_c)` over one fine cell for each corner `c`.
    pub fn cell_load(&self, re: &RefElement, grid: &Grid, cell: usize) -> [f64; 8] {
        let n = re.corners();
        let mut out = [0.0; 8];
        match self {
            Source::Nodal(v) => {
                let loc = gather(grid, cell, v);
                for i in 0..n {
                    out[i] = (0..n).map(|j| re.mass[i * n + j] * loc[j]).sum();
                }
            }
            Source::Cellwise(v) => {
                let w = v[cell] * re.volume / n as f64;
                out[..n].fill(w);
            }
        }
        out
    }

    /// `||f||^2` over one fine cell.
    pub fn cell_l2_sq(&self, re: &RefElement, grid: &Grid, cell: usize) -> f64 {
        match self {
            Source::Nodal(v) => re.mass_quadratic(&gather(grid, cell, v)),
            Source::Cellwise(v) => v[cell] * v[cell] * re.volume,
        }
    }
}

/// Gauss-Legendre points and weights on `[0, 1]`.
pub fn gauss_rule(npts: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w): (Vec<f64>, Vec<f64>) = match npts {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (0.6f64).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let r = (6.0f64 / 5.0).sqrt();
            let a = ((3.0 - 2.0 * r) / 7.0).sqrt();
            let b = ((3.0 + 2.0 * r) / 7.0).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        _ => panic!("unsupported Gauss rule with {npts} points"),
    };
    (x.iter().map(|t| 0.5 * (t + 1.0)).collect(), w.iter().map(|t| 0.5 * t).collect())
}

/// Stiffness and mass matrices of a Q1 cell with the given extents, by tensor
/// Gauss quadrature with `npts` points per axis. Row-major `2^d x 2^d`.
pub fn gauss_element_matrices(extents: &[f64], npts: usize) -> (Vec<f64>, Vec<f64>) {
    let dim = extents.len();
    let n = 1 << dim;
    let (pts, wts) = gauss_rule(npts);
    let mut stiff = vec![0.0; n * n];
    let mut mass = vec![0.0; n * n];
    let vol: f64 = extents.iter().product();
    let nq = npts.pow(dim as u32);
    let mut val = vec![0.0; n];
    let mut grad = vec![[0.0; MAX_DIM]; n];
    for q in 0..nq {
        let mut xi = [0.0; MAX_DIM];
        let mut w = vol;
        let mut r = q;
        for a in 0..dim {
            xi[a] = pts[r % npts];
            w *= wts[r % npts];
            r /= npts;
        }
        for c in 0..n {
            let mut v = 1.0;
            for a in 0..dim {
                v *= if (c >> a) & 1 == 1 { xi[a] } else { 1.0 - xi[a] };
            }
            val[c] = v;
            for a in 0..dim {
                let mut g = if (c >> a) & 1 == 1 { 1.0 } else { -1.0 } / extents[a];
                for b in 0..dim {
                    if b != a {
                        g *= if (c >> b) & 1 == 1 { xi[b] } else { 1.0 - xi[b] };
                    }
                }
                grad[c][a] = g;
            }
        }
        for i in 0..n {
            for j in 0..n {
                let gg: f64 = (0..dim).map(|a| grad[i][a] * grad[j][a]).sum();
                stiff[i * n + j] += w * gg;
                mass[i * n + j] += w * val[i] * val[j];
            }
        }
    }
    (stiff, mass)
}

/// Q1 element stiffness matrix for a constant coefficient `a`.
pub fn element_stiffness(extents: &[f64], a: f64) -> Vec<f64> {
    gauss_element_matrices(extents, 2).0.into_iter().map(|v| a * v).collect()
}

/// Precomputed matrices of the (single) fine cell shape of a grid.
#[derive(Clone, Debug)]
pub struct RefElement {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub volume: f64,
    /// Unit-coefficient stiffness, row-major.
    pub stiff: Vec<f64>,
    pub mass: Vec<f64>,
}

impl RefElement {
    pub fn new(grid: &Grid) -> Self {
        let extents = grid.cell_extents();
        let (mut stiff, mass) = gauss_element_matrices(&extents, 2);
        // Make the row sums vanish exactly so constants lie in the kernel.
        let n = 1 << grid.dim();
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| stiff[i * n + j]).sum();
            stiff[i * n + i] = -off;
        }
        Self { dim: grid.dim(), volume: extents.iter().product(), extents, stiff, mass }
    }

    #[inline]
    pub fn corners(&self) -> usize {
        1 << self.dim
    }

    /// `u^T S v` with the unit stiffness. Both arguments are shifted by their
    /// first entry, which is exact because constants are in the kernel.
    #[inline]
    pub fn stiff_bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.corners();
        let (u0, v0) = (u[0], v[0]);
        let mut s = 0.0;
        for i in 1..n {
            let ui = u[i] - u0;
            if ui == 0.0 {
                continue;
            }
            let row = &self.stiff[i * n..(i + 1) * n];
            let mut t = 0.0;
            for j in 1..n {
                t += row[j] * (v[j] - v0);
            }
            s += ui * t;
        }
        s
    }

    /// `S u` with the unit stiffness.
    #[inline]
    pub fn stiff_apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.corners();
        let u0 = u[0];
        for i in 0..n {
            let row = &self.stiff[i * n..(i + 1) * n];
            out[i] = (1..n).map(|j| row[j] * (u[j] - u0)).sum();
        }
    }

    pub fn mass_quadratic(&self, u: &[f64]) -> f64 {
        let n = self.corners();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += u[i] * self.mass[i * n + j] * u[j];
            }
        }
        s
    }
}

/// Values of a global nodal vector at the corners of a cell.
#[inline]
pub fn gather(grid: &Grid, cell: usize, v: &[f64]) -> [f64; 8] {
    let nodes = grid.cell_nodes(cell);
    let mut out = [0.0; 8];
    for c in 0..grid.num_corners() {
        out[c] = v[nodes[c]];
    }
    out
}

/// Sample a function of position at every fine node.
pub fn sample_nodal(grid: &Grid, f: impl Fn([f64; MAX_DIM]) -> f64) -> Vec<f64> {
    (0..grid.num_nodes()).map(|n| f(grid.node_coord(n))).collect()
}

/// Prolongate a coarse nodal vector to the fine nodes (exact for Q1).
pub fn prolong(mesh: &MeshPair, coarse: &[f64]) -> Vec<f64> {
    (0..mesh.fine().num_nodes())
        .map(|n| mesh.coarse_weights_at_fine_node(n).iter().map(|&(c, w)| w * coarse[c]).sum())
        .collect()
}

/// Assemble the patch stiffness matrix over free dofs, with coefficient
/// given per global fine cell.
pub fn assemble_stiffness(
    mesh: &MeshPair,
    patch: &Patch,
    coef: &dyn Fn(usize) -> f64,
    part: &DofPartition,
) -> Result<SparseMat> {
    let nfree = part.num_free();
    if nfree == 0 {
        return Err(config_err!("patch around element {} has no free fine dofs", patch.center()));
    }
    let re = RefElement::new(mesh.fine());
    let n = re.corners();
    let mut t = TripletBuilder::with_capacity(nfree, nfree, patch.num_fine_cells() * n * n);
    patch.for_each_fine_cell(mesh, |_, global, corners, _| {
        let a = coef(global);
        for i in 0..n {
            let Some(di) = part.dof_of_node[corners[i]] else { continue };
            for j in 0..n {
                if let Some(dj) = part.dof_of_node[corners[j]] {
                    t.push(di, dj, a * re.stiff[i * n + j]);
                }
            }
        }
    });
    Ok(t.build())
}

/// A patch covering the whole domain.
pub fn whole_domain(mesh: &MeshPair) -> Patch {
    let k = mesh.coarse().cells().iter().copied().max().unwrap_or(1);
    patch(mesh, 0, k).expect("element 0 always exists")
}

/// Fine-scale Galerkin solution `u` in `V_h` (zero on the Dirichlet boundary)
/// of `(A grad u, grad v) = (f, v) - (A grad g, grad v)`. The physical
/// solution is `u + g`.
pub fn solve_fine_reference(
    mesh: &MeshPair,
    coef: &Coefficient,
    source: &Source,
    g: &[f64],
) -> Result<Vec<f64>> {
    coef.check_mesh(mesh)?;
    source.check_mesh(mesh)?;
    if g.len() != mesh.fine().num_nodes() {
        return Err(config_err!("boundary function has {} values, expected {}", g.len(), mesh.fine().num_nodes()));
    }
    if !mesh.has_dirichlet() {
        return Err(Error::SolverFailure("no Dirichlet boundary: the fine system is singular".into()));
    }
    let p = whole_domain(mesh);
    let part = classify_fine_dofs(mesh, &p);
    let k = assemble_stiffness(mesh, &p, &|c| coef.get(c), &part)?;
    let re = RefElement::new(mesh.fine());
    let n = re.corners();
    let fine = mesh.fine();
    let mut rhs = vec![0.0; part.num_free()];
    let mut sg = [0.0; 8];
    for cell in 0..fine.num_cells() {
        let nodes = fine.cell_nodes(cell);
        let gl = gather(fine, cell, g);
        re.stiff_apply(&gl[..n], &mut sg[..n]);
        let load = source.cell_load(&re, fine, cell);
        let a = coef.get(cell);
        for c in 0..n {
            if let Some(d) = part.dof_of_node[nodes[c]] {
                rhs[d] += load[c] - a * sg[c];
            }
        }
    }
    let x = SpdSolver::new(&k)?.solve_vec(&rhs);
    let mut u = vec![0.0; fine.num_nodes()];
    for (d, &l) in part.free.iter().enumerate() {
        u[l] = x[d];
    }
    Ok(u)
}

/// `|v|_A^2` restricted to the given fine cells.
pub fn energy_sq_on(mesh: &MeshPair, coef: &Coefficient, v: &[f64], cells: impl IntoIterator<Item = usize>) -> f64 {
    let re = RefElement::new(mesh.fine());
    let n = re.corners();
    cells
        .into_iter()
        .map(|c| {
            let l = gather(mesh.fine(), c, v);
            coef.get(c) * re.stiff_bilinear(&l[..n], &l[..n])
        })
        .sum()
}

/// `||v||_{L2}^2` restricted to the given fine cells.
pub fn l2_sq_on(mesh: &MeshPair, v: &[f64], cells: impl IntoIterator<Item = usize>) -> f64 {
    let re = RefElement::new(mesh.fine());
    let n = re.corners();
    cells
        .into_iter()
        .map(|c| re.mass_quadratic(&gather(mesh.fine(), c, v)[..n]))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub energy: f64,
    pub l2: f64,
}

/// Energy seminorm and L2 norm of a fine nodal function over the whole domain.
pub fn norms(mesh: &MeshPair, coef: &Coefficient, v: &[f64]) -> Norms {
    let cells = 0..mesh.fine().num_cells();
    Norms {
        energy: energy_sq_on(mesh, coef, v, cells.clone()).max(0.0).sqrt(),
        l2: l2_sq_on(mesh, v, cells).max(0.0).sqrt(),
    }
}

//! Quasi-interpolation `I_H = E_H ∘ Π_H`: elementwise L2 projection onto
//! broken Q1 functions followed by node averaging, and the kernel constraints
//! that define the fine space on a patch.

use crate::fem::gauss_rule;
use crate::grid::{for_each_in_box, DofPartition, MeshPair, Multi, Patch, MAX_DIM};

/// Tensor-product weights of the local projection: the value of `Π_T v` at
/// corner `c` equals `Σ_n W[c][n] v_n` over the fine nodes `n` of `T`, with
/// `W[c][n] = Π_a w[a][n_a][c_a]`.
#[derive(Clone, Debug)]
pub struct InterpStencil {
    dim: usize,
    refine: Multi,
    w: [Vec<[f64; 2]>; MAX_DIM],
}

impl InterpStencil {
    pub fn new(mesh: &MeshPair) -> Self {
        let refine = mesh.refine();
        let mut w: [Vec<[f64; 2]>; MAX_DIM] = [vec![[1.0, 1.0]], vec![[1.0, 1.0]], vec![[1.0, 1.0]]];
        for (a, wa) in w.iter_mut().enumerate().take(mesh.dim()) {
            *wa = projection_weights_1d(refine[a]);
        }
        Self { dim: mesh.dim(), refine, w }
    }

    /// Weight of fine node offset `n` (within the coarse cell) for corner `c`.
    #[inline]
    pub fn weight(&self, c: usize, n: Multi) -> f64 {
        let mut v = 1.0;
        for a in 0..self.dim {
            v *= self.w[a][n[a]][(c >> a) & 1];
        }
        v
    }

    pub fn refine(&self) -> Multi {
        self.refine
    }
}

/// 1D weights on a unit cell with `r` fine segments: `M^{-1} G` where `M` is
/// the coarse mass matrix and `G_{c,j} = ∫ ψ_c φ_j`.
fn projection_weights_1d(r: usize) -> Vec<[f64; 2]> {
    let h = 1.0 / r as f64;
    let (pts, wts) = gauss_rule(2);
    let mut g = vec![[0.0f64; 2]; r + 1];
    for s in 0..r {
        for (&p, &wq) in pts.iter().zip(&wts) {
            let x = (s as f64 + p) * h;
            let psi = [1.0 - x, x];
            let phi = [(1.0 - p, s), (p, s + 1)];
            for (pv, j) in phi {
                for c in 0..2 {
                    g[j][c] += wq * h * psi[c] * pv;
                }
            }
        }
    }
    // M^{-1} = [[4, -2], [-2, 4]] for M = [[1/3, 1/6], [1/6, 1/3]].
    g.into_iter()
        .map(|gj| [4.0 * gj[0] - 2.0 * gj[1], -2.0 * gj[0] + 4.0 * gj[1]])
        .collect()
}

/// Discontinuous Q1 function: `2^d` corner values per coarse element.
#[derive(Clone, Debug, PartialEq)]
pub struct BrokenCoarse {
    pub corners: usize,
    pub values: Vec<f64>,
}

impl BrokenCoarse {
    pub fn element(&self, t: usize) -> &[f64] {
        &self.values[t * self.corners..(t + 1) * self.corners]
    }
}

/// Elementwise L2 projection of a fine nodal function onto broken Q1.
pub fn project_broken(mesh: &MeshPair, stencil: &InterpStencil, v: &[f64]) -> BrokenCoarse {
    let coarse = mesh.coarse();
    let nc = coarse.num_corners();
    let r = mesh.refine();
    let mut values = vec![0.0; coarse.num_cells() * nc];
    let mut hi = [1; MAX_DIM];
    for a in 0..mesh.dim() {
        hi[a] = r[a] + 1;
    }
    for t in 0..coarse.num_cells() {
        let m = coarse.cell_multi(t);
        let base = [m[0] * r[0], m[1] * r[1], m[2] * r[2]];
        let out = &mut values[t * nc..(t + 1) * nc];
        for_each_in_box([0; MAX_DIM], hi, |o| {
            let x = v[mesh.fine().node_index([base[0] + o[0], base[1] + o[1], base[2] + o[2]])];
            if x != 0.0 {
                for (c, slot) in out.iter_mut().enumerate() {
                    *slot += stencil.weight(c, o) * x;
                }
            }
        });
    }
    BrokenCoarse { corners: nc, values }
}

/// Oswald averaging: mean of adjacent element traces, zero on the Dirichlet
/// boundary.
pub fn node_average(mesh: &MeshPair, b: &BrokenCoarse) -> Vec<f64> {
    let coarse = mesh.coarse();
    let mut out = vec![0.0; coarse.num_nodes()];
    for t in 0..coarse.num_cells() {
        let nodes = coarse.cell_nodes(t);
        for (c, &val) in b.element(t).iter().enumerate() {
            out[nodes[c]] += val;
        }
    }
    for (n, v) in out.iter_mut().enumerate() {
        if mesh.coarse_node_is_dirichlet(n) {
            *v = 0.0;
        } else {
            *v /= coarse.node_cardinality(coarse.node_multi(n)) as f64;
        }
    }
    out
}

/// `I_H v` as coarse nodal values.
pub fn interpolate(mesh: &MeshPair, stencil: &InterpStencil, v: &[f64]) -> Vec<f64> {
    node_average(mesh, &project_broken(mesh, stencil, v))
}

/// Sparse rows of `I_H` restricted to the free dofs of a patch, one row per
/// constrained coarse node.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintMatrix {
    pub coarse_nodes: Vec<usize>,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub ncols: usize,
}

impl ConstraintMatrix {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, w)| w * v[j]).sum()).collect()
    }
}

/// Constraint rows for the fine space of a patch: a free-dof vector `v`
/// satisfies `C v = 0` iff `I_H` of its zero extension vanishes.
pub fn kernel_constraints(mesh: &MeshPair, stencil: &InterpStencil, patch: &Patch, part: &DofPartition) -> ConstraintMatrix {
    let coarse = mesh.coarse();
    let r = mesh.refine();
    let plo = patch.coarse_lo();
    let fine_lo = patch.fine_lo();
    let mut hi = [1; MAX_DIM];
    for a in 0..mesh.dim() {
        hi[a] = r[a] + 1;
    }
    let mut rows = Vec::with_capacity(part.constrained_coarse.len());
    for &z in &part.constrained_coarse {
        let zm = coarse.node_multi(z);
        let card = coarse.node_cardinality(zm) as f64;
        let mut acc: Vec<(usize, f64)> = Vec::new();
        // Elements of the patch whose closure contains z.
        for c in 0..coarse.num_corners() {
            let off = coarse.corner_offset(c);
            let mut tm = [0; MAX_DIM];
            let mut ok = true;
            for a in 0..MAX_DIM {
                if zm[a] < off[a] {
                    ok = false;
                    break;
                }
                tm[a] = zm[a] - off[a];
                if tm[a] < plo[a] || tm[a] >= patch.coarse_hi()[a] {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let base = [tm[0] * r[0] - fine_lo[0], tm[1] * r[1] - fine_lo[1], tm[2] * r[2] - fine_lo[2]];
            for_each_in_box([0; MAX_DIM], hi, |o| {
                let local = patch.local_node_index([base[0] + o[0], base[1] + o[1], base[2] + o[2]]);
                if let Some(d) = part.dof_of_node[local] {
                    let w = stencil.weight(c, o) / card;
                    if w != 0.0 {
                        acc.push((d, w));
                    }
                }
            });
        }
        // stable sort: repeated dofs are summed in visiting order
        acc.sort_by_key(|e| e.0);
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(acc.len());
        for (d, w) in acc {
            match row.last_mut() {
                Some(last) if last.0 == d => last.1 += w,
                _ => row.push((d, w)),
            }
        }
        rows.push(row);
    }
    ConstraintMatrix { coarse_nodes: part.constrained_coarse.clone(), rows, ncols: part.num_free() }
}

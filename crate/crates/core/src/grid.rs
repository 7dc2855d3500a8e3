//! Structured tensor-product meshes.
//!
//! A [`MeshPair`] couples a coarse grid with a uniformly refined fine grid on
//! the same axis-aligned box. Cells and nodes are numbered lexicographically
//! with the first axis running fastest. Inactive axes (for `dim < 3`) carry a
//! single cell and a single node so that three-component multi-indices can be
//! used everywhere.
//!
//! Face normals point along the positive coordinate axis for every face,
//! boundary faces included. For an element the orientation sign of a face is
//! `+1` on its upper side and `-1` on its lower side.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

pub const MAX_DIM: usize = 3;

/// Multi-index with one component per (possibly inactive) axis.
pub type Multi = [usize; MAX_DIM];

/// Visit every multi-index in the half-open box `lo..hi`, first axis fastest.
pub fn for_each_in_box(lo: Multi, hi: Multi, mut f: impl FnMut(Multi)) {
    if (0..MAX_DIM).any(|a| lo[a] >= hi[a]) {
        return;
    }
    for k in lo[2]..hi[2] {
        for j in lo[1]..hi[1] {
            for i in lo[0]..hi[0] {
                f([i, j, k]);
            }
        }
    }
}

fn lex_index(m: Multi, counts: Multi) -> usize {
    m[0] + counts[0] * (m[1] + counts[1] * m[2])
}

fn lex_multi(mut i: usize, counts: Multi) -> Multi {
    let a = i % counts[0];
    i /= counts[0];
    let b = i % counts[1];
    [a, b, i / counts[1]]
}

/// A uniform tensor-product grid on a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    cells: Multi,
    lo: [f64; MAX_DIM],
    hi: [f64; MAX_DIM],
}

impl Grid {
    pub fn new(dim: usize, cells: &[usize], lo: &[f64], hi: &[f64]) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(config_err!("dimension must be 1, 2 or 3, got {dim}"));
        }
        if cells.len() != dim || lo.len() != dim || hi.len() != dim {
            return Err(config_err!("grid description does not match dimension {dim}"));
        }
        let mut c = [1; MAX_DIM];
        let mut l = [0.0; MAX_DIM];
        let mut h = [1.0; MAX_DIM];
        for a in 0..dim {
            if cells[a] == 0 {
                return Err(config_err!("cell count along axis {a} must be positive"));
            }
            if !(hi[a] > lo[a]) || !lo[a].is_finite() || !hi[a].is_finite() {
                return Err(config_err!("degenerate extent [{}, {}] along axis {a}", lo[a], hi[a]));
            }
            c[a] = cells[a];
            l[a] = lo[a];
            h[a] = hi[a];
        }
        Ok(Self { dim, cells: c, lo: l, hi: h })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> Multi {
        self.cells
    }

    pub fn node_counts(&self) -> Multi {
        let mut n = [1; MAX_DIM];
        for a in 0..self.dim {
            n[a] = self.cells[a] + 1;
        }
        n
    }

    pub fn lo(&self) -> [f64; MAX_DIM] {
        self.lo
    }

    pub fn hi(&self) -> [f64; MAX_DIM] {
        self.hi
    }

    pub fn num_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_counts().iter().product()
    }

    /// Number of corners of a cell, `2^dim`.
    pub fn num_corners(&self) -> usize {
        1 << self.dim
    }

    /// Cell width along `axis`.
    pub fn h(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.cells[axis] as f64
    }

    pub fn cell_extents(&self) -> Vec<f64> {
        (0..self.dim).map(|a| self.h(a)).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.h(a)).product()
    }

    pub fn cell_index(&self, m: Multi) -> usize {
        lex_index(m, self.cells)
    }

    pub fn cell_multi(&self, i: usize) -> Multi {
        lex_multi(i, self.cells)
    }

    pub fn node_index(&self, m: Multi) -> usize {
        lex_index(m, self.node_counts())
    }

    pub fn node_multi(&self, i: usize) -> Multi {
        lex_multi(i, self.node_counts())
    }

    pub fn node_coord(&self, i: usize) -> [f64; MAX_DIM] {
        let m = self.node_multi(i);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.lo[a] + m[a] as f64 * self.h(a);
        }
        x
    }

    pub fn cell_midpoint(&self, i: usize) -> [f64; MAX_DIM] {
        let m = self.cell_multi(i);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.lo[a] + (m[a] as f64 + 0.5) * self.h(a);
        }
        x
    }

    /// Offset of corner `c` (bit `a` set means upper side along axis `a`).
    pub fn corner_offset(&self, c: usize) -> Multi {
        let mut o = [0; MAX_DIM];
        for (a, oa) in o.iter_mut().enumerate().take(self.dim) {
            *oa = (c >> a) & 1;
        }
        o
    }

    /// Global node indices of the corners of `cell`, in corner-bit order.
    pub fn cell_nodes(&self, cell: usize) -> [usize; 8] {
        let m = self.cell_multi(cell);
        let mut out = [0; 8];
        for (c, slot) in out.iter_mut().enumerate().take(self.num_corners()) {
            let o = self.corner_offset(c);
            *slot = self.node_index([m[0] + o[0], m[1] + o[1], m[2] + o[2]]);
        }
        out
    }

    /// Number of cells whose closure contains node `m`.
    pub fn node_cardinality(&self, m: Multi) -> usize {
        (0..self.dim)
            .map(|a| if m[a] == 0 || m[a] == self.cells[a] { 1 } else { 2 })
            .product()
    }
}

/// Boundary condition flags: `dirichlet[axis][side]`, side 0 is the lower face.
pub type DirichletFlags = [[bool; 2]; MAX_DIM];

/// Nested coarse/fine grid pair with a boundary classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshPair {
    coarse: Grid,
    fine: Grid,
    refine: Multi,
    dirichlet: DirichletFlags,
}

impl MeshPair {
    pub fn dim(&self) -> usize {
        self.coarse.dim
    }

    pub fn coarse(&self) -> &Grid {
        &self.coarse
    }

    pub fn fine(&self) -> &Grid {
        &self.fine
    }

    pub fn refine(&self) -> Multi {
        self.refine
    }

    pub fn dirichlet(&self) -> DirichletFlags {
        self.dirichlet
    }

    pub fn has_dirichlet(&self) -> bool {
        (0..self.dim()).any(|a| self.dirichlet[a][0] || self.dirichlet[a][1])
    }

    fn on_dirichlet(&self, m: Multi, counts: Multi) -> bool {
        (0..self.dim()).any(|a| {
            (m[a] == 0 && self.dirichlet[a][0]) || (m[a] == counts[a] && self.dirichlet[a][1])
        })
    }

    pub fn coarse_node_is_dirichlet(&self, node: usize) -> bool {
        self.on_dirichlet(self.coarse.node_multi(node), self.coarse.cells)
    }

    pub fn fine_node_is_dirichlet(&self, node: usize) -> bool {
        self.on_dirichlet(self.fine.node_multi(node), self.fine.cells)
    }

    /// Coarse cell containing the given fine cell.
    pub fn coarse_cell_of_fine(&self, fine_cell: usize) -> usize {
        let m = self.fine.cell_multi(fine_cell);
        self.coarse.cell_index([
            m[0] / self.refine[0],
            m[1] / self.refine[1],
            m[2] / self.refine[2],
        ])
    }

    /// Global indices of the fine cells inside coarse cell `t`.
    pub fn fine_cells_of_coarse(&self, t: usize) -> Vec<usize> {
        let c = self.coarse.cell_multi(t);
        let lo = [c[0] * self.refine[0], c[1] * self.refine[1], c[2] * self.refine[2]];
        let hi = [lo[0] + self.refine[0], lo[1] + self.refine[1], lo[2] + self.refine[2]];
        let mut out = Vec::with_capacity(self.refine.iter().product());
        for_each_in_box(lo, hi, |m| out.push(self.fine.cell_index(m)));
        out
    }

    /// Fine node index of a coarse node.
    pub fn fine_node_of_coarse(&self, coarse_node: usize) -> usize {
        let m = self.coarse.node_multi(coarse_node);
        self.fine.node_index([
            m[0] * self.refine[0],
            m[1] * self.refine[1],
            m[2] * self.refine[2],
        ])
    }

    /// Coarse nodal basis values at a fine node: up to `2^dim` pairs of
    /// (coarse node, weight), weights summing to one.
    pub fn coarse_weights_at_fine_node(&self, fine_node: usize) -> Vec<(usize, f64)> {
        let m = self.fine.node_multi(fine_node);
        self.coarse_weights_at_multi(m)
    }

    pub(crate) fn coarse_weights_at_multi(&self, m: Multi) -> Vec<(usize, f64)> {
        let mut axes: [[(usize, f64); 2]; MAX_DIM] = [[(0, 1.0), (0, 0.0)]; MAX_DIM];
        let mut lens = [1usize; MAX_DIM];
        for a in 0..self.dim() {
            let r = self.refine[a];
            let c = m[a] / r;
            let rem = m[a] % r;
            if rem == 0 {
                axes[a] = [(c, 1.0), (0, 0.0)];
                lens[a] = 1;
            } else {
                let t = rem as f64 / r as f64;
                axes[a] = [(c, 1.0 - t), (c + 1, t)];
                lens[a] = 2;
            }
        }
        let mut out = Vec::with_capacity(lens.iter().product());
        for k in 0..lens[2] {
            for j in 0..lens[1] {
                for i in 0..lens[0] {
                    let (n0, w0) = axes[0][i];
                    let (n1, w1) = axes[1][j];
                    let (n2, w2) = axes[2][k];
                    out.push((self.coarse.node_index([n0, n1, n2]), w0 * w1 * w2));
                }
            }
        }
        out
    }
}

/// Build a nested mesh pair; the fine grid has `coarse * refinement` cells per axis.
pub fn build_mesh_pair(
    domain: &[[f64; 2]],
    coarse_counts: &[usize],
    refinement: &[usize],
    dirichlet: &[[bool; 2]],
) -> Result<MeshPair> {
    let dim = domain.len();
    if coarse_counts.len() != dim || refinement.len() != dim || dirichlet.len() != dim {
        return Err(config_err!(
            "mesh description lengths differ: domain {dim}, coarse {}, refine {}, dirichlet {}",
            coarse_counts.len(),
            refinement.len(),
            dirichlet.len()
        ));
    }
    if refinement.iter().any(|&r| r == 0) {
        return Err(config_err!("refinement factors must be at least 1"));
    }
    let lo: Vec<f64> = domain.iter().map(|d| d[0]).collect();
    let hi: Vec<f64> = domain.iter().map(|d| d[1]).collect();
    let coarse = Grid::new(dim, coarse_counts, &lo, &hi)?;
    let fine_counts: Vec<usize> =
        coarse_counts.iter().zip(refinement).map(|(c, r)| c * r).collect();
    let fine = Grid::new(dim, &fine_counts, &lo, &hi)?;
    let mut refine = [1; MAX_DIM];
    let mut flags = [[false; 2]; MAX_DIM];
    for a in 0..dim {
        refine[a] = refinement[a];
        flags[a] = dirichlet[a];
    }
    Ok(MeshPair { coarse, fine, refine, dirichlet: flags })
}

/// Convenience constructor on the unit box with Dirichlet conditions on both
/// sides of each listed axis.
pub fn unit_mesh(coarse: &[usize], refine: &[usize], dirichlet_axes: &[usize]) -> Result<MeshPair> {
    let dim = coarse.len();
    let domain = vec![[0.0, 1.0]; dim];
    let mut flags = vec![[false; 2]; dim];
    for &a in dirichlet_axes {
        if a >= dim {
            return Err(config_err!("Dirichlet axis {a} out of range for dimension {dim}"));
        }
        flags[a] = [true, true];
    }
    build_mesh_pair(&domain, coarse, refine, &flags)
}

/// A `k`-layer element patch around a coarse element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    center: usize,
    k: usize,
    dim: usize,
    /// Coarse cell index box, half open.
    lo: Multi,
    hi: Multi,
    refine: Multi,
}

impl Patch {
    pub fn center(&self) -> usize {
        self.center
    }

    pub fn layers(&self) -> usize {
        self.k
    }

    pub fn coarse_lo(&self) -> Multi {
        self.lo
    }

    pub fn coarse_hi(&self) -> Multi {
        self.hi
    }

    pub fn coarse_extent(&self) -> Multi {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1], self.hi[2] - self.lo[2]]
    }

    /// Global coarse element indices in the patch, lexicographic.
    pub fn elements(&self, mesh: &MeshPair) -> Vec<usize> {
        let mut out = Vec::new();
        for_each_in_box(self.lo, self.hi, |m| out.push(mesh.coarse().cell_index(m)));
        out
    }

    pub fn num_elements(&self) -> usize {
        self.coarse_extent().iter().product()
    }

    pub fn contains_element(&self, mesh: &MeshPair, t: usize) -> bool {
        let m = mesh.coarse().cell_multi(t);
        (0..MAX_DIM).all(|a| m[a] >= self.lo[a] && m[a] < self.hi[a])
    }

    /// Position of a patch element in the patch's lexicographic element list.
    pub fn local_element(&self, mesh: &MeshPair, t: usize) -> Option<usize> {
        if !self.contains_element(mesh, t) {
            return None;
        }
        let m = mesh.coarse().cell_multi(t);
        let e = self.coarse_extent();
        Some(lex_index([m[0] - self.lo[0], m[1] - self.lo[1], m[2] - self.lo[2]], e))
    }

    /// Global coarse node indices in the closure of the patch, lexicographic.
    pub fn coarse_nodes(&self, mesh: &MeshPair) -> Vec<usize> {
        let mut out = Vec::new();
        let mut hi = self.hi;
        for (a, h) in hi.iter_mut().enumerate().take(self.dim) {
            let _ = a;
            *h += 1;
        }
        for_each_in_box(self.lo, hi, |m| out.push(mesh.coarse().node_index(m)));
        out
    }

    /// First fine cell (multi-index) of the patch.
    pub fn fine_lo(&self) -> Multi {
        [self.lo[0] * self.refine[0], self.lo[1] * self.refine[1], self.lo[2] * self.refine[2]]
    }

    pub fn fine_cell_counts(&self) -> Multi {
        let e = self.coarse_extent();
        [e[0] * self.refine[0], e[1] * self.refine[1], e[2] * self.refine[2]]
    }

    pub fn fine_node_counts(&self) -> Multi {
        let mut n = self.fine_cell_counts();
        for v in n.iter_mut().take(self.dim) {
            *v += 1;
        }
        n
    }

    pub fn num_fine_cells(&self) -> usize {
        self.fine_cell_counts().iter().product()
    }

    pub fn num_fine_nodes(&self) -> usize {
        self.fine_node_counts().iter().product()
    }

    pub fn local_node_multi(&self, local: usize) -> Multi {
        lex_multi(local, self.fine_node_counts())
    }

    pub fn local_node_index(&self, m: Multi) -> usize {
        lex_index(m, self.fine_node_counts())
    }

    /// Global fine multi-index of a local node.
    pub fn global_node_multi(&self, local: usize) -> Multi {
        let m = self.local_node_multi(local);
        let o = self.fine_lo();
        [m[0] + o[0], m[1] + o[1], m[2] + o[2]]
    }

    pub fn global_fine_node(&self, mesh: &MeshPair, local: usize) -> usize {
        mesh.fine().node_index(self.global_node_multi(local))
    }

    /// Local index of a global fine node, if the node lies in the closed patch.
    pub fn local_of_global_node(&self, mesh: &MeshPair, global: usize) -> Option<usize> {
        let g = mesh.fine().node_multi(global);
        let o = self.fine_lo();
        let n = self.fine_node_counts();
        let mut m = [0; MAX_DIM];
        for a in 0..MAX_DIM {
            if g[a] < o[a] || g[a] - o[a] >= n[a] {
                return None;
            }
            m[a] = g[a] - o[a];
        }
        Some(self.local_node_index(m))
    }

    /// Global fine node indices of all local nodes.
    pub fn global_fine_nodes(&self, mesh: &MeshPair) -> Vec<usize> {
        (0..self.num_fine_nodes()).map(|l| self.global_fine_node(mesh, l)).collect()
    }

    /// Visit the fine cells of the patch: `(local cell, global cell, local
    /// corner nodes, local coarse element)`.
    pub fn for_each_fine_cell(
        &self,
        mesh: &MeshPair,
        mut f: impl FnMut(usize, usize, &[usize], usize),
    ) {
        let counts = self.fine_cell_counts();
        let nodes = self.fine_node_counts();
        let o = self.fine_lo();
        let ncorner = 1 << self.dim;
        let ext = self.coarse_extent();
        let mut corners = [0usize; 8];
        let mut local = 0;
        for_each_in_box([0; MAX_DIM], counts, |m| {
            for (c, slot) in corners.iter_mut().enumerate().take(ncorner) {
                let off = mesh.fine().corner_offset(c);
                *slot = lex_index([m[0] + off[0], m[1] + off[1], m[2] + off[2]], nodes);
            }
            let global = mesh.fine().cell_index([m[0] + o[0], m[1] + o[1], m[2] + o[2]]);
            let coarse_local = lex_index(
                [m[0] / self.refine[0], m[1] / self.refine[1], m[2] / self.refine[2]],
                ext,
            );
            f(local, global, &corners[..ncorner], coarse_local);
            local += 1;
        });
    }
}

/// The `k`-layer patch `U_k(T)`, realized as a clipped index box.
pub fn patch(mesh: &MeshPair, t: usize, k: usize) -> Result<Patch> {
    if t >= mesh.coarse().num_cells() {
        return Err(config_err!("element index {t} out of range"));
    }
    let c = mesh.coarse().cell_multi(t);
    let n = mesh.coarse().cells();
    let mut lo = [0; MAX_DIM];
    let mut hi = [1; MAX_DIM];
    for a in 0..mesh.dim() {
        lo[a] = c[a].saturating_sub(k);
        hi[a] = (c[a] + k + 1).min(n[a]);
    }
    Ok(Patch { center: t, k, dim: mesh.dim(), lo, hi, refine: mesh.refine() })
}

/// Free/fixed split of the fine nodes of a patch.
#[derive(Clone, Debug, PartialEq)]
pub struct DofPartition {
    /// Local patch nodes whose values are unknowns.
    pub free: Vec<usize>,
    /// Local patch nodes held at zero.
    pub fixed: Vec<usize>,
    /// `dof_of_node[local] = Some(free index)` for free nodes.
    pub dof_of_node: Vec<Option<usize>>,
    /// Non-Dirichlet coarse nodes in the closure of the patch.
    pub constrained_coarse: Vec<usize>,
}

impl DofPartition {
    pub fn num_free(&self) -> usize {
        self.free.len()
    }
}

/// Split patch fine nodes: nodes on the patch boundary inside the domain and
/// nodes on the Dirichlet boundary are fixed.
pub fn classify_fine_dofs(mesh: &MeshPair, patch: &Patch) -> DofPartition {
    let n = patch.num_fine_nodes();
    let counts = patch.fine_cell_counts();
    let coarse_cells = mesh.coarse().cells();
    let mut free = Vec::new();
    let mut fixed = Vec::new();
    let mut dof_of_node = vec![None; n];
    for (l, slot) in dof_of_node.iter_mut().enumerate() {
        let m = patch.local_node_multi(l);
        let mut is_fixed = false;
        for a in 0..mesh.dim() {
            if m[a] == 0 && patch.lo[a] > 0 {
                is_fixed = true;
            }
            if m[a] == counts[a] && patch.hi[a] < coarse_cells[a] {
                is_fixed = true;
            }
        }
        if !is_fixed && mesh.fine_node_is_dirichlet(patch.global_fine_node(mesh, l)) {
            is_fixed = true;
        }
        if is_fixed {
            fixed.push(l);
        } else {
            *slot = Some(free.len());
            free.push(l);
        }
    }
    let constrained_coarse = patch
        .coarse_nodes(mesh)
        .into_iter()
        .filter(|&c| !mesh.coarse_node_is_dirichlet(c))
        .collect();
    DofPartition { free, fixed, dof_of_node, constrained_coarse }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceKind {
    Interior,
    Dirichlet,
    Neumann,
}

/// A coarse face. The normal is `+e_axis`; `lower`/`upper` are the adjacent
/// elements on either side (one of them absent on the boundary).
#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub axis: usize,
    /// Node position along `axis`, cell position along the other axes.
    pub position: Multi,
    pub lower: Option<usize>,
    pub upper: Option<usize>,
    pub measure: f64,
    pub kind: FaceKind,
}

impl Face {
    /// The adjacent elements `(T_1, T_2)` in normal direction order.
    pub fn elements(&self) -> impl Iterator<Item = usize> {
        self.lower.into_iter().chain(self.upper)
    }
}

/// All faces of the coarse grid with element incidence.
#[derive(Clone, Debug)]
pub struct FaceSet {
    pub faces: Vec<Face>,
    /// Per element: `(face index, orientation sign)`; `+1` when the face normal
    /// points out of the element.
    pub element_faces: Vec<Vec<(usize, f64)>>,
    offsets: [usize; MAX_DIM + 1],
    counts: [Multi; MAX_DIM],
}

impl FaceSet {
    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn face_index(&self, axis: usize, position: Multi) -> usize {
        self.offsets[axis] + lex_index(position, self.counts[axis])
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = (usize, &Face)> {
        self.faces.iter().enumerate().filter(|(_, f)| f.kind != FaceKind::Interior)
    }
}

/// Enumerate the coarse faces, axis by axis, lexicographic within an axis.
pub fn faces(mesh: &MeshPair) -> FaceSet {
    faces_of_grid(mesh.coarse(), mesh.dirichlet())
}

pub(crate) fn faces_of_grid(grid: &Grid, dirichlet: DirichletFlags) -> FaceSet {
    let dim = grid.dim();
    let cells = grid.cells();
    let mut faces = Vec::new();
    let mut offsets = [0; MAX_DIM + 1];
    let mut counts = [[1; MAX_DIM]; MAX_DIM];
    let mut element_faces = vec![Vec::with_capacity(2 * dim); grid.num_cells()];
    for axis in 0..dim {
        offsets[axis] = faces.len();
        let mut c = cells;
        c[axis] += 1;
        counts[axis] = c;
        let measure: f64 = (0..dim).filter(|&b| b != axis).map(|b| grid.h(b)).product();
        for_each_in_box([0; MAX_DIM], c, |p| {
            let lower = (p[axis] > 0).then(|| {
                let mut m = p;
                m[axis] -= 1;
                grid.cell_index(m)
            });
            let upper = (p[axis] < cells[axis]).then(|| grid.cell_index(p));
            let kind = match (lower, upper) {
                (Some(_), Some(_)) => FaceKind::Interior,
                (None, _) if dirichlet[axis][0] => FaceKind::Dirichlet,
                (_, None) if dirichlet[axis][1] => FaceKind::Dirichlet,
                _ => FaceKind::Neumann,
            };
            faces.push(Face { axis, position: p, lower, upper, measure, kind });
        });
    }
    offsets[dim] = faces.len();
    for a in dim..MAX_DIM {
        offsets[a] = faces.len();
    }
    for (fi, f) in faces.iter().enumerate() {
        if let Some(t) = f.lower {
            element_faces[t].push((fi, 1.0));
        }
        if let Some(t) = f.upper {
            element_faces[t].push((fi, -1.0));
        }
    }
    // Sort each element's faces as (axis, lower side first).
    for ef in element_faces.iter_mut() {
        ef.sort_by_key(|&(fi, s)| (faces[fi].axis, s > 0.0));
    }
    FaceSet { faces, element_faces, offsets, counts }
}

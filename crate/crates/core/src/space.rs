//! Shared, immutable discretization data for one mesh pair.

use crate::fem::RefElement;
use crate::grid::{faces, for_each_in_box, FaceSet, MeshPair, Multi, MAX_DIM};
use crate::interp::InterpStencil;
use crate::linalg::SymbolicCache;

/// Values of the coarse basis functions of a coarse cell at the corners of
/// each fine cell inside it.
#[derive(Clone, Debug)]
pub struct CoarseBasisTable {
    refine: Multi,
    corners: usize,
    /// `[offset][coarse corner][fine corner]`, flattened.
    values: Vec<f64>,
}

impl CoarseBasisTable {
    fn new(mesh: &MeshPair) -> Self {
        let refine = mesh.refine();
        let nc = mesh.coarse().num_corners();
        let mut values = Vec::with_capacity(refine.iter().product::<usize>() * nc * nc);
        let fine = mesh.fine();
        for_each_in_box([0; MAX_DIM], refine, |o| {
            for cc in 0..nc {
                for fc in 0..nc {
                    let off = fine.corner_offset(fc);
                    let mut v = 1.0;
                    for a in 0..mesh.dim() {
                        let s = (o[a] + off[a]) as f64 / refine[a] as f64;
                        v *= if (cc >> a) & 1 == 1 { s } else { 1.0 - s };
                    }
                    values.push(v);
                }
            }
        });
        Self { refine, corners: nc, values }
    }

    /// Index of a fine cell's position inside its coarse cell.
    #[inline]
    pub fn offset_index(&self, fine_multi: Multi) -> usize {
        let r = self.refine;
        (fine_multi[0] % r[0]) + r[0] * ((fine_multi[1] % r[1]) + r[1] * (fine_multi[2] % r[2]))
    }

    /// Values of coarse corner `cc` at the fine corners of a cell.
    #[inline]
    pub fn values(&self, offset: usize, cc: usize) -> &[f64] {
        let n = self.corners;
        let base = (offset * n + cc) * n;
        &self.values[base..base + n]
    }
}

/// Everything that depends only on the mesh pair.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: MeshPair,
    pub re: RefElement,
    pub stencil: InterpStencil,
    pub basis: CoarseBasisTable,
    pub faces: FaceSet,
    pub symbolic: SymbolicCache,
}

impl Discretization {
    pub fn new(mesh: MeshPair) -> Self {
        // Parallelism lives at the element level; keep faer kernels serial so
        // results do not depend on the thread count.
        faer::set_global_parallelism(faer::Par::Seq);
        Self {
            re: RefElement::new(mesh.fine()),
            stencil: InterpStencil::new(&mesh),
            basis: CoarseBasisTable::new(&mesh),
            faces: faces(&mesh),
            symbolic: SymbolicCache::default(),
            mesh,
        }
    }

    pub fn corners(&self) -> usize {
        self.mesh.coarse().num_corners()
    }

    /// Coarse stiffness of element `t` for a fine-cell coefficient:
    /// `(a grad phi_j, grad phi_i)_T` as a row-major `2^d x 2^d` matrix.
    pub fn coarse_element_stiffness(&self, t: usize, coef: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let n = self.corners();
        let mut out = vec![0.0; n * n];
        let mut w = [0.0; 8];
        for cell in self.mesh.fine_cells_of_coarse(t) {
            let off = self.basis.offset_index(self.mesh.fine().cell_multi(cell));
            let a = coef(cell);
            for j in 0..n {
                self.re.stiff_apply(self.basis.values(off, j), &mut w[..n]);
                for i in 0..n {
                    let phi = self.basis.values(off, i);
                    out[i * n + j] += a * (0..n).map(|c| phi[c] * w[c]).sum::<f64>();
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{element_stiffness, prolong};
    use crate::grid::unit_mesh;

    #[test]
    fn basis_table_matches_prolongation() {
        let m = unit_mesh(&[2, 3], &[3, 2], &[]).unwrap();
        let d = Discretization::new(m.clone());
        let coarse = m.coarse();
        for t in 0..coarse.num_cells() {
            let nodes = coarse.cell_nodes(t);
            for cc in 0..4 {
                let mut e = vec![0.0; coarse.num_nodes()];
                e[nodes[cc]] = 1.0;
                let p = prolong(&m, &e);
                for cell in m.fine_cells_of_coarse(t) {
                    let off = d.basis.offset_index(m.fine().cell_multi(cell));
                    let fn_ = m.fine().cell_nodes(cell);
                    for fc in 0..4 {
                        assert!((d.basis.values(off, cc)[fc] - p[fn_[fc]]).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn coarse_stiffness_constant_coefficient() {
        let m = unit_mesh(&[2, 2], &[4, 4], &[]).unwrap();
        let d = Discretization::new(m);
        let k = d.coarse_element_stiffness(3, &|_| 2.0);
        let e = element_stiffness(&[0.5, 0.5], 2.0);
        for (a, b) in k.iter().zip(&e) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}

//! Half-plane grids and matrix fields. The rho direction is cell-centered
//! (first node at d_rho/2) so no node sits on the axis, and the axis cell
//! face at rho = 0 carries an exact flux limit instead of a ghost value.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::model_map::{model_map_eval, ModelMapError, ModelMapSpec};
use crate::oracles::BasisTag;
use crate::rod::RodVector;

/// Rod layout on the axis edge of the grid, in the same torus basis as the
/// field living on the grid. Needed for the axis flux limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisData {
    pub corners: Vec<f64>,
    /// One vector per rod: n_corners + 1 entries.
    pub vectors: Vec<RodVector>,
}

impl AxisData {
    /// Rod vector of the axis interval containing z.
    pub fn rod_at(&self, z: f64) -> RodVector {
        let k = self.corners.iter().take_while(|&&c| z >= c).count();
        self.vectors[k]
    }
}

/// Rectangular (rho, z) grid: rho_j = (j + 1/2) d_rho, z_k = z0 + k d_z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfPlaneGrid {
    pub n_rho: usize,
    pub n_z: usize,
    pub d_rho: f64,
    pub d_z: f64,
    pub z0: f64,
    pub axis: Option<AxisData>,
}

impl HalfPlaneGrid {
    pub fn new(
        n_rho: usize,
        n_z: usize,
        rho_max: f64,
        z_lo: f64,
        z_hi: f64,
        axis: Option<AxisData>,
    ) -> Self {
        assert!(n_rho >= 4 && n_z >= 4);
        HalfPlaneGrid {
            n_rho,
            n_z,
            d_rho: rho_max / n_rho as f64,
            d_z: (z_hi - z_lo) / (n_z - 1) as f64,
            z0: z_lo,
            axis,
        }
    }

    /// Rectangle sized so the outer boundary lies strictly outside r = R,
    /// where the model map is an exact solution.
    pub fn from_spec(spec: &ModelMapSpec, n_rho: usize, n_z: usize) -> Self {
        let big_r = spec.regions.big_r;
        let zc = 0.5 * spec.corners.last().unwrap();
        let half = 1.25 * big_r + zc.abs();
        let axis = AxisData {
            corners: spec.corners.clone(),
            vectors: spec.lens_vectors.clone(),
        };
        Self::new(n_rho, n_z, 1.25 * big_r, zc - half, zc + half, Some(axis))
    }

    #[inline]
    pub fn rho(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.d_rho
    }

    #[inline]
    pub fn z(&self, k: usize) -> f64 {
        self.z0 + k as f64 * self.d_z
    }

    #[inline]
    pub fn idx(&self, j: usize, k: usize) -> usize {
        k * self.n_rho + j
    }

    pub fn len(&self) -> usize {
        self.n_rho * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dirichlet rim: outer rho edge and both z edges (the axis is not a
    /// boundary in this scheme).
    #[inline]
    pub fn is_boundary(&self, j: usize, k: usize) -> bool {
        j + 1 == self.n_rho || k == 0 || k + 1 == self.n_z
    }
}

/// Unit-determinant SPD matrix field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiField {
    pub data: Vec<Matrix2<f64>>,
    pub basis: BasisTag,
}

impl PhiField {
    pub fn from_fn(
        grid: &HalfPlaneGrid,
        basis: BasisTag,
        mut f: impl FnMut(f64, f64) -> Matrix2<f64>,
    ) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..grid.n_z {
            for j in 0..grid.n_rho {
                data.push(f(grid.rho(j), grid.z(k)));
            }
        }
        PhiField { data, basis }
    }

    /// Model-map initialization: Phi = (p / rho) g at every node.
    pub fn from_model_map(
        grid: &HalfPlaneGrid,
        spec: &ModelMapSpec,
    ) -> Result<Self, ModelMapError> {
        let p = spec.lens.p as f64;
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..grid.n_z {
            for j in 0..grid.n_rho {
                let (rho, z) = (grid.rho(j), grid.z(k));
                let s = model_map_eval(spec, rho, z)?;
                data.push(s.g * (p / rho));
            }
        }
        Ok(PhiField { data, basis: BasisTag::Lens { p: spec.lens.p, q: spec.lens.q } })
    }

    /// Rescales every node to unit determinant.
    pub fn project_det(&mut self) {
        for m in &mut self.data {
            let d = m.determinant();
            debug_assert!(d > 0.0);
            *m /= d.sqrt();
        }
    }

    /// Bilinear sample at (rho, z), clamped to the grid rectangle.
    pub fn sample(&self, grid: &HalfPlaneGrid, rho: f64, z: f64) -> Matrix2<f64> {
        let fj = (rho / grid.d_rho - 0.5).clamp(0.0, (grid.n_rho - 1) as f64);
        let fk = ((z - grid.z0) / grid.d_z).clamp(0.0, (grid.n_z - 1) as f64);
        let j0 = (fj as usize).min(grid.n_rho - 2);
        let k0 = (fk as usize).min(grid.n_z - 2);
        let (tj, tk) = (fj - j0 as f64, fk - k0 as f64);
        let at = |j: usize, k: usize| self.data[grid.idx(j, k)];
        at(j0, k0) * (1.0 - tj) * (1.0 - tk)
            + at(j0 + 1, k0) * tj * (1.0 - tk)
            + at(j0, k0 + 1) * (1.0 - tj) * tk
            + at(j0 + 1, k0 + 1) * tj * tk
    }
}

//! Harmonic-map relaxation on the half-plane. The tension is discretized in
//! conservative flux form,
//!
//!   E = [rho_{j+1/2} F_{j+1/2} - rho_{j-1/2} F_{j-1/2}] / (rho_j d_rho)
//!       + [F_{k+1/2} - F_{k-1/2}] / d_z,
//!
//! with face fluxes F = Phi_face^{-1} (Phi_b - Phi_a) / d. On the axis face
//! rho = 0 the product rho Phi^{-1} d_rho Phi has a finite limit fixed by the
//! rod-adapted (h, w) parameterization with reflection conditions
//! d_rho h = d_rho w = 0: in the basis where the rod vector is (0,1) it
//! equals [[-1, 0], [2w, 1]], which the scheme uses in closed form. The
//! relaxation flow is Phi <- sym(Phi exp(s E)) followed by a determinant
//! projection, swept red-black with over-relaxation and a coarse-to-fine
//! cascade for initialization.

use nalgebra::Matrix2;
use thiserror::Error;

use crate::grid::{HalfPlaneGrid, PhiField};
use crate::mat2::{exp2, imat_to_f64, sym};
use crate::model_map::{ModelMapError, ModelMapSpec};
use crate::rod::{adapted_basis_for, RodVector};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    ModelMap(#[from] ModelMapError),
    #[error("step {step} exceeds the stability bound; suggested {suggested}")]
    StepTooLarge { step: f64, suggested: f64 },
    #[error("axis column is active but the grid carries no rod data")]
    MissingAxisData,
    #[error("field lost positivity at node ({j}, {k})")]
    LostPositivity { j: usize, k: usize },
}

#[inline]
fn inv2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let d = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / d
}

/// Face flux F = Phi_face^{-1} (Phi_b - Phi_a) / d with arithmetic-mean face
/// value.
#[inline]
fn face_flux(pa: &Matrix2<f64>, pb: &Matrix2<f64>, d: f64) -> Matrix2<f64> {
    let avg = (pa + pb) * 0.5;
    inv2(&avg) * ((pb - pa) / d)
}

/// Closed-form limit of rho Phi^{-1} d_rho Phi on the axis, for the rod with
/// vector v, evaluated from the first off-axis node.
fn axis_limit(phi0: &Matrix2<f64>, v: RodVector) -> Matrix2<f64> {
    let b = imat_to_f64(&adapted_basis_for(v));
    let bp = b.transpose() * phi0 * b;
    let w0 = bp[(0, 1)] / bp[(1, 1)];
    let core = Matrix2::new(-1.0, 0.0, 2.0 * w0, 1.0);
    b * core * inv2(&b)
}

/// Discrete tension field E and |tau|^2 = Tr(E^2); both zero on the
/// Dirichlet rim.
pub struct TensionField {
    pub e: Vec<Matrix2<f64>>,
    pub tau_sq: Vec<f64>,
}

impl TensionField {
    pub fn sup_tau(&self) -> f64 {
        self.tau_sq.iter().cloned().fold(0.0, f64::max).sqrt()
    }
}

fn node_tension(
    phi: &PhiField,
    grid: &HalfPlaneGrid,
    j: usize,
    k: usize,
) -> Result<Matrix2<f64>, SolveError> {
    let at = |jj: usize, kk: usize| &phi.data[grid.idx(jj, kk)];
    let (dr, dz) = (grid.d_rho, grid.d_z);
    let rho_j = grid.rho(j);
    let c = at(j, k);

    let fp = face_flux(c, at(j + 1, k), dr) * (rho_j + 0.5 * dr);
    let fm = if j > 0 {
        face_flux(at(j - 1, k), c, dr) * (rho_j - 0.5 * dr)
    } else {
        let axis = grid.axis.as_ref().ok_or(SolveError::MissingAxisData)?;
        axis_limit(c, axis.rod_at(grid.z(k)))
    };
    let e_rho = (fp - fm) / (rho_j * dr);
    let e_z = (face_flux(c, at(j, k + 1), dz) - face_flux(at(j, k - 1), c, dz)) / dz;
    Ok(e_rho + e_z)
}

pub fn discrete_tension(
    phi: &PhiField,
    grid: &HalfPlaneGrid,
) -> Result<TensionField, SolveError> {
    let mut e = vec![Matrix2::zeros(); grid.len()];
    let mut tau_sq = vec![0.0; grid.len()];
    for k in 1..grid.n_z - 1 {
        for j in 0..grid.n_rho - 1 {
            let m = node_tension(phi, grid, j, k)?;
            let idx = grid.idx(j, k);
            tau_sq[idx] = (m * m).trace().max(0.0);
            e[idx] = m;
        }
    }
    Ok(TensionField { e, tau_sq })
}

/// Grid-truncated Dirichlet energy: sum over faces of rho Tr(F^2) d_rho d_z
/// (the rho = 0 face is excluded; its integrand carries the universal
/// logarithmic divergence and is constant on a fixed grid).
pub fn dirichlet_energy(phi: &PhiField, grid: &HalfPlaneGrid) -> f64 {
    let at = |j: usize, k: usize| &phi.data[grid.idx(j, k)];
    let mut total = 0.0;
    for k in 0..grid.n_z {
        for j in 0..grid.n_rho - 1 {
            let f = face_flux(at(j, k), at(j + 1, k), grid.d_rho);
            total += (grid.rho(j) + 0.5 * grid.d_rho) * (f * f).trace();
        }
    }
    for k in 0..grid.n_z - 1 {
        for j in 0..grid.n_rho {
            let f = face_flux(at(j, k), at(j, k + 1), grid.d_z);
            total += grid.rho(j) * (f * f).trace();
        }
    }
    total * grid.d_rho * grid.d_z
}

/// Largest admissible relaxation step for a grid (the nodewise Gauss-Seidel
/// step of the linearized flow).
pub fn stability_step(grid: &HalfPlaneGrid) -> f64 {
    1.0 / (2.0 / (grid.d_rho * grid.d_rho) + 2.0 / (grid.d_z * grid.d_z))
}

#[inline]
fn apply_update(
    phi: &Matrix2<f64>,
    e: &Matrix2<f64>,
    step: f64,
) -> Option<Matrix2<f64>> {
    let mut next = sym(&(phi * exp2(&(e * step))));
    let d = next.determinant();
    if !(d > 0.0) || next[(0, 0)] <= 0.0 {
        return None;
    }
    next /= d.sqrt();
    Some(next)
}

/// One Jacobi sweep Phi <- sym(Phi exp(step E)) with determinant projection.
/// Rejects steps beyond the stability bound.
pub fn relax_step(
    phi: &PhiField,
    grid: &HalfPlaneGrid,
    step: f64,
) -> Result<PhiField, SolveError> {
    let bound = stability_step(grid);
    if step > bound * (1.0 + 1e-9) {
        return Err(SolveError::StepTooLarge { step, suggested: bound });
    }
    let mut out = phi.clone();
    for k in 1..grid.n_z - 1 {
        for j in 0..grid.n_rho - 1 {
            let e = node_tension(phi, grid, j, k)?;
            let idx = grid.idx(j, k);
            out.data[idx] = apply_update(&phi.data[idx], &e, step)
                .ok_or(SolveError::LostPositivity { j, k })?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SolveParams {
    pub n_rho: usize,
    pub n_z: usize,
    /// Target sup |tau|.
    pub tol: f64,
    /// Sweep cap per cascade level.
    pub max_sweeps: usize,
    /// Over-relaxation factor in (0, 2).
    pub omega: f64,
    /// Sweeps at omega = 1 before over-relaxation kicks in.
    pub warmup_sweeps: usize,
    /// Tension/energy check cadence.
    pub check_every: usize,
    /// Fraction of the sweep budget during which nodes next to corners stay
    /// frozen at their model-map values.
    pub corner_freeze_frac: f64,
    /// Coarsest cascade grid is no smaller than this in rho.
    pub min_coarse: usize,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            n_rho: 128,
            n_z: 256,
            tol: 1e-6,
            max_sweeps: 20_000,
            omega: 1.9,
            warmup_sweeps: 50,
            check_every: 25,
            corner_freeze_frac: 0.0,
            min_coarse: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Total sweeps across all cascade levels.
    pub iterations: usize,
    pub final_tension: f64,
    pub tension_history: Vec<f64>,
    pub energy_history: Vec<f64>,
    pub wall_time_s: f64,
    pub converged: bool,
}

pub struct SolveResult {
    pub phi: PhiField,
    pub grid: HalfPlaneGrid,
    pub report: SolveReport,
}

/// In-place red-black sweep; returns Err on lost positivity.
fn sweep(
    phi: &mut PhiField,
    grid: &HalfPlaneGrid,
    step: f64,
    frozen: &[bool],
) -> Result<(), SolveError> {
    for color in 0..2usize {
        for k in 1..grid.n_z - 1 {
            for j in 0..grid.n_rho - 1 {
                if (j + k) % 2 != color {
                    continue;
                }
                let idx = grid.idx(j, k);
                if frozen[idx] {
                    continue;
                }
                let e = node_tension(phi, grid, j, k)?;
                phi.data[idx] = apply_update(&phi.data[idx], &e, step)
                    .ok_or(SolveError::LostPositivity { j, k })?;
            }
        }
    }
    Ok(())
}

fn corner_mask(grid: &HalfPlaneGrid, corners: &[f64]) -> Vec<bool> {
    let mut mask = vec![false; grid.len()];
    for k in 0..grid.n_z {
        let z = grid.z(k);
        if corners.iter().any(|&c| (z - c).abs() <= grid.d_z) {
            for j in 0..2.min(grid.n_rho) {
                mask[grid.idx(j, k)] = true;
            }
        }
    }
    mask
}

/// Relaxes one grid level to tolerance or budget; appends to the histories.
#[allow(clippy::too_many_arguments)]
fn relax_level(
    phi: &mut PhiField,
    grid: &HalfPlaneGrid,
    params: &SolveParams,
    corners: &[f64],
    tension_history: &mut Vec<f64>,
    energy_history: &mut Vec<f64>,
    total_sweeps: &mut usize,
    is_finest: bool,
) -> Result<bool, SolveError> {
    let s0 = stability_step(grid);
    let mask_on = corner_mask(grid, corners);
    let mask_off = vec![false; grid.len()];
    let freeze_until = ((params.max_sweeps as f64) * params.corner_freeze_frac) as usize;
    let tol = if is_finest { params.tol } else { params.tol.max(1e-10) * 3.0 };

    // cap the over-relaxation at the linear SOR stability estimate for this
    // level's size; the requested factor is tuned for the finest grid and
    // overshoots badly on coarse cascade levels
    let n_max = grid.n_rho.max(grid.n_z) as f64;
    let omega_target = params.omega.min(2.0 / (1.0 + (std::f64::consts::PI / n_max).sin()));
    let mut omega = omega_target;
    let mut omega_hi = omega_target;
    let mut prev_energy = f64::INFINITY;
    let mut best_tau = f64::INFINITY;
    let mut converged = false;
    let mut n = 0usize;
    while n < params.max_sweeps {
        let frozen = if n < freeze_until { &mask_on } else { &mask_off };
        let w = if n < params.warmup_sweeps { 1.0 } else { omega };
        sweep(phi, grid, w * s0, frozen)?;
        n += 1;
        if n % params.check_every == 0 || n == params.max_sweeps {
            let tau = discrete_tension(phi, grid)?.sup_tau();
            let energy = dirichlet_energy(phi, grid);
            if is_finest {
                tension_history.push(tau);
                energy_history.push(energy);
            }
            best_tau = best_tau.min(tau);
            // back off the over-relaxation if the residual runs away; each
            // runaway also lowers the trusted ceiling to just under the
            // factor that failed, and once the residual improves again omega
            // anneals back up to the ceiling, so a startup transient cannot
            // pin the whole level at a crawl while a genuinely unstable
            // factor is never revisited
            if !tau.is_finite() || tau > 50.0 * best_tau + 1.0 {
                omega_hi = omega_hi.min(1.0 + 0.8 * (omega - 1.0));
                omega = 1.0 + 0.5 * (omega - 1.0);
            } else if tau <= best_tau {
                omega += 0.25 * (omega_hi - omega);
            }
            let rel_dec = ((prev_energy - energy) / energy.abs().max(1e-300)).abs();
            prev_energy = energy;
            if n > freeze_until && tau < tol && rel_dec < params.tol * params.tol {
                converged = true;
                break;
            }
        }
    }
    *total_sweeps += n;
    if std::env::var_os("INSTANTON_TRACE").is_some() {
        eprintln!(
            "trace level {}x{}: sweeps={} omega_end={:.4} best_tau={:.2e} conv={}",
            grid.n_rho, grid.n_z, n, omega, best_tau, converged
        );
    }
    Ok(converged)
}

/// Full pipeline: model-map initialization, coarse-to-fine cascade,
/// red-black relaxation with Dirichlet rim data from the model map.
pub fn solve(spec: &ModelMapSpec, params: &SolveParams) -> Result<SolveResult, SolveError> {
    let start = std::time::Instant::now();

    // cascade sizes, coarsest first
    let mut sizes = vec![(params.n_rho, params.n_z)];
    while sizes.last().unwrap().0 / 2 >= params.min_coarse
        && sizes.last().unwrap().1 / 2 >= params.min_coarse
    {
        let &(a, b) = sizes.last().unwrap();
        sizes.push((a / 2, b / 2));
    }
    sizes.reverse();

    let mut tension_history = Vec::new();
    let mut energy_history = Vec::new();
    let mut total_sweeps = 0usize;
    let mut prev: Option<(PhiField, HalfPlaneGrid, Vec<Matrix2<f64>>)> = None;

    for (lvl, &(nr, nz)) in sizes.iter().enumerate() {
        let grid = HalfPlaneGrid::from_spec(spec, nr, nz);
        let mut phi = PhiField::from_model_map(&grid, spec)?;
        let model_log: Vec<Matrix2<f64>> =
            phi.data.iter().map(crate::mat2::log_spd).collect();
        // log-space model-map departure of the node values, used to carry a
        // coarse solution to the next level without touching the 1/rho
        // structure near the axis
        if let Some((cphi, cgrid, cmodel_log)) = &prev {
            let mut corr = PhiField {
                data: Vec::with_capacity(cgrid.len()),
                basis: cphi.basis,
            };
            for (pm, ml) in cphi.data.iter().zip(cmodel_log.iter()) {
                corr.data.push(crate::mat2::log_spd(pm) - ml);
            }
            for k in 1..grid.n_z - 1 {
                for j in 0..grid.n_rho - 1 {
                    let idx = grid.idx(j, k);
                    let c = corr.sample(cgrid, grid.rho(j), grid.z(k));
                    let x = crate::mat2::log_spd(&phi.data[idx]) + sym(&c);
                    let mut m = crate::mat2::exp_sym(&x);
                    m /= m.determinant().sqrt();
                    phi.data[idx] = m;
                }
            }
        }
        let is_finest = lvl + 1 == sizes.len();
        let ok = relax_level(
            &mut phi,
            &grid,
            params,
            &spec.corners,
            &mut tension_history,
            &mut energy_history,
            &mut total_sweeps,
            is_finest,
        )?;
        if is_finest {
            let final_tension = discrete_tension(&phi, &grid)?.sup_tau();
            let report = SolveReport {
                iterations: total_sweeps,
                final_tension,
                tension_history,
                energy_history,
                wall_time_s: start.elapsed().as_secs_f64(),
                converged: ok,
            };
            return Ok(SolveResult { phi, grid, report });
        }
        prev = Some((phi, grid, model_log));
    }
    unreachable!("cascade always contains at least one level");
}

/// Conformal factor by quadrature of the first-order system for nu. Written
/// in terms of the unit-determinant field J = Phi^{-1} dPhi (the rescaling
/// from the Gram matrix shifts J_rho by I/rho, which is restored in closed
/// form):
///
///   d_rho nu = -1/(2 rho) + (rho/8) [Tr J_rho^2 + (2/rho) Tr J_rho
///              + 2/rho^2 - Tr J_z^2 - (2/rho)... ]
///
/// (the trace terms vanish identically for exactly unit determinant). The
/// returned residual is the sup of the discrete circulation of (nu_rho,
/// nu_z) per unit cell area, measuring path independence. It is taken over
/// cells at least a fixed margin (5% of the rho extent) away from the axis
/// strip and from the rod corners, where the integrand is smooth; inside
/// the margin the finite differences straddle the 1/rho structure and the
/// circulation carries no information.
pub fn conformal_factor(phi: &PhiField, grid: &HalfPlaneGrid) -> (Vec<f64>, f64) {
    let (_, nu_r, nu_z) = conformal_factor_parts(phi, grid);
    integrate_one_form(grid, &nu_r, &nu_z)
}

/// True when (rho, z) lies inside the exclusion margin (5% of the rho
/// extent) around the axis strip or a rod corner; finite differences there
/// straddle the 1/rho structure of the field and carry no information.
pub fn margin_excluded(grid: &HalfPlaneGrid, rho: f64, z: f64) -> bool {
    let margin = 0.05 * grid.n_rho as f64 * grid.d_rho;
    if rho < margin {
        return true;
    }
    let corners: &[f64] = grid.axis.as_ref().map_or(&[], |a| &a.corners);
    corners
        .iter()
        .any(|&c| rho * rho + (z - c) * (z - c) < margin * margin)
}

/// Integrates the one-form fr d_rho + fz d_z from a reference node in the
/// smooth outer region (first down the outermost interior column, then
/// along rows), and returns the potential together with the sup of the
/// discrete cell circulation per unit area outside the exclusion margin
/// (the path-independence defect; O(h^2) when the form is closed).
pub fn integrate_one_form(grid: &HalfPlaneGrid, fr: &[f64], fz: &[f64]) -> (Vec<f64>, f64) {
    let (nr, nz) = (grid.n_rho, grid.n_z);
    let (j_ref, k_ref) = (nr - 2, nz / 2);
    let mut pot = vec![0.0; grid.len()];
    for k in (0..k_ref).rev() {
        pot[grid.idx(j_ref, k)] = pot[grid.idx(j_ref, k + 1)]
            - 0.5 * (fz[grid.idx(j_ref, k)] + fz[grid.idx(j_ref, k + 1)]) * grid.d_z;
    }
    for k in k_ref + 1..nz {
        pot[grid.idx(j_ref, k)] = pot[grid.idx(j_ref, k - 1)]
            + 0.5 * (fz[grid.idx(j_ref, k)] + fz[grid.idx(j_ref, k - 1)]) * grid.d_z;
    }
    for k in 0..nz {
        for j in (0..j_ref).rev() {
            pot[grid.idx(j, k)] = pot[grid.idx(j + 1, k)]
                - 0.5 * (fr[grid.idx(j, k)] + fr[grid.idx(j + 1, k)]) * grid.d_rho;
        }
        for j in j_ref + 1..nr {
            pot[grid.idx(j, k)] = pot[grid.idx(j - 1, k)]
                + 0.5 * (fr[grid.idx(j, k)] + fr[grid.idx(j - 1, k)]) * grid.d_rho;
        }
    }

    let mut residual = 0.0f64;
    for k in 0..nz - 1 {
        for j in 0..nr - 1 {
            if margin_excluded(grid, grid.rho(j), grid.z(k)) {
                continue;
            }
            let (i00, i10, i01, i11) = (
                grid.idx(j, k),
                grid.idx(j + 1, k),
                grid.idx(j, k + 1),
                grid.idx(j + 1, k + 1),
            );
            let circ = 0.5 * (fr[i00] + fr[i10]) * grid.d_rho
                + 0.5 * (fz[i10] + fz[i11]) * grid.d_z
                - 0.5 * (fr[i01] + fr[i11]) * grid.d_rho
                - 0.5 * (fz[i00] + fz[i01]) * grid.d_z;
            residual = residual.max(circ.abs() / (grid.d_rho * grid.d_z));
        }
    }
    (pot, residual)
}

/// The integrated nu together with the node values of (d_rho nu, d_z nu),
/// for callers that want their own closure or fitting windows.
pub fn conformal_factor_parts(
    phi: &PhiField,
    grid: &HalfPlaneGrid,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (nr, nz) = (grid.n_rho, grid.n_z);
    let at = |j: usize, k: usize| &phi.data[grid.idx(j, k)];
    let mut nu_r = vec![0.0; grid.len()];
    let mut nu_z = vec![0.0; grid.len()];

    for k in 0..nz {
        for j in 0..nr {
            let rho = grid.rho(j);
            let c = at(j, k);
            let inv = inv2(c);
            let dr = if j == 0 {
                (-3.0 * c + 4.0 * at(1, k) - at(2, k)) / (2.0 * grid.d_rho)
            } else if j == nr - 1 {
                (3.0 * c - 4.0 * at(nr - 2, k) + at(nr - 3, k)) / (2.0 * grid.d_rho)
            } else {
                (at(j + 1, k) - at(j - 1, k)) / (2.0 * grid.d_rho)
            };
            let dz = if k == 0 {
                (-3.0 * c + 4.0 * at(j, 1) - at(j, 2)) / (2.0 * grid.d_z)
            } else if k == nz - 1 {
                (3.0 * c - 4.0 * at(j, nz - 2) + at(j, nz - 3)) / (2.0 * grid.d_z)
            } else {
                (at(j, k + 1) - at(j, k - 1)) / (2.0 * grid.d_z)
            };
            let jr = inv * dr;
            let jz = inv * dz;
            let idx = grid.idx(j, k);
            // Gram-matrix currents: J_g,rho = J_rho + I/rho, J_g,z = J_z
            let tr_r2 = (jr * jr).trace() + 2.0 / rho * jr.trace() + 2.0 / (rho * rho);
            let tr_z2 = (jz * jz).trace();
            nu_r[idx] = -0.5 / rho + rho / 8.0 * (tr_r2 - tr_z2);
            nu_z[idx] = rho / 4.0 * ((jz * jr).trace() + jz.trace() / rho);
        }
    }

    let (nu, _) = integrate_one_form(grid, &nu_r, &nu_z);
    (nu, nu_r, nu_z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AxisData;
    use crate::model_map::AsymptoticClass;
    use crate::oracles::{gh_gram, gh_potentials, BasisTag, CenterSet};
    use crate::rod::RodStructure;
    use approx::assert_relative_eq;

    fn gh_field(centers: &CenterSet, grid: &HalfPlaneGrid) -> PhiField {
        PhiField::from_fn(grid, BasisTag::GhTilde, |rho, z| {
            let s = gh_gram(centers, rho, z).unwrap();
            s.g / rho
        })
    }

    fn gh_axis(centers: &CenterSet) -> AxisData {
        let n = centers.centers.len() as i64;
        let corners = centers.centers.clone();
        let vectors = (0..=n)
            .map(|i| {
                let chi = 2 * (i + 1) - 2 - n;
                RodVector { a: 1, b: -chi }
            })
            .collect();
        AxisData { corners, vectors }
    }

    fn gh_grid(nr: usize, nz: usize, centers: &CenterSet) -> HalfPlaneGrid {
        HalfPlaneGrid::new(nr, nz, 4.0, -4.0, 4.0, Some(gh_axis(centers)))
    }

    fn two_center() -> CenterSet {
        CenterSet::new(vec![-0.7, 0.9], 1.0).unwrap()
    }

    #[test]
    fn tension_second_order_at_interior_points() {
        let centers = two_center();
        let probe = [(1.3, 0.4), (0.9, -1.1), (2.1, 1.7)];
        let mut sups = Vec::new();
        for &(nr, nz) in &[(64usize, 64usize), (128, 128), (256, 256)] {
            let grid = gh_grid(nr, nz, &centers);
            let phi = gh_field(&centers, &grid);
            let t = discrete_tension(&phi, &grid).unwrap();
            let mut sup = 0.0f64;
            for &(rho, z) in &probe {
                let j = (rho / grid.d_rho - 0.5).round() as usize;
                let k = ((z - grid.z0) / grid.d_z).round() as usize;
                sup = sup.max(t.tau_sq[grid.idx(j, k)].sqrt());
            }
            sups.push(sup);
        }
        let s1 = (sups[0] / sups[1]).ln() / 2.0f64.ln();
        let s2 = (sups[1] / sups[2]).ln() / 2.0f64.ln();
        assert!(
            s1 > 1.8 && s2 > 1.8,
            "interior tension orders {s1:.2}, {s2:.2} (sups {sups:?})"
        );
    }

    #[test]
    fn tension_bounded_near_axis() {
        let centers = two_center();
        let mut sups = Vec::new();
        for &(nr, nz) in &[(48usize, 96usize), (96, 192), (192, 384)] {
            let grid = gh_grid(nr, nz, &centers);
            let phi = gh_field(&centers, &grid);
            let t = discrete_tension(&phi, &grid).unwrap();
            // strip 0 < rho < 0.25, away from the corners
            let mut sup = 0.0f64;
            for k in 1..grid.n_z - 1 {
                let z = grid.z(k);
                if centers.centers.iter().any(|&c| (z - c).abs() < 0.2) {
                    continue;
                }
                for j in 0..grid.n_rho - 1 {
                    if grid.rho(j) < 0.25 {
                        sup = sup.max(t.tau_sq[grid.idx(j, k)].sqrt());
                    }
                }
            }
            sups.push(sup);
        }
        assert!(
            sups[2] < 2.0 * sups[0] + 1e-8,
            "axis tension grows under refinement: {sups:?}"
        );
    }

    #[test]
    fn relax_step_rejects_large_step() {
        let centers = two_center();
        let grid = gh_grid(16, 16, &centers);
        let phi = gh_field(&centers, &grid);
        let bound = stability_step(&grid);
        match relax_step(&phi, &grid, 10.0 * bound) {
            Err(SolveError::StepTooLarge { suggested, .. }) => {
                assert_relative_eq!(suggested, bound)
            }
            other => panic!("expected StepTooLarge, got {other:?}", other = other.err()),
        }
    }

    #[test]
    fn relax_step_reduces_perturbed_tension() {
        let centers = two_center();
        let grid = gh_grid(48, 96, &centers);
        let mut phi = gh_field(&centers, &grid);
        // log-space perturbation of amplitude 1e-3 in the interior
        for k in 1..grid.n_z - 1 {
            for j in 0..grid.n_rho - 1 {
                let idx = grid.idx(j, k);
                let bump = 1e-3 * ((j * 31 + k * 17) % 7 as usize) as f64 / 7.0;
                let x = crate::mat2::log_spd(&phi.data[idx])
                    + Matrix2::new(bump, 0.3 * bump, 0.3 * bump, -bump);
                phi.data[idx] = crate::mat2::exp_sym(&x);
            }
        }
        phi.project_det();
        let before = discrete_tension(&phi, &grid).unwrap().sup_tau();
        let stepped = relax_step(&phi, &grid, stability_step(&grid)).unwrap();
        let after = discrete_tension(&stepped, &grid).unwrap().sup_tau();
        assert!(after < before, "sup tau went {before} -> {after}");
    }

    #[test]
    fn conformal_factor_matches_gh_oracle() {
        let centers = two_center();
        let grid = gh_grid(96, 192, &centers);
        let phi = gh_field(&centers, &grid);
        let (nu, residual) = conformal_factor(&phi, &grid);
        assert!(residual < 0.5, "loop residual {residual}");
        // e^{2 nu} proportional to H: nu - (1/2) ln H constant
        let mut offsets = Vec::new();
        for &(rho, z) in &[(1.0, 0.0), (2.0, 1.5), (0.8, -2.0), (3.0, 0.5)] {
            let j = (rho / grid.d_rho - 0.5).round() as usize;
            let k = ((z - grid.z0) / grid.d_z).round() as usize;
            let (h, _) = gh_potentials(&centers, grid.rho(j), grid.z(k)).unwrap();
            offsets.push(nu[grid.idx(j, k)] - 0.5 * h.ln());
        }
        let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
        for &o in &offsets {
            assert!((o - mean).abs() < 5e-3, "offsets {offsets:?}");
        }
    }

    #[test]
    fn taub_nut_solve_small_grid() {
        let rs = RodStructure::new(
            vec![0.0],
            vec![RodVector::new(0, 1).unwrap(), RodVector::new(1, 0).unwrap()],
        )
        .unwrap();
        let spec = ModelMapSpec::new(&rs, AsymptoticClass::Alf { n: 1.0 }).unwrap();
        let params = SolveParams {
            n_rho: 48,
            n_z: 96,
            tol: 1e-5,
            max_sweeps: 6000,
            ..SolveParams::default()
        };
        let result = solve(&spec, &params).unwrap();
        assert!(
            result.report.converged,
            "final tension {}",
            result.report.final_tension
        );
        // the asymptotic model with c = 1/N^2 is the exact global solution
        // for this rod structure; compare at an interior node
        let grid = &result.grid;
        let j = (1.0 / grid.d_rho - 0.5).round() as usize;
        let k = ((1.0 - grid.z0) / grid.d_z).round() as usize;
        let got = result.phi.data[grid.idx(j, k)];
        let want = crate::oracles::asymptotic_model_gram(&spec.params, grid.rho(j), grid.z(k))
            .unwrap()
            .g
            / grid.rho(j);
        let rel = (got - want).norm() / want.norm();
        assert!(rel < 5e-3, "relative error {rel} at interior node");
    }
}

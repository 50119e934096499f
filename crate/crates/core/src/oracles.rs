//! Closed-form oracle metrics: multi-center Gibbons-Hawking (multi-Eguchi-
//! Hanson and multi-Taub-NUT), Taub-NUT, Taub-Bolt and the unified ALE/ALF
//! asymptotic model, all exposed as Gram-matrix evaluators in Weyl
//! coordinates.
//!
//! The multi-center family uses the scale normalization in which every pole
//! has unit coefficient (the 4π period of the fibre angle is absorbed into
//! the metric scale).

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rod::RodVector;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("evaluation at a singular point (rho={rho}, z={z})")]
    SingularPoint { rho: f64, z: f64 },
    #[error("point outside the oracle domain: {0}")]
    OutOfDomain(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("inverse Weyl map did not converge at (rho={rho}, z={z})")]
    InverseMapFailed { rho: f64, z: f64 },
}

/// Names the torus basis the Gram components refer to. Cross-oracle
/// comparisons require matching tags or an explicit basis change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BasisTag {
    /// Gibbons-Hawking (phi~1, phi~2) basis; det g = rho^2.
    GhTilde,
    /// Lens-adapted 2pi-periodic basis; det g = rho^2 / p^2.
    Lens { p: i64, q: i64 },
    /// (d_tau, d_phi) basis of the ALF Weyl-polar form; det g = rho^2.
    TauPhi,
}

/// One Gram-matrix sample: g, the conformal exponent nu, and the basis tag.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSample {
    pub g: Matrix2<f64>,
    pub nu: f64,
    pub basis: BasisTag,
}

impl GramSample {
    pub fn det(&self) -> f64 {
        self.g.determinant()
    }
}

/// Pole positions on the axis plus the asymptotic constant c (c = 0: ALE
/// multi-Eguchi-Hanson; c > 0: ALF multi-Taub-NUT).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSet {
    pub centers: Vec<f64>,
    pub c: f64,
}

impl CenterSet {
    pub fn new(centers: Vec<f64>, c: f64) -> Result<Self, OracleError> {
        if centers.is_empty() {
            return Err(OracleError::BadParameter("need at least one center".into()));
        }
        if centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(OracleError::BadParameter(
                "centers must be strictly increasing".into(),
            ));
        }
        if c < 0.0 {
            return Err(OracleError::BadParameter("c must be nonnegative".into()));
        }
        Ok(CenterSet { centers, c })
    }
}

/// H = c + eps/r asymptotic model in the lens basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticModelParams {
    pub p: i64,
    pub q: i64,
    pub c: f64,
    pub eps: i8,
}

impl AsymptoticModelParams {
    pub fn new(p: i64, q: i64, c: f64, eps: i8) -> Result<Self, OracleError> {
        if p < 1 {
            return Err(OracleError::BadParameter("p must be positive".into()));
        }
        if eps != 1 && eps != -1 {
            return Err(OracleError::BadParameter("eps must be +-1".into()));
        }
        if c < 0.0 {
            return Err(OracleError::BadParameter("c must be nonnegative".into()));
        }
        if eps == -1 && c == 0.0 {
            return Err(OracleError::BadParameter("eps = -1 requires c > 0".into()));
        }
        Ok(AsymptoticModelParams { p, q: q.rem_euclid(p), c, eps })
    }

    /// ALE flat cone.
    pub fn ale(p: i64, q: i64) -> Result<Self, OracleError> {
        Self::new(p, q, 0.0, 1)
    }

    /// ALF with NUT parameter N (c = 1/N^2, eps = sign N).
    pub fn alf(p: i64, q: i64, n: f64) -> Result<Self, OracleError> {
        if n == 0.0 {
            return Err(OracleError::BadParameter("ALF requires N != 0".into()));
        }
        Self::new(p, q, 1.0 / (n * n), if n > 0.0 { 1 } else { -1 })
    }
}

/// H = c + sum_i 1/|x - x_i| and its conjugate potential chi.
pub fn gh_potentials(cs: &CenterSet, rho: f64, z: f64) -> Result<(f64, f64), OracleError> {
    let mut h = cs.c;
    let mut chi = 0.0;
    for &zi in &cs.centers {
        let d2 = rho * rho + (z - zi) * (z - zi);
        if d2 == 0.0 {
            return Err(OracleError::SingularPoint { rho, z });
        }
        let d = d2.sqrt();
        h += 1.0 / d;
        chi += (z - zi) / d;
    }
    Ok((h, chi))
}

/// Gram matrix of the axisymmetric Gibbons-Hawking metric in the
/// (phi~1, phi~2) basis; e^{2 nu} = H exactly in this chart.
pub fn gh_gram(cs: &CenterSet, rho: f64, z: f64) -> Result<GramSample, OracleError> {
    let (h, chi) = gh_potentials(cs, rho, z)?;
    let g22 = 1.0 / h;
    let g12 = chi / h;
    let g11 = chi * chi / h + h * rho * rho;
    Ok(GramSample {
        g: Matrix2::new(g11, g12, g12, g22),
        nu: 0.5 * h.ln(),
        basis: BasisTag::GhTilde,
    })
}

/// Rod data of the n-center Gibbons-Hawking solution: the axis values of chi
/// per rod and the rod vectors (i-1, i-2) in the basis fixed by v_1 = (0,-1),
/// v_2 = (1,0).
pub fn selfdual_rod_data(n: usize) -> (Vec<f64>, Vec<RodVector>) {
    assert!(n >= 1);
    let chis = (1..=n + 1)
        .map(|i| (2 * i) as f64 - 2.0 - n as f64)
        .collect();
    let vecs = (1..=n as i64 + 1)
        .map(|i| RodVector { a: i - 1, b: i - 2 })
        .collect();
    (chis, vecs)
}

/// Integer change of basis from the rod-vector basis of
/// [`selfdual_rod_data`] to the (phi~1, phi~2) chart of [`gh_gram`]: the
/// columns are the phi~ components of the two lattice generators, so that
/// E (i-1, i-2)^T = (1, -chi_i) exactly for every rod. det E = -2: the
/// phi~ chart is not itself a lattice basis.
pub fn selfdual_embedding(n: usize) -> crate::rod::IMat2 {
    assert!(n >= 1);
    let n = n as i64;
    [[1, -1], [n - 2, -n]]
}

/// Gram matrix of the n-center self-dual solution in its lattice basis
/// (rod vectors (i-1, i-2)), evaluated at *pipeline* Weyl coordinates
/// normalized so det g = rho^2 / n^2: these are 2n times the
/// Gibbons-Hawking ones, and the centers sit at z = 2n z_i. This basis
/// differs from the L(n,1) lens normal form (v_1 = (0,1), v_last = (n,-1))
/// by the unimodular shear [[1,0],[-1,1]] applied to the rod vectors when
/// n >= 2, and by a sign flip of the second generator when n = 1 (where
/// q = 0); see [`selfdual_lens_gram`].
pub fn selfdual_proper_gram(
    cs: &CenterSet,
    rho: f64,
    z: f64,
) -> Result<GramSample, OracleError> {
    let n = cs.centers.len();
    let s = 2.0 * n as f64;
    let tilde = gh_gram(cs, rho / s, z / s)?;
    let e = crate::mat2::imat_to_f64(&selfdual_embedding(n));
    let (h, _) = gh_potentials(cs, rho / s, z / s)?;
    Ok(GramSample {
        g: e.transpose() * tilde.g * e,
        nu: 0.5 * (h / (s * s)).ln(),
        basis: BasisTag::Lens { p: n as i64, q: (1 % n) as i64 },
    })
}

/// The n-center self-dual Gram in the L(n,1) lens normal form basis, so
/// that it matches the asymptotic model with (p, q) = (n, 1 mod n) up to a
/// translation of the center of mass. For n >= 2 this applies the shear
/// [[1,0],[-1,1]] to the rod vectors of [`selfdual_proper_gram`]; for
/// n = 1 it flips the sign of the second generator instead.
pub fn selfdual_lens_gram(cs: &CenterSet, rho: f64, z: f64) -> Result<GramSample, OracleError> {
    let n = cs.centers.len();
    let s = selfdual_proper_gram(cs, rho, z)?;
    // inverse of the vector map; the Gram transforms as g -> T^{-T} g T^{-1}
    let t_inv = if n == 1 {
        Matrix2::new(1.0, 0.0, 0.0, -1.0)
    } else {
        Matrix2::new(1.0, 0.0, 1.0, 1.0)
    };
    Ok(GramSample { g: t_inv.transpose() * s.g * t_inv, nu: s.nu, basis: s.basis })
}

/// Taub-NUT invariants: (m, j).
pub fn taub_nut_invariants(n: f64) -> (f64, f64) {
    (0.5 * n, 0.0)
}

/// Taub-Bolt invariants: (m, j).
pub fn taub_bolt_invariants(n: f64) -> (f64, f64) {
    (0.625 * n, 0.0)
}

/// Taub-Bolt rod structure in the (phi^1, phi^2) torus basis.
pub fn taub_bolt_rod_vectors() -> Vec<RodVector> {
    vec![
        RodVector { a: 0, b: 1 },
        RodVector { a: 1, b: 0 },
        RodVector { a: 1, b: -1 },
    ]
}

/// Taub-NUT Gram matrix in the (d_tau, d_phi) basis at Weyl polar (R, Theta).
/// N < 0 is allowed for asymptotic-model use (domain then R > |N|).
pub fn taub_nut_gram(n: f64, big_r: f64, theta: f64) -> Result<GramSample, OracleError> {
    if n == 0.0 {
        return Err(OracleError::BadParameter("N must be nonzero".into()));
    }
    if big_r <= 0.0 {
        return Err(OracleError::OutOfDomain(format!("R = {big_r} <= 0")));
    }
    let r = big_r;
    let h = 1.0 + n / r;
    if h <= 0.0 {
        return Err(OracleError::OutOfDomain(format!("H = {h} <= 0 at R = {r}")));
    }
    let (st, ct) = (theta.sin(), theta.cos());
    let g11 = 1.0 / h;
    let g12 = n * ct / h;
    let g22 = n * n * ct * ct / h + h * r * r * st * st;
    Ok(GramSample {
        g: Matrix2::new(g11, g12, g12, g22),
        nu: 0.5 * h.ln(),
        basis: BasisTag::TauPhi,
    })
}

/// U(r) of the Taub-Bolt metric.
pub fn taub_bolt_u(n: f64, r: f64) -> f64 {
    (r - n) * (4.0 * r - n) / (4.0 * r * r - n * n)
}

/// Forward Weyl map of Taub-Bolt: (r, theta) -> (rho, z).
pub fn taub_bolt_weyl(n: f64, r: f64, theta: f64) -> (f64, f64) {
    let f = ((r - n) * (4.0 * r - n)).sqrt();
    (0.5 * f * theta.sin(), (r - 5.0 * n / 8.0) * theta.cos())
}

/// Taub-Bolt Gram matrix in the (d_tau, d_phi) basis at (r, theta), together
/// with the Weyl image of the sample point.
pub fn taub_bolt_gram(
    n: f64,
    r: f64,
    theta: f64,
) -> Result<(GramSample, f64, f64), OracleError> {
    if n <= 0.0 {
        return Err(OracleError::BadParameter("N must be positive".into()));
    }
    if r <= n {
        return Err(OracleError::OutOfDomain(format!("r = {r} <= N = {n}")));
    }
    let u = taub_bolt_u(n, r);
    let (st, ct) = (theta.sin(), theta.cos());
    let s2 = r * r - 0.25 * n * n;
    let g11 = u;
    let g12 = u * n * ct;
    let g22 = u * n * n * ct * ct + s2 * st * st;
    let (rho, z) = taub_bolt_weyl(n, r, theta);
    // conformal factor from the isothermal property of the Weyl chart:
    // e^{2 nu} (rho_r^2 + z_r^2) = 1/U
    let f = ((r - n) * (4.0 * r - n)).sqrt();
    let fp = (8.0 * r - 5.0 * n) / (2.0 * f);
    let rho_r = 0.5 * fp * st;
    let z_r = ct;
    let e2nu = (1.0 / u) / (rho_r * rho_r + z_r * z_r);
    Ok((
        GramSample {
            g: Matrix2::new(g11, g12, g12, g22),
            nu: 0.5 * e2nu.ln(),
            basis: BasisTag::TauPhi,
        },
        rho,
        z,
    ))
}

/// Taub-Bolt in the bounded (phi^1, phi^2) torus basis at pipeline Weyl
/// coordinates: det g = rho^2, the finite rod is normalized to [0, 3N^2/2]
/// and the rod vectors are (0,1), (1,0), (1,-1). The pipeline chart is 2N
/// times the (tau, phi) Weyl chart and the generators are phi^1 = 2N tau,
/// phi^2 = N tau + phi.
pub fn taub_bolt_pipeline_gram(n: f64, rho: f64, z: f64) -> Result<GramSample, OracleError> {
    if n <= 0.0 {
        return Err(OracleError::BadParameter("N must be positive".into()));
    }
    let s = 2.0 * n;
    let rho_b = rho / s;
    let z_b = (z - 0.75 * n * n) / s;
    let (r, theta) = taub_bolt_inverse_weyl(n, rho_b, z_b)?;
    let (g, _, _) = taub_bolt_gram(n, r, theta)?;
    let pb = Matrix2::new(s, n, 0.0, 1.0);
    Ok(GramSample {
        g: pb.transpose() * g.g * pb,
        nu: g.nu - s.ln(),
        basis: BasisTag::Lens { p: 1, q: 0 },
    })
}

/// Inverse Weyl map for Taub-Bolt by 2D Newton iteration on the closed-form
/// forward map; converges to 1e-12 in (r, theta).
pub fn taub_bolt_inverse_weyl(n: f64, rho: f64, z: f64) -> Result<(f64, f64), OracleError> {
    if rho < 0.0 {
        return Err(OracleError::OutOfDomain("rho < 0".into()));
    }
    // initial guess from the asymptotic relations rho ~ r sin, z ~ r cos
    let big_r = (rho * rho + z * z).sqrt().max(1.05 * n);
    let mut r = (big_r + 5.0 * n / 8.0).max(1.01 * n);
    let mut theta = rho.atan2(z).clamp(1e-9, std::f64::consts::PI - 1e-9);
    for _ in 0..200 {
        let (rr, zz) = taub_bolt_weyl(n, r, theta);
        let (er, ez) = (rr - rho, zz - z);
        if er.abs() + ez.abs() < 1e-13 * (1.0 + rho.abs() + z.abs()) {
            return Ok((r, theta));
        }
        let f = ((r - n) * (4.0 * r - n)).sqrt();
        let fp = (8.0 * r - 5.0 * n) / (2.0 * f);
        let (st, ct) = (theta.sin(), theta.cos());
        // Jacobian of (rho, z) wrt (r, theta)
        let j11 = 0.5 * fp * st;
        let j12 = 0.5 * f * ct;
        let j21 = ct;
        let j22 = -(r - 5.0 * n / 8.0) * st;
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-300 {
            break;
        }
        let dr = (er * j22 - ez * j12) / det;
        let dt = (ez * j11 - er * j21) / det;
        r = (r - dr).max(n * (1.0 + 1e-12));
        theta = (theta - dt).clamp(1e-12, std::f64::consts::PI - 1e-12);
    }
    Err(OracleError::InverseMapFailed { rho, z })
}

/// Gram matrix of the unified ALE/ALF asymptotic model in the lens basis:
/// g = L gbar L^T with H = c + eps/r, r = sqrt(rho^2+z^2)/2.
pub fn asymptotic_model_gram(
    params: &AsymptoticModelParams,
    rho: f64,
    z: f64,
) -> Result<GramSample, OracleError> {
    let gbar = asymptotic_model_gbar(params, rho, z)?;
    let p = params.p as f64;
    let q = params.q as f64;
    let l = Matrix2::new(1.0 / p, q / p, 0.0, 1.0);
    Ok(GramSample {
        g: l * gbar.g * l.transpose(),
        nu: gbar.nu,
        basis: BasisTag::Lens { p: params.p, q: params.q },
    })
}

/// The asymptotic model in the (phibar^1, phibar^2) basis (before the lens
/// quotient); det gbar = rho^2 and e^{2 nu} = H/4.
pub fn asymptotic_model_gbar(
    params: &AsymptoticModelParams,
    rho: f64,
    z: f64,
) -> Result<GramSample, OracleError> {
    let rr = (rho * rho + z * z).sqrt();
    if rr == 0.0 {
        return Err(OracleError::SingularPoint { rho, z });
    }
    let r = 0.5 * rr;
    let h = params.c + f64::from(params.eps) / r;
    if h <= 0.0 {
        return Err(OracleError::OutOfDomain(format!(
            "H = {h} <= 0 at r = {r} (need r > 1/c for eps = -1)"
        )));
    }
    let mu_p = rr - z;
    let mu_m = rr + z;
    let hr2 = h * rho * rho / 4.0;
    let off = hr2 * (1.0 - 1.0 / (r * r * h * h));
    let g11 = mu_p * mu_p / (4.0 * r * r * h) + hr2;
    let g22 = mu_m * mu_m / (4.0 * r * r * h) + hr2;
    Ok(GramSample {
        g: Matrix2::new(g11, off, off, g22),
        nu: 0.5 * (h / 4.0).ln(),
        basis: BasisTag::GhTilde,
    })
}

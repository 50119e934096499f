//! Piecewise-explicit model maps: given any admissible rod structure, build a
//! globally continuous Gram-matrix field with the prescribed rod vectors on
//! the axis and exact ALE or ALF asymptotics, glued through transition
//! windows with smooth interpolants. The field solves the harmonic-map
//! equation exactly away from the transitions and has bounded tension inside
//! them, which makes it both the solver's initial guess and its Dirichlet
//! boundary data.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat2::{exp_sym, log_spd};
use crate::oracles::{
    asymptotic_model_gbar, asymptotic_model_gram, AsymptoticModelParams, BasisTag, GramSample,
    OracleError,
};
use crate::rod::{
    imat_apply, lens_invariants, pair_det, validate_rod_structure, LensData, RodStructure,
    RodVector,
};

#[derive(Debug, Error)]
pub enum ModelMapError {
    #[error("rod structure is not admissible at junctions {0:?}")]
    NotAdmissible(Vec<usize>),
    #[error(transparent)]
    Rod(#[from] crate::rod::RodError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("point (rho={rho}, z={z}) is tagged {got:?}, expected {expected}")]
    WrongRegion { rho: f64, z: f64, got: RegionTag, expected: String },
    #[error("region geometry: {0}")]
    Geometry(String),
    #[error("appendix variant is defined for the ALE class only")]
    ClassError,
}

/// Which piece of the half-plane decomposition a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionTag {
    /// Sector S_i, 1-based, i = 1..n+2.
    S(usize),
    /// Transition strip T_i, 1-based, i = 1..n+1.
    T(usize),
    /// Near-infinity region rho^2 + z^2 > R^2.
    CR,
    /// Compact remainder rho >= rho0, rho^2 + z^2 <= R^2.
    Filler,
}

/// Axis strip width rho0, outer radius R, and the transition windows
/// (z ranges) separating consecutive sectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDecomposition {
    pub rho0: f64,
    pub big_r: f64,
    /// (z_lo, z_hi) per transition T_1..T_{n+1}, strictly increasing and
    /// disjoint, none containing a corner.
    pub windows: Vec<(f64, f64)>,
}

impl RegionDecomposition {
    pub fn tag(&self, rho: f64, z: f64) -> RegionTag {
        if rho * rho + z * z > self.big_r * self.big_r {
            return RegionTag::CR;
        }
        if rho >= self.rho0 {
            return RegionTag::Filler;
        }
        for (k, &(lo, hi)) in self.windows.iter().enumerate() {
            if z < lo {
                return RegionTag::S(k + 1);
            }
            if z <= hi {
                return RegionTag::T(k + 1);
            }
        }
        RegionTag::S(self.windows.len() + 1)
    }
}

/// Lays out transition windows for a rod structure: one centered window per
/// finite rod covering `fraction` of its length, plus end windows on the two
/// semi-infinite rods at offset `fraction * d0` from the extreme corners
/// (d0 = corner span, or 1 for a single corner). `end_offset_min` pushes the
/// end windows further out when the asymptotic model needs r large (ALF with
/// N < 0).
pub fn build_regions(
    rs: &RodStructure,
    rho0: f64,
    big_r: f64,
    fraction: f64,
    end_offset_min: f64,
) -> Result<RegionDecomposition, ModelMapError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ModelMapError::Geometry(format!(
            "window fraction must lie in (0,1), got {fraction}"
        )));
    }
    if rho0 <= 0.0 {
        return Err(ModelMapError::Geometry("rho0 must be positive".into()));
    }
    let rs = rs.normalized();
    let n = rs.n_corners();
    let zn = rs.corners[n - 1];
    let d0 = if n > 1 { zn } else { 1.0 };
    let end_off = (fraction * d0).max(end_offset_min);
    let end_w = fraction * d0.max(1.0);

    let mut windows = Vec::with_capacity(n + 1);
    windows.push((-end_off - end_w, -end_off));
    for i in 1..n {
        let (zl, zr) = (rs.corners[i - 1], rs.corners[i]);
        let half = 0.5 * fraction * (zr - zl);
        let mid = 0.5 * (zl + zr);
        windows.push((mid - half, mid + half));
    }
    windows.push((zn + end_off, zn + end_off + end_w));

    for (k, &(lo, hi)) in windows.iter().enumerate() {
        if rs.corners.iter().any(|&c| c >= lo && c <= hi) {
            return Err(ModelMapError::Geometry(format!(
                "transition window {} = [{lo}, {hi}] touches a corner",
                k + 1
            )));
        }
    }
    let z_extent = windows.last().unwrap().1.max(-windows[0].0);
    if big_r <= 1.2 * z_extent.max(rho0) {
        return Err(ModelMapError::Geometry(format!(
            "R = {big_r} too small for windows extending to |z| = {z_extent}"
        )));
    }
    Ok(RegionDecomposition { rho0, big_r, windows })
}

/// Asymptotic class of the end: ALE cone or ALF with NUT parameter N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AsymptoticClass {
    Ale,
    Alf { n: f64 },
}

/// Main-text construction or the alternate ALE-only appendix form (they
/// differ only in the two end transitions).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapVariant {
    Main,
    AleAlt,
}

/// Everything needed to evaluate the model map at a point: the rod structure
/// rewritten in the lens-adapted basis (v_1 = (0,1), v_{n+1} = (p,-q),
/// eps_n = -1, z_1 = 0), the asymptotic parameters, and the region layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMapSpec {
    /// Corner positions, translated so z_1 = 0.
    pub corners: Vec<f64>,
    /// Rod vectors in the lens basis, sign-fixed so eps_n = -1.
    pub lens_vectors: Vec<RodVector>,
    /// Junction determinants eps_i = det(v_i, v_{i+1}) in the lens basis.
    pub eps: Vec<i64>,
    pub lens: LensData,
    pub class: AsymptoticClass,
    pub params: AsymptoticModelParams,
    pub regions: RegionDecomposition,
    pub variant: MapVariant,
    /// Whether the interior vector v_n was negated to achieve eps_n = -1.
    pub flipped_vn: bool,
}

impl ModelMapSpec {
    /// Builds a spec with default region geometry.
    pub fn new(rs: &RodStructure, class: AsymptoticClass) -> Result<Self, ModelMapError> {
        Self::with_geometry(rs, class, MapVariant::Main, 0.25, None, 0.3)
    }

    pub fn with_variant(
        rs: &RodStructure,
        class: AsymptoticClass,
        variant: MapVariant,
    ) -> Result<Self, ModelMapError> {
        Self::with_geometry(rs, class, variant, 0.25, None, 0.3)
    }

    /// Full control over rho0, R (None = automatic) and window fraction.
    pub fn with_geometry(
        rs: &RodStructure,
        class: AsymptoticClass,
        variant: MapVariant,
        rho0: f64,
        big_r: Option<f64>,
        fraction: f64,
    ) -> Result<Self, ModelMapError> {
        let report = validate_rod_structure(rs);
        if !report.admissible {
            return Err(ModelMapError::NotAdmissible(report.failing_junctions));
        }
        if variant == MapVariant::AleAlt && !matches!(class, AsymptoticClass::Ale) {
            return Err(ModelMapError::ClassError);
        }
        let lens = lens_invariants(rs)?;
        let rs = rs.normalized();
        let n = rs.n_corners();

        // rewrite every rod vector in the lens basis
        let mut vbar: Vec<RodVector> = rs
            .rod_vectors
            .iter()
            .map(|&v| imat_apply(&lens.basis_change, v))
            .collect();
        if lens.flipped_first {
            vbar[0] = vbar[0].neg();
        }
        if lens.flipped_last {
            vbar[n] = vbar[n].neg();
        }
        debug_assert_eq!(vbar[0], RodVector { a: 0, b: 1 });
        debug_assert_eq!(vbar[n], RodVector { a: lens.p, b: -lens.q });

        // the end-transition parameterization forces eps_n = -1; negating the
        // interior vector v_n is gauge and leaves v_{n+1} = (p,-q) intact
        let mut flipped_vn = false;
        if n >= 2 && pair_det(vbar[n - 1], vbar[n]) == 1 {
            vbar[n - 1] = vbar[n - 1].neg();
            flipped_vn = true;
        }
        let eps: Vec<i64> = vbar.windows(2).map(|w| pair_det(w[0], w[1])).collect();
        debug_assert!(eps.iter().all(|e| e.abs() == 1));
        debug_assert_eq!(*eps.last().unwrap(), -1);

        let params = match class {
            AsymptoticClass::Ale => AsymptoticModelParams::ale(lens.p, lens.q)?,
            AsymptoticClass::Alf { n } => AsymptoticModelParams::alf(lens.p, lens.q, n)?,
        };
        // ALF with N < 0 needs H > 0 with margin wherever the asymptotic
        // model is evaluated: push the end windows and R out past 1/c
        let end_offset_min = if params.eps == -1 { 10.0 / params.c } else { 0.0 };
        let zn = rs.corners[n - 1];
        let d0 = if n > 1 { zn } else { 1.0 };
        let big_r = big_r.unwrap_or_else(|| {
            let z_reach = zn + end_offset_min + fraction * d0 + fraction * d0.max(1.0);
            (3.0 * z_reach.max(d0)).max(5.0 * d0).max(2.0 * rho0)
        });
        let regions = build_regions(&rs, rho0, big_r, fraction, end_offset_min)?;
        Ok(ModelMapSpec {
            corners: rs.corners,
            lens_vectors: vbar,
            eps,
            lens,
            class,
            params,
            regions,
            variant,
            flipped_vn,
        })
    }

    pub fn n_corners(&self) -> usize {
        self.corners.len()
    }

    fn basis(&self) -> BasisTag {
        BasisTag::Lens { p: self.lens.p, q: self.lens.q }
    }
}

/// Quintic smoothstep: 0 at t <= 0, 1 at t >= 1, C^2 at the ends.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// mu_j^{+-} relative to corner z_j.
fn mu_pm(zj: f64, rho: f64, z: f64) -> (f64, f64) {
    let d = (rho * rho + (z - zj) * (z - zj)).sqrt();
    (d - (z - zj), d + (z - zj))
}

fn v2(v: RodVector) -> (f64, f64) {
    (v.a as f64, v.b as f64)
}

/// Interior junction matrix M_j built from v_j, v_{j+1} (1-based junction
/// index j = i-1 for sector S_i).
fn interior_m(spec: &ModelMapSpec, j: usize) -> Matrix2<f64> {
    let p = spec.lens.p as f64;
    let e = spec.eps[j - 1] as f64;
    let (v1a, v1b) = v2(spec.lens_vectors[j - 1]);
    let (v2a, v2b) = v2(spec.lens_vectors[j]);
    Matrix2::new(v1b / p, e * v2b, -v1a / p, -e * v2a)
}

/// Gram matrix on sector S_i (2 <= i <= n+1): g = M_{i-1} D_{i-1} M_{i-1}^T.
pub fn interior_gram(spec: &ModelMapSpec, i: usize, rho: f64, z: f64) -> GramSample {
    assert!(i >= 2 && i <= spec.n_corners() + 1, "interior sector index {i}");
    let m = interior_m(spec, i - 1);
    let (mp, mm) = mu_pm(spec.corners[i - 2], rho, z);
    let d = Matrix2::new(mp, 0.0, 0.0, mm);
    GramSample { g: m * d * m.transpose(), nu: f64::NAN, basis: spec.basis() }
}

/// Blend over a transition window: 0 at z <= lo, 1 at z >= hi.
fn window_s(spec: &ModelMapSpec, i: usize, z: f64) -> f64 {
    let (lo, hi) = spec.regions.windows[i - 1];
    smoothstep((z - lo) / (hi - lo))
}

/// Gram matrix on an interior transition strip T_i (2 <= i <= n):
/// g = N_i Dtilde_{i-1}^lambda D_i^{1-lambda} N_i^T.
pub fn transition_gram(spec: &ModelMapSpec, i: usize, rho: f64, z: f64) -> GramSample {
    assert!(i >= 2 && i <= spec.n_corners(), "interior transition index {i}");
    let s = window_s(spec, i, z);
    let lambda = 1.0 - s;
    let p = spec.lens.p as f64;
    let gamma = 1.0 + (1.0 / p - 1.0) * s;
    let em = spec.eps[i - 2] as f64;
    let ep = spec.eps[i - 1] as f64;
    let (vm_a, vm_b) = v2(spec.lens_vectors[i - 2]);
    let (vi_a, vi_b) = v2(spec.lens_vectors[i - 1]);
    let (vp_a, vp_b) = v2(spec.lens_vectors[i]);
    let c = 1.0 / (p * gamma);
    let alpha_a = c * (-em * lambda * vm_a + ep * (1.0 - lambda) * vp_a);
    let alpha_b = c * (-em * lambda * vm_b + ep * (1.0 - lambda) * vp_b);
    let n_mat = Matrix2::new(gamma * vi_b, alpha_b, -gamma * vi_a, -alpha_a);
    let (mp_m, mm_m) = mu_pm(spec.corners[i - 2], rho, z);
    let (mp_i, mm_i) = mu_pm(spec.corners[i - 1], rho, z);
    // Dtilde_{i-1}^lambda D_i^{1-lambda}
    let d11 = mm_m.powf(lambda) * mp_i.powf(1.0 - lambda);
    let d22 = mp_m.powf(lambda) * mm_i.powf(1.0 - lambda);
    let d = Matrix2::new(d11, 0.0, 0.0, d22);
    GramSample { g: n_mat * d * n_mat.transpose(), nu: f64::NAN, basis: spec.basis() }
}

/// Which end transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    First,
    Last,
}

/// Gram matrix on T_1 or T_{n+1}, dispatching on the map variant.
pub fn end_transition_gram(
    spec: &ModelMapSpec,
    which: End,
    rho: f64,
    z: f64,
) -> Result<GramSample, ModelMapError> {
    match spec.variant {
        MapVariant::Main => end_transition_main(spec, which, rho, z),
        MapVariant::AleAlt => end_transition_alt(spec, which, rho, z),
    }
}

fn end_transition_main(
    spec: &ModelMapSpec,
    which: End,
    rho: f64,
    z: f64,
) -> Result<GramSample, ModelMapError> {
    let p = spec.lens.p as f64;
    let q = spec.lens.q as f64;
    let n = spec.n_corners();
    let gbar = asymptotic_model_gbar(&spec.params, rho, z)?;
    let b_smooth = if rho > 0.0 {
        gbar.g[(0, 1)] / (rho * rho)
    } else {
        // the printed smooth form of gbar_12 / rho^2
        let r = 0.5 * (rho * rho + z * z).sqrt();
        let h = spec.params.c + f64::from(spec.params.eps) / r;
        (h / 4.0) * (1.0 - 1.0 / (r * r * h * h))
    };
    match which {
        End::First => {
            let s = window_s(spec, 1, z); // 0 on the S_1 side, 1 on S_2
            let e1 = spec.eps[0] as f64;
            let (_, v2b) = v2(spec.lens_vectors[1]);
            let beta = q / p + (e1 * v2b - q / p) * s;
            let (mp1, _) = mu_pm(spec.corners[0], rho, z);
            let a = gbar.g[(0, 0)] + (mp1 - gbar.g[(0, 0)]) * s;
            let b = b_smooth * (1.0 - s);
            debug_assert!(a > 0.0, "A interpolant lost positivity");
            let h1 = Matrix2::new(
                a,
                rho * rho * b,
                rho * rho * b,
                (rho * rho + rho.powi(4) * b * b) / a,
            );
            let n1 = Matrix2::new(1.0 / p, beta, 0.0, 1.0);
            Ok(GramSample { g: n1 * h1 * n1.transpose(), nu: f64::NAN, basis: spec.basis() })
        }
        End::Last => {
            let s = window_s(spec, n + 1, z); // 0 on the S_{n+1} side, 1 on S_{n+2}
            debug_assert_eq!(spec.eps[n - 1], -1);
            let (vn_a, _) = v2(spec.lens_vectors[n - 1]);
            let a_int = p + (1.0 - p) * s;
            let c_int = (-vn_a / p) * (1.0 - s);
            let (_, mmn) = mu_pm(spec.corners[n - 1], rho, z);
            let a_cap = mmn + (gbar.g[(1, 1)] - mmn) * s;
            let b = b_smooth * s;
            debug_assert!(a_cap > 0.0 && a_int > 0.0, "interpolant lost positivity");
            let h = Matrix2::new(
                (rho * rho + rho.powi(4) * b * b) / a_cap,
                rho * rho * b,
                rho * rho * b,
                a_cap,
            );
            let nm = Matrix2::new(
                1.0 / (p * a_int) + q * c_int / p,
                q * a_int / p,
                c_int,
                a_int,
            );
            Ok(GramSample { g: nm * h * nm.transpose(), nu: f64::NAN, basis: spec.basis() })
        }
    }
}

fn end_transition_alt(
    spec: &ModelMapSpec,
    which: End,
    rho: f64,
    z: f64,
) -> Result<GramSample, ModelMapError> {
    let p = spec.lens.p as f64;
    let q = spec.lens.q as f64;
    let n = spec.n_corners();
    // D_0 centered at the origin; z_1 = 0 makes D_0 = D_1 on T_1
    let (mp0, mm0) = mu_pm(0.0, rho, z);
    match which {
        End::First => {
            let s = window_s(spec, 1, z);
            let e1 = spec.eps[0] as f64;
            let (_, v2b) = v2(spec.lens_vectors[1]);
            let beta = q / p + (e1 * v2b - q / p) * s;
            let n1 = Matrix2::new(1.0 / p, beta, 0.0, 1.0);
            let d = Matrix2::new(mp0, 0.0, 0.0, mm0);
            Ok(GramSample { g: n1 * d * n1.transpose(), nu: f64::NAN, basis: spec.basis() })
        }
        End::Last => {
            let lambda = window_s(spec, n + 1, z); // 0 on S_{n+1}, 1 on S_{n+2}
            debug_assert_eq!(spec.eps[n - 1], -1);
            let (vn_a, _) = v2(spec.lens_vectors[n - 1]);
            let a = p + (1.0 - p) * lambda;
            let c = (-vn_a / p) * (1.0 - lambda);
            let (mpn, mmn) = mu_pm(spec.corners[n - 1], rho, z);
            let d11 = mp0.powf(lambda) * mpn.powf(1.0 - lambda);
            let d22 = mm0.powf(lambda) * mmn.powf(1.0 - lambda);
            let d = Matrix2::new(d11, 0.0, 0.0, d22);
            let nm = Matrix2::new(1.0 / (p * a) + q * c / p, q * a / p, c, a);
            Ok(GramSample { g: nm * d * nm.transpose(), nu: f64::NAN, basis: spec.basis() })
        }
    }
}

/// Axis-side evaluation: the S/T dispatch by z alone, valid at any rho. The
/// filler blend uses this as its inner edge value.
fn eval_axis_side(spec: &ModelMapSpec, rho: f64, z: f64) -> Result<GramSample, ModelMapError> {
    let n = spec.n_corners();
    let wins = &spec.regions.windows;
    for (k, &(lo, hi)) in wins.iter().enumerate() {
        let i = k + 1;
        if z < lo {
            return if i == 1 {
                Ok(asymptotic_model_gram(&spec.params, rho, z)?)
            } else {
                Ok(interior_gram(spec, i, rho, z))
            };
        }
        if z <= hi {
            return if i == 1 {
                end_transition_gram(spec, End::First, rho, z)
            } else if i == n + 1 {
                end_transition_gram(spec, End::Last, rho, z)
            } else {
                Ok(transition_gram(spec, i, rho, z))
            };
        }
    }
    Ok(asymptotic_model_gram(&spec.params, rho, z)?)
}

/// Blend weight inside the filler: 0 at the rho = rho0 edge, 1 on the outer
/// arc r = R, and additionally 0 below a safety radius when the ALF N < 0
/// model has a restricted domain.
fn filler_weight(spec: &ModelMapSpec, rho: f64, z: f64) -> f64 {
    let rd = &spec.regions;
    let cap = (rd.big_r * rd.big_r - z * z).max(0.0).sqrt();
    if cap <= rd.rho0 {
        return 1.0;
    }
    let t = (rho - rd.rho0) / (cap - rd.rho0);
    let mut w = smoothstep(t);
    if spec.params.eps == -1 {
        // keep the asymptotic model unevaluated where H <= 0
        let r = 0.5 * (rho * rho + z * z).sqrt();
        let (r0, r1) = (2.0 / spec.params.c, 4.0 / spec.params.c);
        w *= smoothstep((r - r0) / (r1 - r0));
    }
    w
}

/// Evaluates the model map anywhere on the half-plane.
pub fn model_map_eval(spec: &ModelMapSpec, rho: f64, z: f64) -> Result<GramSample, ModelMapError> {
    match spec.regions.tag(rho, z) {
        RegionTag::CR => Ok(asymptotic_model_gram(&spec.params, rho, z)?),
        RegionTag::S(_) | RegionTag::T(_) => eval_axis_side(spec, rho, z),
        RegionTag::Filler => {
            let w = filler_weight(spec, rho, z);
            let inner = eval_axis_side(spec, rho, z)?;
            if w == 0.0 {
                return Ok(inner);
            }
            let outer = asymptotic_model_gram(&spec.params, rho, z)?;
            if w == 1.0 {
                return Ok(outer);
            }
            // log-space blend preserves SPD; equal determinants on both
            // sides keep det g = p^-2 rho^2 up to round-off, then project
            let x = log_spd(&inner.g) * (1.0 - w) + log_spd(&outer.g) * w;
            let mut g = exp_sym(&x);
            let target = rho * rho / (spec.lens.p * spec.lens.p) as f64;
            let scale = (target / g.determinant()).sqrt();
            g *= scale;
            Ok(GramSample { g, nu: f64::NAN, basis: spec.basis() })
        }
    }
}

/// The appendix's alternate ALE map as a standalone entry point.
pub fn model_map_eval_ale_alt(
    spec: &ModelMapSpec,
    rho: f64,
    z: f64,
) -> Result<GramSample, ModelMapError> {
    if spec.variant != MapVariant::AleAlt {
        return Err(ModelMapError::ClassError);
    }
    model_map_eval(spec, rho, z)
}

/// Unit-determinant harmonic-map field: Phi = (p / rho) g.
pub fn phi_from_gram(g: &Matrix2<f64>, p: i64, rho: f64) -> Matrix2<f64> {
    g * (p as f64 / rho)
}

//! Rod structures on the Weyl half-plane axis: validation, lens-space
//! invariants of the two semi-infinite rods, and integer basis changes.
//!
//! A rod structure is the combinatorial input of the whole pipeline: turning
//! points `z_1 < ... < z_n` on the axis together with `n + 1` primitive
//! integer rod vectors, one per axis interval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 2x2 integer matrix, row major.
pub type IMat2 = [[i64; 2]; 2];

pub fn imat_det(m: &IMat2) -> i64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn imat_mul(a: &IMat2, b: &IMat2) -> IMat2 {
    let mut out = [[0i64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn imat_apply(m: &IMat2, v: RodVector) -> RodVector {
    RodVector {
        a: m[0][0] * v.a + m[0][1] * v.b,
        b: m[1][0] * v.a + m[1][1] * v.b,
    }
}

/// Inverse of a determinant-±1 integer matrix.
pub fn imat_inv(m: &IMat2) -> IMat2 {
    let d = imat_det(m);
    assert!(d == 1 || d == -1, "matrix not unimodular");
    [[d * m[1][1], -d * m[0][1]], [-d * m[1][0], d * m[0][0]]]
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Extended gcd: returns (g, x, y) with a*x + b*y = g.
fn egcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        let s = if a < 0 { -1 } else { 1 };
        return (a.abs(), s, 0);
    }
    let (g, x, y) = egcd(b, a % b);
    (g, y, x - (a / b) * y)
}

#[derive(Debug, Error, PartialEq)]
pub enum RodError {
    #[error("rod vector {index} = ({a},{b}) is not primitive (gcd must be 1, not both zero)")]
    NonPrimitive { index: usize, a: i64, b: i64 },
    #[error("corners must be strictly increasing: corner {index} = {value} <= previous")]
    CornersNotIncreasing { index: usize, value: f64 },
    #[error("need one more rod vector than corners: {vectors} vectors, {corners} corners")]
    CountMismatch { vectors: usize, corners: usize },
    #[error("adjacent rod vectors {index} and {next} are linearly dependent")]
    DependentAdjacent { index: usize, next: usize },
    #[error("rod structure is not admissible at junctions {0:?}")]
    NotAdmissible(Vec<usize>),
    #[error("no unimodular basis change yields p > 0; semi-infinite rod vectors are parallel")]
    LensInconsistent,
    #[error("rod index {0} out of range")]
    RodIndex(usize),
}

/// Primitive integer rod vector in a fixed 2π-periodic torus basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RodVector {
    pub a: i64,
    pub b: i64,
}

impl RodVector {
    pub fn new(a: i64, b: i64) -> Result<Self, RodError> {
        let v = RodVector { a, b };
        if (a == 0 && b == 0) || gcd(a, b) != 1 {
            return Err(RodError::NonPrimitive { index: 0, a, b });
        }
        Ok(v)
    }

    pub fn neg(self) -> Self {
        RodVector { a: -self.a, b: -self.b }
    }
}

/// det(v, w) of a pair of column vectors.
pub fn pair_det(v: RodVector, w: RodVector) -> i64 {
    v.a * w.b - v.b * w.a
}

/// Ordered turning points plus one rod vector per axis interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RodStructure {
    pub corners: Vec<f64>,
    pub rod_vectors: Vec<RodVector>,
}

impl RodStructure {
    pub fn new(corners: Vec<f64>, rod_vectors: Vec<RodVector>) -> Result<Self, RodError> {
        if rod_vectors.len() != corners.len() + 1 {
            return Err(RodError::CountMismatch {
                vectors: rod_vectors.len(),
                corners: corners.len(),
            });
        }
        for (i, w) in corners.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(RodError::CornersNotIncreasing { index: i + 1, value: w[1] });
            }
        }
        for (i, v) in rod_vectors.iter().enumerate() {
            if (v.a == 0 && v.b == 0) || gcd(v.a, v.b) != 1 {
                return Err(RodError::NonPrimitive { index: i, a: v.a, b: v.b });
            }
        }
        for i in 0..rod_vectors.len() - 1 {
            if pair_det(rod_vectors[i], rod_vectors[i + 1]) == 0 {
                return Err(RodError::DependentAdjacent { index: i, next: i + 1 });
            }
        }
        Ok(RodStructure { corners, rod_vectors })
    }

    /// Number of corners n.
    pub fn n_corners(&self) -> usize {
        self.corners.len()
    }

    /// Number of rods n + 1.
    pub fn n_rods(&self) -> usize {
        self.rod_vectors.len()
    }

    /// Finite rod lengths l_i = z_i - z_{i-1}.
    pub fn finite_rod_lengths(&self) -> Vec<f64> {
        self.corners.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Only z-differences carry meaning; shift so the first corner is at z = 0,
    /// the gauge the model map construction assumes.
    pub fn normalized(&self) -> RodStructure {
        let z1 = self.corners[0];
        RodStructure {
            corners: self.corners.iter().map(|z| z - z1).collect(),
            rod_vectors: self.rod_vectors.clone(),
        }
    }

    /// Interval of rod i (1-based), endpoints ±inf for the semi-infinite rods.
    pub fn rod_interval(&self, i: usize) -> (f64, f64) {
        let n = self.n_corners();
        assert!(i >= 1 && i <= n + 1);
        let lo = if i == 1 { f64::NEG_INFINITY } else { self.corners[i - 2] };
        let hi = if i == n + 1 { f64::INFINITY } else { self.corners[i - 1] };
        (lo, hi)
    }
}

/// Per-junction determinants and the admissibility verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    /// eps_i = det(v_i, v_{i+1}) for i = 1..n.
    pub junction_dets: Vec<i64>,
    pub admissible: bool,
    pub failing_junctions: Vec<usize>,
}

/// Computes det(v_i, v_{i+1}) at every junction; admissible iff all are ±1.
pub fn validate_rod_structure(rs: &RodStructure) -> AdmissibilityReport {
    let dets: Vec<i64> = rs
        .rod_vectors
        .windows(2)
        .map(|w| pair_det(w[0], w[1]))
        .collect();
    let failing: Vec<usize> = dets
        .iter()
        .enumerate()
        .filter(|(_, d)| d.abs() != 1)
        .map(|(i, _)| i + 1)
        .collect();
    AdmissibilityReport {
        admissible: failing.is_empty(),
        junction_dets: dets,
        failing_junctions: failing,
    }
}

/// Lens space L(p, q) at infinity, together with the basis change realizing
/// the normal form v_1 -> (0,1), v_{n+1} -> (p,-q).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LensData {
    pub p: i64,
    /// Reduced mod p into [0, p); q = 0 when p = 1.
    pub q: i64,
    pub basis_change: IMat2,
    /// Sign flips applied to v_1 / v_{n+1} before the basis change. Rod
    /// vectors are only defined up to sign, so flips are gauge.
    pub flipped_first: bool,
    pub flipped_last: bool,
}

/// Orientation-preserving unimodular U with U v = (0, 1)^T for primitive v.
fn basis_to_01(v: RodVector) -> IMat2 {
    // row 1 annihilates v, row 2 pairs to 1 via the extended gcd; row-1 signs
    // chosen so det U = +1 (orientation matters for the lens invariant)
    let (g, x, y) = egcd(v.a, v.b);
    debug_assert_eq!(g, 1);
    [[v.b, -v.a], [x, y]]
}

/// Computes the lens space L(p,q) of the boundary at infinity.
///
/// Rod vectors are only defined up to sign, so both orientations of the
/// first vector are tried; with the basis change constrained to det +1 the
/// resulting q is unique mod p either way, and the smaller candidate is
/// reported.
pub fn lens_invariants(rs: &RodStructure) -> Result<LensData, RodError> {
    // only the two semi-infinite rods enter; interior admissibility is a
    // separate check
    let v1 = rs.rod_vectors[0];
    let vlast = *rs.rod_vectors.last().unwrap();

    let mut best: Option<LensData> = None;
    for &flip_first in &[false, true] {
        let v = if flip_first { v1.neg() } else { v1 };
        let mut u = basis_to_01(v);
        let w = imat_apply(&u, vlast);
        if w.a == 0 {
            continue;
        }
        let mut flipped_last = false;
        let mut w = w;
        if w.a < 0 {
            // flipping the sign of the last rod vector is gauge
            w = w.neg();
            flipped_last = true;
        }
        let p = w.a;
        // post-compose with [[1,0],[k,1]] (fixes (0,1)) to reduce q mod p
        let q_raw = -w.b;
        let q = q_raw.rem_euclid(p);
        let k = (q_raw - q) / p;
        let shear = [[1, 0], [k, 1]];
        u = imat_mul(&shear, &u);
        let cand = LensData {
            p,
            q,
            basis_change: u,
            flipped_first: flip_first,
            flipped_last,
        };
        best = match best {
            None => Some(cand),
            Some(b) if cand.q < b.q => Some(cand),
            Some(b) => Some(b),
        };
    }
    best.ok_or(RodError::LensInconsistent)
}

/// A determinant-±1 integer matrix whose second column is v_i, so the rod
/// vector reads (0,1) in the new basis. Supports the (h, w) axis chart.
pub fn rod_adapted_basis(rs: &RodStructure, i: usize) -> Result<IMat2, RodError> {
    if i < 1 || i > rs.n_rods() {
        return Err(RodError::RodIndex(i));
    }
    let v = rs.rod_vectors[i - 1];
    Ok(adapted_basis_for(v))
}

/// Same as [`rod_adapted_basis`] but for a bare vector.
pub fn adapted_basis_for(v: RodVector) -> IMat2 {
    let (g, x, y) = egcd(v.a, v.b);
    debug_assert_eq!(g, 1);
    // columns (y, -x) and (a, b); det = y*b + x*a = 1
    [[y, v.a], [-x, v.b]]
}

/// Random admissible rod structure with n corners, built by successive
/// unimodular steps so every junction determinant is +-1 by construction.
/// Retries until the two semi-infinite rod vectors are independent (so the
/// lens invariant is defined).
pub fn random_admissible_structure<R: rand::Rng>(rng: &mut R, n: usize) -> RodStructure {
    assert!(n >= 1);
    loop {
        let mut vecs: Vec<RodVector> = Vec::with_capacity(n + 1);
        let v1 = loop {
            let a = rng.gen_range(-3i64..=3);
            let b = rng.gen_range(-3i64..=3);
            if !(a == 0 && b == 0) && gcd(a, b) == 1 {
                break RodVector { a, b };
            }
        };
        vecs.push(v1);
        for _ in 0..n {
            let v = *vecs.last().unwrap();
            // w completes v to a unimodular basis; k shears along v
            let (_, x, y) = egcd(v.a, v.b);
            let w = RodVector { a: -y, b: x }; // det(v, w) = v.a*x + v.b*y = 1
            let k = rng.gen_range(-2i64..=2);
            let e: i64 = if rng.gen_bool(0.5) { 1 } else { -1 };
            vecs.push(RodVector { a: k * v.a + e * w.a, b: k * v.b + e * w.b });
        }
        if pair_det(vecs[0], *vecs.last().unwrap()) == 0 {
            continue;
        }
        let mut corners = Vec::with_capacity(n);
        let mut z = 0.0;
        for _ in 0..n {
            corners.push(z);
            z += rng.gen_range(0.5..2.5);
        }
        return RodStructure::new(corners, vecs).expect("generated structure is well-formed");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rv(a: i64, b: i64) -> RodVector {
        RodVector::new(a, b).unwrap()
    }

    fn rs(corners: &[f64], vecs: &[(i64, i64)]) -> RodStructure {
        RodStructure::new(
            corners.to_vec(),
            vecs.iter().map(|&(a, b)| rv(a, b)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn taub_bolt_admissible() {
        let r = rs(&[0.0, 1.0], &[(0, 1), (1, 0), (1, -1)]);
        let rep = validate_rod_structure(&r);
        assert_eq!(rep.junction_dets, vec![-1, -1]);
        assert!(rep.admissible);
    }

    #[test]
    fn unimodular_pair_admissible() {
        let r = rs(&[0.0], &[(0, 1), (1, 0)]);
        let rep = validate_rod_structure(&r);
        assert_eq!(rep.junction_dets, vec![-1]);
        assert!(rep.admissible);
    }

    #[test]
    fn determinant_two_rejected() {
        let r = RodStructure::new(vec![0.0], vec![rv(0, 1), RodVector { a: 2, b: 0 }]);
        // (2,0) is not primitive; construction itself rejects it
        assert!(matches!(r, Err(RodError::NonPrimitive { .. })));
        // a primitive pair with |det| = 2 passes construction but fails admissibility
        let r = rs(&[0.0], &[(0, 1), (2, 1)]);
        let rep = validate_rod_structure(&r);
        assert_eq!(rep.junction_dets, vec![-2]);
        assert!(!rep.admissible);
        assert_eq!(rep.failing_junctions, vec![1]);
    }

    #[test]
    fn corners_must_increase() {
        let r = RodStructure::new(vec![1.0, 0.0], vec![rv(0, 1), rv(1, 0), rv(1, -1)]);
        assert!(matches!(r, Err(RodError::CornersNotIncreasing { .. })));
    }

    #[test]
    fn lens_taub_bolt_is_sphere() {
        let r = rs(&[0.0, 1.0], &[(0, 1), (1, 0), (1, -1)]);
        let lens = lens_invariants(&r).unwrap();
        assert_eq!(lens.p, 1);
        assert_eq!(lens.q, 0);
    }

    #[test]
    fn lens_normal_form_input() {
        let r = rs(&[0.0], &[(0, 1), (3, -1)]);
        let lens = lens_invariants(&r).unwrap();
        assert_eq!((lens.p, lens.q), (3, 1));
    }

    #[test]
    fn lens_self_dual_family() {
        // v_i = (i-1, i-2) for i = 1..n+1 gives L(n, 1)
        for n in 1..=6i64 {
            let corners: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let vecs: Vec<RodVector> =
                (1..=n + 1).map(|i| rv(i - 1, i - 2)).collect();
            let r = RodStructure::new(corners, vecs).unwrap();
            let lens = lens_invariants(&r).unwrap();
            assert_eq!(lens.p, n, "p mismatch at n = {n}");
            if n > 1 {
                assert_eq!(lens.q, 1, "q mismatch at n = {n}");
            }
        }
    }

    #[test]
    fn lens_basis_change_contract() {
        let r = rs(&[0.0, 1.0], &[(0, 1), (1, 0), (1, -1)]);
        let lens = lens_invariants(&r).unwrap();
        let v1 = if lens.flipped_first { r.rod_vectors[0].neg() } else { r.rod_vectors[0] };
        let mut vl = *r.rod_vectors.last().unwrap();
        if lens.flipped_last {
            vl = vl.neg();
        }
        assert_eq!(imat_apply(&lens.basis_change, v1), RodVector { a: 0, b: 1 });
        assert_eq!(
            imat_apply(&lens.basis_change, vl),
            RodVector { a: lens.p, b: -lens.q }
        );
        assert_eq!(imat_det(&lens.basis_change).abs(), 1);
    }

    #[test]
    fn lens_parallel_ends_rejected() {
        let r = rs(&[0.0, 1.0], &[(0, 1), (1, 0), (0, 1)]);
        assert_eq!(lens_invariants(&r), Err(RodError::LensInconsistent));
    }

    #[test]
    fn adapted_basis_examples() {
        // (0,1) -> identity
        assert_eq!(adapted_basis_for(rv(0, 1)), [[1, 0], [0, 1]]);
        // (1,0): second column (1,0), |det| = 1
        let b = adapted_basis_for(rv(1, 0));
        assert_eq!((b[0][1], b[1][1]), (1, 0));
        assert_eq!(imat_det(&b).abs(), 1);
        // (1,-1)
        let b = adapted_basis_for(rv(1, -1));
        assert_eq!((b[0][1], b[1][1]), (1, -1));
        assert_eq!(imat_det(&b).abs(), 1);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        proptest! {
            /// Generated structures always validate and carry lens data
            /// with q reduced into [0, p).
            #[test]
            fn generated_structures_validate_and_have_lens_data(
                seed in 0u64..500,
                n in 1usize..=5,
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rs = random_admissible_structure(&mut rng, n);
                let report = validate_rod_structure(&rs);
                prop_assert!(report.admissible);
                let lens = lens_invariants(&rs).unwrap();
                prop_assert!(lens.p >= 1);
                prop_assert!(lens.q >= 0 && (lens.p == 1 || lens.q < lens.p));
                prop_assert_eq!(imat_det(&lens.basis_change).abs(), 1);
            }

            /// |p| is invariant under a global unimodular relabeling of the
            /// torus basis (q may change within its equivalence class).
            #[test]
            fn lens_p_is_a_basis_invariant(
                seed in 0u64..200,
                n in 1usize..=4,
                a in -3i64..=3,
                b in -3i64..=3,
                c in -3i64..=3,
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rs = random_admissible_structure(&mut rng, n);
                // product of shears is always unimodular
                let m = imat_mul(
                    &imat_mul(&[[1, a], [0, 1]], &[[1, 0], [b, 1]]),
                    &[[1, c], [0, 1]],
                );
                let relabeled = RodStructure::new(
                    rs.corners.clone(),
                    rs.rod_vectors.iter().map(|&v| imat_apply(&m, v)).collect(),
                )
                .unwrap();
                let l0 = lens_invariants(&rs).unwrap();
                let l1 = lens_invariants(&relabeled).unwrap();
                prop_assert_eq!(l0.p, l1.p);
            }

            /// The adapted basis for a primitive vector is unimodular and
            /// carries that vector in its second column.
            #[test]
            fn adapted_basis_contract(va in -20i64..=20, vb in -20i64..=20) {
                prop_assume!((va, vb) != (0, 0) && gcd(va, vb) == 1);
                let v = RodVector { a: va, b: vb };
                let m = adapted_basis_for(v);
                prop_assert_eq!(imat_det(&m).abs(), 1);
                prop_assert_eq!((m[0][1], m[1][1]), (va, vb));
            }
        }
    }
}

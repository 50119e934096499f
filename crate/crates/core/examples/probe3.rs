//! Scratch probe: criterion-4 numbers with the inner-window j fit and
//! tol = 1e-5 bolt solves; also re-checks TN j on the saved snapshot.

use instanton_core::diagnostics::{
    basis_matches, fit_asymptotics, mazur_field, transform_field, AsymptoticFit,
};
use instanton_core::grid::{HalfPlaneGrid, PhiField};
use instanton_core::model_map::{AsymptoticClass, MapVariant, ModelMapSpec};
use instanton_core::oracles::{taub_bolt_pipeline_gram, BasisTag};
use instanton_core::snapshot::GridSnapshot;
use instanton_core::solver::{margin_excluded, solve, SolveParams};
use instanton_core::{RodStructure, RodVector};
use std::path::Path;
use std::time::Instant;

fn rv(list: &[(i64, i64)]) -> Vec<RodVector> {
    list.iter().map(|&(a, b)| RodVector { a, b }).collect()
}

fn margin_sup(psi: &[f64], grid: &HalfPlaneGrid) -> f64 {
    let mut s = 0.0f64;
    for k in 0..grid.n_z {
        for j in 0..grid.n_rho {
            if !margin_excluded(grid, grid.rho(j), grid.z(k)) {
                s = s.max(psi[grid.idx(j, k)]);
            }
        }
    }
    s
}

fn main() {
    let snap = GridSnapshot::load(Path::new(
        "/tmp/instanton-cli-11955-solve-tn/runs/solve-b158730f/solution.snap",
    ))
    .unwrap();
    let tn_phi = snap.to_phi();
    if let AsymptoticFit::Alf { nut, mass, j, j_spread } =
        fit_asymptotics(&tn_phi, &snap.grid, &AsymptoticClass::Alf { n: 1.0 }).unwrap()
    {
        println!("TN 96x192: nut={nut:.4} m/N={:.4} j={j:+.2e} spread={j_spread:.2e}", mass / nut);
    }

    let rs = RodStructure::new(vec![0.0, 1.5], rv(&[(0, 1), (1, 0), (1, 1)])).unwrap();
    for (nr, nz, br) in [(96usize, 192usize, 20.0f64), (160, 320, 33.0)] {
        let spec = ModelMapSpec::with_geometry(
            &rs,
            AsymptoticClass::Alf { n: 1.0 },
            MapVariant::Main,
            0.25,
            Some(br),
            0.3,
        )
        .unwrap();
        let mut params = SolveParams::default();
        params.n_rho = nr;
        params.n_z = nz;
        params.tol = 1e-5;
        params.max_sweeps = 60000;
        params.omega = if nz >= 512 { 1.985 } else { 1.95 };
        let t0 = Instant::now();
        let r = solve(&spec, &params).unwrap();
        println!(
            "bolt {nr}x{nz} R={br}: {:.1}s sweeps={} tau={:.2e} conv={}",
            t0.elapsed().as_secs_f64(),
            r.report.iterations,
            r.report.final_tension,
            r.report.converged
        );
        let raw = PhiField::from_fn(&r.grid, BasisTag::Lens { p: 1, q: 0 }, |rho, z| {
            taub_bolt_pipeline_gram(1.0, rho.max(0.05), z)
                .or_else(|_| taub_bolt_pipeline_gram(1.0, rho.max(0.2), z))
                .unwrap()
                .g
                / rho.max(0.05)
        });
        let mut best = f64::INFINITY;
        for m in basis_matches(&rv(&[(0, 1), (1, 0), (1, -1)]), &spec.lens_vectors) {
            let t = transform_field(&raw, &m, raw.basis);
            let (psi, _) = mazur_field(&r.phi, &t, &r.grid).unwrap();
            best = best.min(margin_sup(&psi, &r.grid));
        }
        println!("  mazur margin = {best:.3e}");
        if let AsymptoticFit::Alf { nut, mass, j, j_spread } =
            fit_asymptotics(&r.phi, &r.grid, &AsymptoticClass::Alf { n: 1.0 }).unwrap()
        {
            println!("  nut={nut:.4} mass={mass:.4} j={j:+.4} spread={j_spread:.4}");
        }
    }
}

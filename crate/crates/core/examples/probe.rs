use std::time::Instant;
use instanton_core::diagnostics::{fit_asymptotics, fit_mass_from_nu, mazur_field, AsymptoticFit, transform_field, basis_matches, calibrate_nu};
use instanton_core::grid::{HalfPlaneGrid, PhiField};
use instanton_core::model_map::{AsymptoticClass, ModelMapSpec, model_map_eval};
use instanton_core::oracles::{asymptotic_model_gram, taub_bolt_pipeline_gram, AsymptoticModelParams, BasisTag};
use instanton_core::solver::{solve, SolveParams, conformal_factor, margin_excluded};
use instanton_core::{RodStructure, RodVector};

fn rv(list: &[(i64,i64)]) -> Vec<RodVector> { list.iter().map(|&(a,b)| RodVector{a,b}).collect() }

fn margin_sup(psi: &[f64], grid: &HalfPlaneGrid) -> f64 {
    let mut s = 0.0f64;
    for k in 0..grid.n_z { for j in 0..grid.n_rho {
        if !margin_excluded(grid, grid.rho(j), grid.z(k)) { s = s.max(psi[grid.idx(j,k)]); }
    }}
    s
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    if which == "tn" {
        let rs = RodStructure::new(vec![0.0], rv(&[(0,1),(1,0)])).unwrap();
        let spec = ModelMapSpec::with_geometry(&rs, AsymptoticClass::Alf{n:1.0}, instanton_core::model_map::MapVariant::Main, 0.25, Some(40.0), 0.3).unwrap();
        let t0 = Instant::now();
        let mut params = SolveParams::default();
        params.n_rho = 256; params.n_z = 512; params.tol = 1e-6; params.max_sweeps = 40000; params.omega = 1.985;
        let r = solve(&spec, &params).unwrap();
        println!("TN 256x512 big_r=40: {:.1}s sweeps={} tau={:.2e} conv={}", t0.elapsed().as_secs_f64(), r.report.iterations, r.report.final_tension, r.report.converged);
        let p = AsymptoticModelParams::alf(1,0,1.0).unwrap();
        let oracle = PhiField::from_fn(&r.grid, BasisTag::Lens{p:1,q:0}, |rho,z| asymptotic_model_gram(&p,rho,z).unwrap().g/rho);
        let (psi, sup) = mazur_field(&r.phi, &oracle, &r.grid).unwrap();
        println!("  mazur sup={:.2e} margin={:.2e}", sup, margin_sup(&psi,&r.grid));
        if let AsymptoticFit::Alf{nut,mass,j,j_spread} = fit_asymptotics(&r.phi,&r.grid,&AsymptoticClass::Alf{n:1.0}).unwrap() {
            println!("  nut={:.4} m/N={:.4} j={:.2e} spread={:.2e}", nut, mass/nut, j, j_spread);
        }
        let (mut nu, loopres) = conformal_factor(&r.phi, &r.grid);
        let gref = (r.grid.n_rho-2, r.grid.n_z/2);
        let s = model_map_eval(&spec, r.grid.rho(gref.0), r.grid.z(gref.1)).unwrap();
        calibrate_nu(&mut nu, &r.grid, s.nu);
        println!("  nu loop={:.2e} m_nu={:.4}", loopres, fit_mass_from_nu(&nu,&r.grid,1.0).unwrap());
    }
    if which == "bolt" {
        for (nr,nz,br) in [(192usize,384usize,30.0f64), (256,512,40.0)] {
            let rs = RodStructure::new(vec![0.0, 1.5], rv(&[(0,1),(1,0),(1,1)])).unwrap();
            let spec = ModelMapSpec::with_geometry(&rs, AsymptoticClass::Alf{n:1.0}, instanton_core::model_map::MapVariant::Main, 0.25, Some(br), 0.3).unwrap();
            let t0 = Instant::now();
            let mut params = SolveParams::default();
            params.n_rho = nr; params.n_z = nz; params.tol = 1e-6; params.max_sweeps = 40000;
            let r = solve(&spec, &params).unwrap();
            println!("Bolt {}x{} R={}: {:.1}s sweeps={} tau={:.2e} conv={}", nr, nz, br, t0.elapsed().as_secs_f64(), r.report.iterations, r.report.final_tension, r.report.converged);
            let raw = PhiField::from_fn(&r.grid, BasisTag::Lens{p:1,q:0}, |rho,z| taub_bolt_pipeline_gram(1.0,rho,z).unwrap().g/rho);
            let vs = rv(&[(0,1),(1,0),(1,-1)]);
            let mut best = f64::INFINITY;
            for m in basis_matches(&vs, &spec.lens_vectors) {
                let t = transform_field(&raw, &m, raw.basis);
                let (psi, _) = mazur_field(&r.phi, &t, &r.grid).unwrap();
                best = best.min(margin_sup(&psi, &r.grid));
            }
            println!("  mazur margin={:.2e}", best);
            if let AsymptoticFit::Alf{nut,mass,j,j_spread} = fit_asymptotics(&r.phi,&r.grid,&AsymptoticClass::Alf{n:1.0}).unwrap() {
                println!("  nut={:.4} m={:.4} (want 0.625) j={:.3} spread={:.2e}", nut, mass, j, j_spread);
            }
        }
    }
}

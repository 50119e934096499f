use instanton_core::grid::PhiField;
use instanton_core::oracles::{taub_bolt_pipeline_gram, BasisTag};
use instanton_core::snapshot::GridSnapshot;
use instanton_core::solver::margin_excluded;
use nalgebra::Matrix2;
use std::path::Path;

fn main() {
    let a = GridSnapshot::load(Path::new("/tmp/clitest/runs/solve-5b7c6d3d/solution.snap")).unwrap();
    let pa = a.to_phi();
    let g = a.grid.clone();
    let mut results: Vec<(f64, String)> = Vec::new();
    for refl in [false, true] {
        let oracle = PhiField::from_fn(&g, BasisTag::Lens{p:1,q:0}, |rho,z| {
            let zz = if refl { 1.5 - z } else { z };
            taub_bolt_pipeline_gram(1.0, rho, zz).unwrap().g / rho
        });
        for m00 in -2i64..=2 { for m01 in -2i64..=2 { for m10 in -2i64..=2 { for m11 in -2i64..=2 {
            if (m00*m11 - m01*m10).abs() != 1 { continue; }
            let mf = Matrix2::new(m00 as f64, m01 as f64, m10 as f64, m11 as f64);
            let mi = mf.try_inverse().unwrap();
            let mut msup = 0.0f64;
            for k in 0..g.n_z { for j in 0..g.n_rho {
                let (rho, z) = (g.rho(j), g.z(k));
                if margin_excluded(&g, rho, z) { continue; }
                let go = mi.transpose() * oracle.data[g.idx(j,k)] * mi;
                let psi = (go * pa.data[g.idx(j,k)].try_inverse().unwrap()).trace() - 2.0;
                msup = msup.max(psi.abs());
            }}
            results.push((msup, format!("refl={refl} M=[[{m00},{m01}],[{m10},{m11}]]")));
        }}}}
    }
    results.sort_by(|x,y| x.0.total_cmp(&y.0));
    for (v, d) in results.iter().take(5) { println!("{d}: margin sup {v:.3e}"); }
}

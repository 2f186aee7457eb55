use multisol::aobd::*;
use multisol::galerkin::*;
use multisol::geometry::EllipseDomain;
use multisol::io::analysis;
use multisol::problems::henon_cubic;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let dp = DiscreteProblem::new(EllipseDomain::unit_disk(), henon_cubic(), 16, 16).unwrap();
    let cfg = AobdConfig {
        seed: 1,
        structured_seeds: vec![SeedShape::CenterBump { amp: 4.0, width: 0.6 }],
        ..AobdConfig::default()
    };
    let out = run_driver(&dp, &cfg).unwrap();
    println!("henon 16x16: {} records in {:.1?}", out.records.len(), t0.elapsed());
    for (i, r) in out.records.iter().enumerate() {
        let s = analysis::sample_field(&dp, r.xi.as_vector(), 33, 64).unwrap();
        println!(
            "  {i}: J = {:9.3} res = {:.1e} |xi| = {:7.3} range [{:7.3},{:7.3}] {}",
            r.j_value, r.residual_inf, r.xi.as_vector().norm(), s.min(), s.max(), r.origin
        );
    }
    let classes = analysis::shape_classes(&dp, &out.records, 1e-3).unwrap();
    println!("shape classes: {}", classes.len());
    for l in &out.log {
        println!("  | {l}");
    }
}

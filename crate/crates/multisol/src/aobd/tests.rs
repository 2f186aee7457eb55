use super::*;
use crate::problems::{henon_cubic, sine_gordon};

fn henon_dp(m: usize, n: usize) -> DiscreteProblem {
    DiscreteProblem::new(EllipseDomain::unit_disk(), henon_cubic(), m, n).unwrap()
}

fn unit_vec(n: usize, k: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[k] = 1.0;
    v
}

#[test]
fn gram_schmidt_examples() {
    let dp = henon_dp(3, 5);
    let n = dp.dof();
    let e1 = unit_vec(n, 0);
    let e2 = unit_vec(n, 1);
    let basis = gram_schmidt(
        &dp,
        &[e1.clone(), &e1 + &e2],
        InnerProduct::CoefficientL2,
        1e-8,
    );
    assert_eq!(basis.len(), 2);
    assert!((&basis.members[0] - &e1).norm() < 1e-14);
    assert!((&basis.members[1] - &e2).norm() < 1e-14);

    // duplicates are dropped
    let basis = gram_schmidt(
        &dp,
        &[e1.clone(), e1.clone()],
        InnerProduct::CoefficientL2,
        1e-8,
    );
    assert_eq!(basis.len(), 1);
}

#[test]
fn gram_schmidt_random_vectors_orthonormal() {
    let dp = henon_dp(3, 10); // dof >= 50
    let n = dp.dof();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let vecs: Vec<DVector<f64>> = (0..5)
        .map(|_| DVector::from_fn(n, |_, _| rng.gen::<f64>() * 2.0 - 1.0))
        .collect();
    let basis = gram_schmidt(&dp, &vecs, InnerProduct::CoefficientL2, 1e-8);
    assert_eq!(basis.len(), 5);
    let (off, diag) = basis.orthonormality_defect(&dp, InnerProduct::CoefficientL2);
    assert!(off < 1e-12, "off-diagonal {off}");
    assert!(diag < 1e-12, "diagonal defect {diag}");
}

#[test]
fn gram_schmidt_field_inner_product() {
    let dp = henon_dp(3, 6);
    let n = dp.dof();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vecs: Vec<DVector<f64>> = (0..3)
        .map(|_| DVector::from_fn(n, |_, _| rng.gen::<f64>() * 2.0 - 1.0))
        .collect();
    let basis = gram_schmidt(&dp, &vecs, InnerProduct::FieldL2, 1e-8);
    let (off, diag) = basis.orthonormality_defect(&dp, InnerProduct::FieldL2);
    assert!(off < 1e-10 && diag < 1e-10);
}

fn record_from_xi(dp: &DiscreteProblem, xi: DVector<f64>, residual: f64) -> SolutionRecord {
    SolutionRecord {
        xi: SpectralCoefficients::from_vec(dp.modes(), dp.degree(), xi).unwrap(),
        residual_inf: residual,
        j_value: 0.0,
        amplitudes: vec![],
        iterations: 0,
        converged: true,
        origin: "test".into(),
        trace: vec![],
    }
}

#[test]
fn dedup_examples() {
    let dp = henon_dp(3, 5);
    let n = dp.dof();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xi: DVector<f64> = DVector::from_fn(n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);

    // exact duplicate collapses to the lower-residual representative
    let out = dedup(
        vec![
            record_from_xi(&dp, xi.clone(), 1e-9),
            record_from_xi(&dp, xi.clone(), 1e-12),
        ],
        1e-6,
    );
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].residual_inf, 1e-12);

    // u and -u stay distinct
    let out = dedup(
        vec![
            record_from_xi(&dp, xi.clone(), 1e-10),
            record_from_xi(&dp, -&xi, 1e-10),
        ],
        1e-6,
    );
    assert_eq!(out.len(), 2);

    // small perturbation merges
    let mut pert = xi.clone();
    pert[0] += 1e-8;
    let out = dedup(
        vec![
            record_from_xi(&dp, xi.clone(), 1e-10),
            record_from_xi(&dp, pert, 1e-10),
        ],
        1e-6,
    );
    assert_eq!(out.len(), 1);
}

#[test]
fn seed_basis_henon_positive_bump() {
    let dp = henon_dp(6, 8);
    let cfg = AobdConfig::default();
    let xi0 = SeedShape::CenterBump { amp: 4.0, width: 0.6 }.build(&dp);
    let (chi0, alpha0, _) = seed_basis(&dp, &xi0, &cfg).expect("seed converges");
    assert!(alpha0 > 0.0);
    assert!((chi0.norm() - 1.0).abs() < 1e-12);

    // the normalization is a quotient: a nearby start in the same basin
    // yields the same direction up to sign
    let xi1 = 1.0001 * (&chi0 * alpha0);
    let (chi0b, _, _) = seed_basis(&dp, &xi1, &cfg).expect("reseed converges");
    let d = (&chi0 - &chi0b).norm().min((&chi0 + &chi0b).norm());
    assert!(d < 1e-8, "direction changed by {d}");

    // the represented solution is single-signed (ground state)
    let stats: Vec<f64> = dp
        .evaluate_field(&(&chi0 * alpha0), &grid_pts(20, 16))
        .unwrap();
    let min = stats.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = stats.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(min > -1e-7 || max < 1e-7, "seed solution changes sign");
}

fn grid_pts(nr: usize, nth: usize) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for i in 0..nr {
        for s in 0..nth {
            pts.push((
                i as f64 / (nr - 1) as f64,
                2.0 * std::f64::consts::PI * s as f64 / nth as f64,
            ));
        }
    }
    pts
}

#[test]
fn amplitude_roots_oddness_henon() {
    let dp = henon_dp(6, 8);
    let cfg = AobdConfig::default();
    let xi0 = SeedShape::CenterBump { amp: 4.0, width: 0.6 }.build(&dp);
    let (chi0, alpha0, _) = seed_basis(&dp, &xi0, &cfg).unwrap();

    // omega is an odd cubic in alpha: roots come in +/- pairs around 0
    let ray = RayProjection::new(&dp, &DVector::zeros(dp.dof()), &chi0);
    for a in [0.5, 1.0, 2.7, 5.0] {
        assert!(
            (ray.eval(a) + ray.eval(-a)).abs() < 1e-10 * ray.eval(a).abs().max(1.0),
            "omega not odd at {a}"
        );
    }
    let roots = amplitude_roots(&dp, &[], &chi0, &cfg.search).unwrap();
    assert!(roots.iter().any(|r| r.abs() < 1e-8), "alpha = 0 is a root");
    // the converged amplitude itself is a root
    assert!(
        roots.iter().any(|r| (r - alpha0).abs() < 1e-6 * alpha0),
        "alpha0 = {alpha0} missing from {roots:?}"
    );
    // +/- pairing
    for &r in &roots {
        if r.abs() > 1e-6 {
            assert!(
                roots.iter().any(|&s| (s + r).abs() < 1e-6 * r.abs()),
                "no mirror of {r} in {roots:?}"
            );
        }
    }
}

#[test]
fn amplitude_zero_root_for_sine_gordon() {
    let dp = DiscreteProblem::new(
        EllipseDomain::unit_disk(),
        sine_gordon(30.0, BoundaryKind::Dirichlet).unwrap(),
        4,
        6,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let chi = {
        let v = DVector::from_fn(dp.dof(), |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        &v / v.norm()
    };
    let ray = RayProjection::new(&dp, &DVector::zeros(dp.dof()), &chi);
    assert!(ray.eval(0.0).abs() < 1e-14, "trivial solution is a root");
}

#[test]
fn ray_projection_matches_direct_assembly() {
    let dp = henon_dp(5, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let fixed = DVector::from_fn(dp.dof(), |_, _| 0.3 * (rng.gen::<f64>() * 2.0 - 1.0));
    let chi = {
        let v = DVector::from_fn(dp.dof(), |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        &v / v.norm()
    };
    let ray = RayProjection::new(&dp, &fixed, &chi);
    for alpha in [-2.0, -0.3, 0.0, 1.1, 4.2] {
        let direct = dp
            .assemble_residual(&(&fixed + &chi * alpha))
            .unwrap()
            .dot(&chi);
        let fast = ray.eval(alpha);
        assert!(
            (direct - fast).abs() <= 1e-11 * direct.abs().max(1.0),
            "alpha {alpha}: {fast} vs {direct}"
        );
    }
}

#[test]
fn span_system_jacobian_consistent() {
    let dp = henon_dp(5, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let chis: Vec<DVector<f64>> = (0..3)
        .map(|_| {
            let v = DVector::from_fn(dp.dof(), |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            &v / v.norm()
        })
        .collect();
    let sys = SpanSystem::new(&dp, &chis);
    let a = DVector::from_vec(vec![1.3, -0.7, 0.2]);

    // residual equals direct assembly
    let mut xi = DVector::zeros(dp.dof());
    for (i, c) in chis.iter().enumerate() {
        xi += c * a[i];
    }
    let direct = dp.assemble_residual(&xi).unwrap();
    assert!(((&sys.residual(&a)) - &direct).amax() < 1e-11 * direct.amax().max(1.0));

    // analytic Jacobian vs finite differences
    let jac = sys.jacobian(&a).unwrap();
    let h = 1e-6;
    for i in 0..3 {
        let mut ap = a.clone();
        ap[i] += h;
        let mut am = a.clone();
        am[i] -= h;
        let fd = (sys.residual(&ap) - sys.residual(&am)) / (2.0 * h);
        assert!((jac.column(i) - fd).amax() < 1e-5 * jac.amax().max(1.0));
    }
}

#[test]
fn driver_henon_finds_multiple_records() {
    let dp = henon_dp(8, 8);
    let cfg = AobdConfig {
        basis_budget: 3,
        enrich_starts: 4,
        max_seeds_per_stage: 8,
        seed: 7,
        structured_seeds: vec![SeedShape::CenterBump { amp: 4.0, width: 0.6 }],
        search: GridSearchSpec::new(-30.0, 30.0, 300),
        ..AobdConfig::default()
    };
    let out = run_driver(&dp, &cfg).expect("driver runs");
    assert!(
        out.records.len() >= 3,
        "records found: {} ({:?})",
        out.records.len(),
        out.log
    );
    for rec in &out.records {
        assert!(rec.converged);
        // independent re-assembly agrees with the stored residual
        let re = dp.assemble_residual(rec.xi.as_vector()).unwrap().amax();
        assert!(re <= cfg.record_tol, "record residual {re}");
        // sign partner is present (odd nonlinearity; driver seeds +/- pairs)
        let has_mirror = out.records.iter().any(|other| {
            (other.xi.as_vector() + rec.xi.as_vector()).norm()
                <= 1e-5 * rec.xi.as_vector().norm().max(1.0)
        });
        assert!(has_mirror, "missing -u partner for a record");
    }
    // basis stayed orthonormal
    let (off, diag) = out.basis.orthonormality_defect(&dp, cfg.inner_product);
    assert!(off <= 1e-10 && diag <= 1e-10, "basis defect {off}/{diag}");
}

#[test]
fn driver_is_deterministic() {
    let dp = henon_dp(6, 8);
    let cfg = AobdConfig {
        basis_budget: 2,
        enrich_starts: 3,
        max_seeds_per_stage: 6,
        seed: 42,
        structured_seeds: vec![SeedShape::CenterBump { amp: 4.0, width: 0.6 }],
        search: GridSearchSpec::new(-30.0, 30.0, 200),
        ..AobdConfig::default()
    };
    let a = run_driver(&dp, &cfg).unwrap();
    let b = run_driver(&dp, &cfg).unwrap();
    assert_eq!(a.records.len(), b.records.len());
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(ra.xi.as_vector(), rb.xi.as_vector(), "records differ between runs");
        assert_eq!(ra.residual_inf, rb.residual_inf);
    }
}

#[test]
fn enrichment_constraints_hold() {
    let dp = henon_dp(8, 8);
    let cfg = AobdConfig {
        enrich_starts: 8,
        structured_seeds: vec![SeedShape::CenterBump { amp: 4.0, width: 0.6 }],
        ..AobdConfig::default()
    };
    let xi0 = cfg.structured_seeds[0].build(&dp);
    let (chi0, alpha0, _) = seed_basis(&dp, &xi0, &cfg).unwrap();
    let basis = AdaptiveBasis { members: vec![chi0.clone()] };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let triples = enrich_basis(&dp, &basis, &[alpha0], &cfg, &mut rng).unwrap();
    assert!(!triples.is_empty(), "no enrichment directions found");
    for (_, a1, chi) in &triples {
        assert!(a1.abs() >= cfg.dedup_tol);
        assert!(dp.inner_product(&chi0, chi, cfg.inner_product).abs() <= 1e-8);
        assert!((dp.inner_product(chi, chi, cfg.inner_product) - 1.0).abs() <= 1e-8);
    }
}

#[test]
fn continuation_identity_and_descent() {
    let dp = henon_dp(6, 8);
    let cfg = AobdConfig::default();
    let xi0 = SeedShape::CenterBump { amp: 4.0, width: 0.6 }.build(&dp);
    let (chi0, alpha0, _) = seed_basis(&dp, &xi0, &cfg).unwrap();
    let rec = {
        let xi = &chi0 * alpha0;
        let residual = dp.assemble_residual(&xi).unwrap().amax();
        let j = dp.functional_value(&xi).unwrap();
        SolutionRecord {
            xi: SpectralCoefficients::from_vec(dp.modes(), dp.degree(), xi).unwrap(),
            residual_inf: residual,
            j_value: j,
            amplitudes: vec![alpha0],
            iterations: 0,
            converged: true,
            origin: "test".into(),
            trace: vec![],
        }
    };

    // zero steps: identity
    let paths = continue_in_geometry(&dp, &[rec.clone()], dp.domain().b(), 0, &cfg).unwrap();
    assert_eq!(paths[0].steps.len(), 1);
    assert!(!paths[0].truncated);
    assert_eq!(paths[0].final_xi.as_vector(), rec.xi.as_vector());

    // walk to b = 0.8 in 2 steps; the record stays converged and keeps a
    // single interior extremum
    let paths = continue_in_geometry(&dp, &[rec], 0.8, 2, &cfg).unwrap();
    assert!(!paths[0].truncated, "continuation lost convergence");
    assert_eq!(paths[0].steps.len(), 3);
    let last = paths[0].steps.last().unwrap();
    assert!((last.b - 0.8).abs() < 1e-12);
    assert!(last.residual_inf <= cfg.record_tol);

    assert!(continue_in_geometry(&dp, &[], 1.5, 2, &cfg).is_err());
}

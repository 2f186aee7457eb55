use super::*;
use crate::aobd::SeedShape;
use std::fs;

fn small_henon_config(seed: u64) -> RunConfig {
    RunConfig {
        problem: "henon".into(),
        bc: BoundaryKind::Dirichlet,
        scale: 1.0,
        modes: 6,
        degree: 8,
        seed,
        basis_budget: 2,
        enrich_starts: 3,
        max_seeds_per_stage: 6,
        amp_lo: -30.0,
        amp_hi: 30.0,
        amp_points: 200,
        structured_seeds: vec![SeedShape::CenterBump { amp: 4.0, width: 0.6 }],
        ..RunConfig::default()
    }
}

#[test]
fn config_text_roundtrip() {
    let mut cfg = small_henon_config(42);
    cfg.sweep_b_end = Some(0.8);
    cfg.sweep_steps = 4;
    let text = cfg.to_text();
    let back = RunConfig::parse(&text).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn config_parse_reports_line_numbers() {
    let err = RunConfig::parse("problem = henon\nbogus_key = 1\n").unwrap_err();
    match err {
        IoError::Config { line, .. } => assert_eq!(line, 2),
        other => panic!("wrong error {other}"),
    }
    let err = RunConfig::parse("modes == 3\n").unwrap_err();
    assert!(matches!(err, IoError::Config { line: 1, .. }));
    // field validation
    let err = RunConfig::parse("b = 2.0\n").unwrap_err();
    assert!(matches!(err, IoError::Field { .. }));
}

#[test]
fn seed_shape_syntax() {
    let cfg = RunConfig::parse(
        "problem = henon\nstructured_seeds = center-bump(3,0.5); ring-bumps(4,2,0.7,0.3); paraboloid(1.5)\n",
    )
    .unwrap();
    assert_eq!(cfg.structured_seeds.len(), 3);
    assert_eq!(
        cfg.structured_seeds[1],
        SeedShape::RingBumps { count: 4, amp: 2.0, r0: 0.7, width: 0.3 }
    );
    assert!(RunConfig::parse("structured_seeds = blob(1)\n").is_err());
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn run_bundle_deterministic_and_validates() {
    let cfg = small_henon_config(11);
    let tmp = tempfile::tempdir().unwrap();
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    let bundle = run(&cfg, &dir_a).unwrap();
    assert!(!bundle.records.is_empty());
    run(&cfg, &dir_b).unwrap();

    // same seed, bit-identical bundles
    let ta = tree_bytes(&dir_a);
    let tb = tree_bytes(&dir_b);
    assert_eq!(ta.len(), tb.len());
    for ((na, ba), (nb, bb)) in ta.iter().zip(&tb) {
        assert_eq!(na, nb);
        assert_eq!(ba, bb, "file {na} differs between identical runs");
    }

    // reload and compare coefficients bit-exactly
    let loaded = load_bundle(&dir_a).unwrap();
    assert_eq!(loaded.records.len(), bundle.records.len());
    for (orig, back) in bundle.records.iter().zip(&loaded.records) {
        assert_eq!(orig.xi.as_vector(), back.xi.as_vector());
        assert_eq!(orig.residual_inf, back.residual_inf);
        assert_eq!(orig.j_value, back.j_value);
    }

    // re-export the reloaded records: byte-identical payloads
    for (i, rec) in loaded.records.iter().enumerate() {
        let rewritten = record_file_text(&loaded.config, rec);
        let original = fs::read_to_string(dir_a.join(format!("records/record_{i:03}.coef"))).unwrap();
        assert_eq!(rewritten, original);
    }

    // validation passes on the intact bundle
    validate_bundle(&dir_a).unwrap();

    // corrupt one coefficient: validation must fail
    let path = dir_a.join("records/record_000.coef");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let coef_line = lines.iter().position(|l| !l.starts_with('#')).unwrap();
    let val: f64 = lines[coef_line].parse().unwrap();
    lines[coef_line] = format!("{:.16e}", val + 0.25);
    fs::write(&path, lines.join("\n")).unwrap();
    let err = validate_bundle(&dir_a).unwrap_err();
    assert!(matches!(err, IoError::Validation { index: 0, .. }), "{err}");
}

#[test]
fn field_export_properties() {
    let cfg = small_henon_config(13);
    let tmp = tempfile::tempdir().unwrap();
    let bundle = run(&cfg, tmp.path()).unwrap();
    let dp = cfg.discrete_problem().unwrap();
    let rec = &bundle.records[0];

    // Dirichlet: every boundary row has |u| below 1e-10
    let text = export_field_text(&dp, &cfg, rec, 9, 16).unwrap();
    for line in text.lines().skip(4) {
        let cols: Vec<&str> = line.split(',').collect();
        let r: f64 = cols[0].parse().unwrap();
        let u: f64 = cols[4].parse().unwrap();
        if (r - 1.0).abs() < 1e-14 {
            assert!(u.abs() <= 1e-10, "boundary value {u}");
        }
    }

    // single-point grid: one row, the axisymmetric contribution at r = 0
    let text = export_field_text(&dp, &cfg, rec, 1, 1).unwrap();
    let rows: Vec<&str> = text.lines().skip(4).collect();
    assert_eq!(rows.len(), 1);
    let center_direct = dp
        .evaluate_field(rec.xi.as_vector(), &[(0.0, 0.0)])
        .unwrap()[0];
    let u: f64 = rows[0].split(',').nth(4).unwrap().parse().unwrap();
    assert_eq!(u, center_direct);

    // header carries the config hash
    assert!(text.starts_with(&format!("# config_hash = {}", config_hash(&cfg))));
}

#[test]
fn sweep_writes_energy_table() {
    let mut cfg = small_henon_config(17);
    cfg.sweep_b_end = Some(0.85);
    cfg.sweep_steps = 3;
    let tmp = tempfile::tempdir().unwrap();
    let bundle = run(&cfg, tmp.path()).unwrap();
    assert!(!bundle.energy.is_empty());
    assert!(tmp.path().join("energy/curves.csv").exists());

    // endpoint rows at b = 1 reproduce the records' stored J values
    for row in bundle.energy.iter().filter(|r| (r.b - 1.0).abs() < 1e-14) {
        let rec = &bundle.records[row.record_id];
        assert_eq!(row.j_value, rec.j_value);
    }

    // per record, the b column is monotone (ascending) in file order
    let text = fs::read_to_string(tmp.path().join("energy/curves.csv")).unwrap();
    let mut last: Option<(usize, f64)> = None;
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("record_id")) {
        let cols: Vec<&str> = line.split(',').collect();
        let id: usize = cols[0].parse().unwrap();
        let b: f64 = cols[1].parse().unwrap();
        if let Some((lid, lb)) = last {
            if lid == id {
                assert!(b > lb, "b grid not monotone: {b} after {lb}");
            }
        }
        last = Some((id, b));
    }

    // the standalone sweep entry point refreshes the same table
    let refreshed = sweep(tmp.path(), 0.85, 3).unwrap();
    assert_eq!(refreshed.energy.len(), bundle.energy.len());
}

#[test]
fn empty_sweep_leaves_no_energy_section() {
    let cfg = small_henon_config(19);
    let tmp = tempfile::tempdir().unwrap();
    let bundle = run(&cfg, tmp.path()).unwrap();
    assert!(bundle.energy.is_empty());
    assert!(!tmp.path().join("energy").exists());
}

#[test]
fn analysis_classifies_fields() {
    let cfg = small_henon_config(23);
    let dp = cfg.discrete_problem().unwrap();

    // a positive bump interpolant: single-signed, one center peak
    let xi = dp.interpolate_field(|r, _| (1.0 - r * r).powi(2) * 3.0);
    let sample = analysis::sample_field(&dp, &xi, 33, 64).unwrap();
    assert!(sample.single_signed(1e-8));
    assert!(!sample.is_constant(1e-6));
    let peaks = sample.significant_peaks(0.3);
    assert_eq!(peaks.len(), 1, "peaks: {peaks:?}");
    assert_eq!(peaks[0].r, 0.0);
    assert!(!peaks[0].is_boundary());

    // half-height radius of (1-r^2)^2 is at (1-r^2)^2 = 1/2
    let r_half = sample.half_height_radius().unwrap();
    let expect = (1.0f64 - 0.5f64.sqrt()).sqrt();
    assert!((r_half - expect).abs() < 0.02, "{r_half} vs {expect}");

    // a dipole: sign-changing, two significant peaks off the boundary
    let xi = dp.interpolate_field(|r, th| (1.0 - r * r) * r * th.cos() * 4.0);
    let sample = analysis::sample_field(&dp, &xi, 33, 64).unwrap();
    assert!(!sample.single_signed(1e-8));
    let peaks = sample.significant_peaks(0.5);
    assert_eq!(peaks.len(), 2, "peaks: {peaks:?}");

    // four boundary bumps near r = 0.75 at the axes
    let xi = dp.interpolate_field(|r, th| {
        let bump = |dth: f64| (-((r - 0.75).powi(2) + 0.5 * dth.sin().powi(2)) / 0.02).exp();
        bump(th) + bump(th - std::f64::consts::FRAC_PI_2) + bump(th - std::f64::consts::PI)
            + bump(th - 1.5 * std::f64::consts::PI)
    });
    let sample = analysis::sample_field(&dp, &xi, 49, 96).unwrap();
    let peaks = sample.significant_peaks(0.5);
    assert_eq!(peaks.len(), 4, "peaks: {peaks:?}");
    for p in peaks {
        assert!(p.is_boundary());
    }
}

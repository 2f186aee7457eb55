//! Run configuration, result persistence and table exports.
//!
//! A run writes a self-contained bundle directory:
//!
//! ```text
//! out/
//!   config.txt              exact echo of the configuration
//!   log.txt                 driver event log
//!   records/index.txt       one line per record
//!   records/record_XYZ.coef header + one coefficient per line
//!   traces/record_XYZ.csv   trust-region trace of the final polish
//!   fields/record_XYZ.csv   field values on a default grid
//!   energy/curves.csv       J(u) versus b when a sweep ran
//! ```
//!
//! All numbers are printed with 17 significant digits, so reloading a
//! bundle reproduces every f64 bit-exactly, and a run is byte-for-byte
//! deterministic for a fixed seed.

pub mod analysis;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use thiserror::Error;

use crate::aobd::{self, AobdConfig, ContinuationPath, SeedShape, SolutionRecord};
use crate::galerkin::{
    BoundaryKind, DiscreteProblem, GalerkinError, InnerProduct, SpectralCoefficients,
};
use crate::geometry::EllipseDomain;
use crate::problems;
use crate::rootfind::GridSearchSpec;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("config field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error("record {index}: stored residual {stored:.3e} but recomputed {recomputed:.3e}")]
    Validation {
        index: usize,
        stored: f64,
        recomputed: f64,
    },
    #[error("no converged solutions found")]
    NoSolutions,
    #[error("bundle is missing {0}")]
    MissingPart(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Galerkin(#[from] GalerkinError),
    #[error(transparent)]
    Problem(#[from] crate::problems::ProblemError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Aobd(#[from] aobd::AobdError),
}

/// Everything needed to reproduce a run. Mirrors the CLI flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub bc: BoundaryKind,
    /// `lambda` for sine-Gordon, `delta` for Ginzburg-Landau, ignored by
    /// the cubic problem.
    pub scale: f64,
    pub a: f64,
    pub b: f64,
    pub modes: usize,
    pub degree: usize,
    pub seed: u64,
    pub record_tol: f64,
    pub basis_budget: usize,
    pub enrich_starts: usize,
    pub max_seeds_per_stage: usize,
    pub max_seed_attempts: usize,
    pub seed_amplitude: f64,
    pub amp_lo: f64,
    pub amp_hi: f64,
    pub amp_points: usize,
    pub inner_product: InnerProduct,
    pub structured_seeds: Vec<SeedShape>,
    pub sweep_b_end: Option<f64>,
    pub sweep_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let a = AobdConfig::default();
        Self {
            problem: "sine-gordon".into(),
            bc: BoundaryKind::Dirichlet,
            scale: 30.0,
            a: 1.0,
            b: 1.0,
            modes: 16,
            degree: 16,
            seed: 0,
            record_tol: a.record_tol,
            basis_budget: a.basis_budget,
            enrich_starts: a.enrich_starts,
            max_seeds_per_stage: a.max_seeds_per_stage,
            max_seed_attempts: a.max_seed_attempts,
            seed_amplitude: a.seed_amplitude,
            amp_lo: a.search.lo,
            amp_hi: a.search.hi,
            amp_points: a.search.points,
            inner_product: InnerProduct::CoefficientL2,
            structured_seeds: Vec::new(),
            sweep_b_end: None,
            sweep_steps: 6,
        }
    }
}

fn fmt_seed(s: &SeedShape) -> String {
    match *s {
        SeedShape::CenterBump { amp, width } => format!("center-bump({amp},{width})"),
        SeedShape::RingBumps {
            count,
            amp,
            r0,
            width,
        } => format!("ring-bumps({count},{amp},{r0},{width})"),
        SeedShape::Paraboloid { amp } => format!("paraboloid({amp})"),
    }
}

fn parse_seed_shape(text: &str) -> Result<SeedShape, String> {
    let text = text.trim();
    let (name, args) = match text.split_once('(') {
        Some((n, rest)) => {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| format!("missing `)` in seed `{text}`"))?;
            let vals: Result<Vec<f64>, _> =
                inner.split(',').map(|v| v.trim().parse::<f64>()).collect();
            (
                n.trim(),
                vals.map_err(|e| format!("bad number in seed `{text}`: {e}"))?,
            )
        }
        None => (text, Vec::new()),
    };
    match (name, args.as_slice()) {
        ("center-bump", [amp, width]) => Ok(SeedShape::CenterBump {
            amp: *amp,
            width: *width,
        }),
        ("ring-bumps", [count, amp, r0, width]) => Ok(SeedShape::RingBumps {
            count: *count as usize,
            amp: *amp,
            r0: *r0,
            width: *width,
        }),
        ("paraboloid", [amp]) => Ok(SeedShape::Paraboloid { amp: *amp }),
        _ => Err(format!("unknown seed shape `{text}`")),
    }
}

impl RunConfig {
    /// Serialize as `key = value` lines; the exact format written into
    /// bundles and accepted back by [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "problem = {}", self.problem);
        let _ = writeln!(
            s,
            "bc = {}",
            match self.bc {
                BoundaryKind::Dirichlet => "dirichlet",
                BoundaryKind::Neumann => "neumann",
            }
        );
        let _ = writeln!(s, "scale = {:.16e}", self.scale);
        let _ = writeln!(s, "a = {:.16e}", self.a);
        let _ = writeln!(s, "b = {:.16e}", self.b);
        let _ = writeln!(s, "modes = {}", self.modes);
        let _ = writeln!(s, "degree = {}", self.degree);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "record_tol = {:.16e}", self.record_tol);
        let _ = writeln!(s, "basis_budget = {}", self.basis_budget);
        let _ = writeln!(s, "enrich_starts = {}", self.enrich_starts);
        let _ = writeln!(s, "max_seeds_per_stage = {}", self.max_seeds_per_stage);
        let _ = writeln!(s, "max_seed_attempts = {}", self.max_seed_attempts);
        let _ = writeln!(s, "seed_amplitude = {:.16e}", self.seed_amplitude);
        let _ = writeln!(s, "amp_lo = {:.16e}", self.amp_lo);
        let _ = writeln!(s, "amp_hi = {:.16e}", self.amp_hi);
        let _ = writeln!(s, "amp_points = {}", self.amp_points);
        let _ = writeln!(
            s,
            "inner_product = {}",
            match self.inner_product {
                InnerProduct::CoefficientL2 => "coefficient-l2",
                InnerProduct::FieldL2 => "field-l2",
            }
        );
        if !self.structured_seeds.is_empty() {
            let seeds: Vec<String> = self.structured_seeds.iter().map(fmt_seed).collect();
            let _ = writeln!(s, "structured_seeds = {}", seeds.join("; "));
        }
        if let Some(b_end) = self.sweep_b_end {
            let _ = writeln!(s, "sweep_b_end = {:.16e}", b_end);
            let _ = writeln!(s, "sweep_steps = {}", self.sweep_steps);
        }
        s
    }

    /// Parse the `key = value` format; unknown keys and malformed lines are
    /// reported with their line number.
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut cfg = Self::default();
        let mut saw_sweep_end = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| IoError::Config {
                line: lineno + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |msg: String| IoError::Config {
                line: lineno + 1,
                msg,
            };
            match key {
                "problem" => cfg.problem = value.to_string(),
                "bc" => {
                    cfg.bc = match value {
                        "dirichlet" => BoundaryKind::Dirichlet,
                        "neumann" => BoundaryKind::Neumann,
                        other => return Err(bad(format!("unknown bc `{other}`"))),
                    }
                }
                "scale" => cfg.scale = value.parse().map_err(|e| bad(format!("scale: {e}")))?,
                "a" => cfg.a = value.parse().map_err(|e| bad(format!("a: {e}")))?,
                "b" => cfg.b = value.parse().map_err(|e| bad(format!("b: {e}")))?,
                "modes" => cfg.modes = value.parse().map_err(|e| bad(format!("modes: {e}")))?,
                "degree" => cfg.degree = value.parse().map_err(|e| bad(format!("degree: {e}")))?,
                "seed" => cfg.seed = value.parse().map_err(|e| bad(format!("seed: {e}")))?,
                "record_tol" => {
                    cfg.record_tol = value.parse().map_err(|e| bad(format!("record_tol: {e}")))?
                }
                "basis_budget" => {
                    cfg.basis_budget =
                        value.parse().map_err(|e| bad(format!("basis_budget: {e}")))?
                }
                "enrich_starts" => {
                    cfg.enrich_starts =
                        value.parse().map_err(|e| bad(format!("enrich_starts: {e}")))?
                }
                "max_seeds_per_stage" => {
                    cfg.max_seeds_per_stage = value
                        .parse()
                        .map_err(|e| bad(format!("max_seeds_per_stage: {e}")))?
                }
                "max_seed_attempts" => {
                    cfg.max_seed_attempts = value
                        .parse()
                        .map_err(|e| bad(format!("max_seed_attempts: {e}")))?
                }
                "seed_amplitude" => {
                    cfg.seed_amplitude = value
                        .parse()
                        .map_err(|e| bad(format!("seed_amplitude: {e}")))?
                }
                "amp_lo" => cfg.amp_lo = value.parse().map_err(|e| bad(format!("amp_lo: {e}")))?,
                "amp_hi" => cfg.amp_hi = value.parse().map_err(|e| bad(format!("amp_hi: {e}")))?,
                "amp_points" => {
                    cfg.amp_points = value.parse().map_err(|e| bad(format!("amp_points: {e}")))?
                }
                "inner_product" => {
                    cfg.inner_product = match value {
                        "coefficient-l2" => InnerProduct::CoefficientL2,
                        "field-l2" => InnerProduct::FieldL2,
                        other => return Err(bad(format!("unknown inner product `{other}`"))),
                    }
                }
                "structured_seeds" => {
                    cfg.structured_seeds = value
                        .split(';')
                        .filter(|t| !t.trim().is_empty())
                        .map(parse_seed_shape)
                        .collect::<Result<_, _>>()
                        .map_err(bad)?;
                }
                "sweep_b_end" => {
                    cfg.sweep_b_end =
                        Some(value.parse().map_err(|e| bad(format!("sweep_b_end: {e}")))?);
                    saw_sweep_end = true;
                }
                "sweep_steps" => {
                    cfg.sweep_steps =
                        value.parse().map_err(|e| bad(format!("sweep_steps: {e}")))?
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        if !saw_sweep_end {
            cfg.sweep_b_end = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let field = |f: &str, msg: String| IoError::Field {
            field: f.into(),
            msg,
        };
        if self.modes < 1 {
            return Err(field("modes", "must be >= 1".into()));
        }
        if self.degree < 2 {
            return Err(field("degree", "must be >= 2".into()));
        }
        if !(self.record_tol > 0.0) {
            return Err(field("record_tol", "must be positive".into()));
        }
        if !(self.a > 0.0 && self.b > 0.0) || self.b > self.a {
            return Err(field(
                "b",
                format!("need 0 < b <= a, got a = {}, b = {}", self.a, self.b),
            ));
        }
        if let Some(b_end) = self.sweep_b_end {
            if !(b_end > 0.0) || b_end > self.b {
                return Err(field(
                    "sweep_b_end",
                    format!("need 0 < sweep_b_end <= b, got {b_end}"),
                ));
            }
        }
        if self.amp_hi <= self.amp_lo {
            return Err(field("amp_hi", "search box is empty".into()));
        }
        if self.amp_points < 2 {
            return Err(field("amp_points", "need at least 2 points".into()));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<EllipseDomain, IoError> {
        Ok(EllipseDomain::new(self.a, self.b)?)
    }

    pub fn problem_spec(&self) -> Result<crate::problems::ProblemSpec, IoError> {
        Ok(problems::by_name(&self.problem, self.scale, self.bc)?)
    }

    pub fn discrete_problem(&self) -> Result<DiscreteProblem, IoError> {
        Ok(DiscreteProblem::new(
            self.domain()?,
            self.problem_spec()?,
            self.modes,
            self.degree,
        )?)
    }

    pub fn aobd_config(&self) -> AobdConfig {
        AobdConfig {
            search: GridSearchSpec::new(self.amp_lo, self.amp_hi, self.amp_points),
            inner_product: self.inner_product,
            enrich_starts: self.enrich_starts,
            basis_budget: self.basis_budget,
            record_tol: self.record_tol,
            max_seeds_per_stage: self.max_seeds_per_stage,
            seed: self.seed,
            max_seed_attempts: self.max_seed_attempts,
            seed_amplitude: self.seed_amplitude,
            structured_seeds: self.structured_seeds.clone(),
            ..AobdConfig::default()
        }
    }
}

/// In-memory form of a bundle.
#[derive(Debug)]
pub struct ResultBundle {
    pub config: RunConfig,
    pub records: Vec<SolutionRecord>,
    pub energy: Vec<EnergyRow>,
    pub log: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub record_id: usize,
    pub b: f64,
    pub j_value: f64,
}

/// FNV-1a of the config text; stamped into export headers so a field file
/// can be traced back to its run.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for byte in cfg.to_text().bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Execute a run: drive the solver, optionally continue in geometry, and
/// write the bundle. Fails with [`IoError::NoSolutions`] when nothing
/// converged.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<ResultBundle, IoError> {
    cfg.validate()?;
    let dp = cfg.discrete_problem()?;
    let acfg = cfg.aobd_config();
    let output = aobd::run_driver(&dp, &acfg)?;
    if output.records.is_empty() {
        return Err(IoError::NoSolutions);
    }

    let mut energy = Vec::new();
    let mut log = output.log.clone();
    if let Some(b_end) = cfg.sweep_b_end {
        let paths =
            aobd::continue_in_geometry(&dp, &output.records, b_end, cfg.sweep_steps, &acfg)?;
        for path in &paths {
            if path.truncated {
                log.push(format!(
                    "continuation of record {} truncated at b = {:.6}",
                    path.record_index,
                    path.steps.last().map(|s| s.b).unwrap_or(cfg.b)
                ));
            }
            for step in &path.steps {
                energy.push(EnergyRow {
                    record_id: path.record_index,
                    b: step.b,
                    j_value: step.j_value,
                });
            }
        }
    }

    let bundle = ResultBundle {
        config: cfg.clone(),
        records: output.records,
        energy,
        log,
    };
    write_bundle(&bundle, &dp, out_dir)?;
    Ok(bundle)
}

fn record_file_text(cfg: &RunConfig, rec: &SolutionRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# problem = {}", cfg.problem);
    let _ = writeln!(s, "# modes = {}", cfg.modes);
    let _ = writeln!(s, "# degree = {}", cfg.degree);
    let _ = writeln!(s, "# residual_inf = {:.16e}", rec.residual_inf);
    let _ = writeln!(s, "# j_value = {:.16e}", rec.j_value);
    let _ = writeln!(s, "# iterations = {}", rec.iterations);
    let _ = writeln!(s, "# origin = {}", rec.origin);
    let amps: Vec<String> = rec.amplitudes.iter().map(|a| format!("{a:.16e}")).collect();
    let _ = writeln!(s, "# amplitudes = {}", amps.join(","));
    for v in rec.xi.as_vector().iter() {
        let _ = writeln!(s, "{v:.16e}");
    }
    s
}

/// Write a bundle directory (created if missing, contents overwritten).
pub fn write_bundle(
    bundle: &ResultBundle,
    dp: &DiscreteProblem,
    out_dir: &Path,
) -> Result<(), IoError> {
    fs::create_dir_all(out_dir.join("records"))?;
    fs::create_dir_all(out_dir.join("traces"))?;
    fs::create_dir_all(out_dir.join("fields"))?;
    fs::write(out_dir.join("config.txt"), bundle.config.to_text())?;
    fs::write(out_dir.join("log.txt"), bundle.log.join("\n") + "\n")?;

    let mut index = String::from("id residual_inf j_value iterations origin\n");
    for (i, rec) in bundle.records.iter().enumerate() {
        let _ = writeln!(
            index,
            "{i} {:.16e} {:.16e} {} {}",
            rec.residual_inf, rec.j_value, rec.iterations, rec.origin
        );
        fs::write(
            out_dir.join(format!("records/record_{i:03}.coef")),
            record_file_text(&bundle.config, rec),
        )?;
        let mut trace = String::from("k,Q,normF_inf,h,r,accepted\n");
        for row in &rec.trace {
            let _ = writeln!(
                trace,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                row.k, row.q, row.norm_f_inf, row.h, row.r, row.accepted as u8
            );
        }
        fs::write(out_dir.join(format!("traces/record_{i:03}.csv")), trace)?;
        let field = export_field_text(dp, &bundle.config, rec, 25, 48)?;
        fs::write(out_dir.join(format!("fields/record_{i:03}.csv")), field)?;
    }
    fs::write(out_dir.join("records/index.txt"), index)?;

    if !bundle.energy.is_empty() {
        fs::create_dir_all(out_dir.join("energy"))?;
        fs::write(
            out_dir.join("energy/curves.csv"),
            energy_curves_text(bundle, dp)?,
        )?;
    }
    Ok(())
}

/// Rows `r, theta, x, y, u` on an `nr x ntheta` tensor grid including both
/// the center and the boundary; the header carries the config hash,
/// residual and functional value.
pub fn export_field_text(
    dp: &DiscreteProblem,
    cfg: &RunConfig,
    rec: &SolutionRecord,
    nr: usize,
    ntheta: usize,
) -> Result<String, IoError> {
    let mut grid = Vec::with_capacity(nr * ntheta);
    for i in 0..nr {
        let r = if nr == 1 {
            0.0
        } else {
            i as f64 / (nr - 1) as f64
        };
        for s in 0..ntheta {
            let th = 2.0 * std::f64::consts::PI * s as f64 / ntheta as f64;
            grid.push((r, th));
        }
    }
    let vals = dp.evaluate_field(rec.xi.as_vector(), &grid)?;
    let mut out = String::new();
    let _ = writeln!(out, "# config_hash = {}", config_hash(cfg));
    let _ = writeln!(out, "# residual_inf = {:.16e}", rec.residual_inf);
    let _ = writeln!(out, "# j_value = {:.16e}", rec.j_value);
    let _ = writeln!(out, "r,theta,x,y,u");
    for (&(r, th), v) in grid.iter().zip(&vals) {
        let (x, y) = dp.domain().map_to_cartesian(r, th)?;
        let _ = writeln!(out, "{r:.16e},{th:.16e},{x:.16e},{y:.16e},{v:.16e}");
    }
    Ok(out)
}

/// Rows `record_id, b, J, J_over_Jref`; the reference is the first
/// single-signed record (the usual type-I), and the ratio column is omitted
/// with a warning when no such record exists.
pub fn energy_curves_text(bundle: &ResultBundle, dp: &DiscreteProblem) -> Result<String, IoError> {
    let reference = analysis::pick_reference_record(dp, &bundle.records)?;
    let j_ref = reference.map(|i| bundle.records[i].j_value);
    let mut out = String::new();
    match (reference, j_ref) {
        (Some(i), Some(jr)) if jr != 0.0 => {
            let _ = writeln!(out, "# reference_record = {i}");
            let _ = writeln!(out, "record_id,b,J,J_over_Jref");
        }
        _ => {
            let _ = writeln!(
                out,
                "# warning: no single-signed reference record; ratio omitted"
            );
            let _ = writeln!(out, "record_id,b,J");
        }
    }
    let mut rows = bundle.energy.clone();
    rows.sort_by(|p, q| {
        p.record_id
            .cmp(&q.record_id)
            .then(p.b.partial_cmp(&q.b).unwrap())
    });
    for row in rows {
        match j_ref {
            Some(jr) if jr != 0.0 => {
                let _ = writeln!(
                    out,
                    "{},{:.16e},{:.16e},{:.16e}",
                    row.record_id,
                    row.b,
                    row.j_value,
                    row.j_value / jr
                );
            }
            _ => {
                let _ = writeln!(out, "{},{:.16e},{:.16e}", row.record_id, row.b, row.j_value);
            }
        }
    }
    Ok(out)
}

/// Write the energy table of a bundle into its directory.
pub fn write_energy(
    bundle: &ResultBundle,
    dp: &DiscreteProblem,
    out_dir: &Path,
) -> Result<(), IoError> {
    fs::create_dir_all(out_dir.join("energy"))?;
    fs::write(
        out_dir.join("energy/curves.csv"),
        energy_curves_text(bundle, dp)?,
    )?;
    Ok(())
}

fn parse_coef_file(path: &Path) -> Result<(Vec<(String, String)>, Vec<f64>), IoError> {
    let text = fs::read_to_string(path)?;
    let mut meta = Vec::new();
    let mut coefs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        coefs.push(line.parse::<f64>().map_err(|e| IoError::Config {
            line: lineno + 1,
            msg: format!("bad coefficient in {}: {e}", path.display()),
        })?);
    }
    Ok((meta, coefs))
}

/// Load a bundle from disk (records and config; traces and fields are
/// derived artifacts and not reloaded).
pub fn load_bundle(dir: &Path) -> Result<ResultBundle, IoError> {
    let config_path = dir.join("config.txt");
    if !config_path.exists() {
        return Err(IoError::MissingPart("config.txt".into()));
    }
    let config = RunConfig::parse(&fs::read_to_string(config_path)?)?;

    let mut records = Vec::new();
    for index in 0.. {
        let path = dir.join(format!("records/record_{index:03}.coef"));
        if !path.exists() {
            break;
        }
        let (meta, coefs) = parse_coef_file(&path)?;
        let get =
            |key: &str| -> Option<String> { meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()) };
        let xi = SpectralCoefficients::from_vec(
            config.modes,
            config.degree,
            DVector::from_vec(coefs),
        )?;
        let amplitudes: Vec<f64> = get("amplitudes")
            .unwrap_or_default()
            .split(',')
            .filter(|t| !t.is_empty())
            .filter_map(|t| t.parse().ok())
            .collect();
        records.push(SolutionRecord {
            xi,
            residual_inf: get("residual_inf")
                .and_then(|v| v.parse().ok())
                .unwrap_or(f64::NAN),
            j_value: get("j_value")
                .and_then(|v| v.parse().ok())
                .unwrap_or(f64::NAN),
            amplitudes,
            iterations: get("iterations").and_then(|v| v.parse().ok()).unwrap_or(0),
            converged: true,
            origin: get("origin").unwrap_or_default(),
            trace: vec![],
        });
    }
    if records.is_empty() {
        return Err(IoError::MissingPart("records/record_000.coef".into()));
    }

    let energy_path = dir.join("energy/curves.csv");
    let mut energy = Vec::new();
    if energy_path.exists() {
        for line in fs::read_to_string(energy_path)?.lines() {
            if line.starts_with('#') || line.starts_with("record_id") || line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() >= 3 {
                energy.push(EnergyRow {
                    record_id: parts[0].parse().unwrap_or(0),
                    b: parts[1].parse().unwrap_or(f64::NAN),
                    j_value: parts[2].parse().unwrap_or(f64::NAN),
                });
            }
        }
    }

    let log = fs::read_to_string(dir.join("log.txt"))
        .map(|t| t.lines().map(String::from).collect())
        .unwrap_or_default();

    Ok(ResultBundle {
        config,
        records,
        energy,
        log,
    })
}

/// Re-assemble the residual of every stored record; a recomputed value more
/// than 10x the stored one means the payload is corrupt.
pub fn validate_bundle(dir: &Path) -> Result<(), IoError> {
    let bundle = load_bundle(dir)?;
    let dp = bundle.config.discrete_problem()?;
    for (index, rec) in bundle.records.iter().enumerate() {
        let recomputed = dp.assemble_residual(rec.xi.as_vector())?.amax();
        let stored = rec.residual_inf;
        if !recomputed.is_finite() || recomputed > 10.0 * stored.max(1e-300) {
            return Err(IoError::Validation {
                index,
                stored,
                recomputed,
            });
        }
    }
    Ok(())
}

/// Continue an existing bundle's records in geometry and attach the energy
/// table; returns the refreshed bundle.
pub fn sweep(dir: &Path, b_end: f64, steps: usize) -> Result<ResultBundle, IoError> {
    let mut bundle = load_bundle(dir)?;
    let dp = bundle.config.discrete_problem()?;
    let acfg = bundle.config.aobd_config();
    let paths: Vec<ContinuationPath> =
        aobd::continue_in_geometry(&dp, &bundle.records, b_end, steps, &acfg)?;
    bundle.energy.clear();
    for path in &paths {
        for step in &path.steps {
            bundle.energy.push(EnergyRow {
                record_id: path.record_index,
                b: step.b,
                j_value: step.j_value,
            });
        }
    }
    write_energy(&bundle, &dp, dir)?;
    Ok(bundle)
}

pub fn default_out_dir(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(format!("runs/{}-{}", cfg.problem, config_hash(cfg)))
}

#[cfg(test)]
mod tests;

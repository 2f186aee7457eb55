//! Command-line front end: `run`, `sweep`, `export`, `eigs`, `validate`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 no solutions found,
//! 4 bundle validation failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use multisol::galerkin::{BoundaryKind, DiscreteProblem};
use multisol::geometry::EllipseDomain;
use multisol::io::{self, IoError, RunConfig};

#[derive(Parser)]
#[command(
    name = "multisol",
    version,
    about = "Multiple solutions of semilinear elliptic problems on disks and ellipses"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the solution driver and write a result bundle.
    Run(RunArgs),
    /// Continue an existing bundle's records in the semi-axis b and write
    /// the energy table.
    Sweep {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        b_end: f64,
        #[arg(long, default_value_t = 6)]
        steps: usize,
    },
    /// Export a record's field values on a tensor grid.
    Export {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 0)]
        record: usize,
        #[arg(long, default_value_t = 33)]
        nr: usize,
        #[arg(long, default_value_t = 64)]
        ntheta: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the smallest eigenvalues of -laplace on the domain.
    Eigs {
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, default_value = "dirichlet")]
        bc: String,
        #[arg(long, default_value_t = 20)]
        modes: usize,
        #[arg(long, default_value_t = 20)]
        degree: usize,
        #[arg(long, default_value_t = 5)]
        count: usize,
    },
    /// Recheck every stored record of a bundle by direct re-assembly.
    Validate {
        #[arg(long)]
        bundle: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (`key = value` lines); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed (required: runs are deterministic and reproducible).
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    bc: Option<String>,
    /// Scale parameter (lambda or delta, depending on the problem).
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    record_tol: Option<f64>,
    #[arg(long)]
    basis_budget: Option<usize>,
    #[arg(long)]
    enrich_starts: Option<usize>,
    #[arg(long)]
    max_seeds_per_stage: Option<usize>,
    #[arg(long)]
    max_seed_attempts: Option<usize>,
    #[arg(long)]
    seed_amplitude: Option<f64>,
    #[arg(long)]
    amp_lo: Option<f64>,
    #[arg(long)]
    amp_hi: Option<f64>,
    #[arg(long)]
    amp_points: Option<usize>,
    /// Semicolon-separated deterministic seed shapes, e.g.
    /// `center-bump(3,0.6); ring-bumps(4,2,0.7,0.3)`.
    #[arg(long)]
    structured_seeds: Option<String>,
    #[arg(long)]
    sweep_b_end: Option<f64>,
    #[arg(long)]
    sweep_steps: Option<usize>,
}

fn parse_bc(text: &str) -> Result<BoundaryKind, IoError> {
    match text {
        "dirichlet" => Ok(BoundaryKind::Dirichlet),
        "neumann" => Ok(BoundaryKind::Neumann),
        other => Err(IoError::Field {
            field: "bc".into(),
            msg: format!("unknown boundary condition `{other}`"),
        }),
    }
}

fn build_config(args: &RunArgs) -> Result<RunConfig, IoError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::parse(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    cfg.seed = args.seed;
    if let Some(v) = &args.problem {
        cfg.problem = v.clone();
    }
    if let Some(v) = &args.bc {
        cfg.bc = parse_bc(v)?;
    }
    if let Some(v) = args.scale {
        cfg.scale = v;
    }
    if let Some(v) = args.a {
        cfg.a = v;
    }
    if let Some(v) = args.b {
        cfg.b = v;
    }
    if let Some(v) = args.modes {
        cfg.modes = v;
    }
    if let Some(v) = args.degree {
        cfg.degree = v;
    }
    if let Some(v) = args.record_tol {
        cfg.record_tol = v;
    }
    if let Some(v) = args.basis_budget {
        cfg.basis_budget = v;
    }
    if let Some(v) = args.enrich_starts {
        cfg.enrich_starts = v;
    }
    if let Some(v) = args.max_seeds_per_stage {
        cfg.max_seeds_per_stage = v;
    }
    if let Some(v) = args.max_seed_attempts {
        cfg.max_seed_attempts = v;
    }
    if let Some(v) = args.seed_amplitude {
        cfg.seed_amplitude = v;
    }
    if let Some(v) = args.amp_lo {
        cfg.amp_lo = v;
    }
    if let Some(v) = args.amp_hi {
        cfg.amp_hi = v;
    }
    if let Some(v) = args.amp_points {
        cfg.amp_points = v;
    }
    if let Some(v) = &args.structured_seeds {
        let text = format!("structured_seeds = {v}");
        let parsed = RunConfig::parse(&format!("{}{}", cfg.to_text(), text))?;
        cfg.structured_seeds = parsed.structured_seeds;
    }
    if let Some(v) = args.sweep_b_end {
        cfg.sweep_b_end = Some(v);
    }
    if let Some(v) = args.sweep_steps {
        cfg.sweep_steps = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code_for(err: &IoError) -> ExitCode {
    match err {
        IoError::Config { .. } | IoError::Field { .. } | IoError::Problem(_) => ExitCode::from(2),
        IoError::NoSolutions => ExitCode::from(3),
        IoError::Validation { .. } => ExitCode::from(4),
        _ => ExitCode::from(1),
    }
}

fn dispatch(cli: Cli) -> Result<(), IoError> {
    match cli.cmd {
        Cmd::Run(args) => {
            let cfg = build_config(&args)?;
            let out_dir = args.out.unwrap_or_else(|| io::default_out_dir(&cfg));
            let bundle = io::run(&cfg, &out_dir)?;
            println!(
                "{} records written to {}",
                bundle.records.len(),
                out_dir.display()
            );
            for (i, rec) in bundle.records.iter().enumerate() {
                println!(
                    "  record {i}: J = {:+.6e}, residual_inf = {:.3e}, origin {}",
                    rec.j_value, rec.residual_inf, rec.origin
                );
            }
            Ok(())
        }
        Cmd::Sweep {
            bundle,
            b_end,
            steps,
        } => {
            let refreshed = io::sweep(&bundle, b_end, steps)?;
            println!(
                "energy table with {} rows written to {}",
                refreshed.energy.len(),
                bundle.join("energy/curves.csv").display()
            );
            Ok(())
        }
        Cmd::Export {
            bundle,
            record,
            nr,
            ntheta,
            out,
        } => {
            let loaded = io::load_bundle(&bundle)?;
            let rec = loaded.records.get(record).ok_or_else(|| {
                IoError::MissingPart(format!(
                    "record {record} (bundle has {})",
                    loaded.records.len()
                ))
            })?;
            let dp = loaded.config.discrete_problem()?;
            let text = io::export_field_text(&dp, &loaded.config, rec, nr, ntheta)?;
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Cmd::Eigs {
            a,
            b,
            bc,
            modes,
            degree,
            count,
        } => {
            let dom = EllipseDomain::new(a, b)?;
            let vals =
                DiscreteProblem::linear_eigenvalues(dom, parse_bc(&bc)?, modes, degree, count)?;
            for (k, v) in vals.iter().enumerate() {
                println!("lambda_{} = {:.12e}", k + 1, v);
            }
            Ok(())
        }
        Cmd::Validate { bundle } => {
            io::validate_bundle(&bundle)?;
            println!("bundle valid: every record re-assembles to its stored residual");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

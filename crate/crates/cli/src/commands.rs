//! Subcommand implementations.
//!
//! Outputs are machine-readable (JSON/CSV) on files or stdout; human
//! summaries go to stderr and are silenced by `INERTIA_LOG=quiet`. All
//! commands are deterministic given identical inputs and seeds.

use std::path::{Path, PathBuf};

use clap::Args;
use nalgebra::DVector;
use serde::Deserialize;

use inertia_core::consistency::{self, Ellipsoid, UnionCheck};
use inertia_core::model::KinematicModel;
use inertia_core::pipeline::{
    differentiate_filter, evaluate, generate_synthetic, identify, learning_curve, trust_logged,
    ExcitationSpec, FitReport, SolverSummary,
};
use inertia_core::regressor::{predict_torque, TrajectorySample};
use inertia_core::sdp::{
    build_identification, project_to_consistent, ConstraintLevel, IdentificationOptions,
    ObjectiveEncoding, ProjectionSpec, SolveStatus, SolverOptions,
};

use crate::formats::{
    self, load_csv, load_ellipsoids, load_model, load_params, params_to_json,
    single_ellipsoid_per_body, CsvSchema,
};
use crate::{icp, CliError};

fn quiet() -> bool {
    std::env::var("INERTIA_LOG").map(|v| v == "quiet").unwrap_or(false)
}

macro_rules! info {
    ($($arg:tt)*) => {
        if !quiet() {
            eprintln!($($arg)*);
        }
    };
}

/// Options-file schema. Any field present overrides the corresponding flag
/// (the file is the durable record of a run configuration).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionsFile {
    level: Option<String>,
    regularization: Option<f64>,
    prior: Option<PathBuf>,
    friction_nonneg: Option<bool>,
    coulomb_deadband: Option<f64>,
    strict_margin: Option<f64>,
    encoding: Option<String>,
    cutoff_hz: Option<f64>,
    trust_derivatives: Option<bool>,
    holdout_fraction: Option<f64>,
    solver: Option<SolverFile>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverFile {
    max_iter: Option<usize>,
    feas_tol: Option<f64>,
    rel_gap_tol: Option<f64>,
    abs_gap_tol: Option<f64>,
}

/// Estimation flags shared by `identify`, `curve`, and `export-sdp`.
#[derive(Debug, Clone, Args)]
pub struct EstimationArgs {
    /// Constraint level: none | semi | full | full+com | full+ellipsoid.
    #[arg(long, default_value = "full")]
    pub level: String,
    /// Bounding-ellipsoid file (required for full+com and full+ellipsoid).
    #[arg(long)]
    pub ellipsoids: Option<PathBuf>,
    /// Options file (JSON); fields present there override flags.
    #[arg(long)]
    pub options: Option<PathBuf>,
    /// Regularization weight on the parameter prior.
    #[arg(long, default_value_t = 1e-6)]
    pub regularization: f64,
    /// Prior parameter file for the regularizer (defaults to zeros).
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Use logged velocity/acceleration columns instead of filtering.
    #[arg(long)]
    pub trust_derivatives: bool,
    /// Zero-phase low-pass cutoff for differentiation (Hz).
    #[arg(long, default_value_t = 50.0)]
    pub cutoff_hz: f64,
    /// Coulomb sign deadband (rad/s).
    #[arg(long, default_value_t = 1e-3)]
    pub coulomb_deadband: f64,
    /// Fraction of the log held out for validation (taken from the end).
    #[arg(long, default_value_t = 0.5)]
    pub holdout_fraction: f64,
    /// Objective encoding: quadratic | epigraph.
    #[arg(long, default_value = "quadratic")]
    pub encoding: String,
}

struct ResolvedEstimation {
    ident: IdentificationOptions,
    cutoff_hz: f64,
    trust_derivatives: bool,
    holdout_fraction: f64,
}

fn parse_level(s: &str) -> Result<ConstraintLevel, CliError> {
    ConstraintLevel::parse(s).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown constraint level `{s}` (expected none|semi|full|full+com|full+ellipsoid)"
        ))
    })
}

fn parse_encoding(s: &str) -> Result<ObjectiveEncoding, CliError> {
    match s {
        "quadratic" => Ok(ObjectiveEncoding::Quadratic),
        "epigraph" => Ok(ObjectiveEncoding::Epigraph),
        other => Err(CliError::Usage(format!(
            "unknown objective encoding `{other}` (expected quadratic|epigraph)"
        ))),
    }
}

fn resolve_estimation(
    args: &EstimationArgs,
    model: &KinematicModel,
) -> Result<ResolvedEstimation, CliError> {
    let file: OptionsFile = match &args.options {
        Some(path) => {
            let text = formats::read_file(path)?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{}: options parse error: {e}", path.display())))?
        }
        None => OptionsFile::default(),
    };

    let level = parse_level(file.level.as_deref().unwrap_or(&args.level))?;
    let encoding = parse_encoding(file.encoding.as_deref().unwrap_or(&args.encoding))?;
    let prior_path = file.prior.clone().or_else(|| args.prior.clone());
    let prior = match prior_path {
        Some(path) => {
            let params = load_params(&path)?;
            if params.bodies.len() != model.n_bodies() {
                return Err(CliError::Data(format!(
                    "{}: prior has {} bodies, model has {}",
                    path.display(),
                    params.bodies.len(),
                    model.n_bodies()
                )));
            }
            Some(params.flat_inertial())
        }
        None => None,
    };
    let ellipsoids = match &args.ellipsoids {
        Some(path) => single_ellipsoid_per_body(load_ellipsoids(path, model.n_bodies())?)?,
        None => Vec::new(),
    };

    let mut solver = SolverOptions::default();
    if let Some(s) = &file.solver {
        if let Some(v) = s.max_iter {
            solver.max_iter = v;
        }
        if let Some(v) = s.feas_tol {
            solver.feas_tol = v;
        }
        if let Some(v) = s.rel_gap_tol {
            solver.rel_gap_tol = v;
        }
        if let Some(v) = s.abs_gap_tol {
            solver.abs_gap_tol = v;
        }
    }

    let ident = IdentificationOptions {
        level,
        regularization: file.regularization.unwrap_or(args.regularization),
        prior,
        ellipsoids,
        friction_nonneg: file.friction_nonneg.unwrap_or(true),
        coulomb_deadband: file.coulomb_deadband.unwrap_or(args.coulomb_deadband),
        strict_margin: file.strict_margin,
        encoding,
        solver,
    };
    Ok(ResolvedEstimation {
        ident,
        cutoff_hz: file.cutoff_hz.unwrap_or(args.cutoff_hz),
        trust_derivatives: file.trust_derivatives.unwrap_or(args.trust_derivatives),
        holdout_fraction: file.holdout_fraction.unwrap_or(args.holdout_fraction),
    })
}

fn condition(
    model: &KinematicModel,
    data: &Path,
    resolved: &ResolvedEstimation,
) -> Result<Vec<TrajectorySample>, CliError> {
    let log = load_csv(
        data,
        CsvSchema {
            n_joints: model.n_joints(),
        },
    )?;
    if resolved.trust_derivatives {
        trust_logged(&log).map_err(|e| CliError::Data(e.to_string()))
    } else {
        let cond = differentiate_filter(&log, resolved.cutoff_hz)
            .map_err(|e| CliError::Data(e.to_string()))?;
        info!(
            "conditioned {} samples (trimmed {} per side, cutoff {} Hz)",
            cond.samples.len(),
            cond.trimmed_per_side,
            cond.cutoff_hz
        );
        Ok(cond.samples)
    }
}

fn split_holdout(
    samples: &[TrajectorySample],
    fraction: f64,
) -> Result<(&[TrajectorySample], &[TrajectorySample]), CliError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(CliError::Usage(format!(
            "holdout fraction {fraction} must be in [0, 1)"
        )));
    }
    let n_hold = (samples.len() as f64 * fraction).round() as usize;
    let n_train = samples.len() - n_hold;
    if n_train == 0 {
        return Err(CliError::Data("no training samples after the holdout split".into()));
    }
    let (train, hold) = samples.split_at(n_train);
    Ok((train, if hold.is_empty() { train } else { hold }))
}

/// `identify`: fit parameters to a trajectory log.
#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Model file (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Trajectory log (CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for identified_params.json, report.json,
    /// residuals.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub estimation: EstimationArgs,
}

pub fn run_identify(args: &IdentifyArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let resolved = resolve_estimation(&args.estimation, &model)?;
    let samples = condition(&model, &args.data, &resolved)?;
    let (train, holdout) = split_holdout(&samples, resolved.holdout_fraction)?;

    if resolved.ident.regularization == 0.0 {
        info!("note: regularization is 0 — the optimum may be non-unique on rank-deficient data");
    }
    let identified = identify(&model, train, &resolved.ident)
        .map_err(|e| CliError::Data(e.to_string()))?;
    if identified.solution.status != SolveStatus::Optimal {
        return Err(CliError::Solver(format!(
            "solver ended with {:?}: {}",
            identified.solution.status,
            identified
                .solution
                .diagnostic
                .as_deref()
                .unwrap_or("no diagnostic")
        )));
    }

    let deadband = resolved.ident.coulomb_deadband;
    let training = evaluate(&model, &identified.params, train, deadband)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let validation = evaluate(&model, &identified.params, holdout, deadband)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let consistency_reports: Vec<_> = identified
        .params
        .bodies
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let ells: &[Ellipsoid] = match resolved.ident.ellipsoids.get(i) {
                Some(e) => std::slice::from_ref(e),
                None => &[],
            };
            consistency::assess(p, ells)
        })
        .collect();

    let report = FitReport {
        level: resolved.ident.level,
        regularization: resolved.ident.regularization,
        strict_margin: resolved.ident.effective_margin(),
        coulomb_deadband: deadband,
        n_train: train.len(),
        validation: validation.clone(),
        training,
        solver: SolverSummary::from(&identified.solution),
        friction: identified.params.friction.clone(),
        consistency: consistency_reports,
    };

    let residuals: Vec<DVector<f64>> = holdout
        .iter()
        .map(|s| {
            let pred = predict_torque(&model, &identified.params, &s.q, &s.vel, &s.acc, deadband)
                .expect("dimensions already validated");
            &s.tau - pred
        })
        .collect();
    let times: Vec<f64> = holdout.iter().map(|s| s.t).collect();

    formats::write_file(
        &args.out.join("identified_params.json"),
        &params_to_json(&identified.params),
    )?;
    formats::write_file(
        &args.out.join("report.json"),
        &serde_json::to_string_pretty(&report).expect("report serialization cannot fail"),
    )?;
    formats::save_residuals(&args.out.join("residuals.csv"), &times, &residuals)?;

    info!(
        "identified {} bodies at level {}: held-out RMS {:.6} N·m over {} samples ({} iterations, gap {:.2e})",
        model.n_bodies(),
        report.level,
        report.validation.overall_rms,
        report.validation.n_samples,
        report.solver.iterations,
        report.solver.gap
    );
    Ok(())
}

/// Per-body entry of the `check` report.
#[derive(Debug, serde::Serialize)]
struct CheckBody {
    name: String,
    report: consistency::ConsistencyReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    union: Option<UnionCheck>,
}

#[derive(Debug, serde::Serialize)]
struct CheckOutput {
    all_semi_consistent: bool,
    all_fully_consistent: bool,
    all_realizable: bool,
    bodies: Vec<CheckBody>,
}

/// `check`: consistency verdicts for a parameter file.
#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Model file (JSON), fixes body count and names.
    #[arg(long)]
    pub model: PathBuf,
    /// Parameter file to check.
    #[arg(long)]
    pub params: PathBuf,
    /// Bounding-ellipsoid file (bodies may carry several: unions are
    /// checked).
    #[arg(long)]
    pub ellipsoids: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Project inconsistent parameters back onto the constraint set.
    #[arg(long)]
    pub repair: bool,
    /// Constraint level for --repair.
    #[arg(long, default_value = "full")]
    pub level: String,
    /// Output path for repaired parameters.
    #[arg(long)]
    pub repaired_out: Option<PathBuf>,
}

pub fn run_check(args: &CheckArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let params = load_params(&args.params)?;
    if params.bodies.len() != model.n_bodies() {
        return Err(CliError::Data(format!(
            "parameter file has {} bodies, model has {}",
            params.bodies.len(),
            model.n_bodies()
        )));
    }
    let per_body = match &args.ellipsoids {
        Some(path) => load_ellipsoids(path, model.n_bodies())?,
        None => vec![Vec::new(); model.n_bodies()],
    };

    let mut bodies = Vec::with_capacity(model.n_bodies());
    for (i, p) in params.bodies.iter().enumerate() {
        let report = consistency::assess(p, &per_body[i]);
        let union = if per_body[i].len() > 1 {
            Some(
                consistency::check_realizable_on_union(p, &per_body[i])
                    .map_err(|e| CliError::Solver(e.to_string()))?,
            )
        } else {
            None
        };
        bodies.push(CheckBody {
            name: model.bodies()[i].name.clone(),
            report,
            union,
        });
    }
    let output = CheckOutput {
        all_semi_consistent: bodies.iter().all(|b| b.report.semi_consistent),
        all_fully_consistent: bodies.iter().all(|b| b.report.fully_consistent),
        all_realizable: bodies.iter().all(|b| {
            let per_ell = b.report.ellipsoid_checks.iter().all(|c| c.realizable);
            let union_ok = b.union.as_ref().map(|u| u.realizable).unwrap_or(true);
            per_ell && union_ok
        }),
        bodies,
    };
    let json = serde_json::to_string_pretty(&output).expect("check serialization cannot fail");
    match &args.out {
        Some(path) => formats::write_file(path, &json)?,
        None => println!("{json}"),
    }
    info!(
        "check: semi {} | full {} | realizable {}",
        output.all_semi_consistent, output.all_fully_consistent, output.all_realizable
    );

    if args.repair {
        let level = parse_level(&args.level)?;
        let spec = ProjectionSpec {
            level,
            ellipsoids: if level.requires_ellipsoids() {
                single_ellipsoid_per_body(per_body)?
            } else {
                Vec::new()
            },
            ..Default::default()
        };
        let (repaired, sols) = project_to_consistent(&params.bodies, &spec)
            .map_err(|e| CliError::Data(e.to_string()))?;
        if let Some(bad) = sols.iter().find(|s| s.status != SolveStatus::Optimal) {
            return Err(CliError::Solver(format!(
                "repair projection ended with {:?}: {}",
                bad.status,
                bad.diagnostic.as_deref().unwrap_or("no diagnostic")
            )));
        }
        let mut out_params = params.clone();
        out_params.bodies = repaired;
        for v in out_params.friction.viscous.iter_mut() {
            *v = v.max(0.0);
        }
        for v in out_params.friction.coulomb.iter_mut() {
            *v = v.max(0.0);
        }
        let path = args
            .repaired_out
            .clone()
            .unwrap_or_else(|| PathBuf::from("repaired_params.json"));
        formats::write_file(&path, &params_to_json(&out_params))?;
        info!("repaired parameters written to {}", path.display());
    }
    Ok(())
}

#[derive(Debug, serde::Serialize)]
struct RealizeBody {
    body: usize,
    name: String,
    points: inertia_core::consistency::PointMassSet,
}

/// `realize`: four-point-mass realizations of consistent parameters.
#[derive(Debug, Args)]
pub struct RealizeArgs {
    /// Model file (for body names and count).
    #[arg(long)]
    pub model: PathBuf,
    /// Parameter file to realize.
    #[arg(long)]
    pub params: PathBuf,
    /// Realize only this body index (default: all bodies).
    #[arg(long)]
    pub body: Option<usize>,
    /// Bounding-ellipsoid file constraining the point placement.
    #[arg(long)]
    pub ellipsoids: Option<PathBuf>,
    /// Write the realization here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_realize(args: &RealizeArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let params = load_params(&args.params)?;
    let per_body = match &args.ellipsoids {
        Some(path) => load_ellipsoids(path, model.n_bodies())?,
        None => vec![Vec::new(); model.n_bodies()],
    };
    let targets: Vec<usize> = match args.body {
        Some(i) if i < model.n_bodies() => vec![i],
        Some(i) => {
            return Err(CliError::Usage(format!(
                "body {i} out of range (model has {} bodies)",
                model.n_bodies()
            )))
        }
        None => (0..model.n_bodies()).collect(),
    };
    let mut out = Vec::new();
    for i in targets {
        let ellipsoid = per_body[i].first();
        let points = consistency::four_point_realization(&params.bodies[i], ellipsoid)
            .map_err(|e| CliError::Data(format!("body {i}: {e}")))?;
        out.push(RealizeBody {
            body: i,
            name: model.bodies()[i].name.clone(),
            points,
        });
    }
    let json = serde_json::to_string_pretty(&out).expect("realization serialization cannot fail");
    match &args.out {
        Some(path) => formats::write_file(path, &json)?,
        None => println!("{json}"),
    }
    info!("realized {} bodies as four-point-mass sets", out.len());
    Ok(())
}

/// `simulate`: synthetic dataset generation with ground-truth parameters.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Ground-truth parameter file (inertia plus friction).
    #[arg(long)]
    pub params: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Trajectory duration (s).
    #[arg(long, default_value_t = 20.0)]
    pub duration: f64,
    /// Sample rate (Hz).
    #[arg(long, default_value_t = 1000.0)]
    pub rate: f64,
    /// Torque noise standard deviation (N·m).
    #[arg(long, default_value_t = 0.0)]
    pub noise_std: f64,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Excitation file (JSON); defaults to the swing preset.
    #[arg(long)]
    pub excitation: Option<PathBuf>,
}

pub fn run_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let params = load_params(&args.params)?;
    if params.bodies.len() != model.n_bodies() {
        return Err(CliError::Data(format!(
            "parameter file has {} bodies, model has {}",
            params.bodies.len(),
            model.n_bodies()
        )));
    }
    let excitation = match &args.excitation {
        Some(path) => {
            let text = formats::read_file(path)?;
            serde_json::from_str::<ExcitationSpec>(&text).map_err(|e| {
                CliError::Data(format!("{}: excitation parse error: {e}", path.display()))
            })?
        }
        None => ExcitationSpec::leg_swing(model.n_joints(), args.duration),
    };
    let data = generate_synthetic(
        &model,
        &params,
        &excitation,
        args.rate,
        args.noise_std,
        args.seed,
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    formats::save_csv(&args.out, &data.log)?;
    info!(
        "wrote {} samples at {} Hz (noise σ = {}, seed {}) to {}",
        data.log.n_samples(),
        args.rate,
        args.noise_std,
        args.seed,
        args.out.display()
    );
    Ok(())
}

/// `curve`: learning-curve experiment over levels and training sizes.
#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Trajectory log (CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV for the plot-ready table.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated constraint levels.
    #[arg(long, default_value = "none,semi,full,full+ellipsoid")]
    pub levels: String,
    /// Comma-separated training sizes.
    #[arg(long, default_value = "200,1000,5000")]
    pub sizes: String,
    #[command(flatten)]
    pub estimation: EstimationArgs,
}

pub fn run_curve(args: &CurveArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let resolved = resolve_estimation(&args.estimation, &model)?;
    let samples = condition(&model, &args.data, &resolved)?;
    let (train, holdout) = split_holdout(&samples, resolved.holdout_fraction)?;

    let levels: Vec<ConstraintLevel> = args
        .levels
        .split(',')
        .map(|s| parse_level(s.trim()))
        .collect::<Result<_, _>>()?;
    let sizes: Vec<usize> = args
        .sizes
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad size `{s}`")))
        })
        .collect::<Result<_, _>>()?;

    let rows = learning_curve(&model, train, holdout, &levels, &sizes, &resolved.ident)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let mut out = String::from("level,n_samples,overall_rms");
    for k in 1..=model.n_joints() {
        out.push_str(&format!(",rms{k}"));
    }
    out.push_str(",status,objective\n");
    for row in &rows {
        out.push_str(&format!("{},{}", row.level, row.n_samples));
        out.push_str(&format!(",{:.9e}", row.overall_rms));
        for v in &row.per_joint_rms {
            out.push_str(&format!(",{v:.9e}"));
        }
        out.push_str(&format!(
            ",{},{:.9e}\n",
            match row.status {
                SolveStatus::Optimal => "optimal",
                SolveStatus::Infeasible => "infeasible",
                SolveStatus::MaxIter => "max_iter",
                SolveStatus::Numerical => "numerical",
            },
            row.objective
        ));
    }
    formats::write_file(&args.out, &out)?;
    info!(
        "learning curve: {} rows ({} levels × {} sizes) to {}",
        rows.len(),
        levels.len(),
        sizes.len(),
        args.out.display()
    );
    Ok(())
}

/// `export-sdp`: write the identification conic program as text.
#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Trajectory log (CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Output path for the program text.
    #[arg(long)]
    pub out: PathBuf,
    /// Compare an external solution file against the program.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[command(flatten)]
    pub estimation: EstimationArgs,
}

pub fn run_export(args: &ExportArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let resolved = resolve_estimation(&args.estimation, &model)?;
    let samples = condition(&model, &args.data, &resolved)?;
    let (train, _) = split_holdout(&samples, resolved.holdout_fraction)?;
    let prog = build_identification(&model, train, &resolved.ident)
        .map_err(|e| CliError::Data(e.to_string()))?;
    formats::write_file(&args.out, &icp::write_program(&prog))?;
    info!(
        "exported program with {} variables and {} cone rows to {}",
        prog.n_vars(),
        prog.cone_dim(),
        args.out.display()
    );
    if let Some(path) = &args.compare {
        let text = formats::read_file(path)?;
        let x = icp::read_solution(&text)?;
        let cmp = icp::compare_solution(&prog, &x)?;
        println!(
            "{}",
            serde_json::to_string_pretty(&cmp).expect("comparison serialization cannot fail")
        );
    }
    Ok(())
}

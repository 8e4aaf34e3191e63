//! One function per subcommand. Each returns a [`Report`] plus any files
//! to write; `main` handles printing and exit codes.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rigidlim::grassmann::{fit_plane, Subspace};
use rigidlim::ifs::{
    check_ball_inclusions, distortion_constants, validate_boundary_density, validate_f1, validate_f3, validate_osc,
    IFSystem,
};
use rigidlim::measure::{
    ahlfors_lower_check, conformal_weights, estimate_dimension, similarity_dimension, weight_exponent,
    ConformalIdentity, CylinderWeights, DEFAULT_DIMENSION_TOL, RESOLUTION_FACTOR,
};
use rigidlim::tangency::{
    cone_containment_check, plane_grid, radius_grid, rigidity_classify, weak_tangent_ratios, ClassifierConfig,
    VerdictKind,
};
use serde_json::{json, Value};

use crate::config::{ConfigError, LoadedConfig};
use crate::report::{points_csv, points_ply, Provenance, Report};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Dimension,
    Sample,
    Measure,
    Distortion,
    Tangent,
    Rigidity,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Dimension => "dimension",
            Command::Sample => "sample",
            Command::Measure => "measure",
            Command::Distortion => "distortion",
            Command::Tangent => "tangent",
            Command::Rigidity => "rigidity",
        }
    }
}

/// Flags shared by every subcommand; each command reads the ones it needs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Options {
    pub depth: Option<usize>,
    pub tol: Option<f64>,
    pub seed: u64,
    pub count: Option<usize>,
    pub l: Option<usize>,
    pub delta: Option<f64>,
    pub rho: Option<f64>,
    pub point: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub exit: u8,
    /// Bytes for stdout in place of the report (the CSV of `sample` without `--out`).
    pub stdout: Option<Vec<u8>>,
    pub files: Vec<(PathBuf, Vec<u8>)>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Failed(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(ConfigError::Rejected(_)) => EXIT_VALIDATION,
            _ => EXIT_USAGE,
        }
    }
}

impl From<rigidlim::Error> for CliError {
    fn from(e: rigidlim::Error) -> Self {
        CliError::Failed(e.into())
    }
}

pub const DEFAULT_DIMENSION_DEPTH: usize = 6;
pub const DEFAULT_SAMPLE_DEPTH: usize = 8;
pub const DEFAULT_MEASURE_DEPTH: usize = 6;
pub const DEFAULT_DISTORTION_DEPTH: usize = 3;
pub const DISTORTION_SAMPLES: usize = 500;
pub const DEFAULT_BALL_TRIALS: usize = 1000;
pub const BALL_K0_SLACK: f64 = 1.05;
pub const AHLFORS_SAMPLES: usize = 64;
pub const AHLFORS_RADII: usize = 4;
/// Largest weight table listed in full inside a report.
pub const MAX_LISTED_WEIGHTS: usize = 4096;

const F1_SAMPLES: usize = 200;
const F3_DEPTH: usize = 4;
const F3_TOL: f64 = 1e-6;
const OSC_GRID: usize = 4;
const DENSITY_RADII: usize = 3;
const DENSITY_SAMPLES: usize = 4000;

fn value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report values serialize")
}

/// Runs a command against a config file.
pub fn run(command: Command, config_path: &Path, opts: &Options) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let loaded = LoadedConfig::read(config_path)?;
    let built = loaded.config.build();
    let (parameters, results, exit, stdout, files) = match (command, built) {
        (Command::Validate, Err(ConfigError::Rejected(e))) => rejected_validation(&e),
        (_, Err(e)) => return Err(e.into()),
        (cmd, Ok(system)) => dispatch(cmd, &system, opts)?,
    };
    let report = Report {
        command: command.name().to_string(),
        config_digest: loaded.digest,
        parameters,
        results,
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION"),
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            threads: rayon::current_num_threads(),
        },
    };
    Ok(Outcome {
        report,
        exit,
        stdout,
        files,
    })
}

type Parts = (Value, Value, u8, Option<Vec<u8>>, Vec<(PathBuf, Vec<u8>)>);

fn dispatch(command: Command, system: &IFSystem, opts: &Options) -> Result<Parts, CliError> {
    match command {
        Command::Validate => validate(system, opts),
        Command::Dimension => dimension(system, opts),
        Command::Sample => sample(system, opts),
        Command::Measure => measure(system, opts),
        Command::Distortion => distortion(system, opts),
        Command::Tangent => tangent(system, opts),
        Command::Rigidity => rigidity(system, opts),
    }
}

fn rejected_validation(e: &rigidlim::Error) -> Parts {
    let detail = match e {
        rigidlim::Error::ConstructionRejected {
            product,
            bound,
            h_norm,
            h_inv_norm,
        } => json!({
            "ok": false,
            "product": product,
            "bound": bound,
            "h_norm": h_norm,
            "h_inv_norm": h_inv_norm,
            "message": e.to_string(),
        }),
        other => json!({ "ok": false, "message": other.to_string() }),
    };
    (
        json!({}),
        json!({ "ok": false, "conjugation": detail }),
        EXIT_VALIDATION,
        None,
        Vec::new(),
    )
}

fn validate(system: &IFSystem, opts: &Options) -> Result<Parts, CliError> {
    let tol = opts.tol.unwrap_or(F3_TOL);
    let f1 = validate_f1(system, F1_SAMPLES, opts.seed)?;
    let f3 = validate_f3(system, opts.depth.unwrap_or(F3_DEPTH), tol)?;
    let osc = validate_osc(system, OSC_GRID)?;
    let density = validate_boundary_density(system, DENSITY_RADII, DENSITY_SAMPLES, opts.seed)?;
    let conjugation = system.conjugation().map(|c| {
        json!({
            "ok": c.product <= c.bound,
            "product": c.product,
            "bound": c.bound,
            "h_norm": c.norms.h_norm,
            "h_inv_norm": c.norms.h_inv_norm,
            "c2": c.c2,
            "grid_resolution": c.grid_resolution,
        })
    });
    let ok = f1.ok && f3.ok && osc.ok && density.ok;
    let parameters = json!({
        "seed": opts.seed,
        "f1_samples": F1_SAMPLES,
        "f3_depth": f3.depth,
        "f3_tol": tol,
        "osc_grid": OSC_GRID,
        "density_radii": DENSITY_RADII,
        "density_samples": DENSITY_SAMPLES,
    });
    let results = json!({
        "ok": ok,
        "f1": value(&f1),
        "f3": value(&f3),
        "osc": value(&osc),
        "boundary_density": value(&density),
        "conjugation": conjugation,
    });
    Ok((parameters, results, if ok { EXIT_OK } else { EXIT_VALIDATION }, None, Vec::new()))
}

fn dimension(system: &IFSystem, opts: &Options) -> Result<Parts, CliError> {
    let depth = opts.depth.unwrap_or(DEFAULT_DIMENSION_DEPTH);
    let tol = opts.tol.unwrap_or(DEFAULT_DIMENSION_TOL);
    let bracket = estimate_dimension(system, depth, tol)?;
    let moran = match system.similarities() {
        Some(sims) if system.is_similarity() => {
            let ratios: Vec<f64> = sims.iter().map(|s| s.scale()).collect();
            Some(similarity_dimension(&ratios, system.dim())?)
        }
        _ => None,
    };
    Ok((
        json!({ "depth": depth, "tol": tol }),
        json!({
            "bracket": value(&bracket),
            "width": bracket.width(),
            "moran_root": moran,
        }),
        EXIT_OK,
        None,
        Vec::new(),
    ))
}

fn weights_at(system: &IFSystem, depth: usize, tol: f64) -> Result<(CylinderWeights, Value), CliError> {
    let bracket = estimate_dimension(system, depth.min(DEFAULT_DIMENSION_DEPTH), tol)?;
    let t = weight_exponent(&bracket);
    let weights = conformal_weights(system, t, depth)?;
    Ok((weights, json!({ "t": t, "bracket": value(&bracket), "bracket_width": bracket.width() })))
}

fn sample(system: &IFSystem, opts: &Options) -> Result<Parts, CliError> {
    let depth = opts.depth.unwrap_or(DEFAULT_SAMPLE_DEPTH);
    let tol = opts.tol.unwrap_or(DEFAULT_DIMENSION_TOL);
    let (weights, exponent) = weights_at(system, depth, tol)?;
    // Without --count every cylinder is emitted in lexicographic order.
    let indices: Vec<usize> = match opts.count {
        None => (0..weights.len()).collect(),
        Some(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            (0..n).map(|_| rng.random_range(0..weights.len())).collect()
        }
    };
    let points: Vec<DVector<f64>> = indices.iter().map(|&k| weights.points()[k].clone()).collect();
    let ws: Vec<f64> = indices.iter().map(|&k| weights.weights()[k]).collect();
    let ply = opts
        .out
        .as_ref()
        .is_some_and(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply")));
    let bytes = if ply {
        points_ply(&points, &ws)?
    } else {
        points_csv(&points, &ws)
    };
    let parameters = json!({
        "depth": depth,
        "count": opts.count,
        "seed": opts.seed,
        "tol": tol,
        "format": if ply { "ply" } else { "csv" },
    });
    let results = json!({
        "rows": points.len(),
        "exponent": exponent,
        "max_radius_bound": weights.max_radius_bound(),
        "out": opts.out.as_ref().map(|p| p.display().to_string()),
    });
    match &opts.out {
        Some(path) => Ok((parameters, results, EXIT_OK, None, vec![(path.clone(), bytes)])),
        None => Ok((parameters, results, EXIT_OK, Some(bytes), Vec::new())),
    }
}

fn measure(system: &IFSystem, opts: &Options) -> Result<Parts, CliError> {
    let depth = opts.depth.unwrap_or(DEFAULT_MEASURE_DEPTH);
    let tol = opts.tol.unwrap_or(DEFAULT_DIMENSION_TOL);
    let (weights, exponent) = weights_at(system, depth, tol)?;
    let identity = ConformalIdentity::new(system, &weights)?;
    let residual = identity.max_residual(1)?;
    let constants = distortion_constants(system, DEFAULT_DISTORTION_DEPTH, DISTORTION_SAMPLES, opts.seed)?;
    let ahlfors = match ahlfors_lower_check(system, &weights, &constants, AHLFORS_SAMPLES, AHLFORS_RADII, opts.seed) {
        Ok(r) => value(&r),
        Err(rigidlim::Error::Resolution { radius, floor }) => json!({
            "skipped": format!("radius grid floor {floor:e} above rho0 {radius:e}; raise --depth"),
        }),
        Err(e) => return Err(e.into()),
    };
    let ws = weights.weights();
    let listed = (ws.len() <= MAX_LISTED_WEIGHTS).then(|| ws.to_vec());
    let parameters = json!({
        "depth": depth,
        "tol": tol,
        "seed": opts.seed,
        "identity_word_length": 1,
        "ahlfors_samples": AHLFORS_SAMPLES,
        "ahlfors_radii_per_sample": AHLFORS_RADII,
        "distortion_depth": DEFAULT_DISTORTION_DEPTH,
        "distortion_samples": DISTORTION_SAMPLES,
    });
    let results = json!({
        "exponent": exponent,
        "cylinders": ws.len(),
        "min_weight": ws.iter().copied().fold(f64::INFINITY, f64::min),
        "max_weight": ws.iter().copied().fold(0.0, f64::max),
        "total": ws.iter().sum::<f64>(),
        "weights": listed,
        "identity_residual": residual,
        "constants": value(&constants),
        "ahlfors": ahlfors,
    });
    let files = opts
        .out
        .as_ref()
        .map(|p| vec![(p.clone(), weights.to_csv().into_bytes())])
        .unwrap_or_default();
    Ok((parameters, results, EXIT_OK, None, files))
}

fn distortion(system: &IFSystem, opts: &Options) -> Result<Parts, CliError> {
    let depth = opts.depth.unwrap_or(DEFAULT_DISTORTION_DEPTH);
    let trials = opts.count.unwrap_or(DEFAULT_BALL_TRIALS);
    let constants = distortion_constants(system, depth, DISTORTION_SAMPLES, opts.seed)?;
    let inclusion = check_ball_inclusions(system, &constants.inflated(BALL_K0_SLACK), trials, opts.seed)?;
    Ok((
        json!({
            "depth": depth,
            "samples": DISTORTION_SAMPLES,
            "ball_trials": trials,
            "k0_slack": BALL_K0_SLACK,
            "seed": opts.seed,
        }),
        json!({
            "c": constants.c_hat,
            "k0": constants.k0_hat,
            "d": constants.d_hat,
            "constants": value(&constants),
            "ball_inclusions": {
                "trials": inclusion.trials,
                "k0_used": inclusion.k0_used,
                "violations": inclusion.violations.len(),
                "first_violations": value(&inclusion.violations.iter().take(8).collect::<Vec<_>>()),
            },
        }),
        EXIT_OK,
        None,
        Vec::new(),
    ))
}

fn tangent(system: &IFSystem, opts: &Options) -> Result<Parts, CliError> {
    let d = system.dim();
    let l = opts.l.unwrap_or(1);
    if l == 0 || l >= d {
        return Err(CliError::Usage(format!("--l must satisfy 0 < l < d = {d}")));
    }
    let point = opts
        .point
        .as_ref()
        .ok_or_else(|| CliError::Usage("tangent needs --point".into()))?;
    if point.len() != d {
        return Err(CliError::Usage(format!("--point has {} coordinates, expected {d}", point.len())));
    }
    let a = DVector::from_column_slice(point);
    let delta = opts.delta.unwrap_or(0.1);
    let cfg = ClassifierConfig::default();
    let depth = opts.depth.unwrap_or_else(|| cfg.resolved_depth(system.alphabet().size()));
    let tol = opts.tol.unwrap_or(DEFAULT_DIMENSION_TOL);
    let (weights, exponent) = weights_at(system, depth, tol)?;
    let t = weights.t();
    let floor = RESOLUTION_FACTOR * weights.max_radius_bound();
    let radii = radius_grid(system.rho0(), floor);
    if radii.is_empty() {
        return Err(CliError::Failed(anyhow!(
            "no radius between the resolution floor {floor:e} and rho0; raise --depth"
        )));
    }

    let near: Vec<(DVector<f64>, f64)> = weights
        .points()
        .iter()
        .zip(weights.weights())
        .filter(|(p, _)| (*p - &a).norm() < radii[0])
        .map(|(p, w)| (p.clone(), *w))
        .collect();
    let (pts, ws): (Vec<_>, Vec<_>) = near.into_iter().unzip();
    let fitted = fit_plane(&pts, &ws, &a, l).ok();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let plane_count = cfg.resolved_plane_count(d, l);
    let mut best: Option<(f64, Subspace)> = None;
    for plane in plane_grid(d, l, plane_count, &mut rng)?.into_iter().chain(fitted.clone()) {
        let r = weak_tangent_ratios(&weights, &a, &plane, delta, t, &radii)?;
        if best.as_ref().is_none_or(|(m, _)| r.min_ratio < *m) {
            best = Some((r.min_ratio, plane));
        }
    }
    let (_, best_plane) = best.expect("nonempty plane grid");
    let best_result = weak_tangent_ratios(&weights, &a, &best_plane, delta, t, &radii)?;
    let fitted_result = fitted
        .as_ref()
        .map(|v| weak_tangent_ratios(&weights, &a, v, delta, t, &radii))
        .transpose()?;
    let cone = cone_containment_check(weights.points(), weights.max_radius_bound(), &a, &best_plane, delta, radii[0])?;
    Ok((
        json!({
            "point": point,
            "l": l,
            "delta": delta,
            "depth": depth,
            "seed": opts.seed,
            "radii": radii,
            "plane_count": plane_count,
            "resolution_floor": floor,
        }),
        json!({
            "exponent": exponent,
            "min_ratio": best_result.min_ratio,
            "best": value(&best_result),
            "fitted": fitted_result.as_ref().map(value),
            "cone_containment": value(&cone),
        }),
        EXIT_OK,
        None,
        Vec::new(),
    ))
}

fn rigidity(system: &IFSystem, opts: &Options) -> Result<Parts, CliError> {
    let d = system.dim();
    let l = opts.l.unwrap_or(1);
    if l == 0 || l >= d {
        return Err(CliError::Usage(format!("--l must satisfy 0 < l < d = {d}")));
    }
    let defaults = ClassifierConfig::default();
    let config = ClassifierConfig {
        depth: opts.depth,
        seed: opts.seed,
        spread_delta: opts.delta.unwrap_or(defaults.spread_delta),
        spread_rho: opts.rho.unwrap_or(defaults.spread_rho),
        ..defaults
    };
    let verdict = rigidity_classify(system, l, &config).context("rigidity classification")?;
    let exit = if verdict.kind == VerdictKind::Inconclusive {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    };
    Ok((value(&config), value(&verdict), exit, None, Vec::new()))
}

/// Parses `--point "x1,x2,…"`.
pub fn parse_point(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("bad coordinate {c:?}: {e}")))
        .collect()
}

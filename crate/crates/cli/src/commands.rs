use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tlps_core::env::{rollout, VehicleEnv};
use tlps_core::policy::Policy;
use tlps_core::report::write_learning_curve;
use tlps_core::search::{rollout_rng, Trainer};
use tlps_core::{
    build_dag, parse_spec, robustness, smooth_robustness, SmoothingParams, Spec, Trajectory,
};

use crate::config::RunConfig;
use crate::error::CliError;

pub const EXIT_SAT: u8 = 0;
pub const EXIT_VIOLATED: u8 = 10;
pub const EXIT_BOUNDARY: u8 = 11;

/// Rollout stream used by `eval`, outside any training iteration.
const EVAL_ITERATION: usize = u32::MAX as usize;

pub fn load_spec(path: &Path) -> Result<Spec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))?;
    parse_spec(&text).map_err(|e| CliError::Spec(format!("{}:{e}", path.display())))
}

fn load_trajectory(spec: &Spec, path: &Path) -> Result<Trajectory, CliError> {
    let file = File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Trajectory::read_csv(&spec.vars, file)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn params(beta: f64) -> Result<SmoothingParams, CliError> {
    SmoothingParams::new(beta).map_err(|e| CliError::Config(e.to_string()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn parse(spec_path: &Path) -> Result<u8, CliError> {
    let spec = load_spec(spec_path)?;
    print!("{}", spec.formula.tree_string(&spec.vars));
    println!("predicates: {}", spec.formula.predicates().len());
    println!("temporal operators: {}", spec.formula.temporal_count());
    Ok(0)
}

/// Smoothed value and slack of `tau` at `beta`.
struct Smoothed {
    value: f64,
    lower: f64,
    upper: f64,
}

fn smoothed(spec: &Spec, tau: &Trajectory, beta: f64) -> Result<Smoothed, CliError> {
    let p = params(beta)?;
    let dag = build_dag(&spec.formula, tau.len()).map_err(runtime)?;
    let bound = dag.error_bound(&p);
    Ok(Smoothed {
        value: smooth_robustness(&dag, tau, &p),
        lower: bound.lower,
        upper: bound.upper,
    })
}

fn check_dims(spec: &Spec) -> Result<(), CliError> {
    spec.formula
        .check_dim(spec.vars.dim())
        .map_err(CliError::Spec)
}

pub fn monitor(spec_path: &Path, traj_path: &Path, beta: Option<f64>) -> Result<u8, CliError> {
    let spec = load_spec(spec_path)?;
    check_dims(&spec)?;
    let tau = load_trajectory(&spec, traj_path)?;
    let rho = robustness(&tau, &spec.formula, 0);
    let (verdict, code) = if rho > 0.0 {
        ("SAT", EXIT_SAT)
    } else if rho < 0.0 {
        ("UNSAT", EXIT_VIOLATED)
    } else {
        ("BOUNDARY", EXIT_BOUNDARY)
    };
    println!("robustness: {rho:?}");
    println!("verdict: {verdict}");
    if let Some(beta) = beta {
        let s = smoothed(&spec, &tau, beta)?;
        println!("smoothed: {:?} (beta {beta:?})", s.value);
        println!("slack: lower {:?} upper {:?}", s.lower, s.upper);
    }
    Ok(code)
}

pub fn beta_sweep(
    spec_path: &Path,
    traj_path: &Path,
    betas: &[f64],
    out: Option<&Path>,
) -> Result<u8, CliError> {
    if betas.is_empty() {
        return Err(CliError::Config("beta-sweep needs at least one --beta value".into()));
    }
    let spec = load_spec(spec_path)?;
    check_dims(&spec)?;
    let tau = load_trajectory(&spec, traj_path)?;
    let rho = robustness(&tau, &spec.formula, 0);
    let mut csv = match out {
        Some(p) => Some(csv::Writer::from_writer(create(p)?)),
        None => None,
    };
    if let Some(w) = csv.as_mut() {
        w.write_record([
            "beta",
            "rho",
            "rho_smooth",
            "abs_error",
            "lower_slack",
            "upper_slack",
            "contained",
        ])
        .map_err(runtime)?;
    }
    println!("robustness: {rho:?}");
    for &beta in betas {
        let s = smoothed(&spec, &tau, beta)?;
        let err = (s.value - rho).abs();
        let contained = rho - s.lower <= s.value && s.value <= rho + s.upper;
        let verdict = if contained { "PASS" } else { "FAIL" };
        println!(
            "beta {beta:?}: smoothed {:?} error {err:?} slack [{:?}, {:?}] containment {verdict}",
            s.value, s.lower, s.upper
        );
        if let Some(w) = csv.as_mut() {
            w.write_record([
                beta.to_string(),
                rho.to_string(),
                s.value.to_string(),
                err.to_string(),
                s.lower.to_string(),
                s.upper.to_string(),
                contained.to_string(),
            ])
            .map_err(runtime)?;
        }
    }
    if let Some(mut w) = csv {
        w.flush().map_err(runtime)?;
    }
    Ok(0)
}

pub struct TrainArgs {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dump_trajectories: bool,
    pub quiet: bool,
}

fn setup(config: &Path, seed: Option<u64>) -> Result<(RunConfig, Spec, VehicleEnv), CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.train.seed = seed;
    }
    let spec = load_spec(&cfg.spec.path)?;
    let vars = VehicleEnv::variables();
    if spec.vars != vars {
        return Err(CliError::Spec(format!(
            "{}: spec must declare the vehicle state variables {}",
            cfg.spec.path.display(),
            vars.names_by_index().join(", ")
        )));
    }
    check_dims(&spec)?;
    let env = VehicleEnv::new(cfg.env.clone(), cfg.train.horizon)
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok((cfg, spec, env))
}

pub fn train(config: &Path, args: &TrainArgs) -> Result<u8, CliError> {
    let (cfg, spec, env) = setup(config, args.seed)?;
    let out_dir = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let dump = args.dump_trajectories || cfg.output.dump_trajectories;
    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out_dir.display())))?;

    let mut trainer = Trainer::new(cfg.train.clone(), &env, &spec.formula).map_err(|e| match e {
        tlps_core::search::TrainError::Spec(m) => CliError::Spec(m),
        tlps_core::search::TrainError::Config(m) => CliError::Config(m),
        other => CliError::Runtime(other.to_string()),
    })?;
    let mut reports = Vec::with_capacity(cfg.train.iterations);
    for _ in 0..cfg.train.iterations {
        let outcome = trainer.step().map_err(runtime)?;
        let r = &outcome.report;
        for w in &r.warnings {
            eprintln!("warning: iteration {}: {w}", r.iteration);
        }
        if !args.quiet {
            println!(
                "iteration {:3}  mean {:9.4}  max {:9.4}  min {:9.4}  satisfied {:.2}",
                r.iteration, r.mean_rho, r.max_rho, r.min_rho, r.frac_satisfied
            );
        }
        if dump {
            let dir = out_dir.join("trajectories").join(format!("iter_{:04}", r.iteration));
            fs::create_dir_all(&dir)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
            for (i, rollout) in outcome.batch.iter().enumerate() {
                let path = dir.join(format!("traj_{i:03}.csv"));
                rollout
                    .trajectory
                    .write_csv(&spec.vars, create(&path)?)
                    .map_err(runtime)?;
            }
        }
        reports.push(outcome.report);
    }
    write_learning_curve(
        &reports,
        cfg.output.wall_clock,
        create(&out_dir.join("learning_curve.csv"))?,
    )
    .map_err(runtime)?;
    let mut policy_file = create(&out_dir.join("policy.txt"))?;
    policy_file
        .write_all(trainer.policy().to_text().as_bytes())
        .and_then(|_| policy_file.flush())
        .map_err(runtime)?;
    if !args.quiet {
        if let Some(last) = reports.last() {
            println!(
                "final mean robustness {:.4}, satisfied {:.2}",
                last.mean_rho, last.frac_satisfied
            );
        }
        println!("wrote {}", out_dir.display());
    }
    Ok(0)
}

/// Rolls out a saved policy `batch_size` times and reports robustness.
pub fn eval(config: &Path, policy_path: &Path, seed: Option<u64>) -> Result<u8, CliError> {
    let (cfg, spec, env) = setup(config, seed)?;
    let text = fs::read_to_string(policy_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", policy_path.display())))?;
    let policy = Policy::from_text(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", policy_path.display())))?;
    if policy.steps() + 1 != cfg.train.horizon {
        return Err(CliError::Config(format!(
            "policy has {} steps but the horizon {} needs {}",
            policy.steps(),
            cfg.train.horizon,
            cfg.train.horizon - 1
        )));
    }
    let n = cfg.train.batch_size;
    let rhos: Vec<f64> = (0..n)
        .map(|i| {
            let mut rng = rollout_rng(cfg.train.seed, EVAL_ITERATION, i);
            let r = rollout(&env, |s, t, g| policy.sample_action(s, t, g), &mut rng);
            robustness(&r.trajectory, &spec.formula, 0)
        })
        .collect();
    let mean = rhos.iter().sum::<f64>() / n as f64;
    let sat = rhos.iter().filter(|r| **r > 0.0).count();
    println!("episodes: {n}");
    println!("mean robustness: {mean:?}");
    println!("min robustness: {:?}", rhos.iter().copied().fold(f64::INFINITY, f64::min));
    println!("max robustness: {:?}", rhos.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    println!("satisfied: {sat}/{n}");
    Ok(0)
}

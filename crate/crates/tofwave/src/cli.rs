//! Command line front end: one subcommand per pipeline stage, a run
//! directory per invocation, and a manifest naming every file written.
//!
//! Exit codes: 0 all checks passed, 1 a check failed or a computation
//! errored, 2 bad usage (arguments or config file).

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{parse_config, Config, ConfigError};
use crate::evolution::{
    asymptotic_phase, evolve_linear, evolve_nonlinear, fit_decay, shift_difference,
    suggested_window,
};
use crate::gridw::{algebraic_perturbation, write_field_csv, Field};
use crate::model::{solve_rest_state, validate_assumptions, ModelParams, RestState};
use crate::profile::{profile_derivative, solve_profile, ProfileProblem, WaveProfile};
use crate::report::{
    write_atomic, write_candidates_csv, write_dispersion_csv, write_norm_csv, write_profile_json,
    write_reports_json, write_resolvent_csv, write_series_csv, RunManifest,
};
use crate::spectral::{
    adjoint_null_vector, assemble_l, assemble_l_adjoint, crescent_contains, critical_branch,
    dispersion_curves, dispersion_residual, fit_crescent, fit_tangency, lambda_derivatives,
    parabolic_ratio_min, point_spectrum_probe, projector_pk, resolvent_probe, track_lambda,
    AdjointNullVector, LimitMatrices, Side, SpectralCurve, SpectrumCandidate,
};
use crate::verify::{
    default_time_samples, gronwall_iteration_check, gronwall_kernel_constant, kernel_bound_1,
    kernel_bound_2, kernel_bound_3, remainder_stability, SweepSpec, VerifyError,
};

type C = Complex64;

#[derive(Parser)]
#[command(
    name = "tofwave",
    version,
    about = "Numerical lab for modulated traveling fronts of a quintic complex Ginzburg-Landau equation"
)]
struct Cli {
    /// Configuration file with [section] key = value lines
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for run artifacts (default runs/<subcommand>)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for randomized checks
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    seed: u64,
    /// Worker threads (falls back to TOFWAVE_THREADS, then all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Print only check failures and errors
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the far-field rest state and report the derived constants
    RestState,
    /// Check the standing parameter assumptions and report margins
    Validate,
    /// Solve the traveling front profile and write it to CSV
    Profile,
    /// Sample the far-field dispersion curves on both sides
    Dispersion,
    /// Continue the slow eigenvalue branch and fit its quadratic tangency
    LambdaBranch,
    /// Scan for point spectrum away from the dispersion curves
    SpectrumProbe,
    /// Probe weighted resolvent norms on a path toward the origin
    ResolventProbe,
    /// Run the nonlinear evolution and fit decay and phase
    Evolve,
    /// Run the linearized evolution with the neutral direction removed
    LinearDecay,
    /// Sweep the convolution kernel bounds over decay parameters
    VerifyKernels,
    /// Check the Gronwall kernel constant and the bootstrap iteration
    VerifyGronwall {
        /// Kernel exponent p, overriding the config
        #[arg(long, value_name = "P")]
        p: Option<f64>,
    },
    /// Sample the nonlinear remainder split at random perturbations
    VerifyRemainders,
    /// Run the evolve pipeline over a grid of config overrides
    Sweep,
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::RestState => "rest-state",
        Command::Validate => "validate",
        Command::Profile => "profile",
        Command::Dispersion => "dispersion",
        Command::LambdaBranch => "lambda-branch",
        Command::SpectrumProbe => "spectrum-probe",
        Command::ResolventProbe => "resolvent-probe",
        Command::Evolve => "evolve",
        Command::LinearDecay => "linear-decay",
        Command::VerifyKernels => "verify-kernels",
        Command::VerifyGronwall { .. } => "verify-gronwall",
        Command::VerifyRemainders => "verify-remainders",
        Command::Sweep => "sweep",
    }
}

#[derive(Debug)]
enum CliError {
    /// bad arguments or config: exit 2
    Usage(String),
    /// a computation or io failure: exit 1
    Run(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Run(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn run_err<E: fmt::Display>(e: E) -> CliError {
    CliError::Run(e.to_string())
}

/// Entry point shared by the binary and the tests. Never panics on bad
/// input; returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests go to stdout and exit 0; genuine
            // usage errors print the synopsis to stderr and exit 2
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_threads(cli.threads);
    let (config, config_bytes) = match load(cli.config.as_deref()) {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let name = command_name(&cli.command);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(name));
    if let Err(e) = fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return 1;
    }
    let mut manifest = RunManifest::new(name, &config, cli.seed);
    if let (Some(path), Some(bytes)) = (cli.config.as_ref(), config_bytes.as_ref()) {
        manifest.record_input(&path.display().to_string(), bytes);
    }
    let mut ctx = Ctx { config: &config, out: out.clone(), manifest, seed: cli.seed, quiet: cli.quiet };
    let started = Instant::now();
    let result = dispatch(&cli.command, &mut ctx);
    ctx.manifest.record_timing("total", started.elapsed().as_millis());
    let mut manifest = ctx.manifest;
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    match manifest.write(&out) {
        Ok(path) => {
            if !cli.quiet {
                println!("manifest: {}", path.display());
            }
        }
        Err(e) => {
            eprintln!("error: cannot write manifest: {e}");
            return 1;
        }
    }
    match result {
        Err(CliError::Usage(_)) => 2,
        Err(CliError::Run(_)) => 1,
        Ok(()) => {
            let failed = manifest.checks.iter().filter(|c| !c.pass).count();
            if failed == 0 {
                if !cli.quiet {
                    println!("ok: {} checks passed", manifest.checks.len());
                }
                0
            } else {
                eprintln!("failed: {failed} of {} checks", manifest.checks.len());
                1
            }
        }
    }
}

fn init_threads(flag: Option<usize>) {
    let n = flag
        .or_else(|| std::env::var("TOFWAVE_THREADS").ok().and_then(|s| s.trim().parse().ok()));
    if let Some(n) = n.filter(|n| *n > 0) {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load(path: Option<&Path>) -> Result<(Config, Option<Vec<u8>>), ConfigError> {
    match path {
        None => Ok((Config::default(), None)),
        Some(p) => {
            let bytes = fs::read(p)
                .map_err(|e| ConfigError::Io { path: p.display().to_string(), source: e })?;
            let text = String::from_utf8_lossy(&bytes);
            let config = parse_config(&text)?;
            Ok((config, Some(bytes)))
        }
    }
}

struct Ctx<'a> {
    config: &'a Config,
    out: PathBuf,
    manifest: RunManifest,
    seed: u64,
    quiet: bool,
}

impl Ctx<'_> {
    fn say(&self, msg: String) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    fn check(&mut self, name: &str, pass: bool, detail: String) {
        if pass {
            if !self.quiet {
                println!("[pass] {name}: {detail}");
            }
        } else {
            eprintln!("[FAIL] {name}: {detail}");
        }
        self.manifest.record_check(name, pass, detail);
    }

    /// Writes bytes into the run directory and records the file in the
    /// manifest.
    fn save(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out.join(name);
        write_atomic(&path, bytes)
            .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.record_output(&path);
        Ok(())
    }

    fn save_json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let body = serde_json::to_string_pretty(value).map_err(run_err)?;
        self.save(name, body.as_bytes())
    }

    /// Writes through one of the report writers, then records the file in
    /// the manifest.
    fn save_with<F>(&mut self, name: &str, writer: F) -> Result<(), CliError>
    where
        F: FnOnce(&Path) -> std::io::Result<()>,
    {
        let path = self.out.join(name);
        writer(&path).map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.record_output(&path);
        Ok(())
    }

    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let started = Instant::now();
        let value = f();
        self.manifest.record_timing(name, started.elapsed().as_millis());
        value
    }
}

fn dispatch(cmd: &Command, ctx: &mut Ctx) -> Result<(), CliError> {
    match cmd {
        Command::RestState => run_rest_state(ctx),
        Command::Validate => run_validate(ctx),
        Command::Profile => run_profile(ctx),
        Command::Dispersion => run_dispersion(ctx),
        Command::LambdaBranch => run_lambda_branch(ctx),
        Command::SpectrumProbe => run_spectrum_probe(ctx),
        Command::ResolventProbe => run_resolvent_probe(ctx),
        Command::Evolve => run_evolve(ctx).map(|_| ()),
        Command::LinearDecay => run_linear_decay(ctx),
        Command::VerifyKernels => run_verify_kernels(ctx),
        Command::VerifyGronwall { p } => run_verify_gronwall(ctx, *p),
        Command::VerifyRemainders => run_verify_remainders(ctx),
        Command::Sweep => run_sweep(ctx),
    }
}

// ---------------------------------------------------------------------------
// shared pipeline stages

fn build_model(config: &Config) -> Result<(ModelParams, RestState), CliError> {
    let params = config.model_params();
    let rest = solve_rest_state(&params).map_err(run_err)?;
    Ok((params, rest))
}

fn build_profile(config: &Config) -> Result<(ModelParams, RestState, WaveProfile), CliError> {
    let (params, rest) = build_model(config)?;
    let grid = config.make_grid().map_err(CliError::Usage)?;
    let problem = ProfileProblem::new(params.clone(), rest.clone(), grid);
    let profile = solve_profile(&problem, None, &config.solve_options()).map_err(run_err)?;
    Ok((params, rest, profile))
}

/// Adjoint null vector and profile derivative, the pair needed by every
/// decomposition-based pipeline.
fn build_adjoint(
    params: &ModelParams,
    profile: &WaveProfile,
) -> Result<(AdjointNullVector, Field), CliError> {
    let ladj = assemble_l_adjoint(profile, params);
    let adj = adjoint_null_vector(&ladj, profile).map_err(run_err)?;
    let vx = profile_derivative(profile);
    Ok((adj, vx))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// Dispersion curves for both signs of the far field over the config grid.
fn both_side_curves(config: &Config, lim: &LimitMatrices) -> Vec<SpectralCurve> {
    let nus = linspace(-config.dispersion.nu_max, config.dispersion.nu_max, config.dispersion.n_nu);
    let mut curves = dispersion_curves(lim, Side::Minus, &nus);
    curves.extend(dispersion_curves(lim, Side::Plus, &nus));
    curves
}

/// Quadratic coefficient of the slow branch at the origin, in closed form
/// from the rest state.
fn curvature_target(params: &ModelParams, rest: &RestState, speed: f64) -> f64 {
    let alpha1 = params.alpha.re;
    let alpha2 = params.alpha.im;
    -(alpha1 * rest.sigma1 + alpha2 * rest.sigma2) / (speed * speed * rest.sigma1)
}

fn subtract(a: &[[f64; 2]], b: &[[f64; 2]]) -> Field {
    a.iter().zip(b).map(|(x, y)| [x[0] - y[0], x[1] - y[1]]).collect()
}

// ---------------------------------------------------------------------------
// subcommands

fn run_rest_state(ctx: &mut Ctx) -> Result<(), CliError> {
    let (params, rest) = build_model(ctx.config)?;
    let report = validate_assumptions(&params, &rest);
    ctx.say(format!("r_inf = {:?}", rest.r_inf));
    ctx.say(format!("omega = {:?}", rest.omega));
    ctx.say(format!("sigma1 = {:?}, sigma2 = {:?}", rest.sigma1, rest.sigma2));
    ctx.check(
        "rest-state-found",
        rest.r_inf > 0.0,
        format!("r_inf {:?}, omega {:?}", rest.r_inf, rest.omega),
    );
    ctx.check(
        "rest-state-unique",
        rest.ambiguous_roots.is_empty(),
        format!("competing stable roots: {:?}", rest.ambiguous_roots),
    );
    ctx.check(
        "assumptions",
        report.a1 && report.a2 && report.a3,
        format!(
            "margins: diffusion {:?}, zero damping {:?}, slope {:?}, combined {:?}",
            report.a1_alpha_margin, report.a1_zero_damping, report.a2_margin, report.a3_margin
        ),
    );
    let body = json!({
        "r_inf": rest.r_inf,
        "v_inf": rest.v_inf,
        "omega": rest.omega,
        "g1p_rinf": rest.g1p_rinf,
        "a3_combination": rest.a3_combination,
        "sigma1": rest.sigma1,
        "sigma2": rest.sigma2,
        "ambiguous_roots": rest.ambiguous_roots,
    });
    ctx.save_json("rest_state.json", &body)
}

fn run_validate(ctx: &mut Ctx) -> Result<(), CliError> {
    let (params, rest) = build_model(ctx.config)?;
    let report = validate_assumptions(&params, &rest);
    ctx.check(
        "diffusion-and-zero-damping",
        report.a1,
        format!(
            "alpha margin {:?}, damping at zero {:?}",
            report.a1_alpha_margin, report.a1_zero_damping
        ),
    );
    ctx.check("gain-slope-at-rest", report.a2, format!("margin {:?}", report.a2_margin));
    ctx.check("combined-damping", report.a3, format!("margin {:?}", report.a3_margin));
    ctx.say(format!("note: {}", report.a4_note));
    let body = json!({
        "a1": report.a1,
        "a1_alpha_margin": report.a1_alpha_margin,
        "a1_zero_damping": report.a1_zero_damping,
        "a2": report.a2,
        "a2_margin": report.a2_margin,
        "a3": report.a3,
        "a3_margin": report.a3_margin,
        "a4_note": report.a4_note,
        "r_inf": rest.r_inf,
        "omega": rest.omega,
    });
    ctx.save_json("assumptions.json", &body)
}

fn run_profile(ctx: &mut Ctx) -> Result<(), CliError> {
    let config = ctx.config;
    let (_params, _rest, profile) = ctx.time("solve", || build_profile(config))?;
    ctx.say(format!("c = {:?}", profile.c));
    ctx.say(format!("omega = {:?}", profile.omega));
    ctx.check(
        "profile-converged",
        profile.residual_norm <= 10.0 * config.profile.tol,
        format!("residual {:e}", profile.residual_norm),
    );
    ctx.check("speed-positive", profile.c > 0.0, format!("c {:?}", profile.c));
    ctx.check(
        "tail-rates-resolved",
        profile.tail_rates.left.is_some() && profile.tail_rates.right.is_some(),
        format!("left {:?}, right {:?}", profile.tail_rates.left, profile.tail_rates.right),
    );
    let grid = profile.grid;
    ctx.save_with("profile.csv", |p| {
        write_field_csv(p, &grid, &profile.v_star).map_err(std::io::Error::other)
    })?;
    ctx.save_with("profile.json", |p| write_profile_json(p, &profile))
}

fn run_dispersion(ctx: &mut Ctx) -> Result<(), CliError> {
    let config = ctx.config;
    let (params, rest, profile) = ctx.time("solve", || build_profile(config))?;
    let lim = LimitMatrices::new(&params, &rest, profile.c);
    let curves = both_side_curves(config, &lim);
    let mut max_resid = 0.0f64;
    let mut max_re = f64::NEG_INFINITY;
    let mut min_abs = f64::INFINITY;
    for curve in &curves {
        for &(nu, s) in &curve.samples {
            max_resid = max_resid.max(dispersion_residual(&lim, curve.side, nu, s));
            max_re = max_re.max(s.re);
            if curve.side == Side::Plus {
                min_abs = min_abs.min(s.norm());
            }
        }
    }
    ctx.say(format!("{} branches, max Re s = {:?}", curves.len(), max_re));
    ctx.check("eigenvalue-residual", max_resid < 1e-8, format!("max residual {:e}", max_resid));
    ctx.check("curves-stable", max_re <= 1e-12, format!("max Re s {:e}", max_re));
    ctx.check(
        "neutral-touch-at-origin",
        min_abs < 1e-10,
        format!("closest approach to 0: {:e}", min_abs),
    );
    ctx.save_with("dispersion.csv", |p| write_dispersion_csv(p, &curves))
}

fn run_lambda_branch(ctx: &mut Ctx) -> Result<(), CliError> {
    let config = ctx.config;
    let (params, rest, profile) = ctx.time("solve", || build_profile(config))?;
    let lim = LimitMatrices::new(&params, &rest, profile.c);
    let c = profile.c;
    let deriv = lambda_derivatives(&lim, 0.01).map_err(run_err)?;
    let q = curvature_target(&params, &rest, c);
    ctx.say(format!(
        "lambda(0) = {:?}, lambda'(0) = {:?}, lambda''(0) = {:?}",
        deriv.lambda0, deriv.d1, deriv.d2
    ));
    ctx.check(
        "origin-eigenvalue",
        deriv.lambda0.norm() < 1e-10,
        format!("|lambda(0)| {:e}", deriv.lambda0.norm()),
    );
    let slope_err = (deriv.d1 * c - C::new(1.0, 0.0)).norm();
    ctx.check(
        "slope-inverse-speed",
        slope_err < 1e-6,
        format!("|c lambda'(0) - 1| {:e}", slope_err),
    );
    let d2_target = 2.0 * q / c;
    let curv_err = (deriv.d2 - C::new(d2_target, 0.0)).norm() / d2_target.abs();
    ctx.check(
        "curvature-matches-symbol",
        curv_err < 1e-4,
        format!("lambda''(0) {:?} vs {:?}, rel err {:e}", deriv.d2, d2_target, curv_err),
    );

    // dense sampling near the origin for the tangency fit
    let fine: Vec<f64> = linspace(-0.4, 0.4, 801);
    let plus_fine = dispersion_curves(&lim, Side::Plus, &fine);
    let crit = critical_branch(&plus_fine)
        .ok_or_else(|| CliError::Run("no branch touches the origin".into()))?;
    let tang = fit_tangency(&plus_fine[crit], 0.1).map_err(run_err)?;
    let kappa_err = (tang.kappa_fit - q.abs()).abs() / q.abs();
    ctx.check(
        "tangency-curvature",
        tang.kappa_fit > 0.0 && kappa_err < 1e-2,
        format!("kappa fit {:?} vs {:?}, rel err {:e}", tang.kappa_fit, q.abs(), kappa_err),
    );

    // the crescent fitted from all curves must exclude every sample
    let mut curves = both_side_curves(config, &lim);
    curves.extend(dispersion_curves(&lim, Side::Minus, &fine));
    curves.extend(plus_fine.iter().cloned());
    let crescent = fit_crescent(&curves, 0.1).map_err(run_err)?;
    let mut inside = 0usize;
    let mut total = 0usize;
    for curve in &curves {
        for &(_, s) in &curve.samples {
            total += 1;
            if crescent_contains(s, &crescent) {
                inside += 1;
            }
        }
    }
    ctx.check(
        "crescent-excludes-curves",
        inside == 0,
        format!("{inside} of {total} samples inside {crescent:?}"),
    );

    // stability ratio along parabolic approach paths into the crescent
    let mut parabolic: Vec<(f64, f64)> = Vec::new();
    for i in 0..5 {
        let a = 0.9 * tang.kappa_fit * i as f64 / 4.0;
        let ratio = parabolic_ratio_min(&lim, a, 0.1, 40).map_err(run_err)?;
        parabolic.push((a, ratio));
    }
    let parabolic_ok = parabolic.iter().all(|(_, r)| *r > 0.0);
    ctx.check(
        "parabolic-paths-stable",
        parabolic_ok,
        format!("(a, min ratio) = {parabolic:?}"),
    );

    // real continuation of the branch for the CSV record
    let path: Vec<C> = linspace(0.0, config.branch.s_max, config.branch.n_samples)
        .into_iter()
        .skip(1)
        .map(|s| C::new(s, 0.0))
        .collect();
    let branch = track_lambda(&lim, &path).map_err(run_err)?;
    let mut csv = String::from("re_s, im_s, re_lambda, im_lambda\n");
    for &(s, l) in &branch.samples {
        csv.push_str(&format!("{:?}, {:?}, {:?}, {:?}\n", s.re, s.im, l.re, l.im));
    }
    ctx.save("branch.csv", csv.as_bytes())?;
    let body = json!({
        "lambda0": [deriv.lambda0.re, deriv.lambda0.im],
        "d1": [deriv.d1.re, deriv.d1.im],
        "d2": [deriv.d2.re, deriv.d2.im],
        "curvature_target": d2_target,
        "kappa_fit": tang.kappa_fit,
        "kappa_rms": tang.rms_residual,
        "crescent": {
            "kappa": crescent.kappa,
            "gamma": crescent.gamma,
            "rho": crescent.rho,
            "delta": crescent.delta,
        },
        "parabolic": parabolic.iter().map(|(a, r)| json!([a, r])).collect::<Vec<_>>(),
    });
    ctx.save_json("tangency.json", &body)
}

fn run_spectrum_probe(ctx: &mut Ctx) -> Result<(), CliError> {
    let config = ctx.config;
    let (params, rest, profile) = ctx.time("solve", || build_profile(config))?;
    let (adj, vx) = ctx.time("adjoint", || build_adjoint(&params, &profile))?;
    let op = assemble_l(&profile, &params);
    let lim = LimitMatrices::new(&params, &rest, profile.c);
    let curves = both_side_curves(config, &lim);
    let opts = config.probe_options();
    let report = ctx
        .time("probe", || point_spectrum_probe(&op, &curves, &opts, Some((&adj.field, &vx))))
        .map_err(run_err)?;
    ctx.say(format!("{} candidates, kernel sv {:?}", report.candidates.len(), report.kernel_sv));
    ctx.check(
        "kernel-dimensions",
        report.kernel_dims == (1, 1),
        format!(
            "(dim ker, extra at order 2) = {:?}, sv {:?} / {:?}",
            report.kernel_dims, report.kernel_sv, report.kernel_sq_sv
        ),
    );
    let overlap = report.jordan_overlap.unwrap_or(0.0);
    ctx.check(
        "no-jordan-growth",
        (overlap - 1.0).abs() < 1e-6,
        format!("adjoint overlap {:?}", overlap),
    );
    let unstable: Vec<&SpectrumCandidate> =
        report.candidates.iter().filter(|cand| !cand.artifact && cand.s.re > 1e-6).collect();
    ctx.check(
        "no-unstable-point-spectrum",
        unstable.is_empty(),
        format!("{} candidates with Re s > 1e-6", unstable.len()),
    );
    ctx.save_with("candidates.csv", |p| write_candidates_csv(p, &report.candidates))?;
    let body = json!({
        "kernel_sv": [report.kernel_sv.0, report.kernel_sv.1],
        "kernel_sq_sv": [report.kernel_sq_sv.0, report.kernel_sq_sv.1],
        "kernel_dims": [report.kernel_dims.0, report.kernel_dims.1],
        "jordan_overlap": report.jordan_overlap,
        "n_candidates": report.candidates.len(),
        "n_unstable": unstable.len(),
    });
    ctx.save_json("spectrum.json", &body)
}

fn run_resolvent_probe(ctx: &mut Ctx) -> Result<(), CliError> {
    let config = ctx.config;
    let (params, _rest, profile) = ctx.time("solve", || build_profile(config))?;
    let (adj, vx) = ctx.time("adjoint", || build_adjoint(&params, &profile))?;
    let op = assemble_l(&profile, &params);
    let grid = profile.grid;
    let rcfg = &config.resolvent;
    let path: Vec<C> =
        geomspace(rcfg.s_min, rcfg.s_max, rcfg.n_s).into_iter().map(|s| C::new(s, 0.0)).collect();

    // data with the neutral direction projected out stays bounded
    let rates = config.rate_params().map_err(CliError::Usage)?;
    let raw = algebraic_perturbation(rates.k + rates.m + rates.mu, 1.0, config.evolve.shape, &grid);
    let pk = projector_pk(&raw, &adj.field, &vx, &grid);
    let r0 = subtract(&raw, &pk);
    let bounded = ctx
        .time("projected", || resolvent_probe(&op, &r0, &path, rcfg.k, rcfg.mu, &adj.field, &vx))
        .map_err(run_err)?;
    let hi = bounded.iter().map(|s| s.norm_v).fold(f64::NEG_INFINITY, f64::max);
    let lo = bounded.iter().map(|s| s.norm_v).fold(f64::INFINITY, f64::min);
    let ratio = hi / lo;
    ctx.check(
        "bounded-off-kernel",
        ratio.is_finite() && ratio < 2.0,
        format!("norm ratio {:?} over |s| in [{:?}, {:?}]", ratio, rcfg.s_min, rcfg.s_max),
    );

    // data along the neutral direction grows like 1/|s|
    let kernel = ctx
        .time("kernel", || resolvent_probe(&op, &vx, &path, rcfg.k, rcfg.mu, &adj.field, &vx))
        .map_err(run_err)?;
    let pts: Vec<(f64, f64)> = kernel.iter().map(|s| (s.s.norm().ln(), s.norm_v.ln())).collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    ctx.check(
        "kernel-direction-pole",
        (slope + 1.0).abs() < 0.2,
        format!("log-log slope {:?} (target -1)", slope),
    );
    ctx.say(format!("bounded ratio {ratio:?}, kernel slope {slope:?}"));
    ctx.save_with("resolvent.csv", |p| write_resolvent_csv(p, &bounded))?;
    ctx.save_with("resolvent_kernel.csv", |p| write_resolvent_csv(p, &kernel))?;
    let body = json!({
        "norm_ratio": ratio,
        "kernel_slope": slope,
        "s_path": path.iter().map(|s| s.re).collect::<Vec<f64>>(),
    });
    ctx.save_json("resolvent.json", &body)
}

struct EvolveSummary {
    tau_inf: Option<f64>,
    exponent: Option<f64>,
}

fn run_evolve(ctx: &mut Ctx) -> Result<EvolveSummary, CliError> {
    let config = ctx.config;
    let (params, _rest, profile) = ctx.time("solve", || build_profile(config))?;
    let (adj, _vx) = ctx.time("adjoint", || build_adjoint(&params, &profile))?;
    let sim = config.simulation_config().map_err(CliError::Usage)?;
    let ecfg = &config.evolve;
    let grid = profile.grid;
    let u0: Field = match ecfg.kind.as_str() {
        "shift" => shift_difference(&profile, ecfg.shift_delta),
        _ => algebraic_perturbation(ecfg.k_decay, ecfg.amplitude, ecfg.shape, &grid),
    };
    let states = ctx
        .time("evolve", || evolve_nonlinear(&u0, &sim, &profile, &adj.field, &params))
        .map_err(run_err)?;
    let all_valid = states.iter().all(|s| s.valid);
    ctx.check("decomposition-valid", all_valid, format!("{} outputs", states.len()));
    let window = suggested_window(sim.t_final, &grid, profile.c);
    let tau_series: Vec<(f64, f64)> = states.iter().map(|s| (s.t, s.tau)).collect();
    let norm_series: Vec<(f64, f64)> = states.iter().map(|s| (s.t, s.norms[0].1)).collect();

    let mut tau_inf = None;
    let mut exponent = None;
    let mut fits = serde_json::Map::new();
    fits.insert("kind".into(), json!(ecfg.kind));
    fits.insert("window".into(), json!([window.0, window.1]));
    match asymptotic_phase(&tau_series, &sim.rates) {
        Ok((t_inf, pfit)) => {
            tau_inf = Some(t_inf);
            ctx.check(
                "phase-settles",
                pfit.p >= -0.05,
                format!("tau_inf {:?}, tail exponent {:?}", t_inf, pfit.p),
            );
            fits.insert(
                "phase".into(),
                json!({
                    "tau_inf": t_inf,
                    "p": pfit.p,
                    "amplitude": pfit.amplitude,
                    "rms": pfit.rms_residual,
                }),
            );
        }
        Err(e) => ctx.check("phase-settles", false, e.to_string()),
    }
    if ecfg.kind == "shift" {
        let err = tau_inf.map(|t| (t - ecfg.shift_delta).abs());
        ctx.check(
            "phase-recovered",
            err.is_some_and(|e| e < 1e-4),
            format!("tau_inf {:?} vs delta {:?}", tau_inf, ecfg.shift_delta),
        );
        let peak = norm_series.iter().map(|p| p.1).fold(0.0f64, f64::max);
        let last = norm_series.last().map(|p| p.1).unwrap_or(f64::NAN);
        ctx.check(
            "shape-residual-floors",
            last < 0.25 * peak,
            format!("peak {:e}, final {:e}", peak, last),
        );
    } else {
        match fit_decay(&norm_series, window) {
            Ok(fit) => {
                exponent = Some(fit.exponent);
                ctx.check(
                    "shape-decays",
                    fit.exponent <= -0.95,
                    format!(
                        "fitted exponent {:?} on t in [{:?}, {:?}]",
                        fit.exponent, window.0, window.1
                    ),
                );
                fits.insert(
                    "decay".into(),
                    json!({
                        "exponent": fit.exponent,
                        "intercept": fit.intercept,
                        "rms": fit.rms_residual,
                    }),
                );
            }
            Err(e) => ctx.check("shape-decays", false, e.to_string()),
        }
    }
    if let Some(t) = tau_inf {
        ctx.say(format!("tau_inf = {t:?}"));
    }
    ctx.save_with("series.csv", |p| write_series_csv(p, &states))?;
    ctx.save_json("fits.json", &serde_json::Value::Object(fits))?;
    Ok(EvolveSummary { tau_inf, exponent })
}

fn run_linear_decay(ctx: &mut Ctx) -> Result<(), CliError> {
    let config = ctx.config;
    let (params, _rest, profile) = ctx.time("solve", || build_profile(config))?;
    let (adj, vx) = ctx.time("adjoint", || build_adjoint(&params, &profile))?;
    let op = assemble_l(&profile, &params);
    let grid = profile.grid;
    let sim = config.simulation_config().map_err(CliError::Usage)?;
    let rates = sim.rates;
    let window = suggested_window(sim.t_final, &grid, profile.c);

    // data orthogonal to the neutral pair decays at the full weighted rate
    let raw = algebraic_perturbation(rates.k + rates.m + rates.mu, 1.0, config.evolve.shape, &grid);
    let pk = projector_pk(&raw, &adj.field, &vx, &grid);
    let w0 = subtract(&raw, &pk);
    let series = ctx.time("projected", || evolve_linear(&w0, &sim, &op)).map_err(run_err)?;
    let fit = fit_decay(&series, window).map_err(run_err)?;
    let target = -rates.m_star() / 2.0 + 0.3;
    ctx.check(
        "projected-data-decays",
        fit.exponent <= target,
        format!("fitted exponent {:?}, required <= {:?}", fit.exponent, target),
    );

    // the derivative of the profile is neutral: no decay, no growth
    let series_k = ctx.time("kernel", || evolve_linear(&vx, &sim, &op)).map_err(run_err)?;
    let fit_k = fit_decay(&series_k, window).map_err(run_err)?;
    ctx.check(
        "neutral-direction-flat",
        fit_k.exponent.abs() <= 0.05,
        format!("fitted exponent {:?}", fit_k.exponent),
    );
    ctx.say(format!(
        "projected exponent {:?}, neutral exponent {:?}",
        fit.exponent, fit_k.exponent
    ));
    ctx.save_with("linear.csv", |p| write_norm_csv(p, &series))?;
    ctx.save_with("linear_kernel.csv", |p| write_norm_csv(p, &series_k))?;
    let body = json!({
        "projected_exponent": fit.exponent,
        "required": target,
        "neutral_exponent": fit_k.exponent,
        "window": [window.0, window.1],
    });
    ctx.save_json("linear.json", &body)
}

fn run_verify_kernels(ctx: &mut Ctx) -> Result<(), CliError> {
    let config = ctx.config;
    let kcfg = &config.kernels;
    let mut sweep = SweepSpec::new(kcfg.k, kcfg.q);
    sweep.resolution = kcfg.resolution;
    let mut reports = Vec::new();

    // configured exponents over the full (x, beta) grid
    let main =
        ctx.time("first-kernel", || kernel_bound_1(kcfg.k, kcfg.q, &sweep)).map_err(run_err)?;
    ctx.check("first-kernel", main.pass, format!("sup {:?}, bound {:?}", main.sup, main.bound));
    reports.push(main);

    // critical case q = 1, beta = 0 against the closed-form constant
    let mut crit_sweep = SweepSpec::new(kcfg.k, 1.0);
    crit_sweep.resolution = kcfg.resolution;
    crit_sweep.betas = vec![0.0];
    let crit = ctx
        .time("first-kernel-critical", || kernel_bound_1(kcfg.k, 1.0, &crit_sweep))
        .map_err(run_err)?;
    ctx.check(
        "first-kernel-critical",
        crit.pass,
        format!("sup {:?} <= 2^((k+1)/2)/k = {:?}", crit.sup, crit.bound),
    );
    reports.push(crit);

    // second kernel needs q < 1; the pure exponential case has an exact sup
    let q2 = if kcfg.q < 1.0 { kcfg.q } else { 0.0 };
    let second = ctx.time("second-kernel", || kernel_bound_2(q2, &sweep)).map_err(run_err)?;
    ctx.check("second-kernel", second.pass, format!("q {:?}, sup {:?}", q2, second.sup));
    reports.push(second);

    // third kernel diverges as beta -> 0; normalized by the known penalty
    let k3 = kcfg.k.max(1.0);
    let third =
        ctx.time("third-kernel", || kernel_bound_3(k3, kcfg.beta0, &sweep)).map_err(run_err)?;
    ctx.check("third-kernel", third.pass, format!("k {:?}, normalized sup {:?}", k3, third.sup));
    reports.push(third);

    for r in &reports {
        ctx.say(format!(
            "{}: sup {:?}, bound {:?}, refinement drift {:e}",
            r.check, r.sup, r.bound, r.resolution_study
        ));
    }
    ctx.save_with("kernels.json", |p| write_reports_json(p, &reports))
}

fn run_verify_gronwall(ctx: &mut Ctx, p_flag: Option<f64>) -> Result<(), CliError> {
    let config = ctx.config;
    let gcfg = &config.gronwall;
    let p = p_flag.unwrap_or(gcfg.p);
    let samples = default_time_samples();
    let resolution = config.kernels.resolution;
    let (report, values) = ctx
        .time("kernel-constant", || gronwall_kernel_constant(p, &samples, resolution))
        .map_err(run_err)?;
    ctx.say(format!("p = {:?}: sup integral = {:?}, C3 = {:?}", p, report.sup, report.bound));
    ctx.check(
        "gronwall-constant",
        report.pass,
        format!("sup {:?} <= C3 {:?}", report.sup, report.bound),
    );
    let mut kernel_csv = String::from("t, integral\n");
    for &(t, v) in &values {
        kernel_csv.push_str(&format!("{t:?}, {v:?}\n"));
    }
    ctx.save("gronwall_kernel.csv", kernel_csv.as_bytes())?;

    let iteration = ctx.time("iteration", || {
        gronwall_iteration_check(p, gcfg.c1, gcfg.c2, gcfg.eps, gcfg.t_final, gcfg.dt)
    });
    let iter_json = match iteration {
        Ok(it) => {
            ctx.check(
                "gronwall-iteration",
                it.bound_ok,
                format!(
                    "max phi / bound ratio {:?} after {} iterations",
                    it.max_ratio, it.iterations
                ),
            );
            let mut csv = String::from("t, phi, bound\n");
            for i in 0..it.ts.len() {
                csv.push_str(&format!("{:?}, {:?}, {:?}\n", it.ts[i], it.phi[i], it.bound[i]));
            }
            ctx.save("iteration.csv", csv.as_bytes())?;
            json!({"bound_ok": it.bound_ok, "max_ratio": it.max_ratio, "iterations": it.iterations})
        }
        Err(VerifyError::IterationDiverged { iters, sup }) => {
            ctx.check(
                "gronwall-iteration",
                false,
                format!("diverged after {iters} iterations, sup {sup:e}"),
            );
            json!({"bound_ok": false, "diverged": true, "iterations": iters, "sup": sup})
        }
        Err(e) => return Err(run_err(e)),
    };
    let body = json!({
        "p": p,
        "c3": report.bound,
        "sup": report.sup,
        "resolution_drift": report.resolution_study,
        "iteration": iter_json,
    });
    ctx.save_json("gronwall.json", &body)
}

fn run_verify_remainders(ctx: &mut Ctx) -> Result<(), CliError> {
    let config = ctx.config;
    let seed = ctx.seed;
    let (params, _rest, profile) = ctx.time("solve", || build_profile(config))?;
    let (adj, vx) = ctx.time("adjoint", || build_adjoint(&params, &profile))?;
    let rcfg = &config.remainders;
    let (report, set1, set2) = ctx
        .time("samples", || {
            remainder_stability(&params, &profile, &adj.field, &vx, rcfg.delta, rcfg.pairs, seed)
        })
        .map_err(run_err)?;
    ctx.say(format!(
        "lipschitz {:?} / {:?}, worst span leakage {:e}",
        set1.lipschitz,
        set2.lipschitz,
        set1.max_pk_rw.max(set2.max_pk_rw)
    ));
    ctx.check(
        "remainder-lipschitz",
        report.pass,
        format!("seed drift {:?}", report.resolution_study),
    );
    let body = json!({
        "delta": rcfg.delta,
        "pairs": rcfg.pairs,
        "pass": report.pass,
        "seed_drift": report.resolution_study,
        "set1": {"lipschitz": set1.lipschitz, "max_pk_rw": set1.max_pk_rw, "max_r_tau": set1.max_r_tau},
        "set2": {"lipschitz": set2.lipschitz, "max_pk_rw": set2.max_pk_rw, "max_r_tau": set2.max_r_tau},
    });
    ctx.save_json("remainders.json", &body)
}

struct SweepCell {
    dir: String,
    overrides: Vec<(String, f64)>,
    passed: bool,
    error: Option<String>,
    tau_inf: Option<f64>,
    exponent: Option<f64>,
}

fn run_sweep(ctx: &mut Ctx) -> Result<(), CliError> {
    let config = ctx.config;
    let scfg = &config.sweep;
    let param = scfg
        .param
        .clone()
        .ok_or_else(|| CliError::Usage("sweep requires [sweep] param and values".into()))?;
    if scfg.values.is_empty() {
        return Err(CliError::Usage("sweep requires a nonempty values list".into()));
    }
    let mut cells: Vec<Vec<(String, f64)>> = Vec::new();
    match (&scfg.param2, scfg.values2.is_empty()) {
        (Some(p2), false) => {
            for &v1 in &scfg.values {
                for &v2 in &scfg.values2 {
                    cells.push(vec![(param.clone(), v1), (p2.clone(), v2)]);
                }
            }
        }
        _ => {
            for &v1 in &scfg.values {
                cells.push(vec![(param.clone(), v1)]);
            }
        }
    }
    ctx.say(format!("{} cells over {param}", cells.len()));

    let out = ctx.out.clone();
    let seed = ctx.seed;
    let results: Vec<SweepCell> = cells
        .into_par_iter()
        .enumerate()
        .map(|(i, overrides)| {
            let dir_name = format!("cell-{i:03}");
            let mut cell = SweepCell {
                dir: dir_name.clone(),
                overrides: overrides.clone(),
                passed: false,
                error: None,
                tau_inf: None,
                exponent: None,
            };
            let mut cfg = config.clone();
            for (key, value) in &overrides {
                if let Err(e) = cfg.apply_override(key, *value) {
                    cell.error = Some(e.to_string());
                    return cell;
                }
            }
            let dir = out.join(&dir_name);
            if let Err(e) = fs::create_dir_all(&dir) {
                cell.error = Some(e.to_string());
                return cell;
            }
            let manifest = RunManifest::new("evolve", &cfg, seed);
            let mut sub = Ctx { config: &cfg, out: dir.clone(), manifest, seed, quiet: true };
            let started = Instant::now();
            let outcome = run_evolve(&mut sub);
            sub.manifest.record_timing("total", started.elapsed().as_millis());
            let write = sub.manifest.write(&dir);
            match outcome {
                Ok(summary) => {
                    cell.tau_inf = summary.tau_inf;
                    cell.exponent = summary.exponent;
                    cell.passed = sub.manifest.all_passed();
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
            if let Err(e) = write {
                cell.error = Some(format!("cannot write cell manifest: {e}"));
                cell.passed = false;
            }
            cell
        })
        .collect();

    let passed = results.iter().filter(|c| c.passed).count();
    for cell in &results {
        let status = if cell.passed { "pass" } else { "FAIL" };
        let detail = cell.error.clone().unwrap_or_default();
        ctx.say(format!("{}: {} {:?} {}", cell.dir, status, cell.overrides, detail));
    }
    ctx.check(
        "sweep-cells",
        passed == results.len(),
        format!("{passed} of {} cells passed", results.len()),
    );
    let body = json!({
        "schema": 1,
        "param": param,
        "values": scfg.values,
        "param2": scfg.param2,
        "values2": scfg.values2,
        "cells": results
            .iter()
            .map(|c| {
                json!({
                    "dir": c.dir,
                    "overrides": c.overrides.iter().map(|(k, v)| json!([k, v])).collect::<Vec<_>>(),
                    "passed": c.passed,
                    "error": c.error,
                    "tau_inf": c.tau_inf,
                    "exponent": c.exponent,
                })
            })
            .collect::<Vec<_>>(),
    });
    ctx.save_json("index.json", &body)
}

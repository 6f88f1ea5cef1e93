//! Command dispatch: each command maps a resolved [`RunConfig`] to a set of
//! output files. Every run writes `manifest.txt` first; failures also leave an
//! `error.txt` record and map to exit codes 2 (configuration), 3 (numerical)
//! and 4 (I/O).

use std::fs;
use std::path::{Path, PathBuf};

use metastab_core::action::{
    action, closed_form_action, extremal_control, extremal_path, ActionError, Direction,
};
use metastab_core::lyapunov::{
    alpha_bound, default_alpha, find_certificate_with, CertificateError, CertificateSearch, Grid,
    Rect,
};
use metastab_core::model::{
    bracket_determinant, forbidden_bracket_angles, Params, State, ValidationError,
};
use metastab_core::quasipotential::{
    classify_limit_measure, cost_matrix, default_delta, global_costs, CostError, CostMethod,
};
use metastab_core::simulate::{
    accessibility_control, accessibility_gain_bound, simulate_controlled, simulate_flow,
    simulate_sde, well_regions, EnsembleOptions, NamedRegion, Region, SimConfig, SimError,
    StartLayout,
};
use thiserror::Error;

use crate::config::{
    manifest_text, parse_manifest, Command, ConfigError, ControlChoice, DirectionChoice,
    MethodChoice, RunConfig, StartChoice,
};
use crate::ensemble::run_ensemble_parallel;
use crate::table::{self, num};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const ERROR_FILE: &str = "error.txt";
/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "METASTAB_OUT";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("{message}")]
    Config {
        message: String,
        clauses: Vec<String>,
    },
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl RunError {
    pub fn config(message: impl ToString) -> Self {
        RunError::Config {
            message: message.to_string(),
            clauses: Vec::new(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config { .. } => "config",
            RunError::Numerical(_) => "numerical",
            RunError::Io(_) => "io",
        }
    }

    /// Machine-readable `key = value` record.
    pub fn record(&self) -> String {
        let mut pairs = vec![
            ("status", "error".to_string()),
            ("kind", self.kind().to_string()),
            ("exit_code", self.exit_code().to_string()),
            ("message", self.to_string()),
        ];
        if let RunError::Config { clauses, .. } = self {
            pairs.extend(clauses.iter().map(|c| ("clause", c.clone())));
        }
        table::key_values(&pairs)
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::config(e)
    }
}

impl From<ValidationError> for RunError {
    fn from(e: ValidationError) -> Self {
        RunError::Config {
            message: e.to_string(),
            clauses: e.violations.iter().map(ToString::to_string).collect(),
        }
    }
}

impl From<SimError> for RunError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) => RunError::config(e),
            _ => RunError::Numerical(e.to_string()),
        }
    }
}

impl From<CostError> for RunError {
    fn from(e: CostError) -> Self {
        match e {
            CostError::InvalidDelta { .. }
            | CostError::InvalidSetting(_)
            | CostError::DegenerateDiffusion { .. } => RunError::config(e),
            _ => RunError::Numerical(e.to_string()),
        }
    }
}

impl From<CertificateError> for RunError {
    fn from(e: CertificateError) -> Self {
        match e {
            CertificateError::InvalidAlpha { .. }
            | CertificateError::InvalidDomain
            | CertificateError::InvalidEpsilon(_) => RunError::config(e),
            _ => RunError::Numerical(e.to_string()),
        }
    }
}

impl From<ActionError> for RunError {
    fn from(e: ActionError) -> Self {
        RunError::config(e)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

/// Output directory: the explicit one, else `$METASTAB_OUT`, else `metastab-out`.
pub fn resolve_out_dir(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("metastab-out"))
}

/// Named output files of one command.
pub type Outputs = Vec<(&'static str, String)>;

/// Runs `command` and writes its files plus the manifest into `out`.
/// Returns the names of the files written.
pub fn execute(command: Command, config: &RunConfig, out: &Path) -> Result<Vec<String>, RunError> {
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let stale = out.join(ERROR_FILE);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| io_error(&stale, e))?;
    }
    write(out, MANIFEST_FILE, &manifest_text(command, config))?;
    match dispatch(command, config) {
        Ok(files) => {
            let mut names = vec![MANIFEST_FILE.to_string()];
            for (name, body) in files {
                write(out, name, &body)?;
                names.push(name.to_string());
            }
            Ok(names)
        }
        Err(e) => {
            let _ = fs::write(out.join(ERROR_FILE), e.record());
            Err(e)
        }
    }
}

/// Re-runs the command recorded in a manifest.
pub fn replay(manifest: &Path, out: &Path) -> Result<Vec<String>, RunError> {
    let text = fs::read_to_string(manifest).map_err(|e| io_error(manifest, e))?;
    let (command, config) = parse_manifest(&text)?;
    execute(command, &config, out)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| io_error(&path, e))
}

pub fn dispatch(command: Command, c: &RunConfig) -> Result<Outputs, RunError> {
    if command == Command::Validate {
        return validate(c);
    }
    let p = c.params.validate()?;
    match command {
        Command::Validate => unreachable!(),
        Command::Simulate => simulate(&p, c),
        Command::Flow => flow(&p, c),
        Command::Control => control(&p, c),
        Command::Lyapunov => lyapunov(&p, c),
        Command::Action => action_cmd(&p, c),
        Command::Costs => costs(&p, c),
        Command::Classify => classify(&p),
        Command::Invariant => invariant(&p, c),
    }
}

fn sim_config(c: &RunConfig) -> SimConfig {
    SimConfig {
        dt: c.dt,
        t_final: c.t_final,
        seed: c.seed,
        initial: State::new(c.x0, c.y0),
    }
}

fn validate(c: &RunConfig) -> Result<Outputs, RunError> {
    let p = c.params.validate()?;
    let angles: Vec<String> = forbidden_bracket_angles(p.lambda1, p.lambda2, p.lambda3)
        .iter()
        .map(|&a| num(a))
        .collect();
    let pairs = [
        ("status", "valid".to_string()),
        ("bracket_determinant", num(bracket_determinant(&p))),
        (
            "forbidden_bracket_angles",
            if angles.is_empty() {
                "none".into()
            } else {
                angles.join(";")
            },
        ),
        ("alpha_bound", num(alpha_bound(&p))),
        ("default_delta", num(default_delta(&p))),
    ];
    Ok(vec![("validation.txt", table::key_values(&pairs))])
}

fn simulate(p: &Params, c: &RunConfig) -> Result<Outputs, RunError> {
    let traj = simulate_sde(p, &sim_config(c))?;
    Ok(vec![(
        "trajectory.csv",
        table::trajectory_csv(&traj, c.stride),
    )])
}

fn flow(p: &Params, c: &RunConfig) -> Result<Outputs, RunError> {
    let traj = simulate_flow(p, &sim_config(c))?;
    Ok(vec![("flow.csv", table::trajectory_csv(&traj, c.stride))])
}

fn control(p: &Params, c: &RunConfig) -> Result<Outputs, RunError> {
    let mut sc = sim_config(c);
    let mut summary = vec![("control", c.control.to_string())];
    let mut files = Vec::new();
    let traj = match c.control {
        ControlChoice::Zero => simulate_controlled(p, &sc, |_| 0.0)?,
        ControlChoice::Extremal => {
            extremal_control(p, c.w0, 0.0)?;
            sc.initial = State::new(c.w0, c.y0);
            let traj =
                simulate_controlled(p, &sc, |t| extremal_control(p, c.w0, t).unwrap_or(f64::NAN))?;
            let reference = extremal_path(p, c.w0, sc.t_final, traj.len(), Direction::Reverse)?;
            let err = traj
                .states
                .iter()
                .zip(reference.values())
                .map(|(s, w)| (s.x - w).abs())
                .fold(0.0, f64::max);
            summary.push(("max_abs_error_x", num(err)));
            files.push(("extremal.csv", table::path_csv(&reference)));
            traj
        }
        ControlChoice::Constant => {
            let delta = c.delta.unwrap_or(0.1);
            let bound = accessibility_gain_bound(p, delta)?;
            let gain = c.gain_factor * bound;
            let phi = accessibility_control(p, gain);
            let traj = simulate_controlled(p, &sc, |_| phi)?;
            summary.push(("delta", num(delta)));
            summary.push(("gain_bound", num(bound)));
            summary.push(("gain", num(gain)));
            let crossing = traj.first_time_x_below(-0.5);
            summary.push(("crossing_time", crossing.map_or_else(|| "none".into(), num)));
            traj
        }
    };
    files.insert(0, ("control.csv", table::trajectory_csv(&traj, c.stride)));
    files.push(("control.txt", table::key_values(&summary)));
    Ok(files)
}

fn lyapunov(p: &Params, c: &RunConfig) -> Result<Outputs, RunError> {
    let alpha = c.alpha.unwrap_or_else(|| default_alpha(p));
    let grid = Grid {
        rect: Rect::square(c.half_width),
        nx: c.grid,
        ny: c.grid,
    };
    let cert = find_certificate_with(
        p,
        &CertificateSearch {
            alpha,
            epsilon: p.epsilon0,
            grid,
        },
    )?;
    let pairs = [
        ("alpha", num(cert.alpha)),
        ("alpha_bound", num(alpha_bound(p))),
        ("alpha1", num(cert.alpha1)),
        ("alpha2", num(cert.alpha2)),
        ("moment_bound", num(cert.moment_bound())),
        ("epsilon_max", num(cert.epsilon_max)),
        ("min_slack", num(cert.min_slack)),
        ("grid", format!("{}x{}", grid.nx, grid.ny)),
        ("half_width", num(c.half_width)),
    ];
    Ok(vec![("certificate.txt", table::key_values(&pairs))])
}

fn action_cmd(p: &Params, c: &RunConfig) -> Result<Outputs, RunError> {
    let direction = match c.direction {
        DirectionChoice::Reverse => Direction::Reverse,
        DirectionChoice::Forward => Direction::Forward,
    };
    let horizon = c.horizon.unwrap_or(10.0 / p.lambda1);
    let path = extremal_path(p, c.w0, horizon, c.nodes, direction)?;
    let value = action(p, &path)?;
    let end = path.values()[path.len() - 1];
    let closed = match direction {
        Direction::Reverse if p.sigma1 == 0.0 => num(closed_form_action(p, c.w0, end)?),
        _ => "none".into(),
    };
    let pairs = [
        ("direction", c.direction.to_string()),
        ("w0", num(c.w0)),
        ("w_end", num(end)),
        ("horizon", num(horizon)),
        ("nodes", c.nodes.to_string()),
        ("normalized", num(value.normalized)),
        ("raw", num(value.raw)),
        ("closed_form_normalized", closed),
    ];
    Ok(vec![
        ("path.csv", table::path_csv(&path)),
        ("action.txt", table::key_values(&pairs)),
    ])
}

fn costs(p: &Params, c: &RunConfig) -> Result<Outputs, RunError> {
    let delta = c.delta.unwrap_or_else(|| default_delta(p));
    let pathopt = CostMethod::PathOpt {
        nodes: c.nodes,
        horizon: c.horizon,
    };
    let mut files = Vec::new();
    let primary = match c.method {
        MethodChoice::Integral => cost_matrix(p, delta, CostMethod::Integral)?,
        MethodChoice::PathOpt => cost_matrix(p, delta, pathopt)?,
        MethodChoice::Both => {
            let a = cost_matrix(p, delta, CostMethod::Integral)?;
            let b = cost_matrix(p, delta, pathopt)?;
            files.push(("cost_matrix_pathopt.csv", table::cost_matrix_csv(&b)));
            files.push(("cost_comparison.csv", table::cost_comparison_csv(&a, &b)));
            a
        }
    };
    files.insert(0, ("cost_matrix.csv", table::cost_matrix_csv(&primary)));
    files.push((
        "well_costs.csv",
        table::well_costs_csv(&global_costs(&primary)),
    ));
    Ok(files)
}

fn classify(p: &Params) -> Result<Outputs, RunError> {
    let cls = classify_limit_measure(p)?;
    let argmin: Vec<String> = cls
        .well_costs
        .argmin
        .iter()
        .map(|i| i.to_string())
        .collect();
    let verdict = format!(
        "sigma1,argmin,measure\n{},{},{}\n",
        num(p.sigma1),
        argmin.join(";"),
        cls.measure
    );
    Ok(vec![
        ("verdict.csv", verdict),
        ("cost_matrix.csv", table::cost_matrix_csv(&cls.matrix)),
        ("well_costs.csv", table::well_costs_csv(&cls.well_costs)),
    ])
}

/// Regions of the occupation experiment: the three bands and the exterior of
/// the ball of radius `radius`.
pub fn invariant_regions(delta: f64, radius: f64) -> Vec<NamedRegion> {
    let mut regions = well_regions(delta);
    regions.push(NamedRegion::new(
        "outside_R",
        Region::OutsideBall { radius },
    ));
    regions
}

fn invariant(p: &Params, c: &RunConfig) -> Result<Outputs, RunError> {
    let delta = c.delta.unwrap_or_else(|| default_delta(p));
    if delta.is_nan() || delta <= 0.0 || c.radius.is_nan() || c.radius <= 0.0 {
        return Err(RunError::config("delta and radius must be positive"));
    }
    let regions = invariant_regions(delta, c.radius);
    let start = match c.start {
        StartChoice::Fixed => StartLayout::Fixed,
        StartChoice::Alternate => StartLayout::AlternateStable,
    };
    let opts = EnsembleOptions {
        n_paths: c.n_paths,
        burn_in_fraction: c.burn_in_fraction,
        start,
    };
    let hist = run_ensemble_parallel(p, &sim_config(c), &regions, &opts)?;
    let f = |i: usize| hist.fraction(i);
    let pairs = [
        ("delta", num(delta)),
        ("radius", num(c.radius)),
        ("n_paths", c.n_paths.to_string()),
        ("burn_in", num(hist.burn_in)),
        ("total_time", num(hist.total)),
        ("fraction_K1_minus_K3", num(f(0) - f(2))),
        ("escape_fraction", num(f(3))),
    ];
    Ok(vec![
        ("occupation.csv", table::occupation_csv(&hist)),
        ("invariant.txt", table::key_values(&pairs)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_records_carry_exit_codes() {
        let e = RunError::from(
            metastab_core::model::RawParams {
                sigma1: 2.0,
                ..Default::default()
            }
            .validate()
            .unwrap_err(),
        );
        assert_eq!(e.exit_code(), 2);
        let rec = e.record();
        assert!(rec.contains("kind = config"));
        assert!(rec.contains("clause = sigma1 not in ]-sigma0, sigma0["));
        assert_eq!(RunError::Numerical("x".into()).exit_code(), 3);
        assert_eq!(RunError::Io("x".into()).exit_code(), 4);
    }

    #[test]
    fn explicit_out_dir_wins() {
        let d = resolve_out_dir(Some(PathBuf::from("here")));
        assert_eq!(d, PathBuf::from("here"));
    }
}

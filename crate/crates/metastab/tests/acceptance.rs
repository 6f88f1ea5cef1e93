//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use metastab::config::{Command, ControlChoice, MethodChoice, RunConfig, StartChoice};
use metastab::ensemble::run_ensemble_parallel;
use metastab::run::{execute, invariant_regions, replay, MANIFEST_FILE};
use metastab_core::action::{closed_form_action, extremal_control, extremal_path, Direction};
use metastab_core::lyapunov::{find_certificate, generator_on_w, lyapunov_jet, Grid};
use metastab_core::model::{
    bracket_determinant, bracket_determinant_raw, forbidden_bracket_angles, generator_apply,
    Params, RawParams, State,
};
use metastab_core::quasipotential::{
    classify_limit_measure, cost_matrix, default_delta, global_costs, passage_cost_integral,
    passage_cost_pathopt, CostMatrix, CostMethod, LimitMeasure, PathOptSettings,
};
use metastab_core::simulate::{
    accessibility_control, accessibility_gain_bound, path_rng, simulate_controlled,
    EnsembleOptions, SimConfig, StartLayout,
};
use rand::Rng;

const INTEGRAL_TOL: f64 = 1e-8;
const PATHOPT_TOL: f64 = 1e-3;
const PATHOPT_NODES: usize = 400;
const PATHOPT_HORIZON: f64 = 20.0;
const EXTREMAL_TOL: f64 = 1e-4;
const EXTREMAL_DT: f64 = 1e-3;
const SYMMETRY_TOL: f64 = 1e-6;
const MC_DT: f64 = 1e-3;
const MC_T_FINAL: f64 = 5000.0;
const MC_PATHS: usize = 16;
const MC_BURN_IN: f64 = 0.1;
const MC_SEED: u64 = 0;
const BALANCE_TOL: f64 = 0.15;
const CONCENTRATION_GAP: f64 = 0.2;
const GENERATOR_TOL: f64 = 1e-12;
const DETERMINANT_TOL: f64 = 1e-12;
const EXCLUDED_ANGLE_TOL: f64 = 1e-10;
const RANDOM_DRAWS: usize = 100;
const ACCESS_X0: f64 = 1.1;
const ACCESS_DELTA: f64 = 0.1;
const ACCESS_GAIN_FACTOR: f64 = 1.01;
const ESCAPE_RADIUS: f64 = 3.0;
const ESCAPE_TOL: f64 = 0.01;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reference() -> RawParams {
    RawParams {
        lambda1: 1.0,
        lambda2: 1.0,
        lambda3: 1.0,
        sigma0: 1.0,
        sigma1: 0.0,
        theta: FRAC_PI_4,
        epsilon: 0.1,
        epsilon0: 0.5,
    }
}

fn params(edit: impl FnOnce(&mut RawParams)) -> Params {
    let mut raw = reference();
    edit(&mut raw);
    raw.validate().expect("reference parameters are admissible")
}

fn closed_form_passage() -> Outcome {
    let p = params(|_| {});
    let exact = closed_form_action(&p, 1.0, 0.0).map_err(|e| e.to_string())?;
    let integral = passage_cost_integral(&p, 1.0, 0.0).map_err(|e| e.to_string())?;
    let opt = passage_cost_pathopt(
        &p,
        1.0,
        0.0,
        &PathOptSettings::new(PATHOPT_HORIZON, PATHOPT_NODES),
    )
    .map_err(|e| e.to_string())?;
    check(
        exact == 0.5
            && (integral - 0.5).abs() < INTEGRAL_TOL
            && (opt.cost - 0.5).abs() < PATHOPT_TOL,
        format!(
            "closed form {exact}, integral {integral:.12}, path optimizer {:.6}",
            opt.cost
        ),
    )
}

fn extremal_consistency() -> Outcome {
    let p = params(|_| {});
    let w0 = 0.6;
    let c = SimConfig {
        dt: EXTREMAL_DT,
        t_final: 5.0,
        seed: 0,
        initial: State::new(w0, 0.0),
    };
    let traj = simulate_controlled(&p, &c, |t| extremal_control(&p, w0, t).unwrap_or(f64::NAN))
        .map_err(|e| e.to_string())?;
    let path = extremal_path(&p, w0, c.t_final, traj.len(), Direction::Reverse)
        .map_err(|e| e.to_string())?;
    let err = traj
        .states
        .iter()
        .zip(path.values())
        .map(|(s, w)| (s.x - w).abs())
        .fold(0.0, f64::max);
    check(
        err < EXTREMAL_TOL,
        format!("max node error {err:.3e} over {} nodes", traj.len()),
    )
}

fn symmetric_matrix() -> Result<CostMatrix, String> {
    let p = params(|_| {});
    cost_matrix(&p, default_delta(&p), CostMethod::Integral).map_err(|e| e.to_string())
}

fn matrix_structure() -> Outcome {
    let cm = symmetric_matrix()?;
    let v = |i, j| cm.get(i, j);
    let zeros = [(1, 1), (2, 2), (3, 3), (2, 1), (2, 3)]
        .iter()
        .all(|&(i, j)| v(i, j) == 0.0);
    let v12 = v(1, 2);
    let equal = [(1, 3), (3, 1), (3, 2)]
        .iter()
        .all(|&(i, j)| (v(i, j) - v12).abs() < SYMMETRY_TOL);
    check(
        zeros && equal && v12 > 0.0,
        format!("V12 = {v12:.12}, exact zeros {zeros}, equal climbs {equal}"),
    )
}

fn global_cost_identities() -> Outcome {
    let cm = symmetric_matrix()?;
    let w = global_costs(&cm);
    let v12 = cm.get(1, 2);
    let mut ok = w.costs[0] == v12 && w.costs[2] == v12 && w.costs[1] == 2.0 * v12;
    let mut detail = format!("sigma1 = 0: W = {:?}", w.costs);
    for s1 in [0.5, -0.5] {
        let p = params(|r| r.sigma1 = s1);
        let cm =
            cost_matrix(&p, default_delta(&p), CostMethod::Integral).map_err(|e| e.to_string())?;
        let w = global_costs(&cm);
        let (v12, v32) = (cm.get(1, 2), cm.get(3, 2));
        ok &= w.costs[0] == v32 && w.costs[1] == v32 + v12 && w.costs[2] == v12;
        detail.push_str(&format!("; sigma1 = {s1}: W = {:?}", w.costs));
    }
    check(ok, detail)
}

fn classification_sweep() -> Outcome {
    let mut failures = Vec::new();
    for k in -9..=9 {
        let s1 = f64::from(k) / 10.0;
        let p = params(|r| r.sigma1 = s1);
        let expected = match k {
            k if k < 0 => LimitMeasure::DiracRight,
            0 => LimitMeasure::HalfHalf,
            _ => LimitMeasure::DiracLeft,
        };
        match classify_limit_measure(&p) {
            Ok(c) if c.measure == expected => {}
            Ok(c) => failures.push(format!("sigma1 = {s1}: {}", c.measure)),
            Err(e) => failures.push(format!("sigma1 = {s1}: {e}")),
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            "19 sweep points agree".into()
        } else {
            failures.join("; ")
        },
    )
}

struct Fractions {
    k1: f64,
    k3: f64,
    escape: f64,
}

fn occupation(sigma1: f64, epsilon: f64) -> Result<Fractions, String> {
    let p = params(|r| {
        r.sigma1 = sigma1;
        r.epsilon = epsilon;
    });
    let c = SimConfig {
        dt: MC_DT,
        t_final: MC_T_FINAL,
        seed: MC_SEED,
        initial: State::new(1.0, 0.0),
    };
    let regions = invariant_regions(default_delta(&p), ESCAPE_RADIUS);
    let opts = EnsembleOptions {
        n_paths: MC_PATHS,
        burn_in_fraction: MC_BURN_IN,
        start: StartLayout::AlternateStable,
    };
    let h = run_ensemble_parallel(&p, &c, &regions, &opts).map_err(|e| e.to_string())?;
    Ok(Fractions {
        k1: h.fraction(0),
        k3: h.fraction(2),
        escape: h.fraction(3),
    })
}

fn monte_carlo(balanced: &Fractions) -> Outcome {
    let right = occupation(0.5, 0.25)?;
    let left = occupation(-0.5, 0.25)?;
    let a = (balanced.k1 - balanced.k3).abs() <= BALANCE_TOL;
    let b = right.k1 >= right.k3 + CONCENTRATION_GAP;
    let c = left.k3 >= left.k1 + CONCENTRATION_GAP;
    check(
        a && b && c,
        format!(
            "(a) K1 {:.4} K3 {:.4}; (b) K1 {:.4} K3 {:.4}; (c) K1 {:.4} K3 {:.4}",
            balanced.k1, balanced.k3, right.k1, right.k3, left.k1, left.k3
        ),
    )
}

fn lyapunov_certificate() -> Outcome {
    let p = params(|_| {});
    let cert = find_certificate(&p, Grid::default()).map_err(|e| e.to_string())?;
    let mut rng = path_rng(7, 0);
    let mut worst = 0.0f64;
    for _ in 0..RANDOM_DRAWS {
        let s = State::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let a = generator_on_w(&p, cert.alpha, s);
        let b = generator_apply(&p, |q| lyapunov_jet(cert.alpha, q), s);
        worst = worst.max((a - b).abs() / a.abs().max(1.0));
    }
    check(
        cert.min_slack > 0.0 && worst <= GENERATOR_TOL,
        format!(
            "alpha {} alpha1 {:.6} alpha2 {:.6} min slack {:.6}; generator mismatch {worst:.2e}",
            cert.alpha, cert.alpha1, cert.alpha2, cert.min_slack
        ),
    )
}

fn hormander_determinant() -> Outcome {
    let mut rng = path_rng(8, 0);
    let mut worst = 0.0f64;
    let mut draws = 0;
    while draws < RANDOM_DRAWS {
        let raw = RawParams {
            lambda1: rng.random_range(0.1..3.0),
            lambda2: rng.random_range(0.1..3.0),
            lambda3: rng.random_range(0.1..3.0),
            sigma1: rng.random_range(-0.9..0.9),
            theta: rng.random_range(-3.1..3.1),
            ..reference()
        };
        let Ok(p) = raw.validate() else { continue };
        draws += 1;
        let (s, c) = p.theta.sin_cos();
        let formula = c * ((2.0 * p.lambda1 - p.lambda2) * s - 2.0 * p.lambda3 * c);
        worst = worst.max((bracket_determinant(&p) - formula).abs());
    }
    let mut at_excluded = 0.0f64;
    let base = reference();
    for theta in forbidden_bracket_angles(base.lambda1, base.lambda2, base.lambda3) {
        at_excluded = at_excluded.max(bracket_determinant_raw(&RawParams { theta, ..base }).abs());
    }
    check(
        worst < DETERMINANT_TOL && at_excluded < EXCLUDED_ANGLE_TOL,
        format!("formula mismatch {worst:.2e}; value at excluded angles {at_excluded:.2e}"),
    )
}

fn accessibility() -> Outcome {
    let deadline = (ACCESS_X0 - (-0.5)) / 1.0 + 1.0;
    let mut details = Vec::new();
    let mut ok = true;
    for s1 in [-0.5, 0.0, 0.5] {
        let p = params(|r| r.sigma1 = s1);
        let bound = accessibility_gain_bound(&p, ACCESS_DELTA).map_err(|e| e.to_string())?;
        let phi = accessibility_control(&p, ACCESS_GAIN_FACTOR * bound);
        let c = SimConfig {
            dt: 1e-3,
            t_final: deadline,
            seed: 0,
            initial: State::new(ACCESS_X0, 0.0),
        };
        let traj = simulate_controlled(&p, &c, |_| phi).map_err(|e| e.to_string())?;
        match traj.first_time_x_below(-0.5) {
            Some(t) => {
                ok &= t <= deadline;
                details.push(format!(
                    "sigma1 = {s1}: k = {:.4}, crossing at {t:.4}",
                    ACCESS_GAIN_FACTOR * bound
                ));
            }
            None => {
                ok = false;
                details.push(format!("sigma1 = {s1}: no crossing before {deadline}"));
            }
        }
    }
    check(ok, format!("{}; deadline {deadline}", details.join("; ")))
}

fn tightness(balanced: &Fractions) -> Outcome {
    check(
        balanced.escape < ESCAPE_TOL,
        format!(
            "fraction outside radius {ESCAPE_RADIUS}: {:.3e}",
            balanced.escape
        ),
    )
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .expect("output directory")
        .map(|e| {
            let e = e.expect("entry");
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).expect("file"),
            )
        })
        .collect()
}

fn experiments() -> Vec<(Command, RunConfig)> {
    let mut runs = Vec::new();
    let base = RunConfig::default();
    runs.push((Command::Validate, base.clone()));
    runs.push((
        Command::Simulate,
        RunConfig {
            t_final: 20.0,
            seed: 3,
            x0: 0.2,
            stride: 10,
            ..base.clone()
        },
    ));
    runs.push((
        Command::Flow,
        RunConfig {
            t_final: 10.0,
            x0: 0.5,
            y0: 0.3,
            ..base.clone()
        },
    ));
    runs.push((
        Command::Control,
        RunConfig {
            t_final: 5.0,
            control: ControlChoice::Extremal,
            ..base.clone()
        },
    ));
    let mut constant = RunConfig {
        t_final: 2.6,
        x0: ACCESS_X0,
        control: ControlChoice::Constant,
        ..base.clone()
    };
    constant.params.sigma1 = 0.5;
    runs.push((Command::Control, constant));
    runs.push((Command::Lyapunov, base.clone()));
    runs.push((
        Command::Action,
        RunConfig {
            nodes: 2000,
            ..base.clone()
        },
    ));
    runs.push((
        Command::Costs,
        RunConfig {
            method: MethodChoice::Both,
            ..base.clone()
        },
    ));
    for s1 in [-0.3, 0.0, 0.3] {
        let mut c = base.clone();
        c.params.sigma1 = s1;
        runs.push((Command::Classify, c));
    }
    let mut inv = RunConfig {
        dt: MC_DT,
        t_final: MC_T_FINAL,
        seed: MC_SEED,
        n_paths: MC_PATHS,
        burn_in_fraction: MC_BURN_IN,
        start: StartChoice::Alternate,
        radius: ESCAPE_RADIUS,
        ..base
    };
    inv.params.epsilon = 0.35;
    runs.push((Command::Invariant, inv));
    runs
}

fn reproducibility() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut mismatches = Vec::new();
    let runs = experiments();
    for (i, (command, config)) in runs.iter().enumerate() {
        let first = root.path().join(format!("run{i}"));
        let second = root.path().join(format!("replay{i}"));
        execute(*command, config, &first).map_err(|e| format!("{command}: {e}"))?;
        replay(&first.join(MANIFEST_FILE), &second)
            .map_err(|e| format!("{command} replay: {e}"))?;
        if read_dir(&first) != read_dir(&second) {
            mismatches.push(format!("{command} (run {i})"));
        }
    }
    check(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{} experiments byte-identical on replay", runs.len())
        } else {
            format!("differences: {}", mismatches.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let balanced = occupation(0.0, 0.35);
    let shared = |f: fn(&Fractions) -> Outcome| -> Outcome {
        match &balanced {
            Ok(b) => f(b),
            Err(e) => Err(e.clone()),
        }
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("closed-form passage cost", closed_form_passage()),
        (
            "extremal control reproduces the reverse flow",
            extremal_consistency(),
        ),
        ("cost-matrix structure", matrix_structure()),
        ("global costs", global_cost_identities()),
        ("limit-measure classification sweep", classification_sweep()),
        ("Monte Carlo concentration", shared(monte_carlo)),
        ("Lyapunov certificate", lyapunov_certificate()),
        ("bracket determinant", hormander_determinant()),
        ("accessibility by constant control", accessibility()),
        ("tightness diagnostic", shared(tightness)),
        ("manifest reproducibility", reproducibility()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

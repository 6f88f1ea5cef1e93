//! Time stepping of the stochastic system, the noiseless flow and the
//! controlled system, plus occupation-time accumulation over seeded ensembles.
//!
//! Every path draws its Gaussian increments from a ChaCha8 stream selected by
//! `(seed, path index)`, so a path's output does not depend on which other
//! paths are run or in what order.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{diffusion_coeff, drift, Params, State, EQUILIBRIA};

/// Default fraction of the horizon discarded before accumulating occupation.
pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(&'static str),
    #[error("non-finite state ({x}, {y}) at t = {time}")]
    NonFinite { time: f64, x: f64, y: f64 },
    #[error("path {path}: {source}")]
    Path {
        path: usize,
        #[source]
        source: alloc::boxed::Box<SimError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub initial: State,
}

impl SimConfig {
    pub fn validate(&self, p: &Params) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidConfig("dt must be positive and finite"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(SimError::InvalidConfig(
                "t_final must be positive and finite",
            ));
        }
        if self.dt > self.t_final {
            return Err(SimError::InvalidConfig("dt must not exceed t_final"));
        }
        if p.lambda1 * self.dt >= 0.1 {
            return Err(SimError::InvalidConfig("lambda1 * dt must be below 0.1"));
        }
        if !self.initial.is_finite() {
            return Err(SimError::InvalidConfig("initial state must be finite"));
        }
        Ok(())
    }

    /// Number of steps, `⌈t_final / dt⌉` (a ratio within 1e-9 of an integer counts as that integer).
    pub fn n_steps(&self) -> usize {
        let q = self.t_final / self.dt;
        let r = libm::round(q);
        if (q - r).abs() <= 1e-9 * r.max(1.0) {
            r as usize
        } else {
            libm::ceil(q) as usize
        }
    }

    /// Time of grid node `k`; the last node sits exactly at `t_final`.
    pub fn time_at(&self, k: usize) -> f64 {
        if k >= self.n_steps() {
            self.t_final
        } else {
            k as f64 * self.dt
        }
    }
}

/// Time-stamped discretized path of states. `times[0] = 0`; steps are uniform
/// except possibly the last one, which ends exactly at the horizon.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<State> {
        self.states.last().copied()
    }

    /// First time the x component reaches `level` from above, interpolated
    /// linearly inside the step.
    pub fn first_time_x_below(&self, level: f64) -> Option<f64> {
        if self.states.first()?.x <= level {
            return Some(self.times[0]);
        }
        self.states
            .windows(2)
            .zip(self.times.windows(2))
            .find_map(|(s, t)| {
                (s[1].x <= level)
                    .then(|| t[0] + (t[1] - t[0]) * (s[0].x - level) / (s[0].x - s[1].x))
            })
    }
}

/// Gaussian stream for path `path` of an ensemble seeded with `seed`.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Noise part of one step: the same increment `dw` drives both components.
#[inline]
pub fn noise_increment(p: &Params, x: f64, dw: f64) -> [f64; 2] {
    let (sin, cos) = libm::sincos(p.theta);
    let g = p.epsilon * diffusion_coeff(p, x) * dw;
    [cos * g, sin * g]
}

/// One Euler–Maruyama step with Brownian increment `dw ~ N(0, dt)`.
#[inline]
pub fn step_sde(p: &Params, s: State, dt: f64, dw: f64) -> State {
    let [b1, b2] = drift(p, s);
    let [n1, n2] = noise_increment(p, s.x, dw);
    State::new(s.x + b1 * dt + n1, s.y + b2 * dt + n2)
}

fn check_finite(time: f64, s: State) -> Result<(), SimError> {
    if s.is_finite() {
        Ok(())
    } else {
        Err(SimError::NonFinite {
            time,
            x: s.x,
            y: s.y,
        })
    }
}

/// Drives `visit(t_k, t_{k+1}, s_{k+1})` along one Euler–Maruyama path.
fn walk_sde(
    p: &Params,
    c: &SimConfig,
    rng: &mut ChaCha8Rng,
    initial: State,
    mut visit: impl FnMut(f64, f64, State, State),
) -> Result<State, SimError> {
    let n = c.n_steps();
    let mut s = initial;
    let mut t = 0.0;
    for k in 1..=n {
        let t_next = c.time_at(k);
        let h = t_next - t;
        let z: f64 = rng.sample(StandardNormal);
        let next = step_sde(p, s, h, libm::sqrt(h) * z);
        check_finite(t_next, next)?;
        visit(t, t_next, s, next);
        s = next;
        t = t_next;
    }
    Ok(s)
}

/// Euler–Maruyama path of the stochastic system, using noise stream 0 of `c.seed`.
pub fn simulate_sde(p: &Params, c: &SimConfig) -> Result<Trajectory, SimError> {
    c.validate(p)?;
    let n = c.n_steps();
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    times.push(0.0);
    states.push(c.initial);
    let mut rng = path_rng(c.seed, 0);
    walk_sde(p, c, &mut rng, c.initial, |_, t, _, s| {
        times.push(t);
        states.push(s);
    })?;
    Ok(Trajectory { times, states })
}

fn rk4_step(field: impl Fn(f64, State) -> [f64; 2], t: f64, s: State, h: f64) -> State {
    let shift = |s: State, k: [f64; 2], a: f64| State::new(s.x + a * k[0], s.y + a * k[1]);
    let k1 = field(t, s);
    let k2 = field(t + 0.5 * h, shift(s, k1, 0.5 * h));
    let k3 = field(t + 0.5 * h, shift(s, k2, 0.5 * h));
    let k4 = field(t + h, shift(s, k3, h));
    State::new(
        s.x + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s.y + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    )
}

fn integrate_ode(
    c: &SimConfig,
    field: impl Fn(f64, State) -> [f64; 2],
) -> Result<Trajectory, SimError> {
    let n = c.n_steps();
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    times.push(0.0);
    states.push(c.initial);
    let mut s = c.initial;
    let mut t = 0.0;
    for k in 1..=n {
        let t_next = c.time_at(k);
        s = rk4_step(&field, t, s, t_next - t);
        check_finite(t_next, s)?;
        times.push(t_next);
        states.push(s);
        t = t_next;
    }
    Ok(Trajectory { times, states })
}

/// Noiseless flow, classical fourth-order Runge–Kutta with fixed step.
pub fn simulate_flow(p: &Params, c: &SimConfig) -> Result<Trajectory, SimError> {
    c.validate(p)?;
    integrate_ode(c, |_, s| drift(p, s))
}

/// Control system: the noise direction is driven by the deterministic input `phi(t)`.
pub fn simulate_controlled(
    p: &Params,
    c: &SimConfig,
    phi: impl Fn(f64) -> f64,
) -> Result<Trajectory, SimError> {
    c.validate(p)?;
    let (sin, cos) = libm::sincos(p.theta);
    integrate_ode(c, |t, s| {
        let [b1, b2] = drift(p, s);
        let u = p.epsilon * diffusion_coeff(p, s.x) * phi(t);
        [b1 + cos * u, b2 + sin * u]
    })
}

/// Lower bound on the gain `k` for which the constant control `-k` pushes the
/// x component leftward faster than unit speed on `[-1/2, 1 + δ]`:
/// `(1 + λ1) / ((σ0 - |σ1|(1 + δ)) |cos θ| ε)`.
pub fn accessibility_gain_bound(p: &Params, delta: f64) -> Result<f64, SimError> {
    let floor = p.sigma0 - p.sigma1.abs() * (1.0 + delta);
    if delta.is_nan() || delta <= 0.0 || floor <= 0.0 {
        return Err(SimError::InvalidConfig(
            "delta too large for a positive diffusion floor",
        ));
    }
    let denom = floor * libm::cos(p.theta).abs() * p.epsilon;
    if denom.is_nan() || denom <= 0.0 {
        return Err(SimError::InvalidConfig("noise has no x component"));
    }
    Ok((1.0 + p.lambda1) / denom)
}

/// Constant control steering from the right well into the left basin; the
/// sign follows `cos θ` so the push is leftward.
pub fn accessibility_control(p: &Params, gain: f64) -> f64 {
    -gain * libm::cos(p.theta).signum()
}

/// Region of the plane used for occupation accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// The whole plane.
    Plane,
    /// Vertical band `|x - center| ≤ half_width`.
    Band { center: f64, half_width: f64 },
    /// Complement of the closed ball `‖(x, y)‖ ≤ radius`.
    OutsideBall { radius: f64 },
    /// Half-plane `x < 0` (`left = true`) or `x > 0`.
    HalfPlane { left: bool },
}

impl Region {
    #[inline]
    pub fn contains(&self, s: State) -> bool {
        match *self {
            Region::Plane => true,
            Region::Band { center, half_width } => (s.x - center).abs() <= half_width,
            Region::OutsideBall { radius } => s.norm() > radius,
            Region::HalfPlane { left } => {
                if left {
                    s.x < 0.0
                } else {
                    s.x > 0.0
                }
            }
        }
    }

    /// The band around equilibrium `index` (1, 2 or 3).
    pub fn well_band(index: u8, delta: f64) -> Region {
        let center = EQUILIBRIA[(index - 1) as usize].point.x;
        Region::Band {
            center,
            half_width: delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedRegion {
    pub name: String,
    pub region: Region,
}

impl NamedRegion {
    pub fn new(name: impl Into<String>, region: Region) -> Self {
        Self {
            name: name.into(),
            region,
        }
    }
}

/// The bands around the three equilibria, named `K1`, `K2`, `K3`.
pub fn well_regions(delta: f64) -> Vec<NamedRegion> {
    (1..=3u8)
        .map(|i| NamedRegion::new(alloc::format!("K{i}"), Region::well_band(i, delta)))
        .collect()
}

/// Time spent in each region after burn-in, summed over paths.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationHistogram {
    pub regions: Vec<NamedRegion>,
    pub times: Vec<f64>,
    pub total: f64,
    /// Burn-in time excluded at the start of every path.
    pub burn_in: f64,
}

impl OccupationHistogram {
    pub fn new(regions: Vec<NamedRegion>, burn_in: f64) -> Self {
        let times = alloc::vec![0.0; regions.len()];
        Self {
            regions,
            times,
            total: 0.0,
            burn_in,
        }
    }

    /// Fraction of accumulated time spent in region `i`.
    pub fn fraction(&self, i: usize) -> f64 {
        if self.total > 0.0 {
            self.times[i] / self.total
        } else {
            0.0
        }
    }

    pub fn fraction_of(&self, name: &str) -> Option<f64> {
        self.regions
            .iter()
            .position(|r| r.name == name)
            .map(|i| self.fraction(i))
    }

    /// Adds another histogram over the same regions.
    pub fn merge(&mut self, other: &OccupationHistogram) {
        debug_assert_eq!(self.regions, other.regions);
        for (a, b) in self.times.iter_mut().zip(&other.times) {
            *a += *b;
        }
        self.total += other.total;
    }

    /// Left-point rule: the step `[t0, t1]` is credited to the regions holding `s0`,
    /// restricted to the part after burn-in.
    #[inline]
    fn record(&mut self, t0: f64, t1: f64, s0: State) {
        if t1 <= self.burn_in {
            return;
        }
        let w = t1 - t0.max(self.burn_in);
        self.total += w;
        for (time, r) in self.times.iter_mut().zip(&self.regions) {
            if r.region.contains(s0) {
                *time += w;
            }
        }
    }
}

/// Where each ensemble path starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartLayout {
    /// Every path starts at `SimConfig::initial`.
    Fixed,
    /// Even paths start at `(-1, 0)`, odd paths at `(1, 0)`.
    AlternateStable,
}

impl StartLayout {
    pub fn initial(&self, c: &SimConfig, path: usize) -> State {
        match self {
            StartLayout::Fixed => c.initial,
            StartLayout::AlternateStable => {
                if path.is_multiple_of(2) {
                    EQUILIBRIA[0].point
                } else {
                    EQUILIBRIA[2].point
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleOptions {
    pub n_paths: usize,
    pub burn_in_fraction: f64,
    pub start: StartLayout,
}

impl EnsembleOptions {
    pub fn new(n_paths: usize) -> Self {
        Self {
            n_paths,
            burn_in_fraction: DEFAULT_BURN_IN_FRACTION,
            start: StartLayout::Fixed,
        }
    }
}

/// Occupation of a single ensemble member, streamed without storing the path.
pub fn path_occupation(
    p: &Params,
    c: &SimConfig,
    path: usize,
    initial: State,
    regions: &[NamedRegion],
    burn_in: f64,
) -> Result<OccupationHistogram, SimError> {
    c.validate(p)?;
    let mut hist = OccupationHistogram::new(regions.to_vec(), burn_in);
    let mut rng = path_rng(c.seed, path);
    walk_sde(p, c, &mut rng, initial, |t0, t1, s0, _| {
        hist.record(t0, t1, s0)
    })
    .map_err(|e| SimError::Path {
        path,
        source: alloc::boxed::Box::new(e),
    })?;
    Ok(hist)
}

/// Validates ensemble options and returns the burn-in time.
pub fn ensemble_burn_in(c: &SimConfig, opts: &EnsembleOptions) -> Result<f64, SimError> {
    if opts.n_paths == 0 {
        return Err(SimError::InvalidConfig("n_paths must be at least 1"));
    }
    if !(0.0..1.0).contains(&opts.burn_in_fraction) {
        return Err(SimError::InvalidConfig(
            "burn-in fraction must be in [0, 1)",
        ));
    }
    Ok(opts.burn_in_fraction * c.t_final)
}

/// Sequential ensemble: paths `0..n_paths`, merged in index order.
pub fn run_ensemble_with(
    p: &Params,
    base: &SimConfig,
    regions: &[NamedRegion],
    opts: &EnsembleOptions,
) -> Result<OccupationHistogram, SimError> {
    let burn_in = ensemble_burn_in(base, opts)?;
    let mut total = OccupationHistogram::new(regions.to_vec(), burn_in);
    for path in 0..opts.n_paths {
        let h = path_occupation(
            p,
            base,
            path,
            opts.start.initial(base, path),
            regions,
            burn_in,
        )?;
        total.merge(&h);
    }
    Ok(total)
}

/// Ensemble from `base.initial` with the default burn-in.
pub fn run_ensemble(
    p: &Params,
    base: &SimConfig,
    n_paths: usize,
    regions: &[NamedRegion],
) -> Result<OccupationHistogram, SimError> {
    run_ensemble_with(p, base, regions, &EnsembleOptions::new(n_paths))
}

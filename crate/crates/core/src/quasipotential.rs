//! Passage costs between the bands `K_i = {|x - x_i| ≤ δ}` around the three
//! equilibria, the W-graph global costs, and the small-noise limit of the
//! invariant measure.
//!
//! Costs are normalized actions (the `1/(ε cos θ)²` factor is dropped). Two
//! independent routes compute the cost of moving the x component from `a` to
//! `b`:
//!
//! - [`passage_cost_integral`]: `2 ∫ |F(u)| / σ(u)² du` over the part of the
//!   segment where the motion opposes the flow `F(u) = λ1 u (1 - u²)`; the
//!   parts travelled with the flow are free.
//! - [`passage_cost_pathopt`]: direct minimization of the discretized action
//!   over paths with pinned endpoints.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::action::{ScalarPath, DIFFUSION_FLOOR};
use crate::model::{diffusion_coeff, x_drift, Params, EQUILIBRIA};
use crate::numerics::{adaptive_simpson, solve_spd_tridiagonal, QuadratureError};

/// Absolute tolerance of the line-integral quadrature.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Relative tolerance under which two global costs count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("diffusion coefficient vanishes on [{lo}, {hi}]")]
    DegenerateDiffusion { lo: f64, hi: f64 },
    #[error("invalid band half-width {delta}: must lie in (0, {limit})")]
    InvalidDelta { delta: f64, limit: f64 },
    #[error("invalid optimizer setting: {0}")]
    InvalidSetting(&'static str),
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] QuadratureError),
    #[error(
        "path optimizer did not converge: gradient {grad_norm:e} after {iterations} iterations"
    )]
    NotConverged {
        grad_norm: f64,
        iterations: usize,
        cost: f64,
    },
    #[error(
        "limit measure from global costs ({argmin}) disagrees with the sign rule ({sign_rule})"
    )]
    Inconsistent {
        argmin: LimitMeasure,
        sign_rule: LimitMeasure,
    },
}

fn check_segment(p: &Params, a: f64, b: f64) -> Result<(), CostError> {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(CostError::InvalidSetting("endpoints must be finite"));
    }
    let floor = DIFFUSION_FLOOR * p.sigma0;
    // σ0 + σ1 u is affine: its minimum on the segment is at an endpoint.
    if diffusion_coeff(p, lo) <= floor || diffusion_coeff(p, hi) <= floor {
        return Err(CostError::DegenerateDiffusion { lo, hi });
    }
    Ok(())
}

/// Splits `[lo, hi]` at the zeros `-1, 0, 1` of the x-drift.
fn drift_sign_pieces(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut cuts = alloc::vec![lo];
    cuts.extend(
        EQUILIBRIA
            .iter()
            .map(|e| e.point.x)
            .filter(|&z| z > lo && z < hi),
    );
    cuts.push(hi);
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Line-integral passage cost from `from_x` to `to_x`.
pub fn passage_cost_integral(p: &Params, from_x: f64, to_x: f64) -> Result<f64, CostError> {
    check_segment(p, from_x, to_x)?;
    if from_x == to_x {
        return Ok(0.0);
    }
    let heading = if to_x > from_x { 1.0 } else { -1.0 };
    let (lo, hi) = if heading > 0.0 {
        (from_x, to_x)
    } else {
        (to_x, from_x)
    };
    let integrand = |u: f64| {
        let s = diffusion_coeff(p, u);
        x_drift(p.lambda1, u).abs() / (s * s)
    };
    let mut total = 0.0;
    for (a, b) in drift_sign_pieces(lo, hi) {
        let mid = 0.5 * (a + b);
        if heading * x_drift(p.lambda1, mid) < 0.0 {
            total += adaptive_simpson(&integrand, a, b, QUADRATURE_TOL)?;
        }
    }
    Ok(2.0 * total)
}

/// Time the flow, or the reversed flow, needs between `from_x` and `to_x`:
/// `∫ du / |F(u)|`. Infinite when the closed segment contains an equilibrium.
pub fn flow_travel_time(p: &Params, from_x: f64, to_x: f64) -> Result<f64, CostError> {
    let (lo, hi) = if from_x <= to_x {
        (from_x, to_x)
    } else {
        (to_x, from_x)
    };
    if EQUILIBRIA
        .iter()
        .any(|e| e.point.x >= lo && e.point.x <= hi)
    {
        return Ok(f64::INFINITY);
    }
    let f = |u: f64| 1.0 / x_drift(p.lambda1, u).abs();
    Ok(adaptive_simpson(&f, lo, hi, QUADRATURE_TOL)?)
}

/// Settings of the fixed-endpoint path optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOptSettings {
    pub horizon: f64,
    pub nodes: usize,
    pub max_iterations: usize,
    pub grad_tol: f64,
}

impl PathOptSettings {
    pub fn new(horizon: f64, nodes: usize) -> Self {
        Self {
            horizon,
            nodes,
            max_iterations: 10_000,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathOptResult {
    /// Minimized normalized action.
    pub cost: f64,
    pub path: ScalarPath,
    pub iterations: usize,
    /// Max-norm of the gradient at the returned path.
    pub grad_norm: f64,
}

/// Discretized action: midpoint rule on each segment,
/// `Σ h L((w_k + w_{k+1})/2, (w_{k+1} - w_k)/h)`.
struct DiscreteAction<'a> {
    p: &'a Params,
    h: f64,
    start: f64,
    end: f64,
}

/// Per-segment derivatives of `L` with respect to midpoint `m` and velocity `v`.
struct SegmentTerms {
    l: f64,
    l_m: f64,
    l_v: f64,
    l_mm: f64,
    l_mv: f64,
    l_vv: f64,
}

impl DiscreteAction<'_> {
    fn node(&self, interior: &[f64], k: usize) -> f64 {
        if k == 0 {
            self.start
        } else if k == interior.len() + 1 {
            self.end
        } else {
            interior[k - 1]
        }
    }

    fn segment(&self, m: f64, v: f64) -> Option<SegmentTerms> {
        let p = self.p;
        let sigma = diffusion_coeff(p, m);
        if sigma <= DIFFUSION_FLOOR * p.sigma0 {
            return None;
        }
        let s1 = p.sigma1;
        let f = x_drift(p.lambda1, m);
        let fp = p.lambda1 * (1.0 - 3.0 * m * m);
        let fpp = -6.0 * p.lambda1 * m;
        let r = (v - f) / sigma;
        let r_v = 1.0 / sigma;
        let r_m = -fp / sigma - r * s1 / sigma;
        let r_mv = -s1 / (sigma * sigma);
        let r_mm = -fpp / sigma + fp * s1 / (sigma * sigma) - s1 * r_m / sigma
            + r * s1 * s1 / (sigma * sigma);
        Some(SegmentTerms {
            l: 0.5 * r * r,
            l_m: r * r_m,
            l_v: r * r_v,
            l_mm: r_m * r_m + r * r_mm,
            l_mv: r_m * r_v + r * r_mv,
            l_vv: r_v * r_v,
        })
    }

    fn segments(&self, interior: &[f64]) -> usize {
        interior.len() + 1
    }

    fn value(&self, interior: &[f64]) -> f64 {
        let mut terms = Vec::with_capacity(self.segments(interior));
        for k in 0..self.segments(interior) {
            let (a, b) = (self.node(interior, k), self.node(interior, k + 1));
            match self.segment(0.5 * (a + b), (b - a) / self.h) {
                Some(t) => terms.push(self.h * t.l),
                None => return f64::INFINITY,
            }
        }
        crate::numerics::pairwise_sum(&terms)
    }

    /// Gradient and tridiagonal Hessian with respect to the interior nodes.
    fn derivatives(&self, interior: &[f64]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let n = interior.len();
        let h = self.h;
        let mut grad = alloc::vec![0.0; n];
        let mut diag = alloc::vec![0.0; n];
        let mut off = alloc::vec![0.0; n.saturating_sub(1)];
        for k in 0..self.segments(interior) {
            let (a, b) = (self.node(interior, k), self.node(interior, k + 1));
            let t = self.segment(0.5 * (a + b), (b - a) / h)?;
            let g_left = h * (0.5 * t.l_m - t.l_v / h);
            let g_right = h * (0.5 * t.l_m + t.l_v / h);
            let h_ll = h * (0.25 * t.l_mm - t.l_mv / h + t.l_vv / (h * h));
            let h_lr = h * (0.25 * t.l_mm - t.l_vv / (h * h));
            let h_rr = h * (0.25 * t.l_mm + t.l_mv / h + t.l_vv / (h * h));
            // Segment k joins nodes k and k+1; interior index = node - 1.
            if k >= 1 {
                grad[k - 1] += g_left;
                diag[k - 1] += h_ll;
            }
            if k < n {
                grad[k] += g_right;
                diag[k] += h_rr;
            }
            if k >= 1 && k < n {
                off[k - 1] += h_lr;
            }
        }
        Some((grad, diag, off))
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes the discretized action from `from_x` to `to_x` over `[0, horizon]`
/// with damped Newton steps (Levenberg–Marquardt shift on the tridiagonal
/// Hessian, Armijo backtracking), starting from the straight line.
pub fn passage_cost_pathopt(
    p: &Params,
    from_x: f64,
    to_x: f64,
    settings: &PathOptSettings,
) -> Result<PathOptResult, CostError> {
    check_segment(p, from_x, to_x)?;
    let PathOptSettings {
        horizon,
        nodes,
        max_iterations,
        grad_tol,
    } = *settings;
    if nodes < 3 {
        return Err(CostError::InvalidSetting("at least 3 nodes required"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(CostError::InvalidSetting(
            "horizon must be positive and finite",
        ));
    }
    let h = horizon / (nodes - 1) as f64;
    let objective = DiscreteAction {
        p,
        h,
        start: from_x,
        end: to_x,
    };
    let mut w: Vec<f64> = (1..nodes - 1)
        .map(|k| from_x + (to_x - from_x) * k as f64 / (nodes - 1) as f64)
        .collect();
    let mut value = objective.value(&w);
    let mut mu = 0.0;
    let mut iterations = 0;
    let mut grad_norm;
    loop {
        let (grad, diag, off) =
            objective
                .derivatives(&w)
                .ok_or(CostError::DegenerateDiffusion {
                    lo: from_x.min(to_x),
                    hi: from_x.max(to_x),
                })?;
        grad_norm = max_norm(&grad);
        if grad_norm <= grad_tol || iterations >= max_iterations {
            break;
        }
        iterations += 1;
        let scale = max_norm(&diag).max(f64::MIN_POSITIVE);
        let mut accepted = false;
        for _ in 0..60 {
            let shifted: Vec<f64> = diag.iter().map(|d| d + mu).collect();
            let mut step: Vec<f64> = grad.iter().map(|g| -g).collect();
            if !solve_spd_tridiagonal(&shifted, &off, &mut step) {
                mu = (2.0 * mu).max(1e-10 * scale);
                continue;
            }
            let slope: f64 = grad.iter().zip(&step).map(|(g, d)| g * d).sum();
            let mut t = 1.0;
            while t > 1e-12 {
                let trial: Vec<f64> = w.iter().zip(&step).map(|(a, d)| a + t * d).collect();
                let trial_value = objective.value(&trial);
                if trial_value <= value + 1e-4 * t * slope {
                    w = trial;
                    value = trial_value;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                mu *= 0.25;
                if mu < 1e-14 * scale {
                    mu = 0.0;
                }
                break;
            }
            mu = (4.0 * mu).max(1e-10 * scale);
        }
        if !accepted {
            // No descent direction improves the value in floating point.
            break;
        }
    }
    if grad_norm > grad_tol {
        return Err(CostError::NotConverged {
            grad_norm,
            iterations,
            cost: value,
        });
    }
    let mut values = Vec::with_capacity(nodes);
    values.push(from_x);
    values.extend_from_slice(&w);
    values.push(to_x);
    let path = ScalarPath::from_fn(horizon, nodes, |_| 0.0)
        .and_then(|grid| ScalarPath::new(grid.times().to_vec(), values))
        .map_err(|_| CostError::InvalidSetting("path construction"))?;
    Ok(PathOptResult {
        cost: value,
        path,
        iterations,
        grad_norm,
    })
}

/// Band `K_i` of half-width `delta` around equilibrium `index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Well {
    pub index: u8,
    pub center_x: f64,
    pub delta: f64,
}

/// Largest admissible band half-width: `1/2`, or `(σ0 - |σ1|)/|σ1|` if smaller.
pub fn delta_limit(p: &Params) -> f64 {
    if p.sigma1 == 0.0 {
        0.5
    } else {
        0.5f64.min((p.sigma0 - p.sigma1.abs()) / p.sigma1.abs())
    }
}

/// `min(0.1, (σ0 - |σ1|)/(2|σ1|))`, or `0.1` when `σ1 = 0`.
pub fn default_delta(p: &Params) -> f64 {
    if p.sigma1 == 0.0 {
        0.1
    } else {
        0.1f64.min((p.sigma0 - p.sigma1.abs()) / (2.0 * p.sigma1.abs()))
    }
}

impl Well {
    pub fn new(p: &Params, index: u8, delta: f64) -> Result<Self, CostError> {
        assert!((1..=3).contains(&index), "well index must be 1, 2 or 3");
        let limit = delta_limit(p);
        if !(delta > 0.0 && delta < limit) {
            return Err(CostError::InvalidDelta { delta, limit });
        }
        Ok(Self {
            index,
            center_x: EQUILIBRIA[(index - 1) as usize].point.x,
            delta,
        })
    }

    /// Edge of this band nearest to `other`.
    pub fn edge_toward(&self, other: &Well) -> f64 {
        if other.center_x > self.center_x {
            self.center_x + self.delta
        } else {
            self.center_x - self.delta
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostMethod {
    Integral,
    /// Path optimization; `horizon = None` uses the flow travel time between
    /// the band edges, the horizon at which the infimum over paths is attained.
    PathOpt {
        nodes: usize,
        horizon: Option<f64>,
    },
}

/// Pairwise passage costs `V[i][j]` (0-based indices for wells 1..=3).
/// `f64::INFINITY` marks pairs with no admissible path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostMatrix {
    pub entries: [[f64; 3]; 3],
    pub method: CostMethod,
}

impl CostMatrix {
    /// `V_ij` with 1-based well indices.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i - 1][j - 1]
    }
}

/// Cost of moving between adjacent bands, by the requested method.
fn adjacent_cost(p: &Params, from: &Well, to: &Well, method: CostMethod) -> Result<f64, CostError> {
    let a = from.edge_toward(to);
    let b = to.edge_toward(from);
    match method {
        CostMethod::Integral => passage_cost_integral(p, a, b),
        CostMethod::PathOpt { nodes, horizon } => {
            let horizon = match horizon {
                Some(t) => t,
                None => flow_travel_time(p, a, b)?,
            };
            passage_cost_pathopt(p, a, b, &PathOptSettings::new(horizon, nodes)).map(|r| r.cost)
        }
    }
}

/// Direct costs between bands. Paths between `K1` and `K3` must cross `K2`,
/// so their direct cost is infinite and the final entries come from chaining
/// through `K2` (shortest-path closure).
pub fn direct_costs(
    p: &Params,
    delta: f64,
    method: CostMethod,
) -> Result<[[f64; 3]; 3], CostError> {
    let wells = [
        Well::new(p, 1, delta)?,
        Well::new(p, 2, delta)?,
        Well::new(p, 3, delta)?,
    ];
    let mut v = [[f64::INFINITY; 3]; 3];
    for i in 0..3 {
        v[i][i] = 0.0;
        for j in 0..3 {
            if i.abs_diff(j) == 1 {
                v[i][j] = adjacent_cost(p, &wells[i], &wells[j], method)?;
            }
        }
    }
    Ok(v)
}

pub fn cost_matrix(p: &Params, delta: f64, method: CostMethod) -> Result<CostMatrix, CostError> {
    let mut v = direct_costs(p, delta, method)?;
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let via = v[i][k] + v[k][j];
                if via < v[i][j] {
                    v[i][j] = via;
                }
            }
        }
    }
    Ok(CostMatrix { entries: v, method })
}

/// Global cost of each band and the set of minimizers (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct WellCosts {
    pub costs: [f64; 3],
    pub argmin: Vec<u8>,
}

/// Every rooted in-forest on `{0, 1, 2}` with root `root`: each other node has
/// exactly one outgoing arrow and following arrows always reaches `root`.
pub fn rooted_graphs(root: usize) -> Vec<[(usize, usize); 2]> {
    let others: Vec<usize> = (0..3).filter(|&k| k != root).collect();
    let (a, b) = (others[0], others[1]);
    let mut graphs = Vec::new();
    for ta in [root, b] {
        for tb in [root, a] {
            if ta == b && tb == a {
                continue; // a → b → a is a cycle
            }
            graphs.push([(a, ta), (b, tb)]);
        }
    }
    graphs
}

pub fn global_costs(cm: &CostMatrix) -> WellCosts {
    let mut costs = [0.0; 3];
    for (root, cost) in costs.iter_mut().enumerate() {
        *cost = rooted_graphs(root)
            .iter()
            .map(|g| g.iter().map(|&(m, n)| cm.entries[m][n]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
    }
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = TIE_TOLERANCE * min.abs().max(1.0);
    let argmin = (0..3)
        .filter(|&i| costs[i] - min <= tol)
        .map(|i| i as u8 + 1)
        .collect();
    WellCosts { costs, argmin }
}

/// Small-noise limit of the invariant measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitMeasure {
    /// Point mass at `(1, 0)`.
    DiracRight,
    /// Point mass at `(-1, 0)`.
    DiracLeft,
    /// `½ δ(1,0) + ½ δ(-1,0)`.
    HalfHalf,
}

impl fmt::Display for LimitMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LimitMeasure::DiracRight => "delta_(1,0)",
            LimitMeasure::DiracLeft => "delta_(-1,0)",
            LimitMeasure::HalfHalf => "0.5*delta_(1,0)+0.5*delta_(-1,0)",
        })
    }
}

impl LimitMeasure {
    /// Limit predicted from the sign of `σ1`.
    pub fn from_sign(sigma1: f64) -> Self {
        if sigma1 < 0.0 {
            LimitMeasure::DiracRight
        } else if sigma1 > 0.0 {
            LimitMeasure::DiracLeft
        } else {
            LimitMeasure::HalfHalf
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub measure: LimitMeasure,
    pub matrix: CostMatrix,
    pub well_costs: WellCosts,
    pub delta: f64,
}

/// Limit measure from the argmin of the global costs over the stable bands,
/// cross-checked against the sign rule.
pub fn classify_limit_measure(p: &Params) -> Result<Classification, CostError> {
    let delta = default_delta(p);
    let matrix = cost_matrix(p, delta, CostMethod::Integral)?;
    let well_costs = global_costs(&matrix);
    let left = well_costs.argmin.contains(&1);
    let right = well_costs.argmin.contains(&3);
    let from_costs = match (left, right) {
        (true, true) => LimitMeasure::HalfHalf,
        (true, false) => LimitMeasure::DiracLeft,
        (false, true) => LimitMeasure::DiracRight,
        // Only the saddle band minimizes: no stable answer.
        (false, false) => {
            return Err(CostError::Inconsistent {
                argmin: LimitMeasure::HalfHalf,
                sign_rule: LimitMeasure::from_sign(p.sigma1),
            })
        }
    };
    let sign_rule = LimitMeasure::from_sign(p.sigma1);
    if from_costs != sign_rule {
        return Err(CostError::Inconsistent {
            argmin: from_costs,
            sign_rule,
        });
    }
    Ok(Classification {
        measure: from_costs,
        matrix,
        well_costs,
        delta,
    })
}

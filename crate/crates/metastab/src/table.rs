//! Delimited-text output tables. Numbers are written with 17 significant
//! digits so that files are reproducible byte for byte and parse back exactly.

use std::fmt::Write as _;

use metastab_core::action::ScalarPath;
use metastab_core::quasipotential::{CostMatrix, WellCosts};
use metastab_core::simulate::{OccupationHistogram, Trajectory};

/// `d.ddddddddddddddddde±x`, 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

const WELL_LABELS: [&str; 3] = ["K1", "K2", "K3"];

/// `t,x,y`, keeping every `stride`-th node plus the last one.
pub fn trajectory_csv(traj: &Trajectory, stride: usize) -> String {
    let stride = stride.max(1);
    let mut out = String::from("t,x,y\n");
    let n = traj.len();
    for k in (0..n).filter(|&k| k % stride == 0 || k + 1 == n) {
        let s = traj.states[k];
        let _ = writeln!(out, "{},{},{}", num(traj.times[k]), num(s.x), num(s.y));
    }
    out
}

/// `t,w`.
pub fn path_csv(path: &ScalarPath) -> String {
    let mut out = String::from("t,w\n");
    for (t, w) in path.times().iter().zip(path.values()) {
        let _ = writeln!(out, "{},{}", num(*t), num(*w));
    }
    out
}

/// `region,time,fraction`, one row per region.
pub fn occupation_csv(h: &OccupationHistogram) -> String {
    let mut out = String::from("region,time,fraction\n");
    for (i, r) in h.regions.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", r.name, num(h.times[i]), num(h.fraction(i)));
    }
    out
}

/// 3×3 table with header `,K1,K2,K3` and row labels.
pub fn cost_matrix_csv(cm: &CostMatrix) -> String {
    let mut out = String::from(",K1,K2,K3\n");
    for (label, row) in WELL_LABELS.iter().zip(&cm.entries) {
        let cells: Vec<String> = row.iter().map(|&v| num(v)).collect();
        let _ = writeln!(out, "{label},{}", cells.join(","));
    }
    out
}

/// Off-diagonal pairs of two matrices with their absolute disagreement.
pub fn cost_comparison_csv(integral: &CostMatrix, pathopt: &CostMatrix) -> String {
    let mut out = String::from("pair,integral,pathopt,disagreement\n");
    for i in 0..3 {
        for j in (0..3).filter(|&j| j != i) {
            let (a, b) = (integral.entries[i][j], pathopt.entries[i][j]);
            let diff = if a == b { 0.0 } else { (a - b).abs() };
            let _ = writeln!(
                out,
                "V{}{},{},{},{}",
                i + 1,
                j + 1,
                num(a),
                num(b),
                num(diff)
            );
        }
    }
    out
}

/// `well,cost,argmin`.
pub fn well_costs_csv(w: &WellCosts) -> String {
    let mut out = String::from("well,cost,argmin\n");
    for (i, c) in w.costs.iter().enumerate() {
        let hit = w.argmin.contains(&(i as u8 + 1));
        let _ = writeln!(out, "{},{},{}", WELL_LABELS[i], num(*c), u8::from(hit));
    }
    out
}

/// `key = value` lines.
pub fn key_values(pairs: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use metastab_core::model::State;
    use metastab_core::quasipotential::CostMethod;

    #[test]
    fn numbers_have_seventeen_digits_and_round_trip() {
        for v in [0.1, -1.0 / 3.0, 6.02e23, 0.0, 5e-324] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17, "{s}");
        }
        assert_eq!(num(f64::INFINITY), "inf");
    }

    #[test]
    fn trajectory_stride_keeps_last_node() {
        let traj = Trajectory {
            times: (0..5).map(f64::from).collect(),
            states: (0..5).map(|k| State::new(f64::from(k), 0.0)).collect(),
        };
        let text = trajectory_csv(&traj, 3);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x,y");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with(&num(4.0)));
    }

    #[test]
    fn cost_table_layout() {
        let cm = CostMatrix {
            entries: [[0.0, 1.0, 1.0], [0.0, 0.0, 0.0], [2.0, 2.0, 0.0]],
            method: CostMethod::Integral,
        };
        let text = cost_matrix_csv(&cm);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], ",K1,K2,K3");
        assert!(lines[3].starts_with("K3,2.0000000000000000e0,"));
        let cmp = cost_comparison_csv(&cm, &cm);
        assert_eq!(cmp.lines().count(), 7);
    }
}

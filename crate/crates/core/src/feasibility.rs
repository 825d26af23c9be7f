//! Grid sweep of the ACC state-input box, comparing the compatibility
//! predicate against the filter's own feasibility at every point.

use serde::Serialize;

use crate::acc::{AccParams, AccSystem};
use crate::error::Result;
use crate::qp_filter::{check_compatibility, solve_two, FailedCondition, ANTIPARALLEL_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, points: usize) -> Self {
        Self { min, max, points }
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.points.max(1);
        (0..n).map(move |i| {
            if n == 1 {
                self.min
            } else {
                self.min + (self.max - self.min) * i as f64 / (n - 1) as f64
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepBox {
    pub d: Axis,
    pub v: Axis,
    pub u: Axis,
}

impl SweepBox {
    /// `D` in `[0, 150]`, `v` in `[0, 40]`, `u` across the input bounds.
    pub fn for_params(p: &AccParams<f64>) -> Self {
        Self {
            d: Axis::new(0.0, 150.0, 31),
            v: Axis::new(0.0, 40.0, 41),
            u: Axis::new(-p.u_max, p.u_max, 41),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub d: f64,
    pub v: f64,
    pub u: f64,
    pub failed_condition: &'static str,
    pub qp_feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub robust: bool,
    pub grid: SweepBox,
    pub points: usize,
    pub compatible: usize,
    pub cond1: usize,
    pub cond2: usize,
    pub cond3: usize,
    /// Points where the predicate and the filter disagree.
    pub disagreements: Vec<SweepPoint>,
    /// A few incompatible points, for inspection.
    pub examples: Vec<SweepPoint>,
}

impl FeasibilityReport {
    pub fn agrees(&self) -> bool {
        self.disagreements.is_empty()
    }
}

fn condition_name(c: FailedCondition) -> &'static str {
    match c {
        FailedCondition::None => "none",
        FailedCondition::Cond1 => "cond1",
        FailedCondition::Cond2 => "cond2",
        FailedCondition::Cond3 => "cond3",
    }
}

pub fn sweep(params: &AccParams<f64>, robust: bool, grid: &SweepBox) -> Result<FeasibilityReport> {
    const EXAMPLES: usize = 5;
    let sys = AccSystem::new(*params)?;
    let mut report = FeasibilityReport {
        robust,
        grid: *grid,
        points: 0,
        compatible: 0,
        cond1: 0,
        cond2: 0,
        cond3: 0,
        disagreements: Vec::new(),
        examples: Vec::new(),
    };
    for d in grid.d.values() {
        for v in grid.v.values() {
            for u in grid.u.values() {
                let (row_e, row_u) = sys.rows(&[d, v], &[u], robust);
                let verdict = check_compatibility(&row_e, &row_u, ANTIPARALLEL_EPS);
                let feasible = solve_two(&row_e, &row_u).feasible;
                let point = SweepPoint {
                    d,
                    v,
                    u,
                    failed_condition: condition_name(verdict.failed_condition),
                    qp_feasible: feasible,
                };
                report.points += 1;
                match verdict.failed_condition {
                    FailedCondition::None => report.compatible += 1,
                    FailedCondition::Cond1 => report.cond1 += 1,
                    FailedCondition::Cond2 => report.cond2 += 1,
                    FailedCondition::Cond3 => report.cond3 += 1,
                }
                if verdict.ok != feasible {
                    report.disagreements.push(point);
                } else if !verdict.ok && report.examples.len() < EXAMPLES {
                    report.examples.push(point);
                }
            }
        }
    }
    Ok(report)
}

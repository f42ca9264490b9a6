//! Boundary search along a one-parameter family of behaviours.

use serde::Serialize;

use crate::behaviour::Behaviour;
use crate::error::{Error, Result};

use super::verdict::{Status, Verdict};

#[derive(Clone, Debug, Serialize)]
pub struct BisectStep {
    pub lambda: f64,
    pub status: Status,
    pub effort: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct BisectResult {
    /// Midpoint of the final bracket.
    pub lambda_star: f64,
    pub lo: f64,
    pub hi: f64,
    /// Verdict at `lo` (feasible side).
    pub feasible: Verdict,
    /// Verdict at `hi` (infeasible side).
    pub infeasible: Verdict,
    pub steps: Vec<BisectStep>,
    /// Set when the search stopped early on an undecided point.
    pub undecided: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Retries at 4x effort; two undecided attempts leave the point undecided.
fn probe<C>(check: &C, b: &Behaviour, lambda: f64, steps: &mut Vec<BisectStep>) -> Result<Verdict>
where
    C: Fn(&Behaviour, u32) -> Result<Verdict>,
{
    let mut effort = 1;
    loop {
        let v = check(b, effort)?;
        steps.push(BisectStep {
            lambda,
            status: v.status,
            effort,
        });
        if v.status.is_conclusive() || effort >= 4 {
            return Ok(v);
        }
        effort *= 4;
    }
}

/// Bisects between a feasible `lo` and an infeasible `hi` until the bracket is below `tol`.
/// `check` receives an effort multiplier for its iteration budget.
pub fn bisect_boundary<F, C>(family: F, check: C, lo: f64, hi: f64, tol: f64) -> Result<BisectResult>
where
    F: Fn(f64) -> Result<Behaviour>,
    C: Fn(&Behaviour, u32) -> Result<Verdict>,
{
    if !(lo < hi) || tol <= 0.0 {
        return Err(Error::Bracket(format!("need lo < hi and tol > 0 (got {lo}, {hi}, {tol})")));
    }
    let mut steps = Vec::new();
    let mut feasible = probe(&check, &family(lo)?, lo, &mut steps)?;
    if feasible.status != Status::Feasible {
        return Err(Error::Bracket(format!("lower end {lo} is {} rather than FEASIBLE", feasible.status)));
    }
    let mut infeasible = probe(&check, &family(hi)?, hi, &mut steps)?;
    if infeasible.status != Status::Infeasible {
        return Err(Error::Bracket(format!(
            "upper end {hi} is {} rather than INFEASIBLE",
            infeasible.status
        )));
    }
    let (mut lo, mut hi) = (lo, hi);
    let mut undecided = false;
    let mut note = None;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let v = probe(&check, &family(mid)?, mid, &mut steps)?;
        match v.status {
            Status::Feasible => {
                lo = mid;
                feasible = v;
            }
            Status::Infeasible => {
                hi = mid;
                infeasible = v;
            }
            Status::Undecided => {
                undecided = true;
                note = Some(format!(
                    "undecided at {mid} after raising solver effort; bracket [{lo}, {hi}] reported as is"
                ));
                break;
            }
        }
    }
    Ok(BisectResult {
        lambda_star: 0.5 * (lo + hi),
        lo,
        hi,
        feasible,
        infeasible,
        steps,
        undecided,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behaviour::isotropic;
    use crate::conditions::Condition;

    fn threshold_check(t: f64) -> impl Fn(&Behaviour, u32) -> Result<Verdict> {
        move |b, _| {
            let lambda = crate::behaviour::chsh_value(b)? / 4.0;
            let s = if lambda <= t { Status::Feasible } else { Status::Infeasible };
            Ok(Verdict::new(Condition::Jpm, s))
        }
    }

    #[test]
    fn finds_synthetic_threshold() {
        let r = bisect_boundary(isotropic, threshold_check(0.3), 0.0, 1.0, 1e-4).unwrap();
        assert!((r.lambda_star - 0.3).abs() < 1e-4);
        assert!(r.hi - r.lo <= 1e-4);
        assert!(r.lo <= 0.3 && 0.3 < r.hi);
    }

    #[test]
    fn rejects_bad_bracket() {
        assert!(matches!(
            bisect_boundary(isotropic, threshold_check(0.3), 0.5, 1.0, 1e-3),
            Err(Error::Bracket(_))
        ));
    }

    #[test]
    fn stops_on_undecided() {
        let check = |b: &Behaviour, _: u32| -> Result<Verdict> {
            let l = crate::behaviour::chsh_value(b)? / 4.0;
            let s = if l < 0.4 {
                Status::Feasible
            } else if l > 0.6 {
                Status::Infeasible
            } else {
                Status::Undecided
            };
            Ok(Verdict::new(Condition::Jpm, s))
        };
        let r = bisect_boundary(isotropic, check, 0.0, 1.0, 1e-3).unwrap();
        assert!(r.undecided);
        assert!(r.lo < 0.4 && r.hi > 0.6);
    }
}

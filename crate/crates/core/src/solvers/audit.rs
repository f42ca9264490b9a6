//! Cross-condition consistency of verdicts on one behaviour.

use serde::Serialize;

use crate::conditions::Condition;

use super::verdict::{Status, Verdict};

/// Pairs `(a, b)` with membership in `a` implying membership in `b`.
pub const INCLUSIONS: [(Condition, Condition); 8] = [
    (Condition::Jpm, Condition::Jqm),
    (Condition::Jpm, Condition::Q1ab),
    (Condition::Q1ab, Condition::Spjqm),
    (Condition::Spjqm, Condition::Q1),
    (Condition::Spjqmb, Condition::Spjqm),
    (Condition::Spjqmb, Condition::Q1ab),
    (Condition::Q1ab, Condition::Spjqmb),
    (Condition::Spjqm, Condition::Jqm),
];

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct AuditViolation {
    pub member: Condition,
    pub implies: Condition,
}

#[derive(Clone, Debug, Serialize, Default)]
pub struct Audit {
    /// Implications checked with both verdicts conclusive.
    pub checked: usize,
    /// Implications skipped because a verdict was undecided or missing.
    pub skipped: usize,
    pub violations: Vec<AuditViolation>,
}

impl Audit {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every known inclusion between the conditions present in `verdicts`.
pub fn inclusion_audit(verdicts: &[Verdict]) -> Audit {
    let status = |c: Condition| verdicts.iter().find(|v| v.condition == c).map(|v| v.status);
    let mut audit = Audit::default();
    for (a, b) in INCLUSIONS {
        match (status(a), status(b)) {
            (Some(sa), Some(sb)) if sa.is_conclusive() && sb.is_conclusive() => {
                audit.checked += 1;
                if sa == Status::Feasible && sb == Status::Infeasible {
                    audit.violations.push(AuditViolation { member: a, implies: b });
                }
            }
            (Some(_), Some(_)) => audit.skipped += 1,
            _ => {}
        }
    }
    audit
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_broken_chain() {
        let v = vec![
            Verdict::new(Condition::Jpm, Status::Feasible),
            Verdict::new(Condition::Q1, Status::Infeasible),
            Verdict::new(Condition::Spjqm, Status::Feasible),
            Verdict::undecided(Condition::Jqm, "budget"),
        ];
        let a = inclusion_audit(&v);
        assert_eq!(a.violations, vec![AuditViolation { member: Condition::Spjqm, implies: Condition::Q1 }]);
        assert_eq!(a.checked, 1);
        assert_eq!(a.skipped, 2);
    }
}

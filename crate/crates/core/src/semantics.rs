//! Boolean and quantitative (robustness) semantics of TLTL over finite
//! trajectories.
//!
//! Every evaluation happens on a window `s_{t..end}` of the trajectory. The
//! temporal operators range over anchors `t' ∈ [t, end)`, so the last state
//! of the window can anchor a predicate. The left operand of `U` and `T` is
//! evaluated on the truncated window `s_{t''..=t'}` that ends at the anchor of
//! the right operand.
//!
//! Empty ranges follow the Boolean quantifiers: the inner minimum of `U` at
//! `t' = t` is `RHO_MAX` (vacuous "for all"), the inner maximum of `T` is
//! `-RHO_MAX` (empty "exists"), and `X` at the last index of the window is
//! `-RHO_MAX`.

use crate::formula::{Formula, RHO_MAX};
use crate::trajectory::Trajectory;

/// Whether `tau` satisfies `phi` from index `t`.
///
/// # Panics
///
/// If `t >= tau.len()`.
pub fn eval_boolean(tau: &Trajectory, phi: &Formula, t: usize) -> bool {
    assert!(t < tau.len(), "start index {t} outside trajectory of length {}", tau.len());
    holds(tau, phi, t, tau.len())
}

/// Robustness degree of `tau` against `phi` from index `t`.
///
/// # Panics
///
/// If `t >= tau.len()`.
pub fn robustness(tau: &Trajectory, phi: &Formula, t: usize) -> f64 {
    assert!(t < tau.len(), "start index {t} outside trajectory of length {}", tau.len());
    rho(tau, phi, t, tau.len())
}

/// Robustness on the window `s_{t..end}`; `t < end <= tau.len()`.
pub fn robustness_in(tau: &Trajectory, phi: &Formula, t: usize, end: usize) -> f64 {
    assert!(t < end && end <= tau.len(), "invalid window {t}..{end}");
    rho(tau, phi, t, end)
}

fn holds(tau: &Trajectory, phi: &Formula, t: usize, end: usize) -> bool {
    match phi {
        Formula::True => true,
        Formula::Pred(p) => p.holds(tau.state(t)),
        Formula::Not(a) => !holds(tau, a, t, end),
        Formula::Implies(a, b) => !holds(tau, a, t, end) || holds(tau, b, t, end),
        Formula::And(a, b) => holds(tau, a, t, end) && holds(tau, b, t, end),
        Formula::Or(a, b) => holds(tau, a, t, end) || holds(tau, b, t, end),
        Formula::Next(a) => t + 1 < end && holds(tau, a, t + 1, end),
        Formula::Always(a) => (t..end).all(|k| holds(tau, a, k, end)),
        Formula::Eventually(a) => (t..end).any(|k| holds(tau, a, k, end)),
        Formula::Until(a, b) => (t..end).any(|anchor| {
            holds(tau, b, anchor, end) && (t..anchor).all(|k| holds(tau, a, k, anchor + 1))
        }),
        Formula::Then(a, b) => (t..end).any(|anchor| {
            holds(tau, b, anchor, end) && (t..anchor).any(|k| holds(tau, a, k, anchor + 1))
        }),
    }
}

fn rho(tau: &Trajectory, phi: &Formula, t: usize, end: usize) -> f64 {
    match phi {
        Formula::True => RHO_MAX,
        Formula::Pred(p) => p.margin(tau.state(t)),
        Formula::Not(a) => -rho(tau, a, t, end),
        Formula::Implies(a, b) => (-rho(tau, a, t, end)).max(rho(tau, b, t, end)),
        Formula::And(a, b) => rho(tau, a, t, end).min(rho(tau, b, t, end)),
        Formula::Or(a, b) => rho(tau, a, t, end).max(rho(tau, b, t, end)),
        Formula::Next(a) => {
            if t + 1 < end {
                rho(tau, a, t + 1, end)
            } else {
                -RHO_MAX
            }
        }
        Formula::Always(a) => (t..end)
            .map(|k| rho(tau, a, k, end))
            .fold(f64::INFINITY, f64::min),
        Formula::Eventually(a) => (t..end)
            .map(|k| rho(tau, a, k, end))
            .fold(f64::NEG_INFINITY, f64::max),
        Formula::Until(a, b) => {
            let mut best = f64::NEG_INFINITY;
            for anchor in t..end {
                let mut inner: Option<f64> = None;
                for k in t..anchor {
                    let v = rho(tau, a, k, anchor + 1);
                    inner = Some(inner.map_or(v, |m| m.min(v)));
                }
                let candidate = rho(tau, b, anchor, end).min(inner.unwrap_or(RHO_MAX));
                best = best.max(candidate);
            }
            best
        }
        Formula::Then(a, b) => {
            let mut best = f64::NEG_INFINITY;
            for anchor in t..end {
                let mut inner: Option<f64> = None;
                for k in t..anchor {
                    let v = rho(tau, a, k, anchor + 1);
                    inner = Some(inner.map_or(v, |m| m.max(v)));
                }
                let candidate = rho(tau, b, anchor, end).min(inner.unwrap_or(-RHO_MAX));
                best = best.max(candidate);
            }
            best
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::VariableMap;
    use crate::parser::parse;

    fn s() -> VariableMap {
        VariableMap::from_names(["s"]).unwrap()
    }

    #[test]
    fn example_one() {
        let tau = Trajectory::scalar(&[11.0, 6.0, 7.0]).unwrap();
        let phi = parse("F(s > 5 & s < 10)", &s()).unwrap();
        assert_eq!(robustness(&tau, &phi, 0), 2.0);
        assert!(eval_boolean(&tau, &phi, 0));
    }

    #[test]
    fn constant_true() {
        let tau = Trajectory::scalar(&[-3.0, 1e9]).unwrap();
        assert_eq!(robustness(&tau, &Formula::True, 0), RHO_MAX);
        assert!(eval_boolean(&tau, &Formula::True, 1));
    }

    #[test]
    fn next_past_the_end_is_false() {
        let tau = Trajectory::scalar(&[11.0, 6.0, 7.0]).unwrap();
        let phi = parse("X X X s < 10", &s()).unwrap();
        assert!(!eval_boolean(&tau, &phi, 0));
        assert_eq!(robustness(&tau, &phi, 0), -RHO_MAX);
        let phi = parse("X X s < 10", &s()).unwrap();
        assert!(eval_boolean(&tau, &phi, 0));
        assert_eq!(robustness(&tau, &phi, 0), 3.0);
    }

    #[test]
    fn negated_predicate() {
        let tau = Trajectory::scalar(&[11.0]).unwrap();
        let phi = parse("!(s < 10)", &s()).unwrap();
        assert_eq!(robustness(&tau, &phi, 0), 1.0);
    }

    #[test]
    fn until_uses_vacuous_prefix_at_first_anchor() {
        let tau = Trajectory::scalar(&[9.0, 0.0]).unwrap();
        let phi = parse("(s < 4 U s > 8)", &s()).unwrap();
        // Anchor 0: min(9 - 8, RHO_MAX) = 1; anchor 1: min(-8, 4 - 9) = -8.
        assert_eq!(robustness(&tau, &phi, 0), 1.0);
        assert!(eval_boolean(&tau, &phi, 0));
    }

    #[test]
    fn then_needs_a_strictly_earlier_witness() {
        let tau = Trajectory::scalar(&[9.0, 0.0]).unwrap();
        let phi = parse("(s > 8 T s > 8)", &s()).unwrap();
        // Anchor 0 has an empty prefix; anchor 1 has psi = -8.
        assert_eq!(robustness(&tau, &phi, 0), -8.0);
        assert!(!eval_boolean(&tau, &phi, 0));
        let tau = Trajectory::scalar(&[9.0, 10.0]).unwrap();
        assert_eq!(robustness(&tau, &phi, 0), 1.0);
    }

    #[test]
    fn until_left_operand_sees_truncated_window() {
        // F s > 5 inside the prefix may only look up to the anchor, so the
        // late s_2 = 9 cannot help the anchor at t' = 1.
        let tau = Trajectory::scalar(&[2.0, 0.0, 9.0]).unwrap();
        let phi = parse("(F s > 5 U s < 1)", &s()).unwrap();
        // Anchors: 0 → -1; 1 → min(1, max(-3, -5)) = -3; 2 → -8.
        assert_eq!(robustness(&tau, &phi, 0), -1.0);
        assert!(!eval_boolean(&tau, &phi, 0));
        // The same left operand on the full suffix would reach 4.
        assert_eq!(robustness_in(&tau, &parse("F s > 5", &s()).unwrap(), 0, 3), 4.0);
        assert_eq!(robustness_in(&tau, &parse("F s > 5", &s()).unwrap(), 0, 2), -3.0);
    }

    #[test]
    fn implication_rule() {
        let tau = Trajectory::scalar(&[3.0]).unwrap();
        let phi = parse("s > 5 -> s < 1", &s()).unwrap();
        // max(-(3 - 5), 1 - 3) = 2
        assert_eq!(robustness(&tau, &phi, 0), 2.0);
        assert!(eval_boolean(&tau, &phi, 0));
    }

    #[test]
    #[should_panic(expected = "outside trajectory")]
    fn start_index_must_be_in_range() {
        let tau = Trajectory::scalar(&[3.0]).unwrap();
        robustness(&tau, &Formula::True, 1);
    }
}

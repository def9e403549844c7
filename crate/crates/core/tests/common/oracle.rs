//! Brute-force robustness written against explicit sub-trajectory copies.
//! `w` is the window `s_{t:t+k}`; its first element is `s_t`.

use tlps_core::{Formula, RHO_MAX};

pub fn rho(w: &[Vec<f64>], phi: &Formula) -> f64 {
    let k = w.len();
    match phi {
        Formula::True => RHO_MAX,
        Formula::Pred(p) => p.margin(&w[0]),
        Formula::Not(a) => -rho(w, a),
        Formula::Implies(a, b) => max(&[-rho(w, a), rho(w, b)]),
        Formula::And(a, b) => min(&[rho(w, a), rho(w, b)]),
        Formula::Or(a, b) => max(&[rho(w, a), rho(w, b)]),
        Formula::Next(a) => {
            if k > 1 {
                rho(&w[1..], a)
            } else {
                -RHO_MAX
            }
        }
        Formula::Always(a) => min(&suffixes(w).map(|s| rho(&s, a)).collect::<Vec<_>>()),
        Formula::Eventually(a) => max(&suffixes(w).map(|s| rho(&s, a)).collect::<Vec<_>>()),
        Formula::Until(a, b) | Formula::Then(a, b) => {
            let until = matches!(phi, Formula::Until(..));
            let mut outer = Vec::new();
            for tp in 0..k {
                let right = rho(&w[tp..], b);
                let inner: Vec<f64> = (0..tp).map(|tpp| rho(&w[tpp..=tp], a)).collect();
                let left = match (until, inner.is_empty()) {
                    (true, true) => RHO_MAX,
                    (false, true) => -RHO_MAX,
                    (true, false) => min(&inner),
                    (false, false) => max(&inner),
                };
                outer.push(min(&[right, left]));
            }
            max(&outer)
        }
    }
}

pub fn holds(w: &[Vec<f64>], phi: &Formula) -> bool {
    let k = w.len();
    match phi {
        Formula::True => true,
        Formula::Pred(p) => p.holds(&w[0]),
        Formula::Not(a) => !holds(w, a),
        Formula::Implies(a, b) => !holds(w, a) || holds(w, b),
        Formula::And(a, b) => holds(w, a) && holds(w, b),
        Formula::Or(a, b) => holds(w, a) || holds(w, b),
        Formula::Next(a) => k > 1 && holds(&w[1..], a),
        Formula::Always(a) => suffixes(w).all(|s| holds(&s, a)),
        Formula::Eventually(a) => suffixes(w).any(|s| holds(&s, a)),
        Formula::Until(a, b) => (0..k).any(|tp| {
            holds(&w[tp..], b) && (0..tp).all(|tpp| holds(&w[tpp..=tp], a))
        }),
        Formula::Then(a, b) => (0..k).any(|tp| {
            holds(&w[tp..], b) && (0..tp).any(|tpp| holds(&w[tpp..=tp], a))
        }),
    }
}

fn suffixes(w: &[Vec<f64>]) -> impl Iterator<Item = Vec<Vec<f64>>> + '_ {
    (0..w.len()).map(move |i| w[i..].to_vec())
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

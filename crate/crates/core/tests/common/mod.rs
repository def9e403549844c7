#![allow(dead_code)]

pub mod oracle;

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;
use tlps_core::{Comparator, Formula, Predicate, PredicateFn, Trajectory, VariableMap};

pub fn vars(dim: usize) -> VariableMap {
    VariableMap::from_names(["a", "b", "c"].into_iter().take(dim)).unwrap()
}

fn quarter(lo: i32, hi: i32) -> impl Strategy<Value = f64> {
    (lo * 4..=hi * 4).prop_map(|q| q as f64 / 4.0)
}

pub fn arb_predicate(dim: usize) -> BoxedStrategy<Predicate> {
    let cmp = prop_oneof![Just(Comparator::Lt), Just(Comparator::Gt)];
    let affine = (
        prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), Just(-1.0), Just(0.5), Just(2.0)], dim),
        quarter(-2, 2),
    )
        .prop_map(|(coeffs, offset)| PredicateFn::Affine { coeffs, offset });
    let func = if dim >= 2 {
        prop_oneof![
            3 => affine,
            1 => (quarter(-2, 2), quarter(-2, 2)).prop_map(|c| PredicateFn::Distance {
                i: 0,
                j: 1,
                center: c,
            }),
        ]
        .boxed()
    } else {
        affine.boxed()
    };
    (func, cmp, quarter(-3, 3))
        .prop_map(|(f, c, t)| Predicate::new(f, c, t))
        .boxed()
}

/// Formulas of depth at most `depth` over all eleven node kinds.
pub fn arb_formula(dim: usize, depth: u32) -> BoxedStrategy<Formula> {
    let leaf = prop_oneof![
        1 => Just(Formula::True),
        6 => arb_predicate(dim).prop_map(Formula::pred),
    ];
    leaf.prop_recursive(depth, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            inner.clone().prop_map(Formula::eventually),
            inner.clone().prop_map(Formula::always),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::until(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::then(a, b)),
            inner.prop_map(Formula::next),
        ]
    })
    .boxed()
}

/// Trajectories of `1..=max_len` states; half the time on a quarter grid so
/// that ties occur.
pub fn arb_trajectory(dim: usize, max_len: usize) -> BoxedStrategy<Trajectory> {
    let value = prop_oneof![quarter(-4, 4), -4.0..4.0f64];
    prop::collection::vec(prop::collection::vec(value, dim), 1..=max_len)
        .prop_map(|s| Trajectory::from_states(&s).unwrap())
        .boxed()
}

pub fn arb_case(max_dim: usize, depth: u32, max_len: usize) -> BoxedStrategy<(Formula, Trajectory)> {
    (1..=max_dim)
        .prop_flat_map(move |dim| (arb_formula(dim, depth), arb_trajectory(dim, max_len)))
        .boxed()
}

/// Draws one value from `strategy`.
pub fn draw<S: Strategy>(runner: &mut TestRunner, strategy: &S) -> S::Value {
    strategy.new_tree(runner).unwrap().current()
}

pub fn states(tau: &Trajectory) -> Vec<Vec<f64>> {
    tau.states().map(<[f64]>::to_vec).collect()
}

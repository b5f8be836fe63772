#![allow(dead_code)]

use departing_bandits::{Instance, Policy};
use proptest::prelude::*;

/// 2x2 instances with unit departure and P in [0.01, 0.95].
pub fn two_by_two() -> impl Strategy<Value = Instance> {
    (0.01f64..0.99, prop::array::uniform4(0.01f64..0.95)).prop_map(|(b, p)| {
        Instance::with_unit_departure(
            vec![b, 1.0 - b],
            vec![vec![p[0], p[1]], vec![p[2], p[3]]],
            None,
        )
        .unwrap()
    })
}

/// 2x2 instances with arbitrary departure probabilities in [0.05, 1].
pub fn two_by_two_general() -> impl Strategy<Value = Instance> {
    (
        0.01f64..0.99,
        prop::array::uniform4(0.01f64..0.9),
        prop::array::uniform4(0.05f64..=1.0),
    )
        .prop_map(|(b, p, l)| {
            Instance::new(
                vec![b, 1.0 - b],
                vec![vec![p[0], p[1]], vec![p[2], p[3]]],
                vec![vec![l[0], l[1]], vec![l[2], l[3]]],
                None,
            )
            .unwrap()
        })
}

/// Policies over two categories with a prefix of at most `max_prefix`.
pub fn two_category_policy(max_prefix: usize) -> impl Strategy<Value = Policy> {
    (prop::collection::vec(0usize..2, 0..=max_prefix), 0usize..2)
        .prop_map(|(prefix, tail)| Policy::new(prefix, tail))
}

#![allow(dead_code)]

use extphase::expr::{PhaseExpr, Registry};
use proptest::prelude::*;

pub const PHI: &str = "pt + f(t)/(2*m)*(p1^2 + p2^2) + m*w(t)^2/(2*f(t))*(x1^2 + x2^2)";

const FACTORS: &[&str] = &[
    "x1", "x2", "t", "p1", "p2", "pt", "m", "f(t)", "w(t)", "f(t)^-1", "x1^2", "p2^2",
];

fn term() -> impl Strategy<Value = String> {
    (
        -4i64..=4,
        1i64..=3,
        prop::collection::vec(0..FACTORS.len(), 0..=3),
    )
        .prop_map(|(n, d, idx)| {
            let mut s = format!("({n}/{d})");
            for i in idx {
                s.push('*');
                s.push_str(FACTORS[i]);
            }
            s
        })
}

/// Text of a random polynomial in the extended chart with coefficient atoms.
pub fn poly_text() -> impl Strategy<Value = String> {
    prop::collection::vec(term(), 1..=4).prop_map(|t| t.join(" + "))
}

pub fn poly() -> impl Strategy<Value = PhaseExpr> {
    poly_text().prop_map(|s| {
        Registry::oscillator()
            .parse(&s)
            .expect("generated text parses")
    })
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

//! The closed-form second-derivative table must agree with finite
//! differences of the surrogate loss, be exactly symmetric, and respect the
//! arc-sparsity rule for second-order errors.
//!
//! The surrogate is quadratic in each arc parameter separately, so central
//! second differences carry no truncation error here and the comparison is
//! limited only by rounding.

mod common;

use common::*;
use qnn_core::envgraph::EnvGraph;
use qnn_core::gradcheck::{
    hessian_closed_form, second_error_sparsity, second_error_table, SecondErrorTable,
};
use qnn_core::qnn_train::{backward_errors, forward_side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 2e-3;

fn loss_at(g: &EnvGraph, a: (usize, usize), ta: f64, b: (usize, usize), tb: f64, x0: f64, y: f64) -> f64 {
    let shifted = g
        .with_arc_theta(a.0, a.1, ta)
        .unwrap()
        .with_arc_theta(b.0, b.1, tb)
        .unwrap();
    surrogate_loss(&shifted, x0, y)
}

#[test]
fn closed_form_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..40 {
        let g = random_dag(&mut rng, 1, 5); // at most 6 vertices
        let x0 = rng.gen_range(-1.0..1.0);
        let y = rng.gen_range(-1.0..1.0);
        let side = forward_side(&g, x0).unwrap();
        let table = hessian_closed_form(&g, &side, y).unwrap();
        let arcs: Vec<(usize, usize)> = g.arcs().map(|a| (a.from, a.to)).collect();

        for &a in &arcs {
            for &b in &arcs {
                let closed = table.get(a, b).unwrap();
                let ta = g.theta(a.0, a.1).unwrap();
                let tb = g.theta(b.0, b.1).unwrap();
                let fd = if a == b {
                    let fp = loss_at(&g, a, ta + H, a, ta + H, x0, y);
                    let f0 = surrogate_loss(&g, x0, y);
                    let fm = loss_at(&g, a, ta - H, a, ta - H, x0, y);
                    (fp - 2.0 * f0 + fm) / (H * H)
                } else {
                    let fpp = loss_at(&g, a, ta + H, b, tb + H, x0, y);
                    let fpm = loss_at(&g, a, ta + H, b, tb - H, x0, y);
                    let fmp = loss_at(&g, a, ta - H, b, tb + H, x0, y);
                    let fmm = loss_at(&g, a, ta - H, b, tb - H, x0, y);
                    (fpp - fpm - fmp + fmm) / (4.0 * H * H)
                };
                let tol = 1e-6 * fd.abs().max(1.0);
                assert!(
                    (fd - closed).abs() <= tol,
                    "case {case}, arcs {a:?} x {b:?}: fd {fd} vs closed {closed}"
                );
            }
        }
    }
}

#[test]
fn closed_form_is_exactly_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..50 {
        let g = random_dag(&mut rng, 1, 5);
        let side = forward_side(&g, 0.35).unwrap();
        let table = hessian_closed_form(&g, &side, -0.2).unwrap();
        assert!(table.max_asymmetry() <= 1e-10);
        for ((a, b), v) in table.iter() {
            assert_eq!(table.get(b, a).unwrap().to_bits(), v.to_bits());
        }
    }
}

#[test]
fn second_order_errors_vanish_under_finite_differences() {
    // delta depends only on arc parameters, never on biases, so the
    // derivative d delta_i / d Q_l probed through bias perturbations is
    // identically zero -- matching the all-zero closed-form table.
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..40 {
        let g = random_dag(&mut rng, 1, 5);
        let x0 = 0.6;
        let count = g.num_vertices();
        let biases: Vec<f64> = (0..count).map(|v| g.bias(v).unwrap()).collect();
        for l in 1..count {
            let mut up = biases.clone();
            up[l] += 1e-4;
            let mut down = biases.clone();
            down[l] -= 1e-4;
            let gu = g.with_biases(up).unwrap();
            let gd = g.with_biases(down).unwrap();
            let du = backward_errors(&gu, &forward_side(&gu, x0).unwrap(), 1.0).unwrap();
            let dd = backward_errors(&gd, &forward_side(&gd, x0).unwrap(), 1.0).unwrap();
            for i in 0..count {
                assert_eq!(du.delta[i].to_bits(), dd.delta[i].to_bits());
            }
        }
    }
}

#[test]
fn second_error_table_is_zero_and_sparsity_passes() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..40 {
        let g = random_dag(&mut rng, 1, 5);
        let table = second_error_table(&g);
        for (_, v) in table.iter() {
            assert_eq!(v, 0.0);
        }
        let report = second_error_sparsity(&g, &table);
        assert!(report.pass);
        assert!(report.violations.is_empty());
    }
}

#[test]
fn sparsity_flags_entries_off_the_arc_pattern() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let g = random_dag(&mut rng, 1, 4);
    let mut table = SecondErrorTable::default();
    // A nonzero entry aligned with an arc (i -> l) is allowed...
    let arc = g.arcs().next().unwrap();
    table.set(arc.to, arc.from, 0.4);
    assert!(second_error_sparsity(&g, &table).pass);
    // ...but one on a non-arc pair is a violation.
    let (l, i) = (1usize, gfind_non_arc(&g));
    table.set(l, i, 0.7);
    let report = second_error_sparsity(&g, &table);
    assert!(!report.pass);
    assert_eq!(report.violations.len(), 1);
}

fn gfind_non_arc(g: &EnvGraph) -> usize {
    // Vertex v such that (v -> 1) is not an arc; the sink qualifies since
    // it has no outgoing arcs.
    g.num_vertices() - 1
}

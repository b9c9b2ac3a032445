//! Shared oracles for the integration tests: dense matrix exponentials,
//! random graph generation, and path enumeration. Everything here is
//! deliberately independent of the library's own evaluation paths.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use qnn_core::envgraph::{ArcSpec, EnvGraph, VertexSpec};
use qnn_core::qsim::{Pauli, PauliString, StateVector};
use rand::Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// 2x2 single-wire Pauli matrix.
pub fn pauli_2x2(p: Pauli) -> DMatrix<Complex64> {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match p {
        Pauli::I => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        Pauli::X => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        Pauli::Y => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        Pauli::Z => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

/// Dense matrix of a Pauli string, wire 0 as the most significant factor.
pub fn dense_pauli(ps: &PauliString) -> DMatrix<Complex64> {
    let mut m = pauli_2x2(ps.op(0).unwrap());
    for w in 1..ps.wires() {
        m = m.kronecker(&pauli_2x2(ps.op(w).unwrap()));
    }
    m
}

/// Independent rotation oracle: the matrix exponential of `-i theta P`
/// computed by nalgebra's general `exp`, not by any identity the library
/// itself uses.
pub fn expm_rotation(ps: &PauliString, theta: f64) -> DMatrix<Complex64> {
    let p = dense_pauli(ps);
    (p * c(0.0, -theta)).exp()
}

pub fn state_as_dvector(sv: &StateVector) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_column_slice(sv.amps())
}

pub fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Random Pauli string on `wires` wires, guaranteed non-identity.
pub fn random_pauli_string<R: Rng>(rng: &mut R, wires: usize) -> PauliString {
    loop {
        let ops: Vec<Pauli> = (0..wires)
            .map(|_| match rng.gen_range(0..4) {
                0 => Pauli::I,
                1 => Pauli::X,
                2 => Pauli::Y,
                _ => Pauli::Z,
            })
            .collect();
        if ops.iter().any(|&p| p != Pauli::I) {
            return PauliString::new(ops).unwrap();
        }
    }
}

/// Random +-1 string of length n.
pub fn random_z<R: Rng>(rng: &mut R, n: usize) -> Vec<i8> {
    (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect()
}

/// Random layered environment graph on vertices 0..=l with acyclic arcs,
/// every non-sink vertex given an outgoing arc and optional extra skips.
/// Gate tags 1..=l receive random non-identity Pauli strings on `n + 1`
/// wires so the graph can bind a circuit.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, max_interior: usize) -> EnvGraph {
    let l = rng.gen_range(2..=max_interior.max(2));
    let vertices: Vec<VertexSpec> = (0..=l)
        .map(|id| VertexSpec {
            id,
            pauli: if id == 0 {
                None
            } else {
                Some(random_pauli_string(rng, n + 1))
            },
            bias: rng.gen_range(-0.5..0.5),
            label: rng.gen_range(-0.5..0.5),
        })
        .collect();

    let mut arcs: Vec<ArcSpec> = Vec::new();
    let theta = |rng: &mut R| loop {
        let t: f64 = rng.gen_range(-1.4..1.4);
        if t.abs() > 0.05 {
            return t;
        }
    };
    // A backbone path keeps every vertex on a route to the sink, then
    // random skip arcs add branching.
    for v in 0..l {
        arcs.push(ArcSpec {
            from: v,
            to: v + 1,
            theta: theta(rng),
        });
    }
    for from in 0..l {
        for to in (from + 2)..=l {
            if rng.gen_bool(0.3) {
                arcs.push(ArcSpec {
                    from,
                    to,
                    theta: theta(rng),
                });
            }
        }
    }
    EnvGraph::from_parts(n, vertices, arcs).unwrap()
}

/// Sum over all directed paths from `from` to `to` of the product of arc
/// parameters along the path, by exhaustive enumeration.
pub fn path_product_sum(g: &EnvGraph, from: usize, to: usize) -> f64 {
    if from == to {
        return 1.0;
    }
    let mut total = 0.0;
    for &child in g.children(from).unwrap() {
        total += g.theta(from, child).unwrap() * path_product_sum(g, child, to);
    }
    total
}

/// Surrogate loss of the side network, `(V_sink - y)^2 / 2`, as a function
/// of the graph's current arc parameters.
pub fn surrogate_loss(g: &EnvGraph, x0: f64, y: f64) -> f64 {
    let side = qnn_core::qnn_train::forward_side(g, x0).unwrap();
    let v_sink = *side.v.last().unwrap();
    (v_sink - y) * (v_sink - y) / 2.0
}

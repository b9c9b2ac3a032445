//! Gradient and curvature oracles.
//!
//! Pauli-rotation gates have involutory generators, so the parameter-shift
//! rule with shift pi/4 yields the exact derivative of the readout
//! expectation. Central finite differences provide an independent numeric
//! route, and for the linear side network a closed-form Hessian of a
//! quadratic surrogate loss is available arc pair by arc pair.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envgraph::EnvGraph;
use crate::error::{CoreError, Result};
use crate::qnn_train::{backward_errors, SideInfo};
use crate::qsim::{predicted_label, Circuit, LabeledString, PauliString};

/// Shift used by the parameter-shift rule; exact for involutory generators.
pub const SHIFT: f64 = FRAC_PI_4;

/// Default step for central finite differences.
pub const FD_STEP: f64 = 1e-5;

/// Exact derivative of the readout expectation with respect to `thetas[i]`:
/// `ltilde(theta_i + pi/4) - ltilde(theta_i - pi/4)`.
pub fn param_shift_grad(
    circuit: &Circuit,
    thetas: &[f64],
    z: &[i8],
    obs: &PauliString,
    i: usize,
) -> Result<f64> {
    if i >= thetas.len() {
        return Err(CoreError::IndexOutOfRange(format!(
            "parameter index {i} for {} gates",
            thetas.len()
        )));
    }
    let mut plus = thetas.to_vec();
    plus[i] += SHIFT;
    let mut minus = thetas.to_vec();
    minus[i] -= SHIFT;
    Ok(predicted_label(circuit, &plus, z, obs)? - predicted_label(circuit, &minus, z, obs)?)
}

/// Derivative of the single-item loss `1 - label * ltilde` with respect to
/// `thetas[i]`.
pub fn param_shift_loss_grad(
    circuit: &Circuit,
    thetas: &[f64],
    item: &LabeledString,
    obs: &PauliString,
    i: usize,
) -> Result<f64> {
    Ok(-f64::from(item.label) * param_shift_grad(circuit, thetas, &item.z, obs, i)?)
}

/// Full parameter-shift loss gradient; gate evaluations run in parallel
/// and are reassembled in index order, so the result is deterministic.
pub fn loss_gradient(
    circuit: &Circuit,
    thetas: &[f64],
    item: &LabeledString,
    obs: &PauliString,
) -> Result<Vec<f64>> {
    (0..thetas.len())
        .into_par_iter()
        .map(|i| param_shift_loss_grad(circuit, thetas, item, obs, i))
        .collect()
}

/// Central finite difference `(f(x + h e_i) - f(x - h e_i)) / (2h)`.
pub fn finite_diff<F>(f: F, x: &[f64], i: usize, h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if i >= x.len() {
        return Err(CoreError::IndexOutOfRange(format!(
            "coordinate {i} for {} variables",
            x.len()
        )));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut plus = x.to_vec();
    plus[i] += h;
    let mut minus = x.to_vec();
    minus[i] -= h;
    let d = (f(&plus)? - f(&minus)?) / (2.0 * h);
    if !d.is_finite() {
        return Err(CoreError::Numeric(
            "finite difference produced a non-finite value".into(),
        ));
    }
    Ok(d)
}

/// Arc identified by (from, to).
pub type ArcKey = (usize, usize);

/// Closed-form second derivatives of the surrogate loss, keyed by ordered
/// arc pairs. Exactly symmetric by construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HessianTable {
    entries: BTreeMap<(ArcKey, ArcKey), f64>,
}

impl HessianTable {
    pub fn get(&self, a: ArcKey, b: ArcKey) -> Option<f64> {
        self.entries.get(&(a, b)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((ArcKey, ArcKey), f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest absolute asymmetry `|h(a,b) - h(b,a)|` over all arc pairs.
    pub fn max_asymmetry(&self) -> f64 {
        self.entries
            .iter()
            .map(|(&(a, b), &v)| (v - self.entries[&(b, a)]).abs())
            .fold(0.0, f64::max)
    }
}

/// All-pairs path sums `ps[a][b] = sum over directed paths a -> b of the
/// product of arc parameters`, with `ps[a][a] = 1`. Entry `ps[i][l]` is the
/// derivative of the side value V_l with respect to the pre-activation Q_i.
fn path_sums(g: &EnvGraph) -> Result<Vec<Vec<f64>>> {
    let count = g.num_vertices();
    let order = g.topological_order()?;
    let mut ps = vec![vec![0.0; count]; count];
    for a in 0..count {
        ps[a][a] = 1.0;
        for &b in order.order() {
            if b == a {
                continue;
            }
            let mut acc = 0.0;
            for &h in g.parents(b)? {
                acc += g.theta(h, b)? * ps[a][h];
            }
            ps[a][b] = acc;
        }
    }
    Ok(ps)
}

/// Closed-form Hessian of the surrogate loss `(V_L - y)^2 / 2` with respect
/// to the arc parameters of the linear side network.
///
/// Entry ((j, i), (m, l)) is the exact mixed second derivative for the arcs
/// j -> i and m -> l. The first summand is the Gauss-Newton product of
/// first derivatives; the cross terms survive only when one arc's target
/// precedes the other arc's source along some directed path, which the
/// path sums encode. Second-order errors of the side values vanish because
/// the network is linear, so no (delta^2) summand appears.
pub fn hessian_closed_form(
    g: &EnvGraph,
    side: &SideInfo,
    y_target: f64,
) -> Result<HessianTable> {
    if !y_target.is_finite() {
        return Err(CoreError::Numeric("surrogate target must be finite".into()));
    }
    let count = g.num_vertices();
    if side.v.len() != count {
        return Err(CoreError::DimensionMismatch(format!(
            "side information covers {} vertices, graph has {count}",
            side.v.len()
        )));
    }
    let sink = count - 1;
    let errs = backward_errors(g, side, 1.0)?;
    let delta = &errs.delta;
    let ps = path_sums(g)?;

    // Surrogate derivatives per output; the output set of this model is the
    // single sink vertex, and the sums below run over it.
    let outputs = [sink];
    let arcs: Vec<ArcKey> = g.arcs().map(|a| (a.from, a.to)).collect();
    let mut entries = BTreeMap::new();
    // Mixed partials commute, so each unordered pair is computed once and
    // mirrored; the table is then symmetric bit-for-bit.
    for (i, &(sa, ta)) in arcs.iter().enumerate() {
        for &(sb, tb) in &arcs[i..] {
            let mut value = 0.0;
            for &out in &outputs {
                let lp = side.v[out] - y_target; // d L / d V_out
                let lpp = 1.0; // d^2 L / d V_out^2
                let gauss = lpp * delta[ta] * side.v[sa] * delta[tb] * side.v[sb];
                let cross = lp
                    * (ps[ta][sb] * delta[tb] * side.v[sa]
                        + delta[ta] * side.v[sb] * ps[tb][sa]);
                value += gauss + cross;
            }
            entries.insert(((sa, ta), (sb, tb)), value);
            entries.insert(((sb, tb), (sa, ta)), value);
        }
    }
    Ok(HessianTable { entries })
}

/// Second-order backward errors `(delta^2)[(l, i)] = d delta_i / d Q_l`.
/// For the linear side network every entry is exactly zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SecondErrorTable {
    entries: BTreeMap<(usize, usize), f64>,
}

impl SecondErrorTable {
    pub fn get(&self, l: usize, i: usize) -> Option<f64> {
        self.entries.get(&(l, i)).copied()
    }

    pub fn set(&mut self, l: usize, i: usize, value: f64) {
        self.entries.insert((l, i), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Second-order error table of the linear side network: the backward
/// errors depend on arc parameters only, never on pre-activations, so the
/// table is identically zero over all unitary vertex pairs.
pub fn second_error_table(g: &EnvGraph) -> SecondErrorTable {
    let mut t = SecondErrorTable::default();
    for l in 1..g.num_vertices() {
        for i in 1..g.num_vertices() {
            t.set(l, i, 0.0);
        }
    }
    t
}

/// Outcome of the sparsity check on a second-error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub pass: bool,
    /// Entries (l, i, value) that are non-zero without an arc i -> l.
    pub violations: Vec<(usize, usize, f64)>,
}

/// Verifies the support rule: `(delta^2)[(l, i)]` may be non-zero only when
/// the graph has the arc i -> l. An empty table passes.
pub fn second_error_sparsity(g: &EnvGraph, table: &SecondErrorTable) -> SparsityReport {
    let mut violations = Vec::new();
    for ((l, i), value) in table.iter() {
        if value != 0.0 && !g.has_arc(i, l) {
            violations.push((l, i, value));
        }
    }
    SparsityReport {
        pass: violations.is_empty(),
        violations,
    }
}

//! Feed-forward training pass over the environment graph.
//!
//! Each round evaluates the quantum loss, runs a forward pass of classical
//! side information (V, Q, W per vertex), propagates errors backward along
//! the arcs, derives a per-arc gradient table, and updates the gate
//! parameters. The side network is linear: V_i = label_i + Q_i with
//! Q_i = sum over parents h of theta_hi * V_h + bias_i, seeded by a scalar
//! x0 at the input vertex.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::envgraph::EnvGraph;
use crate::error::{CoreError, Result};
use crate::gradcheck::loss_gradient;
use crate::qsim::{loss, predicted_label, readout_observable, sample_label, ReadoutAxis};
use crate::rng::mix;

/// A multiplicative update within this distance of 1 leaves the parameter
/// untouched bit-for-bit.
pub const UPDATE_IDENTITY_TOL: f64 = 1e-12;

/// Default clamp bound for gate parameters during training.
pub const THETA_CLAMP: f64 = 2.0 * std::f64::consts::PI;

/// Per-vertex side information of one forward pass.
///
/// `w[i] = q[i] - bias_i` is the bias-free pre-activation, `v[i]` the vertex
/// value passed downstream. At the input vertex `v[0]` is the injected
/// scalar and `q[0] = w[0] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideInfo {
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub w: Vec<f64>,
}

/// Default input-vertex scalar: mean of the data entries and the readout
/// wire's +1, `(sum z_i + 1) / (n + 1)`.
pub fn default_x0(z: &[i8]) -> f64 {
    let sum: f64 = z.iter().map(|&b| f64::from(b)).sum();
    (sum + 1.0) / (z.len() as f64 + 1.0)
}

/// Forward pass in topological order.
pub fn forward_side(g: &EnvGraph, x0_value: f64) -> Result<SideInfo> {
    if !x0_value.is_finite() {
        return Err(CoreError::Numeric(format!(
            "input-vertex value must be finite, got {x0_value}"
        )));
    }
    let count = g.num_vertices();
    let order = g.topological_order()?;
    let mut v = vec![0.0; count];
    let mut q = vec![0.0; count];
    let mut w = vec![0.0; count];
    for &i in order.order() {
        if i == 0 {
            v[0] = x0_value;
            continue;
        }
        let mut acc = 0.0;
        for &h in g.parents(i)? {
            acc += g.theta(h, i)? * v[h];
        }
        w[i] = acc;
        q[i] = acc + g.bias(i)?;
        v[i] = g.label(i)? + q[i];
    }
    Ok(SideInfo { v, q, w })
}

/// Backward error recursion variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaRecursion {
    /// delta_z = sum over children j of theta_zj * delta_j. Matches the
    /// finite-difference derivative of V_L with respect to Q_z.
    #[default]
    Plain,
    /// Variant that additionally scales each interior step by the local
    /// pre-activation: delta_z = Q_z * sum_j theta_zj * delta_j. Kept
    /// selectable for comparison; not derivative-consistent.
    QScaled,
}

/// Backward errors per vertex: `delta[i]` from the recursion seeded at the
/// output vertex, and `delta_prime[i] = w[i] * delta[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub delta: Vec<f64>,
    pub delta_prime: Vec<f64>,
}

/// Plain backward recursion; see [`backward_errors_with`].
pub fn backward_errors(g: &EnvGraph, side: &SideInfo, delta_l_seed: f64) -> Result<ErrorTable> {
    backward_errors_with(g, side, delta_l_seed, DeltaRecursion::Plain)
}

/// Propagates the output-vertex seed backwards in reverse topological
/// order. The seed is `1` in classical-chain mode (so `delta[i]` equals
/// d V_L / d Q_i of the linear side network) or the parameter-shift loss
/// derivative of the final gate in quantum-coupled mode.
pub fn backward_errors_with(
    g: &EnvGraph,
    side: &SideInfo,
    delta_l_seed: f64,
    recursion: DeltaRecursion,
) -> Result<ErrorTable> {
    if !delta_l_seed.is_finite() {
        return Err(CoreError::Numeric(format!(
            "error seed must be finite, got {delta_l_seed}"
        )));
    }
    let count = g.num_vertices();
    if side.v.len() != count || side.q.len() != count || side.w.len() != count {
        return Err(CoreError::DimensionMismatch(format!(
            "side information covers {} vertices, graph has {}",
            side.v.len(),
            count
        )));
    }
    let sink = count - 1;
    let order = g.topological_order()?;
    let mut delta = vec![0.0; count];
    delta[sink] = delta_l_seed;
    for &z in order.order().iter().rev() {
        if z == sink {
            continue;
        }
        let mut acc = 0.0;
        for &j in g.children(z)? {
            acc += g.theta(z, j)? * delta[j];
        }
        delta[z] = match recursion {
            DeltaRecursion::Plain => acc,
            DeltaRecursion::QScaled => side.q[z] * acc,
        };
    }
    let delta_prime = delta.iter().zip(&side.w).map(|(d, w)| d * w).collect();
    Ok(ErrorTable { delta, delta_prime })
}

/// Per-vertex multiplicative update factors, `delta_theta[i] = w[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateUpdate {
    pub delta_theta: Vec<f64>,
}

impl GateUpdate {
    pub fn from_side(side: &SideInfo) -> GateUpdate {
        GateUpdate {
            delta_theta: side.w.clone(),
        }
    }
}

/// Applies the multiplicative update rule to every unitary vertex,
/// processed from the output vertex down to vertex 1:
///
/// - `|delta_theta - 1| <= UPDATE_IDENTITY_TOL`: parameter kept unchanged;
/// - otherwise `theta' = delta_theta * theta` (zero factors annihilate the
///   parameter).
///
/// Returns the full updated per-vertex vector (entry 0 unused); the input
/// graph is not modified.
pub fn update_gates(g: &EnvGraph, upd: &GateUpdate) -> Result<Vec<f64>> {
    let count = g.num_vertices();
    if upd.delta_theta.len() != count {
        return Err(CoreError::DimensionMismatch(format!(
            "{} update factors for {} vertices",
            upd.delta_theta.len(),
            count
        )));
    }
    if let Some(z) = upd.delta_theta.iter().position(|d| !d.is_finite()) {
        return Err(CoreError::Numeric(format!(
            "update factor for vertex {z} is not finite"
        )));
    }
    let mut out = vec![0.0; count];
    for z in (1..count).rev() {
        let theta = g.vertex_theta(z)?;
        let factor = upd.delta_theta[z];
        out[z] = if (factor - 1.0).abs() <= UPDATE_IDENTITY_TOL {
            theta
        } else {
            factor * theta
        };
    }
    Ok(out)
}

/// Per-arc gradient entries `g[(i, j)] = delta_prime[i] * w[j]` for every
/// arc (j, i) whose target satisfies i >= 2.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientTable {
    entries: BTreeMap<(usize, usize), f64>,
}

impl GradientTable {
    /// Entry for the arc from `j` into `i`.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.entries.get(&(i, j)).copied()
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

    pub fn max_abs(&self) -> f64 {
        self.entries.values().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Builds the gradient table from one forward and one backward pass.
pub fn gradient_table(g: &EnvGraph, side: &SideInfo, errs: &ErrorTable) -> Result<GradientTable> {
    let count = g.num_vertices();
    if errs.delta_prime.len() != count || side.w.len() != count {
        return Err(CoreError::DimensionMismatch(
            "error table does not match graph".into(),
        ));
    }
    let mut entries = BTreeMap::new();
    for a in g.arcs() {
        let (j, i) = (a.from, a.to);
        if i < 2 {
            continue;
        }
        entries.insert((i, j), errs.delta_prime[i] * side.w[j]);
    }
    Ok(GradientTable { entries })
}

/// Source of the backward-error seed at the output vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSeed {
    /// Seed 1: deltas are exact derivatives of V_L through the side chain.
    ClassicalChain,
    /// Seed dL/d theta_L from the parameter-shift rule on the quantum loss,
    /// routing loss sensitivity through the shared final gate parameter.
    #[default]
    QuantumCoupled,
}

/// How gate parameters move at the end of a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// theta' = delta_theta * theta with delta_theta = W (see
    /// [`update_gates`]).
    Multiplicative,
    /// Full-batch gradient descent on the quantum loss with the
    /// parameter-shift gradient: theta' = theta - lambda * mean grad.
    Descent { lambda: f64 },
}

impl Default for UpdateRule {
    fn default() -> Self {
        UpdateRule::Multiplicative
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QnnTrainConfig {
    pub rounds: usize,
    pub observable: ReadoutAxis,
    /// 0 evaluates exact expectations; otherwise per-item sampled readouts.
    pub shots: u64,
    pub seed: u64,
    pub delta_seed: DeltaSeed,
    pub update_rule: UpdateRule,
    /// Overrides the per-item default input scalar (see [`default_x0`]).
    pub x0_override: Option<f64>,
    pub delta_recursion: DeltaRecursion,
    /// Parameters are clamped to [-theta_clamp, theta_clamp] after updates.
    pub theta_clamp: f64,
}

impl Default for QnnTrainConfig {
    fn default() -> Self {
        QnnTrainConfig {
            rounds: 1,
            observable: ReadoutAxis::Z,
            shots: 0,
            seed: 0,
            delta_seed: DeltaSeed::default(),
            update_rule: UpdateRule::default(),
            x0_override: None,
            delta_recursion: DeltaRecursion::default(),
            theta_clamp: THETA_CLAMP,
        }
    }
}

/// Serializable gradient-table entry: arc from `from` into `to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradEntry {
    pub to: usize,
    pub from: usize,
    pub value: f64,
}

/// One training round as recorded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub r: usize,
    /// Mean loss over the dataset at the round's incoming parameters.
    pub loss: f64,
    /// Gate parameters after the round's update, in circuit order.
    pub theta: Vec<f64>,
    /// Backward errors per vertex for the round's focus item.
    pub delta: Vec<f64>,
    pub grad: Vec<GradEntry>,
    pub max_abs_grad: f64,
    pub clamp_events: usize,
    pub annihilations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub algorithm: String,
    pub seed: u64,
    pub config: QnnTrainConfig,
    pub rounds: Vec<RoundRecord>,
    pub notes: Vec<String>,
}

/// Runs the feed-forward training loop. Deterministic for fixed inputs:
/// identical graphs, datasets, and configs reproduce the report
/// bit-for-bit.
pub fn train(g: &EnvGraph, dataset: &Dataset, cfg: &QnnTrainConfig) -> Result<TrainReport> {
    if cfg.rounds == 0 {
        return Err(CoreError::InvalidInput("round count must be >= 1".into()));
    }
    if !(cfg.theta_clamp.is_finite() && cfg.theta_clamp > 0.0) {
        return Err(CoreError::InvalidInput(
            "clamp bound must be positive and finite".into(),
        ));
    }
    if let UpdateRule::Descent { lambda } = cfg.update_rule {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(CoreError::InvalidInput(
                "descent rate lambda must be positive and finite".into(),
            ));
        }
    }
    if dataset.n != g.data_wires() {
        return Err(CoreError::DimensionMismatch(format!(
            "dataset is for n = {}, graph has {} data wires",
            dataset.n,
            g.data_wires()
        )));
    }
    let circuit = g.bind_circuit()?;
    let obs = readout_observable(g.data_wires(), cfg.observable)?;
    let sink = g.num_vertices() - 1;
    let last_gate = circuit.position_of(sink)?;

    let mut cur = g.clone();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for r in 1..=cfg.rounds {
        let thetas = cur.gate_thetas(&circuit)?;

        let per_item: Vec<f64> = dataset
            .items
            .par_iter()
            .enumerate()
            .map(|(idx, item)| -> Result<f64> {
                let ltilde = if cfg.shots == 0 {
                    predicted_label(&circuit, &thetas, &item.z, &obs)?
                } else {
                    sample_label(
                        &circuit,
                        &thetas,
                        &item.z,
                        &obs,
                        cfg.shots,
                        mix(cfg.seed, r as u64, idx as u64),
                    )?
                };
                Ok(loss(item.label, ltilde))
            })
            .collect::<Result<_>>()?;
        let mean_loss = per_item.iter().sum::<f64>() / per_item.len() as f64;

        let item = dataset.item_for_round(r);
        let x0 = cfg.x0_override.unwrap_or_else(|| default_x0(&item.z));
        let side = forward_side(&cur, x0)?;
        let seed_val = match cfg.delta_seed {
            DeltaSeed::ClassicalChain => 1.0,
            DeltaSeed::QuantumCoupled => {
                loss_gradient(&circuit, &thetas, item, &obs)?[last_gate]
            }
        };
        let errs = backward_errors_with(&cur, &side, seed_val, cfg.delta_recursion)?;
        let table = gradient_table(&cur, &side, &errs)?;

        let mut annihilations = 0usize;
        let mut per_vertex = match cfg.update_rule {
            UpdateRule::Multiplicative => {
                let upd = GateUpdate::from_side(&side);
                for z in 1..=sink {
                    if upd.delta_theta[z] == 0.0 {
                        annihilations += 1;
                    }
                }
                update_gates(&cur, &upd)?
            }
            UpdateRule::Descent { lambda } => {
                let grads: Vec<Vec<f64>> = dataset
                    .items
                    .par_iter()
                    .map(|it| loss_gradient(&circuit, &thetas, it, &obs))
                    .collect::<Result<_>>()?;
                let mut mean = vec![0.0; thetas.len()];
                for gvec in &grads {
                    for (m, gk) in mean.iter_mut().zip(gvec) {
                        *m += gk;
                    }
                }
                let scale = 1.0 / dataset.len() as f64;
                let mut per_vertex = vec![0.0; g.num_vertices()];
                for (gate, (&t, m)) in circuit.gates().iter().zip(thetas.iter().zip(&mean)) {
                    per_vertex[gate.vertex] = t - lambda * *m * scale;
                }
                per_vertex
            }
        };

        let mut clamp_events = 0usize;
        for t in per_vertex.iter_mut().skip(1) {
            if t.abs() > cfg.theta_clamp {
                *t = t.clamp(-cfg.theta_clamp, cfg.theta_clamp);
                clamp_events += 1;
            }
        }
        cur = cur.with_vertex_thetas(&per_vertex)?;

        let theta_after = cur.gate_thetas(&circuit)?;
        rounds.push(RoundRecord {
            r,
            loss: mean_loss,
            theta: theta_after,
            delta: errs.delta.clone(),
            grad: table
                .iter()
                .map(|((to, from), value)| GradEntry { to, from, value })
                .collect(),
            max_abs_grad: table.max_abs(),
            clamp_events,
            annihilations,
        });
    }

    let mut notes = Vec::new();
    if cfg.delta_seed == DeltaSeed::QuantumCoupled {
        notes.push(
            "output error seeded with the parameter-shift loss derivative of the final gate \
             parameter; the side chain carries no direct loss dependence of its own"
                .to_string(),
        );
    }
    Ok(TrainReport {
        algorithm: "qnn".into(),
        seed: cfg.seed,
        config: cfg.clone(),
        rounds,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgraph::{ArcSpec, VertexSpec};
    use crate::qsim::{LabeledString, PauliString};

    fn vspec(id: usize) -> VertexSpec {
        VertexSpec {
            id,
            pauli: None,
            bias: 0.0,
            label: 0.0,
        }
    }

    fn chain_graph(thetas: &[f64]) -> EnvGraph {
        let l = thetas.len();
        let arcs = (1..=l)
            .map(|k| ArcSpec {
                from: k - 1,
                to: k,
                theta: thetas[k - 1],
            })
            .collect();
        EnvGraph::from_parts(1, (0..=l).map(vspec).collect(), arcs).unwrap()
    }

    #[test]
    fn forward_side_chain_example() {
        // 0 -> 1 -> 2 with theta_1 = 0.5, theta_2 = 0.3, x0 = 1:
        // Q_1 = 0.5, V_1 = 0.5, Q_2 = W_2 = 0.15.
        let g = chain_graph(&[0.5, 0.3]);
        let s = forward_side(&g, 1.0).unwrap();
        assert_eq!(s.v[0], 1.0);
        assert_eq!(s.q[0], 0.0);
        assert_eq!(s.w[0], 0.0);
        assert!((s.q[1] - 0.5).abs() < 1e-15);
        assert!((s.v[1] - 0.5).abs() < 1e-15);
        assert!((s.q[2] - 0.15).abs() < 1e-15);
        assert!((s.w[2] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn forward_side_applies_bias_and_label() {
        let g = chain_graph(&[2.0, 1.0])
            .with_biases(vec![0.0, 0.25, 0.0])
            .unwrap()
            .with_labels(vec![0.0, 0.5, 0.0])
            .unwrap();
        let s = forward_side(&g, 1.0).unwrap();
        assert!((s.w[1] - 2.0).abs() < 1e-15);
        assert!((s.q[1] - 2.25).abs() < 1e-15);
        assert!((s.v[1] - 2.75).abs() < 1e-15);
        // Downstream sees V, not Q.
        assert!((s.w[2] - 2.75).abs() < 1e-15);
    }

    #[test]
    fn forward_side_rejects_non_finite_x0() {
        let g = chain_graph(&[0.5]);
        assert!(forward_side(&g, f64::NAN).is_err());
        assert!(forward_side(&g, f64::INFINITY).is_err());
    }

    #[test]
    fn backward_chain_example() {
        let g = chain_graph(&[0.5, 0.3]);
        let side = forward_side(&g, 1.0).unwrap();
        let e = backward_errors(&g, &side, 1.0).unwrap();
        assert_eq!(e.delta[2], 1.0);
        assert!((e.delta[1] - 0.3).abs() < 1e-15);
        // delta_prime = W * delta.
        assert!((e.delta_prime[2] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn backward_diamond_routes_arc_parameters() {
        // 0 -> 1, 0 -> 2, 1 -> 3, 2 -> 3 with independent arc parameters
        // a and b on the in-arcs of 3: delta_1 = a, delta_2 = b.
        let (a, b) = (0.7, -0.2);
        let g = EnvGraph::from_parts(
            1,
            (0..4).map(vspec).collect(),
            vec![
                ArcSpec { from: 0, to: 1, theta: 0.9 },
                ArcSpec { from: 0, to: 2, theta: 0.8 },
                ArcSpec { from: 1, to: 3, theta: a },
                ArcSpec { from: 2, to: 3, theta: b },
            ],
        )
        .unwrap();
        let side = forward_side(&g, 1.0).unwrap();
        let e = backward_errors(&g, &side, 1.0).unwrap();
        assert!((e.delta[1] - a).abs() < 1e-15);
        assert!((e.delta[2] - b).abs() < 1e-15);
        // Input vertex accumulates both branches.
        assert!((e.delta[0] - (0.9 * a + 0.8 * b)).abs() < 1e-15);
    }

    #[test]
    fn q_scaled_recursion_multiplies_by_preactivation() {
        let g = chain_graph(&[0.5, 0.3]);
        let side = forward_side(&g, 1.0).unwrap();
        let e = backward_errors_with(&g, &side, 1.0, DeltaRecursion::QScaled).unwrap();
        // delta_1 = Q_1 * theta_2 * delta_2 = 0.5 * 0.3.
        assert!((e.delta[1] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn update_gates_semantics() {
        let g = chain_graph(&[0.4, -0.6]);
        // Factor 2 doubles, exact 1 keeps, 0 annihilates.
        let upd = GateUpdate {
            delta_theta: vec![0.0, 2.0, 1.0],
        };
        let out = update_gates(&g, &upd).unwrap();
        assert_eq!(out[1], 0.8);
        assert_eq!(out[2], -0.6);

        let upd0 = GateUpdate {
            delta_theta: vec![0.0, 0.0, 1.0 + 5e-13],
        };
        let out0 = update_gates(&g, &upd0).unwrap();
        assert_eq!(out0[1], 0.0);
        // Within tolerance of 1: unchanged bit-for-bit.
        assert_eq!(out0[2].to_bits(), (-0.6f64).to_bits());

        // Just outside tolerance: multiplies.
        let upd1 = GateUpdate {
            delta_theta: vec![0.0, 1.0, 1.0 + 5e-12],
        };
        let out1 = update_gates(&g, &upd1).unwrap();
        assert_ne!(out1[2].to_bits(), (-0.6f64).to_bits());
        assert!((out1[2] - (1.0 + 5e-12) * -0.6).abs() < 1e-18);
        // Input graph untouched.
        assert_eq!(g.theta(0, 1).unwrap(), 0.4);
    }

    #[test]
    fn update_gates_rejects_non_finite_factors() {
        let g = chain_graph(&[0.4]);
        let upd = GateUpdate {
            delta_theta: vec![0.0, f64::NAN],
        };
        assert!(update_gates(&g, &upd).is_err());
    }

    #[test]
    fn gradient_table_chain_product() {
        // delta_prime_2 = 1, W_1 = 0.5 -> g_{21} = 0.5.
        let g = chain_graph(&[0.5, 2.0]);
        let side = forward_side(&g, 1.0).unwrap();
        // Seed chosen so delta_prime at the sink is exactly 1: delta_2 =
        // seed, delta_prime_2 = W_2 * seed with W_2 = 2 * 0.5 = 1.
        let errs = backward_errors(&g, &side, 1.0).unwrap();
        let table = gradient_table(&g, &side, &errs).unwrap();
        assert_eq!(table.len(), 1);
        assert!((table.get(2, 1).unwrap() - 0.5).abs() < 1e-15);
        // Arc (0 -> 1) has target 1 < 2 and is excluded.
        assert_eq!(table.get(1, 0), None);
    }

    #[test]
    fn default_x0_mean_rule() {
        assert!((default_x0(&[1, 1]) - 1.0).abs() < 1e-15);
        assert!((default_x0(&[-1, -1]) - (-1.0 / 3.0)).abs() < 1e-15);
        assert!((default_x0(&[1, -1, 1]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn train_zero_thetas_loss_zero_for_negative_labels() {
        use crate::dataset::Dataset;
        use crate::envgraph::reference_ansatz;
        use crate::qsim::reference_circuit_len;

        let l = reference_circuit_len(1, 1);
        let g = reference_ansatz(1, 1, &vec![0.0; l]).unwrap();
        let data = Dataset::new(
            1,
            vec![LabeledString::new(vec![1], -1).unwrap()],
        )
        .unwrap();
        let cfg = QnnTrainConfig {
            rounds: 1,
            delta_seed: DeltaSeed::ClassicalChain,
            ..QnnTrainConfig::default()
        };
        let report = train(&g, &data, &cfg).unwrap();
        assert_eq!(report.rounds.len(), 1);
        assert!(report.rounds[0].loss.abs() < 1e-12);
    }

    #[test]
    fn train_is_deterministic() {
        use crate::dataset::{full_dataset, LabelRule};
        use crate::envgraph::reference_ansatz;
        use crate::qsim::reference_circuit_len;

        let l = reference_circuit_len(2, 1);
        let thetas: Vec<f64> = (0..l).map(|i| 0.05 * (i as f64 + 1.0)).collect();
        let g = reference_ansatz(2, 1, &thetas).unwrap();
        let data = full_dataset(2, LabelRule::Parity).unwrap();
        let cfg = QnnTrainConfig {
            rounds: 3,
            shots: 32,
            seed: 1234,
            ..QnnTrainConfig::default()
        };
        let a = train(&g, &data, &cfg).unwrap();
        let b = train(&g, &data, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn train_clamps_divergent_parameters() {
        // A multiplicative update with large W blows parameters past the
        // clamp bound; events are counted and values stay inside the box.
        use crate::dataset::Dataset;

        let paulis = vec![
            PauliString::parse("XI").unwrap(),
            PauliString::parse("IX").unwrap(),
        ];
        let g = EnvGraph::chain(1, paulis, &[3.0, 3.0]).unwrap();
        let data = Dataset::new(1, vec![LabeledString::new(vec![1], 1).unwrap()]).unwrap();
        let cfg = QnnTrainConfig {
            rounds: 4,
            delta_seed: DeltaSeed::ClassicalChain,
            x0_override: Some(5.0),
            ..QnnTrainConfig::default()
        };
        let report = train(&g, &data, &cfg).unwrap();
        let total_clamps: usize = report.rounds.iter().map(|r| r.clamp_events).sum();
        assert!(total_clamps > 0);
        for rec in &report.rounds {
            for &t in &rec.theta {
                assert!(t.abs() <= THETA_CLAMP + 1e-12);
            }
        }
    }
}

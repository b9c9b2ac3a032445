//! Recurrent training: rounds feed a scalar state forward.
//!
//! Round r computes the feedback scalar `Phi_r = input_sum(z) + w_r *
//! Phi_{r-1} + B_r` with `w_r` the mean of the previous round's gate
//! parameters, evaluates the quantum loss at the coupled parameters
//! `theta + kappa * Phi_r`, backpropagates through the scalar chain with
//! telescoping products `xi`, and descends with the averaged gradient
//! `omega_r = (lambda / r) * sum of g_1..g_r`.
//!
//! Every round is recorded in a trace that replays bit-identically: the
//! arithmetic helpers here are the single implementation used by both the
//! trainer and the verifier.
//!
//! The module also carries the recurrent-dynamics diagnostics on dense
//! matrices: normalized state propagation and the product norm bound on
//! state-to-state Jacobian factors.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dense::{dense_unitary, diag_norm, operator_norm, unitarity_defect, MAX_DENSE_WIRES};
use crate::error::{CoreError, Result};
use crate::gradcheck::loss_gradient;
use crate::qsim::{
    loss, predicted_label, readout_observable, sample_label, Circuit, Gate, LabeledString,
    PauliString, ReadoutAxis,
};
use crate::rng::mix;

/// Default coupling strength between the feedback scalar and the gate
/// parameters.
pub const DEFAULT_KAPPA: f64 = 0.1;

/// Tolerance for the telescoping identity on `xi` products.
pub const XI_TELESCOPE_TOL: f64 = 1e-12;

/// Sum of the entries of the input string.
pub fn input_sum(z: &[i8]) -> f64 {
    z.iter().map(|&b| f64::from(b)).sum()
}

/// Mean of a gate-parameter vector; the recurrence weight `w_r`.
pub fn mean_theta(theta: &[f64]) -> Result<f64> {
    if theta.is_empty() {
        return Err(CoreError::InvalidInput(
            "parameter vector must not be empty".into(),
        ));
    }
    Ok(theta.iter().sum::<f64>() / theta.len() as f64)
}

/// One feedback step: `Phi = input_sum + mean(theta_prev) * phi_prev + bias`.
/// `Phi_0 = 0` seeds the chain before the first round.
pub fn phi_step(phi_prev: f64, theta_prev: &[f64], input_sum: f64, bias: f64) -> Result<f64> {
    let w = mean_theta(theta_prev)?;
    let phi = input_sum + w * phi_prev + bias;
    if !phi.is_finite() {
        return Err(CoreError::Numeric(format!(
            "feedback scalar diverged: {phi}"
        )));
    }
    Ok(phi)
}

/// `xi_{r,k}` over recorded weights `ws[i-1] = w_i`: the product
/// `w_{k+1} * ... * w_r`, ascending. `k == r` yields the empty product 1.
fn xi_parts(ws: &[f64], r: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in (k + 1)..=r {
        acc *= ws[i - 1];
    }
    acc
}

/// Chain factor `xi_{r,k} = w_{k+1} * ... * w_r` from a trace.
/// Defined for `1 <= k < r <= rounds`; the boundary `k = r - 1` gives `w_r`.
pub fn xi(rounds: &[RoundTrace], r: usize, k: usize) -> Result<f64> {
    if r > rounds.len() {
        return Err(CoreError::IndexOutOfRange(format!(
            "round {r} of a {}-round trace",
            rounds.len()
        )));
    }
    if k == 0 || k >= r {
        return Err(CoreError::IndexOutOfRange(format!(
            "xi index k = {k} must satisfy 1 <= k < r = {r}"
        )));
    }
    let ws: Vec<f64> = rounds.iter().map(|t| t.w).collect();
    Ok(xi_parts(&ws, r, k))
}

/// Gradient of round r with respect to the shared parameters
/// (L gate components followed by one bias component).
///
/// `quantum_grad` holds the parameter-shift loss derivatives at the coupled
/// parameters; the scalar chain contributes `dL/dPhi_r = kappa * sum_i
/// quantum_grad[i]`, distributed over history k = 1..r with weights
/// `xi_{r,k}`. Every gate component receives the same value because the
/// coupling enters through the parameter mean; the bias component weights
/// each history step by 1.
pub fn round_gradient_parts(
    phis: &[f64],
    ws: &[f64],
    r: usize,
    quantum_grad: &[f64],
    kappa: f64,
) -> Result<Vec<f64>> {
    if r == 0 || r > phis.len() || r > ws.len() {
        return Err(CoreError::IndexOutOfRange(format!(
            "round {r} of a chain with {} recorded steps",
            phis.len().min(ws.len())
        )));
    }
    if quantum_grad.is_empty() {
        return Err(CoreError::InvalidInput(
            "quantum gradient must cover at least one gate".into(),
        ));
    }
    let l = quantum_grad.len() as f64;
    let dl_dphi = kappa * quantum_grad.iter().sum::<f64>();
    let mut theta_component = 0.0;
    let mut bias_component = 0.0;
    for k in 1..=r {
        let xi_rk = xi_parts(ws, r, k);
        let phi_prev = if k == 1 { 0.0 } else { phis[k - 2] };
        theta_component += dl_dphi * xi_rk * (phi_prev / l);
        bias_component += dl_dphi * xi_rk;
    }
    let mut g = vec![theta_component; quantum_grad.len()];
    g.push(bias_component);
    Ok(g)
}

/// [`round_gradient_parts`] reading `Phi` and `w` from a trace prefix.
pub fn round_gradient(
    rounds: &[RoundTrace],
    r: usize,
    quantum_grad: &[f64],
    kappa: f64,
) -> Result<Vec<f64>> {
    let phis: Vec<f64> = rounds.iter().map(|t| t.phi).collect();
    let ws: Vec<f64> = rounds.iter().map(|t| t.w).collect();
    round_gradient_parts(&phis, &ws, r, quantum_grad, kappa)
}

/// Averaged update direction `omega_r = (lambda / r) * sum of g_1..g_r`,
/// componentwise, summed in round order. Shared by trainer and verifier so
/// replays reproduce it bit-for-bit.
pub fn omega(gs: &[Vec<f64>], r: usize, lambda: f64) -> Result<Vec<f64>> {
    if r == 0 || r > gs.len() {
        return Err(CoreError::IndexOutOfRange(format!(
            "round {r} of {} recorded gradients",
            gs.len()
        )));
    }
    let dims = gs[0].len();
    let mut acc = vec![0.0; dims];
    for g in &gs[..r] {
        if g.len() != dims {
            return Err(CoreError::DimensionMismatch(
                "gradient vectors disagree in length".into(),
            ));
        }
        for (a, &gi) in acc.iter_mut().zip(g) {
            *a += gi;
        }
    }
    let scale = lambda / r as f64;
    for a in &mut acc {
        *a *= scale;
    }
    Ok(acc)
}

/// `theta - omega` on the gate components. `omega` carries one trailing
/// bias slot, recorded for bookkeeping but not applied: the bias is a fixed
/// configuration input, so only gate parameters move.
pub fn apply_round_update(theta: &[f64], omega_r: &[f64]) -> Result<Vec<f64>> {
    if omega_r.len() != theta.len() + 1 {
        return Err(CoreError::DimensionMismatch(format!(
            "update of length {} for {} gate parameters",
            omega_r.len(),
            theta.len()
        )));
    }
    Ok(theta.iter().zip(omega_r).map(|(t, o)| t - o).collect())
}

/// Total gradient over the run: the componentwise sum of every `g_r`.
pub fn final_gradient(rounds: &[RoundTrace]) -> Result<Vec<f64>> {
    let first = rounds
        .first()
        .ok_or_else(|| CoreError::InvalidInput("trace has no rounds".into()))?;
    let dims = first.g.len();
    let mut acc = vec![0.0; dims];
    for t in rounds {
        if t.g.len() != dims {
            return Err(CoreError::DimensionMismatch(
                "gradient vectors disagree in length".into(),
            ));
        }
        for (a, &gi) in acc.iter_mut().zip(&t.g) {
            *a += gi;
        }
    }
    Ok(acc)
}

/// Everything round r needs for bit-exact replay, one JSON line per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub r: usize,
    /// Gate parameters used during round r (before its update).
    pub theta: Vec<f64>,
    /// Bias entering the feedback scalar this round.
    pub b: f64,
    /// The round's input string and label.
    pub z: Vec<i8>,
    pub label: i8,
    /// Sum of the input entries.
    pub input_sum: f64,
    /// Recurrence weight: mean of the previous round's parameters.
    pub w: f64,
    /// Feedback scalar after this round's step.
    pub phi: f64,
    /// Round gradient, L gate components then one bias component.
    pub g: Vec<f64>,
    /// Averaged update applied at the end of the round.
    pub omega: Vec<f64>,
    pub loss: f64,
}

/// Run header stored as the first line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub n: usize,
    pub gates: Vec<GateDoc>,
    pub observable: ReadoutAxis,
    pub lambda: f64,
    pub kappa: f64,
    pub bias: f64,
    pub shots: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDoc {
    pub pauli: PauliString,
    pub vertex: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TraceFooter {
    g_total: Vec<f64>,
}

/// A full recorded run: header, one entry per round, and the total
/// gradient footer.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub rounds: Vec<RoundTrace>,
    pub g_total: Vec<f64>,
}

impl Trace {
    pub fn circuit(&self) -> Result<Circuit> {
        let gates = self
            .meta
            .gates
            .iter()
            .map(|g| Gate {
                pauli: g.pauli.clone(),
                vertex: g.vertex,
            })
            .collect();
        Circuit::new(self.meta.n, gates)
    }
}

/// Writes the trace as JSON lines: meta, rounds in order, footer.
pub fn write_trace<W: Write>(trace: &Trace, mut out: W) -> Result<()> {
    let io_err = |e: std::io::Error| CoreError::Numeric(format!("trace write failed: {e}"));
    let ser_err = |e: serde_json::Error| CoreError::Numeric(format!("trace encode failed: {e}"));
    writeln!(out, "{}", serde_json::to_string(&trace.meta).map_err(ser_err)?).map_err(io_err)?;
    for round in &trace.rounds {
        writeln!(out, "{}", serde_json::to_string(round).map_err(ser_err)?).map_err(io_err)?;
    }
    let footer = TraceFooter {
        g_total: trace.g_total.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&footer).map_err(ser_err)?).map_err(io_err)?;
    Ok(())
}

/// Reads a trace written by [`write_trace`]. Structural problems (missing
/// header or footer, unparseable lines, round numbers out of order) are
/// reported as corrupt-trace errors.
pub fn read_trace<R: BufRead>(input: R) -> Result<Trace> {
    let lines: Vec<String> = input
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| CoreError::CorruptTrace(format!("unreadable trace: {e}")))?;
    let lines: Vec<&str> = lines
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect();
    if lines.len() < 3 {
        return Err(CoreError::CorruptTrace(format!(
            "trace needs a header, at least one round, and a footer; found {} lines",
            lines.len()
        )));
    }
    let meta: TraceMeta = serde_json::from_str(lines[0])
        .map_err(|e| CoreError::CorruptTrace(format!("bad header line: {e}")))?;
    let footer: TraceFooter = serde_json::from_str(lines[lines.len() - 1])
        .map_err(|e| CoreError::CorruptTrace(format!("bad footer line: {e}")))?;
    let mut rounds = Vec::with_capacity(lines.len() - 2);
    for (idx, line) in lines[1..lines.len() - 1].iter().enumerate() {
        let round: RoundTrace = serde_json::from_str(line)
            .map_err(|e| CoreError::CorruptTrace(format!("bad round line {}: {e}", idx + 1)))?;
        if round.r != idx + 1 {
            return Err(CoreError::CorruptTrace(format!(
                "round number {} at position {}",
                round.r,
                idx + 1
            )));
        }
        rounds.push(round);
    }
    Ok(Trace {
        meta,
        rounds,
        g_total: footer.g_total,
    })
}

/// Result of the arithmetic verification of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub pass: bool,
    pub failures: Vec<String>,
}

fn vecs_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Recomputes every bookkeeping identity of the trace with the same
/// arithmetic the trainer used, demanding bit-identical results:
/// recurrence weights, feedback scalars, averaged updates, the parameter
/// chain `theta_{r+1} = theta_r - omega_r`, and the footer total. The
/// telescoping identity `xi_{r,k} = xi_{r,m} * xi_{m,k}` is checked to
/// within [`XI_TELESCOPE_TOL`].
pub fn verify_trace(trace: &Trace) -> VerifyOutcome {
    let mut failures = Vec::new();
    let l = trace.meta.gates.len();
    let rounds = &trace.rounds;
    if rounds.is_empty() {
        return VerifyOutcome {
            pass: false,
            failures: vec!["trace has no rounds".into()],
        };
    }

    for t in rounds {
        if t.theta.len() != l {
            failures.push(format!(
                "round {}: {} parameters for {} gates",
                t.r,
                t.theta.len(),
                l
            ));
        }
        if t.g.len() != l + 1 || t.omega.len() != l + 1 {
            failures.push(format!("round {}: gradient/update length mismatch", t.r));
        }
        if input_sum(&t.z) != t.input_sum {
            failures.push(format!("round {}: input_sum does not match z", t.r));
        }
    }
    if !failures.is_empty() {
        return VerifyOutcome {
            pass: false,
            failures,
        };
    }

    let mut phi_prev = 0.0;
    for (idx, t) in rounds.iter().enumerate() {
        let theta_prev = if idx == 0 {
            &t.theta
        } else {
            &rounds[idx - 1].theta
        };
        match mean_theta(theta_prev) {
            Ok(w) if w.to_bits() == t.w.to_bits() => {}
            Ok(w) => failures.push(format!(
                "round {}: recurrence weight {} does not reproduce recorded {}",
                t.r, w, t.w
            )),
            Err(e) => failures.push(format!("round {}: {e}", t.r)),
        }
        match phi_step(phi_prev, theta_prev, t.input_sum, t.b) {
            Ok(phi) if phi.to_bits() == t.phi.to_bits() => {}
            Ok(phi) => failures.push(format!(
                "round {}: feedback scalar {} does not reproduce recorded {}",
                t.r, phi, t.phi
            )),
            Err(e) => failures.push(format!("round {}: {e}", t.r)),
        }
        phi_prev = t.phi;
    }

    let gs: Vec<Vec<f64>> = rounds.iter().map(|t| t.g.clone()).collect();
    for (idx, t) in rounds.iter().enumerate() {
        match omega(&gs, idx + 1, trace.meta.lambda) {
            Ok(om) if vecs_equal(&om, &t.omega) => {}
            Ok(_) => failures.push(format!(
                "round {}: omega does not reproduce from recorded gradients",
                t.r
            )),
            Err(e) => failures.push(format!("round {}: {e}", t.r)),
        }
        if idx + 1 < rounds.len() {
            match apply_round_update(&t.theta, &t.omega) {
                Ok(next) if vecs_equal(&next, &rounds[idx + 1].theta) => {}
                Ok(_) => failures.push(format!(
                    "round {}: theta of round {} does not equal theta - omega",
                    t.r,
                    t.r + 1
                )),
                Err(e) => failures.push(format!("round {}: {e}", t.r)),
            }
        }
    }

    match final_gradient(rounds) {
        Ok(total) if vecs_equal(&total, &trace.g_total) => {}
        Ok(_) => failures.push("footer total does not equal the sum of round gradients".into()),
        Err(e) => failures.push(format!("footer: {e}")),
    }

    let ws: Vec<f64> = rounds.iter().map(|t| t.w).collect();
    for r in 1..=rounds.len() {
        for m in 1..=r {
            for k in 1..=m {
                let lhs = xi_parts(&ws, r, k);
                let rhs = xi_parts(&ws, r, m) * xi_parts(&ws, m, k);
                let scale = lhs.abs().max(1.0);
                if (lhs - rhs).abs() > XI_TELESCOPE_TOL * scale {
                    failures.push(format!(
                        "telescoping violated at (r, m, k) = ({r}, {m}, {k}): {lhs} vs {rhs}"
                    ));
                }
            }
        }
    }

    VerifyOutcome {
        pass: failures.is_empty(),
        failures,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RqnnTrainConfig {
    pub rounds: usize,
    /// Descent rate; the round-r update averages gradients with lambda / r.
    pub lambda: f64,
    /// Coupling between the feedback scalar and the gate parameters.
    pub kappa: f64,
    /// Fixed bias entering every feedback step.
    pub bias: f64,
    pub observable: ReadoutAxis,
    /// 0 evaluates exact expectations; otherwise sampled readouts for the
    /// recorded loss. Gradients always use exact expectations.
    pub shots: u64,
    pub seed: u64,
}

impl Default for RqnnTrainConfig {
    fn default() -> Self {
        RqnnTrainConfig {
            rounds: 1,
            lambda: 0.05,
            kappa: DEFAULT_KAPPA,
            bias: 0.0,
            observable: ReadoutAxis::Z,
            shots: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RqnnRoundRecord {
    pub r: usize,
    pub loss: f64,
    /// Gate parameters after the round's update.
    pub theta: Vec<f64>,
    pub max_abs_grad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RqnnReport {
    pub algorithm: String,
    pub seed: u64,
    pub config: RqnnTrainConfig,
    pub rounds: Vec<RqnnRoundRecord>,
    pub final_gradient: Vec<f64>,
}

/// Runs the recurrent training loop; rounds cycle through the dataset.
/// Returns the report and the full replayable trace. Deterministic for
/// fixed inputs.
pub fn train_rqnn(
    circuit: &Circuit,
    theta0: &[f64],
    dataset: &Dataset,
    cfg: &RqnnTrainConfig,
) -> Result<(RqnnReport, Trace)> {
    if cfg.rounds == 0 {
        return Err(CoreError::InvalidInput("round count must be >= 1".into()));
    }
    if !(cfg.lambda.is_finite() && cfg.lambda > 0.0) {
        return Err(CoreError::InvalidInput(
            "descent rate lambda must be positive and finite".into(),
        ));
    }
    if !cfg.kappa.is_finite() || !cfg.bias.is_finite() {
        return Err(CoreError::Numeric(
            "coupling and bias must be finite".into(),
        ));
    }
    if theta0.len() != circuit.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "{} initial parameters for {} gates",
            theta0.len(),
            circuit.len()
        )));
    }
    if circuit.is_empty() {
        return Err(CoreError::InvalidInput("circuit has no gates".into()));
    }
    if dataset.n != circuit.data_wires() {
        return Err(CoreError::DimensionMismatch(format!(
            "dataset is for n = {}, circuit has {} data wires",
            dataset.n,
            circuit.data_wires()
        )));
    }
    let obs = readout_observable(circuit.data_wires(), cfg.observable)?;

    let mut theta = theta0.to_vec();
    let mut phis: Vec<f64> = Vec::with_capacity(cfg.rounds);
    let mut ws: Vec<f64> = Vec::with_capacity(cfg.rounds);
    let mut gs: Vec<Vec<f64>> = Vec::with_capacity(cfg.rounds);
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut records = Vec::with_capacity(cfg.rounds);
    let mut theta_prev = theta.clone();

    for r in 1..=cfg.rounds {
        let item = dataset.item_for_round(r);
        let h = input_sum(&item.z);
        let w = mean_theta(&theta_prev)?;
        let phi_prev = if r == 1 { 0.0 } else { phis[r - 2] };
        let phi = phi_step(phi_prev, &theta_prev, h, cfg.bias)?;
        ws.push(w);
        phis.push(phi);

        let coupled: Vec<f64> = theta.iter().map(|t| t + cfg.kappa * phi).collect();
        let ltilde = if cfg.shots == 0 {
            predicted_label(circuit, &coupled, &item.z, &obs)?
        } else {
            sample_label(
                circuit,
                &coupled,
                &item.z,
                &obs,
                cfg.shots,
                mix(cfg.seed, r as u64, 0),
            )?
        };
        let round_loss = loss(item.label, ltilde);

        let quantum_grad = loss_gradient(circuit, &coupled, item, &obs)?;
        let g = round_gradient_parts(&phis, &ws, r, &quantum_grad, cfg.kappa)?;
        gs.push(g.clone());
        let om = omega(&gs, r, cfg.lambda)?;
        let theta_next = apply_round_update(&theta, &om)?;

        let max_abs_grad = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        rounds.push(RoundTrace {
            r,
            theta: theta.clone(),
            b: cfg.bias,
            z: item.z.clone(),
            label: item.label,
            input_sum: h,
            w,
            phi,
            g,
            omega: om,
            loss: round_loss,
        });
        theta_prev = theta;
        theta = theta_next;
        records.push(RqnnRoundRecord {
            r,
            loss: round_loss,
            theta: theta.clone(),
            max_abs_grad,
        });
    }

    let g_total = final_gradient(&rounds)?;
    let meta = TraceMeta {
        n: circuit.data_wires(),
        gates: circuit
            .gates()
            .iter()
            .map(|g| GateDoc {
                pauli: g.pauli.clone(),
                vertex: g.vertex,
            })
            .collect(),
        observable: cfg.observable,
        lambda: cfg.lambda,
        kappa: cfg.kappa,
        bias: cfg.bias,
        shots: cfg.shots,
        seed: cfg.seed,
    };
    let trace = Trace {
        meta,
        rounds,
        g_total: g_total.clone(),
    };
    let report = RqnnReport {
        algorithm: "rqnn".into(),
        seed: cfg.seed,
        config: cfg.clone(),
        rounds: records,
        final_gradient: g_total,
    };
    Ok((report, trace))
}

/// Re-runs the full algorithm from the inputs recorded in a trace and
/// returns the freshly produced trace. Comparing it to the original proves
/// the recorded run reproduces end to end, quantum evaluations included.
pub fn rerun_from_trace(trace: &Trace) -> Result<Trace> {
    let circuit = trace.circuit()?;
    let first = trace
        .rounds
        .first()
        .ok_or_else(|| CoreError::CorruptTrace("trace has no rounds".into()))?;
    let items = trace
        .rounds
        .iter()
        .map(|t| LabeledString::new(t.z.clone(), t.label))
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset::new(trace.meta.n, items)?;
    let cfg = RqnnTrainConfig {
        rounds: trace.rounds.len(),
        lambda: trace.meta.lambda,
        kappa: trace.meta.kappa,
        bias: trace.meta.bias,
        observable: trace.meta.observable,
        shots: trace.meta.shots,
        seed: trace.meta.seed,
    };
    let (_, fresh) = train_rqnn(&circuit, &first.theta, &dataset, &cfg)?;
    Ok(fresh)
}

// ---------------------------------------------------------------------------
// Recurrent dynamics diagnostics on dense matrices.
// ---------------------------------------------------------------------------

/// Activation of the recurrent state map: identity whenever the 1-norm of
/// the pre-activation is non-negative, zero otherwise. The 1-norm of any
/// vector is non-negative, so the zero branch is unreachable; it is kept
/// to mirror the definition and is pinned dead by tests.
pub fn f_sigma(z: &DVector<Complex64>) -> DVector<Complex64> {
    let l1: f64 = z.iter().map(|c| c.norm()).sum();
    if l1 >= 0.0 {
        z.clone()
    } else {
        DVector::from_element(z.len(), Complex64::new(0.0, 0.0))
    }
}

/// Recurrent state: normalized hidden vector `h`, last pre-activation `z`,
/// input embedding `e`, and output map `w_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub h: DVector<Complex64>,
    pub z: DVector<Complex64>,
    pub e: DMatrix<Complex64>,
    pub w_out: DMatrix<Complex64>,
}

impl RecurrentState {
    /// Normalizes `h` and checks that the embedding and output map agree
    /// with its dimension.
    pub fn new(
        h: DVector<Complex64>,
        e: DMatrix<Complex64>,
        w_out: DMatrix<Complex64>,
    ) -> Result<RecurrentState> {
        let dim = h.len();
        if e.nrows() != dim {
            return Err(CoreError::DimensionMismatch(format!(
                "embedding has {} rows for state dimension {dim}",
                e.nrows()
            )));
        }
        if w_out.ncols() != dim {
            return Err(CoreError::DimensionMismatch(format!(
                "output map has {} columns for state dimension {dim}",
                w_out.ncols()
            )));
        }
        let norm = h.norm();
        if norm < 1e-12 {
            return Err(CoreError::Numeric(
                "hidden state must have non-zero norm".into(),
            ));
        }
        Ok(RecurrentState {
            z: DVector::from_element(dim, Complex64::new(0.0, 0.0)),
            h: h / Complex64::new(norm, 0.0),
            e,
            w_out,
        })
    }

    /// Readout of the current state.
    pub fn output(&self) -> DVector<Complex64> {
        &self.w_out * &self.h
    }
}

/// Embedding that routes input coordinate j onto state coordinate j:
/// the first `input_dim` columns of the identity.
pub fn basis_embedding(dim: usize, input_dim: usize) -> Result<DMatrix<Complex64>> {
    if input_dim > dim {
        return Err(CoreError::DimensionMismatch(format!(
            "input dimension {input_dim} exceeds state dimension {dim}"
        )));
    }
    let mut e = DMatrix::from_element(dim, input_dim, Complex64::new(0.0, 0.0));
    for j in 0..input_dim {
        e[(j, j)] = Complex64::new(1.0, 0.0);
    }
    Ok(e)
}

/// One recurrent step: `z' = U h + E x`, `h' = f_sigma(z')` renormalized to
/// unit length. The circuit must fit the dense-matrix limit of
/// [`MAX_DENSE_WIRES`] wires.
pub fn recurrent_step(
    state: &RecurrentState,
    circuit: &Circuit,
    thetas: &[f64],
    x_next: &DVector<Complex64>,
) -> Result<RecurrentState> {
    let u = dense_unitary(circuit, thetas)?;
    if u.nrows() != state.h.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "unitary of dimension {} for state dimension {}",
            u.nrows(),
            state.h.len()
        )));
    }
    if x_next.len() != state.e.ncols() {
        return Err(CoreError::DimensionMismatch(format!(
            "input of dimension {} for embedding with {} columns",
            x_next.len(),
            state.e.ncols()
        )));
    }
    let z = &u * &state.h + &state.e * x_next;
    let activated = f_sigma(&z);
    let norm = activated.norm();
    if norm < 1e-12 {
        return Err(CoreError::Numeric(
            "recurrent activation collapsed to zero".into(),
        ));
    }
    Ok(RecurrentState {
        h: activated / Complex64::new(norm, 0.0),
        z,
        e: state.e.clone(),
        w_out: state.w_out.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormBoundEntry {
    /// Start index into the trajectory.
    pub nu: usize,
    /// Operator norm of the Jacobian factor product from `nu` to the end.
    pub lhs: f64,
    /// Product of the diagonal factor norms: the bound.
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormBoundReport {
    pub entries: Vec<NormBoundEntry>,
    /// Largest deviation of `|| diag(z) U^T ||` from `|| diag(z) ||`;
    /// zero up to rounding because transposed unitaries preserve
    /// singular values.
    pub factor_norm_dev: f64,
    pub pass: bool,
}

/// Checks the product norm bound along a trajectory of pre-activations:
/// for every start index nu, the operator norm of
/// `prod_{k > nu} diag(z_k) U^T` is at most the product of the diagonal
/// norms `max_j |z_{k,j}|`. Also verifies per factor that multiplying by
/// `U^T` does not change the operator norm.
pub fn norm_bound_check(
    trajectory: &[DVector<Complex64>],
    u: &DMatrix<Complex64>,
) -> Result<NormBoundReport> {
    if trajectory.len() < 2 {
        return Err(CoreError::InvalidInput(
            "trajectory needs at least two pre-activations".into(),
        ));
    }
    let dim = u.nrows();
    if u.ncols() != dim {
        return Err(CoreError::DimensionMismatch("unitary must be square".into()));
    }
    if dim > 1 << MAX_DENSE_WIRES {
        return Err(CoreError::InvalidInput(format!(
            "dense norm check limited to dimension {}",
            1 << MAX_DENSE_WIRES
        )));
    }
    for (k, z) in trajectory.iter().enumerate() {
        if z.len() != dim {
            return Err(CoreError::DimensionMismatch(format!(
                "trajectory entry {k} has dimension {}, unitary has {dim}",
                z.len()
            )));
        }
    }
    if unitarity_defect(u) > 1e-10 {
        return Err(CoreError::Numeric(
            "norm bound requires a unitary propagation matrix".into(),
        ));
    }

    let ut = u.transpose();
    let factors: Vec<DMatrix<Complex64>> = trajectory[1..]
        .par_iter()
        .map(|z| DMatrix::from_diagonal(z) * &ut)
        .collect();
    let mut factor_norm_dev = 0.0f64;
    for (z, f) in trajectory[1..].iter().zip(&factors) {
        factor_norm_dev = factor_norm_dev.max((operator_norm(f) - diag_norm(z)).abs());
    }

    let last = trajectory.len() - 1;
    let mut entries = Vec::with_capacity(last);
    let mut jac = DMatrix::<Complex64>::identity(dim, dim);
    let mut bound = 1.0f64;
    // Walk nu from last-1 down to 0, extending the product one factor at a
    // time: the factor for step nu -> nu+1 is diag(z_{nu+1}) U^T.
    for nu in (0..last).rev() {
        jac *= &factors[nu];
        bound *= diag_norm(&trajectory[nu + 1]);
        entries.push(NormBoundEntry {
            nu,
            lhs: operator_norm(&jac),
            rhs: bound,
        });
    }
    entries.reverse();

    let pass = factor_norm_dev <= 1e-10
        && entries
            .iter()
            .all(|e| e.lhs <= e.rhs * (1.0 + 1e-10) + 1e-12);
    Ok(NormBoundReport {
        entries,
        factor_norm_dev,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{full_dataset, LabelRule};
    use crate::qsim::reference_circuit;

    #[test]
    fn input_sum_and_mean() {
        assert_eq!(input_sum(&[1, -1, 1]), 1.0);
        assert_eq!(mean_theta(&[0.25, 0.75]).unwrap(), 0.5);
        assert!(mean_theta(&[]).is_err());
    }

    #[test]
    fn phi_step_examples() {
        // Phi_0 = 0, z = (1, -1), theta_prev = (0.4, 0.2), B = 0: Phi = 0.
        let phi = phi_step(0.0, &[0.4, 0.2], input_sum(&[1, -1]), 0.0).unwrap();
        assert_eq!(phi, 0.0);
        // z = (1, 1), theta_prev zero, B = 0.5: Phi = 2.5.
        let phi = phi_step(0.0, &[0.0, 0.0], input_sum(&[1, 1]), 0.5).unwrap();
        assert_eq!(phi, 2.5);
        // theta_prev = (1, 1), Phi_prev = 2, z = (-1, -1), B = 0: Phi = 0.
        let phi = phi_step(2.0, &[1.0, 1.0], input_sum(&[-1, -1]), 0.0).unwrap();
        assert_eq!(phi, 0.0);
    }

    fn trace_row(r: usize, theta: Vec<f64>, w: f64, phi: f64) -> RoundTrace {
        let l = theta.len();
        RoundTrace {
            r,
            theta,
            b: 0.0,
            z: vec![1],
            label: 1,
            input_sum: 1.0,
            w,
            phi,
            g: vec![0.0; l + 1],
            omega: vec![0.0; l + 1],
            loss: 0.0,
        }
    }

    #[test]
    fn xi_products() {
        let rounds = vec![
            trace_row(1, vec![0.0], 2.0, 0.0),
            trace_row(2, vec![0.0], 3.0, 0.0),
            trace_row(3, vec![0.0], 5.0, 0.0),
        ];
        // xi_{3,2} = w_3, xi_{3,1} = w_2 w_3.
        assert_eq!(xi(&rounds, 3, 2).unwrap(), 5.0);
        assert_eq!(xi(&rounds, 3, 1).unwrap(), 15.0);
        assert_eq!(xi(&rounds, 2, 1).unwrap(), 3.0);
        assert!(xi(&rounds, 2, 2).is_err());
        assert!(xi(&rounds, 1, 1).is_err());
        assert!(xi(&rounds, 4, 1).is_err());
        assert!(xi(&rounds, 2, 0).is_err());
    }

    #[test]
    fn round_gradient_first_round_has_zero_gate_components() {
        // r = 1: xi_{1,1} = 1 and Phi_0 = 0, so gate components vanish and
        // the bias component is dL/dPhi.
        let phis = [0.7];
        let ws = [0.3];
        let qg = [0.2, -0.4, 0.6];
        let kappa = 0.5;
        let g = round_gradient_parts(&phis, &ws, 1, &qg, kappa).unwrap();
        let dl_dphi = kappa * (0.2 - 0.4 + 0.6);
        assert_eq!(g.len(), 4);
        assert_eq!(&g[..3], &[0.0, 0.0, 0.0]);
        assert!((g[3] - dl_dphi).abs() < 1e-15);
    }

    #[test]
    fn round_gradient_accumulates_history() {
        let phis = [2.0, -1.0];
        let ws = [0.5, 0.25];
        let qg = [1.0, 1.0];
        let kappa = 0.1;
        let g = round_gradient_parts(&phis, &ws, 2, &qg, kappa).unwrap();
        let dl_dphi = kappa * 2.0;
        // k = 1: xi_{2,1} = w_2 = 0.25, Phi_0 = 0; k = 2: xi = 1, Phi_1 = 2.
        let expect_theta = dl_dphi * (0.25 * 0.0 + 1.0 * (2.0 / 2.0));
        let expect_bias = dl_dphi * (0.25 + 1.0);
        assert!((g[0] - expect_theta).abs() < 1e-15);
        assert_eq!(g[0], g[1]);
        assert!((g[2] - expect_bias).abs() < 1e-15);
    }

    #[test]
    fn omega_averages_with_lambda_over_r() {
        let gs = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let om1 = omega(&gs, 1, 0.5).unwrap();
        assert_eq!(om1, vec![0.5, 1.0]);
        let om2 = omega(&gs, 2, 0.5).unwrap();
        assert_eq!(om2, vec![1.0, 1.5]);
        assert!(omega(&gs, 3, 0.5).is_err());
    }

    #[test]
    fn apply_update_skips_bias_slot() {
        let theta = vec![1.0, 2.0];
        let om = vec![0.25, -0.5, 9.0];
        assert_eq!(apply_round_update(&theta, &om).unwrap(), vec![0.75, 2.5]);
        assert!(apply_round_update(&theta, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn trainer_zero_coupling_keeps_parameters_exactly() {
        let circuit = reference_circuit(1, 1).unwrap();
        let theta0: Vec<f64> = vec![0.3, -0.2, 0.15];
        let data = full_dataset(1, LabelRule::Parity).unwrap();
        let cfg = RqnnTrainConfig {
            rounds: 5,
            kappa: 0.0,
            ..RqnnTrainConfig::default()
        };
        let (report, trace) = train_rqnn(&circuit, &theta0, &data, &cfg).unwrap();
        for t in &trace.rounds {
            assert!(t.g.iter().all(|&x| x == 0.0));
            assert_eq!(t.theta, theta0);
        }
        assert_eq!(report.rounds.last().unwrap().theta, theta0);
        assert!(report.final_gradient.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn trace_round_trip_and_verify() {
        let circuit = reference_circuit(1, 1).unwrap();
        let theta0 = vec![0.4, 0.1, -0.3];
        let data = full_dataset(1, LabelRule::Majority).unwrap();
        let cfg = RqnnTrainConfig {
            rounds: 6,
            lambda: 0.02,
            seed: 77,
            ..RqnnTrainConfig::default()
        };
        let (_, trace) = train_rqnn(&circuit, &theta0, &data, &cfg).unwrap();

        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(trace, back);

        let outcome = verify_trace(&back);
        assert!(outcome.pass, "failures: {:?}", outcome.failures);
    }

    #[test]
    fn verify_flags_perturbed_theta() {
        let circuit = reference_circuit(1, 1).unwrap();
        let theta0 = vec![0.4, 0.1, -0.3];
        let data = full_dataset(1, LabelRule::Parity).unwrap();
        let cfg = RqnnTrainConfig {
            rounds: 4,
            lambda: 0.02,
            ..RqnnTrainConfig::default()
        };
        let (_, mut trace) = train_rqnn(&circuit, &theta0, &data, &cfg).unwrap();
        trace.rounds[2].theta[0] += 1e-9;
        let outcome = verify_trace(&trace);
        assert!(!outcome.pass);
        assert!(outcome
            .failures
            .iter()
            .any(|f| f.contains("round 2") || f.contains("round 3")));
    }

    #[test]
    fn corrupt_trace_lines_are_rejected() {
        assert!(matches!(
            read_trace("".as_bytes()),
            Err(CoreError::CorruptTrace(_))
        ));
        assert!(matches!(
            read_trace("{}\nnot json\n{}".as_bytes()),
            Err(CoreError::CorruptTrace(_))
        ));
    }

    #[test]
    fn f_sigma_zero_branch_is_dead() {
        // The 1-norm of any complex vector is non-negative, so f_sigma is
        // the identity on every input, the zero vector included.
        let cases = vec![
            DVector::from_vec(vec![Complex64::new(0.0, 0.0); 4]),
            DVector::from_vec(vec![
                Complex64::new(-1.0, 0.5),
                Complex64::new(0.0, -2.0),
            ]),
            DVector::from_vec(vec![Complex64::new(f64::MIN_POSITIVE, 0.0)]),
        ];
        for z in cases {
            let l1: f64 = z.iter().map(|c| c.norm()).sum();
            assert!(l1 >= 0.0);
            assert_eq!(f_sigma(&z), z);
        }
    }

    #[test]
    fn recurrent_step_normalizes() {
        let circuit = reference_circuit(1, 1).unwrap();
        let thetas = vec![0.2, -0.7, 0.4];
        let dim = 4;
        let e = basis_embedding(dim, 2).unwrap();
        let w_out = DMatrix::identity(dim, dim);
        let h0 = DVector::from_fn(dim, |i, _| Complex64::new(1.0 + i as f64, -0.5));
        let state = RecurrentState::new(h0, e, w_out).unwrap();
        assert!((state.h.norm() - 1.0).abs() < 1e-12);
        let x = DVector::from_vec(vec![Complex64::new(0.3, 0.0), Complex64::new(0.0, 0.1)]);
        let next = recurrent_step(&state, &circuit, &thetas, &x).unwrap();
        assert!((next.h.norm() - 1.0).abs() < 1e-12);
        assert_eq!(next.z, {
            let u = dense_unitary(&circuit, &thetas).unwrap();
            &u * &state.h + &state.e * &x
        });
    }

    #[test]
    fn norm_bound_single_step_is_tight() {
        let circuit = reference_circuit(1, 1).unwrap();
        let u = dense_unitary(&circuit, &[0.3, 0.1, -0.5]).unwrap();
        let z1 = DVector::from_vec(vec![
            Complex64::new(0.7, 0.1),
            Complex64::new(-0.2, 0.4),
            Complex64::new(0.0, -0.9),
            Complex64::new(0.3, 0.3),
        ]);
        let traj = vec![z1.clone(), z1];
        let report = norm_bound_check(&traj, &u).unwrap();
        assert!(report.pass);
        assert_eq!(report.entries.len(), 1);
        let e = &report.entries[0];
        // Single factor: the bound holds with equality up to rounding.
        assert!((e.lhs - e.rhs).abs() < 1e-10);
    }

    #[test]
    fn norm_bound_unit_modulus_diagonals_compose_to_one() {
        let circuit = reference_circuit(1, 1).unwrap();
        let u = dense_unitary(&circuit, &[0.9, 0.2, 0.35]).unwrap();
        // All pre-activation entries of modulus 1: every factor is unitary.
        let phase = |t: f64| Complex64::new(t.cos(), t.sin());
        let traj: Vec<DVector<Complex64>> = (0..5)
            .map(|k| DVector::from_fn(4, |i, _| phase(0.31 * (k * 4 + i) as f64)))
            .collect();
        let report = norm_bound_check(&traj, &u).unwrap();
        assert!(report.pass);
        for e in &report.entries {
            assert!((e.rhs - 1.0).abs() < 1e-12);
            assert!((e.lhs - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn norm_bound_rejects_non_unitary() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(1.0, 0.0),
        ]));
        let z = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
        assert!(norm_bound_check(&[z.clone(), z], &m).is_err());
    }
}

//! Statevector simulation of Pauli-rotation circuits.
//!
//! Gates are `U(theta) = exp(-i theta P)` for an involutory Pauli string P,
//! applied as `cos(theta) I - i sin(theta) P`. The register carries `n` data
//! wires plus one readout wire; the predicted label is the expectation of a
//! single-wire Pauli observable on the readout wire, and lies in [-1, 1].

mod circuit;
mod pauli;
mod state;

pub use circuit::{reference_circuit, reference_circuit_len, Circuit, Gate};
pub use pauli::{Pauli, PauliMasks, PauliString};
pub use state::{StateVector, MAX_DATA_WIRES};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::{stream_rng, Stream};

/// Residual imaginary part tolerated in an expectation value before the
/// result is treated as a numeric failure.
pub const IMAG_TOL: f64 = 1e-10;

/// One dataset item: a bitstring `z` with entries in {-1, +1} and its label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledString {
    pub z: Vec<i8>,
    pub label: i8,
}

impl LabeledString {
    pub fn new(z: Vec<i8>, label: i8) -> Result<LabeledString> {
        validate_bits(&z)?;
        if label != 1 && label != -1 {
            return Err(CoreError::InvalidInput(format!(
                "label must be +1 or -1, got {label}"
            )));
        }
        Ok(LabeledString { z, label })
    }
}

fn validate_bits(z: &[i8]) -> Result<()> {
    if z.is_empty() || z.len() > MAX_DATA_WIRES {
        return Err(CoreError::InvalidInput(format!(
            "input string length {} outside 1..={MAX_DATA_WIRES}",
            z.len()
        )));
    }
    for (i, &b) in z.iter().enumerate() {
        if b != 1 && b != -1 {
            return Err(CoreError::InvalidInput(format!(
                "entry {i} of input string is {b}, expected +1 or -1"
            )));
        }
    }
    Ok(())
}

/// Encodes `z` as the computational basis state `|z, 1>`: data entry `+1`
/// maps to bit 0, `-1` to bit 1, and the readout wire starts in `|1>`.
///
/// Wire 0 is the most significant index bit, the readout wire the least:
/// for n = 2, `z = (+1, -1)` yields amplitude 1 at index 0b011.
pub fn basis_state(z: &[i8]) -> Result<StateVector> {
    validate_bits(z)?;
    let n = z.len();
    let mut idx = 0usize;
    for &b in z {
        idx = (idx << 1) | usize::from(b == -1);
    }
    idx = (idx << 1) | 1; // readout wire |1>
    let mut sv = StateVector::zeros(n)?;
    sv.amps_mut()[idx] = Complex64::new(1.0, 0.0);
    Ok(sv)
}

/// Applies the Pauli string `p` to the state: a signed permutation of the
/// amplitudes. Applying the same string twice restores the input exactly.
pub fn apply_pauli(state: &StateVector, p: &PauliString) -> Result<StateVector> {
    if p.wires() != state.wires() {
        return Err(CoreError::DimensionMismatch(format!(
            "Pauli string on {} wires, state on {}",
            p.wires(),
            state.wires()
        )));
    }
    let masks = p.masks();
    let global = Complex64::i().powu(masks.y_count % 4);
    let mut out = StateVector::zeros(state.data_wires())?;
    let src_amps = state.amps();
    let dst_amps = out.amps_mut();
    for (src, &a) in src_amps.iter().enumerate() {
        let sign = if (src & masks.phase).count_ones() % 2 == 1 {
            -1.0
        } else {
            1.0
        };
        dst_amps[src ^ masks.flip] = global * sign * a;
    }
    Ok(out)
}

/// Applies `exp(-i theta P) = cos(theta) I - i sin(theta) P`; exact because
/// every Pauli string is involutory. Preserves the state norm.
pub fn apply_pauli_rotation(
    state: &StateVector,
    p: &PauliString,
    theta: f64,
) -> Result<StateVector> {
    if !theta.is_finite() {
        return Err(CoreError::Numeric(format!(
            "gate parameter must be finite, got {theta}"
        )));
    }
    let flipped = apply_pauli(state, p)?;
    let (c, s) = (theta.cos(), theta.sin());
    let mis = Complex64::new(0.0, -s);
    let mut out = StateVector::zeros(state.data_wires())?;
    let dst = out.amps_mut();
    for ((d, &a), &b) in dst.iter_mut().zip(state.amps()).zip(flipped.amps()) {
        *d = c * a + mis * b;
    }
    Ok(out)
}

/// Applies every gate of the circuit in order; `thetas[k]` drives gate `k`.
pub fn apply_sequence(state: &StateVector, circuit: &Circuit, thetas: &[f64]) -> Result<StateVector> {
    if circuit.wires() != state.wires() {
        return Err(CoreError::DimensionMismatch(format!(
            "circuit on {} wires, state on {}",
            circuit.wires(),
            state.wires()
        )));
    }
    if thetas.len() != circuit.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "{} parameters for {} gates",
            thetas.len(),
            circuit.len()
        )));
    }
    let mut sv = state.clone();
    for (gate, &theta) in circuit.gates().iter().zip(thetas) {
        sv = apply_pauli_rotation(&sv, &gate.pauli, theta)?;
    }
    Ok(sv)
}

/// Checks that `obs` acts on the readout wire alone with a single
/// non-identity factor.
fn validate_observable(obs: &PauliString, wires: usize) -> Result<()> {
    if obs.wires() != wires {
        return Err(CoreError::DimensionMismatch(format!(
            "observable on {} wires, register has {}",
            obs.wires(),
            wires
        )));
    }
    let support = obs.support();
    if support != vec![wires - 1] {
        return Err(CoreError::InvalidObservable(format!(
            "observable must act on the readout wire alone, support is {support:?}"
        )));
    }
    Ok(())
}

/// Measurement axis for the readout observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutAxis {
    X,
    Y,
    Z,
}

impl Default for ReadoutAxis {
    fn default() -> Self {
        ReadoutAxis::Z
    }
}

impl ReadoutAxis {
    pub fn pauli(self) -> Pauli {
        match self {
            ReadoutAxis::X => Pauli::X,
            ReadoutAxis::Y => Pauli::Y,
            ReadoutAxis::Z => Pauli::Z,
        }
    }
}

/// Single-wire observable on the readout wire of an `n`-data-wire register.
pub fn readout_observable(n: usize, axis: ReadoutAxis) -> Result<PauliString> {
    PauliString::single(n + 1, n, axis.pauli())
}

/// Predicted label: expectation of `obs` in the state `U |z, 1>`.
///
/// The value is real up to numerical noise; an imaginary part above
/// `IMAG_TOL` is reported as a numeric failure, otherwise discarded.
/// With all parameters zero and a Z observable the result is exactly -1.
pub fn predicted_label(
    circuit: &Circuit,
    thetas: &[f64],
    z: &[i8],
    obs: &PauliString,
) -> Result<f64> {
    if z.len() != circuit.data_wires() {
        return Err(CoreError::DimensionMismatch(format!(
            "input string of length {}, circuit has {} data wires",
            z.len(),
            circuit.data_wires()
        )));
    }
    validate_observable(obs, circuit.wires())?;
    let psi = apply_sequence(&basis_state(z)?, circuit, thetas)?;
    let obs_psi = apply_pauli(&psi, obs)?;
    let val = psi.inner(&obs_psi)?;
    if val.im.abs() > IMAG_TOL {
        return Err(CoreError::Numeric(format!(
            "expectation has imaginary part {:e}",
            val.im
        )));
    }
    // Rounding can overshoot the mathematical range by an ulp.
    Ok(val.re.clamp(-1.0, 1.0))
}

/// Empirical mean of `shots` single-shot readouts, each +1 with probability
/// `(1 + ltilde) / 2`. Deterministic for a fixed `rng_seed`.
pub fn sample_label(
    circuit: &Circuit,
    thetas: &[f64],
    z: &[i8],
    obs: &PauliString,
    shots: u64,
    rng_seed: u64,
) -> Result<f64> {
    if shots == 0 {
        return Err(CoreError::InvalidInput("shot count must be >= 1".into()));
    }
    let ltilde = predicted_label(circuit, thetas, z, obs)?;
    let p_plus = ((1.0 + ltilde) / 2.0).clamp(0.0, 1.0);
    let mut rng = stream_rng(rng_seed, Stream::Sampling);
    let mut sum = 0i64;
    for _ in 0..shots {
        let draw: f64 = rng.gen();
        sum += if draw < p_plus { 1 } else { -1 };
    }
    Ok(sum as f64 / shots as f64)
}

/// Single-item loss `1 - label * ltilde`, in [0, 2] for `|ltilde| <= 1`.
pub fn loss(label: i8, ltilde: f64) -> f64 {
    debug_assert!(ltilde.abs() <= 1.0 + IMAG_TOL);
    1.0 - f64::from(label) * ltilde
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_8};

    fn amp(sv: &StateVector, idx: usize) -> Complex64 {
        sv.amps()[idx]
    }

    #[test]
    fn basis_state_single_wire() {
        // n = 1, z = (+1): amplitude 1 at 0b01 (wire0 = 0, readout = 1).
        let sv = basis_state(&[1]).unwrap();
        assert_eq!(amp(&sv, 0b01), Complex64::new(1.0, 0.0));
        assert_eq!(sv.amps().iter().filter(|a| a.norm() > 0.0).count(), 1);
    }

    #[test]
    fn basis_state_two_wires() {
        let sv = basis_state(&[-1, -1]).unwrap();
        assert_eq!(amp(&sv, 0b111), Complex64::new(1.0, 0.0));
        let sv = basis_state(&[1, -1]).unwrap();
        assert_eq!(amp(&sv, 0b011), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn basis_state_rejects_bad_entries() {
        assert!(basis_state(&[0]).is_err());
        assert!(basis_state(&[]).is_err());
        assert!(basis_state(&[2, 1]).is_err());
    }

    #[test]
    fn x_rotation_half_pi_flips() {
        // exp(-i pi/2 X) |0> = -i |1> on the readout wire of a 1-data-wire
        // register prepared in |0,0>.
        let mut sv = StateVector::zeros(1).unwrap();
        sv.amps_mut()[0b00] = Complex64::new(1.0, 0.0);
        let p = PauliString::parse("IX").unwrap();
        let out = apply_pauli_rotation(&sv, &p, FRAC_PI_2).unwrap();
        assert!((amp(&out, 0b01) - Complex64::new(0.0, -1.0)).norm() < 1e-12);
        assert!(amp(&out, 0b00).norm() < 1e-12);
    }

    #[test]
    fn rotation_preserves_norm() {
        let sv = basis_state(&[1, -1, 1]).unwrap();
        let p = PauliString::parse("XYZI").unwrap();
        let out = apply_pauli_rotation(&sv, &p, 0.7371).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pauli_application_is_involutory() {
        let sv = {
            let mut s = basis_state(&[1, -1]).unwrap();
            // Mix a few amplitudes to get a non-basis state.
            let a = s.amps_mut();
            a[0] = Complex64::new(0.5, 0.1);
            a[3] = Complex64::new(-0.2, 0.6);
            a[5] = Complex64::new(0.3, -0.4);
            s
        };
        let p = PauliString::parse("YXZ").unwrap();
        let twice = apply_pauli(&apply_pauli(&sv, &p).unwrap(), &p).unwrap();
        for (a, b) in sv.amps().iter().zip(twice.amps()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_circuit_predicts_minus_one() {
        let c = reference_circuit(2, 1).unwrap();
        let obs = readout_observable(2, ReadoutAxis::Z).unwrap();
        let thetas = vec![0.0; c.len()];
        for z in [[1, 1], [1, -1], [-1, 1], [-1, -1]] {
            let l = predicted_label(&c, &thetas, &z, &obs).unwrap();
            assert!((l + 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn single_x_gate_expectation() {
        // One X gate on the readout wire, observable Z, theta = pi/8:
        // ltilde = -cos(2 theta) = -cos(pi/4).
        let p = PauliString::parse("IX").unwrap();
        let c = Circuit::new(1, vec![Gate { pauli: p, vertex: 1 }]).unwrap();
        let obs = readout_observable(1, ReadoutAxis::Z).unwrap();
        let l = predicted_label(&c, &[FRAC_PI_8], &[1], &obs).unwrap();
        assert!((l + (2.0 * FRAC_PI_8).cos()).abs() < 1e-12);
        assert!((l + 0.70710678).abs() < 1e-7);
    }

    #[test]
    fn observable_off_readout_rejected() {
        let c = reference_circuit(2, 1).unwrap();
        let thetas = vec![0.0; c.len()];
        // Non-identity on a data wire.
        let bad = PauliString::parse("ZII").unwrap();
        assert!(matches!(
            predicted_label(&c, &thetas, &[1, 1], &bad),
            Err(CoreError::InvalidObservable(_))
        ));
        // Two-wire support.
        let bad2 = PauliString::parse("IZZ").unwrap();
        assert!(predicted_label(&c, &thetas, &[1, 1], &bad2).is_err());
        // Identity everywhere.
        let bad3 = PauliString::identity(3).unwrap();
        assert!(predicted_label(&c, &thetas, &[1, 1], &bad3).is_err());
    }

    #[test]
    fn theta_length_mismatch_rejected() {
        let c = reference_circuit(1, 1).unwrap();
        let obs = readout_observable(1, ReadoutAxis::Z).unwrap();
        assert!(predicted_label(&c, &[0.0], &[1], &obs).is_err());
    }

    #[test]
    fn sample_label_is_deterministic_and_degenerate_at_certainty() {
        let c = reference_circuit(1, 1).unwrap();
        let obs = readout_observable(1, ReadoutAxis::Z).unwrap();
        let thetas = vec![0.0; c.len()];
        // ltilde = -1 exactly: every shot reads -1.
        let m = sample_label(&c, &thetas, &[1], &obs, 64, 5).unwrap();
        assert_eq!(m, -1.0);
        let m2 = sample_label(&c, &thetas, &[1], &obs, 64, 5).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn sample_label_rejects_zero_shots() {
        let c = reference_circuit(1, 1).unwrap();
        let obs = readout_observable(1, ReadoutAxis::Z).unwrap();
        assert!(sample_label(&c, &[0.0; 3], &[1], &obs, 0, 1).is_err());
    }

    #[test]
    fn loss_endpoints() {
        assert_eq!(loss(1, 1.0), 0.0);
        assert_eq!(loss(1, -1.0), 2.0);
        assert_eq!(loss(-1, -1.0), 0.0);
        assert_eq!(loss(-1, 0.25), 1.25);
    }

    #[test]
    fn labeled_string_validation() {
        assert!(LabeledString::new(vec![1, -1], 1).is_ok());
        assert!(LabeledString::new(vec![1, 0], 1).is_err());
        assert!(LabeledString::new(vec![1], 2).is_err());
    }
}

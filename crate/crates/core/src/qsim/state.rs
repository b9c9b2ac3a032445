use num_complex::Complex64;

use crate::error::{CoreError, Result};

/// Maximum number of data wires; the register then holds 2^(n+1) amplitudes.
pub const MAX_DATA_WIRES: usize = 12;

/// Statevector over `n` data wires plus one readout wire.
///
/// Basis index convention: wire `w` occupies index bit `n - w`, i.e. wire 0
/// is the most significant bit and the readout wire (wire `n`) the least
/// significant. A data entry `z_w = +1` encodes as bit 0, `z_w = -1` as
/// bit 1; the readout wire starts in bit 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Zero state carrier: all amplitudes zero, used internally as a scratch
    /// target. Not a valid quantum state until filled.
    pub(crate) fn zeros(n: usize) -> Result<StateVector> {
        if n == 0 || n > MAX_DATA_WIRES {
            return Err(CoreError::InvalidInput(format!(
                "data wire count {n} outside 1..={MAX_DATA_WIRES}"
            )));
        }
        Ok(StateVector {
            n,
            amps: vec![Complex64::new(0.0, 0.0); 1usize << (n + 1)],
        })
    }

    /// Number of data wires (readout wire excluded).
    pub fn data_wires(&self) -> usize {
        self.n
    }

    /// Total wire count, readout included.
    pub fn wires(&self) -> usize {
        self.n + 1
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn amps_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    /// Euclidean norm of the amplitude vector.
    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Inner product `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.n != other.n {
            return Err(CoreError::DimensionMismatch(format!(
                "states on {} and {} data wires",
                self.n, other.n
            )));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

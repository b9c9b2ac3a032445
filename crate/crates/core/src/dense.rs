//! Dense-matrix utilities for small registers.
//!
//! The recurrent diagnostics and the norm-bound checks work with explicit
//! matrices, which stays cheap only for few wires; the builders therefore
//! refuse registers above [`MAX_DENSE_WIRES`] wires.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::qsim::{apply_sequence, Circuit, StateVector};

/// Largest register (readout included) for which dense matrices are built.
pub const MAX_DENSE_WIRES: usize = 3;

/// Full unitary of the circuit at the given parameters, built column by
/// column from statevector runs. Only available for small registers.
pub fn dense_unitary(circuit: &Circuit, thetas: &[f64]) -> Result<DMatrix<Complex64>> {
    if circuit.wires() > MAX_DENSE_WIRES {
        return Err(CoreError::InvalidInput(format!(
            "dense unitary limited to {MAX_DENSE_WIRES} wires, circuit has {}",
            circuit.wires()
        )));
    }
    let dim = 1usize << circuit.wires();
    let mut cols = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut basis = StateVector::zeros(circuit.data_wires())?;
        basis.amps_mut()[j] = Complex64::new(1.0, 0.0);
        let out = apply_sequence(&basis, circuit, thetas)?;
        cols.push(DVector::from_column_slice(out.amps()));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Operator 2-norm (largest singular value).
pub fn operator_norm(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values[0]
}

/// `max_j |v_j|`: the operator 2-norm of `diag(v)`.
pub fn diag_norm(v: &DVector<Complex64>) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Deviation of `m` from unitarity, `|| m^H m - I ||_2`.
pub fn unitarity_defect(m: &DMatrix<Complex64>) -> f64 {
    let dim = m.nrows();
    let prod = m.adjoint() * m;
    let eye = DMatrix::<Complex64>::identity(dim, dim);
    operator_norm(&(prod - eye))
}

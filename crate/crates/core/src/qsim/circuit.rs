use std::collections::HashSet;

use crate::error::{CoreError, Result};
use crate::qsim::pauli::{Pauli, PauliString};

/// One Pauli-rotation gate `exp(-i theta P)`, tagged with the graph vertex
/// whose parameter drives it.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub pauli: PauliString,
    pub vertex: usize,
}

/// Ordered gate sequence on `n` data wires plus the readout wire.
///
/// Gates apply left to right: position 0 acts on the input state first.
/// Vertex tags are unique; parameters are supplied separately so one circuit
/// can be evaluated at many parameter vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n: usize, gates: Vec<Gate>) -> Result<Circuit> {
        let wires = n + 1;
        let mut seen = HashSet::new();
        for g in &gates {
            if g.pauli.wires() != wires {
                return Err(CoreError::DimensionMismatch(format!(
                    "gate at vertex {} spans {} wires, circuit has {}",
                    g.vertex,
                    g.pauli.wires(),
                    wires
                )));
            }
            if !seen.insert(g.vertex) {
                return Err(CoreError::InvalidInput(format!(
                    "duplicate vertex tag {} in circuit",
                    g.vertex
                )));
            }
        }
        Ok(Circuit { n, gates })
    }

    pub fn data_wires(&self) -> usize {
        self.n
    }

    pub fn wires(&self) -> usize {
        self.n + 1
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Position of the gate tagged with `vertex`.
    pub fn position_of(&self, vertex: usize) -> Result<usize> {
        self.gates
            .iter()
            .position(|g| g.vertex == vertex)
            .ok_or(CoreError::UnknownVertex(vertex))
    }
}

/// Builds the layered reference circuit on `n` data wires: each layer is a
/// single-wire X rotation on every wire followed by nearest-neighbour ZZ
/// rotations on wire pairs (w, w+1). The readout wire participates in both,
/// so the observable picks up data-wire correlations.
///
/// Gates are tagged with vertices 1..=L in order, L = layers * (2n + 1).
pub fn reference_circuit(n: usize, layers: usize) -> Result<Circuit> {
    if layers == 0 {
        return Err(CoreError::InvalidInput("layer count must be >= 1".into()));
    }
    let wires = n + 1;
    let mut gates = Vec::with_capacity(layers * (2 * n + 1));
    let mut vertex = 1usize;
    for _ in 0..layers {
        for w in 0..wires {
            gates.push(Gate {
                pauli: PauliString::single(wires, w, Pauli::X)?,
                vertex,
            });
            vertex += 1;
        }
        for w in 0..wires.saturating_sub(1) {
            let mut ops = vec![Pauli::I; wires];
            ops[w] = Pauli::Z;
            ops[w + 1] = Pauli::Z;
            gates.push(Gate {
                pauli: PauliString::new(ops)?,
                vertex,
            });
            vertex += 1;
        }
    }
    Circuit::new(n, gates)
}

/// Gate count of the reference circuit.
pub fn reference_circuit_len(n: usize, layers: usize) -> usize {
    layers * (2 * n + 1)
}

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CoreError, Result};

/// Single-wire Pauli operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Result<Pauli> {
        match c {
            'I' | 'i' => Ok(Pauli::I),
            'X' | 'x' => Ok(Pauli::X),
            'Y' | 'y' => Ok(Pauli::Y),
            'Z' | 'z' => Ok(Pauli::Z),
            other => Err(CoreError::InvalidInput(format!(
                "unknown Pauli letter '{other}'"
            ))),
        }
    }
}

/// Tensor product of single-wire Paulis over all wires of a register.
///
/// `ops[w]` is the factor acting on wire `w`; wire `n` (the last entry) is
/// the readout wire. Every `PauliString` squares to the identity, so
/// `exp(-i theta P)` reduces to `cos(theta) I - i sin(theta) P`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    ops: Vec<Pauli>,
}

/// Bit masks describing how a `PauliString` permutes and phases basis states
/// of a register. Wire `w` of an `m`-wire register occupies index bit
/// `m - 1 - w`, so wire 0 is the most significant bit and the readout wire
/// the least significant.
#[derive(Debug, Clone, Copy)]
pub struct PauliMasks {
    /// Bits flipped by the string (X and Y factors).
    pub flip: usize,
    /// Bits contributing a sign (Y and Z factors).
    pub phase: usize,
    /// Number of Y factors, determining the global power of i.
    pub y_count: u32,
}

impl PauliString {
    pub fn new(ops: Vec<Pauli>) -> Result<PauliString> {
        if ops.is_empty() {
            return Err(CoreError::InvalidInput(
                "Pauli string must cover at least one wire".into(),
            ));
        }
        Ok(PauliString { ops })
    }

    /// Identity string on `wires` wires.
    pub fn identity(wires: usize) -> Result<PauliString> {
        PauliString::new(vec![Pauli::I; wires])
    }

    /// String with a single non-identity factor `p` on `wire`.
    pub fn single(wires: usize, wire: usize, p: Pauli) -> Result<PauliString> {
        if wire >= wires {
            return Err(CoreError::IndexOutOfRange(format!(
                "wire {wire} outside register of {wires} wires"
            )));
        }
        let mut ops = vec![Pauli::I; wires];
        ops[wire] = p;
        PauliString::new(ops)
    }

    pub fn parse(s: &str) -> Result<PauliString> {
        let ops = s.chars().map(Pauli::from_char).collect::<Result<Vec<_>>>()?;
        PauliString::new(ops)
    }

    /// Number of wires the string is defined on (readout included).
    pub fn wires(&self) -> usize {
        self.ops.len()
    }

    pub fn op(&self, wire: usize) -> Option<Pauli> {
        self.ops.get(wire).copied()
    }

    pub fn ops(&self) -> &[Pauli] {
        &self.ops
    }

    pub fn is_identity(&self) -> bool {
        self.ops.iter().all(|&p| p == Pauli::I)
    }

    /// Wires carrying a non-identity factor.
    pub fn support(&self) -> Vec<usize> {
        self.ops
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != Pauli::I)
            .map(|(w, _)| w)
            .collect()
    }

    pub fn masks(&self) -> PauliMasks {
        let m = self.ops.len();
        let mut flip = 0usize;
        let mut phase = 0usize;
        let mut y_count = 0u32;
        for (w, &p) in self.ops.iter().enumerate() {
            let bit = 1usize << (m - 1 - w);
            match p {
                Pauli::I => {}
                Pauli::X => flip |= bit,
                Pauli::Y => {
                    flip |= bit;
                    phase |= bit;
                    y_count += 1;
                }
                Pauli::Z => phase |= bit,
            }
        }
        PauliMasks {
            flip,
            phase,
            y_count,
        }
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &p in &self.ops {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl Serialize for PauliString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        PauliString::parse(&s).map_err(D::Error::custom)
    }
}

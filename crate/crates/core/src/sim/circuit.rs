use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{RngStream, StateVector};
use crate::boundary::{apply_b_into, LinearOperatorHandle};
use crate::error::{out_of_range, Error, Result};
use crate::{oracle, C64, N_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    H(usize),
    X(usize),
    Cnot(usize, usize),
    Ccnot(usize, usize, usize),
    /// `exp(-iθZ/2)`.
    Rz(usize, f64),
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::H(q) | Gate::X(q) | Gate::Rz(q, _) => vec![q],
            Gate::Cnot(c, t) => vec![c, t],
            Gate::Ccnot(a, b, t) => vec![a, b, t],
        }
    }

    pub(crate) fn check(&self, n: usize) -> Result<()> {
        let qs = self.qubits();
        for (i, &q) in qs.iter().enumerate() {
            if q >= n || qs[..i].contains(&q) {
                return Err(Error::QubitOutOfRange { index: q, n });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Gate::H(q) => write!(f, "H {q}"),
            Gate::X(q) => write!(f, "X {q}"),
            Gate::Cnot(c, t) => write!(f, "CNOT {c} {t}"),
            Gate::Ccnot(a, b, t) => write!(f, "CCNOT {a} {b} {t}"),
            Gate::Rz(q, th) => write!(f, "RZ {q} {th}"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    pub h: usize,
    pub x: usize,
    pub cnot: usize,
    pub ccnot: usize,
    pub rz: usize,
}

/// Ordered gate list on `n` qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n: usize,
    pub gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            gates: Vec::new(),
        }
    }

    pub fn push(&mut self, g: Gate) -> Result<()> {
        g.check(self.n)?;
        self.gates.push(g);
        Ok(())
    }

    pub fn counts(&self) -> GateCounts {
        let mut c = GateCounts::default();
        for g in &self.gates {
            match g {
                Gate::H(_) => c.h += 1,
                Gate::X(_) => c.x += 1,
                Gate::Cnot(..) => c.cnot += 1,
                Gate::Ccnot(..) => c.ccnot += 1,
                Gate::Rz(..) => c.rz += 1,
            }
        }
        c
    }

    fn layered_depth(&self, weight: impl Fn(&Gate) -> usize) -> usize {
        let mut level = vec![0usize; self.n];
        for g in &self.gates {
            let qs = g.qubits();
            let start = qs.iter().map(|&q| level[q]).max().unwrap_or(0);
            let end = start + weight(g);
            qs.iter().for_each(|&q| level[q] = end);
        }
        level.into_iter().max().unwrap_or(0)
    }

    /// Longest dependency chain counting every gate.
    pub fn depth(&self) -> usize {
        self.layered_depth(|_| 1)
    }

    /// Longest dependency chain counting only CNOT gates.
    pub fn cnot_depth(&self) -> usize {
        self.layered_depth(|g| usize::from(matches!(g, Gate::Cnot(..))))
    }

    /// One gate per line, e.g. `H 3`, `CNOT 0 4`, `RZ 2 0.001`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for g in &self.gates {
            s.push_str(&g.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_text(n: usize, text: &str) -> Result<Self> {
        let mut c = Self::new(n);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let err = || Error::Parse {
                line: i + 1,
                msg: format!("bad gate '{line}'"),
            };
            let q = |j: usize| -> Result<usize> {
                parts.get(j).and_then(|p| p.parse().ok()).ok_or_else(err)
            };
            let g = match parts[0] {
                "H" if parts.len() == 2 => Gate::H(q(1)?),
                "X" if parts.len() == 2 => Gate::X(q(1)?),
                "CNOT" if parts.len() == 3 => Gate::Cnot(q(1)?, q(2)?),
                "CCNOT" if parts.len() == 4 => Gate::Ccnot(q(1)?, q(2)?, q(3)?),
                "RZ" if parts.len() == 3 => Gate::Rz(q(1)?, parts[2].parse().map_err(|_| err())?),
                _ => return Err(err()),
            };
            c.push(g)?;
        }
        Ok(c)
    }
}

/// Applies every gate in order.
pub fn run_circuit(mut state: StateVector, c: &Circuit) -> Result<StateVector> {
    if state.n() != c.n {
        return Err(Error::LengthMismatch {
            expected: c.n,
            found: state.n(),
        });
    }
    for g in &c.gates {
        state.apply(g)?;
    }
    Ok(state)
}

/// Column `b` of the normalized `2^n` Hadamard matrix.
pub fn hadamard_column(n: usize, b: usize) -> Vec<C64> {
    let a = (0.5f64).powf(n as f64 / 2.0);
    (0..1usize << n)
        .map(|z| {
            if (b & z).count_ones() & 1 == 1 {
                C64::new(-a, 0.0)
            } else {
                C64::new(a, 0.0)
            }
        })
        .collect()
}

/// `X` on the set bits of `b` followed by `H` on every qubit.
pub fn hadamard_probe_circuit(n: usize, b: usize) -> Circuit {
    let mut c = Circuit::new(n);
    for q in 0..n {
        if b >> (n - 1 - q) & 1 == 1 {
            c.gates.push(Gate::X(q));
        }
    }
    c.gates.extend((0..n).map(Gate::H));
    c
}

/// Draws a uniform column index `b` and returns it with the probe state.
pub fn prepare_hadamard_probe(n: usize, rng: &mut RngStream) -> Result<(StateVector, usize)> {
    if n == 0 || n > N_MAX {
        return Err(out_of_range("n", n as i64, 1, N_MAX as i64));
    }
    let b = rng.below(1 << n) as usize;
    Ok((StateVector::from_amps(n, hadamard_column(n, b))?, b))
}

/// First-order product `Π_i exp(-i·term_i·t)` on `n` data qubits plus one
/// ancilla (qubit `n`) that accumulates the parity of the `Z` prefix.
pub fn build_trotter_circuit(n: usize, t: f64) -> Result<Circuit> {
    if n == 0 || n > N_MAX {
        return Err(out_of_range("n", n as i64, 1, N_MAX as i64));
    }
    let anc = n;
    let mut c = Circuit::new(n + 1);
    for i in 0..n {
        c.gates.push(Gate::H(i));
        c.gates.push(Gate::Cnot(i, anc));
        c.gates.push(Gate::Rz(anc, 2.0 * t));
        c.gates.push(Gate::Cnot(i, anc));
        c.gates.push(Gate::H(i));
        if i + 1 < n {
            c.gates.push(Gate::Cnot(i, anc));
        }
    }
    for i in (0..n.saturating_sub(1)).rev() {
        c.gates.push(Gate::Cnot(i, anc));
    }
    Ok(c)
}

/// Action of `c` on the first `n_data` qubits with all remaining qubits
/// starting in `|0⟩`. Also returns the largest amplitude norm left on
/// nonzero ancilla states.
pub fn circuit_data_unitary(c: &Circuit, n_data: usize) -> Result<(DMatrix<C64>, f64)> {
    let extra = c.n - n_data;
    let dim = 1usize << n_data;
    let mut u = DMatrix::zeros(dim, dim);
    let mut leak = 0.0f64;
    for z in 0..dim {
        let s = run_circuit(StateVector::basis(c.n, z << extra)?, c)?;
        for (idx, a) in s.amps.iter().enumerate() {
            if idx & ((1 << extra) - 1) == 0 {
                u[(idx >> extra, z)] = *a;
            } else {
                leak = leak.max(a.norm());
            }
        }
    }
    Ok((u, leak))
}

/// Largest dimension handled by the dense Trotter error oracle.
pub const TROTTER_ORACLE_N_MAX: usize = 8;

/// Operator-norm distance between the Trotter circuit and `exp(-iBt)`.
pub fn trotter_error(n: usize, t: f64) -> Result<f64> {
    if n == 0 || n > TROTTER_ORACLE_N_MAX {
        return Err(Error::TooLarge {
            what: "trotter oracle qubits",
            dim: n,
            limit: TROTTER_ORACLE_N_MAX,
        });
    }
    let (u, _) = circuit_data_unitary(&build_trotter_circuit(n, t)?, n)?;
    let b = LinearOperatorHandle::new(n, "B", None, move |x, y| apply_b_into(n, x, y));
    let exact = oracle::dense_expm(&b, t)?;
    Ok(oracle::operator_norm(&(u - exact)))
}

//! Statevector simulation: gates, probes, the Trotter circuit and the
//! measurement-based projectors.

mod circuit;
mod projection;
mod rng;

pub use circuit::{
    build_trotter_circuit, circuit_data_unitary, hadamard_column, hadamard_probe_circuit,
    prepare_hadamard_probe, run_circuit, trotter_error, Circuit, Gate, GateCounts,
};
pub use projection::{
    attempts_until_success, complex_projection_round_circuit, count_register_qubits,
    project_complex_sampled, project_order_sampled, project_order_until, round_robin_schedule,
    ComplexProjector, OrderOutcome, ProjectionOutcome, ProjectionStats, MAX_ATTEMPTS,
    ZERO_PROBABILITY,
};
pub use rng::RngStream;

use crate::error::{out_of_range, Error, Result};
use crate::{C64, N_MAX};

/// `2^n` amplitudes plus the accumulated post-selection probability.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    pub amps: Vec<C64>,
    pub norm_tracking: f64,
}

/// Qubit count limit for simulated registers (data plus ancillas).
pub const QUBIT_MAX: usize = N_MAX + 6;

impl StateVector {
    /// `|0…0⟩` on `n` qubits.
    pub fn zero(n: usize) -> Result<Self> {
        Self::basis(n, 0)
    }

    pub fn basis(n: usize, idx: usize) -> Result<Self> {
        if n > QUBIT_MAX {
            return Err(out_of_range("qubits", n as i64, 0, QUBIT_MAX as i64));
        }
        if idx >= 1 << n {
            return Err(out_of_range("basis index", idx as i64, 0, (1i64 << n) - 1));
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        amps[idx] = C64::new(1.0, 0.0);
        Ok(Self {
            n,
            amps,
            norm_tracking: 1.0,
        })
    }

    pub fn from_amps(n: usize, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != 1 << n {
            return Err(Error::LengthMismatch {
                expected: 1 << n,
                found: amps.len(),
            });
        }
        Ok(Self {
            n,
            amps,
            norm_tracking: 1.0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Rescales to unit norm and returns the previous norm.
    pub fn normalize(&mut self) -> f64 {
        let nrm = self.norm_sqr().sqrt();
        if nrm > 0.0 {
            self.amps.iter_mut().for_each(|a| *a /= nrm);
        }
        nrm
    }

    fn bit(&self, q: usize) -> usize {
        1 << (self.n - 1 - q)
    }

    /// Measures qubit `q`, collapsing and renormalizing the state.
    pub fn measure_qubit(&mut self, q: usize, rng: &mut RngStream) -> Result<u8> {
        if q >= self.n {
            return Err(Error::QubitOutOfRange {
                index: q,
                n: self.n,
            });
        }
        let bit = self.bit(q);
        let total = self.norm_sqr();
        let p1: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        let outcome = u8::from(rng.uniform() * total < p1);
        let keep = if outcome == 1 { bit } else { 0 };
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & bit != keep {
                *a = C64::new(0.0, 0.0);
            }
        }
        let p = if outcome == 1 { p1 } else { total - p1 } / total;
        self.norm_tracking *= p;
        self.normalize();
        Ok(outcome)
    }

    /// Measures then flips qubit `q` back to `|0⟩`.
    pub fn measure_and_reset(&mut self, q: usize, rng: &mut RngStream) -> Result<u8> {
        let m = self.measure_qubit(q, rng)?;
        if m == 1 {
            self.apply(&Gate::X(q))?;
        }
        Ok(m)
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.check(self.n)?;
        let amps = &mut self.amps;
        match *gate {
            Gate::H(q) => {
                let b = 1 << (self.n - 1 - q);
                let s = std::f64::consts::FRAC_1_SQRT_2;
                for i in 0..amps.len() {
                    if i & b == 0 {
                        let (x, y) = (amps[i], amps[i | b]);
                        amps[i] = (x + y) * s;
                        amps[i | b] = (x - y) * s;
                    }
                }
            }
            Gate::X(q) => {
                let b = 1 << (self.n - 1 - q);
                for i in 0..amps.len() {
                    if i & b == 0 {
                        amps.swap(i, i | b);
                    }
                }
            }
            Gate::Cnot(c, t) => {
                let (bc, bt) = (1 << (self.n - 1 - c), 1 << (self.n - 1 - t));
                for i in 0..amps.len() {
                    if i & bc != 0 && i & bt == 0 {
                        amps.swap(i, i | bt);
                    }
                }
            }
            Gate::Ccnot(c1, c2, t) => {
                let bc = (1 << (self.n - 1 - c1)) | (1 << (self.n - 1 - c2));
                let bt = 1 << (self.n - 1 - t);
                for i in 0..amps.len() {
                    if i & bc == bc && i & bt == 0 {
                        amps.swap(i, i | bt);
                    }
                }
            }
            Gate::Rz(q, theta) => {
                let b = 1 << (self.n - 1 - q);
                let p0 = C64::from_polar(1.0, -theta / 2.0);
                let p1 = C64::from_polar(1.0, theta / 2.0);
                for (i, a) in amps.iter_mut().enumerate() {
                    *a *= if i & b == 0 { p0 } else { p1 };
                }
            }
        }
        Ok(())
    }
}

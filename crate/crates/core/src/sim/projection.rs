use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Circuit, Gate, RngStream, StateVector};
use crate::complex::Skeleton;
use crate::error::{Error, Result};
use crate::C64;

/// Attempts before a repeat-until-success projection gives up.
pub const MAX_ATTEMPTS: u64 = 1_000_000_000;

/// Success probabilities below this are treated as a zero projection.
pub const ZERO_PROBABILITY: f64 = 1e-12;

/// Number of independent attempts up to and including the first success,
/// drawn from the geometric distribution with success probability `p`.
/// `None` when the draw exceeds [`MAX_ATTEMPTS`].
pub fn attempts_until_success(p: f64, rng: &mut RngStream) -> Option<u64> {
    if p >= 1.0 {
        return Some(1);
    }
    let u = 1.0 - rng.uniform();
    let a = (u.ln() / (-p).ln_1p()).floor() + 1.0;
    (a <= MAX_ATTEMPTS as f64).then_some(a as u64)
}

/// Largest `n` for which the per-index first-failing-round table is cached.
const TABLE_N_MAX: usize = 20;

/// Round-robin 1-factorization of `K_n`: `n-1` rounds (`n` rounded up to even)
/// of disjoint pairs. Pairs touching the pad vertex of odd `n` are dropped.
pub fn round_robin_schedule(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n < 2 {
        return Vec::new();
    }
    let m = n + n % 2;
    let last = m - 1;
    (0..last)
        .map(|r| {
            let mut pairs = vec![(r, last)];
            for i in 1..m / 2 {
                pairs.push(((r + i) % last, (r + last - i) % last));
            }
            pairs
                .into_iter()
                .filter(|&(a, b)| a < n && b < n)
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect()
        })
        .collect()
}

/// Qubits needed to hold a weight count of `n` data qubits.
pub fn count_register_qubits(n: usize) -> usize {
    (usize::BITS - n.leading_zeros()) as usize
}

/// Counters for repeat-until-success projections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectionStats {
    pub calls: u64,
    pub attempts: u64,
    pub zero_projections: u64,
    pub exhausted: u64,
}

impl ProjectionStats {
    pub fn merge(&mut self, o: &Self) {
        self.calls += o.calls;
        self.attempts += o.attempts;
        self.zero_projections += o.zero_projections;
        self.exhausted += o.exhausted;
    }
}

/// Result of one pass of the complex projection.
#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    pub state: StateVector,
    pub success: bool,
    /// Flag register readings, one per executed round.
    pub outcomes: Vec<u64>,
}

/// Mid-circuit-measurement emulation of `P_Γ`.
///
/// Round `r` applies a Toffoli into flag slot `s` for every non-adjacent
/// pair in slot `s` of the round-robin schedule, then measures the flags.
/// Outcome probabilities are computed from the marginal mass of the state.
#[derive(Debug, Clone)]
pub struct ComplexProjector {
    n: usize,
    /// Per round: (flag slot, index-space mask of the pair) for non-adjacent pairs.
    rounds: Vec<Vec<(usize, usize)>>,
    /// First failing round per basis index; `u8::MAX` for members.
    first_fail: Option<Vec<u8>>,
}

impl ComplexProjector {
    pub fn new(g: &Skeleton) -> Self {
        let n = g.n();
        let rounds: Vec<Vec<(usize, usize)>> = round_robin_schedule(n)
            .into_iter()
            .map(|pairs| {
                pairs
                    .into_iter()
                    .enumerate()
                    .filter(|&(_, (a, b))| !g.adjacent(a, b))
                    .map(|(s, (a, b))| (s, (1 << (n - 1 - a)) | (1 << (n - 1 - b))))
                    .collect()
            })
            .collect();
        let mut p = Self {
            n,
            rounds,
            first_fail: None,
        };
        if n <= TABLE_N_MAX {
            let t = (0..1usize << n)
                .map(|idx| p.scan_fail_round(idx).map_or(u8::MAX, |r| r as u8))
                .collect();
            p.first_fail = Some(t);
        }
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn round_count(&self) -> usize {
        self.rounds.len()
    }

    /// Number of Toffoli gates emitted across all rounds.
    pub fn toffoli_count(&self) -> usize {
        self.rounds.iter().map(Vec::len).sum()
    }

    fn scan_fail_round(&self, idx: usize) -> Option<usize> {
        self.rounds
            .iter()
            .position(|r| r.iter().any(|&(_, m)| idx & m == m))
    }

    fn fail_round(&self, idx: usize) -> Option<usize> {
        match &self.first_fail {
            Some(t) => (t[idx] != u8::MAX).then(|| t[idx] as usize),
            None => self.scan_fail_round(idx),
        }
    }

    fn pattern(&self, idx: usize, r: usize) -> u64 {
        self.rounds[r]
            .iter()
            .filter(|&&(_, m)| idx & m == m)
            .fold(0, |p, &(s, _)| p | 1 << s)
    }

    /// Total mass and the mass surviving rounds `0..=r` for each `r`.
    fn surviving_mass(&self, amps: &[C64]) -> (f64, Vec<f64>) {
        let rounds = self.rounds.len();
        let mut failed = vec![0.0; rounds];
        let mut total = 0.0;
        for (idx, a) in amps.iter().enumerate() {
            let w = a.norm_sqr();
            if w == 0.0 {
                continue;
            }
            total += w;
            if let Some(r) = self.fail_round(idx) {
                failed[r] += w;
            }
        }
        let mut remaining = Vec::with_capacity(rounds);
        let mut acc = total;
        for f in failed {
            acc -= f;
            remaining.push(acc.max(0.0));
        }
        (total, remaining)
    }

    /// One measured pass. The state is collapsed on the observed outcomes and
    /// `norm_tracking` is multiplied by their probability.
    pub fn attempt(&self, state: &StateVector, rng: &mut RngStream) -> ProjectionOutcome {
        let mut s = state.clone();
        let (total, remaining) = self.surviving_mass(&s.amps);
        let mut outcomes = Vec::new();
        if total == 0.0 {
            return ProjectionOutcome {
                state: s,
                success: false,
                outcomes,
            };
        }
        let mut before = total;
        for (r, &after) in remaining.iter().enumerate() {
            let p0 = after / before;
            if p0 >= 1.0 {
                // flags read zero with certainty
                outcomes.push(0);
                continue;
            }
            if rng.uniform() < p0 {
                outcomes.push(0);
                before = after;
                continue;
            }
            // nonzero flag pattern: sample it from the failing mass
            let mut dist: BTreeMap<u64, f64> = BTreeMap::new();
            for (idx, a) in s.amps.iter().enumerate() {
                if a.norm_sqr() > 0.0 && self.fail_round(idx) == Some(r) {
                    *dist.entry(self.pattern(idx, r)).or_default() += a.norm_sqr();
                }
            }
            let keys: Vec<u64> = dist.keys().copied().collect();
            let weights: Vec<f64> = dist.values().copied().collect();
            let pick = keys[rng.weighted(&weights)];
            for (idx, a) in s.amps.iter_mut().enumerate() {
                let keep = self.fail_round(idx) == Some(r) && self.pattern(idx, r) == pick;
                if !keep {
                    *a = C64::new(0.0, 0.0);
                }
            }
            s.norm_tracking *= dist[&pick] / before;
            s.normalize();
            outcomes.push(pick);
            return ProjectionOutcome {
                state: s,
                success: false,
                outcomes,
            };
        }
        for (idx, a) in s.amps.iter_mut().enumerate() {
            if self.fail_round(idx).is_some() {
                *a = C64::new(0.0, 0.0);
            }
        }
        s.norm_tracking *= before / total;
        s.normalize();
        ProjectionOutcome {
            state: s,
            success: true,
            outcomes,
        }
    }

    /// Repeat-until-success projection of an unnormalized vector.
    ///
    /// Every attempt restarts from the same prepared state, so the attempt
    /// count is geometric with `p = ‖P_Γ v‖²/‖v‖²`. The surviving normalized
    /// state rescaled by `‖v‖·√p` is `P_Γ v`, which is returned directly.
    pub fn project(
        &self,
        v: &[C64],
        rng: &mut RngStream,
        stats: &mut ProjectionStats,
    ) -> Result<Vec<C64>> {
        stats.calls += 1;
        let mut total = 0.0;
        let mut kept = 0.0;
        for (idx, a) in v.iter().enumerate() {
            let w = a.norm_sqr();
            total += w;
            if self.fail_round(idx).is_none() {
                kept += w;
            }
        }
        let mut out = v.to_vec();
        if total == 0.0 {
            return Ok(out);
        }
        let p = kept / total;
        if p < ZERO_PROBABILITY {
            stats.zero_projections += 1;
            out.fill(C64::new(0.0, 0.0));
            return Ok(out);
        }
        // attempts restart from the same state, so they are i.i.d.
        let drawn = attempts_until_success(p, rng);
        stats.attempts += drawn.unwrap_or(MAX_ATTEMPTS);
        if drawn.is_none() {
            stats.exhausted += 1;
            return Err(Error::InvalidParameter {
                name: "projection",
                msg: format!("no success after {MAX_ATTEMPTS} attempts (p = {p})"),
            });
        }
        for (idx, a) in out.iter_mut().enumerate() {
            if self.fail_round(idx).is_some() {
                *a = C64::new(0.0, 0.0);
            }
        }
        Ok(out)
    }
}

/// One pass of the complex projection on a normalized state.
pub fn project_complex_sampled(
    state: &StateVector,
    g: &Skeleton,
    rng: &mut RngStream,
) -> Result<ProjectionOutcome> {
    if state.n() != g.n() {
        return Err(Error::LengthMismatch {
            expected: g.n(),
            found: state.n(),
        });
    }
    Ok(ComplexProjector::new(g).attempt(state, rng))
}

/// Toffolis of round `r` on `n` data qubits followed by `⌈n/2⌉` flag qubits.
pub fn complex_projection_round_circuit(g: &Skeleton, r: usize) -> Circuit {
    let n = g.n();
    let mut c = Circuit::new(n + n.div_ceil(2));
    if let Some(pairs) = round_robin_schedule(n).get(r) {
        for (s, &(a, b)) in pairs.iter().enumerate() {
            if !g.adjacent(a, b) {
                c.gates.push(Gate::Ccnot(a, b, n + s));
            }
        }
    }
    c
}

#[derive(Debug, Clone)]
pub struct OrderOutcome {
    pub state: StateVector,
    /// Measured weight minus one (`-1` for the empty simplex).
    pub measured_k: i64,
    pub success: bool,
}

fn weight_masses(amps: &[C64], n: usize) -> Vec<f64> {
    let mut mass = vec![0.0; n + 1];
    for (idx, a) in amps.iter().enumerate() {
        mass[idx.count_ones() as usize] += a.norm_sqr();
    }
    mass
}

/// Measures the weight register and collapses onto the observed weight.
pub fn project_order_sampled(
    state: &StateVector,
    rng: &mut RngStream,
    want_k: Option<usize>,
) -> OrderOutcome {
    let n = state.n();
    let mut s = state.clone();
    let mass = weight_masses(&s.amps, n);
    let total: f64 = mass.iter().sum();
    let w = rng.weighted(&mass);
    for (idx, a) in s.amps.iter_mut().enumerate() {
        if idx.count_ones() as usize != w {
            *a = C64::new(0.0, 0.0);
        }
    }
    if total > 0.0 {
        s.norm_tracking *= mass[w] / total;
    }
    s.normalize();
    let measured_k = w as i64 - 1;
    OrderOutcome {
        state: s,
        measured_k,
        success: want_k.is_none_or(|k| k as i64 == measured_k),
    }
}

/// Repeat-until-success order projection of an unnormalized vector.
pub fn project_order_until(
    v: &[C64],
    n: usize,
    k: usize,
    rng: &mut RngStream,
    stats: &mut ProjectionStats,
) -> Result<Vec<C64>> {
    stats.calls += 1;
    let mass = weight_masses(v, n);
    let total: f64 = mass.iter().sum();
    let mut out = v.to_vec();
    if total == 0.0 {
        return Ok(out);
    }
    let p = mass.get(k + 1).copied().unwrap_or(0.0) / total;
    if p < ZERO_PROBABILITY {
        stats.zero_projections += 1;
        out.fill(C64::new(0.0, 0.0));
        return Ok(out);
    }
    let drawn = attempts_until_success(p, rng);
    stats.attempts += drawn.unwrap_or(MAX_ATTEMPTS);
    if drawn.is_none() {
        stats.exhausted += 1;
        return Err(Error::InvalidParameter {
            name: "projection",
            msg: format!("no success after {MAX_ATTEMPTS} attempts (p = {p})"),
        });
    }
    for (idx, a) in out.iter_mut().enumerate() {
        if idx.count_ones() as usize != k + 1 {
            *a = C64::new(0.0, 0.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{project_complex_exact, project_order};

    #[test]
    fn geometric_attempts() {
        let mut rng = RngStream::new(3);
        assert_eq!(attempts_until_success(1.0, &mut rng), Some(1));
        for p in [0.5, 0.01] {
            let draws = 20_000;
            let mean = (0..draws)
                .map(|_| attempts_until_success(p, &mut rng).unwrap() as f64)
                .sum::<f64>()
                / draws as f64;
            let sd = ((1.0 - p) / (p * p) / draws as f64).sqrt();
            assert!((mean - 1.0 / p).abs() < 5.0 * sd, "p={p} mean={mean}");
        }
        assert_eq!(attempts_until_success(1e-300, &mut rng), None);
    }

    fn uniform_weight(n: usize, w: usize) -> StateVector {
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        let idx: Vec<usize> = (0..1usize << n)
            .filter(|i| i.count_ones() as usize == w)
            .collect();
        let a = 1.0 / (idx.len() as f64).sqrt();
        idx.iter().for_each(|&i| amps[i] = C64::new(a, 0.0));
        StateVector::from_amps(n, amps).unwrap()
    }

    #[test]
    fn schedule_covers_all_pairs_once() {
        for n in 1..=9 {
            let s = round_robin_schedule(n);
            let mut seen = std::collections::HashSet::new();
            for round in &s {
                let mut used = 0u64;
                for &(a, b) in round {
                    assert!(a < b && b < n);
                    assert_eq!(used & (1 << a | 1 << b), 0, "pairs in a round are disjoint");
                    used |= 1 << a | 1 << b;
                    assert!(seen.insert((a, b)));
                }
            }
            assert_eq!(seen.len(), n * (n - 1) / 2);
            if n >= 2 {
                assert_eq!(s.len(), n - 1 + n % 2);
            }
        }
    }

    #[test]
    fn complete_skeleton_always_succeeds() {
        let g = Skeleton::complete(4).unwrap();
        let s = uniform_weight(4, 2);
        let out = project_complex_sampled(&s, &g, &mut RngStream::new(0)).unwrap();
        assert!(out.success);
        assert_eq!(out.state.amps, s.amps);
        assert_eq!(out.state.norm_tracking, 1.0);
    }

    #[test]
    fn path_success_probability_two_thirds() {
        let g = Skeleton::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let s = uniform_weight(3, 2);
        let mut hits = 0;
        let trials = 3000;
        for seed in 0..trials {
            let out = project_complex_sampled(&s, &g, &mut RngStream::new(seed)).unwrap();
            if out.success {
                hits += 1;
                assert!((out.state.norm_tracking - 2.0 / 3.0).abs() < 1e-12);
                assert_eq!(out.state.amps[0b101], C64::new(0.0, 0.0));
            }
        }
        let f = hits as f64 / trials as f64;
        assert!(
            (f - 2.0 / 3.0).abs() < 3.0 * (2.0 / 9.0 / trials as f64).sqrt() + 1e-9,
            "{f}"
        );
    }

    #[test]
    fn empty_skeleton_never_succeeds() {
        let g = Skeleton::empty(4).unwrap();
        for seed in 0..50 {
            let out = project_complex_sampled(&uniform_weight(4, 2), &g, &mut RngStream::new(seed))
                .unwrap();
            assert!(!out.success);
        }
    }

    #[test]
    fn projector_matches_toffoli_circuit() {
        let g = Skeleton::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let proj = ComplexProjector::new(&g);
        let s = uniform_weight(4, 2);
        // mass surviving each round, from the explicit Toffoli circuits
        let mut state = s.clone();
        for r in 0..proj.round_count() {
            let c = complex_projection_round_circuit(&g, r);
            let mut padded = vec![C64::new(0.0, 0.0); 1 << c.n];
            for (i, a) in state.amps.iter().enumerate() {
                padded[i << (c.n - 4)] = *a;
            }
            let out = super::super::run_circuit(StateVector::from_amps(c.n, padded).unwrap(), &c)
                .unwrap();
            let zero_flags: f64 = out
                .amps
                .iter()
                .enumerate()
                .filter(|(i, _)| i & ((1 << (c.n - 4)) - 1) == 0)
                .map(|(_, a)| a.norm_sqr())
                .sum();
            let want: f64 = state
                .amps
                .iter()
                .enumerate()
                .filter(|&(i, _)| proj.fail_round(i) != Some(r))
                .map(|(_, a)| a.norm_sqr())
                .sum();
            assert!((zero_flags - want).abs() < 1e-12);
            // keep only flag-zero branch for the next round
            for (i, a) in state.amps.iter_mut().enumerate() {
                if proj.fail_round(i) == Some(r) {
                    *a = C64::new(0.0, 0.0);
                }
            }
        }
    }

    #[test]
    fn repeat_until_success_returns_exact_projection() {
        let g = Skeleton::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)]).unwrap();
        let proj = ComplexProjector::new(&g);
        let v: Vec<C64> = (0..32).map(|i| C64::new((i as f64).sin(), 0.0)).collect();
        let mut stats = ProjectionStats::default();
        let got = proj
            .project(&v, &mut RngStream::new(4), &mut stats)
            .unwrap();
        let want = project_complex_exact(&v, &g).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).norm() < 1e-12);
        }
        let got = project_order_until(&v, 5, 1, &mut RngStream::new(4), &mut stats).unwrap();
        for (a, b) in got.iter().zip(project_order(&v, 1)) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(stats.attempts >= 2);
    }

    #[test]
    fn order_measurement() {
        let u = StateVector::from_amps(2, vec![C64::new(0.5, 0.0); 4]).unwrap();
        let mut hits = 0;
        for seed in 0..2000 {
            let o = project_order_sampled(&u, &mut RngStream::new(seed), Some(0));
            if o.measured_k == 0 {
                hits += 1;
                assert!(o.success);
                assert!((o.state.norm_tracking - 0.5).abs() < 1e-12);
            }
        }
        assert!((hits as f64 / 2000.0 - 0.5).abs() < 0.05);
        let b = StateVector::basis(2, 0b11).unwrap();
        let o = project_order_sampled(&b, &mut RngStream::new(0), Some(0));
        assert_eq!(o.measured_k, 1);
        assert!(!o.success);
        assert_eq!(count_register_qubits(7), 3);
        assert_eq!(count_register_qubits(8), 4);
    }
}

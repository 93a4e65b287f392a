//! Pauli-string form of the boundary operator, projectors and Laplacians.
//!
//! Basis index convention: vertex `i` is the `i`-th tensor factor from the
//! left, i.e. bit `n-1-i` of the statevector index.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::ops::{AddAssign, Neg};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::complex::Skeleton;
use crate::error::{out_of_range, Error, Result};
use crate::oracle;
use crate::{C64, N_DENSE_MAX, N_MAX};

/// Largest operator dimension that may be materialized densely.
pub const DENSE_DIM_MAX: usize = 1 << N_DENSE_MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Z,
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pauli::I => "I",
            Pauli::X => "X",
            Pauli::Z => "Z",
        })
    }
}

/// Tensor product of single-qubit Paulis, leftmost factor first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliString(pub Vec<Pauli>);

impl PauliString {
    /// (x mask, z mask) over statevector index bits.
    pub fn masks(&self) -> (usize, usize) {
        let n = self.0.len();
        let mut x = 0;
        let mut z = 0;
        for (q, p) in self.0.iter().enumerate() {
            let bit = 1usize << (n - 1 - q);
            match p {
                Pauli::X => x |= bit,
                Pauli::Z => z |= bit,
                Pauli::I => {}
            }
        }
        (x, z)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|p| write!(f, "{p}"))
    }
}

/// The `n` Pauli strings whose sum is the Dirac operator `B`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliTermList {
    pub n: usize,
    pub terms: Vec<PauliString>,
}

/// Term `i` is `Z^{⊗i} ⊗ X ⊗ I^{⊗(n-1-i)}`.
pub fn boundary_terms(n: usize) -> Result<PauliTermList> {
    if n == 0 || n > N_MAX {
        return Err(out_of_range("n", n as i64, 1, N_MAX as i64));
    }
    let terms = (0..n)
        .map(|i| {
            PauliString(
                (0..n)
                    .map(|q| match q.cmp(&i) {
                        std::cmp::Ordering::Less => Pauli::Z,
                        std::cmp::Ordering::Equal => Pauli::X,
                        std::cmp::Ordering::Greater => Pauli::I,
                    })
                    .collect(),
            )
        })
        .collect();
    Ok(PauliTermList { n, terms })
}

fn check_len(len: usize, n: usize) -> Result<()> {
    if len != 1usize << n {
        return Err(Error::LengthMismatch {
            expected: 1 << n,
            found: len,
        });
    }
    Ok(())
}

/// Applies `Σ_terms P` by generic Pauli-string action.
pub fn apply_b(state: &[C64], terms: &PauliTermList) -> Result<Vec<C64>> {
    check_len(state.len(), terms.n)?;
    let masks: Vec<(usize, usize)> = terms.terms.iter().map(PauliString::masks).collect();
    let mut out = vec![C64::new(0.0, 0.0); state.len()];
    for (idx, &a) in state.iter().enumerate() {
        if a == C64::new(0.0, 0.0) {
            continue;
        }
        for &(x, z) in &masks {
            let v = if (idx & z).count_ones() & 1 == 1 {
                -a
            } else {
                a
            };
            out[idx ^ x] += v;
        }
    }
    Ok(out)
}

/// Adds `B·input` into `out` using the fixed boundary-term structure.
/// Zero entries of `input` are skipped.
pub fn apply_b_into<T>(n: usize, input: &[T], out: &mut [T])
where
    T: Copy + Default + PartialEq + Neg<Output = T> + AddAssign,
{
    let zero = T::default();
    for (idx, &a) in input.iter().enumerate() {
        if a == zero {
            continue;
        }
        let mut parity = 0usize;
        for p in (0..n).rev() {
            let target = idx ^ (1 << p);
            out[target] += if parity == 1 { -a } else { a };
            parity ^= (idx >> p) & 1;
        }
    }
}

/// Zeroes amplitudes whose index weight is not `k + 1`; no renormalization.
pub fn project_order(state: &[C64], k: usize) -> Vec<C64> {
    let mut out = state.to_vec();
    project_order_in_place(&mut out, k);
    out
}

pub fn project_order_in_place<T: Default>(state: &mut [T], k: usize) {
    for (idx, a) in state.iter_mut().enumerate() {
        if idx.count_ones() as usize != k + 1 {
            *a = T::default();
        }
    }
}

/// Zeroes amplitudes of non-simplices; no renormalization.
pub fn project_complex_exact(state: &[C64], g: &Skeleton) -> Result<Vec<C64>> {
    check_len(state.len(), g.n())?;
    let mut out = state.to_vec();
    project_complex_in_place(&mut out, g);
    Ok(out)
}

pub fn project_complex_in_place<T: Default>(state: &mut [T], g: &Skeleton) {
    if g.is_complete() {
        return;
    }
    for (idx, a) in state.iter_mut().enumerate() {
        if !g.contains_index(idx) {
            *a = T::default();
        }
    }
}

type ApplyFn = dyn Fn(&[C64], &mut [C64]) + Send + Sync;

/// Matrix-free linear operator on `2^n` amplitudes.
#[derive(Clone)]
pub struct LinearOperatorHandle {
    n: usize,
    apply: Arc<ApplyFn>,
    support: Option<Arc<Vec<usize>>>,
    label: String,
}

impl fmt::Debug for LinearOperatorHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearOperatorHandle")
            .field("label", &self.label)
            .field("dim", &self.dim())
            .field("support", &self.support.as_ref().map(|s| s.len()))
            .finish()
    }
}

impl LinearOperatorHandle {
    /// Wraps `apply`, which writes the image of its first argument into the
    /// second (the output buffer is zeroed by the caller).
    pub fn new(
        n: usize,
        label: impl Into<String>,
        support: Option<Vec<usize>>,
        apply: impl Fn(&[C64], &mut [C64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            apply: Arc::new(apply),
            support: support.map(Arc::new),
            label: label.into(),
        }
    }

    /// Operator defined by a dense matrix (diagnostic and test use).
    pub fn from_dense(n: usize, label: impl Into<String>, m: DMatrix<C64>) -> Result<Self> {
        check_len(m.nrows(), n)?;
        check_len(m.ncols(), n)?;
        Ok(Self::new(n, label, None, move |x, y| {
            for (j, &xj) in x.iter().enumerate() {
                if xj == C64::new(0.0, 0.0) {
                    continue;
                }
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi += m[(i, j)] * xj;
                }
            }
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Basis indices outside of which the operator is zero (row and column).
    pub fn support(&self) -> Option<&[usize]> {
        self.support.as_deref().map(Vec::as_slice)
    }

    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len(x.len(), self.n)?;
        let mut y = vec![C64::new(0.0, 0.0); x.len()];
        (self.apply)(x, &mut y);
        Ok(y)
    }

    /// Writes `A·x` into `y`, overwriting it.
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        y.fill(C64::new(0.0, 0.0));
        (self.apply)(x, y);
    }

    /// Full `2^n × 2^n` matrix, built column by column (`n <= 12`).
    pub fn dense(&self) -> Result<DMatrix<C64>> {
        let dim = self.dim();
        if dim > DENSE_DIM_MAX {
            return Err(Error::TooLarge {
                what: "dense operator",
                dim,
                limit: DENSE_DIM_MAX,
            });
        }
        let mut m = DMatrix::zeros(dim, dim);
        let mut e = vec![C64::new(0.0, 0.0); dim];
        let mut y = vec![C64::new(0.0, 0.0); dim];
        for j in 0..dim {
            e[j] = C64::new(1.0, 0.0);
            self.apply_into(&e, &mut y);
            m.set_column(j, &nalgebra::DVector::from_column_slice(&y));
            e[j] = C64::new(0.0, 0.0);
        }
        Ok(m)
    }

    /// Matrix restricted to the rows and columns in `basis`.
    pub fn restricted_dense(&self, basis: &[usize]) -> Result<DMatrix<C64>> {
        if basis.len() > DENSE_DIM_MAX {
            return Err(Error::TooLarge {
                what: "restricted dense operator",
                dim: basis.len(),
                limit: DENSE_DIM_MAX,
            });
        }
        let dim = self.dim();
        let mut m = DMatrix::zeros(basis.len(), basis.len());
        let mut e = vec![C64::new(0.0, 0.0); dim];
        let mut y = vec![C64::new(0.0, 0.0); dim];
        for (c, &j) in basis.iter().enumerate() {
            e[j] = C64::new(1.0, 0.0);
            self.apply_into(&e, &mut y);
            for (r, &i) in basis.iter().enumerate() {
                m[(r, c)] = y[i];
            }
            e[j] = C64::new(0.0, 0.0);
        }
        Ok(m)
    }
}

/// Writes a dense matrix as text: a `rows cols` header, then one row per
/// line as alternating real and imaginary parts.
pub fn write_dense<W: Write>(m: &DMatrix<C64>, mut w: W) -> Result<()> {
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .flat_map(|j| {
                let z = m[(i, j)];
                [format!("{:e}", z.re), format!("{:e}", z.im)]
            })
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

fn check_order(g: &Skeleton, k: usize, lo: usize) -> Result<()> {
    let n = g.n();
    if n == 0 || n > N_MAX || k < lo || k > n - 1 {
        return Err(out_of_range("k", k as i64, lo as i64, n as i64 - 1));
    }
    Ok(())
}

/// `Δ_k = P_k P_Γ B P_Γ B P_Γ P_k` as a matrix-free operator.
pub fn restricted_laplacian(g: &Skeleton, k: usize) -> Result<LinearOperatorHandle> {
    check_order(g, k, 0)?;
    let n = g.n();
    let g2 = g.clone();
    let support = g.simplex_indices(k);
    Ok(LinearOperatorHandle::new(
        n,
        format!("laplacian k={k}"),
        Some(support),
        move |x, y| {
            let mut v = x.to_vec();
            project_order_in_place(&mut v, k);
            project_complex_in_place(&mut v, &g2);
            let mut t = vec![C64::new(0.0, 0.0); v.len()];
            apply_b_into(n, &v, &mut t);
            project_complex_in_place(&mut t, &g2);
            apply_b_into(n, &t, y);
            project_complex_in_place(y, &g2);
            project_order_in_place(y, k);
        },
    ))
}

/// `∂̃_k = P_{k-1} P_Γ B P_Γ P_k` for `1 <= k <= n-1`.
pub fn restricted_boundary(g: &Skeleton, k: usize) -> Result<LinearOperatorHandle> {
    check_order(g, k, 1)?;
    let n = g.n();
    let g2 = g.clone();
    Ok(LinearOperatorHandle::new(
        n,
        format!("boundary k={k}"),
        None,
        move |x, y| {
            let mut v = x.to_vec();
            project_order_in_place(&mut v, k);
            project_complex_in_place(&mut v, &g2);
            apply_b_into(n, &v, y);
            project_complex_in_place(y, &g2);
            project_order_in_place(y, k - 1);
        },
    ))
}

/// `Δ_k` in compressed sparse row form over the order-`k` simplices.
///
/// Entries are integers; built from the local action of `B` on basis states
/// so cost scales with `|S_k|` rather than `2^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLaplacian {
    pub n: usize,
    pub k: usize,
    /// Statevector indices of the order-`k` simplices, ascending.
    pub basis: Vec<usize>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Signed neighbours of basis state `idx` under `B`, restricted to the complex.
fn b_neighbours(n: usize, idx: usize, g: &Skeleton, out: &mut Vec<(usize, f64)>) {
    out.clear();
    let mut parity = 0usize;
    for p in (0..n).rev() {
        let target = idx ^ (1 << p);
        if g.contains_index(target) {
            out.push((target, if parity == 1 { -1.0 } else { 1.0 }));
        }
        parity ^= (idx >> p) & 1;
    }
}

impl SparseLaplacian {
    pub fn build(g: &Skeleton, k: usize) -> Result<Self> {
        check_order(g, k, 0)?;
        let n = g.n();
        let basis = g.simplex_indices(k);
        let pos: HashMap<usize, usize> = basis.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut first = Vec::new();
        let mut second = Vec::new();
        let mut acc: Vec<(usize, f64)> = Vec::new();
        // Δ_k is real symmetric, so column j of B P B restricted equals row j
        for &j in &basis {
            acc.clear();
            b_neighbours(n, j, g, &mut first);
            for &(mid, s1) in &first {
                b_neighbours(n, mid, g, &mut second);
                for &(end, s2) in &second {
                    if end.count_ones() as usize == k + 1 {
                        acc.push((pos[&end], s1 * s2));
                    }
                }
            }
            acc.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for &(c, v) in &acc {
                if last == Some(c) {
                    *vals.last_mut().expect("entry present") += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        // drop cancelled entries
        let mut rp = vec![0];
        let mut c2 = Vec::with_capacity(cols.len());
        let mut v2 = Vec::with_capacity(vals.len());
        for r in 0..basis.len() {
            for e in row_ptr[r]..row_ptr[r + 1] {
                if vals[e] != 0.0 {
                    c2.push(cols[e]);
                    v2.push(vals[e]);
                }
            }
            rp.push(c2.len());
        }
        Ok(Self {
            n,
            k,
            basis,
            row_ptr: rp,
            cols: c2,
            vals: v2,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y = scale · Δ_k · x` on compressed coordinates.
    pub fn apply_scaled(&self, scale: f64, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[e] * x[self.cols[e]];
            }
            *yr = scale * s;
        }
    }

    /// `y += Δ_k · x` for complex compressed vectors.
    pub fn apply_complex(&self, x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = C64::new(0.0, 0.0);
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += x[self.cols[e]] * self.vals[e];
            }
            *yr += s;
        }
    }

    pub fn to_dense_checked(&self) -> Result<DMatrix<f64>> {
        if self.dim() > DENSE_DIM_MAX {
            return Err(Error::TooLarge {
                what: "dense Laplacian",
                dim: self.dim(),
                limit: DENSE_DIM_MAX,
            });
        }
        Ok(self.to_dense())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for r in 0..d {
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[e])] = self.vals[e];
            }
        }
        m
    }

    /// Largest absolute row sum; an upper bound on the spectral radius.
    pub fn gershgorin_bound(&self) -> f64 {
        (0..self.dim())
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|e| self.vals[e].abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// Spectrally scaled Laplacian `s·Δ_k` with threshold `δ`.
#[derive(Debug, Clone)]
pub struct ScaledLaplacian {
    pub base: LinearOperatorHandle,
    pub scale: f64,
    /// Smallest nonzero eigenvalue assumed for `s·Δ_k`; `None` for a zero operator.
    pub delta: Option<f64>,
    pub lambda_max_estimate: f64,
    pub power_iterations: usize,
    pub converged: bool,
    /// Whether `delta` came from the caller rather than an eigendecomposition.
    pub delta_from_hint: bool,
}

/// Safety margin applied to the power-iteration estimate.
pub const SCALE_MARGIN: f64 = 1.01;
pub const POWER_MIN_ITERS: usize = 50;
pub const POWER_MAX_ITERS: usize = 5000;
pub const POWER_TOL: f64 = 1e-10;

/// Power iteration on a Hermitian PSD operator. Returns the Rayleigh
/// quotient, the iteration count and whether it converged.
pub fn power_iteration(apply: impl Fn(&[C64], &mut [C64]), start: Vec<C64>) -> (f64, usize, bool) {
    let mut x = start;
    let mut y = vec![C64::new(0.0, 0.0); x.len()];
    let mut prev = f64::NAN;
    for it in 1..=POWER_MAX_ITERS {
        let nx: f64 = x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if nx == 0.0 {
            return (0.0, it, true);
        }
        x.iter_mut().for_each(|a| *a /= nx);
        y.fill(C64::new(0.0, 0.0));
        apply(&x, &mut y);
        let lambda: f64 = x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum();
        if it >= POWER_MIN_ITERS && (lambda - prev).abs() <= POWER_TOL * lambda.abs().max(1e-300) {
            return (lambda, it, true);
        }
        prev = lambda;
        std::mem::swap(&mut x, &mut y);
    }
    (prev, POWER_MAX_ITERS, false)
}

/// Deterministic start vector with nonzero, non-uniform weight on the support.
fn start_vector(dim: usize, support: Option<&[usize]>) -> Vec<C64> {
    let mut x = vec![C64::new(0.0, 0.0); dim];
    let weight = |i: usize| 1.0 + 0.5 * ((i as f64 * 0.618_033_988_749_895).fract());
    match support {
        Some(s) => s.iter().for_each(|&i| x[i] = C64::new(weight(i), 0.0)),
        None => x
            .iter_mut()
            .enumerate()
            .for_each(|(i, a)| *a = C64::new(weight(i), 0.0)),
    }
    x
}

/// Scales `op` so its spectrum lies in `[0, 1]` and fixes the threshold `δ`.
///
/// Without a hint, `δ` is the smallest nonzero eigenvalue of the scaled
/// operator restricted to its support (requires a support no larger than
/// the dense limit).
pub fn scale_laplacian(
    op: &LinearOperatorHandle,
    delta_hint: Option<f64>,
) -> Result<ScaledLaplacian> {
    if let Some(d) = delta_hint {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                msg: format!("{d} must lie in (0, 1)"),
            });
        }
    }
    let start = start_vector(op.dim(), op.support());
    let (lambda, iters, converged) = power_iteration(|x, y| op.apply_into(x, y), start);
    let zero = ScaledLaplacian {
        base: op.clone(),
        scale: 1.0,
        delta: None,
        lambda_max_estimate: 0.0,
        power_iterations: iters,
        converged,
        delta_from_hint: false,
    };
    if lambda <= 0.0 {
        return Ok(zero);
    }
    let scale = if converged {
        1.0 / (SCALE_MARGIN * lambda)
    } else {
        1.0 / op.n() as f64
    };
    let (delta, from_hint) = match delta_hint {
        Some(d) => (d, true),
        None => {
            let basis: Vec<usize> = match op.support() {
                Some(s) => s.to_vec(),
                None => (0..op.dim()).collect(),
            };
            let m = op.restricted_dense(&basis)?;
            let spec = oracle::spectrum_summary_hermitian(&m, None)?;
            match spec.smallest_nonzero {
                Some(l) => ((scale * l).min(1.0 - 1e-9), false),
                None => return Ok(zero),
            }
        }
    };
    Ok(ScaledLaplacian {
        base: op.clone(),
        scale,
        delta: Some(delta),
        lambda_max_estimate: lambda,
        power_iterations: iters,
        converged,
        delta_from_hint: from_hint,
    })
}

/// [`scale_laplacian`] specialised to the compressed form of `Δ_k`.
pub fn scale_sparse(
    g: &Skeleton,
    sp: &SparseLaplacian,
    delta_hint: Option<f64>,
) -> Result<ScaledLaplacian> {
    if let Some(d) = delta_hint {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                msg: format!("{d} must lie in (0, 1)"),
            });
        }
    }
    let base = restricted_laplacian(g, sp.k)?;
    let start = start_vector(sp.dim(), None);
    let (lambda, iters, converged) = power_iteration(|x, y| sp.apply_complex(x, y), start);
    let mut out = ScaledLaplacian {
        base,
        scale: 1.0,
        delta: None,
        lambda_max_estimate: lambda.max(0.0),
        power_iterations: iters,
        converged,
        delta_from_hint: false,
    };
    if lambda <= 0.0 {
        return Ok(out);
    }
    out.scale = if converged {
        1.0 / (SCALE_MARGIN * lambda)
    } else {
        1.0 / sp.n as f64
    };
    match delta_hint {
        Some(d) => {
            out.delta = Some(d);
            out.delta_from_hint = true;
        }
        None => {
            let spec = oracle::spectrum_summary_real(&sp.to_dense_checked()?, None)?;
            out.delta = spec
                .smallest_nonzero
                .map(|l| (out.scale * l).min(1.0 - 1e-9));
        }
    }
    Ok(out)
}

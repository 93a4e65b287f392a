//! Dense reference computations used to validate the estimator.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::boundary::{restricted_laplacian, LinearOperatorHandle};
use crate::chebyshev::{degree_bound, probe_bound, step_series, EstimatorParams, TraceMode};
use crate::complex::{for_each_weight, in_complex, SimplexMask, Skeleton};
use crate::error::{out_of_range, Error, Result};
use crate::sim::RngStream;
use crate::{C64, N_DENSE_MAX};

/// Sorted eigenvalues with a zero/nonzero split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub eigenvalues: Vec<f64>,
    pub zero_count: usize,
    pub smallest_nonzero: Option<f64>,
    pub tolerance: f64,
}

fn summarize(mut eig: Vec<f64>, tol: Option<f64>) -> SpectrumSummary {
    eig.sort_by(f64::total_cmp);
    let top = eig.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tolerance = tol.unwrap_or(1e-8 * top.max(1.0));
    let zero_count = eig.iter().filter(|&&l| l < tolerance).count();
    SpectrumSummary {
        smallest_nonzero: eig.get(zero_count).copied(),
        eigenvalues: eig,
        zero_count,
        tolerance,
    }
}

/// Eigenvalues of a Hermitian matrix.
///
/// Identically zero rows are split off as exact zero eigenvalues before the
/// QR iteration, which is retried at looser tolerances if it yields
/// non-finite values. The last resort is the SVD of `M + cI` with `c` a
/// Gershgorin bound, whose singular values are the shifted eigenvalues.
pub fn hermitian_eigenvalues<T>(m: &DMatrix<T>) -> Result<Vec<f64>>
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    let zero = T::zero();
    let support: Vec<usize> = (0..m.nrows())
        .filter(|&i| m.row(i).iter().any(|x| *x != zero) || m.column(i).iter().any(|x| *x != zero))
        .collect();
    let mut eig = vec![0.0; m.nrows() - support.len()];
    if support.is_empty() {
        return Ok(eig);
    }
    let sub = DMatrix::from_fn(support.len(), support.len(), |i, j| {
        m[(support[i], support[j])].clone()
    });
    for eps in [f64::EPSILON, 4.0 * f64::EPSILON, 1e-14, 1e-12] {
        if let Some(e) = nalgebra::SymmetricEigen::try_new(sub.clone(), eps, 0) {
            if e.eigenvalues.iter().all(|l| l.is_finite()) {
                eig.extend(e.eigenvalues.iter());
                return Ok(eig);
            }
        }
    }
    if let Some(e) = shifted_svd_eigenvalues(sub) {
        eig.extend(e);
        return Ok(eig);
    }
    Err(Error::InvalidParameter {
        name: "matrix",
        msg: "eigendecomposition did not converge".into(),
    })
}

fn shifted_svd_eigenvalues<T>(m: DMatrix<T>) -> Option<Vec<f64>>
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    let c = m
        .row_iter()
        .map(|r| r.iter().map(|x| x.clone().modulus()).sum::<f64>())
        .fold(0.0, f64::max);
    let dim = m.nrows();
    let shifted = m + DMatrix::<T>::identity(dim, dim) * T::from_real(c);
    let svd = nalgebra::SVD::try_new(shifted, false, false, f64::EPSILON, 0)?;
    svd.singular_values
        .iter()
        .all(|l| l.is_finite())
        .then(|| svd.singular_values.iter().map(|s| s - c).collect())
}

/// Spectrum of a real symmetric matrix. Default tolerance `1e-8·max(1, |λ|max)`.
pub fn spectrum_summary_real(m: &DMatrix<f64>, tol: Option<f64>) -> Result<SpectrumSummary> {
    if m.nrows() != m.ncols() {
        return Err(Error::LengthMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Ok(summarize(Vec::new(), tol));
    }
    Ok(summarize(hermitian_eigenvalues(m)?, tol))
}

/// Spectrum of a complex Hermitian matrix.
pub fn spectrum_summary_hermitian(m: &DMatrix<C64>, tol: Option<f64>) -> Result<SpectrumSummary> {
    if m.nrows() != m.ncols() {
        return Err(Error::LengthMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Ok(summarize(Vec::new(), tol));
    }
    if m.iter().all(|z| z.im == 0.0) {
        return spectrum_summary_real(&m.map(|z| z.re), tol);
    }
    Ok(summarize(hermitian_eigenvalues(m)?, tol))
}

fn check_dense(g: &Skeleton) -> Result<()> {
    if g.n() > N_DENSE_MAX {
        return Err(Error::TooLarge {
            what: "dense oracle vertices",
            dim: g.n(),
            limit: N_DENSE_MAX,
        });
    }
    Ok(())
}

fn check_k(g: &Skeleton, k: usize) -> Result<()> {
    if g.n() == 0 || k > g.n() - 1 {
        return Err(out_of_range("k", k as i64, 0, g.n() as i64 - 1));
    }
    Ok(())
}

/// Reduced `β_k` as the kernel dimension of `Δ_k` on the order-`k` simplices.
pub fn exact_betti_laplacian(g: &Skeleton, k: usize, tol: f64) -> Result<(usize, SpectrumSummary)> {
    check_dense(g)?;
    check_k(g, k)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "tol",
            msg: format!("{tol} must be positive"),
        });
    }
    let op = restricted_laplacian(g, k)?;
    let basis = op.support().expect("laplacian has support").to_vec();
    let m = op.restricted_dense(&basis)?;
    let spec = spectrum_summary_hermitian(&m, Some(tol))?;
    Ok((spec.zero_count, spec))
}

/// Order-`k` simplices as vertex masks, ascending by mask value.
pub fn simplices(g: &Skeleton, k: usize) -> Vec<SimplexMask> {
    let mut out = Vec::new();
    for_each_weight(g.n(), k + 1, |m| {
        let s = SimplexMask(m as u64);
        if in_complex(s, g) {
            out.push(s);
        }
    });
    out
}

/// Signed incidence matrix of `∂_k` (rows: order `k-1`, columns: order `k`).
/// Removing the `l`-th smallest vertex contributes sign `(-1)^l`; for `k = 0`
/// the single row is the empty simplex.
pub fn boundary_matrix(g: &Skeleton, k: usize) -> DMatrix<f64> {
    let cols = simplices(g, k);
    let rows: Vec<SimplexMask> = if k == 0 {
        vec![SimplexMask(0)]
    } else {
        simplices(g, k - 1)
    };
    let mut m = DMatrix::zeros(rows.len(), cols.len());
    for (c, s) in cols.iter().enumerate() {
        for (l, v) in s.vertices().enumerate() {
            let face = SimplexMask(s.0 & !(1u64 << v));
            let r = rows
                .binary_search(&face)
                .expect("faces of a clique are cliques");
            m[(r, c)] = if l % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
    m
}

/// Numerical rank with threshold `1e-8` relative to the largest singular value.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-8 * top).count()
}

/// Reduced `β_k = |S_k| − rank ∂_k − rank ∂_{k+1}` from combinatorial
/// boundary matrices.
pub fn exact_betti_ranks(g: &Skeleton, k: usize) -> Result<usize> {
    check_dense(g)?;
    check_k(g, k)?;
    let sk = simplices(g, k).len();
    let r_k = rank(&boundary_matrix(g, k));
    let r_k1 = if k + 1 < g.n() {
        rank(&boundary_matrix(g, k + 1))
    } else {
        0
    };
    Ok(sk - r_k - r_k1)
}

/// Largest dimension for the dense exponential.
pub const EXPM_DIM_MAX: usize = 256;

/// `exp(-i·A·t)` by scaling and squaring of a Taylor series.
pub fn dense_expm(op: &LinearOperatorHandle, t: f64) -> Result<DMatrix<C64>> {
    if op.dim() > EXPM_DIM_MAX {
        return Err(Error::TooLarge {
            what: "matrix exponential",
            dim: op.dim(),
            limit: EXPM_DIM_MAX,
        });
    }
    Ok(expm_matrix(&(op.dense()? * C64::new(0.0, -t))))
}

/// Matrix exponential of a general complex matrix.
pub fn expm_matrix(a: &DMatrix<C64>) -> DMatrix<C64> {
    let dim = a.nrows();
    let norm1 = (0..dim)
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm1 * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = a * C64::new(scale, 0.0);
    let mut result = DMatrix::<C64>::identity(dim, dim);
    let mut term = DMatrix::<C64>::identity(dim, dim);
    for k in 1..=30 {
        term = &term * &x * C64::new(1.0 / k as f64, 0.0);
        result += &term;
        if term.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Spectral norm (largest singular value).
pub fn operator_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |a: f64, &b| a.max(b))
}

/// Classical stochastic Chebyshev estimate of the number of eigenvalues of
/// `op` (already scaled to `[0, 1]`) above `δ/2`, using the three-term
/// recurrence on Rademacher probes over the operator support. In
/// all-columns mode the trace is taken exactly over support basis vectors.
pub fn classical_cheb_rank(
    op: &LinearOperatorHandle,
    params: &EstimatorParams,
    rng: &RngStream,
) -> Result<f64> {
    params.validate()?;
    let delta = params.delta.ok_or(Error::UndefinedDelta)?;
    let m = match params.m {
        Some(m) => m,
        None => degree_bound(delta, params.epsilon)?,
    };
    let series = step_series(m, delta)?;
    let support: Vec<usize> = match op.support() {
        Some(s) => s.to_vec(),
        None => (0..op.dim()).collect(),
    };
    if support.is_empty() {
        return Ok(0.0);
    }
    let dim = op.dim();
    let probes: Vec<Vec<C64>> = match params.trace_mode {
        TraceMode::AllColumns => support
            .iter()
            .map(|&i| {
                let mut v = vec![C64::new(0.0, 0.0); dim];
                v[i] = C64::new(1.0, 0.0);
                v
            })
            .collect(),
        TraceMode::Sampled => {
            let n_v = match params.n_v {
                Some(v) => v,
                None => probe_bound(params.eta, params.epsilon, params.c_nv)?,
            };
            (0..n_v)
                .map(|l| {
                    let mut r = rng.substream(l as u64);
                    let mut v = vec![C64::new(0.0, 0.0); dim];
                    support.iter().for_each(|&i| v[i] = C64::new(r.sign(), 0.0));
                    v
                })
                .collect()
        }
    };
    let dot = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(p, q)| (p.conj() * q).re).sum::<f64>();
    let mut tmp = vec![C64::new(0.0, 0.0); dim];
    let mut total = 0.0;
    for v in &probes {
        // Ã = 2A − I maps the spectrum to [-1, 1]
        let mut shifted = |x: &[C64], out: &mut Vec<C64>| {
            op.apply_into(x, &mut tmp);
            *out = tmp.iter().zip(x).map(|(a, b)| 2.0 * a - b).collect();
        };
        let mut prev = v.clone();
        let mut acc = series.coeffs[0] * dot(v, &prev);
        if m >= 1 {
            let mut cur = Vec::new();
            shifted(&prev, &mut cur);
            acc += series.coeffs[1] * dot(v, &cur);
            let mut next = Vec::new();
            for c in &series.coeffs[2..] {
                shifted(&cur, &mut next);
                next.iter_mut()
                    .zip(&prev)
                    .for_each(|(x, p)| *x = 2.0 * *x - p);
                acc += c * dot(v, &next);
                prev = std::mem::replace(&mut cur, std::mem::take(&mut next));
            }
        }
        total += acc;
    }
    Ok(match params.trace_mode {
        TraceMode::AllColumns => total,
        TraceMode::Sampled => total / probes.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle4() -> Skeleton {
        Skeleton::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap()
    }

    fn octahedron() -> Skeleton {
        // antipodal pairs (0,1), (2,3), (4,5) are the only non-edges
        let mut e = Vec::new();
        for i in 0..6 {
            for j in (i + 1)..6 {
                if i / 2 != j / 2 {
                    e.push((i, j));
                }
            }
        }
        Skeleton::from_edges(6, &e).unwrap()
    }

    #[test]
    fn cycle_has_one_loop() {
        assert_eq!(exact_betti_laplacian(&cycle4(), 1, 1e-8).unwrap().0, 1);
        assert_eq!(exact_betti_ranks(&cycle4(), 1).unwrap(), 1);
        assert_eq!(rank(&boundary_matrix(&cycle4(), 1)), 3);
    }

    #[test]
    fn disjoint_edges_reduced_b0() {
        let g = Skeleton::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(exact_betti_laplacian(&g, 0, 1e-8).unwrap().0, 1);
        assert_eq!(exact_betti_ranks(&g, 0).unwrap(), 1);
    }

    #[test]
    fn octahedron_is_a_sphere() {
        let g = octahedron();
        assert_eq!(exact_betti_laplacian(&g, 2, 1e-8).unwrap().0, 1);
        assert_eq!(exact_betti_ranks(&g, 2).unwrap(), 1);
        assert_eq!(exact_betti_ranks(&g, 1).unwrap(), 0);
    }

    #[test]
    fn filled_triangle_ranks() {
        let g = Skeleton::complete(3).unwrap();
        assert_eq!(rank(&boundary_matrix(&g, 1)), 2);
        assert_eq!(rank(&boundary_matrix(&g, 2)), 1);
        assert_eq!(exact_betti_ranks(&g, 1).unwrap(), 0);
    }

    #[test]
    fn expm_identity_and_unitarity() {
        let n = 3;
        let b = LinearOperatorHandle::new(n, "B", None, move |x, y| {
            crate::boundary::apply_b_into(n, x, y)
        });
        let e0 = dense_expm(&b, 0.0).unwrap();
        assert!((e0 - DMatrix::<C64>::identity(8, 8))
            .iter()
            .all(|z| z.norm() < 1e-15));
        let u = dense_expm(&b, 0.7).unwrap();
        let uu = u.adjoint() * &u;
        assert!((uu - DMatrix::<C64>::identity(8, 8))
            .iter()
            .all(|z| z.norm() < 1e-10));
        // B² = 3I gives exp(-iBt) = cos(√3 t) I − i sin(√3 t)/√3 B
        let r3 = 3f64.sqrt();
        let bd = b.dense().unwrap();
        let want = DMatrix::<C64>::identity(8, 8) * C64::new((r3 * 0.7).cos(), 0.0)
            + bd * C64::new(0.0, -(r3 * 0.7).sin() / r3);
        assert!((u - want).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn spectrum_is_finite_for_slow_converging_laplacian() {
        let g = Skeleton::from_edges(6, &[(0, 1), (0, 2), (1, 3), (1, 4), (2, 4), (3, 5)]).unwrap();
        let m = restricted_laplacian(&g, 1).unwrap().dense().unwrap();
        let spec = spectrum_summary_hermitian(&m, None).unwrap();
        assert!(spec
            .eigenvalues
            .iter()
            .all(|l| l.is_finite() && *l > -1e-10));
        let (beta, _) = exact_betti_laplacian(&g, 1, 1e-8).unwrap();
        assert_eq!(beta, exact_betti_ranks(&g, 1).unwrap());
    }

    #[test]
    fn shifted_svd_recovers_signed_eigenvalues() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, -1.0, 0.5, 0.0, 0.5, 3.0]);
        let mut got = shifted_svd_eigenvalues(a.clone()).unwrap();
        let mut want = hermitian_eigenvalues(&a).unwrap();
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        assert!(want[0] < 0.0);
        assert!(got.iter().zip(&want).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn zero_rows_give_exact_zero_eigenvalues() {
        let mut a = DMatrix::<f64>::zeros(4, 4);
        a[(1, 1)] = 2.0;
        a[(1, 3)] = 1.0;
        a[(3, 1)] = 1.0;
        a[(3, 3)] = 2.0;
        let mut e = hermitian_eigenvalues(&a).unwrap();
        e.sort_by(f64::total_cmp);
        assert_eq!(&e[..2], &[0.0, 0.0]);
        assert!((e[2] - 1.0).abs() < 1e-14 && (e[3] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn expm_matches_eigendecomposition() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let e = a.clone().symmetric_eigen();
        let t = 0.4;
        let mut want = DMatrix::<C64>::zeros(2, 2);
        for i in 0..2 {
            let v = e.eigenvectors.column(i).map(|x| C64::new(x, 0.0));
            want += &v * v.transpose() * C64::from_polar(1.0, -t * e.eigenvalues[i]);
        }
        let got = expm_matrix(&(a.map(|x| C64::new(x, 0.0)) * C64::new(0.0, -t)));
        assert!((got - want).iter().all(|z| z.norm() < 1e-13));
    }

    #[test]
    fn cheb_rank_of_identity_and_zero() {
        let n = 4;
        let id = LinearOperatorHandle::new(n, "I", None, |x, y| {
            y.iter_mut().zip(x).for_each(|(a, b)| *a += b)
        });
        let params = EstimatorParams {
            delta: Some(0.5),
            ..Default::default()
        };
        let r = classical_cheb_rank(&id, &params, &RngStream::new(0)).unwrap();
        assert!((r - 16.0).abs() < 0.2 * 16.0, "{r}");
        let zero = LinearOperatorHandle::new(n, "0", None, |_, _| {});
        let r = classical_cheb_rank(&zero, &params, &RngStream::new(0)).unwrap();
        assert!(r.abs() < 0.2 * 16.0, "{r}");
    }

    #[test]
    fn cheb_rank_of_diagonal() {
        let n = 5;
        let diag: Vec<f64> = (0..32)
            .map(|i| {
                if i % 3 == 0 {
                    0.0
                } else {
                    0.3 + 0.02 * i as f64
                }
            })
            .collect();
        let above = diag.iter().filter(|&&d| d > 0.0).count() as f64;
        let d2 = diag.clone();
        let op = LinearOperatorHandle::new(n, "diag", None, move |x, y| {
            y.iter_mut()
                .zip(x)
                .zip(&d2)
                .for_each(|((a, b), d)| *a += b * d)
        });
        let params = EstimatorParams {
            delta: Some(0.3),
            trace_mode: TraceMode::AllColumns,
            ..Default::default()
        };
        let r = classical_cheb_rank(&op, &params, &RngStream::new(0)).unwrap();
        assert!((r - above).abs() < 0.2 * 32.0, "{r} vs {above}");
        let params = EstimatorParams {
            delta: Some(0.3),
            ..Default::default()
        };
        let r = classical_cheb_rank(&op, &params, &RngStream::new(0)).unwrap();
        assert!((r - above).abs() < 0.2 * 32.0, "{r} vs {above}");
    }

    #[test]
    fn dense_limit_enforced() {
        let g = Skeleton::complete(N_DENSE_MAX + 1).unwrap();
        assert!(exact_betti_ranks(&g, 0).is_err());
        assert!(exact_betti_laplacian(&cycle4(), 1, 0.0).is_err());
    }
}

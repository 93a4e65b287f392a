//! Chebyshev step approximations, parameter bounds, moment conversion and
//! the stochastic rank estimator.

mod dd;
mod estimator;

pub use dd::Dd;
pub use estimator::{
    estimate_betti, estimate_with_context, DeltaSource, EstimationReport, EstimatorParams, Flag,
    MomentMode, MomentRoute, MomentTable, OrderContext, ProbeMoments, ProjectionMode,
    ResolvedParams, TraceMode, ALL_COLUMNS_N_MAX, POWER_ROUTE_MAX_DEGREE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truncated Chebyshev series `Σ c_j T_j(α·x + β)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebSeries {
    pub coeffs: Vec<f64>,
    /// Affine map from the operator spectrum to `[-1, 1]`: `t = alpha·x + beta`.
    pub alpha: f64,
    pub beta: f64,
}

impl ChebSeries {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Clenshaw evaluation at `t ∈ [-1, 1]`.
    pub fn eval_mapped(&self, t: f64) -> f64 {
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0]
    }

    /// Evaluation at a spectrum point `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_mapped(self.alpha * x + self.beta)
    }
}

/// Chebyshev coefficients of the indicator of `[a, b] ⊆ [-1, 1]`, with the
/// map `x ↦ 2x - 1` from `[0, 1]`.
pub fn step_coefficients(m: usize, a: f64, b: f64) -> Result<ChebSeries> {
    if !(a >= -1.0 && a < b && b <= 1.0) {
        return Err(Error::InvalidInterval { a, b });
    }
    let (ta, tb) = (a.acos(), b.acos());
    let mut coeffs = Vec::with_capacity(m + 1);
    coeffs.push((ta - tb) / std::f64::consts::PI);
    for j in 1..=m {
        let jf = j as f64;
        coeffs.push(2.0 / std::f64::consts::PI * ((jf * ta).sin() - (jf * tb).sin()) / jf);
    }
    Ok(ChebSeries {
        coeffs,
        alpha: 2.0,
        beta: -1.0,
    })
}

/// Step series on `[0, 1]` with the transition at `δ/2`.
pub fn step_series(m: usize, delta: f64) -> Result<ChebSeries> {
    check_unit("delta", delta)?;
    step_coefficients(m, delta - 1.0, 1.0)
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            msg: format!("{v} must lie in (0, 1)"),
        })
    }
}

/// Smooth step `½(1 + tanh(α(x − δ/2)))` with `α = ln(2/ε)/δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanhSurrogate {
    pub delta: f64,
    pub epsilon: f64,
    pub alpha: f64,
}

impl TanhSurrogate {
    pub fn eval(&self, x: f64) -> f64 {
        0.5 * (1.0 + (self.alpha * (x - self.delta / 2.0)).tanh())
    }
}

pub fn tanh_surrogate(delta: f64, epsilon: f64) -> Result<TanhSurrogate> {
    check_unit("delta", delta)?;
    check_unit("epsilon", epsilon)?;
    Ok(TanhSurrogate {
        delta,
        epsilon,
        alpha: (2.0 / epsilon).ln() / delta,
    })
}

/// Smallest degree with
/// `m ≥ ln(32·L/(π·δ·ε)) / ln(1 + π·δ/(4·L))`, `L = ln(2/ε)`.
pub fn degree_bound(delta: f64, epsilon: f64) -> Result<usize> {
    check_unit("delta", delta)?;
    check_unit("epsilon", epsilon)?;
    let l = (2.0 / epsilon).ln();
    let pi = std::f64::consts::PI;
    let num = (32.0 * l / (pi * delta * epsilon)).ln();
    let den = (1.0 + pi * delta / (4.0 * l)).ln();
    Ok(((num / den).ceil() as usize).max(1))
}

/// `⌈c·r²·ln(2/η)/ε²⌉` with diagonal bound `r = 1`.
pub fn probe_bound(eta: f64, epsilon: f64, c_nv: f64) -> Result<usize> {
    probe_bound_with_radius(eta, epsilon, c_nv, 1.0)
}

pub fn probe_bound_with_radius(eta: f64, epsilon: f64, c_nv: f64, r: f64) -> Result<usize> {
    check_unit("eta", eta)?;
    check_unit("epsilon", epsilon)?;
    if !(c_nv > 0.0 && c_nv.is_finite()) || !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "c_nv",
            msg: format!("constant {c_nv} and radius {r} must be positive"),
        });
    }
    let v = c_nv * r * r * (2.0 / eta).ln() / (epsilon * epsilon);
    Ok((v.ceil() as usize).max(1))
}

/// Largest Chebyshev index whose power-basis coefficients are tabulated.
pub const CONVERSION_MAX_INDEX: usize = 60;

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn binom128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Coefficient of `x^{j-2i}` in `T_j`, i.e. `(-1)^i 2^{j-2i-1} g(j,i)` with
/// `g(j,i) = C(2i,i)·C(j,2i)/C(j-1,i)`. Exact for `j ≤ 60`.
pub fn power_coefficient(j: usize, i: usize) -> Result<i128> {
    if j > CONVERSION_MAX_INDEX {
        return Err(Error::TooLarge {
            what: "Chebyshev conversion index",
            dim: j,
            limit: CONVERSION_MAX_INDEX,
        });
    }
    if 2 * i > j {
        return Ok(0);
    }
    match j {
        0 => return Ok(1),
        1 => return Ok(1),
        _ => {}
    }
    let (j64, i64_) = (j as u64, i as u64);
    // reduce num/den before applying the power of two
    let mut num = binom128(2 * i64_, i64_);
    let mut den = 2 * binom128(j64 - 1, i64_);
    let g = gcd(num, den);
    num /= g;
    den /= g;
    let c2 = binom128(j64, 2 * i64_);
    let g = gcd(c2, den);
    num *= c2 / g;
    den /= g;
    let mut pow = 1u128 << (j - 2 * i);
    let g = gcd(pow, den);
    pow /= g;
    den /= g;
    debug_assert_eq!(den, 1, "Chebyshev power coefficients are integers");
    let mag = (num * pow / den) as i128;
    Ok(if i % 2 == 1 { -mag } else { mag })
}

/// `θ^{(j)}` from power moments `μ^{(0..=j)}` by the closed-form expansion,
/// accumulated in double-double precision.
pub fn cheb_from_power(power_moments: &[f64], j: usize) -> Result<f64> {
    let dd: Vec<Dd> = power_moments.iter().map(|&x| Dd::from(x)).collect();
    Ok(cheb_from_power_dd(&dd, j)?.to_f64())
}

pub fn cheb_from_power_dd(mu: &[Dd], j: usize) -> Result<Dd> {
    if mu.len() <= j {
        return Err(Error::MissingMoments {
            need: j,
            have: mu.len(),
        });
    }
    match j {
        0 => return Ok(mu[0]),
        1 => return Ok(mu[1]),
        _ => {}
    }
    let mut acc = Dd::ZERO;
    for i in 0..=j / 2 {
        acc = acc + mu[j - 2 * i].mul_i128(power_coefficient(j, i)?);
    }
    Ok(acc)
}

/// Power moments of `2A − I` from those of `A`:
/// `ν_i = Σ_q C(i,q) 2^q (−1)^{i−q} μ_q`.
pub fn shift_moments(mu: &[f64]) -> Result<Vec<Dd>> {
    if mu.len() > CONVERSION_MAX_INDEX + 1 {
        return Err(Error::TooLarge {
            what: "power moment count",
            dim: mu.len(),
            limit: CONVERSION_MAX_INDEX + 1,
        });
    }
    Ok((0..mu.len())
        .map(|i| {
            let mut acc = Dd::ZERO;
            for (q, &m) in mu.iter().enumerate().take(i + 1) {
                let c = (binom128(i as u64, q as u64) << q) as i128;
                let c = if (i - q) % 2 == 1 { -c } else { c };
                acc = acc + Dd::from(m).mul_i128(c);
            }
            acc
        })
        .collect())
}

/// Chebyshev moments `⟨T_j(2A − I)⟩` for `j = 0..=m` from power moments of `A`.
pub fn mapped_cheb_moments(mu: &[f64]) -> Result<Vec<f64>> {
    let nu = shift_moments(mu)?;
    (0..mu.len())
        .map(|j| cheb_from_power_dd(&nu, j).map(Dd::to_f64))
        .collect()
}

/// Absolute sensitivity of the mapped conversion: entry `(j, q)` bounds
/// `|∂θ_j/∂μ_q|`.
pub fn mapped_sensitivity(m: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![vec![0.0; m + 1]; m + 1];
    for (j, row) in out.iter_mut().enumerate() {
        for i in 0..=j / 2 {
            let p = j - 2 * i;
            let c = (power_coefficient(j, i)? as f64).abs();
            for (q, r) in row.iter_mut().enumerate().take(p + 1) {
                *r += c * binom128(p as u64, q as u64) as f64 * 2f64.powi(q as i32);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_domain_step_is_constant() {
        let s = step_coefficients(10, -1.0, 1.0).unwrap();
        assert!((s.coeffs[0] - 1.0).abs() < 1e-15);
        assert!(s.coeffs[1..].iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn half_step_coefficients() {
        let s = step_coefficients(3, 0.0, 1.0).unwrap();
        assert!((s.coeffs[0] - 0.5).abs() < 1e-15);
        assert!((s.coeffs[1] - 2.0 / std::f64::consts::PI).abs() < 1e-15);
        let s0 = step_coefficients(0, 0.0, 1.0).unwrap();
        assert_eq!(s0.degree(), 0);
        assert!((s0.eval(0.9) - 0.5).abs() < 1e-15);
        assert!(step_coefficients(3, 0.5, 0.5).is_err());
        assert!(step_coefficients(3, -1.5, 0.5).is_err());
    }

    #[test]
    fn clenshaw_matches_direct_sum() {
        let s = step_series(25, 0.3).unwrap();
        for &x in &[0.0, 0.1, 0.5, 0.77, 1.0] {
            let t: f64 = 2.0 * x - 1.0;
            let direct: f64 = s
                .coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| c * (j as f64 * t.acos()).cos())
                .sum();
            assert!((s.eval(x) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn tanh_surrogate_bounds() {
        for &(d, e) in &[(0.1, 0.05), (0.3, 0.2), (0.05, 0.1)] {
            let f = tanh_surrogate(d, e).unwrap();
            assert!((f.eval(d / 2.0) - 0.5).abs() < 1e-15);
            assert!(f.eval(0.0) <= e / 2.0);
            assert!(1.0 - f.eval(d) <= e / 2.0);
            let mut prev = f.eval(0.0);
            for i in 1..=100 {
                let v = f.eval(i as f64 / 100.0);
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn degree_bound_value_and_monotonicity() {
        assert_eq!(degree_bound(0.1, 0.05).unwrap(), 424);
        for &e in &[0.05, 0.1, 0.2] {
            let mut prev = usize::MAX;
            for i in 1..99 {
                let m = degree_bound(i as f64 / 100.0, e).unwrap();
                assert!(m <= prev);
                prev = m;
            }
        }
        for &d in &[0.05, 0.1, 0.2] {
            let mut prev = usize::MAX;
            for i in 1..99 {
                let m = degree_bound(d, i as f64 / 100.0).unwrap();
                assert!(m <= prev);
                prev = m;
            }
        }
        assert!(degree_bound(0.0, 0.1).is_err());
    }

    #[test]
    fn probe_bound_values() {
        assert_eq!(probe_bound(0.1, 0.2, 1.0).unwrap(), 75);
        let a = probe_bound(0.1, 0.1, 1.0).unwrap();
        let b = probe_bound(0.1, 0.05, 1.0).unwrap();
        assert!((b as f64 / a as f64 - 4.0).abs() < 0.02);
        assert_eq!(probe_bound(0.999_999, 0.9, 1.0).unwrap(), 1);
        assert!(probe_bound(0.1, 0.2, 0.0).is_err());
    }

    #[test]
    fn chebyshev_identities_from_scalar_moments() {
        let x: f64 = 0.37;
        let mu: Vec<f64> = (0..=10).map(|i| x.powi(i)).collect();
        assert!((cheb_from_power(&mu, 2).unwrap() - (2.0 * x * x - 1.0)).abs() < 1e-15);
        assert!((cheb_from_power(&mu, 3).unwrap() - (4.0 * x.powi(3) - 3.0 * x)).abs() < 1e-15);
        assert_eq!(cheb_from_power(&mu, 0).unwrap(), 1.0);
        assert_eq!(cheb_from_power(&mu, 1).unwrap(), x);
        for j in 0..=10 {
            let want = (j as f64 * x.acos()).cos();
            assert!((cheb_from_power(&mu, j).unwrap() - want).abs() < 1e-12);
        }
        assert!(cheb_from_power(&mu[..3], 4).is_err());
    }

    #[test]
    fn power_coefficients_match_recurrence() {
        // T_{j+1} = 2x T_j − T_{j−1} on integer coefficient vectors
        let mut prev = vec![1i128];
        let mut cur = vec![0i128, 1];
        for j in 2..=CONVERSION_MAX_INDEX {
            let mut next = vec![0i128; j + 1];
            for (p, &c) in cur.iter().enumerate() {
                next[p + 1] += 2 * c;
            }
            for (p, &c) in prev.iter().enumerate() {
                next[p] -= c;
            }
            for i in 0..=j / 2 {
                assert_eq!(
                    power_coefficient(j, i).unwrap(),
                    next[j - 2 * i],
                    "j={j} i={i}"
                );
            }
            prev = cur;
            cur = next;
        }
        assert!(power_coefficient(CONVERSION_MAX_INDEX + 1, 0).is_err());
    }

    #[test]
    fn mapped_moments_of_scalar() {
        let x: f64 = 0.8;
        let mu: Vec<f64> = (0..=12).map(|i| x.powi(i)).collect();
        let th = mapped_cheb_moments(&mu).unwrap();
        let sens = mapped_sensitivity(12).unwrap();
        for (j, t) in th.iter().enumerate() {
            let want = (j as f64 * (2.0 * x - 1.0).acos()).cos();
            // rounding of the inputs is amplified by the conversion sensitivity
            let tol = 1e-14 + 4.0 * f64::EPSILON * sens[j].iter().sum::<f64>();
            assert!((t - want).abs() < tol, "j={j} {t} {want}");
        }
        let s = mapped_sensitivity(3).unwrap();
        // T_1(2x−1) = 2x − 1
        assert_eq!(s[1][0..2], [1.0, 2.0]);
    }
}

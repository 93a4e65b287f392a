use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    degree_bound, mapped_cheb_moments, mapped_sensitivity, probe_bound, step_series, ChebSeries,
};
use crate::boundary::{
    apply_b_into, project_complex_in_place, project_order_in_place, scale_sparse, ScaledLaplacian,
    SparseLaplacian,
};
use crate::complex::Skeleton;
use crate::error::{Error, Result};
use crate::sim::{
    build_trotter_circuit, hadamard_column, project_order_until, run_circuit, Circuit,
    ComplexProjector, ProjectionStats, RngStream, StateVector,
};
use crate::{C64, N_MAX};

/// Degrees above this never use power-moment conversion.
pub const POWER_ROUTE_MAX_DEGREE: usize = 30;

/// Largest `n` for exhaustive all-columns averaging.
pub const ALL_COLUMNS_N_MAX: usize = 10;

/// Conversion error budget relative to `ε·μ^{(0)}`.
const CONVERSION_BUDGET: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentMode {
    /// Scaled `B` and projectors applied exactly.
    Exact,
    /// First moment extracted from Trotterized unitaries.
    Trotter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceMode {
    /// `n_v` random Hadamard columns.
    Sampled,
    /// Every Hadamard column once.
    AllColumns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMode {
    /// Projectors applied as exact masks.
    Exact,
    /// Projectors emulated by seeded mid-circuit measurement with retries.
    Sampled,
}

/// User-facing estimator settings. `delta`, `m` and `n_v` are overrides;
/// when absent they are measured or derived from the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub epsilon: f64,
    pub eta: f64,
    pub delta: Option<f64>,
    pub m: Option<usize>,
    pub n_v: Option<usize>,
    pub c_nv: f64,
    pub moment_mode: MomentMode,
    pub trace_mode: TraceMode,
    pub projection: ProjectionMode,
    pub trotter_t: f64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            eta: 0.1,
            delta: None,
            m: None,
            n_v: None,
            c_nv: 1.0,
            moment_mode: MomentMode::Exact,
            trace_mode: TraceMode::Sampled,
            projection: ProjectionMode::Exact,
            trotter_t: 1e-3,
        }
    }
}

fn invalid(name: &'static str, msg: String) -> Error {
    Error::InvalidParameter { name, msg }
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.epsilon), ("eta", self.eta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(name, format!("{v} must lie in (0, 1)")));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(invalid("delta", format!("{d} must lie in (0, 1)")));
            }
        }
        if self.m == Some(0) {
            return Err(invalid("m", "degree must be at least 1".into()));
        }
        if self.n_v == Some(0) {
            return Err(invalid("n_v", "probe count must be at least 1".into()));
        }
        if !(self.c_nv > 0.0 && self.c_nv.is_finite()) {
            return Err(invalid("c_nv", format!("{} must be positive", self.c_nv)));
        }
        if !(self.trotter_t > 0.0 && self.trotter_t < 1.0) {
            return Err(invalid(
                "trotter_t",
                format!("{} must lie in (0, 1)", self.trotter_t),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaSource {
    Config,
    Oracle,
}

/// Parameters actually used for one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub epsilon: f64,
    pub eta: f64,
    pub delta: Option<f64>,
    pub delta_source: Option<DeltaSource>,
    pub m: usize,
    pub n_v: usize,
    pub c_nv: f64,
    pub moment_mode: MomentMode,
    pub trace_mode: TraceMode,
    pub projection: ProjectionMode,
    pub trotter_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentRoute {
    /// Chebyshev moments converted from power moments.
    PowerConversion,
    /// Chebyshev moments from the three-term recurrence on the operator.
    Recurrence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    /// No simplices of this order; χ reported as 0.
    EmptyOrder,
    /// Raw χ fell outside `[0, 1]` and was clamped.
    Clamped,
    /// Power conversion too ill-conditioned; recurrence used instead.
    ConversionFallback,
    /// Trotter-extracted moment not used because the recurrence route was taken.
    TrotterMomentUnused,
    /// Configured δ exceeds the measured gap: approximate estimation.
    Abne,
    /// A sampled projection never succeeded; affected probes dropped.
    ProjectionExhausted,
    /// No vertices; the unreduced adjustment was skipped.
    EmptyComplex,
}

impl Flag {
    /// Whether the flag marks a failed estimate rather than a note.
    pub fn is_failure(self) -> bool {
        matches!(self, Flag::ProjectionExhausted)
    }
}

/// Moments of one probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMoments {
    /// Hadamard column index.
    pub column: u64,
    /// `μ^{(i)} = ⟨w|Δ̃^i|w⟩`, `w = P_Γ P_k v`.
    pub mu: Vec<f64>,
    /// `θ^{(j)} = ⟨w|T_j(2Δ̃ − I)|w⟩`.
    pub theta: Vec<f64>,
    /// First moment extracted from the Trotter circuit, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu1_trotter: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub rows: Vec<ProbeMoments>,
}

/// Result of one `(ε, k)` estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationReport {
    pub k: usize,
    /// Vietoris–Rips scale of the skeleton, when known.
    pub scale: Option<f64>,
    pub n: usize,
    pub chi: f64,
    pub chi_raw: f64,
    /// `2^n` times the mean of `μ^{(0)}` over probes.
    pub dim_estimate: f64,
    pub simplex_count: u64,
    pub beta_estimate: f64,
    pub oracle_beta: Option<usize>,
    pub params: ResolvedParams,
    pub spectral_scale: f64,
    pub lambda_max_estimate: f64,
    pub route: MomentRoute,
    /// Bound on conversion error relative to `μ^{(0)}`.
    pub conversion_slack: f64,
    pub seed: u64,
    pub stream: u64,
    pub flags: Vec<Flag>,
    pub projection_stats: ProjectionStats,
    pub moments: MomentTable,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl EstimationReport {
    pub fn has_flag(&self, f: Flag) -> bool {
        self.flags.contains(&f)
    }

    pub fn flag(&mut self, f: Flag) {
        if !self.flags.contains(&f) {
            self.flags.push(f);
        }
    }
}

/// Per-order data shared by all probes.
#[derive(Debug, Clone)]
pub struct OrderContext {
    pub g: Skeleton,
    pub k: usize,
    pub sparse: SparseLaplacian,
    pub scaled: Option<ScaledLaplacian>,
    pub params: ResolvedParams,
    pub series: Option<ChebSeries>,
    pub route: MomentRoute,
    pub conversion_slack: f64,
    projector: Option<ComplexProjector>,
    trotter: Option<Circuit>,
}

/// Relative error model for computed power moment `μ^{(q)}`.
fn moment_rel_error(q: usize, n: usize, trotter_t: Option<f64>) -> f64 {
    let base = 16.0 * (q as f64 + 1.0) * f64::EPSILON;
    match (q, trotter_t) {
        (1, Some(t)) => base + 2.0 * (n * n) as f64 * t + 4.0 * f64::EPSILON / (t * t),
        _ => base,
    }
}

impl OrderContext {
    pub fn new(g: &Skeleton, k: usize, params: &EstimatorParams) -> Result<Self> {
        params.validate()?;
        let n = g.n();
        if n == 0 || n > N_MAX {
            return Err(Error::TooLarge {
                what: "vertices",
                dim: n,
                limit: N_MAX,
            });
        }
        if params.trace_mode == TraceMode::AllColumns && n > ALL_COLUMNS_N_MAX {
            return Err(Error::TooLarge {
                what: "all-columns vertices",
                dim: n,
                limit: ALL_COLUMNS_N_MAX,
            });
        }
        let sparse = SparseLaplacian::build(g, k)?;
        let mut resolved = ResolvedParams {
            epsilon: params.epsilon,
            eta: params.eta,
            delta: None,
            delta_source: None,
            m: 0,
            n_v: 0,
            c_nv: params.c_nv,
            moment_mode: params.moment_mode,
            trace_mode: params.trace_mode,
            projection: params.projection,
            trotter_t: params.trotter_t,
        };
        let mut ctx = Self {
            g: g.clone(),
            k,
            sparse,
            scaled: None,
            params: resolved,
            series: None,
            route: MomentRoute::Recurrence,
            conversion_slack: 0.0,
            projector: None,
            trotter: None,
        };
        if ctx.sparse.dim() == 0 {
            return Ok(ctx);
        }
        let scaled = scale_sparse(g, &ctx.sparse, params.delta)?;
        let delta = scaled.delta.ok_or(Error::UndefinedDelta)?;
        resolved.delta = Some(delta);
        resolved.delta_source = Some(if scaled.delta_from_hint {
            DeltaSource::Config
        } else {
            DeltaSource::Oracle
        });
        resolved.m = match params.m {
            Some(m) => m,
            None => degree_bound(delta, params.epsilon)?,
        };
        resolved.n_v = match params.trace_mode {
            TraceMode::AllColumns => 1 << n,
            TraceMode::Sampled => match params.n_v {
                Some(v) => v,
                None => probe_bound(params.eta, params.epsilon, params.c_nv)?,
            },
        };
        let m = resolved.m;
        ctx.series = Some(step_series(m, delta)?);
        if m <= POWER_ROUTE_MAX_DEGREE {
            let t = (params.moment_mode == MomentMode::Trotter).then_some(params.trotter_t);
            let sens = mapped_sensitivity(m)?;
            let coeffs = &ctx.series.as_ref().expect("series set").coeffs;
            let slack: f64 = sens
                .iter()
                .zip(coeffs)
                .map(|(row, c)| {
                    c.abs()
                        * row
                            .iter()
                            .enumerate()
                            .map(|(q, s)| s * moment_rel_error(q, n, t))
                            .sum::<f64>()
                })
                .sum();
            ctx.conversion_slack = slack;
            if slack <= CONVERSION_BUDGET * params.epsilon {
                ctx.route = MomentRoute::PowerConversion;
            }
        } else {
            ctx.conversion_slack = f64::INFINITY;
        }
        if params.projection == ProjectionMode::Sampled {
            ctx.projector = Some(ComplexProjector::new(g));
        }
        if params.moment_mode == MomentMode::Trotter {
            ctx.trotter = Some(build_trotter_circuit(n, params.trotter_t)?);
        }
        ctx.params = resolved;
        ctx.scaled = Some(scaled);
        Ok(ctx)
    }

    pub fn n(&self) -> usize {
        self.g.n()
    }

    pub fn scale(&self) -> f64 {
        self.scaled.as_ref().map_or(1.0, |s| s.scale)
    }

    fn project_complex(
        &self,
        v: &mut Vec<C64>,
        rng: &mut RngStream,
        st: &mut ProjectionStats,
    ) -> Result<()> {
        match &self.projector {
            Some(p) => *v = p.project(v, rng, st)?,
            None => project_complex_in_place(v, &self.g),
        }
        Ok(())
    }

    fn project_order(
        &self,
        v: &mut Vec<C64>,
        rng: &mut RngStream,
        st: &mut ProjectionStats,
    ) -> Result<()> {
        match self.params.projection {
            ProjectionMode::Sampled => *v = project_order_until(v, self.n(), self.k, rng, st)?,
            ProjectionMode::Exact => project_order_in_place(v, self.k),
        }
        Ok(())
    }

    /// `Δ̃ x = s·P_k P_Γ B P_Γ B x` for `x` already in the range of `P_Γ P_k`.
    fn apply_full(
        &self,
        x: &[C64],
        rng: &mut RngStream,
        st: &mut ProjectionStats,
    ) -> Result<Vec<C64>> {
        let n = self.n();
        let mut t = vec![C64::new(0.0, 0.0); x.len()];
        apply_b_into(n, x, &mut t);
        self.project_complex(&mut t, rng, st)?;
        let mut y = vec![C64::new(0.0, 0.0); x.len()];
        apply_b_into(n, &t, &mut y);
        self.project_complex(&mut y, rng, st)?;
        self.project_order(&mut y, rng, st)?;
        let s = self.scale();
        y.iter_mut().for_each(|a| *a *= s);
        Ok(y)
    }

    /// Moments of the probe given by Hadamard column `b`.
    pub fn probe_moments(
        &self,
        b: usize,
        rng: &mut RngStream,
    ) -> Result<(ProbeMoments, ProjectionStats)> {
        let mut st = ProjectionStats::default();
        let m = self.params.m;
        let v = hadamard_column(self.n(), b);
        let mut w = v;
        self.project_order(&mut w, rng, &mut st)?;
        self.project_complex(&mut w, rng, &mut st)?;
        let mu0: f64 = w.iter().map(|a| a.norm_sqr()).sum();
        let sampled = self.params.projection == ProjectionMode::Sampled;
        let mu = if sampled {
            self.power_moments_full(&w, rng, &mut st)?
        } else {
            self.power_moments_sparse(&w)
        };
        debug_assert!((mu[0] - mu0).abs() <= 1e-12 * mu0.max(1.0));
        let mu1_trotter = match &self.trotter {
            Some(c) if m >= 1 => Some(self.trotter_first_moment(c, &w, rng, &mut st)?),
            _ => None,
        };
        let theta = match self.route {
            MomentRoute::PowerConversion => {
                let mut mu_used = mu.clone();
                if let Some(t1) = mu1_trotter {
                    mu_used[1] = t1;
                }
                mapped_cheb_moments(&mu_used)?
            }
            MomentRoute::Recurrence if sampled => self.recurrence_full(&w, rng, &mut st)?,
            MomentRoute::Recurrence => self.recurrence_sparse(&w),
        };
        Ok((
            ProbeMoments {
                column: b as u64,
                mu,
                theta,
                mu1_trotter,
            },
            st,
        ))
    }

    fn gather(&self, w: &[C64]) -> Vec<f64> {
        self.sparse.basis.iter().map(|&i| w[i].re).collect()
    }

    /// Power moments via the compressed operator (probe amplitudes are real).
    fn power_moments_sparse(&self, w: &[C64]) -> Vec<f64> {
        let m = self.params.m;
        let s = self.scale();
        let mut x = self.gather(w);
        let mut y = vec![0.0; x.len()];
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let mut mu = Vec::with_capacity(m + 1);
        mu.push(dot(&x, &x));
        while mu.len() <= m {
            // x = Δ̃^i w: μ_{2i+1} = ⟨x, Δ̃x⟩, μ_{2i+2} = ⟨Δ̃x, Δ̃x⟩
            self.sparse.apply_scaled(s, &x, &mut y);
            mu.push(dot(&x, &y));
            if mu.len() <= m {
                mu.push(dot(&y, &y));
            }
            std::mem::swap(&mut x, &mut y);
        }
        mu
    }

    /// Power moments from the state sequence
    /// `φ^{(i+1)} = P_Γ P_k^{i mod 2} √s B φ^{(i)}`, `μ^{(i)} = ‖φ^{(i)}‖²`.
    fn power_moments_full(
        &self,
        w: &[C64],
        rng: &mut RngStream,
        st: &mut ProjectionStats,
    ) -> Result<Vec<f64>> {
        let n = self.n();
        let rs = self.scale().sqrt();
        let mut phi = w.to_vec();
        let mut mu = vec![phi.iter().map(|a| a.norm_sqr()).sum::<f64>()];
        for i in 0..self.params.m {
            let mut t = vec![C64::new(0.0, 0.0); phi.len()];
            apply_b_into(n, &phi, &mut t);
            t.iter_mut().for_each(|a| *a *= rs);
            self.project_complex(&mut t, rng, st)?;
            if i % 2 == 1 {
                self.project_order(&mut t, rng, st)?;
            }
            mu.push(t.iter().map(|a| a.norm_sqr()).sum());
            phi = t;
        }
        Ok(mu)
    }

    /// `⟨w|T_j(2Δ̃ − I)|w⟩` by the three-term recurrence on compressed vectors.
    fn recurrence_sparse(&self, w: &[C64]) -> Vec<f64> {
        let m = self.params.m;
        let s = self.scale();
        let w0 = self.gather(w);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let mut theta = Vec::with_capacity(m + 1);
        theta.push(dot(&w0, &w0));
        if m == 0 {
            return theta;
        }
        let mut tmp = vec![0.0; w0.len()];
        let mut prev = w0.clone();
        self.sparse.apply_scaled(s, &prev, &mut tmp);
        let mut cur: Vec<f64> = tmp.iter().zip(&prev).map(|(a, b)| 2.0 * a - b).collect();
        theta.push(dot(&w0, &cur));
        for _ in 2..=m {
            self.sparse.apply_scaled(s, &cur, &mut tmp);
            let next: Vec<f64> = tmp
                .iter()
                .zip(&cur)
                .zip(&prev)
                .map(|((a, c), p)| 2.0 * (2.0 * a - c) - p)
                .collect();
            theta.push(dot(&w0, &next));
            prev = cur;
            cur = next;
        }
        theta
    }

    /// Full-space recurrence with (possibly sampled) projectors.
    fn recurrence_full(
        &self,
        w: &[C64],
        rng: &mut RngStream,
        st: &mut ProjectionStats,
    ) -> Result<Vec<f64>> {
        let m = self.params.m;
        let dot =
            |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(p, q)| (p.conj() * q).re).sum::<f64>();
        let mut theta = vec![dot(w, w)];
        if m == 0 {
            return Ok(theta);
        }
        let mut prev = w.to_vec();
        let a = self.apply_full(&prev, rng, st)?;
        let mut cur: Vec<C64> = a.iter().zip(&prev).map(|(x, p)| 2.0 * x - p).collect();
        theta.push(dot(w, &cur));
        for _ in 2..=m {
            let a = self.apply_full(&cur, rng, st)?;
            let next: Vec<C64> = a
                .iter()
                .zip(&cur)
                .zip(&prev)
                .map(|((x, c), p)| 2.0 * (2.0 * x - c) - p)
                .collect();
            theta.push(dot(w, &next));
            prev = cur;
            cur = next;
        }
        Ok(theta)
    }

    /// `μ^{(1)}` from `M = ⟨w|U P_Γ U|w⟩` with `U` the Trotter circuit:
    /// `μ^{(1)} ≈ s·(‖w‖²(1 − n t²) − Re M)/t²`.
    fn trotter_first_moment(
        &self,
        c: &Circuit,
        w: &[C64],
        rng: &mut RngStream,
        st: &mut ProjectionStats,
    ) -> Result<f64> {
        let n = self.n();
        let t = self.params.trotter_t;
        let norm2: f64 = w.iter().map(|a| a.norm_sqr()).sum();
        if norm2 == 0.0 {
            return Ok(0.0);
        }
        let embed = |x: &[C64]| -> Vec<C64> {
            let mut out = vec![C64::new(0.0, 0.0); x.len() * 2];
            x.iter().enumerate().for_each(|(i, a)| out[i << 1] = *a);
            out
        };
        let s1 = run_circuit(StateVector::from_amps(n + 1, embed(w))?, c)?;
        // ancilla is uncomputed; drop its (numerically zero) excited branch
        let mut mid: Vec<C64> = (0..w.len()).map(|i| s1.amps[i << 1]).collect();
        self.project_complex(&mut mid, rng, st)?;
        let s2 = run_circuit(StateVector::from_amps(n + 1, embed(&mid))?, c)?;
        let m: C64 = w
            .iter()
            .enumerate()
            .map(|(i, a)| a.conj() * s2.amps[i << 1])
            .sum();
        Ok(self.scale() * (norm2 * (1.0 - n as f64 * t * t) - m.re) / (t * t))
    }
}

/// Estimates `χ_k = β_k / |S_k|` with the stochastic Chebyshev method.
///
/// `χ_k = 1 − Σ_l Σ_j c_j θ_l^{(j)} / Σ_l μ_l^{(0)}`; the denominator is the
/// accumulated probe mass, whose expectation is `|S_k|/2^n`.
pub fn estimate_betti(
    g: &Skeleton,
    k: usize,
    params: &EstimatorParams,
    rng: &RngStream,
) -> Result<EstimationReport> {
    let ctx = OrderContext::new(g, k, params)?;
    estimate_with_context(&ctx, rng)
}

/// Runs the probe loop for a prepared context.
pub fn estimate_with_context(ctx: &OrderContext, rng: &RngStream) -> Result<EstimationReport> {
    let start = Instant::now();
    let n = ctx.n();
    let count = ctx.sparse.dim() as u64;
    let scale = ctx.g.epsilon();
    let mut report = EstimationReport {
        k: ctx.k,
        scale: scale.is_finite().then_some(scale),
        n,
        chi: 0.0,
        chi_raw: 0.0,
        dim_estimate: 0.0,
        simplex_count: count,
        beta_estimate: 0.0,
        oracle_beta: None,
        params: ctx.params,
        spectral_scale: ctx.scale(),
        lambda_max_estimate: ctx.scaled.as_ref().map_or(0.0, |s| s.lambda_max_estimate),
        route: ctx.route,
        conversion_slack: ctx.conversion_slack,
        seed: rng.seed(),
        stream: rng.stream(),
        flags: Vec::new(),
        projection_stats: ProjectionStats::default(),
        moments: MomentTable::default(),
        wall_time: Duration::ZERO,
    };
    if count == 0 {
        report.flag(Flag::EmptyOrder);
        report.wall_time = start.elapsed();
        return Ok(report);
    }
    if ctx.route == MomentRoute::Recurrence {
        report.flag(Flag::ConversionFallback);
        if ctx.params.moment_mode == MomentMode::Trotter {
            report.flag(Flag::TrotterMomentUnused);
        }
    }
    let n_v = ctx.params.n_v;
    let all_columns = ctx.params.trace_mode == TraceMode::AllColumns;
    let results: Vec<Result<(ProbeMoments, ProjectionStats)>> = (0..n_v)
        .into_par_iter()
        .map(|l| {
            let mut r = rng.substream(l as u64);
            let b = if all_columns {
                l
            } else {
                r.below(1 << n) as usize
            };
            ctx.probe_moments(b, &mut r)
        })
        .collect();
    let series = ctx.series.as_ref().expect("series set for nonempty order");
    let mut num = 0.0;
    let mut den = 0.0;
    for res in results {
        match res {
            Ok((row, st)) => {
                num += series
                    .coeffs
                    .iter()
                    .zip(&row.theta)
                    .map(|(c, t)| c * t)
                    .sum::<f64>();
                den += row.mu[0];
                report.projection_stats.merge(&st);
                report.moments.rows.push(row);
            }
            Err(_) => report.flag(Flag::ProjectionExhausted),
        }
    }
    let used = report.moments.rows.len();
    if used == 0 || den <= 0.0 {
        report.chi = f64::NAN;
        report.chi_raw = f64::NAN;
        report.beta_estimate = f64::NAN;
        report.wall_time = start.elapsed();
        return Ok(report);
    }
    report.chi_raw = 1.0 - num / den;
    report.chi = report.chi_raw.clamp(0.0, 1.0);
    if report.chi != report.chi_raw {
        report.flag(Flag::Clamped);
    }
    report.dim_estimate = (1u64 << n) as f64 * den / used as f64;
    report.beta_estimate = report.chi * report.dim_estimate;
    report.wall_time = start.elapsed();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle4() -> Skeleton {
        Skeleton::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap()
    }

    #[test]
    fn k3_probe_moments_by_hand() {
        let g = Skeleton::complete(3).unwrap();
        let params = EstimatorParams {
            delta: Some(0.5),
            m: Some(2),
            n_v: Some(1),
            ..Default::default()
        };
        let ctx = OrderContext::new(&g, 1, &params).unwrap();
        let (row, _) = ctx.probe_moments(0, &mut RngStream::new(0)).unwrap();
        assert!((row.mu[0] - 3.0 / 8.0).abs() < 1e-15);
        // Δ_1 = 3·I on the support, so unscaled μ^{(1)} = 9/8
        let s = ctx.scale();
        assert!((row.mu[1] / s - 9.0 / 8.0).abs() < 1e-9);
    }

    #[test]
    fn sampled_projection_moments_match_exact() {
        let g = Skeleton::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)]).unwrap();
        let base = EstimatorParams {
            delta: Some(0.2),
            m: Some(12),
            n_v: Some(1),
            ..Default::default()
        };
        let exact = OrderContext::new(&g, 1, &base).unwrap();
        let sampled = OrderContext::new(
            &g,
            1,
            &EstimatorParams {
                projection: ProjectionMode::Sampled,
                ..base
            },
        )
        .unwrap();
        for b in [0, 5, 17] {
            let (e, _) = exact.probe_moments(b, &mut RngStream::new(1)).unwrap();
            let (s, st) = sampled.probe_moments(b, &mut RngStream::new(1)).unwrap();
            assert!(st.attempts >= st.calls);
            for (x, y) in e.mu.iter().zip(&s.mu) {
                assert!((x - y).abs() < 1e-12, "{x} {y}");
            }
            // power-basis conversion amplifies rounding up to the slack bound
            let tol = 1e-12 + exact.conversion_slack;
            for (x, y) in e.theta.iter().zip(&s.theta) {
                assert!((x - y).abs() < tol, "{x} {y}");
            }
        }
    }

    #[test]
    fn power_route_matches_recurrence_for_small_degree() {
        let g = cycle4();
        let params = EstimatorParams {
            delta: Some(0.4),
            m: Some(6),
            n_v: Some(1),
            ..Default::default()
        };
        let ctx = OrderContext::new(&g, 1, &params).unwrap();
        assert_eq!(ctx.route, MomentRoute::PowerConversion);
        let (row, _) = ctx.probe_moments(3, &mut RngStream::new(0)).unwrap();
        let rec = ctx.recurrence_sparse(&{
            let mut w = hadamard_column(4, 3);
            project_order_in_place(&mut w, 1);
            project_complex_in_place(&mut w, &g);
            w
        });
        for (a, b) in row.theta.iter().zip(&rec) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn trotter_first_moment_close_to_exact() {
        let g = cycle4();
        let params = EstimatorParams {
            delta: Some(0.4),
            m: Some(4),
            n_v: Some(1),
            moment_mode: MomentMode::Trotter,
            trotter_t: 1e-3,
            ..Default::default()
        };
        let ctx = OrderContext::new(&g, 1, &params).unwrap();
        for b in 0..16 {
            let (row, _) = ctx.probe_moments(b, &mut RngStream::new(0)).unwrap();
            let t1 = row.mu1_trotter.unwrap();
            assert!(
                (t1 - row.mu[1]).abs() < 1e-3 * row.mu[0].max(1e-3),
                "{t1} {}",
                row.mu[1]
            );
        }
    }

    #[test]
    fn cycle_all_columns() {
        let params = EstimatorParams {
            trace_mode: TraceMode::AllColumns,
            ..Default::default()
        };
        let r = estimate_betti(&cycle4(), 1, &params, &RngStream::new(0)).unwrap();
        assert_eq!(r.moments.rows.len(), 16);
        assert!((r.chi - 0.25).abs() <= 0.2, "{}", r.chi);
        assert!((r.dim_estimate - 4.0).abs() < 1e-12);
    }

    #[test]
    fn filled_triangle_has_no_loop() {
        let g = Skeleton::complete(3).unwrap();
        let r = estimate_betti(&g, 1, &EstimatorParams::default(), &RngStream::new(2)).unwrap();
        assert!(r.chi.abs() <= 0.2, "{}", r.chi);
    }

    #[test]
    fn full_complex_orders_vanish() {
        let g = Skeleton::complete(5).unwrap();
        for k in 0..5 {
            let r = estimate_betti(
                &g,
                k,
                &EstimatorParams::default(),
                &RngStream::new(k as u64),
            )
            .unwrap();
            assert!(r.chi.abs() <= 0.2, "k={k} chi={}", r.chi);
        }
    }

    #[test]
    fn empty_order_is_flagged() {
        let g = Skeleton::from_edges(4, &[(0, 1)]).unwrap();
        let r = estimate_betti(&g, 2, &EstimatorParams::default(), &RngStream::new(0)).unwrap();
        assert!(r.has_flag(Flag::EmptyOrder));
        assert_eq!(r.chi, 0.0);
    }

    #[test]
    fn seeded_runs_repeat() {
        let p = EstimatorParams::default();
        let a = estimate_betti(&cycle4(), 1, &p, &RngStream::new(9)).unwrap();
        let b = estimate_betti(&cycle4(), 1, &p, &RngStream::new(9)).unwrap();
        assert_eq!(a.chi.to_bits(), b.chi.to_bits());
        assert_eq!(a.moments, b.moments);
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = EstimatorParams {
            epsilon: 1.5,
            ..Default::default()
        };
        assert!(estimate_betti(&cycle4(), 1, &bad, &RngStream::new(0)).is_err());
        let big = EstimatorParams {
            trace_mode: TraceMode::AllColumns,
            ..Default::default()
        };
        let g = Skeleton::complete(11).unwrap();
        assert!(estimate_betti(&g, 1, &big, &RngStream::new(0)).is_err());
    }
}

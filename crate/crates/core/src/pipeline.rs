//! ε-sweep orchestration, reporting and output files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chebyshev::{
    estimate_with_context, EstimationReport, EstimatorParams, Flag, OrderContext,
};
use crate::complex::{
    build_skeleton, load_points, pairwise_distances, DistanceMatrix, InputFormat, Metric, Skeleton,
};
use crate::error::{Error, Result};
use crate::oracle::{exact_betti_ranks, spectrum_summary_real};
use crate::sim::RngStream;
use crate::{N_DENSE_MAX, N_MAX};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "QTDA_WORKERS";

pub const DEFAULT_SEED: u64 = 0x5eed;

/// Scales to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonSpec {
    List(Vec<f64>),
    /// `steps` evenly spaced values from `start` to `stop` inclusive.
    Range {
        start: f64,
        stop: f64,
        steps: usize,
    },
}

impl EpsilonSpec {
    /// Values in ascending order without duplicates.
    pub fn values(&self) -> Result<Vec<f64>> {
        let mut v = match self {
            EpsilonSpec::List(v) => v.clone(),
            EpsilonSpec::Range { start, stop, steps } => {
                if *steps == 0 || stop < start {
                    return Err(Error::Config(format!(
                        "range {start}:{stop}:{steps} needs start <= stop and steps >= 1"
                    )));
                }
                if *steps == 1 {
                    vec![*start]
                } else {
                    let h = (stop - start) / (*steps - 1) as f64;
                    (0..*steps).map(|i| start + h * i as f64).collect()
                }
            }
        };
        if v.is_empty() {
            return Err(Error::Config("no epsilon values".into()));
        }
        if let Some(bad) = v.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(Error::Config(format!(
                "epsilon {bad} must be finite and nonnegative"
            )));
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        Ok(v)
    }
}

impl FromStr for EpsilonSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid epsilon value '{t}'")))
        };
        let parts: Vec<&str> = s.split(':').collect();
        match parts.len() {
            1 => Ok(EpsilonSpec::List(
                s.split(',').map(num).collect::<Result<Vec<_>>>()?,
            )),
            3 => Ok(EpsilonSpec::Range {
                start: num(parts[0])?,
                stop: num(parts[1])?,
                steps: parts[2]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid step count '{}'", parts[2])))?,
            }),
            _ => Err(Error::Config(format!(
                "epsilon must be 'a,b,c' or 'start:stop:steps', got '{s}'"
            ))),
        }
    }
}

/// Orders `k` to evaluate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orders {
    All,
    List(Vec<usize>),
}

impl Orders {
    pub fn resolve(&self, n: usize) -> Result<Vec<usize>> {
        let mut v = match self {
            Orders::All => (0..n).collect(),
            Orders::List(v) => v.clone(),
        };
        if let Some(&k) = v.iter().find(|&&k| k >= n) {
            return Err(Error::Config(format!(
                "order {k} outside 0..={} for {n} points",
                n.saturating_sub(1)
            )));
        }
        if v.is_empty() {
            return Err(Error::Config("no orders requested".into()));
        }
        v.sort_unstable();
        v.dedup();
        Ok(v)
    }
}

impl FromStr for Orders {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Orders::All);
        }
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("invalid order '{t}'")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Orders::List)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub format: InputFormat,
    pub metric: Metric,
    pub epsilon: EpsilonSpec,
    pub orders: Orders,
    pub params: EstimatorParams,
    pub seed: u64,
    pub oracle: bool,
    /// Output directory.
    pub out: PathBuf,
    /// Keep per-probe moment tables in the report records.
    pub keep_moments: bool,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            format: InputFormat::Csv,
            metric: Metric::Euclidean,
            epsilon: EpsilonSpec::List(vec![1.0]),
            orders: Orders::All,
            params: EstimatorParams::default(),
            seed: DEFAULT_SEED,
            oracle: false,
            out: out.into(),
            keep_moments: false,
        }
    }

    /// Checks everything that does not depend on the input data.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.epsilon.values()?;
        if let Orders::List(v) = &self.orders {
            if v.is_empty() {
                return Err(Error::Config("no orders requested".into()));
            }
        }
        Ok(())
    }
}

/// One `(ε, k)` point of the Betti curve. Estimated values are reduced
/// Betti numbers; the unreduced fields are filled for `k = 0` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epsilon: f64,
    pub k: usize,
    pub n: usize,
    pub chi: f64,
    pub beta_estimate: f64,
    pub beta_oracle: Option<usize>,
    /// `reduced`, or `abne` when δ exceeds the measured spectral gap.
    pub label: String,
    pub beta_unreduced_estimate: Option<f64>,
    pub beta_unreduced_oracle: Option<usize>,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BettiCurve {
    pub points: Vec<CurvePoint>,
}

/// Reports one record per cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub epsilon: f64,
    pub k: usize,
    /// Measured smallest nonzero eigenvalue of the scaled Laplacian.
    pub measured_gap: Option<f64>,
    pub report: EstimationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub points: usize,
    pub epsilons: Vec<f64>,
    pub orders: Vec<usize>,
    pub cells: usize,
    pub failures: usize,
    pub abne_cells: usize,
    pub seed: u64,
    pub oracle: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub curve: BettiCurve,
    pub records: Vec<CellRecord>,
    pub summary: RunSummary,
}

impl RunOutput {
    pub fn has_failures(&self) -> bool {
        self.summary.failures > 0
    }
}

fn is_failure(r: &EstimationReport) -> bool {
    !r.chi.is_finite() || r.flags.iter().any(|f| f.is_failure())
}

/// Substream for one cell, keyed by the scale and order only.
pub fn cell_stream(root: &RngStream, epsilon: f64, k: usize) -> RngStream {
    root.substream(epsilon.to_bits()).substream(k as u64)
}

fn run_cell(
    g: &Skeleton,
    k: usize,
    config: &RunConfig,
    root: &RngStream,
) -> Result<(CellRecord, CurvePoint)> {
    let ctx = OrderContext::new(g, k, &config.params)?;
    let rng = cell_stream(root, g.epsilon(), k);
    let mut report = estimate_with_context(&ctx, &rng)?;
    let mut measured_gap = None;
    if let (Some(scaled), Some(d)) = (ctx.scaled.as_ref(), config.params.delta) {
        if g.n() <= N_DENSE_MAX {
            let spec = spectrum_summary_real(&ctx.sparse.to_dense_checked()?, None)?;
            measured_gap = spec.smallest_nonzero.map(|l| scaled.scale * l);
            if measured_gap.is_some_and(|gap| d > gap * (1.0 + 1e-9)) {
                report.flag(Flag::Abne);
            }
        }
    } else {
        measured_gap = ctx.params.delta;
    }
    if config.oracle {
        report.oracle_beta = Some(exact_betti_ranks(g, k)?);
    }
    if !config.keep_moments {
        report.moments.rows.clear();
    }
    let point = CurvePoint {
        epsilon: g.epsilon(),
        k,
        n: g.n(),
        chi: report.chi,
        beta_estimate: report.beta_estimate,
        beta_oracle: report.oracle_beta,
        label: if report.has_flag(Flag::Abne) {
            "abne"
        } else {
            "reduced"
        }
        .into(),
        beta_unreduced_estimate: None,
        beta_unreduced_oracle: None,
        flags: report.flags.clone(),
    };
    let record = CellRecord {
        epsilon: g.epsilon(),
        k,
        measured_gap,
        report,
    };
    Ok((record, point))
}

/// Adds unreduced `β_0 = β̃_0 + 1` to `k = 0` points of nonempty complexes.
pub fn report_unreduced(mut curve: BettiCurve) -> BettiCurve {
    for p in curve.points.iter_mut().filter(|p| p.k == 0) {
        if p.n == 0 {
            if !p.flags.contains(&Flag::EmptyComplex) {
                p.flags.push(Flag::EmptyComplex);
            }
            continue;
        }
        p.beta_unreduced_estimate = Some(p.beta_estimate + 1.0);
        p.beta_unreduced_oracle = p.beta_oracle.map(|b| b + 1);
    }
    curve
}

/// Loads the input and computes its distance matrix.
pub fn load_distances(config: &RunConfig) -> Result<DistanceMatrix> {
    let file = File::open(&config.input)?;
    let cloud = load_points(std::io::BufReader::new(file), config.format)?;
    pairwise_distances(&cloud, config.metric)
}

fn check_limits(n: usize, config: &RunConfig) -> Result<()> {
    use crate::chebyshev::{TraceMode, ALL_COLUMNS_N_MAX};
    let limit = if config.params.trace_mode == TraceMode::AllColumns {
        ALL_COLUMNS_N_MAX
    } else {
        N_MAX
    };
    if n > limit {
        return Err(Error::TooLarge {
            what: "points for the selected mode",
            dim: n,
            limit,
        });
    }
    if config.oracle && n > N_DENSE_MAX {
        return Err(Error::TooLarge {
            what: "points for the oracle",
            dim: n,
            limit: N_DENSE_MAX,
        });
    }
    Ok(())
}

/// Runs every `(ε, k)` cell for a distance matrix. Cells run in parallel;
/// results are ordered by `(ε, k)`.
pub fn run_distances(d: &DistanceMatrix, config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let n = d.n();
    check_limits(n, config)?;
    let epsilons = config.epsilon.values()?;
    let orders = config.orders.resolve(n)?;
    let root = RngStream::new(config.seed);
    let skeletons = epsilons
        .iter()
        .map(|&e| build_skeleton(d, e))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, usize)> = (0..skeletons.len())
        .flat_map(|i| orders.iter().map(move |&k| (i, k)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(i, k)| run_cell(&skeletons[i], k, config, &root))
        .collect::<Result<Vec<_>>>()?;
    let (records, points): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let curve = report_unreduced(BettiCurve { points });
    let summary = RunSummary {
        points: n,
        cells: records.len(),
        failures: records.iter().filter(|r| is_failure(&r.report)).count(),
        abne_cells: records
            .iter()
            .filter(|r| r.report.has_flag(Flag::Abne))
            .count(),
        epsilons,
        orders,
        seed: config.seed,
        oracle: config.oracle,
    };
    Ok(RunOutput {
        curve,
        records,
        summary,
    })
}

/// Loads the input and runs the sweep.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let d = load_distances(config)?;
    run_distances(&d, config)
}

pub const REPORTS_FILE: &str = "reports.jsonl";
pub const CURVE_FILE: &str = "betti_curve.csv";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes `reports.jsonl` (one record per cell, then `{"summary": ...}`)
/// and `betti_curve.csv` into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(REPORTS_FILE))?);
    for r in &out.records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    serde_json::to_writer(&mut w, &serde_json::json!({ "summary": out.summary }))?;
    writeln!(w)?;
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join(CURVE_FILE))?);
    writeln!(
        w,
        "epsilon,k,chi,beta_est,beta_oracle,label,beta_unreduced_est,beta_unreduced_oracle,flags"
    )?;
    for p in &out.curve.points {
        let flags: Vec<String> = p
            .flags
            .iter()
            .map(|f| serde_json::to_value(f).map(|v| v.as_str().unwrap_or_default().to_owned()))
            .collect::<std::result::Result<_, _>>()?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            p.epsilon,
            p.k,
            p.chi,
            p.beta_estimate,
            opt(p.beta_oracle),
            p.label,
            opt(p.beta_unreduced_estimate),
            opt(p.beta_unreduced_oracle),
            flags.join(";")
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Worker count from the environment, if set.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(Error::Config(format!(
                "{WORKERS_ENV}='{s}' must be a positive integer"
            ))),
            Ok(v) => Ok(Some(v)),
        },
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> DistanceMatrix {
        let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let rows: Vec<Vec<f64>> = pts
            .iter()
            .map(|a: &(f64, f64)| {
                pts.iter()
                    .map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
                    .collect()
            })
            .collect();
        DistanceMatrix::from_rows(&rows).unwrap()
    }

    fn config() -> RunConfig {
        let mut c = RunConfig::new("unused", "unused");
        c.epsilon = EpsilonSpec::List(vec![0.5, 1.1, 1.5]);
        c.orders = Orders::List(vec![0, 1]);
        c.oracle = true;
        c
    }

    #[test]
    fn parses_epsilon_specs() {
        assert_eq!(
            "0.5, 0.1,0.5"
                .parse::<EpsilonSpec>()
                .unwrap()
                .values()
                .unwrap(),
            vec![0.1, 0.5]
        );
        let r: EpsilonSpec = "0:1:5".parse().unwrap();
        assert_eq!(r.values().unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!("1:0:3".parse::<EpsilonSpec>().unwrap().values().is_err());
        assert!("-1".parse::<EpsilonSpec>().unwrap().values().is_err());
        assert!("a,b".parse::<EpsilonSpec>().is_err());
        assert!("1:2".parse::<EpsilonSpec>().is_err());
    }

    #[test]
    fn parses_orders() {
        assert_eq!("all".parse::<Orders>().unwrap(), Orders::All);
        assert_eq!(
            "2,0,2".parse::<Orders>().unwrap().resolve(3).unwrap(),
            vec![0, 2]
        );
        assert!("3".parse::<Orders>().unwrap().resolve(3).is_err());
        assert_eq!(Orders::All.resolve(3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn square_sweep_oracle() {
        let out = run_distances(&square(), &config()).unwrap();
        assert_eq!(out.curve.points.len(), 6);
        let at = |e: f64, k: usize| {
            out.curve
                .points
                .iter()
                .find(|p| p.epsilon == e && p.k == k)
                .unwrap()
        };
        assert_eq!(at(1.1, 1).beta_oracle, Some(1));
        assert_eq!(at(1.5, 1).beta_oracle, Some(0));
        // four isolated points: reduced 3, unreduced 4
        assert_eq!(at(0.5, 0).beta_oracle, Some(3));
        assert_eq!(at(0.5, 0).beta_unreduced_oracle, Some(4));
        assert_eq!(at(1.1, 0).beta_unreduced_oracle, Some(1));
        assert!(at(0.5, 1).flags.contains(&Flag::EmptyOrder));
        assert!(!out.has_failures());
    }

    #[test]
    fn empty_order_is_flagged_not_errored() {
        let mut c = config();
        c.orders = Orders::List(vec![3]);
        c.epsilon = EpsilonSpec::List(vec![1.1]);
        let out = run_distances(&square(), &c).unwrap();
        assert!(out.curve.points[0].flags.contains(&Flag::EmptyOrder));
        assert_eq!(out.curve.points[0].chi, 0.0);
    }

    #[test]
    fn abne_label_when_delta_too_large() {
        let mut c = config();
        c.epsilon = EpsilonSpec::List(vec![1.1]);
        c.orders = Orders::List(vec![1]);
        c.params.delta = Some(0.9);
        let out = run_distances(&square(), &c).unwrap();
        assert_eq!(out.curve.points[0].label, "abne");
        assert_eq!(out.summary.abne_cells, 1);
    }

    #[test]
    fn unreduced_adjustment() {
        let p = |k, n, b| CurvePoint {
            epsilon: 1.0,
            k,
            n,
            chi: 0.0,
            beta_estimate: b,
            beta_oracle: Some(b as usize),
            label: "reduced".into(),
            beta_unreduced_estimate: None,
            beta_unreduced_oracle: None,
            flags: vec![],
        };
        let c = report_unreduced(BettiCurve {
            points: vec![p(0, 3, 0.0), p(0, 4, 1.0), p(1, 4, 1.0), p(0, 0, 0.0)],
        });
        assert_eq!(c.points[0].beta_unreduced_oracle, Some(1));
        assert_eq!(c.points[1].beta_unreduced_oracle, Some(2));
        assert_eq!(c.points[2].beta_unreduced_oracle, None);
        assert!(c.points[3].flags.contains(&Flag::EmptyComplex));
        assert_eq!(c.points[3].beta_unreduced_estimate, None);
    }

    #[test]
    fn outputs_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let c = config();
        for sub in ["a", "b"] {
            let out = run_distances(&square(), &c).unwrap();
            write_outputs(&out, &dir.path().join(sub)).unwrap();
        }
        for f in [REPORTS_FILE, CURVE_FILE] {
            let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
    }

    #[test]
    fn limits_checked_before_compute() {
        let mut c = config();
        c.oracle = true;
        let rows = vec![vec![0.0; 13]; 13];
        let d = DistanceMatrix::from_rows(&rows).unwrap();
        assert!(matches!(run_distances(&d, &c), Err(Error::TooLarge { .. })));
    }
}

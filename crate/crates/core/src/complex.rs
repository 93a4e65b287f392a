//! Point ingestion, distance matrices, ε-skeletons and clique membership.

use std::fmt;
use std::io::Read;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::N_MAX;

/// Largest vertex count representable by a [`SimplexMask`].
pub const MASK_BITS: usize = 64;

/// A set of points in a common Euclidean space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl PointCloud {
    /// Validates and wraps a list of coordinate rows.
    pub fn new(points: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::NoPoints);
        }
        let dim = points[0].len();
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::Dimension {
                    line: i + 1,
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { line: i + 1 });
            }
        }
        if let Some(l) = &labels {
            if l.len() != points.len() {
                return Err(Error::LengthMismatch {
                    expected: points.len(),
                    found: l.len(),
                });
            }
        }
        Ok(Self { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Returns the cloud with rows reordered so that row `i` is old row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            points: perm.iter().map(|&i| self.points[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| perm.iter().map(|&i| l[i].clone()).collect()),
        }
    }
}

/// Input text format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown format '{other}'"))),
        }
    }
}

#[derive(Deserialize)]
struct JsonPoints {
    #[serde(alias = "distances")]
    points: Vec<Vec<serde_json::Value>>,
    #[serde(default)]
    labels: Option<Vec<serde_json::Value>>,
}

/// Reads one point per row. Row order is preserved; blank lines and lines
/// starting with `#` are skipped in CSV input. JSON input is an object with
/// a `points` array (alias `distances` for precomputed matrices) and optional
/// `labels`. For JSON, reported line numbers are 1-based row indices.
pub fn load_points<R: Read>(source: R, format: InputFormat) -> Result<PointCloud> {
    match format {
        InputFormat::Csv => load_csv(source),
        InputFormat::Json => load_json(source),
    }
}

fn load_csv<R: Read>(source: R) -> Result<PointCloud> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut points: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record
            .position()
            .map_or(points.len() + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("cannot parse '{field}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { line });
            }
            row.push(v);
        }
        if let Some(first) = points.first() {
            if first.len() != row.len() {
                return Err(Error::Dimension {
                    line,
                    expected: first.len(),
                    found: row.len(),
                });
            }
        }
        points.push(row);
    }
    PointCloud::new(points, None)
}

fn load_json<R: Read>(source: R) -> Result<PointCloud> {
    let raw: JsonPoints = serde_json::from_reader(source).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    let mut points = Vec::with_capacity(raw.points.len());
    for (i, row) in raw.points.iter().enumerate() {
        let line = i + 1;
        let mut out = Vec::with_capacity(row.len());
        for v in row {
            let x = v.as_f64().ok_or_else(|| Error::Parse {
                line,
                msg: format!("cannot parse '{v}' as a number"),
            })?;
            out.push(x);
        }
        points.push(out);
    }
    let labels = raw.labels.map(|ls| {
        ls.into_iter()
            .map(|v| match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            })
            .collect()
    });
    PointCloud::new(points, labels)
}

/// Distance function used to build the distance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Manhattan,
    /// Rows of the cloud already hold the distance matrix.
    Precomputed,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Self::Euclidean),
            "manhattan" => Ok(Self::Manhattan),
            "precomputed" => Ok(Self::Precomputed),
            other => Err(Error::Config(format!("unknown metric '{other}'"))),
        }
    }
}

/// Symmetric matrix of nonnegative pairwise distances with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates a row-major square matrix. Asymmetry up to 1e-12 is
    /// tolerated and symmetrized by averaging.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::NoPoints);
        }
        let mut d = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidDistance(format!(
                    "row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidDistance(format!(
                        "non-finite entry ({i}, {j})"
                    )));
                }
                if v < 0.0 {
                    return Err(Error::InvalidDistance(format!("negative entry ({i}, {j})")));
                }
                d[i * n + j] = v;
            }
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(Error::InvalidDistance(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let (a, b) = (d[i * n + j], d[j * n + i]);
                if (a - b).abs() > 1e-12 {
                    return Err(Error::InvalidDistance(format!(
                        "asymmetric entries ({i}, {j}): {a} vs {b}"
                    )));
                }
                let m = 0.5 * (a + b);
                d[i * n + j] = m;
                d[j * n + i] = m;
            }
        }
        Ok(Self { n, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    /// Sorted distinct off-diagonal values.
    pub fn distinct_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.n)
            .flat_map(|i| ((i + 1)..self.n).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

/// Computes all pairwise distances under `metric`.
pub fn pairwise_distances(cloud: &PointCloud, metric: Metric) -> Result<DistanceMatrix> {
    let n = cloud.len();
    if n == 0 {
        return Err(Error::NoPoints);
    }
    let f: fn(&[f64], &[f64]) -> f64 = match metric {
        Metric::Precomputed => return DistanceMatrix::from_rows(&cloud.points),
        Metric::Euclidean => |a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        },
        Metric::Manhattan => |a, b| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
    };
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = f(&cloud.points[i], &cloud.points[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    Ok(DistanceMatrix { n, d })
}

/// Vertex set of a simplex; bit `i` set means vertex `i` is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimplexMask(pub u64);

impl SimplexMask {
    pub fn from_vertices(vs: &[usize]) -> Self {
        Self(vs.iter().fold(0u64, |m, &v| m | (1u64 << v)))
    }

    pub fn weight(self) -> u32 {
        self.0.count_ones()
    }

    /// Order of the simplex (`weight - 1`); `None` for the empty simplex.
    pub fn order(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.count_ones() as usize - 1)
    }

    pub fn vertices(self) -> impl Iterator<Item = usize> {
        let mut m = self.0;
        std::iter::from_fn(move || {
            (m != 0).then(|| {
                let v = m.trailing_zeros() as usize;
                m &= m - 1;
                v
            })
        })
    }

    /// Statevector index: vertex `i` is the `i`-th most significant of `n` bits.
    pub fn to_index(self, n: usize) -> usize {
        if n == 0 {
            return 0;
        }
        (self.0.reverse_bits() >> (64 - n)) as usize
    }

    pub fn from_index(idx: usize, n: usize) -> Self {
        if n == 0 {
            return Self(0);
        }
        Self((idx as u64).reverse_bits() >> (64 - n))
    }
}

impl fmt::Display for SimplexMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, v) in self.vertices().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("}")
    }
}

/// The ε-close adjacency graph of a point set.
#[derive(Clone)]
pub struct Skeleton {
    n: usize,
    adj: Vec<u64>,
    epsilon: f64,
    table: OnceLock<Vec<u64>>,
}

impl fmt::Debug for Skeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Skeleton")
            .field("n", &self.n)
            .field("epsilon", &self.epsilon)
            .field("edges", &self.edges())
            .finish()
    }
}

impl PartialEq for Skeleton {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.adj == other.adj
    }
}

fn check_vertex_count(n: usize) -> Result<()> {
    if n > MASK_BITS {
        return Err(Error::TooLarge {
            what: "skeleton vertices",
            dim: n,
            limit: MASK_BITS,
        });
    }
    Ok(())
}

impl Skeleton {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        check_vertex_count(n)?;
        let mut adj = vec![0u64; n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(out_of_range("vertex", i.max(j) as i64, 0, n as i64 - 1));
            }
            if i != j {
                adj[i] |= 1 << j;
                adj[j] |= 1 << i;
            }
        }
        Ok(Self::from_adjacency(n, adj, f64::NAN))
    }

    fn from_adjacency(n: usize, adj: Vec<u64>, epsilon: f64) -> Self {
        Self {
            n,
            adj,
            epsilon,
            table: OnceLock::new(),
        }
    }

    pub fn complete(n: usize) -> Result<Self> {
        check_vertex_count(n)?;
        let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let adj = (0..n).map(|i| all & !(1u64 << i)).collect();
        Ok(Self::from_adjacency(n, adj, f64::INFINITY))
    }

    pub fn empty(n: usize) -> Result<Self> {
        check_vertex_count(n)?;
        Ok(Self::from_adjacency(n, vec![0; n], 0.0))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Resolution used to build the skeleton (NaN when built from an edge list).
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adj[i] >> j & 1 == 1
    }

    /// Neighbour bitmask of vertex `i`.
    pub fn neighbours(&self, i: usize) -> u64 {
        self.adj[i]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.adjacent(i, j) {
                    e.push((i, j));
                }
            }
        }
        e
    }

    pub fn is_complete(&self) -> bool {
        (0..self.n).all(|i| self.adj[i].count_ones() as usize == self.n - 1)
    }

    /// Relabels vertices so that new vertex `i` is old vertex `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; self.n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let adj = perm
            .iter()
            .map(|&old| {
                SimplexMask(self.adj[old])
                    .vertices()
                    .fold(0u64, |m, v| m | 1 << inv[v])
            })
            .collect();
        Self::from_adjacency(self.n, adj, self.epsilon)
    }

    /// Clique membership bitset over statevector indices (`n <= N_MAX`).
    fn table(&self) -> &[u64] {
        self.table.get_or_init(|| {
            let n = self.n;
            let size = 1usize << n;
            // index bit p corresponds to vertex n-1-p
            let adj_idx: Vec<u64> = (0..n)
                .map(|p| {
                    let v = n - 1 - p;
                    SimplexMask(self.adj[v])
                        .vertices()
                        .fold(0u64, |m, u| m | 1 << (n - 1 - u))
                })
                .collect();
            let mut bits = vec![0u64; size.div_ceil(64)];
            let mut member = vec![false; size];
            member[0] = true;
            for idx in 1..size {
                let low = idx.trailing_zeros() as usize;
                let rest = idx & (idx - 1);
                member[idx] = member[rest] && (adj_idx[low] & rest as u64) == rest as u64;
            }
            for (idx, &m) in member.iter().enumerate() {
                if m {
                    bits[idx >> 6] |= 1 << (idx & 63);
                }
            }
            bits
        })
    }

    /// Membership of a statevector basis index in the clique complex.
    pub fn contains_index(&self, idx: usize) -> bool {
        if self.n <= N_MAX {
            self.table()[idx >> 6] >> (idx & 63) & 1 == 1
        } else {
            in_complex(SimplexMask::from_index(idx, self.n), self)
        }
    }

    /// Statevector indices of all order-`k` simplices in the complex, ascending.
    pub fn simplex_indices(&self, k: usize) -> Vec<usize> {
        let w = k + 1;
        if w > self.n {
            return Vec::new();
        }
        let mut out = Vec::new();
        for_each_weight(self.n, w, |idx| {
            if self.contains_index(idx) {
                out.push(idx);
            }
        });
        out
    }
}

/// Calls `f` on every `n`-bit value of the given popcount, ascending.
pub fn for_each_weight(n: usize, w: usize, mut f: impl FnMut(usize)) {
    if w > n {
        return;
    }
    if w == 0 {
        f(0);
        return;
    }
    let limit = 1usize << n;
    let mut x = (1usize << w) - 1;
    while x < limit {
        f(x);
        let c = x & x.wrapping_neg();
        let r = x + c;
        x = (((r ^ x) >> 2) / c) | r;
    }
}

/// Builds the ε-skeleton: vertices `i != j` are adjacent when `d[i][j] <= ε`.
pub fn build_skeleton(d: &DistanceMatrix, epsilon: f64) -> Result<Skeleton> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            msg: format!("{epsilon} must be finite and nonnegative"),
        });
    }
    let n = d.n();
    check_vertex_count(n)?;
    let mut adj = vec![0u64; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if d.get(i, j) <= epsilon {
                adj[i] |= 1 << j;
                adj[j] |= 1 << i;
            }
        }
    }
    Ok(Skeleton::from_adjacency(n, adj, epsilon))
}

/// Clique test. The empty simplex and single vertices are always members.
pub fn in_complex(s: SimplexMask, g: &Skeleton) -> bool {
    let bits = s.0;
    SimplexMask(bits)
        .vertices()
        .all(|v| g.adj[v] & bits == bits & !(1u64 << v))
}

/// Simplex counts of one order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexStats {
    pub k: usize,
    pub count: u64,
    pub total: u64,
    pub zeta: f64,
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

fn count_cliques(g: &Skeleton, size: usize, candidates: u64, depth: usize) -> u64 {
    if depth == size {
        return 1;
    }
    let mut total = 0;
    let mut c = candidates;
    while c != 0 {
        let v = c.trailing_zeros() as usize;
        c &= c - 1;
        // only extend with higher-numbered neighbours to count each clique once
        let higher = if v == 63 { 0 } else { !((1u64 << (v + 1)) - 1) };
        total += count_cliques(g, size, candidates & g.adj[v] & higher, depth + 1);
    }
    total
}

/// Counts order-`k` simplices of the clique complex.
pub fn complex_stats(g: &Skeleton, k: usize) -> Result<ComplexStats> {
    let n = g.n();
    if n == 0 || k > n - 1 {
        return Err(out_of_range("k", k as i64, 0, n as i64 - 1));
    }
    let count = if n <= N_MAX {
        let mut c = 0u64;
        for_each_weight(n, k + 1, |idx| c += u64::from(g.contains_index(idx)));
        c
    } else {
        let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        count_cliques(g, k + 1, all, 0)
    };
    let total = binomial(n as u64, k as u64 + 1);
    Ok(ComplexStats {
        k,
        count,
        total,
        zeta: count as f64 / total as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> PointCloud {
        PointCloud::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], None).unwrap()
    }

    #[test]
    fn csv_rows_parse_in_order() {
        let c = load_points("0,0\n1,0\n0,1\n".as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.dim(), 2);
        assert_eq!(c.points[1], vec![1.0, 0.0]);
    }

    #[test]
    fn empty_stream_is_no_points() {
        let e = load_points("".as_bytes(), InputFormat::Csv).unwrap_err();
        assert!(matches!(e, Error::NoPoints));
        assert_eq!(e.to_string(), "no points");
    }

    #[test]
    fn bad_field_reports_line() {
        let e = load_points("0,0\nabc,1\n".as_bytes(), InputFormat::Csv).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
    }

    #[test]
    fn ragged_rows_rejected() {
        let e = load_points("0,0\n1,0,2\n".as_bytes(), InputFormat::Csv).unwrap_err();
        assert!(matches!(
            e,
            Error::Dimension {
                line: 2,
                expected: 2,
                found: 3
            }
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let e = load_points("0,0\ninf,1\n".as_bytes(), InputFormat::Csv).unwrap_err();
        assert!(matches!(e, Error::NonFinite { line: 2 }));
    }

    #[test]
    fn json_points_and_labels() {
        let src = r#"{"points": [[0,0],[1,0]], "labels": ["a", 7]}"#;
        let c = load_points(src.as_bytes(), InputFormat::Json).unwrap();
        assert_eq!(c.labels.unwrap(), vec!["a".to_string(), "7".to_string()]);
        let e = load_points(r#"{"points": [[0,"x"]]}"#.as_bytes(), InputFormat::Json);
        assert!(matches!(e, Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn euclidean_and_manhattan() {
        let c = PointCloud::new(vec![vec![0.0, 0.0], vec![3.0, 4.0]], None).unwrap();
        assert_eq!(
            pairwise_distances(&c, Metric::Euclidean).unwrap().get(0, 1),
            5.0
        );
        let c = PointCloud::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]], None).unwrap();
        assert_eq!(
            pairwise_distances(&c, Metric::Manhattan).unwrap().get(0, 1),
            2.0
        );
        let c = PointCloud::new(vec![vec![2.0, 3.0]], None).unwrap();
        let d = pairwise_distances(&c, Metric::Euclidean).unwrap();
        assert_eq!((d.n(), d.get(0, 0)), (1, 0.0));
    }

    #[test]
    fn precomputed_validation() {
        let ok = PointCloud::new(vec![vec![0.0, 2.0], vec![2.0 + 1e-13, 0.0]], None).unwrap();
        let d = pairwise_distances(&ok, Metric::Precomputed).unwrap();
        assert_eq!(d.get(0, 1), d.get(1, 0));
        let asym = PointCloud::new(vec![vec![0.0, 2.0], vec![2.1, 0.0]], None).unwrap();
        assert!(pairwise_distances(&asym, Metric::Precomputed).is_err());
        let neg = PointCloud::new(vec![vec![0.0, -1.0], vec![-1.0, 0.0]], None).unwrap();
        assert!(pairwise_distances(&neg, Metric::Precomputed).is_err());
    }

    #[test]
    fn skeleton_edges_inclusive() {
        let d = pairwise_distances(&tri(), Metric::Euclidean).unwrap();
        assert_eq!(
            build_skeleton(&d, 1.0).unwrap().edges(),
            vec![(0, 1), (0, 2)]
        );
        assert_eq!(build_skeleton(&d, 1.5).unwrap().edges().len(), 3);
        assert!(build_skeleton(&d, 0.0).unwrap().edges().is_empty());
        assert!(build_skeleton(&d, -1.0).is_err());
    }

    #[test]
    fn clique_membership() {
        let k3 = Skeleton::complete(3).unwrap();
        let path = Skeleton::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let full = SimplexMask::from_vertices(&[0, 1, 2]);
        assert!(in_complex(full, &k3));
        assert!(!in_complex(full, &path));
        assert!(in_complex(SimplexMask(0), &path));
        assert!(in_complex(SimplexMask(0b100), &Skeleton::empty(3).unwrap()));
    }

    #[test]
    fn index_roundtrip_msb_convention() {
        // vertex 0 is the most significant bit
        assert_eq!(SimplexMask::from_vertices(&[0]).to_index(3), 0b100);
        assert_eq!(SimplexMask::from_vertices(&[2]).to_index(3), 0b001);
        for idx in 0..64 {
            assert_eq!(SimplexMask::from_index(idx, 6).to_index(6), idx);
        }
    }

    #[test]
    fn table_matches_direct_test() {
        let g = Skeleton::from_edges(5, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (2, 4)]).unwrap();
        for idx in 0..32 {
            assert_eq!(
                g.contains_index(idx),
                in_complex(SimplexMask::from_index(idx, 5), &g)
            );
        }
    }

    #[test]
    fn stats_examples() {
        let k3 = Skeleton::complete(3).unwrap();
        let s = complex_stats(&k3, 1).unwrap();
        assert_eq!((s.count, s.zeta), (3, 1.0));
        let path = Skeleton::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let s = complex_stats(&path, 1).unwrap();
        assert_eq!(s.count, 2);
        assert!((s.zeta - 2.0 / 3.0).abs() < 1e-15);
        let s = complex_stats(&Skeleton::complete(4).unwrap(), 2).unwrap();
        assert_eq!((s.count, s.zeta), (4, 1.0));
        assert!(complex_stats(&k3, 3).is_err());
    }

    #[test]
    fn clique_recursion_matches_enumeration() {
        let g = Skeleton::from_edges(6, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (2, 4), (4, 5)])
            .unwrap();
        for k in 0..6 {
            let all = (1u64 << 6) - 1;
            assert_eq!(
                count_cliques(&g, k + 1, all, 0),
                complex_stats(&g, k).unwrap().count
            );
        }
    }

    #[test]
    fn gosper_enumerates_binomial() {
        let mut c = 0;
        for_each_weight(10, 4, |x| {
            assert_eq!(x.count_ones(), 4);
            c += 1;
        });
        assert_eq!(c, 210);
        assert_eq!(binomial(64, 32), 1832624140942590534);
    }

    #[test]
    fn permutation_relabels_edges() {
        let g = Skeleton::from_edges(3, &[(0, 1)]).unwrap();
        let p = g.permuted(&[2, 0, 1]);
        assert_eq!(p.edges(), vec![(1, 2)]);
    }
}

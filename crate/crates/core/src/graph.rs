//! Undirected weighted graphs on `D` nodes.
//!
//! The free variables of an adjacency matrix are its strict upper triangle.
//! Every packed vector in this crate (edge weights, pairwise costs) uses the
//! same row-major order over pairs `i < j`:
//!
//! ```text
//! (0,1) (0,2) ... (0,D-1) (1,2) ... (1,D-1) ... (D-2,D-1)
//! ```
//!
//! `S` denotes the linear degree operator `Sw = W1`; its adjoint maps a node
//! vector `d` to the pair vector `(d_i + d_j)`.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{FgcError, Result};

/// Observed or filtered signals, one row per node and one column per sample.
pub type SignalMatrix = DMatrix<f64>;

/// Degrees below this are treated as isolated nodes by the log barrier.
pub const MIN_DEGREE: f64 = 1e-12;

/// Number of node pairs `D(D-1)/2`.
pub fn num_pairs(num_nodes: usize) -> usize {
    num_nodes * num_nodes.saturating_sub(1) / 2
}

/// Inverse of [`num_pairs`], if `len` is a triangular number.
pub fn nodes_for_pairs(len: usize) -> Option<usize> {
    // D = (1 + sqrt(1 + 8P)) / 2
    let approx = ((1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    (approx.saturating_sub(1)..=approx + 1).find(|&d| d >= 2 && num_pairs(d) == len)
}

/// Position of pair `(i, j)`, `i < j`, in the packed order.
#[inline]
pub fn pair_index(i: usize, j: usize, num_nodes: usize) -> usize {
    debug_assert!(i < j && j < num_nodes);
    i * num_nodes - i * (i + 1) / 2 + (j - i - 1)
}

/// Iterator over all pairs `(i, j)`, `i < j`, in packed order.
pub fn pairs(num_nodes: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..num_nodes).flat_map(move |i| ((i + 1)..num_nodes).map(move |j| (i, j)))
}

/// Packed upper-triangular edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    num_nodes: usize,
}

impl WeightVector {
    pub fn new(values: Vec<f64>, num_nodes: usize) -> Result<Self> {
        if num_nodes < 2 {
            return Err(FgcError::InvalidShape(format!(
                "a graph needs at least 2 nodes, got {num_nodes}"
            )));
        }
        if values.len() != num_pairs(num_nodes) {
            return Err(FgcError::InvalidShape(format!(
                "weight vector of length {} does not match D = {num_nodes} (expected {})",
                values.len(),
                num_pairs(num_nodes)
            )));
        }
        if let Some(bad) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(FgcError::InvalidParameter(format!(
                "edge weight {bad} is {} (weights must be finite and nonnegative)",
                values[bad]
            )));
        }
        Ok(Self { values, num_nodes })
    }

    /// Infers `D` from the length of `values`.
    pub fn from_packed(values: Vec<f64>) -> Result<Self> {
        let num_nodes = nodes_for_pairs(values.len()).ok_or_else(|| {
            FgcError::InvalidShape(format!("length {} is not D(D-1)/2 for any integer D", values.len()))
        })?;
        Self::new(values, num_nodes)
    }

    pub fn zeros(num_nodes: usize) -> Self {
        Self {
            values: vec![0.0; num_pairs(num_nodes)],
            num_nodes,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.values[pair_index(i, j, self.num_nodes)],
            std::cmp::Ordering::Greater => self.values[pair_index(j, i, self.num_nodes)],
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    /// Node degrees `Sw`.
    pub fn degrees(&self) -> Vec<f64> {
        degree_apply(&self.values, self.num_nodes)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            num_nodes: self.num_nodes,
        }
    }

    pub fn edge_count(&self, eps: f64) -> usize {
        self.values.iter().filter(|&&v| v > eps).count()
    }

    pub fn to_adjacency(&self) -> AdjacencyMatrix {
        unpack_upper(self)
    }

    pub fn to_laplacian(&self) -> LaplacianMatrix {
        LaplacianMatrix::from_weights(self)
    }
}

/// Symmetric, nonnegative, zero-diagonal weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix(DMatrix<f64>);

impl AdjacencyMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let d = matrix.nrows();
        if matrix.ncols() != d {
            return Err(FgcError::InvalidShape(format!(
                "adjacency must be square, got {}x{}",
                d,
                matrix.ncols()
            )));
        }
        for i in 0..d {
            if matrix[(i, i)] != 0.0 {
                return Err(FgcError::InvalidParameter(format!(
                    "adjacency has nonzero diagonal entry at node {i}"
                )));
            }
            for j in (i + 1)..d {
                let (a, b) = (matrix[(i, j)], matrix[(j, i)]);
                if a != b {
                    return Err(FgcError::InvalidParameter(format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
                if !(a.is_finite() && a >= 0.0) {
                    return Err(FgcError::InvalidParameter(format!(
                        "adjacency entry ({i}, {j}) = {a} is not a nonnegative finite weight"
                    )));
                }
            }
        }
        Ok(Self(matrix))
    }

    pub fn num_nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_laplacian(&self) -> LaplacianMatrix {
        LaplacianMatrix::from_weights(&pack_upper(self))
    }
}

/// Triu: strict upper triangle in packed order.
pub fn pack_upper(adj: &AdjacencyMatrix) -> WeightVector {
    let d = adj.num_nodes();
    let values = pairs(d).map(|(i, j)| adj.0[(i, j)]).collect();
    WeightVector { values, num_nodes: d }
}

/// iTriu: symmetric zero-diagonal matrix from packed weights.
pub fn unpack_upper(w: &WeightVector) -> AdjacencyMatrix {
    let d = w.num_nodes;
    let mut m = DMatrix::zeros(d, d);
    for ((i, j), &v) in pairs(d).zip(&w.values) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    AdjacencyMatrix(m)
}

/// `Sw`: degree of every node.
pub fn degree_apply(values: &[f64], num_nodes: usize) -> Vec<f64> {
    let mut deg = vec![0.0; num_nodes];
    for ((i, j), &v) in pairs(num_nodes).zip(values) {
        deg[i] += v;
        deg[j] += v;
    }
    deg
}

/// `S^T d`: `(d_i + d_j)` for every pair.
pub fn degree_adjoint(node_values: &[f64]) -> Vec<f64> {
    let d = node_values.len();
    pairs(d).map(|(i, j)| node_values[i] + node_values[j]).collect()
}

/// Explicit `D x P` matrix of the degree operator. Only meant for small `D`.
pub fn degree_operator_matrix(num_nodes: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(num_nodes, num_pairs(num_nodes));
    for (k, (i, j)) in pairs(num_nodes).enumerate() {
        s[(i, k)] = 1.0;
        s[(j, k)] = 1.0;
    }
    s
}

/// Combinatorial Laplacian `L = diag(W1) - W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix(DMatrix<f64>);

impl LaplacianMatrix {
    pub fn from_weights(w: &WeightVector) -> Self {
        let d = w.num_nodes;
        let mut m = DMatrix::zeros(d, d);
        for ((i, j), &v) in pairs(d).zip(&w.values) {
            m[(i, j)] = -v;
            m[(j, i)] = -v;
            m[(i, i)] += v;
            m[(j, j)] += v;
        }
        Self(m)
    }

    /// Wraps a matrix after checking symmetry, sign pattern and zero row sums.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let d = matrix.nrows();
        if matrix.ncols() != d {
            return Err(FgcError::InvalidShape("Laplacian must be square".into()));
        }
        let scale = matrix.amax().max(1.0);
        for i in 0..d {
            let row_sum: f64 = matrix.row(i).iter().sum();
            if row_sum.abs() > 1e-10 * scale {
                return Err(FgcError::InvalidParameter(format!(
                    "Laplacian row {i} sums to {row_sum:e}"
                )));
            }
            for j in (i + 1)..d {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(FgcError::InvalidParameter(format!(
                        "Laplacian is not symmetric at ({i}, {j})"
                    )));
                }
                if matrix[(i, j)] > 0.0 {
                    return Err(FgcError::InvalidParameter(format!(
                        "Laplacian off-diagonal entry ({i}, {j}) is positive"
                    )));
                }
            }
        }
        Ok(Self(matrix))
    }

    pub fn num_nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Packed edge weights `-L_ij`, clamped at zero against rounding.
    pub fn weights(&self) -> WeightVector {
        let d = self.num_nodes();
        let values = pairs(d).map(|(i, j)| (-self.0[(i, j)]).max(0.0)).collect();
        WeightVector { values, num_nodes: d }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(&self.0 * factor)
    }

    /// Rescales so that `Tr(L) = target`.
    pub fn normalized_to_trace(&self, target: f64) -> Result<Self> {
        let tr = self.trace();
        if !(tr > 0.0 && (target / tr).is_finite()) {
            return Err(FgcError::Numerical(format!(
                "cannot normalize a Laplacian with trace {tr:e}"
            )));
        }
        Ok(self.scaled(target / tr))
    }
}

/// Average smoothness `(1/N) Tr(X^T L X)`.
pub fn smoothness(x: &SignalMatrix, l: &LaplacianMatrix) -> Result<f64> {
    if x.nrows() != l.num_nodes() {
        return Err(FgcError::DimensionMismatch(format!(
            "signals have {} rows but the graph has {} nodes",
            x.nrows(),
            l.num_nodes()
        )));
    }
    if x.ncols() == 0 {
        return Err(FgcError::DimensionMismatch("no signal samples".into()));
    }
    let lx = l.matrix() * x;
    Ok(x.component_mul(&lx).sum() / x.ncols() as f64)
}

fn checked_degrees(w: &WeightVector) -> Result<Vec<f64>> {
    let deg = w.degrees();
    if let Some((node, &degree)) = deg.iter().enumerate().find(|(_, &v)| !(v >= MIN_DEGREE)) {
        return Err(FgcError::BarrierDomain { node, degree });
    }
    Ok(deg)
}

/// `-alpha * 1^T log(Sw) + 2 beta ||w||^2`.
pub fn regularizer(w: &WeightVector, alpha: f64, beta: f64) -> Result<f64> {
    let deg = checked_degrees(w)?;
    let log_term: f64 = deg.iter().map(|v| v.ln()).sum();
    let sq: f64 = w.values.iter().map(|v| v * v).sum();
    Ok(-alpha * log_term + 2.0 * beta * sq)
}

/// Gradient of [`regularizer`]: `-alpha S^T (1 / Sw) + 4 beta w`.
pub fn regularizer_gradient(w: &WeightVector, alpha: f64, beta: f64) -> Result<Vec<f64>> {
    let deg = checked_degrees(w)?;
    let inv: Vec<f64> = deg.iter().map(|v| 1.0 / v).collect();
    Ok(degree_adjoint(&inv)
        .into_iter()
        .zip(&w.values)
        .map(|(s, v)| -alpha * s + 4.0 * beta * v)
        .collect())
}

/// Hessian of [`regularizer`]: `4 beta I + alpha S^T diag((Sw)^-2) S`.
pub fn regularizer_hessian(w: &WeightVector, alpha: f64, beta: f64) -> Result<DMatrix<f64>> {
    let deg = checked_degrees(w)?;
    let s = degree_operator_matrix(w.num_nodes);
    let scaled = DMatrix::from_fn(s.nrows(), s.ncols(), |i, k| s[(i, k)] / (deg[i] * deg[i]));
    let p = s.ncols();
    Ok(DMatrix::identity(p, p) * (4.0 * beta) + s.transpose() * scaled * alpha)
}

/// Writes the `fgc-graph v1` edge list. Only positive weights are listed.
pub fn write_edge_list<W: Write>(w: &WeightVector, mut out: W) -> std::io::Result<()> {
    writeln!(out, "fgc-graph v1 D={}", w.num_nodes)?;
    for ((i, j), &v) in pairs(w.num_nodes).zip(&w.values) {
        if v > 0.0 {
            writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

/// Reads an `fgc-graph v1` edge list.
pub fn read_edge_list<R: BufRead>(input: R) -> Result<WeightVector> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| FgcError::parse("line 1", "empty graph file"))?;
    let header = header.map_err(|e| FgcError::parse("line 1", e.to_string()))?;
    let d: usize = header
        .trim()
        .strip_prefix("fgc-graph v1 D=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| FgcError::parse("line 1", format!("bad header {header:?}")))?;
    let mut w = WeightVector::zeros(d);
    for (n, line) in lines {
        let loc = format!("line {}", n + 1);
        let line = line.map_err(|e| FgcError::parse(&loc, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut field = |name: &str| {
            it.next()
                .ok_or_else(|| FgcError::parse(&loc, format!("missing {name}")))
        };
        let i: usize = field("i")?
            .parse()
            .map_err(|_| FgcError::parse(&loc, "bad node index"))?;
        let j: usize = field("j")?
            .parse()
            .map_err(|_| FgcError::parse(&loc, "bad node index"))?;
        let v: f64 = field("weight")?
            .parse()
            .map_err(|_| FgcError::parse(&loc, "bad weight"))?;
        if !(1 <= i && i < j && j <= d) {
            return Err(FgcError::parse(&loc, format!("edge ({i}, {j}) out of range")));
        }
        if !(v.is_finite() && v >= 0.0) {
            return Err(FgcError::parse(&loc, format!("invalid weight {v}")));
        }
        w.values[pair_index(i - 1, j - 1, d)] = v;
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym(d: usize, f: impl Fn(usize, usize) -> f64) -> AdjacencyMatrix {
        let w = WeightVector::new(pairs(d).map(|(i, j)| f(i, j)).collect(), d).unwrap();
        unpack_upper(&w)
    }

    #[test]
    fn pack_order_is_row_major() {
        let adj = AdjacencyMatrix::new(DMatrix::from_row_slice(3, 3, &[0., 1., 2., 1., 0., 3., 2., 3., 0.])).unwrap();
        assert_eq!(pack_upper(&adj).values(), &[1.0, 2.0, 3.0]);

        let adj2 = AdjacencyMatrix::new(DMatrix::from_row_slice(2, 2, &[0., 0.5, 0.5, 0.])).unwrap();
        assert_eq!(pack_upper(&adj2).values(), &[0.5]);
    }

    #[test]
    fn unpack_examples() {
        let w = WeightVector::new(vec![1., 2., 3.], 3).unwrap();
        let m = unpack_upper(&w);
        assert_eq!(
            m.matrix(),
            &DMatrix::from_row_slice(3, 3, &[0., 1., 2., 1., 0., 3., 2., 3., 0.])
        );
        assert_eq!(unpack_upper(&WeightVector::zeros(4)).matrix(), &DMatrix::zeros(4, 4));
    }

    #[test]
    fn from_packed_rejects_non_triangular_lengths() {
        assert!(matches!(
            WeightVector::from_packed(vec![1.0, 2.0]),
            Err(FgcError::InvalidShape(_))
        ));
        assert_eq!(WeightVector::from_packed(vec![0.0; 10]).unwrap().num_nodes(), 5);
        assert!(WeightVector::from_packed(vec![]).is_err());
    }

    #[test]
    fn pair_index_matches_enumeration() {
        for d in 2..9 {
            for (k, (i, j)) in pairs(d).enumerate() {
                assert_eq!(pair_index(i, j, d), k);
            }
            assert_eq!(nodes_for_pairs(num_pairs(d)), Some(d));
        }
    }

    #[test]
    fn degree_operator_examples() {
        assert_eq!(degree_apply(&[1., 2., 3.], 3), vec![3., 4., 5.]);
        assert_eq!(degree_apply(&[0.; 6], 4), vec![0.; 4]);
        assert_eq!(degree_adjoint(&[1., 0., 0.]), vec![1., 1., 0.]);
        assert_eq!(degree_adjoint(&[1.; 5]), vec![2.; 10]);
    }

    #[test]
    fn laplacian_examples() {
        let l = WeightVector::new(vec![1.0], 2).unwrap().to_laplacian();
        assert_eq!(l.matrix(), &DMatrix::from_row_slice(2, 2, &[1., -1., -1., 1.]));
        assert_eq!(WeightVector::zeros(3).to_laplacian().matrix(), &DMatrix::zeros(3, 3));
    }

    #[test]
    fn smoothness_examples() {
        let l = WeightVector::new(vec![1.0], 2).unwrap().to_laplacian();
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(smoothness(&x, &l).unwrap(), 1.0);
        let c = DMatrix::from_element(2, 3, 4.2);
        assert!(smoothness(&c, &l).unwrap().abs() < 1e-12);
        let bad = DMatrix::zeros(3, 1);
        assert!(matches!(smoothness(&bad, &l), Err(FgcError::DimensionMismatch(_))));
    }

    #[test]
    fn regularizer_examples() {
        let w = WeightVector::new(vec![1.0], 2).unwrap();
        assert!((regularizer(&w, 1.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        let iso = WeightVector::new(vec![1.0, 0.0, 0.0], 3).unwrap();
        assert!(matches!(
            regularizer(&iso, 1.0, 0.5),
            Err(FgcError::BarrierDomain { node: 2, .. })
        ));
    }

    #[test]
    fn regularizer_scaling_law() {
        let w = WeightVector::new(vec![0.3, 1.2, 0.7, 0.1, 0.9, 2.0], 4).unwrap();
        let (alpha, beta) = (1.7, 0.3);
        let base_log: f64 = w.degrees().iter().map(|v| v.ln()).sum();
        let sq: f64 = w.values().iter().map(|v| v * v).sum();
        for t in [0.25, 0.5, 2.0, 3.0] {
            let expected = -alpha * 4.0 * f64::ln(t) - alpha * base_log + 2.0 * beta * t * t * sq;
            let got = regularizer(&w.scaled(t), alpha, beta).unwrap();
            assert!((got - expected).abs() < 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn edge_list_roundtrip() {
        let w = WeightVector::new(vec![0.1, 0.0, 1.0 / 3.0, 2.5, 0.0, 1e-9], 4).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&w, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("fgc-graph v1 D=4\n"));
        assert!(text.contains("1 2 1.0000000000000001e-1"));
        let back = read_edge_list(buf.as_slice()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn edge_list_rejects_bad_input() {
        assert!(read_edge_list("graph D=3\n".as_bytes()).is_err());
        assert!(read_edge_list("fgc-graph v1 D=3\n3 1 1.0\n".as_bytes()).is_err());
        assert!(read_edge_list("fgc-graph v1 D=3\n1 2 -1.0\n".as_bytes()).is_err());
    }

    fn weights_strategy() -> impl Strategy<Value = WeightVector> {
        (2usize..9).prop_flat_map(|d| {
            proptest::collection::vec(0.0f64..3.0, num_pairs(d)).prop_map(move |v| WeightVector::new(v, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn pack_unpack_roundtrip(w in weights_strategy()) {
            let adj = unpack_upper(&w);
            prop_assert_eq!(pack_upper(&adj), w.clone());
            prop_assert_eq!(unpack_upper(&pack_upper(&adj)), adj);
        }

        #[test]
        fn adjoint_identity(w in weights_strategy(), seed in 0u64..1000) {
            let d = w.num_nodes();
            let node: Vec<f64> = (0..d).map(|i| ((i as u64 * 7919 + seed) % 13) as f64 - 6.0).collect();
            let lhs: f64 = w.degrees().iter().zip(&node).map(|(a, b)| a * b).sum();
            let rhs: f64 = w.values().iter().zip(degree_adjoint(&node)).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            let deg_from_matrix = unpack_upper(&w).matrix() * nalgebra::DVector::from_element(d, 1.0);
            for i in 0..d {
                prop_assert!((deg_from_matrix[i] - w.degrees()[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn laplacian_invariants(w in weights_strategy()) {
            let l = w.to_laplacian();
            let d = w.num_nodes();
            for i in 0..d {
                prop_assert!(l.matrix().row(i).iter().sum::<f64>().abs() <= 1e-10);
            }
            let eig = l.matrix().clone().symmetric_eigenvalues();
            prop_assert!(eig.min() >= -1e-8);
            prop_assert!(LaplacianMatrix::from_matrix(l.matrix().clone()).is_ok());
        }

        #[test]
        fn smoothness_matches_pairwise_sum(w in weights_strategy(), n in 1usize..5, seed in 0u64..500) {
            let d = w.num_nodes();
            let x = DMatrix::from_fn(d, n, |i, k| (((i * 31 + k * 17) as u64 + seed) % 11) as f64 * 0.3 - 1.5);
            let adj = unpack_upper(&w);
            let mut total = 0.0;
            for i in 0..d {
                for j in 0..d {
                    let diff = (x.row(i) - x.row(j)).norm_squared();
                    total += adj.matrix()[(i, j)] * diff;
                }
            }
            let expected = total / (2.0 * n as f64);
            let got = smoothness(&x, &w.to_laplacian()).unwrap();
            prop_assert!((got - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
            prop_assert!(got >= -1e-10);
        }

        #[test]
        fn frobenius_identities(a in weights_strategy(), seed in 0u64..100) {
            let d = a.num_nodes();
            let b = WeightVector::new(
                a.values().iter().enumerate().map(|(k, v)| (v + ((k as u64 * 37 + seed) % 5) as f64 * 0.2).max(0.0)).collect(),
                d,
            ).unwrap();
            let diff_w: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let adj_diff = (a.to_adjacency().matrix() - b.to_adjacency().matrix()).norm();
            prop_assert!((adj_diff - 2f64.sqrt() * diff_w).abs() <= 1e-10 * (1.0 + adj_diff));
            let lap_diff = (a.to_laplacian().matrix() - b.to_laplacian().matrix()).norm();
            let bound = ((2.0 * (d as f64 - 1.0)).sqrt() + 2f64.sqrt()) * diff_w;
            prop_assert!(lap_diff <= bound + 1e-10);
        }
    }

    #[test]
    fn regularizer_gradient_matches_finite_differences() {
        let w = WeightVector::new(vec![0.4, 1.1, 0.2, 0.8, 0.05, 1.6, 0.3, 0.9, 0.7, 0.5], 5).unwrap();
        let (alpha, beta) = (1.3, 0.2);
        let g = regularizer_gradient(&w, alpha, beta).unwrap();
        let h = 1e-6;
        for k in 0..w.values().len() {
            let mut plus = w.values().to_vec();
            let mut minus = w.values().to_vec();
            plus[k] += h;
            minus[k] -= h;
            let fp = regularizer(&WeightVector::new(plus, 5).unwrap(), alpha, beta).unwrap();
            let fm = regularizer(&WeightVector::new(minus, 5).unwrap(), alpha, beta).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0),
                "slot {k}: {fd} vs {}",
                g[k]
            );
        }
    }

    #[test]
    fn adjacency_validation() {
        assert!(AdjacencyMatrix::new(DMatrix::from_row_slice(2, 2, &[0., 1., 2., 0.])).is_err());
        assert!(AdjacencyMatrix::new(DMatrix::from_row_slice(2, 2, &[1., 1., 1., 0.])).is_err());
        assert!(AdjacencyMatrix::new(DMatrix::from_row_slice(2, 2, &[0., -1., -1., 0.])).is_err());
        let ok = sym(4, |i, j| (i + j) as f64);
        assert_eq!(ok.num_nodes(), 4);
    }
}

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use super::GmrfError;

/// Symmetric sparse matrix stored as the lower triangle in compressed-column form.
///
/// Row indices inside each column are sorted and the diagonal entry is always
/// stored (possibly as an explicit zero), so column `j` starts with `(j, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Entries above the
    /// diagonal are mirrored into the lower triangle and duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, GmrfError> {
        let mut lower: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len() + n);
        for &(r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(GmrfError::IndexOutOfBounds { row: r, col: c, n });
            }
            if !v.is_finite() {
                return Err(GmrfError::NonFinite { row: r, col: c });
            }
            let (r, c) = if r >= c { (r, c) } else { (c, r) };
            lower.push((r, c, v));
        }
        for i in 0..n {
            lower.push((i, i, 0.0));
        }
        // column-major, then row
        lower.sort_by_key(|&(r, c, _)| (c, r));

        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(lower.len());
        let mut values: Vec<f64> = Vec::with_capacity(lower.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in lower {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(Self {
            n,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Dense symmetric input; entries with `|a_ij| <= drop_tol` are skipped.
    pub fn from_dense(a: &DMatrix<f64>, drop_tol: f64) -> Self {
        let n = a.nrows();
        let mut t = Vec::new();
        for j in 0..n {
            for i in j..n {
                let v = a[(i, j)];
                if i == j || v.abs() > drop_tol {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &t).expect("dense input is in bounds")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored lower-triangle entries.
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub(crate) fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub(crate) fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored entries of column `j` of the lower triangle as `(row, value)`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Lower-triangle triplets `(row, col, value)` with `row >= col`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |j| self.column(j).map(move |(i, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let rows = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        match rows.binary_search(&r) {
            Ok(p) => self.values[self.col_ptr[c] + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.values[self.col_ptr[j]]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_diagonal(&self) -> bool {
        self.triplets().all(|(i, j, v)| i == j || v == 0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "dimension mismatch in mul_vec");
        let mut y = vec![0.0; self.n];
        for (i, j, v) in self.triplets() {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    /// `x' Q x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, j, v) in self.triplets() {
            if i == j {
                acc += v * x[i] * x[i];
            } else {
                acc += 2.0 * v * x[i] * x[j];
            }
        }
        acc
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mul_vec(&vec![1.0; self.n])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// `Σ_k c_k · M_k` over matrices of equal dimension; the pattern is the union.
    pub fn linear_combination(terms: &[(f64, &SparseSymMatrix)]) -> Self {
        let n = terms.first().map_or(0, |t| t.1.n);
        let mut t = Vec::new();
        for &(c, m) in terms {
            assert_eq!(m.n, n, "dimension mismatch in linear_combination");
            t.extend(m.triplets().map(|(i, j, v)| (i, j, c * v)));
        }
        Self::from_triplets(n, &t).expect("indices already validated")
    }

    /// Block-diagonal matrix with the given blocks placed in order.
    pub fn block_diagonal(blocks: &[&SparseSymMatrix]) -> Self {
        let n: usize = blocks.iter().map(|b| b.n).sum();
        let mut t = Vec::new();
        let mut offset = 0;
        for b in blocks {
            t.extend(b.triplets().map(|(i, j, v)| (i + offset, j + offset, v)));
            offset += b.n;
        }
        Self::from_triplets(n, &t).expect("indices already validated")
    }

    /// Adjacency lists of the full symmetric pattern (off-diagonal entries only).
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (i, j, _) in self.triplets() {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
        }
        adj
    }

    /// `M · diag(d) · M` for symmetric `M`.
    pub fn sandwich_diagonal(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.n, "dimension mismatch in sandwich_diagonal");
        // full rows: row k holds (j, M_kj) for all j
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n];
        for (i, j, v) in self.triplets() {
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        let mut t = Vec::new();
        for (k, row) in rows.iter().enumerate() {
            for &(i, a) in row {
                for &(j, b) in row {
                    if i >= j {
                        t.push((i, j, a * d[k] * b));
                    }
                }
            }
        }
        Self::from_triplets(self.n, &t).expect("indices already validated")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    /// Writes `# n <dim>` followed by one `row col value` line per stored
    /// lower-triangle entry.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# n {}", self.n)?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:e}")?;
        }
        Ok(())
    }

    /// Reads the triplet format. The dimension comes from a `# n <dim>` header
    /// when present, otherwise from the largest index. Files are expected to
    /// carry a single triangle; duplicates are summed.
    pub fn read_triplets<R: BufRead>(r: R) -> Result<Self, GmrfError> {
        let mut n: Option<usize> = None;
        let mut t = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| GmrfError::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                if parts.next() == Some("n") {
                    n = parts.next().and_then(|s| s.parse().ok());
                }
                continue;
            }
            let bad = |message: &str| GmrfError::Parse {
                line: lineno + 1,
                message: message.to_string(),
            };
            let mut parts = line.split_whitespace();
            let r: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad row"))?;
            let c: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad col"))?;
            let v: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad value"))?;
            t.push((r, c, v));
        }
        let n = n.unwrap_or_else(|| t.iter().map(|&(r, c, _)| r.max(c) + 1).max().unwrap_or(0));
        Self::from_triplets(n, &t)
    }

    pub(crate) fn same_pattern(&self, other: &SparseSymMatrix) -> bool {
        self.n == other.n && self.col_ptr == other.col_ptr && self.row_idx == other.row_idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coalesces_and_mirrors() {
        let m = SparseSymMatrix::from_triplets(3, &[(0, 1, 1.0), (1, 0, 2.0), (2, 2, 4.0)]).unwrap();
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.nnz(), 4); // three diagonals + one off-diagonal
        assert_eq!(m.diagonal(), vec![0.0, 0.0, 4.0]);
    }

    #[test]
    fn rejects_out_of_bounds() {
        assert!(matches!(
            SparseSymMatrix::from_triplets(2, &[(2, 0, 1.0)]),
            Err(GmrfError::IndexOutOfBounds { .. })
        ));
    }

    #[test]
    fn mul_vec_matches_dense() {
        let m = SparseSymMatrix::from_triplets(3, &[(0, 0, 2.0), (1, 0, -1.0), (2, 1, 0.5), (2, 2, 3.0)]).unwrap();
        let x = [1.0, 2.0, -1.0];
        let y = m.mul_vec(&x);
        let d = m.to_dense() * nalgebra::DVector::from_row_slice(&x);
        for i in 0..3 {
            assert!((y[i] - d[i]).abs() < 1e-14);
        }
        assert!((m.quad_form(&x) - x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>()).abs() < 1e-14);
    }

    #[test]
    fn sandwich_matches_dense_product() {
        let g = SparseSymMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 0, -0.5), (1, 1, 1.0), (2, 1, -0.5), (2, 2, 0.5)]).unwrap();
        let d = [2.0, 0.5, 4.0];
        let s = g.sandwich_diagonal(&d).to_dense();
        let gd = g.to_dense();
        let expected = &gd * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&d)) * &gd;
        assert!((s - expected).abs().max() < 1e-14);
    }

    #[test]
    fn triplet_text_round_trip() {
        let m = SparseSymMatrix::from_triplets(4, &[(0, 0, 1.5), (3, 1, -2.25e-7), (2, 2, 1e10)]).unwrap();
        let mut buf = Vec::new();
        m.write_triplets(&mut buf).unwrap();
        let back = SparseSymMatrix::read_triplets(buf.as_slice()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn read_reports_line_number() {
        let err = SparseSymMatrix::read_triplets("0 0 1\n1 x 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GmrfError::Parse { line: 2, .. }));
    }
}

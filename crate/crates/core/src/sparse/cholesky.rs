use super::ordering::{inverse_permutation, minimum_degree};
use super::{GmrfError, SparseSymMatrix};

/// Relative pivot tolerance: a pivot at or below `PIVOT_TOL * max|diag(Q)|`
/// is treated as a zero pivot.
pub const PIVOT_TOL: f64 = 1e-12;

/// Ordering, elimination tree and column counts for one sparsity pattern.
///
/// Reusable across numeric factorizations of matrices sharing the pattern,
/// which is the common case when only hyperparameters change.
#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    n: usize,
    pattern: SparseSymMatrix,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    parent: Vec<Option<usize>>,
    l_col_ptr: Vec<usize>,
    // upper triangle of P Q P' in CSC, with the source position of each value
    up_col_ptr: Vec<usize>,
    up_row_idx: Vec<usize>,
    up_src: Vec<usize>,
}

impl SymbolicCholesky {
    pub fn analyze(q: &SparseSymMatrix) -> Self {
        let n = q.n();
        let perm = minimum_degree(&q.adjacency());
        let inv_perm = inverse_permutation(&perm);

        let mut entries: Vec<(usize, usize, usize)> = Vec::with_capacity(q.nnz());
        let (cp, ri) = (q.col_ptr(), q.row_idx());
        for j in 0..n {
            for p in cp[j]..cp[j + 1] {
                let (a, b) = (inv_perm[ri[p]], inv_perm[j]);
                let (row, col) = if a <= b { (a, b) } else { (b, a) };
                entries.push((col, row, p));
            }
        }
        entries.sort_unstable();
        let mut up_col_ptr = vec![0usize; n + 1];
        let mut up_row_idx = Vec::with_capacity(entries.len());
        let mut up_src = Vec::with_capacity(entries.len());
        for &(col, row, src) in &entries {
            up_col_ptr[col + 1] += 1;
            up_row_idx.push(row);
            up_src.push(src);
        }
        for j in 0..n {
            up_col_ptr[j + 1] += up_col_ptr[j];
        }

        let parent = elimination_tree(n, &up_col_ptr, &up_row_idx);

        // column counts of L via the row patterns
        let mut counts = vec![1usize; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![usize::MAX; n];
        for k in 0..n {
            let top = ereach(k, &up_col_ptr, &up_row_idx, &parent, &mut stack, &mut mark);
            for &i in &stack[top..] {
                counts[i] += 1;
            }
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            l_col_ptr[j + 1] = l_col_ptr[j] + counts[j];
        }

        Self {
            n,
            pattern: q.clone(),
            perm,
            inv_perm,
            parent,
            l_col_ptr,
            up_col_ptr,
            up_row_idx,
            up_src,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of nonzeros the factor `L` will hold (diagonal included).
    pub fn factor_nnz(&self) -> usize {
        self.l_col_ptr[self.n]
    }

    pub fn matches(&self, q: &SparseSymMatrix) -> bool {
        self.pattern.same_pattern(q)
    }

    /// Numeric up-looking factorization of `q`, which must share the analyzed pattern.
    pub fn factor(&self, q: &SparseSymMatrix) -> Result<CholFactor, GmrfError> {
        if !self.matches(q) {
            return Err(GmrfError::PatternMismatch);
        }
        let n = self.n;
        let vals = q.values();
        let max_diag = q.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol = PIVOT_TOL * max_diag;

        let nnz = self.factor_nnz();
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0f64; nnz];
        let mut next = self.l_col_ptr[..n].to_vec();
        let mut x = vec![0.0f64; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![usize::MAX; n];

        for k in 0..n {
            let top = ereach(k, &self.up_col_ptr, &self.up_row_idx, &self.parent, &mut stack, &mut mark);
            for p in self.up_col_ptr[k]..self.up_col_ptr[k + 1] {
                x[self.up_row_idx[p]] += vals[self.up_src[p]];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / lx[self.l_col_ptr[i]];
                x[i] = 0.0;
                for p in self.l_col_ptr[i] + 1..next[i] {
                    x[li[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                li[p] = k;
                lx[p] = lki;
            }
            if !(d > tol) {
                return Err(GmrfError::NotPositiveDefinite {
                    pivot: k,
                    index: self.perm[k],
                });
            }
            let p = next[k];
            next[k] += 1;
            li[p] = k;
            lx[p] = d.sqrt();
        }

        let half_logdet = (0..n).map(|j| lx[self.l_col_ptr[j]].ln()).sum();
        Ok(CholFactor {
            n,
            perm: self.perm.clone(),
            inv_perm: self.inv_perm.clone(),
            parent: self.parent.clone(),
            l_col_ptr: self.l_col_ptr.clone(),
            l_row_idx: li,
            l_values: lx,
            half_logdet,
        })
    }
}

/// `P Q P' = L L'` with a fill-reducing permutation `P`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    n: usize,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    parent: Vec<Option<usize>>,
    l_col_ptr: Vec<usize>,
    l_row_idx: Vec<usize>,
    l_values: Vec<f64>,
    half_logdet: f64,
}

/// Factors a symmetric positive-definite matrix, computing a fresh ordering.
pub fn cholesky(q: &SparseSymMatrix) -> Result<CholFactor, GmrfError> {
    SymbolicCholesky::analyze(q).factor(q)
}

impl CholFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `perm[k]` is the original index at position `k` of the factorized ordering.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// `Σ log L_ii = ½ log|Q|`.
    pub fn half_logdet(&self) -> f64 {
        self.half_logdet
    }

    pub fn logdet(&self) -> f64 {
        2.0 * self.half_logdet
    }

    pub fn nnz(&self) -> usize {
        self.l_row_idx.len()
    }

    /// Lower-factor entries `(row, col, value)` in the permuted ordering.
    pub fn lower_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |j| {
            (self.l_col_ptr[j]..self.l_col_ptr[j + 1]).map(move |p| (self.l_row_idx[p], j, self.l_values[p]))
        })
    }

    fn forward_in_place(&self, y: &mut [f64]) {
        for j in 0..self.n {
            let start = self.l_col_ptr[j];
            y[j] /= self.l_values[start];
            let yj = y[j];
            if yj != 0.0 {
                for p in start + 1..self.l_col_ptr[j + 1] {
                    y[self.l_row_idx[p]] -= self.l_values[p] * yj;
                }
            }
        }
    }

    fn backward_in_place(&self, y: &mut [f64]) {
        for j in (0..self.n).rev() {
            let start = self.l_col_ptr[j];
            let mut acc = y[j];
            for p in start + 1..self.l_col_ptr[j + 1] {
                acc -= self.l_values[p] * y[self.l_row_idx[p]];
            }
            y[j] = acc / self.l_values[start];
        }
    }

    /// Solves `Q x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, GmrfError> {
        if b.len() != self.n {
            return Err(GmrfError::DimensionMismatch {
                expected: self.n,
                found: b.len(),
            });
        }
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        self.forward_in_place(&mut y);
        self.backward_in_place(&mut y);
        let mut x = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        Ok(x)
    }

    /// `P' L^{-T} z`; for `z ~ N(0, I)` the result has covariance `Q^{-1}`.
    pub fn solve_lt(&self, z: &[f64]) -> Result<Vec<f64>, GmrfError> {
        if z.len() != self.n {
            return Err(GmrfError::DimensionMismatch {
                expected: self.n,
                found: z.len(),
            });
        }
        let mut y = z.to_vec();
        self.backward_in_place(&mut y);
        let mut x = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        Ok(x)
    }

    /// `Q x` reconstructed from the factor, for consistency checks.
    pub fn multiply(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.perm.iter().map(|&p| x[p]).collect();
        // y <- L' y
        let mut t = vec![0.0; self.n];
        for j in 0..self.n {
            for p in self.l_col_ptr[j]..self.l_col_ptr[j + 1] {
                t[j] += self.l_values[p] * y[self.l_row_idx[p]];
            }
        }
        // y <- L t
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            for p in self.l_col_ptr[j]..self.l_col_ptr[j + 1] {
                y[self.l_row_idx[p]] += self.l_values[p] * t[j];
            }
        }
        let mut out = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = y[k];
        }
        out
    }

    /// `diag(Q^{-1})` from one sparse triangular solve per unit vector.
    ///
    /// The nonzeros of `L^{-1} e_k` lie on the elimination-tree path from `k`
    /// to its root, so each solve only touches that path. Takahashi recursions
    /// would give the same diagonal in one sweep over `L`; at the sizes used
    /// here the path solves are fast enough.
    pub fn marginal_variances(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let mut y = vec![0.0; self.n];
        let mut path = Vec::new();
        for k in 0..self.n {
            path.clear();
            let mut node = Some(k);
            while let Some(j) = node {
                path.push(j);
                node = self.parent[j];
            }
            y[k] = 1.0;
            let mut acc = 0.0;
            for &j in &path {
                let start = self.l_col_ptr[j];
                y[j] /= self.l_values[start];
                let yj = y[j];
                acc += yj * yj;
                for p in start + 1..self.l_col_ptr[j + 1] {
                    y[self.l_row_idx[p]] -= self.l_values[p] * yj;
                }
            }
            for &j in &path {
                y[j] = 0.0;
            }
            out[self.perm[k]] = acc;
        }
        debug_assert!(self.inv_perm.len() == self.n);
        out
    }
}

fn elimination_tree(n: usize, up_col_ptr: &[usize], up_row_idx: &[usize]) -> Vec<Option<usize>> {
    let mut parent = vec![None; n];
    let mut ancestor: Vec<Option<usize>> = vec![None; n];
    for k in 0..n {
        for p in up_col_ptr[k]..up_col_ptr[k + 1] {
            let mut i = up_row_idx[p];
            while i < k {
                let next = ancestor[i];
                ancestor[i] = Some(k);
                match next {
                    None => {
                        parent[i] = Some(k);
                        break;
                    }
                    Some(a) if a == k => break,
                    Some(a) => i = a,
                }
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal), returned in
/// `stack[top..]` in topological order. `mark` uses `k` as the visit stamp.
fn ereach(
    k: usize,
    up_col_ptr: &[usize],
    up_row_idx: &[usize],
    parent: &[Option<usize>],
    stack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = parent.len();
    let mut top = n;
    mark[k] = k;
    let mut path = Vec::new();
    for p in up_col_ptr[k]..up_col_ptr[k + 1] {
        let mut i = up_row_idx[p];
        if i > k {
            continue;
        }
        path.clear();
        while mark[i] != k {
            path.push(i);
            mark[i] = k;
            match parent[i] {
                Some(par) => i = par,
                None => break,
            }
        }
        while let Some(v) = path.pop() {
            top -= 1;
            stack[top] = v;
        }
    }
    top
}

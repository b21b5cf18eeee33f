//! Sparse LU factorization with a static, fill-reducing pivot order.
//!
//! MNA matrices of passive networks are structurally symmetric. The pivot
//! order is a greedy minimum-degree ordering of that structure. A variable
//! with a zero diagonal (the branch current of a voltage source) is bound
//! to a partner node and always eliminated right after it, which turns the
//! pair into a stable 2×2 block pivot.

use std::collections::{BTreeSet, HashMap};

/// Assembled square matrix in coordinate form; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    n: usize,
    entries: HashMap<(usize, usize), f64>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        *self.entries.entry((row, col)).or_insert(0.0) += value;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries.get(&(row, col)).copied().unwrap_or(0.0)
    }

    /// Dense matrix-vector product, for residual checks.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (&(r, c), &v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }
}

/// Minimum-degree elimination order on the symmetric structure of `a`.
///
/// `partner[k] = Some(p)` marks variable `k` as eliminated immediately after
/// node `p`; such variables never enter the degree competition themselves.
pub fn min_degree_order(a: &Triplets, partner: &[Option<usize>]) -> Vec<usize> {
    let n = a.dim();
    // supervariable representative for each index
    let rep: Vec<usize> = (0..n).map(|k| partner[k].unwrap_or(k)).collect();
    let mut attached: Vec<Vec<usize>> = vec![Vec::new(); n];
    for k in 0..n {
        if let Some(p) = partner[k] {
            attached[p].push(k);
        }
    }
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(r, c) in a.entries.keys() {
        let (r, c) = (rep[r], rep[c]);
        if r != c {
            adj[r].insert(c);
            adj[c].insert(r);
        }
    }

    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut candidates: BTreeSet<(usize, usize)> = (0..n)
        .filter(|&k| partner[k].is_none())
        .map(|k| (adj[k].len(), k))
        .collect();
    while let Some((_, v)) = candidates.pop_first() {
        eliminated[v] = true;
        order.push(v);
        order.extend(attached[v].iter().copied());
        let neighbours: Vec<usize> = adj[v].iter().copied().collect();
        for &u in &neighbours {
            candidates.remove(&(adj[u].len(), u));
            adj[u].remove(&v);
        }
        // the eliminated vertex's neighbourhood becomes a clique
        for (i, &u) in neighbours.iter().enumerate() {
            for &w in &neighbours[i + 1..] {
                adj[u].insert(w);
                adj[w].insert(u);
            }
        }
        for &u in &neighbours {
            if !eliminated[u] {
                candidates.insert((adj[u].len(), u));
            }
        }
        adj[v].clear();
    }
    order
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroPivot {
    /// Original (unpermuted) variable index.
    pub variable: usize,
}

/// `P A Pᵀ = L U` with unit-diagonal `L`, rows stored compressed.
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    u_diag: Vec<f64>,
}

impl SparseLu {
    /// Row-by-row (IKJ) elimination in the given pivot order.
    pub fn factor(a: &Triplets, order: &[usize]) -> Result<Self, ZeroPivot> {
        let n = a.dim();
        assert_eq!(order.len(), n);
        let mut inv = vec![0usize; n];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut row_scale = vec![0.0f64; n];
        for (&(r, c), &v) in &a.entries {
            if v != 0.0 {
                rows[inv[r]].push((inv[c], v));
                row_scale[inv[r]] = row_scale[inv[r]].max(v.abs());
            }
        }

        let mut lu = SparseLu {
            n,
            perm: order.to_vec(),
            l_ptr: vec![0],
            l_idx: Vec::new(),
            l_val: Vec::new(),
            u_ptr: vec![0],
            u_idx: Vec::new(),
            u_val: Vec::new(),
            u_diag: vec![0.0; n],
        };
        let mut work = vec![0.0f64; n];
        let mut marked = vec![false; n];
        let mut pattern: Vec<usize> = Vec::new();
        let mut lower: BTreeSet<usize> = BTreeSet::new();

        for i in 0..n {
            for &(c, v) in &rows[i] {
                if !marked[c] {
                    marked[c] = true;
                    pattern.push(c);
                    if c < i {
                        lower.insert(c);
                    }
                }
                work[c] += v;
            }
            while let Some(k) = lower.pop_first() {
                let l = work[k] / lu.u_diag[k];
                work[k] = l;
                if l == 0.0 {
                    continue;
                }
                for p in lu.u_ptr[k]..lu.u_ptr[k + 1] {
                    let j = lu.u_idx[p];
                    if !marked[j] {
                        marked[j] = true;
                        pattern.push(j);
                        if j < i {
                            lower.insert(j);
                        }
                    }
                    work[j] -= l * lu.u_val[p];
                }
            }
            pattern.sort_unstable();
            for &c in &pattern {
                let v = work[c];
                if c < i {
                    if v != 0.0 {
                        lu.l_idx.push(c);
                        lu.l_val.push(v);
                    }
                } else if c == i {
                    lu.u_diag[i] = v;
                } else if v != 0.0 {
                    lu.u_idx.push(c);
                    lu.u_val.push(v);
                }
                work[c] = 0.0;
                marked[c] = false;
            }
            pattern.clear();
            lu.l_ptr.push(lu.l_idx.len());
            lu.u_ptr.push(lu.u_idx.len());

            let d = lu.u_diag[i];
            let tol = 1e-14 * row_scale[i].max(f64::MIN_POSITIVE);
            if !d.is_finite() || d.abs() <= tol {
                return Err(ZeroPivot { variable: order[i] });
            }
        }
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.l_idx.len() + self.u_idx.len() + self.n
    }

    /// Solves `A x = b`, using `x` as scratch for the permuted system.
    pub fn solve_into(&self, b: &[f64], x: &mut [f64], scratch: &mut Vec<f64>) {
        let n = self.n;
        scratch.clear();
        scratch.extend(self.perm.iter().map(|&old| b[old]));
        let y = scratch;
        for i in 0..n {
            let mut s = y[i];
            for p in self.l_ptr[i]..self.l_ptr[i + 1] {
                s -= self.l_val[p] * y[self.l_idx[p]];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in self.u_ptr[i]..self.u_ptr[i + 1] {
                s -= self.u_val[p] * y[self.u_idx[p]];
            }
            y[i] = s / self.u_diag[i];
        }
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        let mut scratch = Vec::with_capacity(self.n);
        self.solve_into(b, &mut x, &mut scratch);
        x
    }
}

//! Dense vector helpers and a sparse row type shared by halfspaces and evaluation maps.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Sparse vector stored as parallel index/value lists. Zeros are dropped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseVec {
    pub fn from_dense(dense: &[f64]) -> Self {
        let mut s = SparseVec::default();
        for (i, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                s.idx.push(i);
                s.val.push(v);
            }
        }
        s
    }

    /// Duplicate indices are summed.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut pairs: Vec<(usize, f64)> = pairs.into_iter().collect();
        pairs.sort_by_key(|p| p.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|p| p.1 != 0.0);
        SparseVec {
            idx: merged.iter().map(|p| p.0).collect(),
            val: merged.iter().map(|p| p.1).collect(),
        }
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, v)| v * dense[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.val.iter().map(|v| v * v).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.idx.last().copied()
    }

    /// `y += alpha * self`
    pub fn axpy_into(&self, alpha: f64, y: &mut [f64]) {
        for (&i, v) in self.idx.iter().zip(&self.val) {
            y[i] += alpha * v;
        }
    }

    pub fn scaled(&self, alpha: f64) -> SparseVec {
        SparseVec::from_pairs(self.iter().map(|(i, v)| (i, v * alpha)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().copied().zip(self.val.iter().copied())
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut d = vec![0.0; dim];
        self.axpy_into(1.0, &mut d);
        d
    }
}

/// Linear map given by sparse rows: `z ↦ (⟨row_i, z⟩)_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    rows: Vec<SparseVec>,
    input_dim: usize,
}

impl LinearMap {
    pub fn new(rows: Vec<SparseVec>, input_dim: usize) -> Self {
        debug_assert!(rows.iter().all(|r| r.max_index().map_or(true, |m| m < input_dim)));
        LinearMap { rows, input_dim }
    }

    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Self {
        let input_dim = rows.first().map_or(0, |r| r.len());
        LinearMap::new(rows.iter().map(|r| SparseVec::from_dense(r)).collect(), input_dim)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &SparseVec {
        &self.rows[i]
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.dot(z)).collect()
    }

    /// Pulls back a linear functional over outputs, `Σ c_i row_i`.
    pub fn pullback(&self, coeffs: &[(usize, f64)]) -> SparseVec {
        SparseVec::from_pairs(
            coeffs
                .iter()
                .flat_map(|&(i, c)| self.rows[i].iter().map(move |(j, v)| (j, c * v))),
        )
    }
}

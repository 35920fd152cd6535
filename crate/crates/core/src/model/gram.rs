use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;

/// The Gram matrix `AᵀA`, dense or compressed.
///
/// The matrix is symmetric, so a compressed row doubles as a column.
#[derive(Debug, Clone)]
pub enum Gram {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix<f64>),
}

impl Gram {
    pub fn dim(&self) -> usize {
        match self {
            Gram::Dense(g) => g.nrows(),
            Gram::Sparse(g) => g.nrows(),
        }
    }

    /// Calls `f(i, g_ij)` for the stored entries of column `j`.
    pub fn for_each_in_column(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        match self {
            Gram::Dense(g) => g.column(j).iter().enumerate().for_each(|(i, v)| f(i, *v)),
            Gram::Sparse(g) => {
                let row = g.row(j);
                row.col_indices().iter().zip(row.values()).for_each(|(&i, v)| f(i, *v));
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Gram::Dense(g) => g[(i, j)],
            Gram::Sparse(g) => {
                let row = g.row(j);
                row.col_indices().binary_search(&i).map_or(0.0, |k| row.values()[k])
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Gram::Dense(g) => g.clone(),
            Gram::Sparse(g) => {
                let mut out = DMatrix::zeros(g.nrows(), g.ncols());
                for (i, j, v) in g.triplet_iter() {
                    out[(i, j)] = *v;
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra_sparse::CooMatrix;

    #[test]
    fn sparse_and_dense_agree() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 1.0, 0.0, 3.0, 0.0, 1.0, 0.0, 4.0]);
        let sparse = Gram::Sparse(CsrMatrix::from(&CooMatrix::from(&a)));
        let dense = Gram::Dense(a.clone());
        assert_eq!(sparse.to_dense(), a);
        for j in 0..3 {
            let mut s = Vec::new();
            sparse.for_each_in_column(j, |i, v| s.push((i, v)));
            let mut d = Vec::new();
            dense.for_each_in_column(j, |i, v| {
                if v != 0.0 {
                    d.push((i, v))
                }
            });
            assert_eq!(s, d);
            for i in 0..3 {
                assert_eq!(sparse.get(i, j), a[(i, j)]);
            }
        }
    }
}

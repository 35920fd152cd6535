use nalgebra::{DMatrix, DVector, Dyn, SymmetricEigen, LU};

use super::{PenaltyFactor, ScaledHessian};
use crate::error::{Error, Result};
use crate::solvers::LinearOperator;

/// Approximate inverse of `H_S`, built from the exact penalty inverse and
/// a screened low-rank model `UUᵀ` of the fidelity block:
///
/// ```text
/// P = H_P^{-1} − H_P^{-1} U (I + Uᵀ H_P^{-1} U)^{-1} Uᵀ H_P^{-1}
/// ```
#[derive(Debug, Clone)]
pub struct WoodburyPreconditioner {
    n: usize,
    epsilon: f64,
    kept: Vec<usize>,
    screened: usize,
    /// `|kept| × k`, row `i` belongs to component `kept[i]`.
    factor: DMatrix<f64>,
    penalty: PenaltyFactor,
    /// `H_P^{-1} U`, `2n × k`.
    hp_inv_u: DMatrix<f64>,
    core: Option<LU<f64, Dyn, Dyn>>,
    error_inf: f64,
}

/// Screens the fidelity block, truncates its spectrum and factors the
/// Woodbury core.
///
/// Columns whose absolute column sum falls below `ε/2` are dropped. If the
/// dropped columns still couple more than `ε/2` (in absolute row sum) into
/// some kept row, the heaviest dropped columns are readmitted until they do
/// not. The kept principal block is then truncated at the smallest rank
/// whose residual has ∞-norm at most `ε/2`. Together this bounds the full
/// residual `‖D_θ^{1/2}AᵀAD_θ^{1/2} − UUᵀ‖∞` by `ε`.
pub fn build_preconditioner(hs: &ScaledHessian<'_>, epsilon: f64) -> Result<WoodburyPreconditioner> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("screening tolerance must lie in (0, 1), got {epsilon}")));
    }
    let n = hs.n();
    let penalty = hs.penalty()?;
    let gram = hs.problem().gram();
    let d = hs.sqrt_theta();
    let half = 0.5 * epsilon;

    // |K_ij| for the stored entries of column j of K = D^{1/2} AᵀA D^{1/2}.
    let column =
        |j: usize, f: &mut dyn FnMut(usize, f64)| gram.for_each_in_column(j, |i, g| f(i, (d[i] * g * d[j]).abs()));
    let col_sums: Vec<f64> = (0..n)
        .map(|j| {
            let mut s = 0.0;
            column(j, &mut |_, v| s += v);
            s
        })
        .collect();

    let mut is_kept: Vec<bool> = col_sums.iter().map(|&s| s >= half).collect();
    let screened = is_kept.iter().filter(|&&k| k).count();
    // Row sums of |K| over dropped columns; meaningful on kept rows.
    let cross_sums = |is_kept: &[bool]| {
        let mut cross = vec![0.0; n];
        for j in (0..n).filter(|&j| !is_kept[j]) {
            column(j, &mut |i, v| cross[i] += v);
        }
        cross
    };
    let mut cross = cross_sums(&is_kept);
    let mut dropped: Vec<usize> = (0..n).filter(|&j| !is_kept[j]).collect();
    dropped.sort_by(|&a, &b| col_sums[a].total_cmp(&col_sums[b]));
    while let Some(&heaviest) = dropped.last() {
        let worst = (0..n).filter(|&i| is_kept[i]).map(|i| cross[i]).fold(0.0, f64::max);
        if worst <= half {
            break;
        }
        dropped.pop();
        is_kept[heaviest] = true;
        let mut own = 0.0;
        column(heaviest, &mut |i, v| {
            if i != heaviest {
                cross[i] -= v;
                if !is_kept[i] {
                    own += v;
                }
            }
        });
        cross[heaviest] = own;
    }
    let kept: Vec<usize> = (0..n).filter(|&j| is_kept[j]).collect();
    let p = kept.len();
    let mut position = vec![usize::MAX; n];
    for (a, &i) in kept.iter().enumerate() {
        position[i] = a;
    }

    let mut block = DMatrix::zeros(p, p);
    for (b, &j) in kept.iter().enumerate() {
        gram.for_each_in_column(j, |i, g| {
            if position[i] != usize::MAX {
                block[(position[i], b)] = d[i] * g * d[j];
            }
        });
    }
    let (factor, residual) = truncate(&block, half)?;
    let k = factor.ncols();

    let mut padded = DMatrix::zeros(2 * n, k);
    for (a, &i) in kept.iter().enumerate() {
        padded.row_mut(i).copy_from(&factor.row(a));
    }
    let hp_inv_u = penalty.apply_inverse_columns(&padded);
    let core = if k > 0 {
        let mut m = DMatrix::identity(k, k);
        for (a, &i) in kept.iter().enumerate() {
            for c1 in 0..k {
                let ui = factor[(a, c1)];
                if ui == 0.0 {
                    continue;
                }
                for c2 in 0..k {
                    m[(c1, c2)] += ui * hp_inv_u[(i, c2)];
                }
            }
        }
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::Decomposition("Woodbury core matrix is singular".into()));
        }
        Some(lu)
    } else {
        None
    };

    // Exact ∞-norm of the full residual.
    let cross = cross_sums(&is_kept);
    let mut error_inf: f64 = 0.0;
    for i in 0..n {
        let row = if is_kept[i] {
            cross[i] + residual.row(position[i]).iter().map(|v| v.abs()).sum::<f64>()
        } else {
            col_sums[i]
        };
        error_inf = error_inf.max(row);
    }

    Ok(WoodburyPreconditioner { n, epsilon, kept, screened, factor, penalty, hp_inv_u, core, error_inf })
}

/// Smallest-rank spectral truncation of a symmetric PSD block whose
/// residual has ∞-norm at most `budget`. Returns `(U, block − UUᵀ)`.
fn truncate(block: &DMatrix<f64>, budget: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = block.nrows();
    if p == 0 {
        return Ok((DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(block.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Decomposition("symmetric eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let inf_norm = |m: &DMatrix<f64>| m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut residual = block.clone();
    let mut rank = 0;
    while rank < p && inf_norm(&residual) > budget {
        let idx = order[rank];
        let lambda = eig.eigenvalues[idx].max(0.0);
        let v = eig.eigenvectors.column(idx);
        residual.ger(-lambda, &v, &v, 1.0);
        rank += 1;
    }
    let mut factor = DMatrix::zeros(p, rank);
    for (c, &idx) in order.iter().take(rank).enumerate() {
        let scale = eig.eigenvalues[idx].max(0.0).sqrt();
        factor.set_column(c, &(eig.eigenvectors.column(idx) * scale));
    }
    Ok((factor, residual))
}

impl WoodburyPreconditioner {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Components whose fidelity columns survived screening.
    pub fn kept_columns(&self) -> &[usize] {
        &self.kept
    }

    /// Columns passing the raw `ε/2` column-sum test, before any were
    /// readmitted to control cross coupling.
    pub fn screened_columns(&self) -> usize {
        self.screened
    }

    /// Effective rank `k` of the low-rank fidelity model.
    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    /// `U` restricted to the kept rows.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `U` as a `2n × k` matrix.
    pub fn factor_padded(&self) -> DMatrix<f64> {
        let mut u = DMatrix::zeros(2 * self.n, self.rank());
        for (a, &i) in self.kept.iter().enumerate() {
            u.row_mut(i).copy_from(&self.factor.row(a));
        }
        u
    }

    pub fn penalty(&self) -> &PenaltyFactor {
        &self.penalty
    }

    /// `‖D_θ^{1/2}AᵀAD_θ^{1/2} − UUᵀ‖∞` for the model actually built.
    pub fn error_inf(&self) -> f64 {
        self.error_inf
    }
}

impl LinearOperator for WoodburyPreconditioner {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut y = self.penalty.apply_inverse(v);
        let Some(core) = &self.core else {
            return y;
        };
        let k = self.rank();
        let mut t = DVector::zeros(k);
        for (a, &i) in self.kept.iter().enumerate() {
            let yi = y[i];
            for c in 0..k {
                t[c] += self.factor[(a, c)] * yi;
            }
        }
        let s = core.solve(&t).expect("core factored as invertible");
        y.gemv(-1.0, &self.hp_inv_u, &s, 1.0);
        y
    }
}

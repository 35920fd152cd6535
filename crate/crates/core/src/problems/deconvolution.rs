use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::bessel::airy_kernel;
use super::rng::{stream_rng, Stream};
use crate::error::{Error, Result};
use crate::model::Problem;

/// One-dimensional deconvolution of a piecewise-constant signal.
///
/// The unknown is the jump vector `y` of the signal `x = L⁻¹ y`, where
/// `L⁻¹` is the all-ones lower-triangular matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeconvolutionConfig {
    pub n_grid: usize,
    pub kappa: f64,
    /// Noise standard deviation as a fraction of `max |A x|`.
    pub noise_pct: f64,
    pub jump_locations: Vec<f64>,
    pub jump_amplitudes: Vec<f64>,
    pub seed: u64,
    /// Divide operator and data by the noise level so the noise is white
    /// with unit variance.
    pub whiten: bool,
}

impl Default for DeconvolutionConfig {
    fn default() -> Self {
        Self {
            n_grid: 96,
            kappa: 40.0,
            noise_pct: 0.01,
            jump_locations: vec![0.10, 0.25, 0.45, 0.60, 0.80],
            jump_amplitudes: vec![1.0, -0.6, 0.8, -1.2, 0.5],
            seed: 0,
            whiten: true,
        }
    }
}

impl DeconvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid < 2 {
            return Err(Error::Config("n_grid must be at least 2".into()));
        }
        if !(self.kappa > 0.0) || !(self.noise_pct >= 0.0) {
            return Err(Error::Config("kappa must be positive and noise_pct non-negative".into()));
        }
        if self.jump_locations.len() != self.jump_amplitudes.len() {
            return Err(Error::Config(format!(
                "{} jump locations but {} amplitudes",
                self.jump_locations.len(),
                self.jump_amplitudes.len()
            )));
        }
        let mut prev = 0.0;
        for &loc in &self.jump_locations {
            if !(loc > prev && loc < 1.0) {
                return Err(Error::Config("jump locations must be strictly increasing in (0, 1)".into()));
            }
            prev = loc;
        }
        let idx = self.jump_indices();
        if idx.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("two jumps snap to the same grid point".into()));
        }
        Ok(())
    }

    /// Grid index of each jump: the nearest grid point `t_k = k/(n−1)`.
    pub fn jump_indices(&self) -> Vec<usize> {
        let h = (self.n_grid - 1) as f64;
        self.jump_locations.iter().map(|&loc| (loc * h).round() as usize).collect()
    }

    /// Observation points `s_j = (4 + j)/100`, `j = 1..=n_grid`.
    pub fn observation_points(&self) -> Vec<f64> {
        (1..=self.n_grid).map(|j| (4 + j) as f64 / 100.0).collect()
    }
}

/// Blurring matrix `A_jk = w_k (J₁(κ|s_j − t_k|) / (κ|s_j − t_k|))²` with
/// trapezoid weights on `t_k = k/(n−1)`.
pub(crate) fn blur_matrix(cfg: &DeconvolutionConfig) -> DMatrix<f64> {
    let n = cfg.n_grid;
    let h = 1.0 / (n - 1) as f64;
    let s = cfg.observation_points();
    DMatrix::from_fn(s.len(), n, |j, k| {
        let w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
        let t = k as f64 * h;
        w * airy_kernel(cfg.kappa * (s[j] - t).abs())
    })
}

pub fn build_deconvolution(cfg: &DeconvolutionConfig) -> Result<Problem> {
    cfg.validate()?;
    let n = cfg.n_grid;
    let a = blur_matrix(cfg);
    // A L⁻¹ has column k equal to the sum of A's columns k..n.
    let mut op = a.clone();
    for k in (0..n - 1).rev() {
        let next = op.column(k + 1).into_owned();
        let mut col = op.column_mut(k);
        col += next;
    }
    let mut truth = DVector::zeros(n);
    for (idx, &amp) in cfg.jump_indices().into_iter().zip(&cfg.jump_amplitudes) {
        truth[idx] = amp;
    }
    let clean = &op * &truth;
    let sigma = cfg.noise_pct * clean.amax();
    let mut rng = stream_rng(cfg.seed, Stream::Noise, 0);
    let data = clean.map(|v| {
        let e: f64 = StandardNormal.sample(&mut rng);
        v + sigma * e
    });
    let (op, data) = super::whitened(op, data, sigma, cfg.whiten);
    Problem::new(op, data, Some(truth), sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operator_is_blur_times_cumulative_sum() {
        let cfg = DeconvolutionConfig { n_grid: 12, ..Default::default() };
        let p = build_deconvolution(&DeconvolutionConfig { whiten: false, ..cfg.clone() }).unwrap();
        let a = blur_matrix(&cfg);
        let linv = DMatrix::from_fn(12, 12, |i, j| if i >= j { 1.0 } else { 0.0 });
        let l = DMatrix::from_fn(12, 12, |i, j| match i as isize - j as isize {
            0 => 1.0,
            1 => -1.0,
            _ => 0.0,
        });
        assert_eq!(&l * &linv, DMatrix::identity(12, 12));
        assert!((&a * &linv - p.operator()).amax() < 1e-15);
    }

    #[test]
    fn default_noise_is_one_percent() {
        let raw = build_deconvolution(&DeconvolutionConfig { whiten: false, ..Default::default() }).unwrap();
        let clean = raw.operator() * raw.truth().unwrap();
        assert_eq!(raw.noise_sigma(), 0.01 * clean.amax());
        let p = build_deconvolution(&DeconvolutionConfig::default()).unwrap();
        assert_eq!(p.noise_sigma(), raw.noise_sigma());
        assert!((p.operator() * raw.noise_sigma() - raw.operator()).amax() < 1e-15);
        assert!(((p.operator() * p.truth().unwrap()).amax() - 100.0).abs() < 1e-10);
        assert_eq!(p.truth().unwrap().iter().filter(|v| **v != 0.0).count(), 5);
        assert_eq!((p.rows(), p.dim()), (96, 96));
    }

    #[test]
    fn zero_amplitudes_give_zero_data() {
        let cfg = DeconvolutionConfig { jump_amplitudes: vec![0.0; 5], ..Default::default() };
        let p = build_deconvolution(&cfg).unwrap();
        assert_eq!(p.data(), &DVector::zeros(96));
    }

    #[test]
    fn coincident_grid_point_uses_limit() {
        // s_1 = 0.05 lies on the grid when n − 1 = 100.
        let cfg = DeconvolutionConfig { n_grid: 101, ..Default::default() };
        let a = blur_matrix(&cfg);
        assert!((a[(0, 5)] - 0.01 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_problem() {
        let cfg = DeconvolutionConfig { seed: 3, ..Default::default() };
        let p = build_deconvolution(&cfg).unwrap();
        let q = build_deconvolution(&cfg).unwrap();
        assert_eq!(p.data(), q.data());
        assert_eq!(p.operator(), q.operator());
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = DeconvolutionConfig {
            jump_locations: vec![0.5, 0.2],
            jump_amplitudes: vec![1.0, 1.0],
            ..Default::default()
        };
        assert!(build_deconvolution(&cfg).is_err());
        let cfg = DeconvolutionConfig { jump_amplitudes: vec![1.0], ..Default::default() };
        assert!(build_deconvolution(&cfg).is_err());
    }
}

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::rng::{stream_rng, Stream};
use crate::error::{Error, Result};
use crate::model::Problem;

/// Gaussian deblurring of a nearly black image with `n_impulses` bright
/// pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageConfig {
    pub grid_side: usize,
    pub obs_side: usize,
    pub n_impulses: usize,
    pub kernel_width: f64,
    pub amp_range: [f64; 2],
    pub noise_pct: f64,
    pub seed: u64,
    /// Fixed impulse pixels (row-major indices); overrides sampling.
    pub impulses: Option<Vec<usize>>,
    pub units: PixelUnits,
    /// Divide operator and data by the noise level.
    pub whiten: bool,
}

/// What a pixel value measures. Both give the same data `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelUnits {
    /// Impulse mass in the pixel; `A_jl = kernel(q_j, q'_l)`.
    #[default]
    Mass,
    /// Mass per unit area; `A_jl = |Ω_l| kernel(q_j, q'_l)`, so rows of `A`
    /// integrate the kernel and sum to about 1.
    Density,
}

/// Kernel values below this fraction of the peak are stored as zero.
pub const KERNEL_FLOOR: f64 = 1e-16;

impl Default for ImageConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ImageConfig {
    /// 64² pixels, 32² observations, 12 impulses.
    pub fn desk() -> Self {
        Self {
            grid_side: 64,
            obs_side: 32,
            n_impulses: 12,
            kernel_width: 0.01,
            amp_range: [1.5, 2.0],
            noise_pct: 0.018,
            seed: 0,
            impulses: None,
            units: PixelUnits::Mass,
            whiten: true,
        }
    }

    /// 128² pixels, 64² observations, 50 impulses.
    pub fn full() -> Self {
        Self { grid_side: 128, obs_side: 64, n_impulses: 50, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_side == 0 || self.grid_side < self.obs_side {
            return Err(Error::Config("need grid_side >= obs_side >= 1".into()));
        }
        let n = self.grid_side * self.grid_side;
        if self.n_impulses == 0 || self.n_impulses > n {
            return Err(Error::Config(format!("n_impulses must lie in [1, {n}]")));
        }
        if !(self.kernel_width > 0.0) || !(self.noise_pct >= 0.0) {
            return Err(Error::Config("kernel_width must be positive and noise_pct non-negative".into()));
        }
        let [lo, hi] = self.amp_range;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config("amp_range must be an ordered finite pair".into()));
        }
        if let Some(idx) = &self.impulses {
            let unique: BTreeSet<_> = idx.iter().collect();
            if idx.len() != self.n_impulses || unique.len() != idx.len() || idx.iter().any(|&i| i >= n) {
                return Err(Error::Config("impulses must be n_impulses distinct pixel indices".into()));
            }
        }
        Ok(())
    }

    pub fn pixel_area(&self) -> f64 {
        let h = 1.0 / self.grid_side as f64;
        h * h
    }
}

/// Centers of a `side × side` partition of the unit square, row-major.
pub(crate) fn cell_centers(side: usize) -> Vec<(f64, f64)> {
    let h = 1.0 / side as f64;
    (0..side * side).map(|i| (((i / side) as f64 + 0.5) * h, ((i % side) as f64 + 0.5) * h)).collect()
}

fn sample_impulses(cfg: &ImageConfig) -> Vec<usize> {
    if let Some(idx) = &cfg.impulses {
        return idx.clone();
    }
    let n = cfg.grid_side * cfg.grid_side;
    let mut rng = stream_rng(cfg.seed, Stream::Positions, 0);
    let mut chosen = Vec::with_capacity(cfg.n_impulses);
    let mut seen = BTreeSet::new();
    while chosen.len() < cfg.n_impulses {
        let i = rng.random_range(0..n);
        if seen.insert(i) {
            chosen.push(i);
        }
    }
    chosen
}

pub fn build_impulse_image(cfg: &ImageConfig) -> Result<Problem> {
    cfg.validate()?;
    let pixels = cell_centers(cfg.grid_side);
    let obs = cell_centers(cfg.obs_side);
    let area = cfg.pixel_area();
    let unit = match cfg.units {
        PixelUnits::Mass => 1.0,
        PixelUnits::Density => area,
    };
    let w2 = cfg.kernel_width * cfg.kernel_width;
    let scale = unit / (2.0 * PI * w2);
    let cutoff = -KERNEL_FLOOR.ln();
    let op = DMatrix::from_fn(obs.len(), pixels.len(), |j, l| {
        let (dx, dy) = (obs[j].0 - pixels[l].0, obs[j].1 - pixels[l].1);
        let q = (dx * dx + dy * dy) / (2.0 * w2);
        if q > cutoff {
            0.0
        } else {
            scale * (-q).exp()
        }
    });

    let mut truth = DVector::zeros(pixels.len());
    let amp = Uniform::new_inclusive(cfg.amp_range[0], cfg.amp_range[1])
        .map_err(|e| Error::Config(format!("amp_range: {e}")))?;
    let mut rng = stream_rng(cfg.seed, Stream::Amplitudes, 0);
    for i in sample_impulses(cfg) {
        truth[i] = amp.sample(&mut rng) / unit;
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

    fn small() -> ImageConfig {
        ImageConfig { grid_side: 32, obs_side: 16, n_impulses: 4, ..ImageConfig::desk() }
    }

    #[test]
    fn single_impulse_peaks_at_nearest_observation() {
        let pixel = 9 * 32 + 20;
        let cfg = ImageConfig { n_impulses: 1, impulses: Some(vec![pixel]), noise_pct: 0.0, ..small() };
        let p = build_impulse_image(&cfg).unwrap();
        let target = cell_centers(32)[pixel];
        let obs = cell_centers(16);
        let nearest = (0..obs.len())
            .min_by(|&a, &b| {
                let da = (obs[a].0 - target.0).powi(2) + (obs[a].1 - target.1).powi(2);
                let db = (obs[b].0 - target.0).powi(2) + (obs[b].1 - target.1).powi(2);
                da.total_cmp(&db)
            })
            .unwrap();
        assert_eq!(p.data().imax(), nearest);
    }

    #[test]
    fn interior_rows_integrate_to_one() {
        let cfg = ImageConfig { whiten: false, units: PixelUnits::Density, ..ImageConfig::desk() };
        let p = build_impulse_image(&cfg).unwrap();
        let obs = cell_centers(cfg.obs_side);
        for (j, (x, y)) in obs.iter().enumerate() {
            if (0.1..0.9).contains(x) && (0.1..0.9).contains(y) {
                let s: f64 = p.operator().row(j).sum();
                assert!((s - 1.0).abs() < 1e-2, "row {j}: {s}");
            }
        }
    }

    #[test]
    fn impulses_distinct_and_scaled() {
        let cfg = small();
        let p = build_impulse_image(&cfg).unwrap();
        let truth = p.truth().unwrap();
        let nz: Vec<f64> = truth.iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(nz.len(), 4);
        assert!(nz.iter().all(|v| (1.5..=2.0).contains(v)));
    }

    #[test]
    fn units_change_the_unknown_not_the_data() {
        let mass = build_impulse_image(&small()).unwrap();
        let density = build_impulse_image(&ImageConfig { units: PixelUnits::Density, ..small() }).unwrap();
        let area = small().pixel_area();
        assert!((mass.data() - density.data()).amax() < 1e-12 * mass.data().amax());
        assert!((mass.truth().unwrap() - density.truth().unwrap() * area).amax() < 1e-12);
    }

    #[test]
    fn narrow_kernel_gives_sparse_operator() {
        let p = build_impulse_image(&ImageConfig::desk()).unwrap();
        assert!(p.is_sparse());
        let nnz = p.operator().iter().filter(|v| **v != 0.0).count();
        assert!(nnz < p.operator().len() / 20);
    }

    #[test]
    fn full_scale_dimensions() {
        let cfg = ImageConfig::full();
        assert_eq!(cfg.obs_side * cfg.obs_side, 4096);
        assert_eq!(cfg.grid_side * cfg.grid_side, 16384);
    }

    #[test]
    fn reproducible() {
        let a = build_impulse_image(&small()).unwrap();
        let b = build_impulse_image(&small()).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(a.truth(), b.truth());
    }
}

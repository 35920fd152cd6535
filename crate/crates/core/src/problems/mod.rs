//! Benchmark inverse problems: 1D deconvolution of a piecewise-constant
//! signal and 2D deblurring of a sparse impulse image.

mod bessel;
mod deconvolution;
mod image;
mod io;
mod rng;

pub use bessel::{airy_kernel, bessel_j1};
pub use deconvolution::{build_deconvolution, DeconvolutionConfig};
pub use image::{build_impulse_image, ImageConfig, PixelUnits, KERNEL_FLOOR};
pub use io::{load_problem, save_problem, ProblemFile};
pub use rng::{stream_rng, Stream};

use nalgebra::{DMatrix, DVector};

/// `(A/σ, b/σ)`; a no-op for `σ = 0` or when disabled.
fn whitened(op: DMatrix<f64>, data: DVector<f64>, sigma: f64, whiten: bool) -> (DMatrix<f64>, DVector<f64>) {
    if whiten && sigma > 0.0 {
        (op / sigma, data / sigma)
    } else {
        (op, data)
    }
}

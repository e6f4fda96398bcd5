//! Unnormalized 2D DFT on row-major `ny × nx` buffers.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

/// `inverse = false`: `Σ a e^{-j2π(...)}`; `inverse = true`: `Σ a e^{+j2π(...)}`.
pub(crate) fn fft2(data: &mut [Complex64], nx: usize, ny: usize, inverse: bool) {
    assert_eq!(data.len(), nx * ny);
    let dir = if inverse { FftDirection::Inverse } else { FftDirection::Forward };
    let mut planner = FftPlanner::new();
    if nx > 1 {
        let fx = planner.plan_fft(nx, dir);
        fx.process(data);
    }
    if ny > 1 {
        let fy = planner.plan_fft(ny, dir);
        let mut col = vec![Complex64::new(0.0, 0.0); ny];
        for ix in 0..nx {
            for iy in 0..ny {
                col[iy] = data[iy * nx + ix];
            }
            fy.process(&mut col);
            for iy in 0..ny {
                data[iy * nx + ix] = col[iy];
            }
        }
    }
}

/// `n` if `x` is within `1e-9` (relative) of the positive integer `n`.
pub(crate) fn as_integer(x: f64) -> Option<usize> {
    let n = x.round();
    (n >= 1.0 && (x - n).abs() <= 1e-9 * n).then_some(n as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn matches_direct_dft() {
        let (nx, ny) = (6, 5);
        let a: Vec<Complex64> = (0..nx * ny).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        for inverse in [false, true] {
            let mut b = a.clone();
            fft2(&mut b, nx, ny, inverse);
            let s = if inverse { 1.0 } else { -1.0 };
            for ky in 0..ny {
                for kx in 0..nx {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for y in 0..ny {
                        for x in 0..nx {
                            let ph = 2.0 * PI * ((kx * x) as f64 / nx as f64 + (ky * y) as f64 / ny as f64);
                            acc += a[y * nx + x] * Complex64::from_polar(1.0, s * ph);
                        }
                    }
                    assert!((acc - b[ky * nx + kx]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn integer_detection() {
        assert_eq!(as_integer(198.0000000000001), Some(198));
        assert_eq!(as_integer(198.2), None);
        assert_eq!(as_integer(0.2), None);
    }
}

use num_complex::Complex;

use super::ComplexField;
use crate::error::Result;
use crate::scalar::Scalar;

/// Unitary 2-D DFT applied to every channel: `X[k] = (hw)^{-1/2} Σ x[n] e^{-2πi k·n}`.
pub fn fft2_unitary<T: Scalar>(f: &ComplexField<T>) -> Result<ComplexField<T>> {
    transform(f, Direction::Forward)
}

/// Inverse (and adjoint) of [`fft2_unitary`].
pub fn ifft2_unitary<T: Scalar>(f: &ComplexField<T>) -> Result<ComplexField<T>> {
    transform(f, Direction::Inverse)
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

fn transform<T: Scalar>(f: &ComplexField<T>, dir: Direction) -> Result<ComplexField<T>> {
    let shape = f.shape();
    shape.ensure_pow2()?;
    let (h, w) = (shape.height, shape.width);
    let row_plan = Radix2::new(w, dir);
    let col_plan = Radix2::new(h, dir);
    let norm = T::lit(((h * w) as f64).sqrt().recip());

    let mut out = f.clone();
    let mut column = vec![Complex::new(T::zero(), T::zero()); h];
    for plane in out.data_mut().chunks_mut(h * w) {
        for row in plane.chunks_mut(w) {
            row_plan.run(row);
        }
        for c in 0..w {
            for r in 0..h {
                column[r] = plane[r * w + c];
            }
            col_plan.run(&mut column);
            for r in 0..h {
                plane[r * w + c] = column[r] * norm;
            }
        }
    }
    Ok(out)
}

/// In-place iterative Cooley-Tukey for one power-of-two length.
struct Radix2<T> {
    n: usize,
    twiddles: Vec<Complex<T>>,
}

impl<T: Scalar> Radix2<T> {
    fn new(n: usize, dir: Direction) -> Self {
        let sign = match dir {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        };
        let twiddles = (0..n / 2)
            .map(|k| {
                let angle = sign * 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Complex::new(T::lit(angle.cos()), T::lit(angle.sin()))
            })
            .collect();
        Self { n, twiddles }
    }

    fn run(&self, buf: &mut [Complex<T>]) {
        let n = self.n;
        if n <= 1 {
            return;
        }
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let tw = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * tw;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

//! Real and complex multi-channel grids, the unitary FFT, seeded randomness
//! and file I/O.
//!
//! Fields are stored channel-planar: channel `c`, row `r`, column `q` lives at
//! `c * height * width + r * width + q`. Every operator in the crate treats
//! channels independently.

mod fft;
pub mod io;
mod rng;

use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use fft::{fft2_unitary, ifft2_unitary};
pub use rng::{sample_standard_gaussian, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub const fn plane(&self) -> usize {
        self.height * self.width
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same plane, different channel count.
    pub const fn with_channels(&self, channels: usize) -> Self {
        Self::new(self.height, self.width, channels)
    }

    pub(crate) fn ensure_eq(&self, other: &Shape) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: *self,
                found: *other,
            })
        }
    }

    pub(crate) fn ensure_pow2(&self) -> Result<()> {
        if self.height.is_power_of_two() && self.width.is_power_of_two() {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "grid {}x{} is not a power of two in both directions",
                self.height, self.width
            )))
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Real-valued image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> ImageField<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Dimension(format!(
                "{} values supplied for a {} field",
                data.len(),
                shape
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> T) -> Self {
        Self {
            shape,
            data: (0..shape.len()).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let p = self.shape.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let p = self.shape.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.shape.ensure_eq(&other.shape)?;
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: T, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.shape.ensure_eq(&other.shape)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    pub fn norm_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> T {
        self.data.iter().copied().sum::<T>() / T::lit(self.len().max(1) as f64)
    }

    pub fn channel_mean(&self, c: usize) -> T {
        let ch = self.channel(c);
        ch.iter().copied().sum::<T>() / T::lit(ch.len() as f64)
    }

    pub fn channel_variance(&self, c: usize) -> T {
        let ch = self.channel(c);
        let m = self.channel_mean(c);
        ch.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::lit(ch.len() as f64)
    }

    pub fn cast<U: Scalar>(&self) -> ImageField<U> {
        ImageField {
            shape: self.shape,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn to_complex(&self) -> ComplexField<T> {
        ComplexField {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|&v| Complex::new(v, T::zero()))
                .collect(),
        }
    }

    /// Stacks fields with identical planes along the channel axis.
    pub fn concat_channels(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Parameter("no fields to concatenate".into()))?;
        let (h, w) = (first.shape.height, first.shape.width);
        let mut channels = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.shape.height != h || p.shape.width != w {
                return Err(Error::ShapeMismatch {
                    expected: first.shape,
                    found: p.shape,
                });
            }
            channels += p.shape.channels;
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            shape: Shape::new(h, w, channels),
            data,
        })
    }

    /// Inverse of [`ImageField::concat_channels`] for equal-sized groups.
    pub fn split_channels(&self, group: usize) -> Result<Vec<Self>> {
        if group == 0 || !self.shape.channels.is_multiple_of(group) {
            return Err(Error::Dimension(format!(
                "{} channels cannot be split into groups of {}",
                self.shape.channels, group
            )));
        }
        let shape = self.shape.with_channels(group);
        Ok(self
            .data
            .chunks(shape.len())
            .map(|chunk| Self {
                shape,
                data: chunk.to_vec(),
            })
            .collect())
    }
}

/// Complex-valued grid with the same layout as [`ImageField`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField<T> {
    shape: Shape,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> ComplexField<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![Complex::new(T::zero(), T::zero()); shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Dimension(format!(
                "{} values supplied for a {} field",
                data.len(),
                shape
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn norm_sq(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    /// `Σ conj(a) b`, the inner product that is linear in the second argument.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        self.shape.ensure_eq(&other.shape)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| {
                acc + a.conj() * b
            }))
    }

    pub fn modulus(&self) -> ImageField<T> {
        ImageField {
            shape: self.shape,
            data: self.data.iter().map(|z| z.norm()).collect(),
        }
    }

    pub fn real(&self) -> ImageField<T> {
        ImageField {
            shape: self.shape,
            data: self.data.iter().map(|z| z.re).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

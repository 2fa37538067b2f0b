//! Coded-diffraction-pattern measurements `y = |F M x| + e`.
//!
//! `A_l = F · diag(M_l)` for each of `L` unit-modulus phase masks, with `F` the
//! unitary 2-D DFT. The same masks act on every color channel. Because `F` is
//! unitary and the masks are unimodular, `A^H A = L · I`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{fft2_unitary, ifft2_unitary, ComplexField, ImageField, SeededRng, Shape};
use crate::scalar::Scalar;

/// Unit-modulus complex modulation over one image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask<T> {
    height: usize,
    width: usize,
    entries: Vec<Complex<T>>,
}

impl<T: Scalar> PhaseMask<T> {
    /// Entries `e^{iφ}` with `φ` uniform on `[0, 2π)`.
    pub fn random(height: usize, width: usize, rng: &mut SeededRng) -> Self {
        let entries = (0..height * width)
            .map(|_| {
                let phi = rng.uniform() * std::f64::consts::TAU;
                Complex::new(T::lit(phi.cos()), T::lit(phi.sin()))
            })
            .collect();
        Self {
            height,
            width,
            entries,
        }
    }

    pub fn identity(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            entries: vec![Complex::new(T::one(), T::zero()); height * width],
        }
    }

    /// Validates that every entry has modulus 1 within `1e-6`, the precision
    /// a float32 round-trip preserves.
    pub fn from_entries(height: usize, width: usize, entries: Vec<Complex<T>>) -> Result<Self> {
        if entries.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} mask entries for a {height}x{width} plane",
                entries.len()
            )));
        }
        if let Some(z) = entries
            .iter()
            .find(|z| (z.norm().as_f64() - 1.0).abs() > 1e-6)
        {
            return Err(Error::Parameter(format!(
                "mask entry {z} is not unit-modulus"
            )));
        }
        Ok(Self {
            height,
            width,
            entries,
        })
    }

    pub fn entries(&self) -> &[Complex<T>] {
        &self.entries
    }
}

/// Measurement map with one block per mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CdpOperator<T> {
    shape: Shape,
    masks: Vec<PhaseMask<T>>,
}

/// Draws `num_masks` random phase masks for images of `shape`.
pub fn make_cdp_operator<T: Scalar>(
    shape: Shape,
    num_masks: usize,
    rng: &mut SeededRng,
) -> Result<CdpOperator<T>> {
    if num_masks == 0 {
        return Err(Error::Parameter("need at least one mask".into()));
    }
    shape.ensure_pow2()?;
    if shape.is_empty() {
        return Err(Error::Dimension(format!("empty image shape {shape}")));
    }
    let masks = (0..num_masks)
        .map(|_| PhaseMask::random(shape.height, shape.width, rng))
        .collect();
    Ok(CdpOperator { shape, masks })
}

impl<T: Scalar> CdpOperator<T> {
    pub fn new(shape: Shape, masks: Vec<PhaseMask<T>>) -> Result<Self> {
        shape.ensure_pow2()?;
        if masks.is_empty() {
            return Err(Error::Parameter("need at least one mask".into()));
        }
        if let Some(m) = masks
            .iter()
            .find(|m| m.height != shape.height || m.width != shape.width)
        {
            return Err(Error::Dimension(format!(
                "mask {}x{} does not match image plane {}x{}",
                m.height, m.width, shape.height, shape.width
            )));
        }
        Ok(Self { shape, masks })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn num_masks(&self) -> usize {
        self.masks.len()
    }

    pub fn masks(&self) -> &[PhaseMask<T>] {
        &self.masks
    }

    /// Total number of real amplitude measurements `m = L · h · w · c`.
    pub fn measurement_count(&self) -> usize {
        self.masks.len() * self.shape.len()
    }

    /// Masks stacked as the channels of one complex field, for serialization.
    pub fn masks_as_field(&self) -> ComplexField<T> {
        let data = self
            .masks
            .iter()
            .flat_map(|m| m.entries.iter().copied())
            .collect();
        ComplexField::from_vec(self.shape.with_channels(self.masks.len()), data)
            .expect("mask planes match shape")
    }

    pub fn from_mask_field(field: &ComplexField<T>, channels: usize) -> Result<Self> {
        let s = field.shape();
        let plane = s.plane();
        let masks = field
            .data()
            .chunks(plane)
            .map(|c| PhaseMask::from_entries(s.height, s.width, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(Shape::new(s.height, s.width, channels), masks)
    }

    fn modulate(&self, mask: &PhaseMask<T>, x: &ImageField<T>) -> ComplexField<T> {
        let plane = self.shape.plane();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| mask.entries[i % plane] * v)
            .collect();
        ComplexField::from_vec(self.shape, data).expect("shape checked by caller")
    }

    /// Block `l` is `F(M_l ⊙ x)`.
    pub fn apply(&self, x: &ImageField<T>) -> Result<Vec<ComplexField<T>>> {
        self.shape.ensure_eq(&x.shape())?;
        self.masks
            .iter()
            .map(|m| fft2_unitary(&self.modulate(m, x)))
            .collect()
    }

    /// `A^H b = Σ_l conj(M_l) ⊙ F^{-1} b_l`.
    pub fn adjoint(&self, blocks: &[ComplexField<T>]) -> Result<ComplexField<T>> {
        self.check_blocks(blocks.iter().map(|b| b.shape()), blocks.len())?;
        let plane = self.shape.plane();
        let mut acc = ComplexField::zeros(self.shape);
        for (mask, block) in self.masks.iter().zip(blocks) {
            let back = ifft2_unitary(block)?;
            for (i, (a, z)) in acc.data_mut().iter_mut().zip(back.data()).enumerate() {
                *a += mask.entries[i % plane].conj() * z;
            }
        }
        Ok(acc)
    }

    /// Noiseless amplitudes `|A x|`.
    pub fn amplitudes(&self, x: &ImageField<T>) -> Result<Vec<ImageField<T>>> {
        Ok(self.apply(x)?.iter().map(ComplexField::modulus).collect())
    }

    /// `g(x) = ½ Σ_l ‖y_l − |A_l x|‖²`.
    pub fn fidelity(&self, y: &[ImageField<T>], x: &ImageField<T>) -> Result<T> {
        self.check_blocks(y.iter().map(|b| b.shape()), y.len())?;
        let ax = self.apply(x)?;
        Ok(residual_energy(y, &ax))
    }

    /// `Re[A^H (A x − y ⊙ sgn(A x))]` with `sgn(0) = 0`.
    pub fn fidelity_subgradient(
        &self,
        y: &[ImageField<T>],
        x: &ImageField<T>,
    ) -> Result<ImageField<T>> {
        self.fidelity_with_subgradient(y, x).map(|(_, g)| g)
    }

    /// `g(x)` and its subgradient from one forward pass.
    pub fn fidelity_with_subgradient(
        &self,
        y: &[ImageField<T>],
        x: &ImageField<T>,
    ) -> Result<(T, ImageField<T>)> {
        self.check_blocks(y.iter().map(|b| b.shape()), y.len())?;
        let ax = self.apply(x)?;
        let value = residual_energy(y, &ax);
        let residual: Vec<ComplexField<T>> = ax
            .into_iter()
            .zip(y)
            .map(|(mut block, yl)| {
                // A x − y ⊙ sgn(A x) written as sgn(A x)(|A x| − y), which is
                // exactly zero wherever y equals the computed amplitude.
                for (z, &m) in block.data_mut().iter_mut().zip(yl.data()) {
                    let r = z.norm();
                    *z = if r > T::zero() {
                        *z / r * (r - m)
                    } else {
                        Complex::new(T::zero(), T::zero())
                    };
                }
                block
            })
            .collect();
        Ok((value, self.adjoint(&residual)?.real()))
    }

    fn check_blocks(&self, shapes: impl Iterator<Item = Shape>, count: usize) -> Result<()> {
        if count != self.masks.len() {
            return Err(Error::Dimension(format!(
                "{count} measurement blocks for {} masks",
                self.masks.len()
            )));
        }
        for s in shapes {
            self.shape.ensure_eq(&s)?;
        }
        Ok(())
    }
}

fn residual_energy<T: Scalar>(y: &[ImageField<T>], ax: &[ComplexField<T>]) -> T {
    let half = T::lit(0.5);
    y.iter()
        .zip(ax)
        .map(|(yl, al)| {
            yl.data()
                .iter()
                .zip(al.data())
                .map(|(&m, z)| {
                    let d = m - z.norm();
                    d * d
                })
                .sum::<T>()
        })
        .sum::<T>()
        * half
}

/// Requested input SNR: a finite level in dB, or no noise at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputSnr {
    Db(f64),
    Noiseless(NoiselessTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiselessTag {
    Noiseless,
}

impl InputSnr {
    pub const NOISELESS: InputSnr = InputSnr::Noiseless(NoiselessTag::Noiseless);

    pub fn db(self) -> Option<f64> {
        match self {
            InputSnr::Db(v) => Some(v),
            InputSnr::Noiseless(_) => None,
        }
    }

    pub fn label(self) -> String {
        match self {
            InputSnr::Db(v) => format!("{v}"),
            InputSnr::Noiseless(_) => "noiseless".into(),
        }
    }
}

/// Measured amplitudes, one block per mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet<T> {
    pub y: Vec<ImageField<T>>,
    pub input_snr: InputSnr,
    /// Seed of the stream the noise was drawn from; `None` when noiseless.
    pub noise_seed: Option<u64>,
}

impl<T: Scalar> MeasurementSet<T> {
    pub fn noiseless(clean: Vec<ImageField<T>>) -> Self {
        Self {
            y: clean,
            input_snr: InputSnr::NOISELESS,
            noise_seed: None,
        }
    }

    pub fn blocks(&self) -> &[ImageField<T>] {
        &self.y
    }

    /// Replaces negative entries with zero.
    pub fn clip_negative(mut self) -> Self {
        for b in &mut self.y {
            for v in b.data_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        self
    }

    /// `20 log10(‖clean‖ / ‖y − clean‖)`; infinite when `y == clean`.
    pub fn realized_snr_db(&self, clean: &[ImageField<T>]) -> f64 {
        let (mut signal, mut noise) = (0.0, 0.0);
        for (yl, cl) in self.y.iter().zip(clean) {
            for (&a, &b) in yl.data().iter().zip(cl.data()) {
                signal += b.as_f64() * b.as_f64();
                noise += (a - b).as_f64().powi(2);
            }
        }
        if noise == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (signal / noise).log10()
        }
    }
}

/// Adds AWGN with `σ = ‖clean‖ / (√m · 10^{snr/20})`.
pub fn add_noise_at_snr<T: Scalar>(
    clean: &[ImageField<T>],
    snr: InputSnr,
    rng: &mut SeededRng,
) -> Result<MeasurementSet<T>> {
    let Some(db) = snr.db() else {
        return Ok(MeasurementSet::noiseless(clean.to_vec()));
    };
    if !db.is_finite() {
        return Err(Error::Parameter(format!("input SNR {db} dB is not finite")));
    }
    let m: usize = clean.iter().map(ImageField::len).sum();
    let energy: f64 = clean.iter().map(|b| b.norm_sq().as_f64()).sum();
    if m == 0 || energy == 0.0 {
        return Err(Error::Parameter(
            "cannot calibrate noise against an all-zero signal".into(),
        ));
    }
    let sigma = energy.sqrt() / ((m as f64).sqrt() * 10f64.powf(db / 20.0));
    let y = clean
        .iter()
        .map(|b| b.map(|v| v + T::lit(sigma * rng.standard_normal())))
        .collect();
    Ok(MeasurementSet {
        y,
        input_snr: snr,
        noise_seed: Some(rng.seed()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample_standard_gaussian;

    fn two_point() -> CdpOperator<f64> {
        CdpOperator::new(Shape::new(1, 2, 1), vec![PhaseMask::identity(1, 2)]).unwrap()
    }

    fn field(v: &[f64]) -> ImageField<f64> {
        ImageField::from_vec(Shape::new(1, v.len(), 1), v.to_vec()).unwrap()
    }

    #[test]
    fn masks_are_unimodular_and_seeded() {
        let shape = Shape::new(16, 16, 1);
        let a: CdpOperator<f64> = make_cdp_operator(shape, 3, &mut SeededRng::new(9)).unwrap();
        let b: CdpOperator<f64> = make_cdp_operator(shape, 3, &mut SeededRng::new(9)).unwrap();
        assert_eq!(a, b);
        for m in a.masks() {
            for z in m.entries() {
                assert!((z.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_phase_mean_vanishes() {
        // |mean| of N unit phasors has std 1/√N = 0.001 at N = 1e6.
        let mut rng = SeededRng::new(77);
        let m = PhaseMask::<f64>::random(1000, 1000, &mut rng);
        let mean = m.entries().iter().sum::<Complex<f64>>() / 1e6;
        assert!(mean.norm() <= 0.004, "{mean}");
    }

    #[test]
    fn rejects_bad_construction() {
        let mut rng = SeededRng::new(0);
        assert!(make_cdp_operator::<f64>(Shape::new(6, 8, 1), 1, &mut rng).is_err());
        assert!(make_cdp_operator::<f64>(Shape::new(8, 8, 1), 0, &mut rng).is_err());
        assert!(PhaseMask::from_entries(1, 1, vec![Complex::new(0.5f64, 0.0)]).is_err());
        assert!(
            CdpOperator::new(Shape::new(2, 2, 1), vec![PhaseMask::<f64>::identity(4, 4)]).is_err()
        );
    }

    #[test]
    fn zero_input_gives_zero_blocks() {
        let op: CdpOperator<f64> =
            make_cdp_operator(Shape::new(4, 4, 2), 2, &mut SeededRng::new(1)).unwrap();
        let x = ImageField::zeros(op.shape());
        for b in op.apply(&x).unwrap() {
            assert_eq!(b.norm_sq(), 0.0);
        }
        for b in op.amplitudes(&x).unwrap() {
            assert!(b.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn identity_mask_constant_to_dc() {
        let op =
            CdpOperator::new(Shape::new(2, 2, 1), vec![PhaseMask::<f64>::identity(2, 2)]).unwrap();
        let x = ImageField::filled(op.shape(), 0.7);
        let b = &op.apply(&x).unwrap()[0];
        assert!((b.data()[0].re - 1.4).abs() < 1e-15);
        assert!(b.data()[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn two_point_amplitudes_and_fidelity() {
        let op = two_point();
        let x = field(&[3.0, 1.0]);
        let amp = &op.amplitudes(&x).unwrap()[0];
        let s2 = 2f64.sqrt();
        assert!((amp.data()[0] - 2.0 * s2).abs() < 1e-14);
        assert!((amp.data()[1] - s2).abs() < 1e-14);

        let y = vec![field(&[2.0, 2.0])];
        let g = op.fidelity(&y, &x).unwrap();
        let want = 0.5 * ((2.0 - 2.0 * s2).powi(2) + (2.0 - s2).powi(2));
        assert!((g - want).abs() < 1e-14);
        assert!((g - 0.51472).abs() < 1e-5);

        // Re[F^H (Fx − y)] = (3 − 2√2, 1) when both entries of Fx are positive.
        let sg = op.fidelity_subgradient(&y, &x).unwrap();
        assert!((sg.data()[0] - (3.0 - 2.0 * s2)).abs() < 1e-14);
        assert!((sg.data()[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_residual_at_consistent_measurements() {
        let mut rng = SeededRng::new(4);
        let op: CdpOperator<f64> = make_cdp_operator(Shape::new(8, 8, 3), 2, &mut rng).unwrap();
        let x = sample_standard_gaussian(&mut rng, op.shape());
        let y = op.amplitudes(&x).unwrap();
        assert_eq!(op.fidelity(&y, &x).unwrap(), 0.0);
        assert!(op.fidelity_subgradient(&y, &x).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn doubled_measurements_give_minus_l_x() {
        let mut rng = SeededRng::new(8);
        let op: CdpOperator<f64> = make_cdp_operator(Shape::new(8, 4, 1), 3, &mut rng).unwrap();
        let x = sample_standard_gaussian(&mut rng, op.shape());
        let y: Vec<_> = op
            .amplitudes(&x)
            .unwrap()
            .iter()
            .map(|b| b.scale(2.0))
            .collect();
        let sg = op.fidelity_subgradient(&y, &x).unwrap();
        let want = x.scale(-3.0);
        assert!(sg.sub(&want).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn subgradient_sign_zero_branch() {
        // x = (1.1, 1.1): second DFT bin is exactly zero, so sgn(0) = 0 drops it.
        let op = two_point();
        let y = vec![field(&[2.0, 2.0])];
        let sg = op.fidelity_subgradient(&y, &field(&[1.1, 1.1])).unwrap();
        let want = 1.1 - 2f64.sqrt();
        for v in sg.data() {
            assert!((v - want).abs() < 1e-14);
        }
    }

    #[test]
    fn block_count_and_shape_checked() {
        let op: CdpOperator<f64> =
            make_cdp_operator(Shape::new(4, 4, 1), 2, &mut SeededRng::new(0)).unwrap();
        let x = ImageField::zeros(op.shape());
        let one = vec![ImageField::zeros(op.shape())];
        assert!(op.fidelity(&one, &x).is_err());
        let wrong = vec![ImageField::zeros(Shape::new(4, 4, 2)); 2];
        assert!(op.fidelity_subgradient(&wrong, &x).is_err());
        assert!(op.apply(&ImageField::zeros(Shape::new(4, 4, 2))).is_err());
    }

    #[test]
    fn noise_calibration() {
        let mut rng = SeededRng::new(12);
        let shape = Shape::new(64, 64, 1);
        let clean = ImageField::from_fn(shape, |i| ((i as f64) * 0.01).sin().abs());
        let scaled = vec![clean.scale(10.0 / clean.norm())];
        let ms = add_noise_at_snr(&scaled, InputSnr::Db(20.0), &mut rng).unwrap();
        let snr = ms.realized_snr_db(&scaled);
        assert!((19.0..=21.0).contains(&snr), "{snr}");
        let e = ms.y[0].sub(&scaled[0]).unwrap().norm();
        assert!((e - 1.0).abs() < 0.05, "{e}");

        let again = add_noise_at_snr(&scaled, InputSnr::Db(20.0), &mut SeededRng::new(12)).unwrap();
        assert_eq!(ms, again);

        let quiet = add_noise_at_snr(&scaled, InputSnr::NOISELESS, &mut rng).unwrap();
        assert_eq!(quiet.y, scaled);
        assert_eq!(quiet.realized_snr_db(&scaled), f64::INFINITY);

        let zero = vec![ImageField::<f64>::zeros(shape)];
        assert!(add_noise_at_snr(&zero, InputSnr::Db(20.0), &mut rng).is_err());
        assert!(add_noise_at_snr(&zero, InputSnr::NOISELESS, &mut rng).is_ok());
    }

    #[test]
    fn clipping_removes_negatives() {
        let ms = MeasurementSet::noiseless(vec![field(&[-0.5, 0.25])]).clip_negative();
        assert_eq!(ms.y[0].data(), &[0.0, 0.25]);
    }

    #[test]
    fn snr_serde_forms() {
        let v: Vec<InputSnr> = serde_json::from_str(r#"[15, 20.5, "noiseless"]"#).unwrap();
        assert_eq!(
            v,
            vec![InputSnr::Db(15.0), InputSnr::Db(20.5), InputSnr::NOISELESS]
        );
        assert_eq!(
            serde_json::to_string(&InputSnr::NOISELESS).unwrap(),
            r#""noiseless""#
        );
    }
}

//! Randomized invariants of the transforms, the fidelity and the schedule.

use num_complex::Complex;
use proptest::prelude::*;

use dolph::cdp::{make_cdp_operator, CdpOperator};
use dolph::field::{fft2_unitary, ifft2_unitary, ComplexField, ImageField, SeededRng, Shape};
use dolph::samplers::recon_snr;
use dolph::schedule::{forward_marginal_sample, make_linear_schedule};

fn shape() -> impl Strategy<Value = Shape> {
    (0u32..4, 0u32..4, 1usize..3).prop_map(|(h, w, c)| Shape::new(1 << h, 1 << w, c))
}

fn real_field(shape: Shape) -> impl Strategy<Value = ImageField<f64>> {
    prop::collection::vec(-2.0f64..2.0, shape.len())
        .prop_map(move |v| ImageField::from_vec(shape, v).unwrap())
}

fn complex_field(shape: Shape) -> impl Strategy<Value = ComplexField<f64>> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), shape.len()).prop_map(move |v| {
        ComplexField::from_vec(
            shape,
            v.into_iter().map(|(a, b)| Complex::new(a, b)).collect(),
        )
        .unwrap()
    })
}

fn shape_and_two_fields(
) -> impl Strategy<Value = (ImageField<f64>, ComplexField<f64>, ComplexField<f64>)> {
    shape().prop_flat_map(|s| (real_field(s), complex_field(s), complex_field(s)))
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-10 * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_is_unitary_and_invertible((_, u, v) in shape_and_two_fields()) {
        let fu = fft2_unitary(&u).unwrap();
        let fv = fft2_unitary(&v).unwrap();
        prop_assert!(close(fu.norm_sq(), u.norm_sq(), u.norm_sq()));
        let (a, b) = (u.inner(&v).unwrap(), fu.inner(&fv).unwrap());
        prop_assert!((a - b).norm() <= 1e-10 * (u.norm() * v.norm()).max(1.0));
        let back = ifft2_unitary(&fu).unwrap();
        for (p, q) in back.data().iter().zip(u.data()) {
            prop_assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn fft_is_linear((_, u, v) in shape_and_two_fields(), s in -3.0f64..3.0) {
        let mix = ComplexField::from_vec(
            u.shape(),
            u.data().iter().zip(v.data()).map(|(a, b)| a * s + b).collect(),
        ).unwrap();
        let lhs = fft2_unitary(&mix).unwrap();
        let (fu, fv) = (fft2_unitary(&u).unwrap(), fft2_unitary(&v).unwrap());
        for ((l, a), b) in lhs.data().iter().zip(fu.data()).zip(fv.data()) {
            prop_assert!((l - (a * s + b)).norm() < 1e-11);
        }
    }

    #[test]
    fn operator_adjoint_and_frame_bound(
        (x, _, _) in shape_and_two_fields(),
        masks in 1usize..4,
        seed in any::<u64>(),
    ) {
        let op: CdpOperator<f64> =
            make_cdp_operator(x.shape(), masks, &mut SeededRng::new(seed)).unwrap();
        let mut rng = SeededRng::new(seed ^ 1);
        let blocks: Vec<_> = (0..masks)
            .map(|_| {
                let d = (0..x.len())
                    .map(|_| Complex::new(rng.standard_normal(), rng.standard_normal()))
                    .collect();
                ComplexField::from_vec(x.shape(), d).unwrap()
            })
            .collect();
        let ax = op.apply(&x).unwrap();
        let lhs: Complex<f64> = ax.iter().zip(&blocks).map(|(a, b)| a.inner(b).unwrap()).sum();
        let rhs = x.to_complex().inner(&op.adjoint(&blocks).unwrap()).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-9 * (1.0 + lhs.norm()));
        let energy: f64 = ax.iter().map(ComplexField::norm_sq).sum();
        prop_assert!(close(energy, masks as f64 * x.norm_sq(), energy));
    }

    #[test]
    fn fidelity_is_even_and_subgradient_odd(
        (x, _, _) in shape_and_two_fields(),
        masks in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut rng = SeededRng::new(seed);
        let op: CdpOperator<f64> = make_cdp_operator(x.shape(), masks, &mut rng).unwrap();
        let y: Vec<_> = op
            .amplitudes(&ImageField::from_fn(x.shape(), |_| rng.standard_normal()))
            .unwrap();
        let neg = x.scale(-1.0);
        let (g, d) = op.fidelity_with_subgradient(&y, &x).unwrap();
        let (gn, dn) = op.fidelity_with_subgradient(&y, &neg).unwrap();
        prop_assert!(close(g, gn, g));
        for (a, b) in d.data().iter().zip(dn.data()) {
            prop_assert!((a + b).abs() < 1e-9 * (1.0 + a.abs()));
        }
        prop_assert!(g >= 0.0);
    }

    #[test]
    fn forward_marginal_is_affine_in_its_inputs(
        (x, _, _) in shape_and_two_fields(),
        t in 1usize..=100,
        s in -2.0f64..2.0,
    ) {
        let sched = make_linear_schedule::<f64>(100, 1e-4, 0.02).unwrap();
        let eps = x.map(|v| 0.5 - v);
        let zero = ImageField::zeros(x.shape());
        let full = forward_marginal_sample(&x, t, &sched, &eps).unwrap();
        let signal = forward_marginal_sample(&x, t, &sched, &zero).unwrap();
        let noise = forward_marginal_sample(&zero, t, &sched, &eps).unwrap();
        let scaled = forward_marginal_sample(&x.scale(s), t, &sched, &eps.scale(s)).unwrap();
        for i in 0..x.len() {
            let sum = signal.data()[i] + noise.data()[i];
            prop_assert!((full.data()[i] - sum).abs() < 1e-12);
            prop_assert!((scaled.data()[i] - s * full.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn recon_snr_ignores_global_sign(
        (x, _, _) in shape_and_two_fields(),
        noise in prop::collection::vec(-0.1f64..0.1, 64),
    ) {
        prop_assume!(x.norm() > 1e-3);
        let est = ImageField::from_fn(x.shape(), |i| x.data()[i] + noise[i % noise.len()]);
        let a = recon_snr(&x, &est).unwrap();
        let b = recon_snr(&x, &est.scale(-1.0)).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(recon_snr(&x, &x.scale(-1.0)).unwrap(), 300.0);
    }
}

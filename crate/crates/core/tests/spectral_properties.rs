use proptest::prelude::*;
use salab::spectral::{band_split, downsample_lowpass, upsample_spectral};
use salab::{fft2, ifft2, GridField2D};

fn field(rows: usize, cols: usize) -> impl Strategy<Value = GridField2D> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |v| GridField2D::new(rows, cols, v).unwrap())
}

fn sized_field() -> impl Strategy<Value = GridField2D> {
    (2usize..6, 2usize..6).prop_flat_map(|(a, b)| field(2 * a, 2 * b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval(u in sized_field()) {
        let s = fft2(&u).unwrap();
        let lhs = u.mean_square();
        prop_assert!((lhs - s.mean_square()).abs() <= 1e-12 * (1.0 + lhs));
    }

    #[test]
    fn inverse_recovers_field(u in sized_field()) {
        let back = ifft2(&fft2(&u).unwrap()).unwrap();
        for (a, b) in u.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn real_fields_have_hermitian_spectra(u in sized_field()) {
        prop_assert!(fft2(&u).unwrap().hermitian_defect() <= 1e-12);
    }

    #[test]
    fn upsample_then_downsample_is_identity(u in field(8, 8), factor in 1usize..4) {
        let up = upsample_spectral(&u, factor).unwrap();
        let back = downsample_lowpass(&up, factor).unwrap();
        // The coarse Nyquist row and column cannot survive a strict low-pass crop.
        let expected = downsample_lowpass(&upsample_spectral(&u, 2).unwrap(), 2).unwrap();
        let target = if factor == 1 { &u } else { &expected };
        for (a, b) in back.data().iter().zip(target.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn downsampling_is_a_projection(u in field(16, 16)) {
        let once = downsample_lowpass(&u, 2).unwrap();
        let again = downsample_lowpass(&upsample_spectral(&once, 2).unwrap(), 2).unwrap();
        for (a, b) in once.data().iter().zip(again.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn upsampling_preserves_values_on_the_coarse_lattice(u in field(8, 8)) {
        let smooth = downsample_lowpass(&upsample_spectral(&u, 2).unwrap(), 2).unwrap();
        let up = upsample_spectral(&smooth, 4).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                prop_assert!((up.get(4 * i, 4 * j) - smooth.get(i, j)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn band_split_saturates_past_the_corner(p in field(8, 12), t in field(8, 12)) {
        let corner = (4.0f64 * 4.0 + 6.0 * 6.0).sqrt();
        let (low, wide) = band_split(&p, &t, corner + 1e-9).unwrap();
        prop_assert!((low - wide).abs() <= 1e-12 * (1.0 + wide));
        let rmse = p.rmse(&t).unwrap();
        prop_assert!((wide - rmse).abs() <= 1e-12 * (1.0 + rmse));
    }

    #[test]
    fn band_split_low_never_exceeds_wide(p in field(8, 8), t in field(8, 8), cutoff in 0.5f64..6.0) {
        let (low, wide) = band_split(&p, &t, cutoff).unwrap();
        prop_assert!(low <= wide + 1e-15);
    }
}

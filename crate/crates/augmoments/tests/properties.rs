//! Randomized invariants over the operator builder and the file formats.

use proptest::prelude::*;

use augmoments::dataio::{read_pgm, read_tensor, write_pgm, write_tensor};
use augmoments::grid::{Grid, Image};
use augmoments::transform::{apply_operator, build_operator, Theta};
use augmoments::TransformKind;

fn kind_and_theta() -> impl Strategy<Value = (TransformKind, Theta<f64>)> {
    prop_oneof![
        (-0.8f64..0.8, -0.8f64..0.8)
            .prop_map(|(a, b)| (TransformKind::Translation, Theta::Pair(a, b))),
        (-1.2f64..1.2).prop_map(|a| (TransformKind::Rotation, Theta::Scalar(a))),
        (-1.0f64..1.0).prop_map(|a| (TransformKind::ShearHorizontal, Theta::Scalar(a))),
        (-1.0f64..1.0).prop_map(|a| (TransformKind::ShearVertical, Theta::Scalar(a))),
        (0.3f64..2.5).prop_map(|a| (TransformKind::Zoom, Theta::Scalar(a))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Rows of any operator are convex-combination-like: at most four
    /// taps, nonnegative weights, row sums within [0, 1].
    #[test]
    fn operator_rows_are_substochastic(
        (kind, theta) in kind_and_theta(),
        h in 2usize..9,
        w in 2usize..9,
    ) {
        let grid = Grid::new(h, w).unwrap();
        let op = build_operator(kind, &theta, grid).unwrap();
        for r in 0..grid.dim() {
            let row = &op.rows()[r];
            prop_assert!(row.len() <= 4);
            let mut sum = 0.0;
            for &(c, wt) in row {
                prop_assert!(c < grid.dim());
                prop_assert!(wt >= 0.0);
                sum += wt;
            }
            prop_assert!(sum <= 1.0 + 1e-12, "row {r} sums to {sum}");
        }
    }

    /// Applying an operator never increases the max intensity of a
    /// nonnegative image (substochastic rows average, not amplify).
    #[test]
    fn apply_respects_max_bound(
        (kind, theta) in kind_and_theta(),
        values in proptest::collection::vec(0.0f64..1.0, 36),
    ) {
        let grid = Grid::new(6, 6).unwrap();
        let img = Image::new(grid, values).unwrap();
        let out = apply_operator(&build_operator(kind, &theta, grid).unwrap(), &img).unwrap();
        let max_in = img.data().iter().cloned().fold(0.0, f64::max);
        let max_out = out.data().iter().cloned().fold(0.0, f64::max);
        prop_assert!(max_out <= max_in + 1e-12);
        prop_assert!(out.data().iter().all(|&v| v >= -1e-12));
    }

    /// AMTF round trips are bit-exact for arbitrary shapes and payloads.
    #[test]
    fn amtf_round_trip_bit_exact(
        rows in 1usize..12,
        cols in 1usize..12,
        scale in -6i32..6,
        seed in any::<u32>(),
    ) {
        let data: Vec<f64> = (0..rows * cols)
            .map(|k| {
                let x = (k as u64 + 1)
                    .wrapping_mul(0x9E3779B97F4A7C15)
                    .wrapping_add(seed as u64);
                ((x >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 10f64.powi(scale)
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.amtf");
        write_tensor(&path, &[rows as u64, cols as u64], &data).unwrap();
        let (dims, back) = read_tensor(&path).unwrap();
        prop_assert_eq!(dims, vec![rows as u64, cols as u64]);
        prop_assert!(data.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    /// PGM round trips stay within one quantization step per pixel.
    #[test]
    fn pgm_round_trip_within_quantization(
        h in 1usize..10,
        w in 1usize..10,
        seed in any::<u32>(),
    ) {
        let grid = Grid::new(h, w).unwrap();
        let data: Vec<f64> = (0..grid.dim())
            .map(|k| {
                let x = (k as u64 + 1)
                    .wrapping_mul(0xD1342543DE82EF95)
                    .wrapping_add(seed as u64);
                (x >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        let img = Image::new(grid, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        write_pgm(&path, &img).unwrap();
        let back = read_pgm::<f64>(&path).unwrap();
        prop_assert!(img.max_abs_diff(&back) <= 1.0 / 255.0);
    }
}

use proptest::prelude::*;
use quatnet::compress::{chunk_stats, compress, mean_downsample, read_compressed_bin, real_expand, write_compressed_bin, RealSeries};
use quatnet::Quaternion;

fn series() -> impl Strategy<Value = RealSeries<f64>> {
    (1..4usize, 1..40usize).prop_flat_map(|(m, n)| {
        prop::collection::vec(prop::collection::vec(-100.0..100.0f64, n), m)
            .prop_map(|rows| RealSeries::from_rows(rows).unwrap())
    })
}

/// Sample standard deviation computed the textbook way.
fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[test]
fn six_sample_chunk_uses_the_sample_std() {
    let q = chunk_stats(&[3.0, 5.0, -1.0, 7.0, 4.0, 9.0]);
    let want = [-1.0, 9.0, 4.5, 3.45f64];
    for (g, w) in q.to_array().iter().zip(want) {
        assert!((g - w).abs() < 5e-3, "{q}");
    }
}

#[test]
fn rejects_zero_chunk_length() {
    let x = RealSeries::from_rows(vec![vec![1.0, 2.0]]).unwrap();
    assert!(compress(&x, 0).is_err());
    assert!(mean_downsample(&x, 0).is_err());
}

#[test]
fn float32_series_compress_too() {
    let x = RealSeries::<f32>::from_rows(vec![vec![1.0, 3.0, 2.0, 2.0]]).unwrap();
    let c = compress(&x, 4).unwrap();
    assert_eq!(c.quats.data()[0].q0, 1.0);
    assert_eq!(c.quats.data()[0].q1, 3.0);
    assert_eq!(c.quats.data()[0].q2, 2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn stats_are_ordered(x in series(), l in 1..12usize) {
        let c = compress(&x, l).unwrap();
        for q in c.quats.data() {
            prop_assert!(q.q0 <= q.q2 && q.q2 <= q.q1, "{}", q);
            prop_assert!(q.q3 >= 0.0);
        }
    }

    #[test]
    fn stats_match_a_direct_computation(x in series(), l in 1..12usize) {
        let c = compress(&x, l).unwrap();
        let k = c.chunks();
        for ch in 0..x.channels() {
            for (t, chunk) in x.channel(ch).chunks(l).enumerate() {
                let q = c.quats.data()[ch * k + t];
                let lo = chunk.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
                prop_assert_eq!(q.q0, lo);
                prop_assert_eq!(q.q1, hi);
                prop_assert!((q.q2 - mean).abs() <= 1e-12 * hi.abs().max(lo.abs()).max(1.0));
                prop_assert!((q.q3 - sample_std(chunk)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn constant_chunks_have_no_spread(v in -50.0..50.0f64, n in 1..30usize, l in 1..10usize) {
        let x = RealSeries::from_rows(vec![vec![v; n]]).unwrap();
        for q in compress(&x, l).unwrap().quats.data() {
            prop_assert_eq!(*q, Quaternion::new(v, v, v, 0.0));
        }
    }

    #[test]
    fn chunk_count_and_shapes(x in series(), l in 1..12usize) {
        let (m, n) = (x.channels(), x.samples());
        let c = compress(&x, l).unwrap();
        let k = n.div_ceil(l);
        prop_assert_eq!(c.quats.shape(), &[m, k]);
        prop_assert_eq!(c.last_chunk_len, n - (k - 1) * l);
        let (e, d) = (real_expand(&c), mean_downsample(&x, l).unwrap());
        prop_assert_eq!(e.values.shape(), &[4 * m, k]);
        prop_assert_eq!(d.values.shape(), &[m, k]);
    }

    #[test]
    fn expanded_mean_rows_equal_the_downsample(x in series(), l in 1..12usize) {
        let e = real_expand(&compress(&x, l).unwrap());
        let d = mean_downsample(&x, l).unwrap();
        for ch in 0..x.channels() {
            prop_assert_eq!(e.channel(4 * ch + 2), d.channel(ch));
        }
    }

    #[test]
    fn binary_format_round_trips(x in series(), l in 1..12usize) {
        let c = compress(&x, l).unwrap();
        let mut buf = Vec::new();
        write_compressed_bin(&c, &mut buf).unwrap();
        let back = read_compressed_bin(buf.as_slice()).unwrap();
        prop_assert_eq!(back.quats, c.quats);
        prop_assert_eq!(back.chunk_len, c.chunk_len);
    }
}

#[test]
fn chunk_length_eight_halves_the_real_sequence() {
    // 4 real rows per channel over n/8 steps: half the real values of the raw series.
    let x = RealSeries::from_rows(vec![(0..320).map(f64::from).collect(); 8]).unwrap();
    let c = compress(&x, 8).unwrap();
    assert_eq!(c.chunks(), 40);
    assert_eq!(real_expand(&c).values.len() * 2, x.values.len());
}

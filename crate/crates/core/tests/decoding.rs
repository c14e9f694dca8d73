use nalgebra::{DMatrix, DVector};
use rand::Rng;

use neurocomm_core::hypernet::{argmax, modulate_weights, rate_decode, rate_decode_prefixes, softmax, ScalingVectors};
use neurocomm_core::rng::{normal, stream};
use neurocomm_core::snn::{self, init_layers, Mode, NeuronConfig};

fn random_base<R: Rng>(rng: &mut R) -> Vec<DMatrix<f64>> {
    let sizes = [rng.random_range(1..20), rng.random_range(1..20), rng.random_range(1..6)];
    init_layers(&sizes, 3.0, rng)
}

#[test]
fn unit_scaling_reproduces_plain_decoder_bit_exactly() {
    let mut rng = stream(31, &[]);
    let cfg = NeuronConfig::default();
    for _ in 0..50 {
        let base = random_base(&mut rng);
        let input = DMatrix::from_fn(base[0].ncols(), 25, |_, _| f64::from(u8::from(rng.random_bool(0.3))));
        let scaled = modulate_weights(&base, &ScalingVectors::ones(&base)).unwrap();
        assert_eq!(scaled, base);
        for mode in [Mode::Hard, Mode::Relaxed] {
            let (plain, _) = snn::forward(&base, &input, &cfg, mode).unwrap();
            let (modulated, _) = snn::forward(&scaled, &input, &cfg, mode).unwrap();
            assert_eq!(plain, modulated);
        }
    }
}

#[test]
fn column_scaling_matches_dense_diagonal_product() {
    let mut rng = stream(32, &[]);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let base = random_base(&mut rng);
        let s = ScalingVectors(base.iter().map(|w| DVector::from_fn(w.ncols(), |_, _| normal(&mut rng))).collect());
        let fast = modulate_weights(&base, &s).unwrap();
        for ((w, v), f) in base.iter().zip(&s.0).zip(&fast) {
            let dense = w * DMatrix::from_diagonal(v);
            worst = worst.max((f - dense).amax());
        }
    }
    assert!(worst <= 1e-14, "max abs error {worst}");
}

#[test]
fn rate_decoding_normalizes_and_picks_the_busiest_class() {
    let mut rng = stream(33, &[]);
    for _ in 0..1000 {
        let (classes, steps) = (rng.random_range(1..12), rng.random_range(1..60));
        let p = rng.random_range(0.0..1.0);
        let v = DMatrix::from_fn(classes, steps, |_, _| f64::from(u8::from(rng.random_bool(p))));
        let probs = rate_decode(&v).unwrap();
        assert!((probs.sum() - 1.0).abs() <= 1e-12);
        let counts: Vec<usize> = (0..classes).map(|c| v.row(c).iter().filter(|&&x| x > 0.0).count()).collect();
        let busiest = (0..classes).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
        assert_eq!(argmax(probs.as_slice()), busiest);

        let prefixes = rate_decode_prefixes(&v);
        assert_eq!(prefixes.column(steps - 1), probs.column(0));
        for col in prefixes.column_iter() {
            assert!((col.sum() - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn softmax_survives_large_inputs() {
    let p = softmax(&DVector::from_vec(vec![1000.0, 999.0, -1000.0]));
    assert!(p.iter().all(|v| v.is_finite()));
    assert!((p.sum() - 1.0).abs() <= 1e-12);
    assert!(p[0] > p[1] && p[1] > p[2]);
}

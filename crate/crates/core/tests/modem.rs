use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

use neurocomm_core::modem::{lth_expand_input, rx_frame, rx_unframe, th_modulate};
use neurocomm_core::rng::stream;
use neurocomm_core::SpikeRaster;

fn random_raster<R: Rng>(rng: &mut R, channels: usize, steps: usize, p: f64) -> SpikeRaster {
    let mut r = SpikeRaster::zeros(channels, steps);
    for l in 0..steps {
        for d in 0..channels {
            if rng.random_bool(p) {
                r.set(d, l, true);
            }
        }
    }
    r
}

#[test]
fn time_hopping_keeps_one_pulse_per_spike_in_its_block() {
    let mut rng = stream(21, &[]);
    for _ in 0..1000 {
        let (rows, steps, lb) = (rng.random_range(1..4), rng.random_range(1..30), rng.random_range(1..9));
        let p = rng.random_range(0.0..1.0);
        let x = random_raster(&mut rng, rows, steps, p);
        let s = th_modulate(&x, lb, &mut rng).unwrap();
        assert_eq!(s.shape(), (rows, steps * lb));
        for m in 0..rows {
            for l in 0..steps {
                let block = s.view((m, l * lb), (1, lb));
                let pulses = block.iter().filter(|&&v| v != 0.0).count();
                assert_eq!(pulses, usize::from(x.get(m, l)));
                assert!(block.iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
        assert_eq!(s.iter().filter(|&&v| v != 0.0).count(), x.count());
    }
}

#[test]
fn lth_input_spikes_only_on_block_starts() {
    let mut rng = stream(22, &[]);
    let u = random_raster(&mut rng, 6, 12, 0.4);
    let x = lth_expand_input(&u, 3).unwrap();
    for d in 0..6 {
        for i in 0..36 {
            assert_eq!(x.get(d, i), i % 3 == 0 && u.get(d, i / 3));
        }
    }
}

#[test]
fn rejects_zero_expansion() {
    let u = SpikeRaster::zeros(2, 2);
    assert!(th_modulate(&u, 0, &mut stream(0, &[])).is_err());
    assert!(lth_expand_input(&u, 0).is_err());
    assert!(rx_frame(&DMatrix::from_element(1, 4, Complex64::new(0.0, 0.0)), 3).is_err());
}

proptest! {
    #[test]
    fn rx_framing_is_a_bijection(nr in 1usize..4, lb in 1usize..6, steps in 1usize..10, seed in any::<u64>()) {
        let mut rng = stream(seed, &[]);
        let y = DMatrix::from_fn(nr, steps * lb, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let framed = rx_frame(&y, lb).unwrap();
        prop_assert_eq!(framed.shape(), (2 * lb * nr, steps));
        prop_assert_eq!(&rx_unframe(&framed, lb, nr).unwrap(), &y);
        // every entry of the frame is used exactly once
        let mut seen: Vec<f64> = framed.iter().copied().collect();
        let mut parts: Vec<f64> = y.iter().flat_map(|c| [c.re, c.im]).collect();
        seen.sort_by(f64::total_cmp);
        parts.sort_by(f64::total_cmp);
        prop_assert_eq!(seen, parts);
    }
}

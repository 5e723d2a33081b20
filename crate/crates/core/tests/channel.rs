use proptest::prelude::*;
use rand::Rng;
use statrs::function::erf::erfc;

use isc_core::channel::{
    dequantize, noise_sigma, per_sweep, quantize, quantize_vector, transmit, write_sweep_csv, ChannelConfig,
    ContextEntity, Receiver, RecoveryMode, FRAC_BITS,
};
use isc_core::embedding::{train_transe, TransEConfig};
use isc_core::rng::seeded;
use isc_core::synth::{generate, SynthConfig};
use isc_core::{EmbeddingTable64, PolicyModel64};

proptest! {
    #[test]
    fn quantization_error_is_half_an_lsb(v in prop::collection::vec(-4.0f64..4.0, 1..20)) {
        let back = dequantize(&quantize_vector(&v).unwrap()).unwrap();
        for (a, b) in v.iter().zip(back) {
            prop_assert!((a - b).abs() <= 0.5f64.powi(FRAC_BITS as i32 + 1));
        }
    }
}

#[test]
fn bit_error_rate_matches_bpsk_theory() {
    let mut rng = seeded(8);
    let bits: Vec<bool> = (0..400_000).map(|_| rng.random()).collect();
    for snr in [1.0, 4.0] {
        let rx = transmit(&bits, snr, 3);
        let ber = rx.iter().zip(&bits).filter(|(a, b)| a != b).count() as f64 / bits.len() as f64;
        let p = 0.5 * erfc(10f64.powf(snr / 10.0).sqrt());
        let sigma = (p * (1.0 - p) / bits.len() as f64).sqrt();
        assert!((ber - p).abs() < 4.0 * sigma, "snr {snr}: {ber} vs {p}");
    }
    assert!((noise_sigma(0.0) - 0.5f64.sqrt()).abs() < 1e-15);
}

fn setup() -> (isc_core::KnowledgeBase, EmbeddingTable64, PolicyModel64) {
    let kb = generate(&SynthConfig::new(60, 4, 3.0, 5)).unwrap();
    let tab = train_transe(&kb, &TransEConfig { dim: 10, epochs: 30, seed: 1, ..Default::default() }).unwrap();
    let m = PolicyModel64::new(&kb, 10, 8, 2, &mut seeded(1)).unwrap();
    (kb, tab, m)
}

#[test]
fn noiseless_packets_decode_exactly_in_every_mode() {
    let (kb, tab, m) = setup();
    let rx = Receiver::new(&kb, &tab, &m);
    for e in kb.entities() {
        let bits = transmit(&quantize(&tab, e).unwrap().bits, f64::INFINITY, 0);
        for mode in RecoveryMode::ALL {
            // context that agrees with any candidate must not displace an exact match
            let ctx = [ContextEntity { offset: -1, entity: e }];
            let got = rx.recover(&bits, mode, if mode == RecoveryMode::Reasoning { &ctx } else { &[] }).unwrap();
            assert_eq!(got, Some(e), "{mode}");
        }
    }
}

#[test]
fn sweep_rows_cover_the_grid_and_rerun_identically() {
    let (kb, tab, m) = setup();
    let cfg = ChannelConfig { packets_per_point: 40, seed: 2, ..Default::default() };
    let rows = per_sweep(&cfg, &kb, &tab, &m).unwrap();
    assert_eq!(rows.len(), cfg.snr_db.len() * 3);
    // whole three-packet messages
    assert!(rows.iter().all(|r| r.trials == 42 && r.per == r.errors as f64 / 42.0));
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_sweep_csv(&rows, &mut a).unwrap();
    write_sweep_csv(&per_sweep(&cfg, &kb, &tab, &m).unwrap(), &mut b).unwrap();
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().starts_with("snr_db,mode,trials,errors,per\n"));
}

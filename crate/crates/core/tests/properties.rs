use airbarrier::airflow::{JetModel, PerceptionModel};
use airbarrier::geometry::{self, CameraIntrinsics, MarkerSpec};
use airbarrier::safety::SafetyState;
use airbarrier::stats::{paired_t, shapiro_wilk, SampleVector};
use airbarrier::wire::{self, parse_journal, CommandFrame, JournalContents, Opcode, TelemetryRecord};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn any_frame() -> impl Strategy<Value = CommandFrame> {
    (any::<u8>(), 0u8..=200, 0usize..3).prop_map(|(seq, duty, op)| match op {
        0 => CommandFrame::new(seq, Opcode::SetDuty, duty).unwrap(),
        1 => CommandFrame::stop(seq),
        _ => CommandFrame::ping(seq),
    })
}

fn any_record() -> impl Strategy<Value = TelemetryRecord> {
    (0.0f64..1e7, 0.0f64..5.0, 0usize..3, 0u8..=200, any::<u8>()).prop_map(|(t, d, s, units, seq)| TelemetryRecord {
        t_ms: t,
        dist_m: d,
        state: [SafetyState::Safe, SafetyState::Active, SafetyState::Danger][s],
        duty_pct: f64::from(units) * 0.5,
        seq,
    })
}

fn sample(min: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, min..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn noiseless_pose_round_trip(seed in any::<u64>()) {
        let k = CameraIntrinsics::default();
        let spec = MarkerSpec::new(0.10, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = geometry::sample_visible_pose(&mut rng, 0.3..2.0, 1.0, &spec, &k);
        let est = geometry::estimate_pose(&geometry::project(&truth, &spec, &k).unwrap(), &spec, &k).unwrap();
        prop_assert!(est.rotation_error(&truth) < 1e-6);
        prop_assert!(est.translation_error(&truth) < 1e-6);
    }

    #[test]
    fn codec_round_trip(f in any_frame()) {
        let bytes = wire::encode(&f).unwrap();
        prop_assert_eq!(wire::decode(&bytes), Ok(f));
    }

    #[test]
    fn decoded_bytes_reencode_identically(bytes in any::<[u8; 5]>()) {
        if let Ok(f) = wire::decode(&bytes) {
            prop_assert_eq!(wire::encode(&f).unwrap(), bytes);
        }
    }

    #[test]
    fn journal_read_after_write(records in prop::collection::vec(any_record(), 0..60)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        wire::journal_append(&path, &records).unwrap();
        let back: JournalContents<TelemetryRecord> = wire::journal_read(&path).unwrap();
        prop_assert_eq!(back.records, records);
        prop_assert!(!back.truncated);
    }

    #[test]
    fn torn_journal_keeps_complete_prefix(records in prop::collection::vec(any_record(), 1..30), cut in 1usize..40) {
        let text: String = records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
        let cut = cut.min(text.len() - 1);
        let torn = &text[..text.len() - cut];
        let back: JournalContents<TelemetryRecord> = parse_journal(torn).unwrap();
        let complete = torn.matches('\n').count();
        prop_assert_eq!(&back.records[..], &records[..complete]);
        prop_assert_eq!(back.truncated, !torn.ends_with('\n'));
    }

    #[test]
    fn shapiro_wilk_is_affine_invariant(x in sample(3), scale in 0.01f64..100.0, shift in -1e3f64..1e3) {
        let a = SampleVector::new(x.clone()).unwrap();
        prop_assume!(shapiro_wilk(&a).is_ok());
        let b = SampleVector::new(x.iter().map(|v| scale * v + shift).collect()).unwrap();
        let (wa, wb) = (shapiro_wilk(&a).unwrap(), shapiro_wilk(&b).unwrap());
        prop_assert!((wa.statistic - wb.statistic).abs() < 1e-10);
        prop_assert!(wa.statistic > 0.0 && wa.statistic <= 1.0);
        prop_assert!((0.0..=1.0).contains(&wa.p_value));
    }

    #[test]
    fn paired_t_symmetries(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..30), c in -50.0f64..50.0) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let sv = |v: Vec<f64>| SampleVector::new(v).unwrap();
        let Ok(ab) = paired_t(&sv(a.clone()), &sv(b.clone())) else { return Ok(()) };
        let ba = paired_t(&sv(b.clone()), &sv(a.clone())).unwrap();
        prop_assert!((ab.statistic + ba.statistic).abs() < 1e-10 * (1.0 + ab.statistic.abs()));
        let shifted = paired_t(&sv(a.iter().map(|v| v + c).collect()), &sv(b.iter().map(|v| v + c).collect())).unwrap();
        prop_assert!((shifted.statistic - ab.statistic).abs() < 1e-8 * (1.0 + ab.statistic.abs()));
        prop_assert!((shifted.p_value - ab.p_value).abs() < 1e-8);
    }

    #[test]
    fn jet_velocity_monotone_and_linear(duty in 0.0f64..100.0, x1 in 0.0f64..3.0, x2 in 0.0f64..3.0) {
        let j = JetModel::<f64>::default();
        let (near, far) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
        prop_assert!(j.velocity(duty, far) <= j.velocity(duty, near));
        prop_assert!((j.velocity(duty, x1) - duty / 100.0 * j.velocity(100.0, x1)).abs() < 1e-12);
    }

    #[test]
    fn noiseless_perception_inverts_the_jet(x in 0.2f64..1.5, duty in 5.0f64..100.0) {
        let j = JetModel::<f64>::default();
        prop_assume!(x > j.core_length());
        let pm = PerceptionModel { weber: 0.0, detect_q: 1e-6 };
        let got = pm.perceive(&j, duty, x, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        prop_assert!((got - x).abs() < 1e-12);
        prop_assert!((j.distance_for_pressure(duty, j.dynamic_pressure(duty, x)) - x).abs() < 1e-9);
    }
}

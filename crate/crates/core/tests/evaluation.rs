mod common;

use qude_core::dynamics::{integrate_rk4, BaseKind, DeviceModel, Experiment};
use qude_core::metrics::{
    evaluate, expected_trace_distance, trace_distance_series, McConfig, SplitTag, TimeWindow,
};
use qude_core::models::{SourceModel, StructurePreservingSource};
use qude_core::qcore::trace_distance;
use qude_core::tomography::{
    lie_reconstruct, measurement_probs, sample_shots, MeasurementProbs, TomographyRecord,
};
use qude_core::twin::TwinGenerator;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn planted() -> SourceModel {
    SourceModel::StructurePreserving(
        StructurePreservingSource::qubit_from_readout([0.15, 2.18, 5.66], [1686.0, 1686.0, 688.0])
            .unwrap(),
    )
}

#[test]
fn round_trip_over_many_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..1000 {
        let rho = common::seeded_density(2, &mut rng);
        let back = lie_reconstruct(&measurement_probs(&rho).unwrap()).unwrap();
        assert!(trace_distance(&rho, &back).unwrap() <= 1e-12);
    }
}

#[test]
fn reconstruction_error_shrinks_as_inverse_root_shots() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rho = common::seeded_density(2, &mut rng);
    let probs = measurement_probs(&rho).unwrap();
    let mean_error = |shots: u64, rng: &mut ChaCha8Rng| {
        let reps = 400;
        (0..reps)
            .map(|_| {
                let k = sample_shots(&probs, [shots; 3], rng).unwrap();
                let est = lie_reconstruct(&MeasurementProbs::from_counts(k, [shots; 3]).unwrap())
                    .unwrap();
                trace_distance(&rho, &est).unwrap()
            })
            .sum::<f64>()
            / reps as f64
    };
    let e5 = mean_error(100_000, &mut rng);
    let e6 = mean_error(1_000_000, &mut rng);
    let slope = (e6 / e5).log10();
    assert!((slope + 0.5).abs() <= 0.1, "log-log slope {slope}");
}

#[test]
fn lvn_prediction_drifts_away_from_lindblad_data() {
    let truth = DeviceModel::dev2(BaseKind::Lindblad);
    let mut g = TwinGenerator::new(truth.clone(), None, vec![1.5]);
    g.shots = 0;
    g.duration_us = 20.0;
    let ds = g.generate(10.0).unwrap();
    let e = &ds.experiments[0];
    let pred = integrate_rk4(&truth.with_base(BaseKind::Lvn), &e.experiment, None, 4.0).unwrap();
    let series = trace_distance_series(&pred, &e.records).unwrap();
    // envelope: maximum over consecutive 2 μs windows
    let env: Vec<f64> = series
        .chunks(500)
        .map(|c| c.iter().map(|(_, d)| *d).fold(0.0, f64::max))
        .collect();
    assert!(env.windows(2).all(|w| w[1] > w[0]), "{env:?}");
}

#[test]
fn generator_as_model_has_zero_expected_distance() {
    let dev = DeviceModel::dev1(BaseKind::Lindblad);
    let mut truth = TwinGenerator::new(dev.clone(), Some(planted()), vec![]);
    truth.duration_us = 2.0;
    let cfg = McConfig {
        n_samples: 4,
        p_max_mhz: 3.47,
        seed: 1,
        window: TimeWindow {
            from_us: 0.0,
            to_us: 2.0,
        },
        pooled: false,
        dt_internal_ns: 4.0,
    };
    let est = expected_trace_distance(Some(&planted()), &dev, &truth, &cfg).unwrap();
    assert!(est.mean <= 1e-12);
    let again = expected_trace_distance(Some(&planted()), &dev, &truth, &cfg).unwrap();
    assert_eq!(est, again);
}

#[test]
fn standard_error_shrinks_with_more_draws() {
    let dev = DeviceModel::dev1(BaseKind::Lindblad);
    let mut truth = TwinGenerator::new(dev.clone(), Some(planted()), vec![]);
    truth.duration_us = 2.0;
    let mut cfg = McConfig {
        n_samples: 8,
        p_max_mhz: 3.47,
        seed: 0,
        window: TimeWindow {
            from_us: 0.0,
            to_us: 2.0,
        },
        pooled: false,
        dt_internal_ns: 4.0,
    };
    let mean_se = |cfg: &mut McConfig, n: usize| {
        cfg.n_samples = n;
        let seeds = 12;
        (0..seeds)
            .map(|s| {
                cfg.seed = 100 + s;
                expected_trace_distance(None, &dev, &truth, cfg)
                    .unwrap()
                    .std_err
            })
            .sum::<f64>()
            / seeds as f64
    };
    let ratio = mean_se(&mut cfg, 32) / mean_se(&mut cfg, 16);
    assert!(
        (ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.15,
        "ratio {ratio}"
    );
}

#[test]
fn lindblad_base_beats_lvn_base_after_six_microseconds() {
    let truth_dev = DeviceModel::dev1(BaseKind::Lindblad);
    let mut truth = TwinGenerator::new(truth_dev.clone(), Some(planted()), vec![]);
    truth.duration_us = 20.0;
    let cfg = McConfig {
        n_samples: 6,
        p_max_mhz: 3.47,
        seed: 8,
        window: TimeWindow {
            from_us: 6.0,
            to_us: 20.0,
        },
        pooled: false,
        dt_internal_ns: 4.0,
    };
    let lind = expected_trace_distance(None, &truth_dev, &truth, &cfg).unwrap();
    let lvn =
        expected_trace_distance(None, &truth_dev.with_base(BaseKind::Lvn), &truth, &cfg).unwrap();
    assert!(lind.mean < lvn.mean, "{} vs {}", lind.mean, lvn.mean);
}

#[test]
fn evaluation_report_splits_at_the_horizon() {
    let dev = DeviceModel::dev1(BaseKind::Lindblad);
    let mut g = TwinGenerator::new(dev.clone(), Some(planted()), vec![1.0, 2.0]);
    g.duration_us = 4.0;
    g.seed = 2;
    let ds = g.generate(1.0).unwrap();
    let rep = evaluate("sp", Some(&planted()), &dev, &ds, 4.0).unwrap();
    assert_eq!(rep.pooled(SplitTag::Interpolation).len(), 2 * 250);
    assert_eq!(rep.pooled(SplitTag::Extrapolation).len(), 2 * 750);
    assert_eq!(rep.per_experiment().len(), 4);
    let all = rep.pooled(SplitTag::Extrapolation);
    assert!(all.iter().all(|d| (0.0..=1.0).contains(d)));
    let h = rep.histogram(SplitTag::Interpolation, 50).unwrap();
    let mass: f64 = h.iter().map(|b| b.density * (b.hi - b.lo)).sum();
    assert!((mass - 1.0).abs() <= 1e-9);
    // exact records of the true model evaluate to zero
    g.shots = 0;
    let exact = g.generate(1.0).unwrap();
    let rep = evaluate("sp", Some(&planted()), &dev, &exact, 4.0).unwrap();
    assert!(rep
        .pooled(SplitTag::Extrapolation)
        .iter()
        .all(|d| *d <= 1e-12));
}

#[test]
fn energy_series_reads_excited_population() {
    let dev = DeviceModel::resonant(3.448, 1.0, 1.0, BaseKind::Lvn).unwrap();
    let exp = Experiment::square_pulse("e", 0.5, 0.5, 4.0).unwrap();
    let traj = integrate_rk4(&dev, &exp, None, 1.0).unwrap();
    let records: Vec<TomographyRecord> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| {
            let rho = qude_core::qcore::DensityMatrix::new(s.hermitize()).unwrap();
            TomographyRecord::exact(*t, measurement_probs(&rho).unwrap()).unwrap()
        })
        .collect();
    let ds = qude_core::train::Dataset::new(
        vec![qude_core::train::ExperimentData::new(exp, records).unwrap()],
        0.25,
    )
    .unwrap();
    let rep = evaluate("base", None, &dev, &ds, 1.0).unwrap();
    for p in &rep.experiments[0].energy {
        let exact = (std::f64::consts::TAU * 0.5 * p.t_us).sin().powi(2);
        assert!(
            (p.energy_pred - exact).abs() < 1e-8,
            "{} vs {exact}",
            p.energy_pred
        );
        assert!((p.energy_target - p.energy_pred).abs() < 1e-12);
    }
}

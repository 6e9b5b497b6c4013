use approx::assert_abs_diff_eq;
use qude_core::dynamics::{integrate_rk4, BaseKind, DeviceModel, Experiment};
use qude_core::qcore::{DensityMatrix, C64};

fn rabi_error(p_mhz: f64, duration_us: f64, dt_ns: f64) -> f64 {
    let dev = DeviceModel::resonant(3.448, 214.0, 32.0, BaseKind::Lvn).unwrap();
    let exp = Experiment::square_pulse("rabi", p_mhz, duration_us, 4.0).unwrap();
    let traj = integrate_rk4(&dev, &exp, None, dt_ns).unwrap();
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| {
            let exact = (std::f64::consts::TAU * p_mhz * t).sin().powi(2);
            (s[(1, 1)].re - exact).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn rabi_population_matches_closed_form() {
    assert!(rabi_error(0.5, 10.0, 1.0) <= 1e-8);
}

#[test]
fn rabi_period_is_half_inverse_amplitude() {
    let p = 1.25;
    let dev = DeviceModel::resonant(3.448, 1.0, 1.0, BaseKind::Lvn).unwrap();
    let exp = Experiment::square_pulse("rabi", p, 0.4, 4.0).unwrap();
    let traj = integrate_rk4(&dev, &exp, None, 1.0).unwrap();
    // period 1/(2p) = 0.4 μs: back in the ground state, fully excited halfway
    let last = traj.states.last().unwrap();
    assert_abs_diff_eq!(last[(1, 1)].re, 0.0, epsilon = 1e-9);
    let half = &traj.states[traj.len() / 2 - 1];
    assert_abs_diff_eq!(half[(1, 1)].re, 1.0, epsilon = 1e-9);
}

#[test]
fn rk4_is_fourth_order() {
    let coarse = rabi_error(3.0, 10.0, 4.0);
    let fine = rabi_error(3.0, 10.0, 2.0);
    let order = (coarse / fine).log2();
    assert!(order >= 3.7, "measured order {order}");
}

#[test]
fn free_decay_matches_t1() {
    let dev = DeviceModel::dev1(BaseKind::Lindblad);
    let mut exp = Experiment::square_pulse("decay", 0.0, 50.0, 4.0).unwrap();
    exp.initial_state = DensityMatrix::basis_state(2, 1);
    let traj = integrate_rk4(&dev, &exp, None, 4.0).unwrap();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        assert_abs_diff_eq!(s[(1, 1)].re, (-t / dev.t1_us).exp(), epsilon = 1e-8);
    }
}

#[test]
fn free_dephasing_of_coherence() {
    // D[a] and D[a†a] damp ρ01 at (τ1 + τ2)/2
    let dev = DeviceModel::dev2(BaseKind::Lindblad);
    let mut exp = Experiment::square_pulse("ramsey", 0.0, 20.0, 4.0).unwrap();
    let plus = [C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
    exp.initial_state = DensityMatrix::pure(&plus).unwrap();
    let traj = integrate_rk4(&dev, &exp, None, 4.0).unwrap();
    let (tau1, tau2) = dev.rates();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        assert_abs_diff_eq!(
            s[(0, 1)].re,
            0.5 * (-(tau1 + tau2) / 2.0 * t).exp(),
            epsilon = 1e-8
        );
    }
}

#[test]
fn lvn_base_is_unitary() {
    let dev = DeviceModel::dev1(BaseKind::Lvn);
    let exp = Experiment::square_pulse("e", 2.0, 50.0, 4.0).unwrap();
    let traj = integrate_rk4(&dev, &exp, None, 4.0).unwrap();
    for s in &traj.states {
        // purity stays one up to the RK4 amplitude error
        let purity = (s * s).trace().re;
        assert_abs_diff_eq!(purity, 1.0, epsilon = 1e-4);
        assert!((s.trace().re - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn drive_free_resonant_lvn_is_static() {
    let dev = DeviceModel::dev1(BaseKind::Lvn);
    let mut exp = Experiment::square_pulse("e", 0.0, 1.0, 4.0).unwrap();
    exp.initial_state = DensityMatrix::maximally_mixed(2);
    let traj = integrate_rk4(&dev, &exp, None, 4.0).unwrap();
    for s in &traj.states {
        assert_eq!(s.max_abs_diff(exp.initial_state.matrix()), 0.0);
    }
}

#[test]
fn internal_step_must_divide_sampling() {
    let dev = DeviceModel::dev1(BaseKind::Lvn);
    let exp = Experiment::square_pulse("e", 1.0, 1.0, 4.0).unwrap();
    assert!(integrate_rk4(&dev, &exp, None, 3.0).is_err());
    assert!(integrate_rk4(&dev, &exp, None, 0.5).is_ok());
}

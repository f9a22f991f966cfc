use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;

use gemservo::control::{closed_loop_matrix, eigenvalues, place_poles, Limits, PidGains};
use gemservo::kinematics::{direct, inverse, JointAngles, MountGeometry};
use gemservo::lti::{DcGain, TransferFunction};
use gemservo::simloop::{run, Controller, Disturbance, InjectionPoint, Scenario, Signal};
use gemservo::sysid::{fit_second_order, simulate_second_order, DataSet};

/// exp(m) by diagonal Pade(6) with scaling and squaring.
fn expm_pade6(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let x = m / 2f64.powi(s);
    let q = 6;
    let mut c = 1.0;
    let mut num = DMatrix::identity(n, n);
    let mut den = DMatrix::identity(n, n);
    let mut p = DMatrix::identity(n, n);
    for k in 1..=q {
        c *= (q - k + 1) as f64 / (k * (2 * q - k + 1)) as f64;
        p = &p * &x;
        num += &p * c;
        den += &p * (if k % 2 == 0 { c } else { -c });
    }
    let mut e = den.lu().solve(&num).unwrap();
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

fn poly_from_roots(roots: &[Complex<f64>]) -> Vec<f64> {
    let mut c = vec![Complex::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex::new(0.0, 0.0); c.len() + 1];
        for (i, v) in c.iter().enumerate() {
            next[i] += v;
            next[i + 1] -= v * r;
        }
        c = next;
    }
    c.iter().map(|z| z.re).collect()
}

/// Pole sets closed under conjugation: up to two real poles plus up to one
/// complex pair, all in the left half-plane.
fn pole_set() -> impl Strategy<Value = Vec<Complex<f64>>> {
    (
        prop::collection::vec(-50.0..-0.5f64, 0..=2),
        prop::option::of((-30.0..-0.5f64, 0.5..40.0f64)),
    )
        .prop_filter("non-empty", |(r, c)| !r.is_empty() || c.is_some())
        .prop_map(|(reals, pair)| {
            let mut p: Vec<Complex<f64>> = reals.into_iter().map(|r| Complex::new(r, 0.0)).collect();
            if let Some((re, im)) = pair {
                p.push(Complex::new(re, im));
                p.push(Complex::new(re, -im));
            }
            p
        })
}

/// Worst distance after greedily pairing each wanted value with its nearest
/// remaining match.
fn set_distance(got: &[Complex<f64>], want: &[Complex<f64>]) -> f64 {
    assert_eq!(got.len(), want.len());
    let mut left = got.to_vec();
    let mut worst = 0.0_f64;
    for w in want {
        let (i, d) = left
            .iter()
            .map(|g| (g - w).norm() / w.norm().max(1.0))
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        worst = worst.max(d);
        left.swap_remove(i);
    }
    worst
}

fn wide() -> Limits {
    Limits::new(-1e9, 1e9).unwrap()
}

fn asc_velocity() -> TransferFunction {
    TransferFunction::new(vec![0.09809], vec![1.0, 52.0, 1566.5]).unwrap()
}

fn pid(kp: f64, ki: f64, kd: f64) -> Controller {
    Controller::Pid(PidGains::new(kp, ki, kd, 100.0, wide()).unwrap())
}

#[test]
fn zoh_matches_pade_oracle_on_mount_models() {
    for den in [vec![1.0, 52.0, 1566.5], vec![1.0, 34.72, 2018.0], vec![1.0, 34.72, 2018.0, 0.0]] {
        let tf = TransferFunction::new(vec![0.1], den).unwrap();
        let ss = tf.to_state_space();
        for ts in [0.001, 0.01, 0.1, 1.0] {
            let d = ss.discretize_zoh(ts).unwrap();
            let n = ss.n_states();
            let mut aug = DMatrix::zeros(n + 1, n + 1);
            aug.view_mut((0, 0), (n, n)).copy_from(&(ss.a() * ts));
            aug.view_mut((0, n), (n, 1)).copy_from(&(ss.b() * ts));
            let e = expm_pade6(&aug);
            let scale = e.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            let ad_err = (d.ad() - e.view((0, 0), (n, n))).amax();
            let bd_err = (d.bd() - e.view((0, n), (n, 1))).amax();
            assert!(ad_err <= 1e-10 * scale, "ts {ts}: Ad error {ad_err:e}");
            assert!(bd_err <= 1e-10 * scale, "ts {ts}: Bd error {bd_err:e}");
        }
    }
}

#[test]
fn first_order_zoh_closed_form() {
    let (p, ts) = (3.0_f64, 0.05);
    let d = TransferFunction::new(vec![2.0], vec![1.0, p])
        .unwrap()
        .to_state_space()
        .discretize_zoh(ts)
        .unwrap();
    let ad = (-p * ts).exp();
    assert!((d.ad()[(0, 0)] - ad).abs() < 1e-15);
    // b scaled into C by the realization; check the product.
    let cb = d.c()[(0, 0)] * d.bd()[(0, 0)];
    assert!((cb - 2.0 * (1.0 - ad) / p).abs() < 1e-15);
}

#[test]
fn superposition_fails_only_under_saturation() {
    let c = |limits| Controller::Pid(PidGains::new(50_000.0, 1e6, 0.0, 100.0, limits).unwrap());
    let tight = Limits::new(0.0, 150_000.0).unwrap();
    let scaled = |limits, a| {
        run(&Scenario::new(asc_velocity(), c(limits), Signal::step(a), 0.5, 0.01)).unwrap().y
    };
    let (y1, y2) = (scaled(wide(), 5.0), scaled(wide(), 10.0));
    for (a, b) in y1.iter().zip(&y2) {
        assert!((2.0 * a - b).abs() <= 1e-8 * b.abs().max(1.0));
    }
    let (y1, y2) = (scaled(tight, 5.0), scaled(tight, 10.0));
    let gap = y1.iter().zip(&y2).map(|(a, b)| (2.0 * a - b).abs()).fold(0.0, f64::max);
    assert!(gap > 1e-3, "saturated loop behaved linearly");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn realization_has_the_transfer_function_poles(poles in pole_set(), b0 in 0.1..10.0f64) {
        let den = poly_from_roots(&poles);
        let tf = TransferFunction::new(vec![b0], den).unwrap();
        let ss = tf.to_state_space();
        let eig: Vec<_> = ss.a().clone().complex_eigenvalues().iter().copied().collect();
        let roots = tf.poles();
        prop_assert!(set_distance(&eig, &poles) <= 1e-6, "eig {:?} vs {:?}", eig, poles);
        prop_assert!(set_distance(&roots, &poles) <= 1e-6, "roots {:?} vs {:?}", roots, poles);
        // DC gain of the realization: -C A^-1 B + D.
        let x = ss.a().clone().lu().solve(ss.b()).unwrap();
        let dc = -(ss.c() * x)[(0, 0)] + ss.d()[(0, 0)];
        match tf.dc_gain().unwrap() {
            DcGain::Finite(g) => prop_assert!((dc - g).abs() <= 1e-9 * g.abs()),
            DcGain::Infinite => prop_assert!(false, "stable model reported an infinite gain"),
        }
    }

    #[test]
    fn zoh_matches_pade_oracle(poles in pole_set(), ts in 0.001..0.5f64) {
        let tf = TransferFunction::new(vec![1.0], poly_from_roots(&poles)).unwrap();
        let ss = tf.to_state_space();
        let d = ss.discretize_zoh(ts).unwrap();
        let n = ss.n_states();
        let x = ss.a() * ts;
        let want = expm_pade6(&x);
        let scale = want.amax().max(1.0);
        // Both sides carry rounding error that grows with the norm of A·ts;
        // companion matrices of quartics reach 1e5 and more.
        let tol = scale * (1e-10 + 64.0 * f64::EPSILON * x.amax());
        let err = (d.ad() - &want).amax();
        prop_assert!(err <= tol, "err {:e} tol {:e}", err, tol);
        prop_assert_eq!(d.bd().nrows(), n);
    }

    #[test]
    fn place_poles_hits_requested_poles(poles in pole_set(), extra in -20.0..-1.0f64) {
        let plant = TransferFunction::new(vec![1.0], vec![1.0, 3.0, 2.0]).unwrap();
        let mut want = poles.clone();
        want.truncate(3);
        // Three targets in conjugate-closed form.
        while want.len() < 3 {
            want.push(Complex::new(extra, 0.0));
        }
        if want[2].im != 0.0 {
            want[2] = Complex::new(extra, 0.0);
            if want[1].im != 0.0 && want[1].conj() != want[0] {
                want[1] = Complex::new(extra * 1.5, 0.0);
            }
        }
        let gains = place_poles(&plant.to_state_space(), &want).unwrap();
        let got = eigenvalues(&closed_loop_matrix(&plant.to_state_space(), &gains).unwrap());
        prop_assert!(set_distance(&got, &want) <= 1e-4, "{:?} vs {:?}", got, want);
    }

    #[test]
    fn reference_and_disturbance_superpose(a in -20.0..20.0f64, d in -5e4..5e4f64, start in 0.0..0.3f64) {
        let c = pid(20_000.0, 4e5, 50.0);
        let base = Scenario::new(asc_velocity(), c, Signal::step(a), 0.6, 0.01);
        let dist = Disturbance { signal: Signal::Step { amplitude: d, start }, point: InjectionPoint::Input };
        let both = run(&base.clone().with_disturbance(dist)).unwrap();
        let r_only = run(&base.clone()).unwrap();
        let d_only = run(&Scenario { reference: Signal::zero(), ..base }.with_disturbance(dist)).unwrap();
        for k in 0..both.len() {
            let sum = r_only.y[k] + d_only.y[k];
            prop_assert!((both.y[k] - sum).abs() <= 1e-8 * sum.abs().max(1e-3));
        }
    }

    #[test]
    fn runs_are_deterministic_and_causal(a in 1.0..20.0f64, t_cut in 0.1..0.4f64) {
        let sc = Scenario::new(asc_velocity(), pid(20_000.0, 4e5, 50.0), Signal::step(a), 0.5, 0.01);
        let (x, y) = (run(&sc).unwrap(), run(&sc).unwrap());
        prop_assert_eq!(x.to_csv_string(), y.to_csv_string());
        let short = run(&Scenario { duration: t_cut, ..sc }).unwrap();
        for k in 0..short.len() {
            prop_assert_eq!(short.y[k].to_bits(), x.y[k].to_bits());
            prop_assert_eq!(short.u[k].to_bits(), x.u[k].to_bits());
        }
    }

    #[test]
    fn halving_ts_keeps_the_final_value(kp in 1_000.0..50_000.0f64) {
        let sc = |ts| Scenario::new(asc_velocity(), pid(kp, 0.0, 0.0), Signal::step(10.0), 2.0, ts);
        let y1 = *run(&sc(0.01)).unwrap().y.last().unwrap();
        let y2 = *run(&sc(0.005)).unwrap().y.last().unwrap();
        prop_assert!((y1 - y2).abs() <= 1e-4 * y2.abs());
    }

    #[test]
    fn kinematics_round_trip(
        t1 in -PI + 1e-3..PI - 1e-3,
        t2 in 1e-3..PI - 1e-3,
        l1 in 0.2..3.0f64,
        l2 in 0.1..2.0f64,
        alpha in -1.2..1.2f64,
    ) {
        let g = MountGeometry::new(l1, l2, alpha).unwrap();
        let p = direct(&g, JointAngles { theta1: t1, theta2: t2 });
        let sphere = p.x * p.x + p.y * p.y + p.z * p.z - (l1 * l1 + l2 * l2);
        prop_assert!(sphere.abs() <= 1e-9);
        let back = inverse(&g, p).unwrap();
        let d1 = (back.theta1 - t1 + PI).rem_euclid(2.0 * PI) - PI;
        prop_assert!(d1.abs() <= 1e-8 && (back.theta2 - t2).abs() <= 1e-8, "{:?}", back);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn noiseless_step_recovery(zeta in 0.2..0.9f64, wn in 10.0..100.0f64, gain in 1e-5..1e-4f64) {
        let (ts, n) = (0.01, 400);
        let truth = [gain * wn * wn, 2.0 * zeta * wn, wn * wn];
        let u = vec![250_000.0; n];
        let y = simulate_second_order(&truth, &u, ts).unwrap();
        let t: Vec<f64> = (0..n).map(|k| k as f64 * ts).collect();
        let rep = fit_second_order(&DataSet::new(t, u, y, "step").unwrap(), None).unwrap();
        let got = [rep.model.num()[0], rep.model.den()[1], rep.model.den()[2]];
        for i in 0..3 {
            prop_assert!((got[i] / truth[i] - 1.0).abs() <= 5e-3, "{:?} vs {:?}", got, truth);
        }
    }
}

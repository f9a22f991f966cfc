use std::ffi::{c_char, CString};
use std::ptr;

use gemservo_ffi::*;

fn last_error() -> String {
    let n = unsafe { gs_last_error(ptr::null_mut(), 0) };
    let mut buf = vec![0u8; n + 1];
    unsafe { gs_last_error(buf.as_mut_ptr() as *mut c_char, buf.len()) };
    buf.truncate(n);
    String::from_utf8(buf).unwrap()
}

fn tf(num: &[f64], den: &[f64]) -> *mut GsTransferFunction {
    let mut h = ptr::null_mut();
    let st = unsafe { gs_tf_new(num.as_ptr(), num.len(), den.as_ptr(), den.len(), &mut h) };
    assert_eq!(st, GsStatus::Ok, "{}", last_error());
    h
}

#[test]
fn transfer_function_queries() {
    let h = tf(&[0.09809], &[1.0, 52.0, 1566.5]);
    unsafe {
        let mut g = 0.0;
        assert_eq!(gs_tf_dc_gain(h, &mut g), GsStatus::Ok);
        assert!((g - 0.09809 / 1566.5).abs() <= 1e-9 * g.abs());
        let mut stable = false;
        assert_eq!(gs_tf_is_bibo_stable(h, &mut stable), GsStatus::Ok);
        assert!(stable);

        let (mut re, mut im, mut n) = ([0.0; 1], [0.0; 1], 0usize);
        assert_eq!(gs_tf_poles(h, re.as_mut_ptr(), im.as_mut_ptr(), 1, &mut n), GsStatus::BufferTooSmall);
        assert_eq!(n, 2);
        let (mut re, mut im) = ([0.0; 2], [0.0; 2]);
        assert_eq!(gs_tf_poles(h, re.as_mut_ptr(), im.as_mut_ptr(), 2, &mut n), GsStatus::Ok);
        assert!((re[0] + 26.0).abs() < 1e-9 && (re[1] + 26.0).abs() < 1e-9);
        assert!((im[0].abs() - (1566.5f64 - 676.0).sqrt()).abs() < 1e-9);

        let mut p = ptr::null_mut();
        assert_eq!(gs_tf_with_integrator(h, &mut p), GsStatus::Ok);
        let (mut ty, mut order) = (0usize, 0usize);
        assert_eq!(gs_tf_system_type(p, &mut ty), GsStatus::Ok);
        assert_eq!(gs_tf_order(p, &mut order), GsStatus::Ok);
        assert_eq!((ty, order), (1, 3));
        assert_eq!(gs_tf_dc_gain(p, &mut g), GsStatus::Ok);
        assert_eq!(g, f64::INFINITY);
        assert_eq!(gs_tf_is_bibo_stable(p, &mut stable), GsStatus::Ok);
        assert!(!stable);
        gs_tf_free(p);
        gs_tf_free(h);
        gs_tf_free(ptr::null_mut());
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut h = ptr::null_mut();
    let den = [0.0, 1.0];
    unsafe {
        let st = gs_tf_new([1.0, 2.0, 3.0].as_ptr(), 3, den.as_ptr(), 2, &mut h);
        assert_ne!(st, GsStatus::Ok);
        assert!(h.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(gs_tf_new(ptr::null(), 1, den.as_ptr(), 2, &mut h), GsStatus::NullPointer);
        assert!(last_error().contains("num"));
        assert_eq!(gs_tf_order(ptr::null(), &mut 0), GsStatus::NullPointer);
    }
    // A success clears the message.
    let h = tf(&[1.0], &[1.0, 1.0]);
    assert_eq!(last_error(), "");
    unsafe { gs_tf_free(h) };
}

#[test]
fn pid_handle_matches_hand_values() {
    let mut pid = ptr::null_mut();
    unsafe {
        assert_eq!(gs_pid_new(2.0, 1.0, 0.0, 100.0, -1e9, 1e9, &mut pid), GsStatus::Ok);
        let (mut u, mut us) = (0.0, 0.0);
        assert_eq!(gs_pid_step(pid, 1.0, 0.1, &mut u, &mut us), GsStatus::Ok);
        // kp e + ki * trapezoid(0 -> 1) = 2 + 0.05
        assert!((u - 2.05).abs() < 1e-12 && u == us);
        let mut integral = 0.0;
        assert_eq!(gs_pid_integral(pid, &mut integral), GsStatus::Ok);
        assert!((integral - 0.05).abs() < 1e-12);
        assert_eq!(gs_pid_reset(pid), GsStatus::Ok);
        assert_eq!(gs_pid_integral(pid, &mut integral), GsStatus::Ok);
        assert_eq!(integral, 0.0);
        assert_eq!(gs_pid_step(pid, f64::NAN, 0.1, &mut u, &mut us), GsStatus::NonFinite);
        gs_pid_free(pid);

        let mut bad = ptr::null_mut();
        assert_ne!(gs_pid_new(1.0, 0.0, 0.0, 100.0, 5.0, 1.0, &mut bad), GsStatus::Ok);
    }
}

#[test]
fn sf_step_updates_integrator() {
    let k1 = [2.0, 3.0];
    let x = [1.0, 0.5];
    let mut xi = 0.0;
    let (mut u, mut us) = (0.0, 0.0);
    unsafe {
        let st = gs_sf_step(k1.as_ptr(), 2, 4.0, x.as_ptr(), &mut xi, 1.0, 0.0, 0.5, -1e9, 1e9, &mut u, &mut us);
        assert_eq!(st, GsStatus::Ok);
    }
    assert_eq!(xi, 0.5);
    assert!((u - (4.0 * 0.5 - 3.5)).abs() < 1e-12);
    // Clamped low while the error pushes downward: integrator frozen.
    let mut xi = 0.0;
    unsafe {
        gs_sf_step(k1.as_ptr(), 2, 4.0, x.as_ptr(), &mut xi, -1.0, 0.0, 0.5, 0.0, 10.0, &mut u, &mut us);
    }
    assert_eq!((xi, us), (0.0, 0.0));
}

#[test]
fn simulate_and_analyze() {
    let json = CString::new(
        r#"{"plant":{"num":[1],"den":[1,0]},"controller":{"type":"pid","kp":1},
            "reference":{"kind":"step","amplitude":1,"start":0},"duration":10,"ts":0.01,
            "limits":{"umin":-100,"umax":100}}"#,
    )
    .unwrap();
    let mut trace = ptr::null_mut();
    unsafe {
        assert_eq!(gs_simulate_json(json.as_ptr(), ptr::null(), &mut trace), GsStatus::Ok, "{}", last_error());
        let mut n = 0;
        assert_eq!(gs_trace_len(trace, &mut n), GsStatus::Ok);
        assert_eq!(n, 1001);
        let mut div = true;
        gs_trace_diverged(trace, &mut div);
        assert!(!div);
        let (mut t, mut r, mut y) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        assert_eq!(gs_trace_column(trace, GsTraceColumn::T, t.as_mut_ptr(), n), GsStatus::Ok);
        assert_eq!(gs_trace_column(trace, GsTraceColumn::R, r.as_mut_ptr(), n), GsStatus::Ok);
        assert_eq!(gs_trace_column(trace, GsTraceColumn::Y, y.as_mut_ptr(), n), GsStatus::Ok);
        assert_eq!(gs_trace_column(trace, GsTraceColumn::Y, y.as_mut_ptr(), n - 1), GsStatus::BufferTooSmall);
        let mut umax = 0.0;
        gs_trace_max_control(trace, &mut umax);
        assert_eq!(umax, 1.0);
        gs_trace_free(trace);

        // Sampled integrator under unit feedback: 1 - y[k] = 0.99^k, so the
        // last sample outside the 2% band is floor(ln 0.02 / ln 0.99).
        let mut m = GsStepMetrics::default();
        assert_eq!(gs_analyze_step(t.as_ptr(), r.as_ptr(), y.as_ptr(), n, 2.0, &mut m), GsStatus::Ok);
        let k_out = (0.02f64.ln() / 0.99f64.ln()).floor();
        assert!(m.settled && (m.tss - k_out * 0.01).abs() < 1e-9, "{m:?}");
        assert!(m.os_pct == 0.0);

        let bad = CString::new("{ not json").unwrap();
        assert_eq!(gs_simulate_json(bad.as_ptr(), ptr::null(), &mut trace), GsStatus::Parse);
    }
}

#[test]
fn fit_recovers_noiseless_model() {
    let ts = 0.01;
    let n = 300;
    let t: Vec<f64> = (0..n).map(|k| k as f64 * ts).collect();
    let u: Vec<f64> = (0..n).map(|k| if (k / 50) % 2 == 0 { 250_000.0 } else { 120_000.0 }).collect();
    let y = gemservo::sysid::simulate_second_order(&[0.1267, 34.72, 2018.0], &u, ts).unwrap();
    let mut fit = GsFitResult::default();
    unsafe {
        assert_eq!(gs_fit_second_order(t.as_ptr(), u.as_ptr(), y.as_ptr(), n, &mut fit), GsStatus::Ok);
    }
    assert!((fit.b0 / 0.1267 - 1.0).abs() < 1e-3, "{fit:?}");
    assert!((fit.a1 / 34.72 - 1.0).abs() < 1e-3);
    assert!((fit.a0 / 2018.0 - 1.0).abs() < 1e-3);
    assert!(fit.fit_pct > 99.9 && fit.stable);
    let zeros = vec![0.0; n];
    unsafe {
        assert_eq!(
            gs_fit_second_order(t.as_ptr(), u.as_ptr(), zeros.as_ptr(), n, &mut fit),
            GsStatus::ConstantOutput
        );
    }
}

#[test]
fn kinematics_round_trip() {
    let mut g = GsGeometry { l1: 0.0, l2: 0.0, alpha: 0.0 };
    let (mut xyz, mut th) = ([0.0; 3], [0.0; 2]);
    unsafe {
        assert_eq!(gs_geometry_default(&mut g), GsStatus::Ok);
        assert_eq!(gs_kin_direct(&g, 0.3, 1.1, xyz.as_mut_ptr()), GsStatus::Ok);
        assert_eq!(gs_kin_inverse(&g, xyz[0], xyz[1], xyz[2], th.as_mut_ptr()), GsStatus::Ok);
    }
    assert!((th[0] - 0.3).abs() < 1e-9 && (th[1] - 1.1).abs() < 1e-9);
    unsafe {
        assert_eq!(gs_kin_inverse(&g, 10.0, 0.0, 0.0, th.as_mut_ptr()), GsStatus::Unreachable);
        let bad = GsGeometry { l1: -1.0, ..g };
        assert_eq!(gs_kin_direct(&bad, 0.0, 0.0, xyz.as_mut_ptr()), GsStatus::InvalidArgument);
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { std::ffi::CStr::from_ptr(gs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

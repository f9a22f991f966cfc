use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use super::Limits;
use crate::lti::{poly, StateSpace, TransferFunction};
use crate::metrics::Requirement;
use crate::{Error, Result};

/// State feedback with an integral channel: `u = k2 xi - k1 x`,
/// `xi' = r - y`. `k1` is expressed in the phase-variable coordinates of
/// [`crate::lti::TransferFunction::to_state_space`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFeedbackGains {
    pub k1: Vec<f64>,
    pub k2: f64,
}

impl StateFeedbackGains {
    pub fn new(k1: Vec<f64>, k2: f64) -> Result<Self> {
        if k1.iter().any(|v| !v.is_finite()) || !k2.is_finite() {
            return Err(Error::NonFinite("state-feedback gains".into()));
        }
        Ok(StateFeedbackGains { k1, k2 })
    }

    /// Gains given for a realization whose state vector is ordered from
    /// the highest derivative down (the companion form produced by common
    /// `tf2ss` routines), mapped onto the phase-variable ordering used here.
    pub fn from_reversed_ordering(k1: &[f64], k2: f64) -> Result<Self> {
        StateFeedbackGains::new(k1.iter().rev().copied().collect(), k2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfOutput {
    pub u_command: f64,
    pub u_saturated: f64,
    pub xi: f64,
}

/// One controller sample. The integrator uses forward Euler and the same
/// conditional-integration rule as [`super::pid_step`].
#[allow(clippy::too_many_arguments)]
pub fn sf_step(
    gains: &StateFeedbackGains,
    x: &[f64],
    xi: f64,
    r: f64,
    y: f64,
    ts: f64,
    limits: &Limits,
) -> Result<SfOutput> {
    if x.len() != gains.k1.len() {
        return Err(Error::Dimension(format!(
            "state has length {}, gain vector has {}",
            x.len(),
            gains.k1.len()
        )));
    }
    if !(ts > 0.0) {
        return Err(Error::invalid("sampling period must be positive"));
    }
    if !(r.is_finite() && y.is_finite()) {
        return Err(Error::NonFinite("state-feedback reference or output".into()));
    }
    let feedback: f64 = gains.k1.iter().zip(x).map(|(k, x)| k * x).sum();
    let increment = ts * (r - y);
    let mut xi_new = xi + increment;
    let mut u_command = gains.k2 * xi_new - feedback;
    let push = gains.k2 * increment;
    if (u_command > limits.max && push > 0.0) || (u_command < limits.min && push < 0.0) {
        xi_new = xi;
        u_command = gains.k2 * xi_new - feedback;
    }
    Ok(SfOutput {
        u_command,
        u_saturated: limits.clamp(u_command),
        xi: xi_new,
    })
}

fn check_siso_strict(plant: &StateSpace) -> Result<()> {
    if !plant.is_siso() {
        return Err(Error::Dimension("state feedback needs a SISO plant".into()));
    }
    if plant.d()[(0, 0)] != 0.0 {
        return Err(Error::invalid("state feedback needs a plant without feedthrough (D = 0)"));
    }
    Ok(())
}

/// Closed-loop matrix of the plant augmented with the tracking integrator,
/// at zero reference: `[[A - B k1, B k2], [-C, 0]]`.
pub fn closed_loop_matrix(plant: &StateSpace, gains: &StateFeedbackGains) -> Result<DMatrix<f64>> {
    check_siso_strict(plant)?;
    let n = plant.n_states();
    if gains.k1.len() != n {
        return Err(Error::Dimension(format!(
            "gain vector has length {}, plant has {n} states",
            gains.k1.len()
        )));
    }
    let k1 = DMatrix::from_row_slice(1, n, &gains.k1);
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&(plant.a() - plant.b() * &k1));
    m.view_mut((0, n), (n, 1)).copy_from(&(plant.b() * gains.k2));
    m.view_mut((n, 0), (1, n)).copy_from(&(-plant.c()));
    Ok(m)
}

/// Eigenvalues of a real matrix, sorted by real then imaginary part.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut ev: Vec<Complex<f64>> = m.clone().complex_eigenvalues().iter().copied().collect();
    poly::sort_roots(&mut ev);
    ev
}

/// Ackermann pole placement on the integrator-augmented plant.
pub fn place_poles(plant: &StateSpace, desired: &[Complex<f64>]) -> Result<StateFeedbackGains> {
    check_siso_strict(plant)?;
    let n = plant.n_states();
    let na = n + 1;
    if desired.len() != na {
        return Err(Error::invalid(format!(
            "need {na} desired poles for a {n}-state plant plus integrator, got {}",
            desired.len()
        )));
    }
    if desired.iter().any(|p| !(p.re < 0.0) || !p.im.is_finite()) {
        return Err(Error::invalid("desired poles must lie in the open left half-plane"));
    }
    check_conjugate_pairs(desired)?;

    let mut a_aug = DMatrix::zeros(na, na);
    a_aug.view_mut((0, 0), (n, n)).copy_from(plant.a());
    a_aug.view_mut((n, 0), (1, n)).copy_from(&(-plant.c()));
    let mut b_aug = DMatrix::zeros(na, 1);
    b_aug.view_mut((0, 0), (n, 1)).copy_from(plant.b());

    let mut ctrb = DMatrix::zeros(na, na);
    let mut col = b_aug.clone();
    for j in 0..na {
        ctrb.set_column(j, &col.column(0));
        col = &a_aug * col;
    }
    let sv = ctrb.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smax == 0.0 || smin <= 1e-12 * smax {
        return Err(Error::Uncontrollable(if smin == 0.0 { f64::INFINITY } else { smax / smin }));
    }

    // phi(A) for the desired characteristic polynomial, by Horner.
    let coeffs = poly::from_roots(desired);
    let mut phi = DMatrix::zeros(na, na);
    for &c in &coeffs {
        phi = &phi * &a_aug + DMatrix::identity(na, na) * c;
    }
    let inv = ctrb
        .lu()
        .try_inverse()
        .ok_or(Error::Uncontrollable(f64::INFINITY))?;
    let mut last = DMatrix::zeros(1, na);
    last[(0, na - 1)] = 1.0;
    let k_aug = last * inv * phi;

    // u = -k_aug z with z = [x; xi]; k_aug = [k1, -k2].
    let k1 = (0..n).map(|j| k_aug[(0, j)]).collect();
    StateFeedbackGains::new(k1, -k_aug[(0, n)])
}

fn check_conjugate_pairs(poles: &[Complex<f64>]) -> Result<()> {
    let scale = poles.iter().fold(1.0_f64, |m, p| m.max(p.norm()));
    let tol = 1e-9 * scale;
    let mut used = vec![false; poles.len()];
    for i in 0..poles.len() {
        if used[i] || poles[i].im.abs() <= tol {
            continue;
        }
        let partner = (0..poles.len()).find(|&j| {
            j != i && !used[j] && (poles[j] - poles[i].conj()).norm() <= tol
        });
        match partner {
            Some(j) => {
                used[i] = true;
                used[j] = true;
            }
            None => {
                return Err(Error::invalid(format!("pole {} has no conjugate partner", poles[i])))
            }
        }
    }
    Ok(())
}

/// Closed-loop pole layout derived from a step requirement through the
/// standard second-order mapping: a dominant pair with damping ratio
/// `zeta` and real part `-sigma`, plus real poles at `-far_factor * sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleDesign {
    pub zeta: f64,
    pub sigma: f64,
    pub far_factor: f64,
}

impl PoleDesign {
    /// Damping from the overshoot bound and decay rate from the settling
    /// bound (`4 / tss` for a 2% band), each with a safety margin to absorb
    /// the sampled implementation. Loops slower than one second use a wider
    /// margin so that saturation transients still settle inside the bound.
    pub fn from_requirement(req: &Requirement) -> Self {
        let zeta_os = overshoot_to_zeta(req.os_max);
        let zeta = (zeta_os + 0.1).clamp(0.69, 1.0).max(0.8);
        let sigma_margin = if req.tss_max > 1.0 { 2.0 } else { 1.25 };
        PoleDesign {
            zeta,
            sigma: sigma_margin * 4.0 / req.tss_max,
            far_factor: 5.0,
        }
    }

    /// `count` poles: the dominant pair followed by far real poles.
    pub fn poles(&self, count: usize) -> Vec<Complex<f64>> {
        let mut p = Vec::with_capacity(count);
        let wd = if self.zeta < 1.0 {
            self.sigma * (1.0 - self.zeta * self.zeta).sqrt() / self.zeta
        } else {
            0.0
        };
        if count >= 2 {
            p.push(Complex::new(-self.sigma, wd));
            p.push(Complex::new(-self.sigma, -wd));
        }
        while p.len() < count {
            p.push(Complex::new(-self.far_factor * self.sigma, 0.0));
        }
        p
    }
}

impl PoleDesign {
    /// Poles for the integral-augmented loop around `plant` (order + 1 of
    /// them). Stable plant modes already faster than the far poles are kept
    /// where they are, since moving them only costs gain; the remaining
    /// slots are filled as in [`PoleDesign::poles`].
    pub fn poles_for(&self, plant: &TransferFunction) -> Vec<Complex<f64>> {
        let count = plant.order() + 1;
        let mut p = self.poles(count.min(2));
        let far = -self.far_factor * self.sigma;
        let mut fast: Vec<Complex<f64>> = plant.poles().into_iter().filter(|z| z.re < far).collect();
        // Faster modes first; conjugates stay adjacent after the sort.
        fast.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let mut k = 0;
        while k < fast.len() {
            let pair = fast[k].im != 0.0;
            let width = if pair { 2 } else { 1 };
            if p.len() + width > count {
                break;
            }
            if pair {
                p.push(Complex::new(fast[k].re, fast[k].im.abs()));
                p.push(Complex::new(fast[k].re, -fast[k].im.abs()));
            } else {
                p.push(fast[k]);
            }
            k += width;
        }
        while p.len() < count {
            p.push(Complex::new(far, 0.0));
        }
        p
    }
}

/// Damping ratio whose underdamped second-order step overshoots by `os_pct`.
pub fn overshoot_to_zeta(os_pct: f64) -> f64 {
    if os_pct <= 0.0 {
        return 1.0;
    }
    let l = (os_pct / 100.0).ln();
    -l / (std::f64::consts::PI.powi(2) + l * l).sqrt()
}

//! Real polynomials in descending-power coefficient form.

use nalgebra::Complex;

/// Relative threshold below which a trailing coefficient counts as zero.
pub(crate) const ORIGIN_TOL: f64 = 1e-9;

pub(crate) fn degree(coeffs: &[f64]) -> usize {
    coeffs.len().saturating_sub(1)
}

/// Number of trailing coefficients that are negligible relative to the
/// largest coefficient magnitude, i.e. the multiplicity of the root at zero.
pub(crate) fn trailing_zeros(coeffs: &[f64]) -> usize {
    let scale = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return 0;
    }
    coeffs
        .iter()
        .rev()
        .take(degree(coeffs))
        .take_while(|c| c.abs() <= ORIGIN_TOL * scale)
        .count()
}

pub(crate) fn is_negligible(c: f64, coeffs: &[f64]) -> bool {
    let scale = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    c == 0.0 || c.abs() <= ORIGIN_TOL * scale
}

pub(crate) fn eval_complex(coeffs: &[f64], z: Complex<f64>) -> Complex<f64> {
    coeffs
        .iter()
        .fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn eval_with_derivative(coeffs: &[Complex<f64>], z: Complex<f64>) -> (Complex<f64>, Complex<f64>) {
    let mut p = Complex::new(0.0, 0.0);
    let mut dp = Complex::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Product of two polynomials.
#[cfg(test)]
pub(crate) fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Monic real polynomial with the given roots. Complex roots must come in
/// conjugate pairs; the imaginary residue of the product is discarded.
pub(crate) fn from_roots(roots: &[Complex<f64>]) -> Vec<f64> {
    let mut acc = vec![Complex::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex::new(0.0, 0.0); acc.len() + 1];
        for (i, &c) in acc.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        acc = next;
    }
    acc.into_iter().map(|c| c.re).collect()
}

/// All roots of a polynomial with nonzero leading coefficient.
///
/// Exact zero roots are split off first (trailing-coefficient test), degrees
/// one and two use closed forms, and higher degrees run Aberth-Ehrlich
/// simultaneous iteration followed by a Newton polish on the full polynomial.
pub(crate) fn roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let zeros = trailing_zeros(coeffs);
    let reduced = &coeffs[..coeffs.len() - zeros];
    let lead = reduced[0];
    let monic: Vec<f64> = reduced.iter().map(|c| c / lead).collect();

    let mut out = vec![Complex::new(0.0, 0.0); zeros];
    match degree(&monic) {
        0 => {}
        1 => out.push(Complex::new(-monic[1], 0.0)),
        2 => out.extend(quadratic(monic[1], monic[2])),
        _ => out.extend(aberth(&monic)),
    }
    out
}

/// Roots of s^2 + b s + c, using the cancellation-free form.
fn quadratic(b: f64, c: f64) -> [Complex<f64>; 2] {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        let q = -0.5 * (b + b.signum() * sq);
        if q == 0.0 {
            return [Complex::new(0.0, 0.0), Complex::new(0.0, 0.0)];
        }
        let r1 = q;
        let r2 = c / q;
        [Complex::new(r1, 0.0), Complex::new(r2, 0.0)]
    } else {
        let re = -0.5 * b;
        let im = 0.5 * (-disc).sqrt();
        [Complex::new(re, im), Complex::new(re, -im)]
    }
}

fn aberth(monic: &[f64]) -> Vec<Complex<f64>> {
    let n = degree(monic);
    let cc: Vec<Complex<f64>> = monic.iter().map(|&c| Complex::new(c, 0.0)).collect();

    // Cauchy upper bound on root magnitude sets the starting circle.
    let radius = 1.0 + monic[1..].iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let mut z: Vec<Complex<f64>> = (0..n)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / n as f64 + 0.4;
            Complex::from_polar(radius * 0.5, angle)
        })
        .collect();

    for _ in 0..500 {
        let mut max_rel = 0.0_f64;
        for i in 0..n {
            let (p, dp) = eval_with_derivative(&cc, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = z[i] - z[j];
                    if d.norm() == 0.0 {
                        Complex::new(0.0, 0.0)
                    } else {
                        Complex::new(1.0, 0.0) / d
                    }
                })
                .sum();
            let w = ratio / (Complex::new(1.0, 0.0) - ratio * repulsion);
            if w.re.is_finite() && w.im.is_finite() {
                z[i] -= w;
                max_rel = max_rel.max(w.norm() / z[i].norm().max(1e-300));
            }
        }
        if max_rel < 1e-15 {
            break;
        }
    }

    for zi in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = eval_with_derivative(&cc, *zi);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            if !(step.re.is_finite() && step.im.is_finite()) {
                break;
            }
            *zi -= step;
        }
    }

    // Snap near-real roots and make conjugate partners exact mirrors.
    let scale = z.iter().fold(0.0_f64, |m, r| m.max(r.norm())).max(1.0);
    for zi in z.iter_mut() {
        if zi.im.abs() <= 1e-12 * scale {
            zi.im = 0.0;
        }
    }
    z
}

pub(crate) fn sort_roots(roots: &mut [Complex<f64>]) {
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

//! Small dense Levenberg-Marquardt with central-difference Jacobians.

use nalgebra::{DMatrix, DVector};

pub(crate) struct LmOptions {
    pub max_iterations: usize,
    /// Relative finite-difference step.
    pub fd_step: f64,
    pub cost_tol: f64,
    pub step_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 300,
            fd_step: 1e-6,
            cost_tol: 1e-10,
            step_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LmResult {
    pub params: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimizes `sum(residuals(p)^2)`. A non-finite residual vector is treated
/// as an infinitely bad point, so trial steps into such regions are refused.
pub(crate) fn minimize<F>(residuals: F, start: &[f64], opts: &LmOptions) -> LmResult
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let np = start.len();
    let mut p = start.to_vec();
    let mut r = residuals(&p);
    let mut cost = cost_of(&r);
    if !cost.is_finite() {
        return LmResult {
            params: p,
            cost,
            iterations: 0,
            converged: false,
        };
    }
    let mut lambda = 1e-3;
    let mut diag_floor = vec![0.0_f64; np];

    for iter in 1..=opts.max_iterations {
        if cost == 0.0 {
            return LmResult {
                params: p,
                cost,
                iterations: iter - 1,
                converged: true,
            };
        }
        let m = r.len();
        let mut jac = DMatrix::zeros(m, np);
        let mut jac_ok = true;
        for j in 0..np {
            let h = opts.fd_step * p[j].abs().max(1e-8);
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[j] += h;
            lo[j] -= h;
            let rh = residuals(&hi);
            let rl = residuals(&lo);
            for i in 0..m {
                let d = (rh[i] - rl[i]) / (2.0 * h);
                jac_ok &= d.is_finite();
                jac[(i, j)] = d;
            }
        }
        if !jac_ok {
            return LmResult {
                params: p,
                cost,
                iterations: iter,
                converged: false,
            };
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * rv;
        for j in 0..np {
            diag_floor[j] = diag_floor[j].max(jtj[(j, j)]);
        }

        // Inner loop: raise damping until a step lowers the cost.
        loop {
            let mut a = jtj.clone();
            for j in 0..np {
                a[(j, j)] += lambda * diag_floor[j].max(1e-300);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        return LmResult {
                            params: p,
                            cost,
                            iterations: iter,
                            converged: false,
                        };
                    }
                    continue;
                }
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let step_rel = step.norm() / DVector::from_column_slice(&p).norm().max(1e-300);
            let rt = residuals(&trial);
            let ct = cost_of(&rt);
            if ct.is_finite() && ct < cost {
                let rel_decrease = (cost - ct) / cost;
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                if rel_decrease < opts.cost_tol || step_rel < opts.step_tol {
                    return LmResult {
                        params: p,
                        cost,
                        iterations: iter,
                        converged: true,
                    };
                }
                break;
            }
            if step_rel < opts.step_tol {
                // No descent left at machine resolution.
                return LmResult {
                    params: p,
                    cost,
                    iterations: iter,
                    converged: true,
                };
            }
            lambda *= 4.0;
            if lambda > 1e20 {
                return LmResult {
                    params: p,
                    cost,
                    iterations: iter,
                    converged: false,
                };
            }
        }
    }
    LmResult {
        params: p,
        cost,
        iterations: opts.max_iterations,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_fit() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|&t| 3.0 * (-0.7 * t).exp()).collect();
        let res = minimize(
            |p| t.iter().zip(&y).map(|(&t, &y)| p[0] * (-p[1] * t).exp() - y).collect(),
            &[1.0, 0.1],
            &LmOptions::default(),
        );
        assert!(res.converged);
        assert!((res.params[0] - 3.0).abs() < 1e-8);
        assert!((res.params[1] - 0.7).abs() < 1e-8);
    }

    #[test]
    fn rosenbrock_residuals() {
        let res = minimize(
            |p| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]],
            &[-1.2, 1.0],
            &LmOptions::default(),
        );
        assert!((res.params[0] - 1.0).abs() < 1e-6, "{res:?}");
        assert!((res.params[1] - 1.0).abs() < 1e-6, "{res:?}");
    }

    #[test]
    fn non_finite_start_is_not_converged() {
        let res = minimize(|_| vec![f64::NAN], &[1.0], &LmOptions::default());
        assert!(!res.converged);
    }
}

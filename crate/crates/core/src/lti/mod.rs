//! Continuous and discrete LTI models for the single-input single-output
//! motor dynamics.
//!
//! Realizations use the controllable canonical (phase-variable) form: for a
//! denominator of degree `n`, state `x1` is the bottom of the integrator
//! chain, `x1' = x2`, ..., `x(n-1)' = xn`, and the input enters the last
//! state. The output is `C x + D u`. State-feedback gains are only meaningful
//! relative to this ordering.

mod expm;
pub(crate) mod poly;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use expm::one_norm;

/// Default sampling period of the mount controller, seconds.
pub const DEFAULT_TS: f64 = 0.010;

/// Rational transfer function `num(s) / den(s)`, coefficients in descending
/// powers of `s`. The denominator is normalized to be monic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TfRepr", into = "TfRepr")]
pub struct TransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TfRepr {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl TryFrom<TfRepr> for TransferFunction {
    type Error = Error;

    fn try_from(r: TfRepr) -> Result<Self> {
        TransferFunction::new(r.num, r.den)
    }
}

impl From<TransferFunction> for TfRepr {
    fn from(tf: TransferFunction) -> Self {
        TfRepr {
            num: tf.num,
            den: tf.den,
        }
    }
}

/// DC gain of a transfer function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DcGain {
    Finite(f64),
    /// Pole at the origin with a nonzero numerator constant term.
    Infinite,
}

impl DcGain {
    pub fn finite(self) -> Option<f64> {
        match self {
            DcGain::Finite(g) => Some(g),
            DcGain::Infinite => None,
        }
    }
}

/// Damping ratio and natural frequency of a second-order denominator
/// `s^2 + 2 zeta wn s + wn^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderCharacter {
    pub zeta: f64,
    pub wn: f64,
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return Err(Error::InvalidModel("empty coefficient list".into()));
        }
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("transfer function coefficients".into()));
        }
        let den = strip_leading_zeros(den);
        let num = strip_leading_zeros(num);
        let lead = den[0];
        if lead == 0.0 {
            return Err(Error::InvalidModel("denominator is identically zero".into()));
        }
        if num.len() > den.len() {
            return Err(Error::Improper {
                num: num.len() - 1,
                den: den.len() - 1,
            });
        }
        Ok(TransferFunction {
            num: num.iter().map(|c| c / lead).collect(),
            den: den.iter().map(|c| c / lead).collect(),
        })
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn order(&self) -> usize {
        poly::degree(&self.den)
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.num.len() < self.den.len() || self.num.iter().all(|&c| c == 0.0)
    }

    /// Controllable canonical realization (see the module docs for the
    /// state ordering).
    pub fn to_state_space(&self) -> StateSpace {
        let n = self.order();
        let a_coef = &self.den[1..]; // a_{n-1}, ..., a_0
        let mut b_num = vec![0.0; n + 1 - self.num.len()];
        b_num.extend_from_slice(&self.num); // b_n, ..., b_0
        let d = b_num[0];

        let mut a = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..n {
            // Last row holds -a_0, -a_1, ..., -a_{n-1}.
            a[(n - 1, j)] = -a_coef[n - 1 - j];
        }
        let mut b = DMatrix::zeros(n, 1);
        if n > 0 {
            b[(n - 1, 0)] = 1.0;
        }
        let mut c = DMatrix::zeros(1, n);
        for j in 0..n {
            let bj = b_num[n - j];
            let aj = a_coef[n - 1 - j];
            c[(0, j)] = bj - aj * d;
        }
        let d = DMatrix::from_element(1, 1, d);
        StateSpace { a, b, c, d }
    }

    pub fn dc_gain(&self) -> Result<DcGain> {
        let n0 = *self.num.last().unwrap();
        let d0 = *self.den.last().unwrap();
        let d_zero = poly::is_negligible(d0, &self.den);
        let n_zero = n0 == 0.0 || poly::is_negligible(n0, &self.num);
        match (n_zero, d_zero) {
            (true, true) => Err(Error::Degenerate(
                "numerator and denominator constant terms are both zero".into(),
            )),
            (false, true) => Ok(DcGain::Infinite),
            (true, false) => Ok(DcGain::Finite(0.0)),
            (false, false) => Ok(DcGain::Finite(n0 / d0)),
        }
    }

    /// Denominator roots, sorted by real part then imaginary part.
    pub fn poles(&self) -> Vec<Complex<f64>> {
        let mut r = poly::roots(&self.den);
        poly::sort_roots(&mut r);
        r
    }

    pub fn second_order_character(&self) -> Result<SecondOrderCharacter> {
        if self.order() != 2 {
            return Err(Error::invalid(format!(
                "second-order character needs denominator degree 2, got {}",
                self.order()
            )));
        }
        let (a1, a0) = (self.den[1], self.den[2]);
        if a0 <= 0.0 {
            return Err(Error::invalid(format!(
                "constant term {a0} gives no real natural frequency"
            )));
        }
        let wn = a0.sqrt();
        Ok(SecondOrderCharacter {
            zeta: a1 / (2.0 * wn),
            wn,
        })
    }

    /// Number of poles at the origin.
    pub fn system_type(&self) -> usize {
        poly::trailing_zeros(&self.den)
    }

    pub fn is_bibo_stable(&self) -> bool {
        self.poles().iter().all(|p| p.re < 0.0)
    }

    /// Multiplies the denominator by `s`, turning a velocity model into the
    /// matching position model.
    pub fn with_integrator(&self) -> TransferFunction {
        let mut den = self.den.clone();
        den.push(0.0);
        TransferFunction {
            num: self.num.clone(),
            den,
        }
    }

    /// Frequency response `G(j w)`.
    pub fn eval_jw(&self, w: f64) -> Complex<f64> {
        let s = Complex::new(0.0, w);
        poly::eval_complex(&self.num, s) / poly::eval_complex(&self.den, s)
    }
}

fn strip_leading_zeros(mut v: Vec<f64>) -> Vec<f64> {
    let first = v.iter().position(|&c| c != 0.0).unwrap_or(v.len() - 1);
    v.drain(..first);
    v
}

impl std::fmt::Display for TransferFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}) / ({})", fmt_poly(&self.num), fmt_poly(&self.den))
    }
}

fn fmt_poly(c: &[f64]) -> String {
    let n = poly::degree(c);
    let terms: Vec<String> = c
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, v)| match n - i {
            0 => format!("{v}"),
            1 => format!("{v} s"),
            p => format!("{v} s^{p}"),
        })
        .collect();
    if terms.is_empty() {
        "0".into()
    } else {
        terms.join(" + ")
    }
}

/// Continuous-time state-space model `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        check_dims(&a, &b, &c, &d)?;
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("matrix {name}")));
            }
        }
        Ok(StateSpace { a, b, c, d })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_siso(&self) -> bool {
        self.b.ncols() == 1 && self.c.nrows() == 1
    }

    /// Zero-order-hold discretization. `Ad` and `Bd` come from one
    /// exponential of the augmented block `[[A, B], [0, 0]] * ts`.
    pub fn discretize_zoh(&self, ts: f64) -> Result<DiscreteStateSpace> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::invalid(format!("sampling period must be positive, got {ts}")));
        }
        let n = self.n_states();
        let m = self.b.ncols();
        let mut aug = DMatrix::zeros(n + m, n + m);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&self.a * ts));
        aug.view_mut((0, n), (n, m)).copy_from(&(&self.b * ts));
        let e = expm::expm(&aug);
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix exponential".into()));
        }
        Ok(DiscreteStateSpace {
            ad: e.view((0, 0), (n, n)).into_owned(),
            bd: e.view((0, n), (n, m)).into_owned(),
            c: self.c.clone(),
            d: self.d.clone(),
            ts,
        })
    }
}

fn check_dims(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("A is {}x{}, not square", n, a.ncols())));
    }
    if b.nrows() != n {
        return Err(Error::Dimension(format!("B has {} rows, expected {n}", b.nrows())));
    }
    if c.ncols() != n {
        return Err(Error::Dimension(format!("C has {} columns, expected {n}", c.ncols())));
    }
    if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "D is {}x{}, expected {}x{}",
            d.nrows(),
            d.ncols(),
            c.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Discrete-time model `x[k+1] = Ad x[k] + Bd u[k]`, `y[k] = C x[k] + D u[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStateSpace {
    ad: DMatrix<f64>,
    bd: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    ts: f64,
}

/// Output and state history of [`DiscreteStateSpace::simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub y: Vec<f64>,
    /// `x[k]` is the state at sample `k`, before the update driven by `u[k]`.
    pub x: Vec<Vec<f64>>,
}

impl DiscreteStateSpace {
    pub fn new(
        ad: DMatrix<f64>,
        bd: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        ts: f64,
    ) -> Result<Self> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::invalid(format!("sampling period must be positive, got {ts}")));
        }
        check_dims(&ad, &bd, &c, &d)?;
        Ok(DiscreteStateSpace { ad, bd, c, d, ts })
    }

    pub fn ad(&self) -> &DMatrix<f64> {
        &self.ad
    }
    pub fn bd(&self) -> &DMatrix<f64> {
        &self.bd
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn ts(&self) -> f64 {
        self.ts
    }
    pub fn n_states(&self) -> usize {
        self.ad.nrows()
    }

    fn check_siso(&self) -> Result<()> {
        if self.bd.ncols() != 1 || self.c.nrows() != 1 {
            return Err(Error::Dimension("simulation supports SISO models only".into()));
        }
        Ok(())
    }

    /// Output `C x + D u` for a SISO model.
    pub(crate) fn output(&self, x: &[f64], u: f64) -> f64 {
        let mut y = self.d[(0, 0)] * u;
        for (j, xj) in x.iter().enumerate() {
            y += self.c[(0, j)] * xj;
        }
        y
    }

    /// `next = Ad x + Bd u` for a SISO model.
    pub(crate) fn advance(&self, x: &[f64], u: f64, next: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let mut acc = self.bd[(i, 0)] * u;
            for j in 0..n {
                acc += self.ad[(i, j)] * x[j];
            }
            next[i] = acc;
        }
    }

    pub fn simulate(&self, u: &[f64], x0: &[f64]) -> Result<Simulation> {
        self.check_siso()?;
        if u.is_empty() {
            return Err(Error::invalid("input sequence is empty"));
        }
        if x0.len() != self.n_states() {
            return Err(Error::Dimension(format!(
                "initial state has length {}, model has {} states",
                x0.len(),
                self.n_states()
            )));
        }
        let n = self.n_states();
        let mut x = x0.to_vec();
        let mut next = vec![0.0; n];
        let mut ys = Vec::with_capacity(u.len());
        let mut xs = Vec::with_capacity(u.len());
        for &uk in u {
            ys.push(self.output(&x, uk));
            xs.push(x.clone());
            self.advance(&x, uk, &mut next);
            std::mem::swap(&mut x, &mut next);
        }
        Ok(Simulation { y: ys, x: xs })
    }

    /// Output sequence only, from the zero state.
    pub(crate) fn simulate_output(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n_states();
        let mut x = vec![0.0; n];
        let mut next = vec![0.0; n];
        u.iter()
            .map(|&uk| {
                let y = self.output(&x, uk);
                self.advance(&x, uk, &mut next);
                std::mem::swap(&mut x, &mut next);
                y
            })
            .collect()
    }
}

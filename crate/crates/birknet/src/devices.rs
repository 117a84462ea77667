//! Constitutive device models and the per-branch device table.
//!
//! A model is a scalar function: for a current-controlled resistor it maps
//! current to voltage, for a voltage-controlled one voltage to current, for an
//! inductor current to incremental inductance, for a capacitor charge to
//! voltage (elastance form). Everything downstream only needs `eval`,
//! `eval_deriv`, stored energy, and a safeguarded inverse.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for `invert`: |f(x) - y| <= INVERT_TOL * max(1, |y|).
pub const INVERT_TOL: f64 = 1e-12;
/// Absolute tolerance for the adaptive Simpson energy quadrature.
pub const QUADRATURE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ConstitutiveModel {
    /// f(x) = value * x
    Linear(f64),
    /// f(x) = c0 + c1 x + ... + cK x^K
    Poly(Vec<f64>),
    /// f(x) = a * tanh(b * x)
    Tanh { a: f64, b: f64 },
}

impl ConstitutiveModel {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ConstitutiveModel::Linear(v) => v * x,
            ConstitutiveModel::Poly(c) => c.iter().rev().fold(0.0, |acc, ck| acc * x + ck),
            ConstitutiveModel::Tanh { a, b } => a * (b * x).tanh(),
        }
    }

    pub fn eval_deriv(&self, x: f64) -> f64 {
        match self {
            ConstitutiveModel::Linear(v) => *v,
            ConstitutiveModel::Poly(c) => {
                // Horner over the derivative coefficients k*c_k, k >= 1.
                let mut acc = 0.0;
                for k in (1..c.len()).rev() {
                    acc = acc * x + k as f64 * c[k];
                }
                acc
            }
            ConstitutiveModel::Tanh { a, b } => {
                let s = (b * x).cosh();
                a * b / (s * s)
            }
        }
    }

    /// The inductance function L(i). A `Linear` inductor is the constant-
    /// inductance device (L(i) = value, so W_L = value*i^2/2); `Poly` and
    /// `Tanh` give the current-dependent inductance pointwise.
    pub fn inductance(&self, i: f64) -> f64 {
        match self {
            ConstitutiveModel::Linear(v) => *v,
            other => other.eval(i),
        }
    }

    /// Strict-increase sampling on [lo, hi]; used to vet voltage-controlled
    /// resistor models before `invert` is relied on.
    pub fn is_strictly_increasing_on(&self, lo: f64, hi: f64, samples: usize) -> bool {
        let n = samples.max(2);
        let mut prev = self.eval(lo);
        for i in 1..n {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let y = self.eval(x);
            if y <= prev {
                return false;
            }
            prev = y;
        }
        true
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("model is not monotone on the search interval (near x = {near})")]
    NotMonotone { near: f64 },
    #[error("no bracket for target {target} (model may saturate below it)")]
    NoBracket { target: f64 },
    #[error("inversion failed to converge for target {target}")]
    ConvergenceFailed { target: f64 },
}

/// Which storage law `stored_energy` integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StorageKind {
    /// Energy of an inductor: integral of L(s)*s ds from 0 to x.
    Inductor,
    /// Energy of a capacitor in elastance form: integral of C(s) ds from 0 to x.
    Capacitor,
}

/// Stored energy of one storage element. Closed form for Linear and Poly;
/// adaptive Simpson quadrature for Tanh.
pub fn stored_energy(kind: StorageKind, model: &ConstitutiveModel, x: f64) -> f64 {
    match (kind, model) {
        (StorageKind::Inductor, ConstitutiveModel::Linear(v)) => v * x * x / 2.0,
        (StorageKind::Inductor, ConstitutiveModel::Poly(c)) => {
            let mut acc = 0.0;
            for (k, ck) in c.iter().enumerate() {
                acc += ck * x.powi(k as i32 + 2) / (k as f64 + 2.0);
            }
            acc
        }
        (StorageKind::Capacitor, ConstitutiveModel::Linear(v)) => v * x * x / 2.0,
        (StorageKind::Capacitor, ConstitutiveModel::Poly(c)) => {
            let mut acc = 0.0;
            for (k, ck) in c.iter().enumerate() {
                acc += ck * x.powi(k as i32 + 1) / (k as f64 + 1.0);
            }
            acc
        }
        (StorageKind::Inductor, m @ ConstitutiveModel::Tanh { .. }) => {
            adaptive_simpson(&|s| m.inductance(s) * s, 0.0, x, QUADRATURE_TOL)
        }
        (StorageKind::Capacitor, m @ ConstitutiveModel::Tanh { .. }) => {
            adaptive_simpson(&|s| m.eval(s), 0.0, x, QUADRATURE_TOL)
        }
    }
}

fn simpson_rule(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

fn simpson_recurse(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (left, lm, flm) = simpson_rule(f, a, fa, m, fm);
    let (right, rm, frm) = simpson_rule(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
        + simpson_recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson_rule(f, a, fa, b, fb);
    simpson_recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PassivityReport {
    pub passed: bool,
    /// First grid point (scanning left to right) where f(x)*x <= 0, with the product.
    pub first_violation: Option<(f64, f64)>,
}

/// Check f(x)*x > 0 on a sign-symmetric grid over [lo, hi] excluding 0.
/// `samples` counts grid points per side.
pub fn passivity_check(model: &ConstitutiveModel, lo: f64, hi: f64, samples: usize) -> PassivityReport {
    assert!(lo < 0.0 && 0.0 < hi, "passivity grid must straddle 0");
    let half = samples.max(1);
    let mut grid = Vec::with_capacity(2 * half);
    for i in 1..=half {
        grid.push(lo * i as f64 / half as f64);
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for i in 1..=half {
        grid.push(hi * i as f64 / half as f64);
    }
    for &x in &grid {
        let p = model.eval(x) * x;
        if p <= 0.0 {
            return PassivityReport { passed: false, first_violation: Some((x, p)) };
        }
    }
    PassivityReport { passed: true, first_violation: None }
}

/// Solve eval(x) = y by safeguarded Newton with geometric bracket growth and
/// bisection fallback. `guess` seeds the bracket search; the model must be
/// strictly monotone on the interval actually searched.
pub fn invert(model: &ConstitutiveModel, y: f64, guess: f64) -> Result<f64, DeviceError> {
    let tol = INVERT_TOL * y.abs().max(1.0);
    let g = |x: f64| model.eval(x) - y;
    if g(guess).abs() <= tol {
        return Ok(guess);
    }
    // Grow a bracket [lo, hi] with g(lo) and g(hi) of opposite sign.
    let mut radius = 0.5 * guess.abs().max(1.0);
    let (mut lo, mut hi) = (guess, guess);
    let (mut glo, mut ghi) = (g(lo), g(hi));
    let mut bracketed = false;
    for _ in 0..80 {
        lo = guess - radius;
        hi = guess + radius;
        glo = g(lo);
        ghi = g(hi);
        if glo == 0.0 {
            return Ok(lo);
        }
        if ghi == 0.0 {
            return Ok(hi);
        }
        if glo.signum() != ghi.signum() {
            bracketed = true;
            break;
        }
        radius *= 2.0;
    }
    if !bracketed {
        return Err(DeviceError::NoBracket { target: y });
    }
    let increasing = ghi > glo;
    let mut x = guess.clamp(lo.min(hi), lo.max(hi));
    for _ in 0..200 {
        let gx = g(x);
        if gx.abs() <= tol {
            return Ok(x);
        }
        // Monotonicity sentinel: the residual at an interior point must lie
        // between the bracket residuals for a monotone function.
        if gx < glo.min(ghi) - tol || gx > glo.max(ghi) + tol {
            return Err(DeviceError::NotMonotone { near: x });
        }
        // Shrink the bracket around the sign change.
        if (gx > 0.0) == (increasing) {
            hi = x;
            ghi = gx;
        } else {
            lo = x;
            glo = gx;
        }
        let d = model.eval_deriv(x);
        let newton = if d != 0.0 { x - gx / d } else { f64::NAN };
        let (a, b) = (lo.min(hi), lo.max(hi));
        x = if newton.is_finite() && newton > a && newton < b {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo).abs() <= f64::EPSILON * x.abs().max(1.0) {
            let gx = g(x);
            if gx.abs() <= tol.max(1e-9 * y.abs().max(1.0)) {
                return Ok(x);
            }
            return Err(DeviceError::ConvergenceFailed { target: y });
        }
    }
    Err(DeviceError::ConvergenceFailed { target: y })
}

/// How a resistor is driven.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResistorControl {
    /// v = R(i); netlist kind `R`.
    Current,
    /// i = Rv(v), inverted at evaluation time; netlist kind `RV`.
    Voltage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Resistor {
    pub id: String,
    pub model: ConstitutiveModel,
    pub control: ResistorControl,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Storage {
    pub id: String,
    pub model: ConstitutiveModel,
}

/// Devices in canonical branch order: resistors first, then inductors, then
/// capacitors. Branch l is a resistor for l < r, an inductor for r <= l < r+k,
/// a capacitor for r+k <= l < r+k+p.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DeviceSet {
    pub resistors: Vec<Resistor>,
    pub inductors: Vec<Storage>,
    pub capacitors: Vec<Storage>,
}

impl DeviceSet {
    pub fn r(&self) -> usize {
        self.resistors.len()
    }

    pub fn k(&self) -> usize {
        self.inductors.len()
    }

    pub fn p(&self) -> usize {
        self.capacitors.len()
    }

    pub fn b(&self) -> usize {
        self.r() + self.k() + self.p()
    }

    /// Netlist id of canonical branch l.
    pub fn id_of(&self, l: usize) -> &str {
        let r = self.r();
        let k = self.k();
        if l < r {
            &self.resistors[l].id
        } else if l < r + k {
            &self.inductors[l - r].id
        } else {
            &self.capacitors[l - r - k].id
        }
    }
}

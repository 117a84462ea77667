//! The Birkhoffian vector field, fixed-step integration, energy, and the
//! dissipation certificate.
//!
//! The implicit second-order system Q_j(q, q', q'') = 0 is solved for q'' as
//! F(q') q'' = -(H(q') + G(q)) by dense LU; the flow is integrated by
//! classical fourth-order Runge-Kutta on (q, q'). Along a trajectory the
//! energy identity dE/dt = -P_diss is checked by a centered five-point
//! finite-difference stencil, P_diss is checked nonnegative, and E is checked
//! nonincreasing (constant for resistor-free circuits).

use thiserror::Error;

use crate::birkhoff::EvalError;
use crate::linalg;
use crate::reduction::AnySystem;

/// Relative residual bound for the acceleration solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-12;
/// Energy identity |dE/dt + P_diss| tolerance: max(abs, rel * |P_diss|).
pub const IDENTITY_ABS_TOL: f64 = 1e-6;
pub const IDENTITY_REL_TOL: f64 = 1e-4;
/// P_diss must not dip below -this.
pub const P_DISS_TOL: f64 = 1e-12;
/// Allowed per-step energy increase for dissipative circuits.
pub const ENERGY_STEP_TOL: f64 = 1e-9;
/// Allowed total energy drift for resistor-free circuits.
pub const CONSERVATIVE_DRIFT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("mass matrix is singular at t = {t}: the circuit still has inductor-free loops; run `reduce` first ({detail})")]
    SingularMass { t: f64, detail: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("state dimension {got} does not match the system's {expected} coordinates")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("step size must be positive, got {dt}")]
    BadStep { dt: f64 },
}

/// A point of the (possibly reduced) tangent bundle at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

/// Uniformly sampled integral curve with per-sample energy and dissipation.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub qdot: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub p_diss: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> SimState {
        SimState { t: self.times[i], q: self.q[i].clone(), qdot: self.qdot[i].clone() }
    }
}

/// Accelerations of the Birkhoffian vector field: solve F(q') q'' = -(H + G).
pub fn vector_field(sys: &AnySystem, q: &[f64], qdot: &[f64]) -> Result<Vec<f64>, SimError> {
    vector_field_at(sys, q, qdot, 0.0)
}

fn vector_field_at(sys: &AnySystem, q: &[f64], qdot: &[f64], t: f64) -> Result<Vec<f64>, SimError> {
    let m = sys.dim();
    if q.len() != m || qdot.len() != m {
        return Err(SimError::DimensionMismatch { expected: m, got: q.len().min(qdot.len()) });
    }
    let mass = sys.mass_matrix(qdot)?;
    let h = sys.resistive_force(qdot)?;
    let g = sys.capacitive_force(q)?;
    let rhs: Vec<f64> = h.iter().zip(&g).map(|(a, b)| -(a + b)).collect();
    let qddot = linalg::lu_solve(&mass, &rhs).ok_or_else(|| SimError::SingularMass {
        t,
        detail: "zero pivot in the LU factorization".to_string(),
    })?;
    // guard against an ill-conditioned (numerically singular) mass matrix
    let residual: f64 = (0..m)
        .map(|j| {
            let mj: f64 = mass[j].iter().zip(&qddot).map(|(a, x)| a * x).sum();
            (mj - rhs[j]).abs()
        })
        .fold(0.0, f64::max);
    let scale = linalg::norm_inf(&rhs).max(1.0);
    if residual > SOLVE_RESIDUAL_TOL * scale {
        return Err(SimError::SingularMass {
            t,
            detail: format!("acceleration residual {residual:.3e} exceeds {SOLVE_RESIDUAL_TOL:.0e} relative"),
        });
    }
    Ok(qddot)
}

/// Total stored energy at a state.
pub fn energy(sys: &AnySystem, q: &[f64], qdot: &[f64]) -> Result<f64, EvalError> {
    sys.energy(q, qdot)
}

/// Instantaneous dissipated power at a state.
pub fn p_diss(sys: &AnySystem, qdot: &[f64]) -> Result<f64, EvalError> {
    sys.resistor_power(qdot)
}

/// Classical fixed-step RK4 on the first-order form of the implicit system.
pub fn integrate(sys: &AnySystem, initial: &SimState, dt: f64, steps: usize) -> Result<Trajectory, SimError> {
    if !(dt > 0.0) {
        return Err(SimError::BadStep { dt });
    }
    let m = sys.dim();
    if initial.q.len() != m || initial.qdot.len() != m {
        return Err(SimError::DimensionMismatch {
            expected: m,
            got: initial.q.len().min(initial.qdot.len()),
        });
    }
    let mut q = initial.q.clone();
    let mut qdot = initial.qdot.clone();
    let mut traj = Trajectory {
        dt,
        times: Vec::with_capacity(steps + 1),
        q: Vec::with_capacity(steps + 1),
        qdot: Vec::with_capacity(steps + 1),
        energy: Vec::with_capacity(steps + 1),
        p_diss: Vec::with_capacity(steps + 1),
    };
    let record = |traj: &mut Trajectory, t: f64, q: &[f64], qdot: &[f64]| -> Result<(), SimError> {
        traj.times.push(t);
        traj.q.push(q.to_vec());
        traj.qdot.push(qdot.to_vec());
        traj.energy.push(sys.energy(q, qdot)?);
        traj.p_diss.push(sys.resistor_power(qdot)?);
        Ok(())
    };
    record(&mut traj, initial.t, &q, &qdot)?;
    for i in 0..steps {
        let t = initial.t + i as f64 * dt;
        let axpy = |x: &[f64], s: f64, y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(a, b)| a + s * b).collect()
        };
        let k1v = vector_field_at(sys, &q, &qdot, t)?;
        let k1q = qdot.clone();
        let q2 = axpy(&q, 0.5 * dt, &k1q);
        let v2 = axpy(&qdot, 0.5 * dt, &k1v);
        let k2v = vector_field_at(sys, &q2, &v2, t + 0.5 * dt)?;
        let k2q = v2.clone();
        let q3 = axpy(&q, 0.5 * dt, &k2q);
        let v3 = axpy(&qdot, 0.5 * dt, &k2v);
        let k3v = vector_field_at(sys, &q3, &v3, t + 0.5 * dt)?;
        let k3q = v3.clone();
        let q4 = axpy(&q, dt, &k3q);
        let v4 = axpy(&qdot, dt, &k3v);
        let k4v = vector_field_at(sys, &q4, &v4, t + dt)?;
        let k4q = v4.clone();
        for j in 0..m {
            q[j] += dt / 6.0 * (k1q[j] + 2.0 * k2q[j] + 2.0 * k3q[j] + k4q[j]);
            qdot[j] += dt / 6.0 * (k1v[j] + 2.0 * k2v[j] + 2.0 * k3v[j] + k4v[j]);
        }
        record(&mut traj, initial.t + (i + 1) as f64 * dt, &q, &qdot)?;
    }
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertCheck {
    /// |dE/dt + P_diss| within tolerance (trajectory form of the energy identity).
    EnergyIdentity,
    /// P_diss >= -1e-12 everywhere.
    DissipationPositivity,
    /// E nonincreasing step to step (dissipative circuits).
    EnergyMonotonicity,
    /// E constant over the run (resistor-free circuits).
    ConservativeDrift,
}

#[derive(Clone, Debug)]
pub struct CertViolation {
    pub t: f64,
    pub check: CertCheck,
    pub detail: String,
}

/// Result of checking one trajectory against the dissipation identity.
#[derive(Clone, Debug)]
pub struct CertificateReport {
    /// True when the circuit has no resistors (checked as conservative).
    pub conservative: bool,
    /// max over interior samples of |dE/dt + P_diss|.
    pub max_identity_residual: f64,
    pub min_p_diss: f64,
    /// max over steps of E_{i+1} - E_i.
    pub max_energy_step_increase: f64,
    /// max over samples of |E - E_0| (reported for conservative circuits).
    pub max_energy_drift: f64,
    pub violations: Vec<CertViolation>,
    pub passed: bool,
}

/// Check a trajectory for dissipativeness: the energy identity in trajectory
/// form, positivity of the dissipated power, and monotone (or constant,
/// when resistor-free) energy.
pub fn dissipation_certificate(sys: &AnySystem, traj: &Trajectory) -> CertificateReport {
    let conservative = sys.base().devices.r() == 0;
    let n = traj.len();
    let dt = traj.dt;
    let mut violations = Vec::new();
    let mut max_identity_residual = 0.0f64;

    // centered 5-point first derivative: (f[-2] - 8 f[-1] + 8 f[1] - f[2]) / 12h
    for i in 2..n.saturating_sub(2) {
        let dedt = (traj.energy[i - 2] - 8.0 * traj.energy[i - 1] + 8.0 * traj.energy[i + 1]
            - traj.energy[i + 2])
            / (12.0 * dt);
        let p = traj.p_diss[i];
        let residual = (dedt + p).abs();
        max_identity_residual = max_identity_residual.max(residual);
        let tol = IDENTITY_ABS_TOL.max(IDENTITY_REL_TOL * p.abs());
        if residual > tol {
            violations.push(CertViolation {
                t: traj.times[i],
                check: CertCheck::EnergyIdentity,
                detail: format!("|dE/dt + P_diss| = {residual:.3e} > {tol:.3e}"),
            });
        }
    }

    let mut min_p_diss = f64::INFINITY;
    for i in 0..n {
        min_p_diss = min_p_diss.min(traj.p_diss[i]);
        if traj.p_diss[i] < -P_DISS_TOL {
            violations.push(CertViolation {
                t: traj.times[i],
                check: CertCheck::DissipationPositivity,
                detail: format!("P_diss = {:.3e} < -{P_DISS_TOL:.0e}", traj.p_diss[i]),
            });
        }
    }
    if n == 0 {
        min_p_diss = 0.0;
    }

    let mut max_energy_step_increase = f64::NEG_INFINITY;
    let mut max_energy_drift = 0.0f64;
    for i in 0..n {
        max_energy_drift = max_energy_drift.max((traj.energy[i] - traj.energy[0]).abs());
        if i + 1 < n {
            let inc = traj.energy[i + 1] - traj.energy[i];
            max_energy_step_increase = max_energy_step_increase.max(inc);
            if !conservative && inc > ENERGY_STEP_TOL {
                violations.push(CertViolation {
                    t: traj.times[i + 1],
                    check: CertCheck::EnergyMonotonicity,
                    detail: format!("energy rose by {inc:.3e} in one step"),
                });
            }
        }
    }
    if n < 2 {
        max_energy_step_increase = 0.0;
    }
    if conservative && max_energy_drift > CONSERVATIVE_DRIFT_TOL {
        violations.push(CertViolation {
            t: traj.times[n - 1],
            check: CertCheck::ConservativeDrift,
            detail: format!("energy drifted by {max_energy_drift:.3e} over the run"),
        });
    }

    let passed = violations.is_empty();
    CertificateReport {
        conservative,
        max_identity_residual,
        min_p_diss,
        max_energy_step_increase,
        max_energy_drift,
        violations,
        passed,
    }
}

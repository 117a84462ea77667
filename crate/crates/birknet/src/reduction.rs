//! Regularization of structurally singular systems: capacitor-loop reduction,
//! resistor-loop reduction (linear and nonlinear), and series-inductor
//! insertion.
//!
//! A reduction drops one chart coordinate whose column of N touches only
//! capacitor rows (a holonomic constraint G_drop(q) = 0) or only resistor rows
//! (a velocity constraint H_drop(q') = 0). The dropped quantity is recovered
//! pointwise — the capacitor charge q_drop = f(q_rest), the resistor-loop
//! velocity q'_drop = g (explicit, linear case) or h (Newton, nonlinear case).
//! Insertion instead extends the circuit: a new node splits the selected
//! branch of the chosen coordinate and a small series inductor fills the gap,
//! giving that loop an inductive term without changing the loop count.
//!
//! Reductions nest: each level evaluates the inner system at the lifted point
//! and discards the dropped row/column. Newton solves are warm-started from a
//! per-instance cache, so a single instance must not be shared across threads
//! (clone per thread instead).

use std::cell::Cell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::birkhoff::{regularity, BirkhoffSystem, EvalError, RegularityReport};
use crate::coordinates::build_chart;
use crate::devices::{passivity_check, ConstitutiveModel, ResistorControl, Storage};
use crate::exact::{IntMat, Rat, RatMat};
use crate::linalg;
use crate::netlist::{PASSIVITY_RANGE, PASSIVITY_SAMPLES};
use crate::topology::{incidence_matrix, verify_kirchhoff_structure, CircuitGraph, TopologyMatrices};
use num_traits::Zero;

/// Residual tolerance for the implicit constraint solves.
pub const CONSTRAINT_TOL: f64 = 1e-12;
/// Default distance between consecutive Newton solutions that is reported as
/// a possible branch jump of the implicit function.
pub const DEFAULT_JUMP_DISTANCE: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReduceError {
    #[error("coordinate index {index} out of range: system has {m} coordinates")]
    BadCoordinate { index: usize, m: usize },
    #[error("no coordinate selects branch '{id}'")]
    NoSuchCoordinate { id: String },
    #[error("loop of coordinate '{coordinate}' is not a pure capacitor loop: contains {offending}")]
    NotACapacitorLoop { coordinate: String, offending: String },
    #[error("loop of coordinate '{coordinate}' is not a pure resistor loop: contains {offending}")]
    NotAResistorLoop { coordinate: String, offending: String },
    #[error("resistor loop of coordinate '{coordinate}' is not linear current-controlled: {offending}")]
    NotALinearResistorLoop { coordinate: String, offending: String },
    #[error("resistor '{branch}' in the loop of coordinate '{coordinate}' has non-positive resistance")]
    NonPositiveResistance { coordinate: String, branch: String },
    #[error("resistor '{branch}' in the loop of coordinate '{coordinate}' fails the passivity screen")]
    NotPassive { coordinate: String, branch: String },
    #[error("no inductor-free loop through coordinate '{coordinate}'; insertion would not regularize")]
    LoopHasInductor { coordinate: String },
    #[error("inserted inductance must be positive on the working range: {detail}")]
    NonPositiveInductance { detail: String },
    #[error("internal: rebuilding the chart after insertion failed: {0}")]
    ChartRebuild(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReductionKind {
    CapLoop,
    ResLoopLinear,
    ResLoopNonlinear,
}

/// One reduction level over an inner system.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    inner: Box<AnySystem>,
    kind: ReductionKind,
    /// Dropped coordinate, as an index into the inner system's coordinates.
    drop: usize,
    /// Netlist id of the dropped coordinate's selected branch.
    label: String,
    /// Explicit elimination coefficients (ResLoopLinear): q'_drop = lin . q'_rest.
    lin: Option<Vec<f64>>,
    jump_distance: f64,
    cache: Cell<f64>,
    cache_valid: Cell<bool>,
    jumps: Cell<u64>,
}

/// A base system or any stack of reductions over one.
#[derive(Clone, Debug)]
pub enum AnySystem {
    Base(BirkhoffSystem),
    Reduced(ReducedSystem),
}

impl From<ReducedSystem> for AnySystem {
    fn from(rs: ReducedSystem) -> Self {
        AnySystem::Reduced(rs)
    }
}

impl AnySystem {
    /// The underlying unreduced system.
    pub fn base(&self) -> &BirkhoffSystem {
        match self {
            AnySystem::Base(b) => b,
            AnySystem::Reduced(rs) => rs.inner.base(),
        }
    }

    /// Degrees of freedom at this level.
    pub fn dim(&self) -> usize {
        match self {
            AnySystem::Base(b) => b.m(),
            AnySystem::Reduced(rs) => rs.inner.dim() - 1,
        }
    }

    /// Base coordinate indices still present, in order.
    pub fn keep(&self) -> Vec<usize> {
        match self {
            AnySystem::Base(b) => (0..b.m()).collect(),
            AnySystem::Reduced(rs) => {
                let mut keep = rs.inner.keep();
                keep.remove(rs.drop);
                keep
            }
        }
    }

    /// Columns of the base chart matrix N for the surviving coordinates.
    pub fn effective_n(&self) -> RatMat {
        self.base().chart.n.select_columns(&self.keep())
    }

    /// Netlist id of the charge selected as coordinate j at this level.
    pub fn coordinate_id(&self, j: usize) -> &str {
        let jb = self.keep()[j];
        self.base().coordinate_id(jb)
    }

    pub fn coordinate_ids(&self) -> Vec<String> {
        (0..self.dim()).map(|j| self.coordinate_id(j).to_string()).collect()
    }

    /// Index of the coordinate selecting branch `id`, if it survives.
    pub fn coordinate_index(&self, id: &str) -> Option<usize> {
        (0..self.dim()).find(|&j| self.coordinate_id(j) == id)
    }

    /// Total branch jumps reported by the Newton solvers in this chain.
    pub fn jumps(&self) -> u64 {
        match self {
            AnySystem::Base(_) => 0,
            AnySystem::Reduced(rs) => rs.jumps.get() + rs.inner.jumps(),
        }
    }

    /// Set the jump-report distance on every reduction level.
    pub fn set_jump_distance(&mut self, d: f64) {
        if let AnySystem::Reduced(rs) = self {
            rs.jump_distance = d;
            rs.inner.set_jump_distance(d);
        }
    }

    pub fn mass_matrix(&self, qdot: &[f64]) -> Result<Vec<Vec<f64>>, EvalError> {
        match self {
            AnySystem::Base(b) => Ok(b.mass_matrix(qdot)),
            AnySystem::Reduced(rs) => {
                let qd = rs.lift_qdot(qdot)?;
                let inner = rs.inner.mass_matrix(&qd)?;
                Ok(drop_row_col(&inner, rs.drop))
            }
        }
    }

    pub fn resistive_force(&self, qdot: &[f64]) -> Result<Vec<f64>, EvalError> {
        match self {
            AnySystem::Base(b) => b.resistive_force(qdot),
            AnySystem::Reduced(rs) => {
                let qd = rs.lift_qdot(qdot)?;
                let mut h = rs.inner.resistive_force(&qd)?;
                h.remove(rs.drop);
                Ok(h)
            }
        }
    }

    pub fn capacitive_force(&self, q: &[f64]) -> Result<Vec<f64>, EvalError> {
        match self {
            AnySystem::Base(b) => Ok(b.capacitive_force(q)),
            AnySystem::Reduced(rs) => {
                let qi = rs.lift_q(q)?;
                let mut g = rs.inner.capacitive_force(&qi)?;
                g.remove(rs.drop);
                Ok(g)
            }
        }
    }

    /// Components of the (possibly reduced) one-form at (q, q', q'').
    pub fn components(&self, q: &[f64], qdot: &[f64], qddot: &[f64]) -> Result<Vec<f64>, EvalError> {
        match self {
            AnySystem::Base(b) => b.components(q, qdot, qddot),
            AnySystem::Reduced(rs) => {
                let qi = rs.lift_q(q)?;
                let qdi = rs.lift_qdot(qdot)?;
                // the dropped column of the inner mass matrix is zero on every
                // loop this level may drop, so the inserted acceleration value
                // never contributes
                let qddi = insert_at(qddot, rs.drop, 0.0);
                let mut out = rs.inner.components(&qi, &qdi, &qddi)?;
                out.remove(rs.drop);
                Ok(out)
            }
        }
    }

    /// Total stored field energy at a reduced state.
    pub fn energy(&self, q: &[f64], qdot: &[f64]) -> Result<f64, EvalError> {
        match self {
            AnySystem::Base(b) => Ok(b.energy(q, qdot)),
            AnySystem::Reduced(rs) => {
                let qi = rs.lift_q(q)?;
                let qdi = rs.lift_qdot(qdot)?;
                rs.inner.energy(&qi, &qdi)
            }
        }
    }

    /// Instantaneous dissipated power at a reduced state.
    pub fn resistor_power(&self, qdot: &[f64]) -> Result<f64, EvalError> {
        match self {
            AnySystem::Base(b) => b.resistor_power(qdot),
            AnySystem::Reduced(rs) => {
                let qdi = rs.lift_qdot(qdot)?;
                rs.inner.resistor_power(&qdi)
            }
        }
    }

    /// d H_j / d q'_j at this level (for the non-conservativeness witness).
    pub fn resistive_self_coupling(&self, qdot: &[f64], j: usize) -> Result<f64, EvalError> {
        match self {
            AnySystem::Base(b) => b.resistive_self_coupling(qdot, j),
            AnySystem::Reduced(_) => {
                // finite difference of the reduced H_j, which already folds in
                // the eliminated loop velocity
                let scale = 1e-6 * qdot[j].abs().max(1.0);
                let mut qp = qdot.to_vec();
                qp[j] += scale;
                let mut qm = qdot.to_vec();
                qm[j] -= scale;
                let hp = self.resistive_force(&qp)?;
                let hm = self.resistive_force(&qm)?;
                Ok((hp[j] - hm[j]) / (2.0 * scale))
            }
        }
    }

    /// Lift reduced coordinates to the base chart, filling dropped charges
    /// with f(q) (capacitor loops) or 0 (resistor loops, where the charge is
    /// immaterial: its column has no capacitor rows).
    pub fn lift_q(&self, q: &[f64]) -> Result<Vec<f64>, EvalError> {
        match self {
            AnySystem::Base(_) => Ok(q.to_vec()),
            AnySystem::Reduced(rs) => rs.inner.lift_q(&rs.lift_q(q)?),
        }
    }

    /// Lift reduced velocities to the base chart, filling dropped velocities
    /// with g/h (resistor loops) or 0 (capacitor loops, where the velocity is
    /// immaterial: its column has no inductor or resistor rows).
    pub fn lift_qdot(&self, qdot: &[f64]) -> Result<Vec<f64>, EvalError> {
        match self {
            AnySystem::Base(_) => Ok(qdot.to_vec()),
            AnySystem::Reduced(rs) => rs.inner.lift_qdot(&rs.lift_qdot(qdot)?),
        }
    }

    /// Lift a full state to the base chart. Unlike `lift_qdot`, dropped
    /// capacitor-loop velocities are reconstructed by differentiating the
    /// implicit constraint along the state's direction of motion, so the
    /// lifted state is a consistent point of the base tangent bundle.
    pub fn lift_state(&self, q: &[f64], qdot: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
        match self {
            AnySystem::Base(_) => Ok((q.to_vec(), qdot.to_vec())),
            AnySystem::Reduced(rs) => {
                let (y, ydot) = match rs.kind {
                    ReductionKind::CapLoop => {
                        let y = rs.solve_drop_charge(q)?;
                        let speed = linalg::norm_inf(qdot);
                        let ydot = if speed == 0.0 {
                            0.0
                        } else {
                            // directional derivative of f along the motion
                            let h = 1e-6 * linalg::norm_inf(q).max(1.0) / speed;
                            let qp: Vec<f64> = q.iter().zip(qdot).map(|(x, v)| x + h * v).collect();
                            let qm: Vec<f64> = q.iter().zip(qdot).map(|(x, v)| x - h * v).collect();
                            let yp = rs.solve_drop_charge(&qp)?;
                            let ym = rs.solve_drop_charge(&qm)?;
                            (yp - ym) / (2.0 * h)
                        };
                        (y, ydot)
                    }
                    ReductionKind::ResLoopLinear | ReductionKind::ResLoopNonlinear => {
                        (0.0, rs.drop_velocity(qdot)?)
                    }
                };
                let qi = insert_at(q, rs.drop, y);
                let qdi = insert_at(qdot, rs.drop, ydot);
                rs.inner.lift_state(&qi, &qdi)
            }
        }
    }

    /// Largest constraint residual across the reduction chain at a state.
    pub fn constraint_residual(&self, q: &[f64], qdot: &[f64]) -> Result<f64, EvalError> {
        match self {
            AnySystem::Base(_) => Ok(0.0),
            AnySystem::Reduced(rs) => {
                let qi = rs.lift_q(q)?;
                let qdi = rs.lift_qdot(qdot)?;
                let here = match rs.kind {
                    ReductionKind::CapLoop => rs.inner.capacitive_force(&qi)?[rs.drop].abs(),
                    _ => rs.inner.resistive_force(&qdi)?[rs.drop].abs(),
                };
                Ok(here.max(rs.inner.constraint_residual(&qi, &qdi)?))
            }
        }
    }

    /// Structural + sampled regularity analysis of this system.
    pub fn regularity(&self, samples: usize, seed: u64) -> RegularityReport {
        regularity(self, samples, seed)
    }

    pub fn as_reduced(&self) -> Option<&ReducedSystem> {
        match self {
            AnySystem::Base(_) => None,
            AnySystem::Reduced(rs) => Some(rs),
        }
    }
}

impl ReducedSystem {
    pub fn kind(&self) -> ReductionKind {
        self.kind
    }

    /// Index (inner numbering) of the dropped coordinate.
    pub fn dropped(&self) -> usize {
        self.drop
    }

    /// Netlist id of the dropped coordinate's selected branch.
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn inner(&self) -> &AnySystem {
        &self.inner
    }

    /// Explicit linear-elimination coefficients, when kind is ResLoopLinear.
    pub fn elimination_coefficients(&self) -> Option<&[f64]> {
        self.lin.as_deref()
    }

    /// Branch jumps reported at this level.
    pub fn jumps_here(&self) -> u64 {
        self.jumps.get()
    }

    /// Lift one level: insert the dropped charge.
    fn lift_q(&self, q: &[f64]) -> Result<Vec<f64>, EvalError> {
        let y = match self.kind {
            ReductionKind::CapLoop => self.solve_drop_charge(q)?,
            _ => 0.0,
        };
        Ok(insert_at(q, self.drop, y))
    }

    /// Lift one level: insert the dropped velocity.
    fn lift_qdot(&self, qdot: &[f64]) -> Result<Vec<f64>, EvalError> {
        let ydot = match self.kind {
            ReductionKind::CapLoop => 0.0,
            _ => self.drop_velocity(qdot)?,
        };
        Ok(insert_at(qdot, self.drop, ydot))
    }

    fn drop_velocity(&self, qdot: &[f64]) -> Result<f64, EvalError> {
        match self.kind {
            ReductionKind::CapLoop => Ok(0.0),
            ReductionKind::ResLoopLinear => {
                let lin = self.lin.as_ref().expect("linear reduction carries coefficients");
                Ok(lin.iter().zip(qdot).map(|(c, v)| c * v).sum())
            }
            ReductionKind::ResLoopNonlinear => {
                let f = |y: f64| -> Result<f64, EvalError> {
                    let qdi = insert_at(qdot, self.drop, y);
                    Ok(self.inner.resistive_force(&qdi)?[self.drop])
                };
                self.solve_constraint(&f, || format!("at velocities {qdot:?}"))
            }
        }
    }

    /// Solve the holonomic constraint G_drop(q) = 0 for the dropped charge.
    fn solve_drop_charge(&self, q: &[f64]) -> Result<f64, EvalError> {
        debug_assert_eq!(self.kind, ReductionKind::CapLoop);
        let f = |y: f64| -> Result<f64, EvalError> {
            let qi = insert_at(q, self.drop, y);
            Ok(self.inner.capacitive_force(&qi)?[self.drop])
        };
        self.solve_constraint(&f, || format!("at coordinates {q:?}"))
    }

    /// Safeguarded Newton with geometric bracket growth from the cached
    /// solution; reports solutions far from the cache as branch jumps.
    fn solve_constraint(
        &self,
        f: &dyn Fn(f64) -> Result<f64, EvalError>,
        context: impl Fn() -> String,
    ) -> Result<f64, EvalError> {
        let guess = if self.cache_valid.get() { self.cache.get() } else { 0.0 };
        let y = solve_monotone_root(&self.label, f, guess).map_err(|e| match e {
            EvalError::NewtonDiverged { coordinate, detail } => EvalError::NewtonDiverged {
                coordinate,
                detail: format!("{detail} ({})", context()),
            },
            other => other,
        })?;
        if self.cache_valid.get() && (y - self.cache.get()).abs() > self.jump_distance {
            self.jumps.set(self.jumps.get() + 1);
        }
        self.cache.set(y);
        self.cache_valid.set(true);
        Ok(y)
    }
}

/// Root of a monotone scalar constraint: bracket by geometric growth around
/// the guess, then safeguarded Newton (finite-difference slope, bisection
/// fallback). Non-monotone behavior inside the bracket is reported as such.
fn solve_monotone_root(
    label: &str,
    f: &dyn Fn(f64) -> Result<f64, EvalError>,
    guess: f64,
) -> Result<f64, EvalError> {
    let fg = f(guess)?;
    let f_scale = |a: f64, b: f64| CONSTRAINT_TOL * a.abs().max(b.abs()).max(1.0);
    if fg.abs() <= CONSTRAINT_TOL {
        return Ok(guess);
    }
    // bracket growth
    let mut radius = 0.5 * guess.abs().max(1.0);
    let (mut lo, mut hi, mut flo, mut fhi) = (guess, guess, fg, fg);
    let mut bracketed = false;
    for _ in 0..80 {
        lo = guess - radius;
        hi = guess + radius;
        flo = f(lo)?;
        fhi = f(hi)?;
        if flo == 0.0 {
            return Ok(lo);
        }
        if fhi == 0.0 {
            return Ok(hi);
        }
        if flo * fhi < 0.0 {
            bracketed = true;
            break;
        }
        radius *= 2.0;
    }
    if !bracketed {
        return Err(EvalError::NewtonDiverged {
            coordinate: label.to_string(),
            detail: format!("no sign change within radius {radius:.3e} of {guess:.6e}"),
        });
    }
    let tol = f_scale(flo, fhi);
    let (env_lo, env_hi) = (flo.min(fhi), flo.max(fhi));
    let slack = 1e-9 * (env_hi - env_lo).abs().max(1.0);
    let negative_at_lo = flo < 0.0;
    let mut x = guess.clamp(lo, hi);
    let mut fx = f(x)?;
    for _ in 0..200 {
        if fx.abs() <= tol {
            return Ok(x);
        }
        // for a monotone constraint every interior value stays inside the
        // bracket envelope; escaping it means the branch is not unique here
        if fx < env_lo - slack || fx > env_hi + slack {
            return Err(EvalError::NonMonotoneConstraint { coordinate: label.to_string(), at: x });
        }
        // maintain the bracket (the sign at `lo` never changes)
        if (fx < 0.0) == negative_at_lo {
            lo = x;
        } else {
            hi = x;
        }
        // finite-difference Newton step, bisection when it leaves the bracket
        let h = 1e-7 * x.abs().max(1.0);
        let slope = (f(x + h)? - f(x - h)?) / (2.0 * h);
        let mut next = if slope != 0.0 { x - fx / slope } else { f64::NAN };
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if next == x {
            next = 0.5 * (lo + hi);
        }
        x = next;
        fx = f(x)?;
        if hi - lo <= f64::EPSILON * (hi.abs().max(lo.abs()).max(1.0)) {
            break;
        }
    }
    if fx.abs() <= 1e2 * tol {
        return Ok(x);
    }
    Err(EvalError::NewtonDiverged {
        coordinate: label.to_string(),
        detail: format!("residual {fx:.3e} after iteration limit"),
    })
}

/// Device class of a branch row in the base canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RowClass {
    Resistor,
    Inductor,
    Capacitor,
}

fn row_class(base: &BirkhoffSystem, l: usize) -> RowClass {
    let r = base.devices.r();
    let k = base.devices.k();
    if l < r {
        RowClass::Resistor
    } else if l < r + k {
        RowClass::Inductor
    } else {
        RowClass::Capacitor
    }
}

/// Branch rows with a nonzero entry in column j of the effective N.
fn column_support(n_eff: &RatMat, j: usize) -> Vec<usize> {
    (0..n_eff.rows()).filter(|&l| !n_eff.get(l, j).is_zero()).collect()
}

fn check_coordinate(sys: &AnySystem, j: usize) -> Result<(), ReduceError> {
    let m = sys.dim();
    if j >= m {
        return Err(ReduceError::BadCoordinate { index: j, m });
    }
    Ok(())
}

/// Drop coordinate j by the holonomic capacitor-loop constraint; the dropped
/// charge is recovered pointwise as f(q) by safeguarded Newton.
pub fn reduce_capacitor_loop(sys: AnySystem, j: usize) -> Result<ReducedSystem, ReduceError> {
    check_coordinate(&sys, j)?;
    let label = sys.coordinate_id(j).to_string();
    let n_eff = sys.effective_n();
    let base = sys.base();
    let offending: Vec<&str> = column_support(&n_eff, j)
        .into_iter()
        .filter(|&l| row_class(base, l) != RowClass::Capacitor)
        .map(|l| base.devices.id_of(l))
        .collect();
    if !offending.is_empty() {
        return Err(ReduceError::NotACapacitorLoop { coordinate: label, offending: offending.join(", ") });
    }
    Ok(ReducedSystem {
        inner: Box::new(sys),
        kind: ReductionKind::CapLoop,
        drop: j,
        label,
        lin: None,
        jump_distance: DEFAULT_JUMP_DISTANCE,
        cache: Cell::new(0.0),
        cache_valid: Cell::new(false),
        jumps: Cell::new(0),
    })
}

/// Drop coordinate j of a loop of positive linear current-controlled
/// resistors; the dropped velocity is an explicit linear combination of the
/// surviving ones.
pub fn reduce_resistor_loop_linear(sys: AnySystem, j: usize) -> Result<ReducedSystem, ReduceError> {
    check_coordinate(&sys, j)?;
    let label = sys.coordinate_id(j).to_string();
    let n_eff = sys.effective_n();
    let base = sys.base();
    let support = column_support(&n_eff, j);
    let offending: Vec<&str> = support
        .iter()
        .filter(|&&l| row_class(base, l) != RowClass::Resistor)
        .map(|&l| base.devices.id_of(l))
        .collect();
    if !offending.is_empty() {
        return Err(ReduceError::NotAResistorLoop { coordinate: label, offending: offending.join(", ") });
    }
    let nf = n_eff.to_f64();
    let m = sys.dim();
    let mut denom = 0.0;
    let mut cross = vec![0.0; m];
    for &l in &support {
        let res = &base.devices.resistors[l];
        let value = match (&res.model, res.control) {
            (ConstitutiveModel::Linear(v), ResistorControl::Current) => *v,
            _ => {
                return Err(ReduceError::NotALinearResistorLoop {
                    coordinate: label,
                    offending: res.id.clone(),
                })
            }
        };
        if value <= 0.0 {
            return Err(ReduceError::NonPositiveResistance { coordinate: label, branch: res.id.clone() });
        }
        denom += nf[l][j] * nf[l][j] * value;
        for i in 0..m {
            cross[i] += nf[l][j] * value * nf[l][i];
        }
    }
    let lin: Vec<f64> = (0..m).filter(|&i| i != j).map(|i| -cross[i] / denom).collect();
    Ok(ReducedSystem {
        inner: Box::new(sys),
        kind: ReductionKind::ResLoopLinear,
        drop: j,
        label,
        lin: Some(lin),
        jump_distance: DEFAULT_JUMP_DISTANCE,
        cache: Cell::new(0.0),
        cache_valid: Cell::new(false),
        jumps: Cell::new(0),
    })
}

/// Drop coordinate j of a loop of passive current-controlled resistors; the
/// dropped velocity h(q'_rest) is solved pointwise by safeguarded Newton.
pub fn reduce_resistor_loop_nonlinear(sys: AnySystem, j: usize) -> Result<ReducedSystem, ReduceError> {
    check_coordinate(&sys, j)?;
    let label = sys.coordinate_id(j).to_string();
    let n_eff = sys.effective_n();
    let base = sys.base();
    let support = column_support(&n_eff, j);
    let offending: Vec<&str> = support
        .iter()
        .filter(|&&l| row_class(base, l) != RowClass::Resistor)
        .map(|&l| base.devices.id_of(l))
        .collect();
    if !offending.is_empty() {
        return Err(ReduceError::NotAResistorLoop { coordinate: label, offending: offending.join(", ") });
    }
    for &l in &support {
        let res = &base.devices.resistors[l];
        if res.control != ResistorControl::Current {
            return Err(ReduceError::NotAResistorLoop { coordinate: label, offending: res.id.clone() });
        }
        let (lo, hi) = PASSIVITY_RANGE;
        if !passivity_check(&res.model, lo, hi, PASSIVITY_SAMPLES).passed {
            return Err(ReduceError::NotPassive { coordinate: label, branch: res.id.clone() });
        }
    }
    Ok(ReducedSystem {
        inner: Box::new(sys),
        kind: ReductionKind::ResLoopNonlinear,
        drop: j,
        label,
        lin: None,
        jump_distance: DEFAULT_JUMP_DISTANCE,
        cache: Cell::new(0.0),
        cache_valid: Cell::new(false),
        jumps: Cell::new(0),
    })
}

/// Split the selected branch of coordinate j with a new node and a series
/// inductor. Returns a new base system over b+1 branches and one more node;
/// the loop count m is unchanged, and the new coordinate numbering matches
/// the old one (capacitor charges keep their meaning).
pub fn insert_series_inductor(
    sys: &AnySystem,
    j: usize,
    model: ConstitutiveModel,
) -> Result<BirkhoffSystem, ReduceError> {
    let m = sys.dim();
    if j >= m {
        return Err(ReduceError::BadCoordinate { index: j, m });
    }
    let label = sys.coordinate_id(j).to_string();
    let base = sys.base();
    let r = base.devices.r();
    let k = base.devices.k();

    // precondition: some inductor-free loop runs through coordinate j, i.e.
    // the kernel of the inductor-row block of the effective N has a vector
    // with a nonzero j-th component
    let n_eff = sys.effective_n();
    let kernel = crate::birkhoff::structural_kernel(&n_eff, r, k);
    if !kernel.iter().any(|w| !w[j].is_zero()) {
        return Err(ReduceError::LoopHasInductor { coordinate: label });
    }

    // the inserted inductance must be a genuine (positive) inductor
    let positive = (0..=200).all(|i| {
        let x = -10.0 + 0.1 * i as f64;
        model.inductance(x) > 0.0
    });
    if !positive {
        return Err(ReduceError::NonPositiveInductance {
            detail: format!("{model:?} is not positive on [-10, 10]"),
        });
    }

    let keep = sys.keep();
    let jb = keep[j];
    let sel_branch = base.chart.selection[jb];
    let sel_id = base.graph.branch_ids[sel_branch].clone();
    let (tail, head) = base.graph.branches[sel_branch];

    let mut new_id = format!("{sel_id}_lser");
    while base.graph.branch_ids.contains(&new_id) {
        new_id.push('x');
    }
    let mut node_name = format!("{sel_id}_lser_n");
    while base.graph.node_names.contains(&node_name) {
        node_name.push('x');
    }

    // extend the graph: the selected branch now ends at the new node and the
    // inductor carries on to the old head, keeping every loop closed
    let mut node_names = base.graph.node_names.clone();
    node_names.push(node_name);
    let new_node = node_names.len() - 1;
    let pos = r + k; // canonical slot for the appended inductor
    let mut branches = base.graph.branches.clone();
    branches[sel_branch] = (tail, new_node);
    branches.insert(pos, (new_node, head));
    let mut branch_ids = base.graph.branch_ids.clone();
    branch_ids.insert(pos, new_id.clone());
    let graph = CircuitGraph {
        node_names,
        reference: base.graph.reference,
        branches,
        branch_ids,
    };

    // the new branch is in series with the selected one: every loop traverses
    // it with the selected branch's sign, so its loop-matrix row is a copy
    let old_loops = &base.topo.loops;
    let mut loops = IntMat::zeros(old_loops.rows() + 1, old_loops.cols());
    for l in 0..loops.rows() {
        let src = if l < pos {
            l
        } else if l == pos {
            sel_branch
        } else {
            l - 1
        };
        // the selected branch sits before the capacitor block, so its row
        // index is unshifted
        for c in 0..loops.cols() {
            loops.set(l, c, old_loops.get(src, c));
        }
    }
    let incidence = incidence_matrix(&graph);
    debug_assert!(verify_kirchhoff_structure(&incidence, &loops).all_ok());
    let topo = TopologyMatrices { incidence, loops };

    let mut devices = base.devices.clone();
    devices.inductors.push(Storage { id: new_id, model });

    // same chart selection over the extended branch list; the new inductor
    // starts uncharged (its charge is a gauge quantity anyway)
    let selection: Vec<usize> =
        base.chart.selection.iter().map(|&s| if s >= pos { s + 1 } else { s }).collect();
    let mut x0 = base.chart.offsets.clone();
    x0.insert(pos, 0.0);
    let chart = build_chart(&topo, &x0, Some(&selection))
        .map_err(|e| ReduceError::ChartRebuild(e.to_string()))?;

    Ok(BirkhoffSystem::assemble(graph, devices, topo, chart, base.warnings.clone()))
}

// ---------------------------------------------------------------------------
// Reduction reports: explicit, replayable records of what was done.

/// One regularization step in a report. Coordinates are identified by the
/// netlist id of their selected branch, which survives renumbering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ReduceAction {
    CapReduce { coordinate: String },
    ResReduceLinear { coordinate: String },
    ResReduceNonlinear { coordinate: String },
    InsertInductor { coordinate: String, model: ConstitutiveModel },
}

impl ReduceAction {
    pub fn coordinate(&self) -> &str {
        match self {
            ReduceAction::CapReduce { coordinate }
            | ReduceAction::ResReduceLinear { coordinate }
            | ReduceAction::ResReduceNonlinear { coordinate }
            | ReduceAction::InsertInductor { coordinate, .. } => coordinate,
        }
    }
}

/// A defect loop, in report form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectRecord {
    /// Selected-branch ids of the coordinates spanning the kernel direction.
    pub coordinates: Vec<String>,
    /// "capacitor" | "resistor" | "resistor_capacitor"
    pub kind: String,
    /// Branches of the inductor-free cycle with circulation signs.
    pub branches: Vec<BranchSign>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSign {
    pub id: String,
    pub sign: i64,
}

/// The reduce command's output: which defects were present and what was done,
/// replayable against the same netlist.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    /// Canonical netlist text the actions apply to.
    pub netlist: String,
    pub seed: u64,
    /// Defect loops present before this run's actions.
    pub defects: Vec<DefectRecord>,
    /// Cumulative actions, in application order.
    pub actions: Vec<ReduceAction>,
}

impl ReductionReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Report form of the analyzer's defect loops for a system.
pub fn defect_records(sys: &AnySystem, samples: usize, seed: u64) -> Vec<DefectRecord> {
    let report = sys.regularity(samples, seed);
    report
        .defects
        .iter()
        .map(|d| DefectRecord {
            coordinates: d.coordinates.iter().map(|&j| sys.coordinate_id(j).to_string()).collect(),
            kind: match d.kind {
                crate::birkhoff::DefectKind::Capacitor => "capacitor".to_string(),
                crate::birkhoff::DefectKind::Resistor => "resistor".to_string(),
                crate::birkhoff::DefectKind::Mixed => "resistor_capacitor".to_string(),
            },
            branches: d.branches.iter().map(|(id, sign)| BranchSign { id: id.clone(), sign: *sign }).collect(),
        })
        .collect()
}

/// A base system plus an ordered list of reduction steps; inserting rebuilds
/// the base while the steps (keyed by stable branch ids) are replayed on top.
#[derive(Clone, Debug)]
pub struct Pipeline {
    base: BirkhoffSystem,
    steps: Vec<(ReductionKind, String)>,
}

impl Pipeline {
    pub fn new(base: BirkhoffSystem) -> Self {
        Pipeline { base, steps: Vec::new() }
    }

    /// Rebuild a pipeline from a report's action list.
    pub fn from_actions(base: BirkhoffSystem, actions: &[ReduceAction]) -> Result<Self, ReduceError> {
        let mut p = Pipeline::new(base);
        for action in actions {
            p.apply(action)?;
        }
        Ok(p)
    }

    pub fn base(&self) -> &BirkhoffSystem {
        &self.base
    }

    /// Build the current reduced system chain.
    pub fn system(&self) -> Result<AnySystem, ReduceError> {
        let mut sys = AnySystem::Base(self.base.clone());
        for (kind, id) in &self.steps {
            let j = sys
                .coordinate_index(id)
                .ok_or_else(|| ReduceError::NoSuchCoordinate { id: id.clone() })?;
            sys = match kind {
                ReductionKind::CapLoop => reduce_capacitor_loop(sys, j)?.into(),
                ReductionKind::ResLoopLinear => reduce_resistor_loop_linear(sys, j)?.into(),
                ReductionKind::ResLoopNonlinear => reduce_resistor_loop_nonlinear(sys, j)?.into(),
            };
        }
        Ok(sys)
    }

    /// Validate and record one action.
    pub fn apply(&mut self, action: &ReduceAction) -> Result<(), ReduceError> {
        let sys = self.system()?;
        let id = action.coordinate();
        let j = sys
            .coordinate_index(id)
            .ok_or_else(|| ReduceError::NoSuchCoordinate { id: id.to_string() })?;
        match action {
            ReduceAction::CapReduce { .. } => {
                reduce_capacitor_loop(sys, j)?;
                self.steps.push((ReductionKind::CapLoop, id.to_string()));
            }
            ReduceAction::ResReduceLinear { .. } => {
                reduce_resistor_loop_linear(sys, j)?;
                self.steps.push((ReductionKind::ResLoopLinear, id.to_string()));
            }
            ReduceAction::ResReduceNonlinear { .. } => {
                reduce_resistor_loop_nonlinear(sys, j)?;
                self.steps.push((ReductionKind::ResLoopNonlinear, id.to_string()));
            }
            ReduceAction::InsertInductor { model, .. } => {
                self.base = insert_series_inductor(&sys, j, model.clone())?;
            }
        }
        Ok(())
    }
}

/// The reduce command's strategies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    CapReduce,
    ResReduce,
    Insert,
}

/// Pure-capacitor / pure-resistor classification of an effective-N column.
fn column_class(sys: &AnySystem, n_eff: &RatMat, j: usize) -> Option<RowClass> {
    let base = sys.base();
    let mut class: Option<RowClass> = None;
    for l in column_support(n_eff, j) {
        let c = row_class(base, l);
        match class {
            None => class = Some(c),
            Some(prev) if prev != c => return None,
            _ => {}
        }
    }
    class
}

/// The action the res-reduce strategy takes on coordinate j: linear
/// elimination when every loop resistor is linear and current-controlled,
/// Newton elimination otherwise.
pub fn res_action_for(sys: &AnySystem, j: usize) -> ReduceAction {
    let coordinate = sys.coordinate_id(j).to_string();
    let n_eff = sys.effective_n();
    let base = sys.base();
    let all_linear = column_support(&n_eff, j).into_iter().all(|l| {
        let res = &base.devices.resistors[l];
        matches!(res.model, ConstitutiveModel::Linear(v) if v > 0.0)
            && res.control == ResistorControl::Current
    });
    if all_linear {
        ReduceAction::ResReduceLinear { coordinate }
    } else {
        ReduceAction::ResReduceNonlinear { coordinate }
    }
}

/// Run one strategy to exhaustion: repeatedly act on the lowest candidate
/// coordinate until none remains. Returns the actions taken.
pub fn auto_reduce(
    pipeline: &mut Pipeline,
    strategy: Strategy,
    insert_model: &ConstitutiveModel,
) -> Result<Vec<ReduceAction>, ReduceError> {
    let mut actions = Vec::new();
    loop {
        let sys = pipeline.system()?;
        let n_eff = sys.effective_n();
        let m = sys.dim();
        let next = match strategy {
            Strategy::CapReduce => (0..m)
                .find(|&j| column_class(&sys, &n_eff, j) == Some(RowClass::Capacitor))
                .map(|j| ReduceAction::CapReduce { coordinate: sys.coordinate_id(j).to_string() }),
            Strategy::ResReduce => (0..m)
                .find(|&j| column_class(&sys, &n_eff, j) == Some(RowClass::Resistor))
                .map(|j| res_action_for(&sys, j)),
            Strategy::Insert => {
                let base = sys.base();
                let kernel =
                    crate::birkhoff::structural_kernel(&n_eff, base.devices.r(), base.devices.k());
                (0..m).find(|&j| kernel.iter().any(|w| !w[j].is_zero())).map(|j| {
                    ReduceAction::InsertInductor {
                        coordinate: sys.coordinate_id(j).to_string(),
                        model: insert_model.clone(),
                    }
                })
            }
        };
        match next {
            Some(action) => {
                pipeline.apply(&action)?;
                actions.push(action);
            }
            None => return Ok(actions),
        }
    }
}

fn insert_at(v: &[f64], pos: usize, value: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    out.extend_from_slice(&v[..pos]);
    out.push(value);
    out.extend_from_slice(&v[pos..]);
    out
}

fn drop_row_col(m: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != d)
        .map(|(_, row)| {
            row.iter().enumerate().filter(|(c, _)| *c != d).map(|(_, v)| *v).collect()
        })
        .collect()
}

/// Exact kernel vectors of the inductor rows expressed over Rat, re-exported
/// for the CLI's defect listing.
pub fn structural_defect_kernel(sys: &AnySystem) -> Vec<Vec<Rat>> {
    let base = sys.base();
    crate::birkhoff::structural_kernel(&sys.effective_n(), base.devices.r(), base.devices.k())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::birkhoff::{compile, RegularityVerdict};
    use approx::assert_abs_diff_eq;

    /// Two capacitors and an inductor in parallel: one capacitor loop.
    /// Chart selects (l1, c1); the c1 column of N touches only capacitor rows.
    const CAP_LOOP: &str = "\
node a b
ref b
model lm linear 1.0
model cm linear 1.0
branch l1 a b L lm
branch c1 a b C cm
branch c2 a b C cm
coords l1 c1
";

    /// Two resistors and an inductor in parallel: one resistor loop.
    const RES_LOOP: &str = "\
node a b
ref b
model ra linear 2.0
model rb linear 3.0
model lm linear 1.0
branch ra a b R ra
branch rb a b R rb
branch l1 a b L lm
coords ra l1
";

    #[test]
    fn cap_loop_reduction_solves_the_linear_constraint() {
        let sys = compile(CAP_LOOP).unwrap();
        let reduced: AnySystem = reduce_capacitor_loop(sys.into(), 1).unwrap().into();
        assert_eq!(reduced.dim(), 1);
        // constraint: C(q2) - C(-q1 - q2) = 0  =>  q2 = -q1/2
        let lifted = reduced.lift_q(&[0.8]).unwrap();
        assert_abs_diff_eq!(lifted[1], -0.4, epsilon = 1e-12);
        assert!(reduced.constraint_residual(&[0.8], &[0.0]).unwrap() <= 1e-10);
        // reduced mass is the l1 block alone; the system is now regular
        let mass = reduced.mass_matrix(&[0.3]).unwrap();
        assert_abs_diff_eq!(mass[0][0], 1.0, epsilon = 1e-15);
        assert_eq!(reduced.regularity(5, 1).verdict, RegularityVerdict::Regular);
        // energy folds in both capacitor charges: L i^2/2 + 2 * (q1/2)^2 / 2
        let e = reduced.energy(&[0.8], &[0.3]).unwrap();
        assert_abs_diff_eq!(e, 0.045 + 0.08 + 0.08, epsilon = 1e-12);
    }

    #[test]
    fn cap_loop_reduction_with_nonlinear_capacitor() {
        let text = CAP_LOOP.replace("model cm linear 1.0", "model cm poly 0 1.0 0 1.0");
        let sys = compile(&text).unwrap();
        let reduced: AnySystem = reduce_capacitor_loop(sys.into(), 1).unwrap().into();
        for &q1 in &[-1.5, -0.3, 0.0, 0.7, 2.0] {
            let lifted = reduced.lift_q(&[q1]).unwrap();
            let y = lifted[1];
            // phi(y) = (y + y^3) - (u + u^3), u = -q1 - y; root by bisection
            let phi = |y: f64| {
                let u = -q1 - y;
                (y + y.powi(3)) - (u + u.powi(3))
            };
            let (mut lo, mut hi) = (-10.0, 10.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if phi(lo) * phi(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert_abs_diff_eq!(y, 0.5 * (lo + hi), epsilon = 1e-9);
            assert!(phi(y).abs() <= 1e-10);
        }
    }

    #[test]
    fn cap_loop_rejects_mixed_columns() {
        let sys = compile(CAP_LOOP).unwrap();
        // coordinate 0 selects l1: its column contains the inductor row
        match reduce_capacitor_loop(sys.into(), 0) {
            Err(ReduceError::NotACapacitorLoop { coordinate, offending }) => {
                assert_eq!(coordinate, "l1");
                assert!(offending.contains("l1"));
            }
            other => panic!("expected NotACapacitorLoop, got {other:?}"),
        }
    }

    #[test]
    fn linear_resistor_loop_elimination_matches_parallel_resistance() {
        let sys = compile(RES_LOOP).unwrap();
        let reduced = reduce_resistor_loop_linear(sys.into(), 0).unwrap();
        // KVL on the ra-rb loop: q'_ra = -(Rb/(Ra+Rb)) q'_l1 = -0.6 q'_l1
        let lin = reduced.elimination_coefficients().unwrap();
        assert_eq!(lin.len(), 1);
        assert_abs_diff_eq!(lin[0], -0.6, epsilon = 1e-15);
        let any: AnySystem = reduced.into();
        // reduced H = (Ra*Rb/(Ra+Rb)) q'  — the parallel resistance
        let h = any.resistive_force(&[0.5]).unwrap();
        assert_abs_diff_eq!(h[0], 1.2 * 0.5, epsilon = 1e-12);
        assert!(any.constraint_residual(&[0.0], &[0.5]).unwrap() <= 1e-12);
        // dissipated power matches the parallel-resistance form
        let p = any.resistor_power(&[0.5]).unwrap();
        assert_abs_diff_eq!(p, 1.2 * 0.25, epsilon = 1e-12);
    }

    #[test]
    fn linear_reduction_rejects_nonlinear_and_nonpositive_loops() {
        let nonlinear = RES_LOOP.replace("model rb linear 3.0", "model rb poly 0 1.0 0 1.0");
        let sys = compile(&nonlinear).unwrap();
        match reduce_resistor_loop_linear(sys.into(), 0) {
            Err(ReduceError::NotALinearResistorLoop { offending, .. }) => assert_eq!(offending, "rb"),
            other => panic!("expected NotALinearResistorLoop, got {other:?}"),
        }
        let negative = RES_LOOP.replace("model rb linear 3.0", "model rb linear -3.0");
        let sys = compile(&negative).unwrap();
        match reduce_resistor_loop_linear(sys.into(), 0) {
            Err(ReduceError::NonPositiveResistance { branch, .. }) => assert_eq!(branch, "rb"),
            other => panic!("expected NonPositiveResistance, got {other:?}"),
        }
        // and a capacitor in the column is not a resistor loop at all
        let sys = compile(CAP_LOOP).unwrap();
        match reduce_resistor_loop_linear(sys.into(), 1) {
            Err(ReduceError::NotAResistorLoop { .. }) => {}
            other => panic!("expected NotAResistorLoop, got {other:?}"),
        }
    }

    #[test]
    fn nonlinear_elimination_agrees_with_linear_on_linear_loops() {
        let sys = compile(RES_LOOP).unwrap();
        let lin: AnySystem = reduce_resistor_loop_linear(AnySystem::Base(sys.clone()), 0).unwrap().into();
        let non: AnySystem = reduce_resistor_loop_nonlinear(AnySystem::Base(sys), 0).unwrap().into();
        for &s in &[-2.0, -0.5, 0.0, 0.1, 1.0, 3.0] {
            let hl = lin.resistive_force(&[s]).unwrap()[0];
            let hn = non.resistive_force(&[s]).unwrap()[0];
            assert_abs_diff_eq!(hl, hn, epsilon = 1e-10);
        }
    }

    #[test]
    fn nonlinear_elimination_matches_bisection_oracle() {
        // loop of R_A(x) = x and R_B(x) = x^3 around the inductor:
        // constraint y + (y + s)^3 = 0 for the dropped velocity y
        let text = "\
node a b
ref b
model ra linear 1.0
model rb poly 0 0 0 1.0
model lm linear 1.0
branch ra a b R ra
branch rb a b R rb
branch l1 a b L lm
coords ra l1
";
        let sys = compile(text).unwrap();
        let reduced: AnySystem = reduce_resistor_loop_nonlinear(sys.into(), 0).unwrap().into();
        for i in 0..20 {
            let s = -2.0 + 4.0 * (i as f64) / 19.0;
            let lifted = reduced.lift_qdot(&[s]).unwrap();
            let y = lifted[0];
            let phi = |y: f64| y + (y + s).powi(3);
            let (mut lo, mut hi) = (-20.0, 20.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if phi(lo) * phi(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert_abs_diff_eq!(y, 0.5 * (lo + hi), epsilon = 1e-9);
            assert!(phi(y).abs() <= 1e-10, "residual {} at s={}", phi(y), s);
        }
        // odd constraint: zero input gives the zero solution
        assert_abs_diff_eq!(reduced.lift_qdot(&[0.0]).unwrap()[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn insertion_extends_the_graph_and_regularizes() {
        let sys = compile(CAP_LOOP).unwrap();
        let any = AnySystem::Base(sys);
        // coordinate 0 (l1) has no inductor-free loop in its kernel direction
        match insert_series_inductor(&any, 0, ConstitutiveModel::Linear(0.5)) {
            Err(ReduceError::LoopHasInductor { coordinate }) => assert_eq!(coordinate, "l1"),
            other => panic!("expected LoopHasInductor, got {other:?}"),
        }
        let before_b = any.base().b();
        let before_n = any.base().graph.n();
        let before_m = any.base().m();
        let ext = insert_series_inductor(&any, 1, ConstitutiveModel::Linear(0.5)).unwrap();
        assert_eq!(ext.b(), before_b + 1);
        assert_eq!(ext.graph.n(), before_n + 1);
        assert_eq!(ext.m(), before_m);
        assert!(ext.graph.branch_ids.contains(&"c1_lser".to_string()));
        // now every loop has an inductor: mass = diag(L, Lins), det = 0.5
        let ext_any = AnySystem::Base(ext);
        let mass = ext_any.mass_matrix(&[0.1, -0.2]).unwrap();
        let det = crate::linalg::det(&mass);
        assert_abs_diff_eq!(det, 0.5, epsilon = 1e-15);
        assert_eq!(ext_any.regularity(5, 1).verdict, RegularityVerdict::Regular);
        // G and H are untouched by an insertion
        let orig = compile(CAP_LOOP).unwrap();
        for &qv in &[-1.0, 0.2, 0.9] {
            let g0 = orig.capacitive_force(&[qv, 2.0 * qv]);
            let g1 = ext_any.capacitive_force(&[qv, 2.0 * qv]).unwrap();
            assert_abs_diff_eq!(g0[0], g1[0], epsilon = 1e-15);
            assert_abs_diff_eq!(g0[1], g1[1], epsilon = 1e-15);
        }
    }

    #[test]
    fn insertion_rejects_nonpositive_models() {
        let sys = compile(CAP_LOOP).unwrap();
        let any = AnySystem::Base(sys);
        match insert_series_inductor(&any, 1, ConstitutiveModel::Linear(-1.0)) {
            Err(ReduceError::NonPositiveInductance { .. }) => {}
            other => panic!("expected NonPositiveInductance, got {other:?}"),
        }
    }

    #[test]
    fn auto_cap_reduce_and_report_round_trip() {
        let base = compile(CAP_LOOP).unwrap();
        let mut pipeline = Pipeline::new(base);
        let actions = auto_reduce(&mut pipeline, Strategy::CapReduce, &ConstitutiveModel::Linear(1e-6)).unwrap();
        assert_eq!(actions, vec![ReduceAction::CapReduce { coordinate: "c1".to_string() }]);
        let sys = pipeline.system().unwrap();
        assert_eq!(sys.dim(), 1);
        assert_eq!(sys.regularity(5, 1).verdict, RegularityVerdict::Regular);

        let report = ReductionReport {
            netlist: CAP_LOOP.to_string(),
            seed: 42,
            defects: defect_records(&AnySystem::Base(compile(CAP_LOOP).unwrap()), 3, 42),
            actions,
        };
        assert_eq!(report.defects.len(), 1);
        assert_eq!(report.defects[0].kind, "capacitor");
        let json = report.to_json();
        let back = ReductionReport::from_json(&json).unwrap();
        assert_eq!(back, report);

        // replay through from_actions gives an equivalent system
        let replayed = Pipeline::from_actions(compile(CAP_LOOP).unwrap(), &back.actions).unwrap();
        assert_eq!(replayed.system().unwrap().dim(), 1);
    }

    #[test]
    fn auto_insert_regularizes_the_res_loop_toy() {
        let base = compile(RES_LOOP).unwrap();
        let mut pipeline = Pipeline::new(base);
        let actions = auto_reduce(&mut pipeline, Strategy::Insert, &ConstitutiveModel::Linear(1e-3)).unwrap();
        assert_eq!(actions.len(), 1);
        assert_eq!(actions[0].coordinate(), "ra");
        let sys = pipeline.system().unwrap();
        assert_eq!(sys.dim(), 2);
        assert_eq!(sys.regularity(5, 1).verdict, RegularityVerdict::Regular);
    }

    #[test]
    fn jump_detection_counts_distant_solutions() {
        let sys = compile(CAP_LOOP).unwrap();
        let mut reduced: AnySystem = reduce_capacitor_loop(sys.into(), 1).unwrap().into();
        reduced.set_jump_distance(1e-3);
        reduced.lift_q(&[0.0]).unwrap();
        assert_eq!(reduced.jumps(), 0);
        reduced.lift_q(&[10.0]).unwrap();
        assert_eq!(reduced.jumps(), 1);
    }

    #[test]
    fn stacked_reductions_track_coordinates_by_id() {
        // a circuit with both a capacitor loop and a resistor loop
        let text = "\
node a b c
ref c
model lm linear 1.0
model cm linear 1.0
model rm linear 2.0
branch l1 a c L lm
branch c1 a b C cm
branch c2 a b C cm
branch r1 b c R rm
branch r2 b c R rm
coords l1 c1 r1
";
        let sys = compile(text).unwrap();
        let any = AnySystem::Base(sys);
        assert_eq!(any.coordinate_ids(), vec!["l1", "c1", "r1"]);
        let step1: AnySystem = reduce_capacitor_loop(any, 1).unwrap().into();
        assert_eq!(step1.coordinate_ids(), vec!["l1", "r1"]);
        let step2: AnySystem = reduce_resistor_loop_linear(step1, 1).unwrap().into();
        assert_eq!(step2.coordinate_ids(), vec!["l1"]);
        assert_eq!(step2.dim(), 1);
        assert_eq!(step2.regularity(5, 1).verdict, RegularityVerdict::Regular);
        // mass is l1's inductance alone
        let mass = step2.mass_matrix(&[0.4]).unwrap();
        assert_abs_diff_eq!(mass[0][0], 1.0, epsilon = 1e-15);
    }
}

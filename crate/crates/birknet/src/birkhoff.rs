//! Assembly of the Birkhoffian system on a chart and its regularity analysis.
//!
//! With x(q) = N q + offsets and branch currents i = N q', the components of
//! the Birkhoffian one-form split into mass, resistive and capacitive parts:
//!
//! ```text
//! Q_j = [sum_a N_aj N_ai L_a(i_a)] q''_i  +  sum_G N_Gj v_G(i_G)  +  sum_al N_alj C_al(x_al)
//! ```
//!
//! where a ranges over inductor rows, G over resistor rows (v_G = R_G(i_G) for
//! current-controlled resistors, the inverse of the conductance law for
//! voltage-controlled ones) and al over capacitor rows. The system is regular
//! exactly when the mass matrix is invertible; the structural obstruction is a
//! loop free of inductors, visible as a kernel vector of the inductor-row
//! submatrix of N.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::coordinates::{build_chart, CoordinateChart};
use crate::devices::{invert, stored_energy, DeviceError, DeviceSet, ResistorControl, StorageKind};
use crate::exact::{normalize_to_integers, RatMat};
use crate::linalg;
use crate::netlist::{elaborate, parse_netlist};
use crate::reduction::AnySystem;
use crate::topology::{CircuitGraph, TopologyMatrices};

/// Relative determinant threshold for the numeric regularity verdict.
pub const SINGULAR_DET_REL_TOL: f64 = 1e-9;
/// Default RNG seed used wherever sampling is needed and no seed is given.
pub const DEFAULT_SEED: u64 = 42;

/// Failures while evaluating system quantities at a state.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("Newton solve for eliminated coordinate '{coordinate}' diverged: {detail}")]
    NewtonDiverged { coordinate: String, detail: String },
    #[error("constraint for eliminated coordinate '{coordinate}' is non-monotone near {at}")]
    NonMonotoneConstraint { coordinate: String, at: f64 },
}

/// A compiled circuit: graph, devices, exact topology and chart.
#[derive(Clone, Debug)]
pub struct BirkhoffSystem {
    pub graph: CircuitGraph,
    pub devices: DeviceSet,
    pub topo: TopologyMatrices,
    pub chart: CoordinateChart,
    /// Elaboration warnings (passivity screening).
    pub warnings: Vec<String>,
    /// Float copy of the chart matrix N for numeric assembly.
    nf: Vec<Vec<f64>>,
}

/// Compile netlist text with all initial branch charges zero.
pub fn compile(text: &str) -> Result<BirkhoffSystem, crate::Error> {
    compile_with_charges(text, None)
}

/// Compile netlist text; `initial_charges` (one per branch, canonical order)
/// selects the member of the circuit's family of configuration spaces.
pub fn compile_with_charges(
    text: &str,
    initial_charges: Option<&[f64]>,
) -> Result<BirkhoffSystem, crate::Error> {
    let doc = parse_netlist(text)?;
    let elab = elaborate(&doc)?;
    let topo = TopologyMatrices::build(&elab.graph, elab.loops.as_deref())?;
    let zeros;
    let charges = match initial_charges {
        Some(c) => c,
        None => {
            zeros = vec![0.0; elab.graph.b()];
            &zeros
        }
    };
    let chart = build_chart(&topo, charges, elab.selection.as_deref())?;
    Ok(BirkhoffSystem::assemble(elab.graph, elab.devices, topo, chart, elab.warnings))
}

impl BirkhoffSystem {
    pub fn assemble(
        graph: CircuitGraph,
        devices: DeviceSet,
        topo: TopologyMatrices,
        chart: CoordinateChart,
        warnings: Vec<String>,
    ) -> Self {
        let nf = chart.n.to_f64();
        BirkhoffSystem { graph, devices, topo, chart, warnings, nf }
    }

    /// Coordinate count m.
    pub fn m(&self) -> usize {
        self.chart.m()
    }

    pub fn b(&self) -> usize {
        self.graph.b()
    }

    /// Netlist id of the charge selected as coordinate j.
    pub fn coordinate_id(&self, j: usize) -> &str {
        &self.graph.branch_ids[self.chart.selection[j]]
    }

    /// All branch currents i = N q'.
    pub fn branch_currents(&self, qdot: &[f64]) -> Vec<f64> {
        linalg::mat_vec(&self.nf, qdot)
    }

    /// All branch charges x = N q + offsets.
    pub fn branch_charges(&self, q: &[f64]) -> Vec<f64> {
        let mut x = linalg::mat_vec(&self.nf, q);
        for (xi, off) in x.iter_mut().zip(&self.chart.offsets) {
            *xi += off;
        }
        x
    }

    /// Mass matrix F(q')_{ji} = sum over inductor rows a of N_aj N_ai L_a(i_a).
    pub fn mass_matrix(&self, qdot: &[f64]) -> Vec<Vec<f64>> {
        let m = self.m();
        let r = self.devices.r();
        let mut out = vec![vec![0.0; m]; m];
        for (a, ind) in self.devices.inductors.iter().enumerate() {
            let row = &self.nf[r + a];
            let i_a: f64 = row.iter().zip(qdot).map(|(n, qd)| n * qd).sum();
            let l_a = ind.model.inductance(i_a);
            for j in 0..m {
                if row[j] == 0.0 {
                    continue;
                }
                for i in 0..m {
                    out[j][i] += row[j] * row[i] * l_a;
                }
            }
        }
        out
    }

    /// Resistive force H(q')_j = sum over resistor rows of N_Gj v_G.
    pub fn resistive_force(&self, qdot: &[f64]) -> Result<Vec<f64>, EvalError> {
        let m = self.m();
        let mut out = vec![0.0; m];
        for (g, res) in self.devices.resistors.iter().enumerate() {
            let row = &self.nf[g];
            let i_g: f64 = row.iter().zip(qdot).map(|(n, qd)| n * qd).sum();
            let v_g = match res.control {
                ResistorControl::Current => res.model.eval(i_g),
                // voltage-controlled: solve Rv(v) = i for v, re-solved at every
                // evaluation point (no interpolation between stages)
                ResistorControl::Voltage => invert(&res.model, i_g, 0.0)?,
            };
            for j in 0..m {
                out[j] += row[j] * v_g;
            }
        }
        Ok(out)
    }

    /// Capacitive force G(q)_j = sum over capacitor rows of N_alj C_al(x_al).
    pub fn capacitive_force(&self, q: &[f64]) -> Vec<f64> {
        let m = self.m();
        let rk = self.devices.r() + self.devices.k();
        let mut out = vec![0.0; m];
        let x = self.branch_charges(q);
        for (c, cap) in self.devices.capacitors.iter().enumerate() {
            let row = &self.nf[rk + c];
            let v_c = cap.model.eval(x[rk + c]);
            for j in 0..m {
                out[j] += row[j] * v_c;
            }
        }
        out
    }

    /// Full components Q_j = (F(q') q'')_j + H(q')_j + G(q)_j.
    pub fn components(&self, q: &[f64], qdot: &[f64], qddot: &[f64]) -> Result<Vec<f64>, EvalError> {
        let f = self.mass_matrix(qdot);
        let h = self.resistive_force(qdot)?;
        let g = self.capacitive_force(q);
        let fq = linalg::mat_vec(&f, qddot);
        Ok(fq.iter().zip(&h).zip(&g).map(|((a, b), c)| a + b + c).collect())
    }

    /// Total field energy: inductor energies at branch currents plus capacitor
    /// energies at branch charges.
    pub fn energy(&self, q: &[f64], qdot: &[f64]) -> f64 {
        let i = self.branch_currents(qdot);
        let x = self.branch_charges(q);
        let r = self.devices.r();
        let rk = r + self.devices.k();
        let mut e = 0.0;
        for (a, ind) in self.devices.inductors.iter().enumerate() {
            e += stored_energy(StorageKind::Inductor, &ind.model, i[r + a]);
        }
        for (c, cap) in self.devices.capacitors.iter().enumerate() {
            e += stored_energy(StorageKind::Capacitor, &cap.model, x[rk + c]);
        }
        e
    }

    /// Instantaneous dissipated power: sum of v*i over all resistors.
    pub fn resistor_power(&self, qdot: &[f64]) -> Result<f64, EvalError> {
        let i = self.branch_currents(qdot);
        let mut p = 0.0;
        for (g, res) in self.devices.resistors.iter().enumerate() {
            let v = match res.control {
                ResistorControl::Current => res.model.eval(i[g]),
                ResistorControl::Voltage => invert(&res.model, i[g], 0.0)?,
            };
            p += v * i[g];
        }
        Ok(p)
    }

    /// d H_j / d q'_j at the given velocities (the mixed-partials obstruction
    /// to writing the system as conservative).
    pub fn resistive_self_coupling(&self, qdot: &[f64], j: usize) -> Result<f64, EvalError> {
        let mut acc = 0.0;
        for (g, res) in self.devices.resistors.iter().enumerate() {
            let row = &self.nf[g];
            if row[j] == 0.0 {
                continue;
            }
            let i_g: f64 = row.iter().zip(qdot).map(|(n, qd)| n * qd).sum();
            let slope = match res.control {
                ResistorControl::Current => res.model.eval_deriv(i_g),
                ResistorControl::Voltage => {
                    let v = invert(&res.model, i_g, 0.0)?;
                    1.0 / res.model.eval_deriv(v).max(f64::MIN_POSITIVE)
                }
            };
            acc += row[j] * row[j] * slope;
        }
        Ok(acc)
    }
}

impl From<BirkhoffSystem> for AnySystem {
    fn from(sys: BirkhoffSystem) -> Self {
        AnySystem::Base(sys)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegularityVerdict {
    Regular,
    StructurallySingular,
    NumericallySingular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DefectKind {
    /// Loop of capacitors only.
    Capacitor,
    /// Loop of resistors only.
    Resistor,
    /// Loop of resistors and capacitors.
    Mixed,
}

/// An inductor-free loop: the structural reason a mass matrix cannot be
/// regular, presented as a cycle in branch space.
#[derive(Clone, Debug, PartialEq)]
pub struct DefectLoop {
    /// Coordinates (0-based) carrying the kernel direction.
    pub coordinates: Vec<usize>,
    /// Branches of the cycle with integer circulation signs.
    pub branches: Vec<(String, i64)>,
    pub kind: DefectKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonConservativeWitness {
    pub coordinate: usize,
    /// d H_j / d q'_j at the sampled velocities.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    pub verdict: RegularityVerdict,
    pub defects: Vec<DefectLoop>,
    /// |det F| at each sampled velocity.
    pub sampled_dets: Vec<f64>,
    /// Scale of the last sample (product of diagonal magnitudes).
    pub det_scale: f64,
    pub witness: Option<NonConservativeWitness>,
}

/// Decide regularity: exact kernel of the inductor-row submatrix of N first
/// (a nonzero kernel is a structural defect and overrides everything), then
/// |det F(q')| at seeded random velocities against the relative threshold.
pub fn regularity(sys: &AnySystem, samples: usize, seed: u64) -> RegularityReport {
    let base = sys.base();
    let n_eff = sys.effective_n();
    let r = base.devices.r();
    let k = base.devices.k();
    let inductor_rows: Vec<usize> = (r..r + k).collect();
    let n_l = n_eff.select_rows(&inductor_rows);
    let kernel = n_l.nullspace();

    let defects: Vec<DefectLoop> = kernel
        .iter()
        .map(|w| {
            let coordinates: Vec<usize> =
                w.iter().enumerate().filter(|(_, x)| !num_traits::Zero::is_zero(*x)).map(|(j, _)| j).collect();
            let cycle = normalize_to_integers(&n_eff.mul_vec(w));
            let branches: Vec<(String, i64)> = cycle
                .iter()
                .enumerate()
                .filter(|(_, s)| **s != 0)
                .map(|(l, s)| (base.graph.branch_ids[l].clone(), *s))
                .collect();
            let rk = r + k;
            let all_cap = cycle.iter().enumerate().all(|(l, s)| *s == 0 || l >= rk);
            let all_res = cycle.iter().enumerate().all(|(l, s)| *s == 0 || l < r);
            let kind = if all_cap {
                DefectKind::Capacitor
            } else if all_res {
                DefectKind::Resistor
            } else {
                DefectKind::Mixed
            };
            DefectLoop { coordinates, branches, kind }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = sys.dim();
    let mut sampled_dets = Vec::with_capacity(samples);
    let mut det_scale = 1.0;
    let mut numerically_singular = false;
    let mut witness: Option<NonConservativeWitness> = None;
    for _ in 0..samples {
        let qdot: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mass = match sys.mass_matrix(&qdot) {
            Ok(mass) => mass,
            Err(_) => continue,
        };
        let det = linalg::det(&mass).abs();
        det_scale = (0..m).map(|j| mass[j][j].abs()).product();
        if det <= SINGULAR_DET_REL_TOL * det_scale {
            numerically_singular = true;
        }
        sampled_dets.push(det);
        if witness.is_none() {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..m {
                if let Ok(v) = sys.resistive_self_coupling(&qdot, j) {
                    if v.abs() > 1e-12 && best.map_or(true, |(_, bv)| v.abs() > bv.abs()) {
                        best = Some((j, v));
                    }
                }
            }
            witness = best.map(|(coordinate, value)| NonConservativeWitness { coordinate, value });
        }
    }

    let verdict = if !kernel.is_empty() {
        RegularityVerdict::StructurallySingular
    } else if numerically_singular {
        RegularityVerdict::NumericallySingular
    } else {
        RegularityVerdict::Regular
    };
    RegularityReport { verdict, defects, sampled_dets, det_scale, witness }
}

/// Exact structural check used on its own where no sampling is wanted: the
/// kernel of the inductor-row submatrix of the effective N.
pub fn structural_kernel(n_eff: &RatMat, r: usize, k: usize) -> Vec<Vec<crate::exact::Rat>> {
    let rows: Vec<usize> = (r..r + k).collect();
    n_eff.select_rows(&rows).nullspace()
}

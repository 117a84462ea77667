//! Charge charts: exact elimination of Kirchhoff's current constraints.
//!
//! The branch charges x live on the affine subspace B^T x = c. A chart picks
//! m = b - n of them as coordinates q and solves for the rest exactly, giving
//! x(q) = N q + offsets with N rational, B^T N = 0, and the selected rows of N
//! forming an identity. The loop transform relates N to the loop matrix:
//! ct * A^T = N^T with ct square and nonsingular, so currents through N and
//! loop currents through A carry the same information.

use num_traits::Zero;
use thiserror::Error;

use crate::exact::{rat_from_f64, IntMat, Rat, RatMat};
use crate::topology::TopologyMatrices;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("bad coordinate selection: {detail}")]
    BadSelection { detail: String },
    #[error("loop matrix and chart matrix have different kernels: {detail}")]
    KernelMismatch { detail: String },
}

/// A chart on the configuration space M_c.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateChart {
    /// Branch indices of the selected charges, in coordinate order (len m).
    pub selection: Vec<usize>,
    /// b x m rational matrix with x(q) = N q + offsets.
    pub n: RatMat,
    /// Affine offsets, one per branch; zero on selected rows.
    pub offsets: Vec<f64>,
    /// Right-hand side of B^T x = c implied by the initial charges.
    pub c: Vec<f64>,
    /// m x m loop transform with loop_transform * A^T = N^T.
    pub loop_transform: RatMat,
}

/// Build a chart from the topology and initial branch charges. With
/// `selection` absent, dependent charges are chosen by greedy pivoting on B^T
/// by lowest column index and the free columns become the coordinates.
pub fn build_chart(
    topo: &TopologyMatrices,
    initial_charges: &[f64],
    selection: Option<&[usize]>,
) -> Result<CoordinateChart, ChartError> {
    let b = topo.incidence.rows();
    let n = topo.incidence.cols();
    let m = b - n;
    assert_eq!(initial_charges.len(), b, "one initial charge per branch");
    let bt = topo.incidence.transpose().to_rat();

    let (sel, dep): (Vec<usize>, Vec<usize>) = match selection {
        Some(sel) => {
            if sel.len() != m {
                return Err(ChartError::BadSelection {
                    detail: format!("{} charges selected, chart needs m = {m}", sel.len()),
                });
            }
            let mut seen = vec![false; b];
            for &s in sel {
                if s >= b || seen[s] {
                    return Err(ChartError::BadSelection { detail: "selection repeats or exceeds branch count".into() });
                }
                seen[s] = true;
            }
            let dep: Vec<usize> = (0..b).filter(|i| !seen[*i]).collect();
            (sel.to_vec(), dep)
        }
        None => {
            let (_, pivots) = bt.rref();
            let dep = pivots;
            let sel: Vec<usize> = (0..b).filter(|i| !dep.contains(i)).collect();
            (sel, dep)
        }
    };

    // Solve M_dep x_dep = c - M_sel q for x_dep: rows of N on the dependent
    // branches are -M_dep^{-1} M_sel.
    let m_dep = bt.select_columns(&dep);
    let m_sel = bt.select_columns(&sel);
    let Some(neg_ndep) = m_dep.solve(&m_sel) else {
        return Err(ChartError::BadSelection {
            detail: "complementary charges are not independent (dependent submatrix of B^T is singular)".into(),
        });
    };
    let mut nmat = RatMat::zeros(b, m);
    for (j, &s) in sel.iter().enumerate() {
        nmat.set(s, j, Rat::from_integer(1.into()));
    }
    for (di, &d) in dep.iter().enumerate() {
        for j in 0..m {
            nmat.set(d, j, -neg_ndep.get(di, j).clone());
        }
    }
    debug_assert!(bt.mul(&nmat).is_zero(), "B^T N must vanish exactly");

    // offsets = x0 - N q0 with q0 the selected initial charges; exact zero on
    // the selected rows by construction.
    let nf = nmat.to_f64();
    let q0: Vec<f64> = sel.iter().map(|&s| initial_charges[s]).collect();
    let offsets: Vec<f64> = (0..b)
        .map(|l| {
            let lift: f64 = nf[l].iter().zip(&q0).map(|(a, q)| a * q).sum();
            initial_charges[l] - lift
        })
        .collect();
    let c: Vec<f64> = (0..n)
        .map(|row| (0..b).map(|l| topo.incidence.get(l, row) as f64 * initial_charges[l]).sum())
        .collect();

    let lt = loop_transform(&topo.loops, &nmat)?;
    Ok(CoordinateChart { selection: sel, n: nmat, offsets, c, loop_transform: lt })
}

/// Solve ct * A^T = N^T exactly. Errors when Ker(A^T) differs from Ker(N^T)
/// (the loop matrix and the chart disagree about the cycle space).
pub fn loop_transform(a: &IntMat, n: &RatMat) -> Result<RatMat, ChartError> {
    let m = a.cols();
    assert_eq!(n.cols(), m, "loop count mismatch");
    let ar = a.to_rat();
    // Column spaces must agree (equivalently Ker A^T = Ker N^T).
    let stacked = ar.hstack(n).rank();
    if stacked != ar.rank() || stacked != n.rank() {
        return Err(ChartError::KernelMismatch {
            detail: format!("rank(A) = {}, rank(N) = {}, rank([A N]) = {stacked}", ar.rank(), n.rank()),
        });
    }
    // A ct^T = N via the exact normal equations (A^T A is invertible at rank m).
    let at = ar.transpose();
    let gram = at.mul(&ar);
    let rhs = at.mul(n);
    let ct_t = gram.solve(&rhs).ok_or_else(|| ChartError::KernelMismatch {
        detail: "loop matrix Gram matrix is singular".into(),
    })?;
    if ar.mul(&ct_t) != *n {
        return Err(ChartError::KernelMismatch { detail: "no exact transform maps A to N".into() });
    }
    let ct = ct_t.transpose();
    debug_assert!(!ct.det().is_zero(), "loop transform must be invertible");
    Ok(ct)
}

impl CoordinateChart {
    pub fn m(&self) -> usize {
        self.n.cols()
    }

    pub fn b(&self) -> usize {
        self.n.rows()
    }

    /// Exact check that x(q) = N q + offsets satisfies B^T x = c, treating the
    /// float offsets and charges as exact rationals.
    pub fn verify_round_trip(&self, bt: &IntMat, q: &[f64]) -> bool {
        let qr: Vec<Rat> = q.iter().map(|&x| rat_from_f64(x)).collect();
        let mut x = self.n.mul_vec(&qr);
        for (xi, off) in x.iter_mut().zip(&self.offsets) {
            *xi += rat_from_f64(*off);
        }
        let lhs = bt.to_rat().mul_vec(&x);
        let rhs: Vec<Rat> = self.c.iter().map(|&v| rat_from_f64(v)).collect();
        lhs == rhs
    }
}

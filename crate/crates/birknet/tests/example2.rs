//! End-to-end checks of the second fixture: a linear resistor triangle
//! feeding two storage meshes. Eliminating the triangle loop leaves a mixed
//! resistor-capacitor cycle, which only a series inductor regularizes.

mod common;

use birknet::birkhoff::{regularity, DefectKind, RegularityVerdict};
use birknet::devices::ConstitutiveModel;
use birknet::dynamics::{dissipation_certificate, integrate, SimState};
use birknet::exact::{IntMat, RatMat};
use birknet::reduction::{auto_reduce, reduce_resistor_loop_linear, Pipeline, ReduceAction, Strategy};
use birknet::AnySystem;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sys2() -> birknet::BirkhoffSystem {
    birknet::compile(&common::fixture("ex2.net")).unwrap()
}

// Fixture device constants.
const R1: f64 = 1.0;
const R2: f64 = 2.0;
const R3: f64 = 3.0;
const R4: f64 = 4.0;
const R5: f64 = 5.0;
const L1: f64 = 1.0;
const L2: f64 = 2.0;
const E1: f64 = 1.0;
const E2: f64 = 0.5;

#[test]
fn counts_and_shapes() {
    let sys = sys2();
    assert_eq!(sys.devices.r(), 5);
    assert_eq!(sys.devices.k(), 2);
    assert_eq!(sys.devices.p(), 2);
    assert_eq!(sys.b(), 9);
    assert_eq!(sys.graph.n(), 5);
    assert_eq!(sys.m(), 4);
    let ids: Vec<&str> = sys.graph.branch_ids.iter().map(String::as_str).collect();
    assert_eq!(ids, ["rlin1", "rlin2", "rlin3", "r4", "r5", "l1", "l2", "c1", "c2"]);
    assert_eq!(sys.chart.selection, vec![0, 4, 7, 8]);
}

#[test]
fn incidence_matrix_is_reproduced() {
    let sys = sys2();
    let expected = IntMat::from_rows(&[
        vec![0, -1, 1, 0, 0],
        vec![0, 1, 0, 0, 0],
        vec![0, 0, -1, 0, 0],
        vec![0, 0, 0, 0, -1],
        vec![0, 0, -1, 1, 0],
        vec![-1, 1, 0, 0, 0],
        vec![0, 0, 0, 1, 0],
        vec![1, 0, 0, 0, 0],
        vec![0, 0, 0, -1, 1],
    ]);
    assert_eq!(sys.topo.incidence, expected);
}

#[test]
fn loop_matrix_is_reproduced() {
    let sys = sys2();
    let expected = IntMat::from_rows(&[
        vec![1, 0, 0, 0],
        vec![1, 0, 0, -1],
        vec![1, -1, 0, 0],
        vec![0, 0, 1, 0],
        vec![0, 1, 0, 0],
        vec![0, 0, 0, 1],
        vec![0, -1, 1, 0],
        vec![0, 0, 0, 1],
        vec![0, 0, 1, 0],
    ]);
    assert_eq!(sys.topo.loops, expected);
}

#[test]
fn chart_matrix_is_reproduced() {
    let sys = sys2();
    let expected = RatMat::from_int_rows(&[
        vec![1, 0, 0, 0],
        vec![1, 0, -1, 0],
        vec![1, -1, 0, 0],
        vec![0, 0, 0, 1],
        vec![0, 1, 0, 0],
        vec![0, 0, 1, 0],
        vec![0, -1, 0, 1],
        vec![0, 0, 1, 0],
        vec![0, 0, 0, 1],
    ]);
    assert_eq!(sys.chart.n, expected);
}

/// Hand transcription of the four covariant components at the fixture's
/// device values (all models linear).
fn transcribed(q: &[f64], qd: &[f64], qdd: &[f64]) -> [f64; 4] {
    [
        (R1 + R2 + R3) * qd[0] - R3 * qd[1] - R2 * qd[2],
        L2 * qdd[1] - L2 * qdd[3] - R3 * qd[0] + R3 * qd[1] + R5 * qd[1],
        L1 * qdd[2] - R2 * qd[0] + R2 * qd[2] + E1 * q[2],
        -L2 * qdd[1] + L2 * qdd[3] + R4 * qd[3] + E2 * q[3],
    ]
}

#[test]
fn components_match_hand_transcription() {
    let sys = sys2();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let qd: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let qdd: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = sys.components(&q, &qd, &qdd).unwrap();
        let want = transcribed(&q, &qd, &qdd);
        for j in 0..4 {
            assert!(
                (got[j] - want[j]).abs() <= 1e-10,
                "component {j}: got {} want {}",
                got[j],
                want[j]
            );
        }
    }
}

#[test]
fn triangle_elimination_yields_the_parallel_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..10 {
        let r1 = rng.gen_range(0.5..5.0);
        let r2 = rng.gen_range(0.5..5.0);
        let r3 = rng.gen_range(0.5..5.0);
        let sys = birknet::compile(&common::ex2_with_resistances(r1, r2, r3)).unwrap();
        let red = reduce_resistor_loop_linear(sys.into(), 0).unwrap();
        let any = AnySystem::Reduced(red);
        assert_eq!(any.coordinate_ids(), ["r5", "c1", "c2"]);

        // The reduced resistive force is linear; read its matrix by columns.
        let h0 = any.resistive_force(&[0.0; 3]).unwrap();
        let mut k = [[0.0; 3]; 3];
        for j in 0..3 {
            let mut e = [0.0; 3];
            e[j] = 1.0;
            let h = any.resistive_force(&e).unwrap();
            for i in 0..3 {
                k[i][j] = h[i] - h0[i];
            }
        }

        let total = r1 + r2 + r3;
        let c1 = r1 * r2 / total;
        let c2 = r1 * r3 / total;
        let c3 = r2 * r3 / total;
        assert!((-k[0][1] - c3).abs() <= 1e-12, "c3: {} vs {c3}", -k[0][1]);
        assert!((k[0][0] - R5 - c3 - c2).abs() <= 1e-12, "c2: {} vs {c2}", k[0][0] - R5 - c3);
        assert!((k[1][1] - c3 - c1).abs() <= 1e-12, "c1: {} vs {c1}", k[1][1] - c3);
        // Cross-couplings into the c2 coordinate vanish: that loop shares no
        // resistor with the eliminated triangle.
        assert!(k[0][2].abs() <= 1e-12 && k[2][0].abs() <= 1e-12);
        assert!((k[2][2] - R4).abs() <= 1e-12);
        // Symmetry of the linear part.
        assert!((k[0][1] - k[1][0]).abs() <= 1e-12);
    }
}

#[test]
fn elimination_coefficients_match_the_divider_formula() {
    let sys = sys2();
    let red = reduce_resistor_loop_linear(sys.into(), 0).unwrap();
    let total = R1 + R2 + R3;
    let gamma = red.elimination_coefficients().unwrap();
    assert!((gamma[0] - R3 / total).abs() <= 1e-12);
    assert!((gamma[1] - R2 / total).abs() <= 1e-12);
    assert!(gamma[2].abs() <= 1e-12);
}

#[test]
fn reduced_dissipation_at_unit_r5_current() {
    let sys = sys2();
    let red = reduce_resistor_loop_linear(sys.into(), 0).unwrap();
    let any = AnySystem::Reduced(red);
    let total = R1 + R2 + R3;
    let expected = R3 * (R1 + R2) / total + R5;
    let p = any.resistor_power(&[1.0, 0.0, 0.0]).unwrap();
    assert!((p - expected).abs() <= 1e-12, "{p} vs {expected}");
}

#[test]
fn reduction_leaves_a_mixed_defect_then_insertion_regularizes() {
    let sys = sys2();

    // Before: the inductor-row kernel is two-dimensional, so two defect
    // directions show up — the resistor triangle and a mixed cycle.
    let report = regularity(&sys.clone().into(), 10, 42);
    assert_eq!(report.verdict, RegularityVerdict::StructurallySingular);
    assert_eq!(report.defects.len(), 2);
    let kinds: Vec<&DefectKind> = report.defects.iter().map(|d| &d.kind).collect();
    assert!(kinds.contains(&&DefectKind::Resistor));
    assert!(kinds.contains(&&DefectKind::Mixed));

    // auto res-reduce finds exactly the triangle.
    let mut pipeline = Pipeline::new(sys);
    let actions = auto_reduce(&mut pipeline, Strategy::ResReduce, &ConstitutiveModel::Linear(1.0)).unwrap();
    assert_eq!(actions, vec![ReduceAction::ResReduceLinear { coordinate: "rlin1".into() }]);

    // Still singular: r5 and c2 close a mixed cycle with the triangle gone.
    let mid = pipeline.system().unwrap();
    let report = regularity(&mid, 10, 42);
    assert_eq!(report.verdict, RegularityVerdict::StructurallySingular);
    assert_eq!(report.defects.len(), 1);
    assert_eq!(report.defects[0].kind, DefectKind::Mixed);
    let mut ids: Vec<&str> = report.defects[0].branches.iter().map(|(id, _)| id.as_str()).collect();
    ids.sort();
    assert_eq!(ids, ["c2", "r4", "r5", "rlin3"]);

    // A series inductor through the r5 branch fixes it.
    pipeline
        .apply(&ReduceAction::InsertInductor {
            coordinate: "r5".into(),
            model: ConstitutiveModel::Linear(1.0),
        })
        .unwrap();
    let last = pipeline.system().unwrap();
    assert_eq!(last.dim(), 3);
    let report = regularity(&last, 100, 42);
    assert_eq!(report.verdict, RegularityVerdict::Regular, "dets {:?}", report.sampled_dets);
    assert!(report.witness.is_some(), "a resistive witness certifies non-conservativeness");
}

#[test]
fn regularized_trajectory_passes_the_dissipation_certificate() {
    let sys = sys2();
    let mut pipeline = Pipeline::new(sys);
    pipeline.apply(&ReduceAction::ResReduceLinear { coordinate: "rlin1".into() }).unwrap();
    pipeline
        .apply(&ReduceAction::InsertInductor {
            coordinate: "r5".into(),
            model: ConstitutiveModel::Linear(1.0),
        })
        .unwrap();
    let any = pipeline.system().unwrap();

    let initial = SimState { t: 0.0, q: vec![0.3, -0.2, 0.25], qdot: vec![0.1, 0.05, -0.15] };
    let traj = integrate(&any, &initial, 1e-3, 4000).unwrap();
    let report = dissipation_certificate(&any, &traj);
    assert!(!report.conservative);
    assert!(report.passed, "violations: {:?}", report.violations);
    assert!(report.min_p_diss >= -1e-12);
    assert!(*traj.energy.last().unwrap() < traj.energy[0]);
}

//! Shared helpers for the integration suites: fixture loading and a seeded
//! random-circuit generator.
//!
//! The generator builds small connected multigraphs as a random recursive
//! tree plus one to three chords, then assigns device models by flavor. It
//! emits netlist text so every generated circuit also exercises the parser
//! and elaboration path.

#![allow(dead_code)]

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> String {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures");
    std::fs::read_to_string(format!("{dir}/{name}")).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

/// The ex2 fixture with the triangle resistances replaced.
pub fn ex2_with_resistances(r1: f64, r2: f64, r3: f64) -> String {
    let text = fixture("ex2.net")
        .replace("model rl1 linear 1.0", &format!("model rl1 linear {r1:?}"))
        .replace("model rl2 linear 2.0", &format!("model rl2 linear {r2:?}"))
        .replace("model rl3 linear 3.0", &format!("model rl3 linear {r3:?}"));
    assert!(text.contains(&format!("{r1:?}")), "fixture text drifted from the replacement anchors");
    text
}

/// Device mix of a generated circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavor {
    /// Uniform R/L/C assignment everywhere.
    Mixed,
    /// The first chord's fundamental cycle carries only resistors and
    /// capacitors, so the mass matrix is singular by construction.
    ForcedDefect,
    /// Every chord is an inductor and tree branches are resistors or
    /// capacitors: each loop contains an inductor and all devices are
    /// passive, several of them nonlinear.
    PassiveRegular,
    /// Like `PassiveRegular` but with capacitors on every tree branch, so
    /// the circuit has no resistors and conserves energy.
    Conservative,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    R,
    L,
    C,
}

/// Edge indices of the unique tree path between `a` and `b`. Tree edge
/// `i` joins node `i + 1` to its parent `tree[i].0 < i + 1`, so the path is
/// found by climbing whichever endpoint has the larger index.
fn tree_path_edges(tree: &[(usize, usize)], a: usize, b: usize) -> Vec<usize> {
    let parent = |v: usize| tree[v - 1].0;
    let (mut x, mut y) = (a, b);
    let mut out = Vec::new();
    while x != y {
        if x > y {
            out.push(x - 1);
            x = parent(x);
        } else {
            out.push(y - 1);
            y = parent(y);
        }
    }
    out
}

fn resistor_model(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..3) {
        0 => format!("linear {:?}", rng.gen_range(0.5..2.0)),
        1 => format!("poly 0 {:?} 0 {:?}", rng.gen_range(0.5..2.0), rng.gen_range(0.0..0.5)),
        _ => format!("tanh {:?} {:?}", rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)),
    }
}

fn inductor_model(rng: &mut ChaCha8Rng) -> String {
    if rng.gen_bool(0.5) {
        format!("linear {:?}", rng.gen_range(0.5..2.0))
    } else {
        // L(i) = c0 + c2 i^2 stays positive.
        format!("poly {:?} 0 {:?}", rng.gen_range(0.5..2.0), rng.gen_range(0.0..0.5))
    }
}

fn capacitor_model(rng: &mut ChaCha8Rng) -> String {
    if rng.gen_bool(0.5) {
        format!("linear {:?}", rng.gen_range(0.5..2.0))
    } else {
        // v(x) = e1 x + e3 x^3 is strictly increasing.
        format!("poly 0 {:?} 0 {:?}", rng.gen_range(0.5..2.0), rng.gen_range(0.0..0.5))
    }
}

/// A random connected circuit as netlist text. Loops and coordinates are
/// left to the fundamental-cycle and auto-selection machinery.
pub fn random_netlist(seed: u64, flavor: Flavor) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = rng.gen_range(3..=6usize);

    let mut edges: Vec<(usize, usize)> = Vec::new();
    for v in 1..nodes {
        edges.push((rng.gen_range(0..v), v));
    }
    let tree_count = edges.len();
    for _ in 0..rng.gen_range(1..=3usize) {
        let u = rng.gen_range(0..nodes);
        let mut v = rng.gen_range(0..nodes);
        while v == u {
            v = rng.gen_range(0..nodes);
        }
        edges.push((u, v));
    }

    let mut kinds: Vec<Kind> = (0..edges.len())
        .map(|i| {
            let is_chord = i >= tree_count;
            match flavor {
                Flavor::Mixed | Flavor::ForcedDefect => match rng.gen_range(0..3) {
                    0 => Kind::R,
                    1 => Kind::L,
                    _ => Kind::C,
                },
                Flavor::PassiveRegular if is_chord => Kind::L,
                Flavor::PassiveRegular => {
                    if rng.gen_bool(0.5) {
                        Kind::R
                    } else {
                        Kind::C
                    }
                }
                Flavor::Conservative if is_chord => Kind::L,
                Flavor::Conservative => Kind::C,
            }
        })
        .collect();

    if flavor == Flavor::ForcedDefect {
        let (u, v) = edges[tree_count];
        let mut cycle = tree_path_edges(&edges[..tree_count], u, v);
        cycle.push(tree_count);
        for i in cycle {
            kinds[i] = if rng.gen_bool(0.5) { Kind::R } else { Kind::C };
        }
    }

    let mut text = String::from("node");
    for v in 0..nodes {
        let _ = write!(text, " n{v}");
    }
    text.push_str("\nref n0\n");

    let (mut nr, mut nl, mut nc) = (0usize, 0usize, 0usize);
    let mut branch_lines = String::new();
    for (i, &(u, v)) in edges.iter().enumerate() {
        let (id, letter, model) = match kinds[i] {
            Kind::R => {
                nr += 1;
                (format!("r{nr}"), "R", resistor_model(&mut rng))
            }
            Kind::L => {
                nl += 1;
                (format!("l{nl}"), "L", inductor_model(&mut rng))
            }
            Kind::C => {
                nc += 1;
                (format!("c{nc}"), "C", capacitor_model(&mut rng))
            }
        };
        let _ = writeln!(text, "model m_{id} {model}");
        let _ = writeln!(branch_lines, "branch {id} n{u} n{v} {letter} m_{id}");
    }
    text.push_str(&branch_lines);
    text
}

/// Compile generated text, panicking with the seed on any failure.
pub fn compile_random(seed: u64, flavor: Flavor) -> birknet::BirkhoffSystem {
    let text = random_netlist(seed, flavor);
    birknet::compile(&text).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{text}"))
}

//! Circuit graph topology: incidence and independent-loop matrices, plus the
//! exact structural checks relating them.
//!
//! Conventions: the incidence matrix B is b x n over the non-reference nodes
//! (entry +1 where a branch enters a node, -1 where it leaves); the loop
//! matrix A is b x m with one column per independent loop (entry +-1 as the
//! loop traverses the branch with or against its orientation). Everything in
//! this module is exact integer/rational arithmetic; Tellegen's identity
//! B^T A = 0 holds exactly, never approximately.

use thiserror::Error;

use crate::exact::{IntMat, RatMat};

/// Directed multigraph of a circuit in canonical branch order.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitGraph {
    pub node_names: Vec<String>,
    /// Index of the reference node in `node_names`.
    pub reference: usize,
    /// Branch l runs from `branches[l].0` (tail) to `branches[l].1` (head).
    pub branches: Vec<(usize, usize)>,
    pub branch_ids: Vec<String>,
}

impl CircuitGraph {
    /// Number of branches.
    pub fn b(&self) -> usize {
        self.branches.len()
    }

    /// Number of non-reference nodes.
    pub fn n(&self) -> usize {
        self.node_names.len() - 1
    }

    /// Number of independent loops, b - n.
    pub fn m(&self) -> usize {
        self.b() - self.n()
    }

    /// Non-reference node indices in declaration order (column order of B).
    pub fn chart_nodes(&self) -> Vec<usize> {
        (0..self.node_names.len()).filter(|&i| i != self.reference).collect()
    }
}

/// The incidence/loop matrix pair of one circuit.
#[derive(Clone, Debug, PartialEq)]
pub struct TopologyMatrices {
    /// b x n incidence matrix over non-reference nodes.
    pub incidence: IntMat,
    /// b x m independent loop matrix.
    pub loops: IntMat,
}

impl TopologyMatrices {
    pub fn build(graph: &CircuitGraph, walks: Option<&[Vec<(usize, i8)>]>) -> Result<Self, TopologyError> {
        let incidence = incidence_matrix(graph);
        let loops = loop_matrix(graph, walks)?;
        Ok(TopologyMatrices { incidence, loops })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("expected {expected} loops (b - n), netlist supplies {got}")]
    BadLoopCount { expected: usize, got: usize },
    #[error("loop {index} is not a closed walk: {reason}")]
    NotAClosedWalk { index: usize, reason: String },
    #[error("loop matrix is rank deficient: rank {rank} < {m} loops")]
    RankDeficient { rank: usize, m: usize },
}

/// Build the b x n incidence matrix over non-reference nodes.
pub fn incidence_matrix(graph: &CircuitGraph) -> IntMat {
    let cols = graph.chart_nodes();
    let col_of = |node: usize| cols.iter().position(|&c| c == node);
    let mut b = IntMat::zeros(graph.b(), graph.n());
    for (l, &(tail, head)) in graph.branches.iter().enumerate() {
        if let Some(j) = col_of(tail) {
            b.set(l, j, -1);
        }
        if let Some(j) = col_of(head) {
            b.set(l, j, 1);
        }
    }
    b
}

/// Build the b x m loop matrix. With `walks` supplied, each walk is validated
/// as a closed, branch-disjoint walk and becomes one column; otherwise the
/// fundamental cycles of the deterministic spanning tree (lowest branch index
/// first) are used.
pub fn loop_matrix(graph: &CircuitGraph, walks: Option<&[Vec<(usize, i8)>]>) -> Result<IntMat, TopologyError> {
    let m = graph.m();
    let a = match walks {
        Some(walks) => {
            if walks.len() != m {
                return Err(TopologyError::BadLoopCount { expected: m, got: walks.len() });
            }
            let mut a = IntMat::zeros(graph.b(), m);
            for (j, walk) in walks.iter().enumerate() {
                validate_walk(graph, j, walk)?;
                for &(l, s) in walk {
                    a.set(l, j, s as i64);
                }
            }
            a
        }
        None => fundamental_loop_matrix(graph),
    };
    let rank = a.rank();
    if rank != m {
        return Err(TopologyError::RankDeficient { rank, m });
    }
    Ok(a)
}

fn validate_walk(graph: &CircuitGraph, index: usize, walk: &[(usize, i8)]) -> Result<(), TopologyError> {
    if walk.is_empty() {
        return Err(TopologyError::NotAClosedWalk { index, reason: "empty walk".into() });
    }
    let mut used = std::collections::HashSet::new();
    for &(l, _) in walk {
        if !used.insert(l) {
            return Err(TopologyError::NotAClosedWalk {
                index,
                reason: format!("branch '{}' appears twice", graph.branch_ids[l]),
            });
        }
    }
    let ends = |l: usize, s: i8| {
        let (tail, head) = graph.branches[l];
        if s > 0 { (tail, head) } else { (head, tail) }
    };
    let (start, mut at) = ends(walk[0].0, walk[0].1);
    for &(l, s) in &walk[1..] {
        let (from, to) = ends(l, s);
        if from != at {
            return Err(TopologyError::NotAClosedWalk {
                index,
                reason: format!(
                    "branch '{}' starts at node '{}' but the walk is at '{}'",
                    graph.branch_ids[l], graph.node_names[from], graph.node_names[at]
                ),
            });
        }
        at = to;
    }
    if at != start {
        return Err(TopologyError::NotAClosedWalk {
            index,
            reason: format!("walk ends at node '{}', started at '{}'", graph.node_names[at], graph.node_names[start]),
        });
    }
    Ok(())
}

/// Spanning tree by scanning branches in index order (lowest index first);
/// each non-tree branch (chord) contributes its fundamental cycle, oriented
/// along the chord.
fn fundamental_loop_matrix(graph: &CircuitGraph) -> IntMat {
    let nodes = graph.node_names.len();
    // union-find over nodes
    let mut parent: Vec<usize> = (0..nodes).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    let mut tree = Vec::new();
    let mut chords = Vec::new();
    for (l, &(u, v)) in graph.branches.iter().enumerate() {
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru == rv {
            chords.push(l);
        } else {
            parent[ru] = rv;
            tree.push(l);
        }
    }
    // adjacency over tree branches
    let mut adj: Vec<Vec<(usize, usize, i8)>> = vec![Vec::new(); nodes]; // (neighbor, branch, sign tail->head)
    for &l in &tree {
        let (u, v) = graph.branches[l];
        adj[u].push((v, l, 1));
        adj[v].push((u, l, -1));
    }
    let mut a = IntMat::zeros(graph.b(), chords.len());
    for (j, &chord) in chords.iter().enumerate() {
        let (tail, head) = graph.branches[chord];
        a.set(chord, j, 1);
        // tree path head -> tail closes the cycle in the chord's direction
        let path = tree_path(&adj, head, tail);
        for (l, s) in path {
            a.set(l, j, s as i64);
        }
    }
    a
}

/// Signed tree path from `from` to `to` by depth-first search.
fn tree_path(adj: &[Vec<(usize, usize, i8)>], from: usize, to: usize) -> Vec<(usize, i8)> {
    let mut stack = vec![(from, Vec::new())];
    let mut seen = vec![false; adj.len()];
    seen[from] = true;
    while let Some((at, path)) = stack.pop() {
        if at == to {
            return path;
        }
        for &(next, branch, sign) in &adj[at] {
            if !seen[next] {
                seen[next] = true;
                let mut p = path.clone();
                p.push((branch, sign));
                stack.push((next, p));
            }
        }
    }
    unreachable!("spanning tree connects all nodes");
}

/// Exact structural facts about an incidence/loop matrix pair.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureReport {
    pub b: usize,
    pub n: usize,
    pub m: usize,
    pub rank_incidence: usize,
    pub rank_loops: usize,
    /// B^T A = 0 exactly (Tellegen).
    pub product_zero: bool,
    /// Ker(B^T) = Im(A), checked by exact rank of the stacked basis.
    pub kernel_match: bool,
}

impl StructureReport {
    pub fn all_ok(&self) -> bool {
        self.b == self.m + self.n
            && self.rank_incidence == self.n
            && self.rank_loops == self.m
            && self.product_zero
            && self.kernel_match
    }
}

/// Verify rank(B) = n, rank(A) = m = b - n, B^T A = 0, and Ker(B^T) = Im(A).
pub fn verify_kirchhoff_structure(b: &IntMat, a: &IntMat) -> StructureReport {
    let (bb, n) = (b.rows(), b.cols());
    let m = a.cols();
    let rank_incidence = b.rank();
    let rank_loops = a.rank();
    let product_zero = b.transpose().mul(a).is_zero();
    // Im(A) subset of Ker(B^T) follows from product_zero; equality needs the
    // kernel basis to add no new directions to the column space of A.
    let kernel = b.to_rat().transpose().nullspace();
    let kernel_match = if kernel.is_empty() {
        rank_loops == 0
    } else {
        let kmat = RatMat::from_rows(kernel).transpose();
        a.to_rat().hstack(&kmat).rank() == rank_loops
    };
    StructureReport { b: bb, n, m, rank_incidence, rank_loops, product_zero, kernel_match }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_antiparallel() -> CircuitGraph {
        CircuitGraph {
            node_names: vec!["n1".into(), "n2".into()],
            reference: 1,
            branches: vec![(1, 0), (0, 1)],
            branch_ids: vec!["b1".into(), "b2".into()],
        }
    }

    #[test]
    fn incidence_of_two_antiparallel_branches() {
        let b = incidence_matrix(&two_antiparallel());
        assert_eq!(b.rows(), 2);
        assert_eq!(b.cols(), 1);
        assert_eq!(b.get(0, 0), 1);
        assert_eq!(b.get(1, 0), -1);
    }

    #[test]
    fn fundamental_loops_satisfy_tellegen() {
        // diamond with a diagonal: 4 nodes, 6 branches, m = 3
        let g = CircuitGraph {
            node_names: (0..4).map(|i| format!("n{i}")).collect(),
            reference: 0,
            branches: vec![(0, 1), (1, 2), (2, 3), (3, 0), (1, 3), (0, 2)],
            branch_ids: (0..6).map(|i| format!("b{i}")).collect(),
        };
        let b = incidence_matrix(&g);
        let a = loop_matrix(&g, None).unwrap();
        assert_eq!(a.cols(), 3);
        let report = verify_kirchhoff_structure(&b, &a);
        assert!(report.all_ok(), "{report:?}");
    }

    #[test]
    fn supplied_walks_validate_closure() {
        let g = two_antiparallel();
        // valid: b1 forward (n2->n1), b2 forward (n1->n2)
        let a = loop_matrix(&g, Some(&[vec![(0, 1), (1, 1)]])).unwrap();
        assert_eq!(a.get(0, 0), 1);
        assert_eq!(a.get(1, 0), 1);
        // wrong sign: walk does not chain
        match loop_matrix(&g, Some(&[vec![(0, 1), (1, -1)]])) {
            Err(TopologyError::NotAClosedWalk { .. }) => {}
            other => panic!("expected NotAClosedWalk, got {other:?}"),
        }
        // wrong count
        match loop_matrix(&g, Some(&[])) {
            Err(TopologyError::BadLoopCount { expected: 1, got: 0 }) => {}
            other => panic!("expected BadLoopCount, got {other:?}"),
        }
    }

    #[test]
    fn duplicated_loop_is_rank_deficient() {
        // triangle plus a parallel edge: m = 2, give the same loop twice
        let g = CircuitGraph {
            node_names: vec!["a".into(), "b".into(), "c".into()],
            reference: 0,
            branches: vec![(0, 1), (1, 2), (2, 0), (0, 1)],
            branch_ids: vec!["e1".into(), "e2".into(), "e3".into(), "e4".into()],
        };
        let walk = vec![(0usize, 1i8), (1, 1), (2, 1)];
        match loop_matrix(&g, Some(&[walk.clone(), walk])) {
            Err(TopologyError::RankDeficient { rank: 1, m: 2 }) => {}
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }
}

//! Plain-text netlist parsing and elaboration.
//!
//! One record per line, `#` starts a comment (full-line or trailing):
//!
//! ```text
//! node <name>...
//! ref <name>
//! model <id> linear <value>
//! model <id> poly <c0> <c1> ... <cK>
//! model <id> tanh <a> <b>
//! branch <id> <from> <to> <R|RV|L|C> <model-id>
//! loop <id1>:<+|-> <id2>:<+|-> ...
//! coords <charge-name>...
//! ```
//!
//! Parsing is total: every line is examined and all diagnostics are returned
//! together. Elaboration reorders branches into the canonical
//! resistor/inductor/capacitor blocks (stable within each block) and builds
//! the device table and circuit graph.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::devices::{
    passivity_check, ConstitutiveModel, DeviceSet, Resistor, ResistorControl, Storage,
};
use crate::topology::CircuitGraph;

/// Grid on which voltage-controlled resistor models must be strictly increasing.
pub const RV_MONOTONE_RANGE: (f64, f64) = (-100.0, 100.0);
pub const RV_MONOTONE_SAMPLES: usize = 4001;
/// Default passivity screening grid (per-side sample count).
pub const PASSIVITY_RANGE: (f64, f64) = (-10.0, 10.0);
pub const PASSIVITY_SAMPLES: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchKind {
    ResistorCurrent,
    ResistorVoltage,
    Inductor,
    Capacitor,
}

impl BranchKind {
    fn tag(self) -> &'static str {
        match self {
            BranchKind::ResistorCurrent => "R",
            BranchKind::ResistorVoltage => "RV",
            BranchKind::Inductor => "L",
            BranchKind::Capacitor => "C",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub kind: BranchKind,
    pub model: String,
}

/// Parsed netlist document. Equality ignores formatting: parse, serialize and
/// re-parse yield an equal value.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct NetlistDoc {
    pub nodes: Vec<String>,
    pub reference: String,
    pub models: BTreeMap<String, ConstitutiveModel>,
    pub branches: Vec<BranchSpec>,
    /// Independent loops as signed branch-id walks, in file order.
    pub loops: Option<Vec<Vec<(String, i8)>>>,
    /// Selected charge coordinates, named by branch id.
    pub coords: Option<Vec<String>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagnosticKind {
    SyntaxError,
    DuplicateId,
    UnknownNode,
    UnknownModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub line: usize,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn diag(line: usize, kind: DiagnosticKind, message: impl Into<String>) -> Diagnostic {
    Diagnostic { line, kind, message: message.into() }
}

/// Parse netlist text. Returns the document, or every diagnostic found.
pub fn parse_netlist(text: &str) -> Result<NetlistDoc, Vec<Diagnostic>> {
    let mut doc = NetlistDoc::default();
    let mut diags = Vec::new();
    let mut node_lines: HashMap<String, usize> = HashMap::new();
    let mut branch_lines: HashMap<String, usize> = HashMap::new();
    let mut ref_line: Option<usize> = None;
    // (line, branch) pairs resolved after all records are read
    let mut pending_branches: Vec<(usize, BranchSpec)> = Vec::new();
    let mut pending_loops: Vec<(usize, Vec<(String, i8)>)> = Vec::new();
    let mut pending_coords: Option<(usize, Vec<String>)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "node" => {
                if tokens.len() < 2 {
                    diags.push(diag(lineno, DiagnosticKind::SyntaxError, "node record needs at least one name"));
                    continue;
                }
                for name in &tokens[1..] {
                    if node_lines.contains_key(*name) {
                        diags.push(diag(
                            lineno,
                            DiagnosticKind::DuplicateId,
                            format!("node '{name}' already declared on line {}", node_lines[*name]),
                        ));
                    } else {
                        node_lines.insert((*name).to_string(), lineno);
                        doc.nodes.push((*name).to_string());
                    }
                }
            }
            "ref" => {
                if tokens.len() != 2 {
                    diags.push(diag(lineno, DiagnosticKind::SyntaxError, "ref record needs exactly one node name"));
                    continue;
                }
                if let Some(prev) = ref_line {
                    diags.push(diag(
                        lineno,
                        DiagnosticKind::DuplicateId,
                        format!("reference node already declared on line {prev}"),
                    ));
                    continue;
                }
                ref_line = Some(lineno);
                doc.reference = tokens[1].to_string();
            }
            "model" => {
                if tokens.len() < 3 {
                    diags.push(diag(lineno, DiagnosticKind::SyntaxError, "model record needs an id and a kind"));
                    continue;
                }
                let id = tokens[1];
                let params: Result<Vec<f64>, _> = tokens[3..].iter().map(|t| t.parse::<f64>()).collect();
                let Ok(params) = params else {
                    diags.push(diag(lineno, DiagnosticKind::SyntaxError, format!("model '{id}': non-numeric parameter")));
                    continue;
                };
                let model = match (tokens[2], params.len()) {
                    ("linear", 1) => ConstitutiveModel::Linear(params[0]),
                    ("poly", n) if n >= 1 => ConstitutiveModel::Poly(params),
                    ("tanh", 2) => ConstitutiveModel::Tanh { a: params[0], b: params[1] },
                    (kind @ ("linear" | "poly" | "tanh"), n) => {
                        diags.push(diag(
                            lineno,
                            DiagnosticKind::SyntaxError,
                            format!("model '{id}': wrong parameter count {n} for kind '{kind}'"),
                        ));
                        continue;
                    }
                    (kind, _) => {
                        diags.push(diag(lineno, DiagnosticKind::SyntaxError, format!("model '{id}': unknown kind '{kind}'")));
                        continue;
                    }
                };
                if doc.models.contains_key(id) {
                    diags.push(diag(lineno, DiagnosticKind::DuplicateId, format!("model '{id}' already declared")));
                } else {
                    doc.models.insert(id.to_string(), model);
                }
            }
            "branch" => {
                if tokens.len() != 6 {
                    diags.push(diag(
                        lineno,
                        DiagnosticKind::SyntaxError,
                        "branch record needs: id, from, to, kind (R|RV|L|C), model id",
                    ));
                    continue;
                }
                let kind = match tokens[4] {
                    "R" => BranchKind::ResistorCurrent,
                    "RV" => BranchKind::ResistorVoltage,
                    "L" => BranchKind::Inductor,
                    "C" => BranchKind::Capacitor,
                    other => {
                        diags.push(diag(lineno, DiagnosticKind::SyntaxError, format!("unknown branch kind '{other}'")));
                        continue;
                    }
                };
                let id = tokens[1];
                if let Some(prev) = branch_lines.get(id) {
                    diags.push(diag(lineno, DiagnosticKind::DuplicateId, format!("branch '{id}' already declared on line {prev}")));
                    continue;
                }
                if tokens[2] == tokens[3] {
                    diags.push(diag(lineno, DiagnosticKind::SyntaxError, format!("branch '{id}': endpoints must differ")));
                    continue;
                }
                branch_lines.insert(id.to_string(), lineno);
                pending_branches.push((
                    lineno,
                    BranchSpec {
                        id: id.to_string(),
                        from: tokens[2].to_string(),
                        to: tokens[3].to_string(),
                        kind,
                        model: tokens[5].to_string(),
                    },
                ));
            }
            "loop" => {
                if tokens.len() < 2 {
                    diags.push(diag(lineno, DiagnosticKind::SyntaxError, "loop record needs at least one branch"));
                    continue;
                }
                let mut walk = Vec::new();
                let mut ok = true;
                for entry in &tokens[1..] {
                    match entry.rsplit_once(':') {
                        Some((id, "+")) => walk.push((id.to_string(), 1i8)),
                        Some((id, "-")) => walk.push((id.to_string(), -1i8)),
                        _ => {
                            diags.push(diag(
                                lineno,
                                DiagnosticKind::SyntaxError,
                                format!("loop entry '{entry}' must look like '<branch>:+' or '<branch>:-'"),
                            ));
                            ok = false;
                        }
                    }
                }
                if ok {
                    pending_loops.push((lineno, walk));
                }
            }
            "coords" => {
                if tokens.len() < 2 {
                    diags.push(diag(lineno, DiagnosticKind::SyntaxError, "coords record needs at least one charge name"));
                    continue;
                }
                if pending_coords.is_some() {
                    diags.push(diag(lineno, DiagnosticKind::DuplicateId, "coords already declared"));
                    continue;
                }
                pending_coords = Some((lineno, tokens[1..].iter().map(|s| s.to_string()).collect()));
            }
            other => {
                diags.push(diag(lineno, DiagnosticKind::SyntaxError, format!("unknown record '{other}'")));
            }
        }
    }

    // Document-level checks and reference resolution.
    if doc.nodes.is_empty() {
        diags.push(diag(0, DiagnosticKind::SyntaxError, "no nodes declared"));
    }
    if ref_line.is_none() {
        if !doc.nodes.is_empty() {
            diags.push(diag(0, DiagnosticKind::SyntaxError, "no reference node declared"));
        }
    } else if !doc.nodes.contains(&doc.reference) {
        diags.push(diag(ref_line.unwrap(), DiagnosticKind::UnknownNode, format!("reference node '{}' is not declared", doc.reference)));
    }
    for (lineno, spec) in pending_branches {
        let mut ok = true;
        for end in [&spec.from, &spec.to] {
            if !doc.nodes.contains(end) {
                diags.push(diag(lineno, DiagnosticKind::UnknownNode, format!("branch '{}': unknown node '{end}'", spec.id)));
                ok = false;
            }
        }
        if !doc.models.contains_key(&spec.model) {
            diags.push(diag(lineno, DiagnosticKind::UnknownModel, format!("branch '{}': unknown model '{}'", spec.id, spec.model)));
            ok = false;
        }
        if ok {
            doc.branches.push(spec);
        }
    }
    let branch_ids: HashSet<&str> = doc.branches.iter().map(|b| b.id.as_str()).collect();
    let mut loops = Vec::new();
    for (lineno, walk) in pending_loops {
        let mut ok = true;
        for (id, _) in &walk {
            if !branch_ids.contains(id.as_str()) {
                diags.push(diag(lineno, DiagnosticKind::SyntaxError, format!("loop names unknown branch '{id}'")));
                ok = false;
            }
        }
        if ok {
            loops.push(walk);
        }
    }
    if !loops.is_empty() {
        doc.loops = Some(loops);
    }
    if let Some((lineno, names)) = pending_coords {
        let mut seen = HashSet::new();
        let mut ok = true;
        for name in &names {
            if !branch_ids.contains(name.as_str()) {
                diags.push(diag(lineno, DiagnosticKind::SyntaxError, format!("coords names unknown branch '{name}'")));
                ok = false;
            }
            if !seen.insert(name.clone()) {
                diags.push(diag(lineno, DiagnosticKind::DuplicateId, format!("coords repeats '{name}'")));
                ok = false;
            }
        }
        if ok {
            doc.coords = Some(names);
        }
    }

    if diags.is_empty() {
        Ok(doc)
    } else {
        Err(diags)
    }
}

impl NetlistDoc {
    /// Serialize to canonical text; `parse_netlist(doc.to_text()) == doc`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.nodes.is_empty() {
            writeln!(out, "node {}", self.nodes.join(" ")).unwrap();
        }
        if !self.reference.is_empty() {
            writeln!(out, "ref {}", self.reference).unwrap();
        }
        for (id, model) in &self.models {
            match model {
                ConstitutiveModel::Linear(v) => writeln!(out, "model {id} linear {v}").unwrap(),
                ConstitutiveModel::Poly(c) => {
                    let params: Vec<String> = c.iter().map(|x| x.to_string()).collect();
                    writeln!(out, "model {id} poly {}", params.join(" ")).unwrap();
                }
                ConstitutiveModel::Tanh { a, b } => writeln!(out, "model {id} tanh {a} {b}").unwrap(),
            }
        }
        for b in &self.branches {
            writeln!(out, "branch {} {} {} {} {}", b.id, b.from, b.to, b.kind.tag(), b.model).unwrap();
        }
        if let Some(loops) = &self.loops {
            for walk in loops {
                let entries: Vec<String> =
                    walk.iter().map(|(id, s)| format!("{id}:{}", if *s > 0 { "+" } else { "-" })).collect();
                writeln!(out, "loop {}", entries.join(" ")).unwrap();
            }
        }
        if let Some(coords) = &self.coords {
            writeln!(out, "coords {}", coords.join(" ")).unwrap();
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElabError {
    #[error("node '{node}' is not connected to the reference node")]
    DisconnectedGraph { node: String },
    #[error("circuit has no independent loop (b = n, nothing to select)")]
    NoLoop,
    #[error("model of branch '{id}' is invalid: {reason}")]
    InvalidModel { id: String, reason: String },
    #[error("voltage-controlled resistor '{id}' is not strictly increasing on the vetting grid")]
    NonMonotoneVoltageResistor { id: String },
}

/// Result of elaboration: canonical graph and devices, plus loop walks and the
/// coordinate selection translated to canonical branch indices.
#[derive(Clone, Debug)]
pub struct Elaborated {
    pub graph: CircuitGraph,
    pub devices: DeviceSet,
    /// Signed loop walks over canonical branch indices, if the netlist supplied loops.
    pub loops: Option<Vec<Vec<(usize, i8)>>>,
    /// Selected charge indices (into canonical branch order), if supplied.
    pub selection: Option<Vec<usize>>,
    /// Human-readable warnings (passivity screening); promoted to errors by
    /// callers that certify dissipativeness.
    pub warnings: Vec<String>,
}

/// Elaborate a parsed document: canonical branch order (resistors, inductors,
/// capacitors; stable within each class), device table, connectivity check.
pub fn elaborate(doc: &NetlistDoc) -> Result<Elaborated, ElabError> {
    // Canonical order: R-class (R and RV in file order), L-class, C-class.
    let mut order: Vec<usize> = Vec::with_capacity(doc.branches.len());
    for class in [
        &[BranchKind::ResistorCurrent, BranchKind::ResistorVoltage][..],
        &[BranchKind::Inductor][..],
        &[BranchKind::Capacitor][..],
    ] {
        for (i, b) in doc.branches.iter().enumerate() {
            if class.contains(&b.kind) {
                order.push(i);
            }
        }
    }

    let node_index: HashMap<&str, usize> =
        doc.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut devices = DeviceSet::default();
    let mut branches = Vec::new();
    let mut branch_ids = Vec::new();
    let mut warnings = Vec::new();
    for &i in &order {
        let spec = &doc.branches[i];
        let model = doc.models[&spec.model].clone();
        match spec.kind {
            BranchKind::ResistorCurrent | BranchKind::ResistorVoltage => {
                let control = if spec.kind == BranchKind::ResistorCurrent {
                    ResistorControl::Current
                } else {
                    ResistorControl::Voltage
                };
                if control == ResistorControl::Voltage
                    && !model.is_strictly_increasing_on(RV_MONOTONE_RANGE.0, RV_MONOTONE_RANGE.1, RV_MONOTONE_SAMPLES)
                {
                    return Err(ElabError::NonMonotoneVoltageResistor { id: spec.id.clone() });
                }
                let report = passivity_check(&model, PASSIVITY_RANGE.0, PASSIVITY_RANGE.1, PASSIVITY_SAMPLES);
                if let Some((x, p)) = report.first_violation {
                    warnings.push(format!(
                        "resistor '{}' fails passivity on the screening grid: f({x:.6})*{x:.6} = {p:.6e} <= 0",
                        spec.id
                    ));
                }
                devices.resistors.push(Resistor { id: spec.id.clone(), model, control });
            }
            BranchKind::Inductor => {
                if model == ConstitutiveModel::Linear(0.0) {
                    return Err(ElabError::InvalidModel { id: spec.id.clone(), reason: "linear inductance must be nonzero".into() });
                }
                devices.inductors.push(Storage { id: spec.id.clone(), model });
            }
            BranchKind::Capacitor => {
                if model == ConstitutiveModel::Linear(0.0) {
                    return Err(ElabError::InvalidModel { id: spec.id.clone(), reason: "linear elastance must be nonzero".into() });
                }
                devices.capacitors.push(Storage { id: spec.id.clone(), model });
            }
        }
        branches.push((node_index[spec.from.as_str()], node_index[spec.to.as_str()]));
        branch_ids.push(spec.id.clone());
    }

    let graph = CircuitGraph {
        node_names: doc.nodes.clone(),
        reference: node_index[doc.reference.as_str()],
        branches,
        branch_ids,
    };

    // Connectivity: every node reachable from the reference, orientation ignored.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); graph.node_names.len()];
    for &(u, v) in &graph.branches {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; graph.node_names.len()];
    let mut stack = vec![graph.reference];
    seen[graph.reference] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    if let Some(i) = seen.iter().position(|&s| !s) {
        return Err(ElabError::DisconnectedGraph { node: graph.node_names[i].clone() });
    }
    if graph.m() == 0 {
        return Err(ElabError::NoLoop);
    }

    let id_to_canonical: HashMap<&str, usize> =
        graph.branch_ids.iter().enumerate().map(|(l, id)| (id.as_str(), l)).collect();
    let loops = doc.loops.as_ref().map(|ls| {
        ls.iter()
            .map(|walk| walk.iter().map(|(id, s)| (id_to_canonical[id.as_str()], *s)).collect())
            .collect()
    });
    let selection = doc.coords.as_ref().map(|names| names.iter().map(|n| id_to_canonical[n.as_str()]).collect());

    Ok(Elaborated { graph, devices, loops, selection, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
# two-node test circuit
node a b
ref b
model rm linear 2.0
model lm linear 1.0
model cm poly 0 1 0 0.5
branch c1 a b C cm   # trailing comment
branch r1 a b R rm
branch l1 b a L lm
loop r1:+ c1:-
loop l1:- c1:-
coords c1 l1
";

    #[test]
    fn parses_and_canonically_reorders() {
        let doc = parse_netlist(SMALL).unwrap();
        assert_eq!(doc.nodes, vec!["a", "b"]);
        assert_eq!(doc.reference, "b");
        assert_eq!(doc.branches.len(), 3);
        let elab = elaborate(&doc).unwrap();
        // file order c1, r1, l1 becomes canonical r1, l1, c1
        assert_eq!(elab.graph.branch_ids, vec!["r1", "l1", "c1"]);
        assert_eq!(elab.devices.r(), 1);
        assert_eq!(elab.devices.k(), 1);
        assert_eq!(elab.devices.p(), 1);
        assert_eq!(elab.graph.n(), 1);
        assert_eq!(elab.graph.m(), 2);
        // selection names c1 then l1 -> canonical indices 2 and 1
        assert_eq!(elab.selection, Some(vec![2, 1]));
        // loops remapped to canonical indices
        assert_eq!(elab.loops, Some(vec![vec![(0, 1), (2, -1)], vec![(1, -1), (2, -1)]]));
    }

    #[test]
    fn serialize_parse_is_fixpoint() {
        let doc = parse_netlist(SMALL).unwrap();
        let text = doc.to_text();
        let doc2 = parse_netlist(&text).unwrap();
        assert_eq!(doc, doc2);
        // and a second round for good measure
        assert_eq!(parse_netlist(&doc2.to_text()).unwrap(), doc2);
    }

    #[test]
    fn collects_all_diagnostics() {
        let bad = "\
node a a
ref q
model m1 linear x
model m2 spline 1 2
branch b1 a zz R m3
branch b2 a a R m2
frobnicate
";
        let errs = parse_netlist(bad).unwrap_err();
        // duplicate node, unknown ref, bad number, bad kind, unknown node+model, self-loop, unknown record
        assert!(errs.len() >= 7, "got {errs:?}");
        assert!(errs.iter().any(|d| d.kind == DiagnosticKind::DuplicateId && d.line == 1));
        assert!(errs.iter().any(|d| d.kind == DiagnosticKind::UnknownNode && d.line == 2));
        assert!(errs.iter().any(|d| d.kind == DiagnosticKind::UnknownModel));
    }

    #[test]
    fn empty_document_is_a_syntax_error() {
        let errs = parse_netlist("").unwrap_err();
        assert!(errs.iter().any(|d| d.kind == DiagnosticKind::SyntaxError && d.message.contains("no nodes")));
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let text = "\
node a b c d
ref a
model m linear 1
branch r1 a b R m
branch r2 a b L m
branch r3 c d R m
branch r4 c d L m
";
        let doc = parse_netlist(text).unwrap();
        match elaborate(&doc) {
            Err(ElabError::DisconnectedGraph { node }) => assert!(node == "c" || node == "d"),
            other => panic!("expected DisconnectedGraph, got {other:?}"),
        }
    }

    #[test]
    fn tree_without_loops_is_rejected() {
        let text = "\
node a b
ref a
model m linear 1
branch r1 a b R m
";
        let doc = parse_netlist(text).unwrap();
        match elaborate(&doc) {
            Err(ElabError::NoLoop) => {}
            other => panic!("expected NoLoop, got {other:?}"),
        }
    }

    #[test]
    fn nonpassive_resistor_warns() {
        let text = "\
node a b
ref a
model neg linear -1
model l linear 1
branch r1 a b R neg
branch l1 a b L l
";
        let doc = parse_netlist(text).unwrap();
        let elab = elaborate(&doc).unwrap();
        assert_eq!(elab.warnings.len(), 1);
        assert!(elab.warnings[0].contains("r1"));
    }

    #[test]
    fn decreasing_rv_model_is_an_error() {
        let text = "\
node a b
ref a
model neg linear -1
model l linear 1
branch r1 a b RV neg
branch l1 a b L l
";
        let doc = parse_netlist(text).unwrap();
        match elaborate(&doc) {
            Err(ElabError::NonMonotoneVoltageResistor { id }) => assert_eq!(id, "r1"),
            other => panic!("expected NonMonotoneVoltageResistor, got {other:?}"),
        }
    }
}

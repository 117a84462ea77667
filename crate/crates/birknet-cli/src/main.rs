//! Command-line driver: analyze / verify / reduce / simulate over netlist
//! files. Exit codes: 0 success, 1 domain errors (singular systems,
//! non-passive devices, diverged solves), 2 usage and parse errors.

use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use birknet::birkhoff::{regularity, DefectKind, RegularityReport, RegularityVerdict};
use birknet::devices::{passivity_check, ConstitutiveModel};
use birknet::dynamics::{dissipation_certificate, integrate, SimState};
use birknet::exact::{IntMat, RatMat};
use birknet::reduction::{
    auto_reduce, defect_records, res_action_for, Pipeline, ReduceAction, ReductionReport, Strategy,
};
use birknet::netlist::{PASSIVITY_RANGE, PASSIVITY_SAMPLES};
use birknet::AnySystem;

#[derive(Parser)]
#[command(name = "birknet", version, about = "Compile, analyze, reduce, and simulate RLC netlists")]
struct Cli {
    /// Seed for the regularity sampler.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    /// Eliminate a capacitor-only loop through its charge constraint.
    CapReduce,
    /// Eliminate a resistor-only loop (closed form when linear, Newton otherwise).
    ResReduce,
    /// Insert a series inductor into the selected branch of the loop coordinate.
    Insert,
}

#[derive(Subcommand)]
enum Command {
    /// Print branch tables, B/A/N/transform matrices, and the regularity verdict.
    Analyze { netlist: PathBuf },
    /// Print the structure report, regularity report, witness, and warnings.
    Verify { netlist: PathBuf },
    /// Apply a reduction strategy and emit a machine-readable report.
    Reduce {
        netlist: PathBuf,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        /// Loop coordinate to act on: a branch id, a 1-based index, or `auto`.
        #[arg(long = "loop", default_value = "auto")]
        loop_coordinate: String,
        /// Inductance (henry) for inserted coils; defaults to 1e-6.
        #[arg(long)]
        inductance: Option<f64>,
        /// Chain on top of an earlier reduction report (path, or `-` for stdin).
        #[arg(long)]
        from_report: Option<PathBuf>,
        /// Write the report to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the (possibly reduced) system and write a CSV trajectory.
    Simulate {
        /// Netlist path; optional when --from-report already names one.
        netlist: Option<PathBuf>,
        /// Replay the reductions recorded in a report (path, or `-` for stdin).
        #[arg(long)]
        from_report: Option<PathBuf>,
        /// Final time in seconds.
        #[arg(long)]
        t_end: f64,
        /// Fixed step in seconds.
        #[arg(long)]
        dt: f64,
        /// Comma-separated initial charges in the current coordinates (default zeros).
        #[arg(long)]
        q0: Option<String>,
        /// Comma-separated initial currents (default zeros).
        #[arg(long)]
        qdot0: Option<String>,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Check the dissipation certificate (printed to stderr) and fail on
        /// violations; non-passive resistors become hard errors.
        #[arg(long)]
        certify: bool,
    },
}

enum CliError {
    /// Exit 1: the circuit itself is the problem.
    Domain(String),
    /// Exit 2: the invocation or the input file is malformed.
    Usage(String),
}

impl From<birknet::Error> for CliError {
    fn from(e: birknet::Error) -> Self {
        match e {
            birknet::Error::Parse(diags) => {
                let mut msg = String::from("netlist has syntax errors:");
                for d in &diags {
                    let _ = write!(msg, "\n  {d}");
                }
                CliError::Usage(msg)
            }
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<birknet::reduction::ReduceError> for CliError {
    fn from(e: birknet::reduction::ReduceError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<birknet::dynamics::SimError> for CliError {
    fn from(e: birknet::dynamics::SimError) -> Self {
        CliError::Domain(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn compile(path: &Path) -> Result<birknet::BirkhoffSystem, CliError> {
    Ok(birknet::compile(&read_to_string(path)?)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { netlist } => analyze(&netlist, cli.seed),
        Command::Verify { netlist } => verify(&netlist, cli.seed),
        Command::Reduce { netlist, strategy, loop_coordinate, inductance, from_report, out } => {
            reduce(&netlist, strategy, &loop_coordinate, inductance, from_report.as_deref(), out.as_deref(), cli.seed)
        }
        Command::Simulate { netlist, from_report, t_end, dt, q0, qdot0, out, certify } => simulate(
            netlist.as_deref(),
            from_report.as_deref(),
            t_end,
            dt,
            q0.as_deref(),
            qdot0.as_deref(),
            out.as_deref(),
            certify,
            cli.seed,
        ),
    }
}

/// Right-aligned text grid with one labeled row per matrix row.
fn print_grid<T: std::fmt::Display>(labels: &[String], cells: &[Vec<T>]) {
    let texts: Vec<Vec<String>> = cells.iter().map(|row| row.iter().map(|v| v.to_string()).collect()).collect();
    let label_w = labels.iter().map(String::len).max().unwrap_or(0);
    let cell_w = texts.iter().flatten().map(String::len).max().unwrap_or(1);
    for (label, row) in labels.iter().zip(&texts) {
        let mut line = format!("  {label:<label_w$} ");
        for cell in row {
            let _ = write!(line, " {cell:>cell_w$}");
        }
        println!("{line}");
    }
}

fn int_rows(m: &IntMat) -> Vec<Vec<i64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect()).collect()
}

fn rat_rows(m: &RatMat) -> Vec<Vec<String>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m.get(i, j).to_string()).collect()).collect()
}

fn describe_defect(sys: &AnySystem, defect: &birknet::birkhoff::DefectLoop) -> String {
    let kind = match defect.kind {
        DefectKind::Capacitor => "pure capacitor loop",
        DefectKind::Resistor => "pure resistor loop",
        DefectKind::Mixed => "resistor-capacitor loop",
    };
    let branches: Vec<&str> = defect.branches.iter().map(|(id, _)| id.as_str()).collect();
    let coords: Vec<&str> = defect.coordinates.iter().map(|&j| sys.coordinate_id(j)).collect();
    format!("{kind} [{}] on coordinate(s) [{}]", branches.join(" "), coords.join(" "))
}

fn print_regularity(sys: &AnySystem, report: &RegularityReport) {
    println!("regularity: {:?}", report.verdict);
    for defect in &report.defects {
        println!("  defect: {}", describe_defect(sys, defect));
    }
    if !report.sampled_dets.is_empty() {
        let min = report.sampled_dets.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = report.sampled_dets.iter().cloned().fold(0.0f64, f64::max);
        println!(
            "  sampled |det F| over {} draws: min {min:.3e}, max {max:.3e} (scale {:.3e})",
            report.sampled_dets.len(),
            report.det_scale
        );
    }
    match &report.witness {
        Some(w) => println!(
            "  non-conservative witness: dH_{0}/dqdot_{0} = {1:.6} on coordinate {0} ({2})",
            w.coordinate + 1,
            w.value,
            sys.coordinate_id(w.coordinate)
        ),
        None => println!("  non-conservative witness: none found at sampled velocities"),
    }
}

fn analyze(path: &Path, seed: u64) -> Result<(), CliError> {
    let sys = compile(path)?;
    let graph = &sys.graph;
    println!(
        "circuit {}: b = {} branches, {} nodes (reference {}), m = {} loops",
        path.display(),
        sys.b(),
        graph.n() + 1,
        graph.node_names[graph.reference],
        sys.m()
    );
    println!(
        "devices: r = {} resistors, k = {} inductors, p = {} capacitors",
        sys.devices.r(),
        sys.devices.k(),
        sys.devices.p()
    );

    let labels = graph.branch_ids.clone();
    let node_names: Vec<&str> = graph.chart_nodes().iter().map(|&v| graph.node_names[v].as_str()).collect();
    println!("\nincidence B (columns: {}):", node_names.join(" "));
    print_grid(&labels, &int_rows(&sys.topo.incidence));
    println!("\nloop matrix A (columns: loop 1..{}):", sys.m());
    print_grid(&labels, &int_rows(&sys.topo.loops));

    let coord_names: Vec<String> =
        (0..sys.m()).map(|j| format!("q{} = {}", j + 1, sys.coordinate_id(j))).collect();
    println!("\ncoordinates: {}", coord_names.join(", "));
    println!("\nchart N (x = N q + offsets):");
    print_grid(&labels, &rat_rows(&sys.chart.n));
    let coord_labels: Vec<String> = (0..sys.m()).map(|j| format!("q{}", j + 1)).collect();
    println!("\nloop transform (transform * A^T = N^T):");
    print_grid(&coord_labels, &rat_rows(&sys.chart.loop_transform));

    let structure =
        birknet::topology::verify_kirchhoff_structure(&sys.topo.incidence, &sys.topo.loops);
    println!(
        "\nstructure: b = m + n = {}; rank B = {}; rank A = {}; B^T A = 0: {}; kernel match: {}",
        sys.b(),
        structure.rank_incidence,
        structure.rank_loops,
        structure.product_zero,
        structure.kernel_match
    );
    for w in &sys.warnings {
        println!("warning: {w}");
    }
    println!();
    let any: AnySystem = sys.into();
    print_regularity(&any, &regularity(&any, 10, seed));
    Ok(())
}

fn verify(path: &Path, seed: u64) -> Result<(), CliError> {
    let sys = compile(path)?;
    let structure =
        birknet::topology::verify_kirchhoff_structure(&sys.topo.incidence, &sys.topo.loops);
    println!(
        "structure: b = {} = m + n = {} + {}; rank B = {}; rank A = {}; B^T A = 0: {}; kernel match: {}",
        sys.b(),
        sys.m(),
        sys.graph.n(),
        structure.rank_incidence,
        structure.rank_loops,
        structure.product_zero,
        structure.kernel_match
    );
    if !structure.all_ok() {
        return Err(CliError::Domain("Kirchhoff structure checks failed".into()));
    }
    let warnings = sys.warnings.clone();
    let any: AnySystem = sys.into();
    print_regularity(&any, &regularity(&any, 25, seed));
    for w in &warnings {
        println!("warning: {w}");
    }
    Ok(())
}

/// Resolve `--loop` against the current system: `auto`, a coordinate's
/// branch id, or a 1-based coordinate index.
fn resolve_loop(sys: &AnySystem, spec: &str) -> Result<Option<usize>, CliError> {
    if spec == "auto" {
        return Ok(None);
    }
    if let Some(j) = sys.coordinate_index(spec) {
        return Ok(Some(j));
    }
    if let Ok(ix) = spec.parse::<usize>() {
        if (1..=sys.dim()).contains(&ix) {
            return Ok(Some(ix - 1));
        }
        return Err(CliError::Usage(format!(
            "loop index {ix} out of range: the system has coordinates 1..{}",
            sys.dim()
        )));
    }
    Err(CliError::Domain(format!(
        "no coordinate named '{spec}': current coordinates are [{}]",
        sys.coordinate_ids().join(" ")
    )))
}

fn load_report(path: &Path) -> Result<ReductionReport, CliError> {
    let text = if path.as_os_str() == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| CliError::Usage(format!("reading report from stdin: {e}")))?;
        buf
    } else {
        read_to_string(path)?
    };
    ReductionReport::from_json(&text).map_err(|e| CliError::Usage(format!("bad reduction report: {e}")))
}

const DEFAULT_INSERT_HENRY: f64 = 1e-6;

fn reduce(
    path: &Path,
    strategy: StrategyArg,
    loop_spec: &str,
    inductance: Option<f64>,
    from_report: Option<&Path>,
    out: Option<&Path>,
    seed: u64,
) -> Result<(), CliError> {
    let sys = compile(path)?;
    let mut pipeline = match from_report {
        Some(p) => {
            let report = load_report(p)?;
            Pipeline::from_actions(sys, &report.actions)?
        }
        None => Pipeline::new(sys),
    };
    let defects = defect_records(&pipeline.system()?, 10, seed);

    let henry = inductance.unwrap_or(DEFAULT_INSERT_HENRY);
    if matches!(strategy, StrategyArg::Insert) && inductance.is_none() {
        eprintln!(
            "warning: inserted inductance defaults to {DEFAULT_INSERT_HENRY:e} H; \
             the inserted branch makes the system stiff, so simulate with dt well \
             below the fast time constant or pass --inductance"
        );
    }
    let model = ConstitutiveModel::Linear(henry);
    if henry <= 0.0 {
        return Err(CliError::Usage(format!("--inductance must be positive, got {henry}")));
    }

    let new_actions = match resolve_loop(&pipeline.system()?, loop_spec)? {
        None => {
            let s = match strategy {
                StrategyArg::CapReduce => Strategy::CapReduce,
                StrategyArg::ResReduce => Strategy::ResReduce,
                StrategyArg::Insert => Strategy::Insert,
            };
            let actions = auto_reduce(&mut pipeline, s, &model)?;
            if actions.is_empty() {
                eprintln!("note: no loop eligible for this strategy; report carries no new actions");
            }
            actions
        }
        Some(j) => {
            let sys = pipeline.system()?;
            let coordinate = sys.coordinate_id(j).to_string();
            let action = match strategy {
                StrategyArg::CapReduce => ReduceAction::CapReduce { coordinate },
                StrategyArg::ResReduce => res_action_for(&sys, j),
                StrategyArg::Insert => ReduceAction::InsertInductor { coordinate, model },
            };
            pipeline.apply(&action)?;
            vec![action]
        }
    };

    // The report records the full action list that reproduces the chain, so
    // chained reports stay self-contained.
    let after = pipeline.system()?;
    let mut all_actions = match from_report {
        Some(p) => load_report(p)?.actions,
        None => Vec::new(),
    };
    all_actions.extend(new_actions);

    let report = ReductionReport {
        netlist: path.display().to_string(),
        seed,
        defects,
        actions: all_actions,
    };
    let json = report.to_json();
    match out {
        Some(p) => std::fs::write(p, &json).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => print!("{json}"),
    }
    let verdict = regularity(&after, 10, seed).verdict;
    eprintln!(
        "reduced to {} coordinate(s) [{}]; regularity now {:?}",
        after.dim(),
        after.coordinate_ids().join(" "),
        verdict
    );
    Ok(())
}

fn parse_vector(spec: Option<&str>, dim: usize, name: &str) -> Result<Vec<f64>, CliError> {
    let Some(spec) = spec else {
        return Ok(vec![0.0; dim]);
    };
    let values: Result<Vec<f64>, _> = spec.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| CliError::Usage(format!("--{name}: {e}")))?;
    if values.len() != dim {
        return Err(CliError::Usage(format!(
            "--{name} has {} entries but the system has {dim} coordinate(s)",
            values.len()
        )));
    }
    Ok(values)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    netlist: Option<&Path>,
    from_report: Option<&Path>,
    t_end: f64,
    dt: f64,
    q0: Option<&str>,
    qdot0: Option<&str>,
    out: Option<&Path>,
    certify: bool,
    seed: u64,
) -> Result<(), CliError> {
    let report = from_report.map(load_report).transpose()?;
    let path: PathBuf = match (netlist, &report) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(r)) => PathBuf::from(&r.netlist),
        (None, None) => {
            return Err(CliError::Usage("pass a netlist path or --from-report".into()));
        }
    };
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(CliError::Usage(format!("--dt and --t-end must be positive (got {dt}, {t_end})")));
    }
    let sys = compile(&path)?;
    let passivity_warnings: Vec<(String, f64, f64)> = sys
        .devices
        .resistors
        .iter()
        .filter_map(|res| {
            passivity_check(&res.model, PASSIVITY_RANGE.0, PASSIVITY_RANGE.1, PASSIVITY_SAMPLES)
                .first_violation
                .map(|(x, p)| (res.id.clone(), x, p))
        })
        .collect();

    let any = match &report {
        Some(r) => Pipeline::from_actions(sys, &r.actions)?.system()?,
        None => AnySystem::from(sys),
    };

    // Usage checks come before domain checks: a malformed flag should not be
    // masked by a singular circuit.
    let steps = (t_end / dt).round().max(1.0) as usize;
    let m = any.dim();
    let initial = SimState { t: 0.0, q: parse_vector(q0, m, "q0")?, qdot: parse_vector(qdot0, m, "qdot0")? };

    if certify {
        // Promote passivity-grid failures from warnings to errors.
        if let Some((id, x, p)) = passivity_warnings.first() {
            return Err(CliError::Domain(format!(
                "certification requires passive resistors, but '{id}' has f({x:.6})*{x:.6} = {p:.6e} <= 0"
            )));
        }
    }

    // A structurally singular system cannot be integrated; explain in terms
    // of the defect loops.
    let reg = regularity(&any, 10, seed);
    if reg.verdict == RegularityVerdict::StructurallySingular {
        let mut msg = String::from("structurally non-regular: ");
        let details: Vec<String> = reg.defects.iter().map(|d| describe_defect(&any, d)).collect();
        msg.push_str(&details.join("; "));
        msg.push_str("; run `reduce`");
        return Err(CliError::Domain(msg));
    }
    let traj = integrate(&any, &initial, dt, steps)?;

    let mut csv = String::new();
    csv.push('t');
    for j in 1..=m {
        let _ = write!(csv, ",q{j}");
    }
    for j in 1..=m {
        let _ = write!(csv, ",qd{j}");
    }
    csv.push_str(",E,P_diss\n");
    for i in 0..traj.len() {
        let _ = write!(csv, "{:.16e}", traj.times[i]);
        for v in traj.q[i].iter().chain(traj.qdot[i].iter()) {
            let _ = write!(csv, ",{v:.16e}");
        }
        let _ = writeln!(csv, ",{:.16e},{:.16e}", traj.energy[i], traj.p_diss[i]);
    }
    match out {
        Some(p) => std::fs::write(p, &csv).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => print!("{csv}"),
    }

    if any.jumps() > 0 {
        eprintln!(
            "warning: constraint solver jumped branches {} time(s); the lifted \
             trajectory may be discontinuous",
            any.jumps()
        );
    }

    if certify {
        let cert = dissipation_certificate(&any, &traj);
        eprintln!(
            "certificate: {} ({}); max |dE/dt + P| = {:.3e}; min P = {:.3e}; max step increase = {:.3e}",
            if cert.passed { "PASS" } else { "FAIL" },
            if cert.conservative { "conservative" } else { "dissipative" },
            cert.max_identity_residual,
            cert.min_p_diss,
            cert.max_energy_step_increase
        );
        if !cert.passed {
            for v in cert.violations.iter().take(5) {
                eprintln!("  violation at t = {:.6}: {:?} — {}", v.t, v.check, v.detail);
            }
            return Err(CliError::Domain("dissipation certificate failed".into()));
        }
    }
    Ok(())
}

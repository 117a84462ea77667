//! birknet compiles plain-text RLC netlists into Birkhoffian systems.
//!
//! A circuit with r resistors, k inductors and p capacitors on a connected
//! graph carries m = b - n independent loop currents. Choosing m branch
//! charges as coordinates q turns Kirchhoff's laws plus the device laws into
//! a second-order system with components
//!
//! ```text
//! Q_j(q, q', q'') = sum_a N_aj L_a(i_a) (N q'')_a  +  sum_G N_Gj R_G(i_G)  +  sum_al N_alj C_al(x_al)
//! ```
//!
//! assembled from the exact rational chart matrix N. The crate covers the
//! whole pipeline: netlist parsing and elaboration ([`netlist`]), exact graph
//! topology ([`topology`]), chart construction ([`coordinates`]), device
//! models ([`devices`]), system assembly and regularity analysis
//! ([`birkhoff`]), loop reduction and series-inductor insertion
//! ([`reduction`]), and simulation with dissipation certificates
//! ([`dynamics`]).
//!
//! ```no_run
//! let text = std::fs::read_to_string("fixtures/ex1.net").unwrap();
//! let sys = birknet::compile(&text).unwrap();
//! let report = birknet::birkhoff::regularity(&sys.clone().into(), 10, 42);
//! println!("{:?}", report.verdict);
//! ```

pub mod birkhoff;
pub mod coordinates;
pub mod devices;
pub mod dynamics;
pub mod exact;
pub mod linalg;
pub mod netlist;
pub mod reduction;
pub mod topology;

pub use birkhoff::{compile, BirkhoffSystem};
pub use reduction::AnySystem;

use thiserror::Error;

/// Any failure on the way from netlist text to a Birkhoffian system.
#[derive(Debug, Error)]
pub enum Error {
    #[error("netlist has {} diagnostic(s); first: {}", .0.len(), .0[0])]
    Parse(Vec<netlist::Diagnostic>),
    #[error(transparent)]
    Elaborate(#[from] netlist::ElabError),
    #[error(transparent)]
    Topology(#[from] topology::TopologyError),
    #[error(transparent)]
    Chart(#[from] coordinates::ChartError),
    #[error(transparent)]
    Device(#[from] devices::DeviceError),
    #[error(transparent)]
    Reduce(#[from] reduction::ReduceError),
    #[error(transparent)]
    Simulate(#[from] dynamics::SimError),
}

impl From<Vec<netlist::Diagnostic>> for Error {
    fn from(d: Vec<netlist::Diagnostic>) -> Self {
        Error::Parse(d)
    }
}

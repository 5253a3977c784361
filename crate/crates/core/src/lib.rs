//! Exact simulation of local projective measurements on antiferromagnetic
//! spin-1/2 XXZ rings.
//!
//! Ground states come from Lanczos, time evolution from a Chebyshev expansion
//! of `exp(-iHt)`, and measurements act on pure-state branches. Energies are in
//! units of the exchange constant J as given, times are dimensionless `tJ`
//! with ħ = 1.

pub mod basis;
pub mod eigensolve;
pub mod error;
pub mod linalg;
pub mod measurement;
pub mod observables;
pub mod operators;
pub mod oracle;
pub mod presets;
pub mod propagate;
pub mod scenario;
pub mod statefile;
pub mod table;

pub use basis::{enumerate_sector, sector_rank, BasisIndex, ChainSpec, Space, SzSector};
pub use eigensolve::{
    bethe_reference_energy_per_site, dense_ground_state, lanczos_ground_state, GroundStateResult,
    LanczosConfig, Reorthogonalization,
};
pub use error::{Error, Result};
pub use measurement::{
    measure_nonselective, project, zeno_sequence, Branch, MeasurementOutcome, ProjectorSpec, Sign,
};
pub use observables::{
    correlation, energy, fourier_spectrum, magnetization, staggered_magnetization, ObservableId,
    Spectrum, TimeSeriesRecord, Window,
};
pub use operators::{
    apply_hamiltonian, apply_local_spin, spectral_bounds, Axis, LocalSpinOp, StateVector,
};
pub use propagate::{evolve, evolve_through_grid, Propagator, PropagatorConfig, TimeGrid};
pub use scenario::{
    load_scenarios, parse_scenarios, run_scenario, validate_scenario, RunManifest, RunOptions, RunOutput,
    Scenario, ValidationReport,
};
pub use statefile::{read_state, read_state_header, write_state, PhaseConvention, StateFileHeader};
pub use table::{export_table, import_table, TableFormat};

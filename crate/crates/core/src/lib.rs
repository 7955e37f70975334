//! Simulation of phase-shaped, exponentially rising microwave pulses scattered
//! by a two-level artificial atom terminating a semi-infinite transmission line.
//!
//! All rates and frequencies are angular (rad/s) and all times are in seconds.
//! Conversion from the cyclic MHz values quoted in lab notebooks happens at
//! the edges (see [`model::QubitParams::from_cyclic_mhz`] and the CLI config).
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the shared physical types and constants.
//! * [`pulse`] builds the drive envelope, its phase profile and time grids.
//! * [`bloch`] integrates the driven optical Bloch equations.
//! * [`scattering`] turns trajectories into reflected voltages, energies and
//!   interaction efficiencies, and hosts the stationary reflection formulas.
//! * [`calibration`] is the spectroscopy / power-sweep fitting chain.
//! * [`sweep`] runs parameter sweeps and the duty-cycle optimisation.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod calibration;
pub mod error;
pub mod model;
pub mod optimize;
pub mod pulse;
pub mod scattering;
pub mod sweep;

pub use num_complex::Complex64 as C64;

pub use bloch::{
    bloch_rhs, integrate, steady_state, BlochRate, ConstantDrive, Drive, DriveContext, PulseDrive, Trajectory,
};
pub use calibration::{
    calibrate, circle_fit, derive_chain, power_sweep_fit, remove_background, synth_power_sweep, synth_spectroscopy,
    BackgroundRemoved, Calibration, ChainParams, CircleFit, PowerPoint, PowerSweepFit, SpectroscopyTrace,
};
pub use error::{Error, ErrorKind, Result};
pub use model::{coupling_k, excited_population, BlochState, LineParams, QubitParams};
pub use pulse::{build_grid, Modulation, PulseSpec, TimeGrid};
pub use scattering::{
    analytic_efficiency, demod_filter, efficiency, energy_windows, offres_reference, output_voltage, photon_number,
    power_loss_fraction, reflection_ss, simulate, EnergyWindows, OffResReference, ScatterResult, Simulation, Trace,
};
pub use sweep::{
    duty_area_balance, linspace, optimize_duty, run_sweep, signed_area, sweep_duty, sweep_fm, sweep_n, sweep_theta,
    trace_grid, AreaBalance, DutyOptimum, SquareTemplate, SweepAxis, SweepPoint, SweepResult, TraceGrid, WorkingPoint,
};

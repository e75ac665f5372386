//! Monte Carlo harness, fig1 presets, CSV output and self-checks on top
//! of [`commsim_core`].

pub mod checks;
mod error;
pub mod eval;
pub mod family;
pub mod sweep;

pub use crate::error::{Error, Result};
pub use crate::eval::{monte_carlo, run_cell, Cell, CellSummary, TrialStats};
pub use crate::family::{Family, FamilyKind};
pub use crate::sweep::{emit_csv, fig1_left, fig1_right, write_csv, SweepSpec};

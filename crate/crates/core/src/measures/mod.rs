//! Closed sets, locally finite and extended measures, mollification and convergence checks.

pub mod chart;
pub mod closed_set;
pub mod convergence;
pub mod measure;
pub mod mollify;
pub mod quadrature;

pub use chart::Chart;
pub use closed_set::ClosedSet;
pub use convergence::{check_convergence, ConvergenceReport, PiecewiseLinear};
pub use measure::{
    explosion_set, measure_of, restrict_off_explosion, to_extended, Atom, DensityPiece,
    ExtendedMeasure, IntervalKind, LocallyFiniteMeasure, MeasureValue,
};
pub use mollify::{hat, mollify};

//! Events, estimators and derived observables.

pub mod block;
pub mod estimate;
pub mod events;
pub mod field;
pub mod mixing;
pub mod tension;

pub use block::BlockScan;
pub use estimate::{batch_means, estimate_event, estimate_events, estimate_many, sample_series, write_csv, EstimateError, EstimateRow, McConfig};
pub use events::{count_x, count_y, crossing_within, eval_event, eval_unchecked, rectangle_bounds, EventError, EventSpec};
pub use field::{BondField, ConfigField, HashedField};
pub use mixing::{mixing_gap, mixing_setup, MixingReport, MixingSetup};
pub use tension::{surface_tension_estimate, TensionConfig, TensionReport};

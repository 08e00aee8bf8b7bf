//! Two-level renormalization: occupied blocks, bricks and good squares.

pub mod alpha;
pub mod brick;
pub mod growth;
pub mod spec;

pub use alpha::{estimate_alpha, inspection_events, site_percolation_threshold, AlphaReport, InspectionEvent};
pub use brick::{brick_layout_branch, Brick, LayoutStep, Slot};
pub use growth::{grow_cluster, growth_json, growth_svg, inspect_square, verify_renormalized_path, Growth, SquareState};
pub use spec::{calibrate_block, Calibration, RenormError, RenormSpec};

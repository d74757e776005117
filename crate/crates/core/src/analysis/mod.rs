//! Studies run on finished repertoires.

pub mod ablation;
pub mod ellipse;
pub mod heatmap;
pub mod reeval;
pub mod surrogate;
pub mod transition;

pub use ablation::{ablation_study, AblationReport, MaskComparison};
pub use ellipse::{uncertainty_ellipse, EllipseSlice, UncertaintyReport};
pub use heatmap::{parameter_heatmap, Heatmap, HeatmapSlice};
pub use reeval::{reevaluate, ReevalCell, ReevalReport};
pub use surrogate::{surrogate_exploration, surrogate_series};
pub use transition::{run_transition, SeriesPoint, TransitionConfig, TransitionRecord, WindowMetrics};

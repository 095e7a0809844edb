//! Benchmark harness for the sensor fault estimators: registered plants
//! with stabilizing controllers, closed-loop data collection, fault
//! scenarios, the four-way comparison and its CSV/SVG report.

pub mod experiment;
pub mod plant;
pub mod report;
pub mod scenario;
pub mod stats;

pub use experiment::{run_comparison, ExperimentConfig, ExperimentReport};
pub use plant::{collect_identification_data, load_plant, FeedbackController, Plant};
pub use scenario::{FaultScenario, FaultSignal};
pub use stats::{ellipse_stats, ErrorStats};

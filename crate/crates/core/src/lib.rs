//! Plant miRNA prediction and functional annotation over a partitioned,
//! data-parallel dataflow engine.

pub mod align;
pub mod analysis;
pub mod cluster;
pub mod config;
pub mod dataflow;
pub mod hairpin;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod prefilter;
pub mod simulate;

pub use config::{default_config, PipelineConfig};
pub use dataflow::{Dataset, Engine, RunMetrics, Stage};
pub use model::{Locus, NucleotideSequence, SmallRnaRecord, Strand};

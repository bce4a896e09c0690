//! Partial dependence plots, joint partial dependence and any-order partial
//! dependence interaction values for decision-tree ensembles.
//!
//! Every root-to-leaf path is compiled into a weighted DNF over
//! feature-participation variables; each task then applies a metric that is
//! linear over cubes. See [`wdnf`] for the construction.

pub mod dataset;
pub mod error;
pub mod grids;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod synth;
pub mod tasks;
pub mod wdnf;

pub use dataset::{fmt_f64, load_csv, Dataset};
pub use error::{Error, Result};
pub use grids::{JointClipMap, Sampling, ValueGrid};
pub use metrics::{Cube, CubeMetric, SubsetKey, SubsetValueMap};
pub use model::{parse_model, DumpFormat, LeafPath, TreeEnsemble};
pub use oracle::{oracle_pdiv, oracle_pdv, Coalition};
pub use tasks::{
    any_order_pdivs, any_order_pdivs_aggregate, full_pdp, mean_prediction, wjointpdp, wpdp,
    AttributionResult, JointPDPResult, Mode, PDPResult,
};
pub use wdnf::{Engine, EngineOptions, Marginal};

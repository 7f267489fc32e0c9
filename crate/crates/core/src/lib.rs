//! Crowdsourced opinion-expression tagging with annotator-conditioned
//! adapters.

pub mod cli;
pub mod corpus;
pub mod crowdsim;
pub mod metrics;
pub mod mixup;
pub mod model;
pub mod numeric;
pub mod tags;
pub mod train;

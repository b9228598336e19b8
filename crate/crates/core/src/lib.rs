pub mod cli;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod gauges;
pub mod margins;
pub mod model_file;
pub mod optim;
pub mod predict;
pub mod radial;
pub mod simulators;
pub mod special;

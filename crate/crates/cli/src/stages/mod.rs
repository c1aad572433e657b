//! One module per subcommand, each exposing `run(&config, &dirs, sha)`.

pub mod climatology;
pub mod common;
pub mod correlations;
pub mod decompose;
pub mod ensembles;
pub mod fit;
pub mod gen_data;
pub mod internal_variability;
pub mod report;
pub mod sensitivity;
pub mod skill;
pub mod suite;

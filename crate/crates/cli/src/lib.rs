//! Front end of the attention-robustness verifier: model, image and
//! configuration loading, runs, results documents and SVG verdict maps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod image;
pub mod model;
pub mod render;
pub mod results;
pub mod run;

pub use config::{build_spec, format_perturbation, parse_perturbation, PerturbationTerm, ProblemConfig};
pub use error::{CliError, Result};
pub use image::{load_image, parse_grid, parse_idx, Image, ImageSource};
pub use model::{load_model, parse_model, save_model, ModelDocument};
pub use render::{render_svg, write_svg};
pub use results::{OracleDocument, ProblemEcho, RegionRecord, ResultsDocument, RunStatus};
pub use run::{prepare, reconcile_documents, run, run_oracle};

//! Analytical evaluation of affine loop-nest mappings on spatial
//! accelerators via data placement relations.

pub mod analysis;
pub mod arch;
pub mod bench;
pub mod dpr;
pub mod error;
pub mod intrel;
pub mod mapping;
pub mod oracle;
pub mod report;
pub mod workload;

pub use error::{Error, Result};

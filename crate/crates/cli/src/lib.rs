//! Library backing the `ataflow` binary: CSV I/O, the target registry,
//! fitting/diagnosis/density plumbing, and the bundled experiment presets.

pub mod csvio;
pub mod presets;
pub mod runs;

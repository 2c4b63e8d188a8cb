//! IO, file formats, system specs, and the experiment pipeline behind the
//! `salem` binary.

pub mod formats;
pub mod pipeline;
pub mod sysspec;

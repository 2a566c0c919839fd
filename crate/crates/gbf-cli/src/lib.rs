//! Library surface of the CLI crate: the on-disk model container.

pub mod model_file;

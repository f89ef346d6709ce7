//! Library side of the `phar` command-line tool.

pub mod compare;
pub mod config;
pub mod manifest;
pub mod pipeline;

//! File formats and the command-line interface for the `srf-core` toolkit:
//! PPM/PFM/PGM images, OBJ/PLY meshes, SSRF checkpoints, JSON configuration
//! and scene specifications, and the six subcommands tying them together.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod images;
pub mod meshio;
pub mod scenes;

pub use cli::run;

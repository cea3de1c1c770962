//! Synthetic shadowgraphy toolkit: seeded scene generation (overlapping
//! ellipses, defocused calibration droplets), image degradation, segmentation
//! post-processing into spray statistics, and detection scoring.

pub mod baseline;
pub mod degrade;
pub mod deteval;
pub mod exec;
pub mod geometry;
pub mod io;
pub mod raster;
pub mod scene;
pub mod segpost;

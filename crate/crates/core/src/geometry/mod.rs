//! Dyadic cubes and the adaptive partition tree over `S x A`.

mod cube;
mod tree;

pub use cube::{dyadic_width, sup_distance, DyadicCube, MAX_LEVEL};
pub use tree::{kraft_sum_of_levels, Ball, BallId, BallStatus, PartitionTree};

use crate::error::{Error, Result};

/// Checks that every coordinate of `x` lies in the closed unit interval.
pub fn check_unit_point(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::Domain(alloc::format!(
            "expected a point of dimension {dim}, got {}",
            x.len()
        )));
    }
    if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(alloc::format!(
            "coordinate {v} outside the unit interval"
        )));
    }
    Ok(())
}

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Deepest level a cube may have. Keeps `2^level` exactly representable and
/// cell indices within `u64`.
pub const MAX_LEVEL: u32 = 48;

/// Side length `2^{-level}` of a level-`level` dyadic cube, computed exactly.
pub fn dyadic_width(level: u32) -> f64 {
    1.0 / (1u64 << level) as f64
}

/// Infinity-norm distance between two points of equal dimension.
pub fn sup_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| num_traits::Float::abs(a - b))
        .fold(0.0, f64::max)
}

/// A cube `prod_i [index_i 2^{-l}, (index_i + 1) 2^{-l})` of the uniform
/// level-`l` tiling of `[0,1]^d`.
///
/// Faces are half-open except at 1.0: the last cube along each axis owns its
/// upper face so every point of the closed unit cube has exactly one owner.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    level: u32,
    index: Vec<u64>,
}

impl DyadicCube {
    pub fn new(level: u32, index: Vec<u64>) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::InvalidArgument(alloc::format!(
                "level {level} exceeds the maximum {MAX_LEVEL}"
            )));
        }
        let side = 1u64 << level;
        if let Some(i) = index.iter().find(|&&i| i >= side) {
            return Err(Error::InvalidArgument(alloc::format!(
                "index {i} out of range for level {level}"
            )));
        }
        Ok(Self { level, index })
    }

    /// The level-0 cube covering all of `[0,1]^dim`.
    pub fn root(dim: usize) -> Self {
        Self {
            level: 0,
            index: alloc::vec![0; dim],
        }
    }

    /// The unique level-`level` cube containing `x`.
    pub fn containing(level: u32, x: &[f64]) -> Result<Self> {
        super::check_unit_point(x, x.len())?;
        if level > MAX_LEVEL {
            return Err(Error::InvalidArgument(alloc::format!(
                "level {level} exceeds the maximum {MAX_LEVEL}"
            )));
        }
        let index = x.iter().map(|&v| axis_index(level, v)).collect();
        Ok(Self { level, index })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn index(&self) -> &[u64] {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    /// Infinity-norm diameter, `2^{-level}`.
    pub fn diameter(&self) -> f64 {
        dyadic_width(self.level)
    }

    pub fn center(&self) -> Vec<f64> {
        let w = self.diameter();
        self.index.iter().map(|&i| (i as f64 + 0.5) * w).collect()
    }

    /// Lower and upper corner along each axis.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let w = self.diameter();
        self.index
            .iter()
            .map(|&i| (i as f64 * w, (i + 1) as f64 * w))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.index)
                .all(|(&v, &i)| (0.0..=1.0).contains(&v) && axis_index(self.level, v) == i)
    }

    /// Whether `other` is a (non-strict) sub-cube of `self`.
    pub fn contains_cube(&self, other: &DyadicCube) -> bool {
        other.level >= self.level
            && other.dim() == self.dim()
            && other
                .index
                .iter()
                .zip(&self.index)
                .all(|(&o, &s)| o >> (other.level - self.level) == s)
    }

    /// The coarser cube at `level` containing this one.
    pub fn ancestor(&self, level: u32) -> Option<DyadicCube> {
        (level <= self.level).then(|| DyadicCube {
            level,
            index: self
                .index
                .iter()
                .map(|&i| i >> (self.level - level))
                .collect(),
        })
    }

    /// The `2^dim` cubes at `level + 1` that bisect this cube along every axis.
    pub fn children(&self) -> Result<Vec<DyadicCube>> {
        if self.level >= MAX_LEVEL {
            return Err(Error::InvalidArgument(alloc::format!(
                "cannot refine below level {MAX_LEVEL}"
            )));
        }
        let dim = self.dim();
        Ok((0..1u64 << dim)
            .map(|bits| DyadicCube {
                level: self.level + 1,
                index: self
                    .index
                    .iter()
                    .enumerate()
                    .map(|(axis, &i)| 2 * i + ((bits >> (dim - 1 - axis)) & 1))
                    .collect(),
            })
            .collect())
    }

    /// Row-major position of this cube among the `2^{dim * level}` cubes of
    /// its level.
    pub fn linear_index(&self) -> usize {
        self.index
            .iter()
            .fold(0usize, |acc, &i| (acc << self.level) | i as usize)
    }

    /// Inverse of [`DyadicCube::linear_index`].
    pub fn from_linear(level: u32, dim: usize, mut linear: usize) -> Self {
        let mask = (1usize << level) - 1;
        let mut index = alloc::vec![0u64; dim];
        for slot in index.iter_mut().rev() {
            *slot = (linear & mask) as u64;
            linear >>= level;
        }
        Self { level, index }
    }

    /// Number of cubes in the level-`level` tiling of a `dim`-dimensional
    /// unit cube, if it fits in memory addressing.
    pub fn tiling_size(level: u32, dim: usize) -> Option<usize> {
        let bits = (level as usize).checked_mul(dim)?;
        (bits < usize::BITS as usize - 1).then(|| 1usize << bits)
    }
}

fn axis_index(level: u32, v: f64) -> u64 {
    let side = 1u64 << level;
    let scaled = num_traits::Float::floor(v * side as f64);
    if scaled <= 0.0 {
        0
    } else {
        (scaled as u64).min(side - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn containing_cube_examples() {
        assert_eq!(DyadicCube::containing(2, &[0.6]).unwrap().index(), &[2]);
        assert_eq!(DyadicCube::containing(2, &[1.0]).unwrap().index(), &[3]);
        assert_eq!(
            DyadicCube::containing(0, &[0.3, 0.9, 1.0]).unwrap().index(),
            &[0, 0, 0]
        );
        assert!(DyadicCube::containing(2, &[1.5]).is_err());
        assert!(DyadicCube::containing(2, &[-0.1]).is_err());
    }

    #[test]
    fn shared_faces_belong_to_upper_cube() {
        let lower = DyadicCube::new(1, vec![0]).unwrap();
        let upper = DyadicCube::new(1, vec![1]).unwrap();
        assert!(!lower.contains(&[0.5]));
        assert!(upper.contains(&[0.5]));
        assert!(upper.contains(&[1.0]));
    }

    #[test]
    fn geometry_of_a_cube() {
        let c = DyadicCube::new(3, vec![5, 0]).unwrap();
        assert_eq!(c.diameter(), 0.125);
        assert_eq!(c.center(), vec![0.6875, 0.0625]);
        assert!(DyadicCube::new(2, vec![4]).is_err());
    }

    #[test]
    fn children_bisect_every_axis() {
        let root = DyadicCube::root(2);
        let kids = root.children().unwrap();
        assert_eq!(kids.len(), 4);
        for k in &kids {
            assert_eq!(k.level(), 1);
            assert_eq!(k.diameter(), 0.5);
            assert!(root.contains_cube(k));
            assert_eq!(k.ancestor(0).unwrap(), root);
        }
    }

    #[test]
    fn linear_index_round_trips() {
        for lin in 0..64 {
            let c = DyadicCube::from_linear(2, 3, lin);
            assert_eq!(c.linear_index(), lin);
        }
    }
}

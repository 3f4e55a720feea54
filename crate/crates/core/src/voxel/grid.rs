use std::path::Path;

use crate::container::Container;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Cubic occupancy grid, stored x-major: `index = (x * N + y) * N + z`.
/// The y axis is treated as vertical.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    extent: usize,
    data: Vec<f64>,
    pub class_tag: Option<String>,
    orientation: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

impl VoxelGrid {
    pub fn empty(extent: usize) -> Result<Self> {
        if extent == 0 {
            return Err(Error::InvalidArgument("voxel grid extent must be positive".into()));
        }
        Ok(VoxelGrid {
            extent,
            data: vec![0.0; extent * extent * extent],
            class_tag: None,
            orientation: None,
        })
    }

    /// Soft occupancies; values are clamped into `[0, 1]`, NaN is rejected.
    pub fn from_occupancy(extent: usize, data: Vec<f64>) -> Result<Self> {
        if extent == 0 || data.len() != extent * extent * extent {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form a {extent}³ grid",
                data.len()
            )));
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("occupancy contains NaN".into()));
        }
        Ok(VoxelGrid {
            extent,
            data: data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            class_tag: None,
            orientation: None,
        })
    }

    pub fn from_fn(extent: usize, f: impl Fn(usize, usize, usize) -> bool) -> Result<Self> {
        let mut g = VoxelGrid::empty(extent)?;
        for x in 0..extent {
            for y in 0..extent {
                for z in 0..extent {
                    if f(x, y, z) {
                        g.set(x, y, z, 1.0);
                    }
                }
            }
        }
        Ok(g)
    }

    /// Maps generator output in tanh space (`[-1, 1]`) back to occupancy.
    pub fn from_signed(extent: usize, signed: &[f64]) -> Result<Self> {
        VoxelGrid::from_occupancy(extent, signed.iter().map(|v| (v + 1.0) / 2.0).collect())
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.extent + y) * self.extent + z
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f64) {
        let i = self.index(x, y, z);
        self.data[i] = value.clamp(0.0, 1.0);
    }

    pub fn occupied(&self, x: usize, y: usize, z: usize) -> bool {
        self.get(x, y, z) >= 0.5
    }

    pub fn orientation(&self) -> Option<u8> {
        self.orientation
    }

    pub fn set_orientation(&mut self, orientation: Option<u8>) -> Result<()> {
        if let Some(o) = orientation {
            if o > 11 {
                return Err(Error::InvalidArgument(format!("orientation index {o} outside 0..=11")));
            }
        }
        self.orientation = orientation;
        Ok(())
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn binarize(&self, threshold: f64) -> VoxelGrid {
        VoxelGrid {
            data: self.data.iter().map(|&v| if v >= threshold { 1.0 } else { 0.0 }).collect(),
            ..self.clone()
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v >= 0.5).count()
    }

    pub fn fill_fraction(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    /// Every occupied voxel of `self` is occupied in `other`.
    pub fn is_subset_of(&self, other: &VoxelGrid) -> bool {
        self.extent == other.extent
            && self.data.iter().zip(&other.data).all(|(&a, &b)| a < 0.5 || b >= 0.5)
    }

    /// `[1, N, N, N]` tensor with occupied voxels at +1 and empty ones at -1.
    pub fn to_signed(&self) -> Tensor {
        let n = self.extent;
        Tensor::new(vec![1, n, n, n], self.data.iter().map(|&v| 2.0 * v - 1.0).collect())
            .expect("grid shape is consistent")
    }

    /// Quarter turns about `axis`, counter-clockwise when viewed from the
    /// positive end. Turning about the vertical axis advances the orientation
    /// index by three (a quarter of twelve).
    pub fn rotate90(&self, axis: Axis, turns: u8) -> Result<VoxelGrid> {
        if turns > 3 {
            return Err(Error::InvalidArgument(format!("quarter turns must be 0..=3, got {turns}")));
        }
        let mut out = self.clone();
        for _ in 0..turns {
            out = out.quarter_turn(axis);
        }
        if axis == Axis::Y {
            out.orientation = self.orientation.map(|o| (o + 3 * turns) % 12);
        }
        Ok(out)
    }

    fn quarter_turn(&self, axis: Axis) -> VoxelGrid {
        let n = self.extent;
        let m = n - 1;
        let mut data = vec![0.0; self.data.len()];
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let (a, b, c) = match axis {
                        Axis::X => (x, m - z, y),
                        Axis::Y => (z, y, m - x),
                        Axis::Z => (m - y, x, z),
                    };
                    data[(a * n + b) * n + c] = self.data[(x * n + y) * n + z];
                }
            }
        }
        VoxelGrid {
            data,
            ..self.clone()
        }
    }

    pub fn to_container(&self) -> Container {
        let mut meta = format!("kind = voxel-grid\nextent = {}\n", self.extent);
        if let Some(c) = &self.class_tag {
            meta.push_str(&format!("class = {c}\n"));
        }
        if let Some(o) = self.orientation {
            meta.push_str(&format!("orientation = {o}\n"));
        }
        let n = self.extent;
        let mut c = Container::new(meta);
        c.push("occupancy", Tensor::new(vec![n, n, n], self.data.clone()).expect("grid shape is consistent"));
        c
    }

    pub fn from_container(c: &Container) -> Result<VoxelGrid> {
        let occ = c.require("occupancy")?;
        let s = occ.shape();
        if s.len() != 3 || s[0] != s[1] || s[1] != s[2] {
            return Err(Error::Format(format!("occupancy block must be cubic, got {s:?}")));
        }
        let mut g = VoxelGrid::from_occupancy(s[0], occ.data().to_vec())?;
        for line in c.metadata.lines() {
            let Some((k, v)) = line.split_once('=') else { continue };
            match k.trim() {
                "class" => g.class_tag = Some(v.trim().to_string()),
                "orientation" => {
                    let o = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Format(format!("bad orientation `{}`", v.trim())))?;
                    g.set_orientation(Some(o))?;
                }
                _ => {}
            }
        }
        Ok(g)
    }

    pub fn write_vxg(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn read_vxg(path: &Path) -> Result<VoxelGrid> {
        VoxelGrid::from_container(&Container::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use proptest::prelude::*;

    fn random_grid(extent: usize, density: f64, seed: u64) -> VoxelGrid {
        let mut rng = RngState::new(seed);
        let data = (0..extent * extent * extent)
            .map(|_| if rng.uniform() < density { 1.0 } else { 0.0 })
            .collect();
        VoxelGrid::from_occupancy(extent, data).unwrap()
    }

    #[test]
    fn soft_values_clamp() {
        let g = VoxelGrid::from_occupancy(1, vec![1.7]).unwrap();
        assert_eq!(g.data(), &[1.0]);
        assert!(VoxelGrid::from_occupancy(2, vec![0.0; 7]).is_err());
        assert!(VoxelGrid::from_occupancy(1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn orientation_range_enforced() {
        let mut g = VoxelGrid::empty(2).unwrap();
        assert!(g.set_orientation(Some(11)).is_ok());
        assert!(g.set_orientation(Some(12)).is_err());
    }

    #[test]
    fn quarter_turn_moves_known_voxel() {
        let mut g = VoxelGrid::empty(3).unwrap();
        g.set(2, 0, 0, 1.0);
        let r = g.rotate90(Axis::Y, 1).unwrap();
        assert_eq!(r.get(0, 0, 0), 1.0);
        assert_eq!(r.count(), 1);
        assert!(g.rotate90(Axis::Y, 4).is_err());
    }

    #[test]
    fn vertical_turns_track_orientation() {
        let mut g = random_grid(4, 0.3, 5);
        g.set_orientation(Some(9)).unwrap();
        assert_eq!(g.rotate90(Axis::Y, 1).unwrap().orientation(), Some(0));
        assert_eq!(g.rotate90(Axis::X, 1).unwrap().orientation(), Some(9));
    }

    #[test]
    fn vxg_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.vxg");
        let mut g = random_grid(5, 0.4, 8);
        g.class_tag = Some("chair".into());
        g.set_orientation(Some(6)).unwrap();
        g.write_vxg(&path).unwrap();
        assert_eq!(VoxelGrid::read_vxg(&path).unwrap(), g);
    }

    #[test]
    fn signed_mapping_inverts() {
        let g = random_grid(4, 0.5, 3);
        let back = VoxelGrid::from_signed(4, g.to_signed().data()).unwrap();
        assert_eq!(back, g);
    }

    proptest! {
        #[test]
        fn rotation_group_laws(seed in 0u64..1000, axis in 0usize..3, n in 1usize..6) {
            let axis = [Axis::X, Axis::Y, Axis::Z][axis];
            let g = random_grid(n, 0.35, seed);
            let one = g.rotate90(axis, 1).unwrap();
            prop_assert_eq!(one.count(), g.count());
            prop_assert_eq!(one.rotate90(axis, 1).unwrap(), g.rotate90(axis, 2).unwrap());
            let mut four = g.clone();
            for _ in 0..4 {
                four = four.rotate90(axis, 1).unwrap();
            }
            prop_assert_eq!(four, g.clone());
            prop_assert_eq!(g.rotate90(axis, 3).unwrap().rotate90(axis, 1).unwrap(), g);
        }
    }
}

//! Orthographic single-view scans: depth maps, the visible shell they imply,
//! and depth-shaded silhouettes.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::voxel::grid::{Axis, VoxelGrid};

/// An axis-aligned viewing direction. `positive` rays travel toward
/// increasing coordinates, entering through the face at index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct View {
    pub axis: Axis,
    pub positive: bool,
}

impl View {
    pub const ALL: [View; 6] = [
        View { axis: Axis::X, positive: true },
        View { axis: Axis::X, positive: false },
        View { axis: Axis::Y, positive: true },
        View { axis: Axis::Y, positive: false },
        View { axis: Axis::Z, positive: true },
        View { axis: Axis::Z, positive: false },
    ];

    /// Voxel visited at `depth` along the ray through pixel `(u, v)`.
    /// Pixel rows and columns follow the two remaining axes in x, y, z order.
    fn voxel(self, n: usize, u: usize, v: usize, depth: usize) -> (usize, usize, usize) {
        let d = if self.positive { depth } else { n - 1 - depth };
        match self.axis {
            Axis::X => (d, u, v),
            Axis::Y => (u, d, v),
            Axis::Z => (u, v, d),
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.positive { '+' } else { '-' };
        let axis = ['x', 'y', 'z'][self.axis.index()];
        write!(f, "{sign}{axis}")
    }
}

impl FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (positive, rest) = match s.as_bytes().first() {
            Some(b'+') => (true, &s[1..]),
            Some(b'-') => (false, &s[1..]),
            _ => (true, s),
        };
        let axis = match rest {
            "x" | "X" => Axis::X,
            "y" | "Y" => Axis::Y,
            "z" | "Z" => Axis::Z,
            _ => return Err(Error::InvalidArgument(format!("unknown view `{s}` (expected e.g. +x, -z)"))),
        };
        Ok(View { axis, positive })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub view: View,
    /// Row-major, `None` where the ray hits nothing.
    pub depth: Vec<Option<u32>>,
}

impl DepthMap {
    pub fn at(&self, row: usize, col: usize) -> Option<u32> {
        self.depth[row * self.width + col]
    }

    pub fn hits(&self) -> usize {
        self.depth.iter().filter(|d| d.is_some()).count()
    }

    /// Binary PGM (P5, maxval 255). A hit at depth `d` on an `N`-deep scan
    /// becomes `round(255 * (N - d) / N)`, misses become 0.
    pub fn to_pgm(&self, extent: usize) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.depth.iter().map(|d| match d {
            Some(d) => (255.0 * (extent as f64 - *d as f64) / extent as f64).round() as u8,
            None => 0,
        }));
        out
    }

    pub fn write_pgm(&self, extent: usize, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_pgm(extent))?;
        Ok(())
    }
}

/// First occupied voxel along every ray of `view`.
pub fn depth_scan(grid: &VoxelGrid, view: View) -> DepthMap {
    let n = grid.extent();
    let mut depth = Vec::with_capacity(n * n);
    for u in 0..n {
        for v in 0..n {
            let hit = (0..n).find(|&d| {
                let (x, y, z) = view.voxel(n, u, v, d);
                grid.occupied(x, y, z)
            });
            depth.push(hit.map(|d| d as u32));
        }
    }
    DepthMap {
        width: n,
        height: n,
        view,
        depth,
    }
}

fn check_depth(map: &DepthMap, extent: usize) -> Result<()> {
    if map.width != extent || map.height != extent || map.depth.len() != extent * extent {
        return Err(Error::InvalidArgument(format!(
            "{}x{} depth map cannot voxelize into a {extent}³ grid",
            map.width, map.height
        )));
    }
    if let Some(d) = map.depth.iter().flatten().find(|&&d| d as usize >= extent) {
        return Err(Error::InvalidArgument(format!("depth {d} out of range for extent {extent}")));
    }
    Ok(())
}

/// The visible shell: exactly the first-hit voxel of every ray.
pub fn occlude_to_grid(map: &DepthMap, extent: usize) -> Result<VoxelGrid> {
    check_depth(map, extent)?;
    let mut g = VoxelGrid::empty(extent)?;
    for u in 0..extent {
        for v in 0..extent {
            if let Some(d) = map.at(u, v) {
                let (x, y, z) = map.view.voxel(extent, u, v, d as usize);
                g.set(x, y, z, 1.0);
            }
        }
    }
    Ok(g)
}

/// Voxels the scan proves empty: everything in front of a hit and whole rays
/// that miss.
pub fn known_empty(map: &DepthMap, extent: usize) -> Result<VoxelGrid> {
    check_depth(map, extent)?;
    let mut g = VoxelGrid::empty(extent)?;
    for u in 0..extent {
        for v in 0..extent {
            let stop = map.at(u, v).map_or(extent, |d| d as usize);
            for d in 0..stop {
                let (x, y, z) = map.view.voxel(extent, u, v, d);
                g.set(x, y, z, 1.0);
            }
        }
    }
    Ok(g)
}

/// How a scan is presented to a voxel encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OcclusionEncoding {
    /// Shell at +1, everything else at -1.
    #[default]
    Shell,
    /// Shell at +1, known-empty at -1, unobserved at 0.
    ShellAndFreeSpace,
}

impl OcclusionEncoding {
    pub fn as_str(self) -> &'static str {
        match self {
            OcclusionEncoding::Shell => "shell",
            OcclusionEncoding::ShellAndFreeSpace => "shell+free",
        }
    }
}

impl FromStr for OcclusionEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shell" => Ok(OcclusionEncoding::Shell),
            "shell+free" => Ok(OcclusionEncoding::ShellAndFreeSpace),
            _ => Err(Error::InvalidArgument(format!("unknown occlusion encoding `{s}`"))),
        }
    }
}

/// `[1, N, N, N]` encoder input for a scan.
pub fn encode_scan(map: &DepthMap, extent: usize, encoding: OcclusionEncoding) -> Result<Tensor> {
    let shell = occlude_to_grid(map, extent)?;
    match encoding {
        OcclusionEncoding::Shell => Ok(shell.to_signed()),
        OcclusionEncoding::ShellAndFreeSpace => {
            let free = known_empty(map, extent)?;
            let data = shell
                .data()
                .iter()
                .zip(free.data())
                .map(|(&s, &f)| if s > 0.5 { 1.0 } else if f > 0.5 { -1.0 } else { 0.0 })
                .collect();
            Tensor::new(vec![1, extent, extent, extent], data)
        }
    }
}

/// Grayscale image in `[0, 1]`: `(N - d) / N` on hits, 0 on background.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    /// `[1, H, W]`, shifted into `[-1, 1]` like voxel inputs.
    pub fn to_signed(&self) -> Tensor {
        Tensor::new(
            vec![1, self.height, self.width],
            self.pixels.iter().map(|&p| 2.0 * p - 1.0).collect(),
        )
        .expect("image shape is consistent")
    }
}

pub fn render_silhouette(grid: &VoxelGrid, view: View) -> Image {
    let n = grid.extent();
    let map = depth_scan(grid, view);
    Image {
        width: map.width,
        height: map.height,
        pixels: map
            .depth
            .iter()
            .map(|d| d.map_or(0.0, |d| (n as f64 - d as f64) / n as f64))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use proptest::prelude::*;

    fn random_grid(n: usize, density: f64, seed: u64) -> VoxelGrid {
        let mut rng = RngState::new(seed);
        let data = (0..n * n * n).map(|_| if rng.uniform() < density { 1.0 } else { 0.0 }).collect();
        VoxelGrid::from_occupancy(n, data).unwrap()
    }

    /// Minimum ray depth over all occupied voxels, computed voxel by voxel.
    fn brute_force(grid: &VoxelGrid, view: View) -> Vec<Option<u32>> {
        let n = grid.extent();
        let mut out = vec![None; n * n];
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    if !grid.occupied(x, y, z) {
                        continue;
                    }
                    let c = [x, y, z];
                    let a = view.axis.index();
                    let rest: Vec<usize> = (0..3).filter(|&i| i != a).map(|i| c[i]).collect();
                    let d = if view.positive { c[a] } else { n - 1 - c[a] } as u32;
                    let slot = &mut out[rest[0] * n + rest[1]];
                    *slot = Some(slot.map_or(d, |s: u32| s.min(d)));
                }
            }
        }
        out
    }

    #[test]
    fn solid_cube_and_empty_grid() {
        let solid = VoxelGrid::from_fn(5, |_, _, _| true).unwrap();
        let empty = VoxelGrid::empty(5).unwrap();
        for view in View::ALL {
            let m = depth_scan(&solid, view);
            assert!(m.depth.iter().all(|&d| d == Some(0)));
            let shell = occlude_to_grid(&m, 5).unwrap();
            assert_eq!(shell.count(), 25);
            let img = render_silhouette(&solid, view);
            assert!(img.pixels.iter().all(|&p| p == 1.0));

            assert!(depth_scan(&empty, view).depth.iter().all(|d| d.is_none()));
            assert!(render_silhouette(&empty, view).pixels.iter().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn front_slab_of_solid_cube() {
        let solid = VoxelGrid::from_fn(4, |_, _, _| true).unwrap();
        let view = View { axis: Axis::Z, positive: false };
        let shell = occlude_to_grid(&depth_scan(&solid, view), 4).unwrap();
        let slab = VoxelGrid::from_fn(4, |_, _, z| z == 3).unwrap();
        assert_eq!(shell, slab);
    }

    #[test]
    fn depth_out_of_range_rejected() {
        let mut m = depth_scan(&VoxelGrid::empty(3).unwrap(), View::ALL[0]);
        m.depth[4] = Some(3);
        assert!(occlude_to_grid(&m, 3).is_err());
    }

    #[test]
    fn pgm_encoding() {
        let mut g = VoxelGrid::empty(4).unwrap();
        g.set(1, 0, 0, 1.0);
        let m = depth_scan(&g, View::ALL[0]);
        let pgm = m.to_pgm(4);
        let header = b"P5\n4 4\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        let body = &pgm[header.len()..];
        assert_eq!(body.len(), 16);
        assert_eq!(body[0], 191);
        assert!(body[1..].iter().all(|&b| b == 0));
    }

    #[test]
    fn view_parsing() {
        for v in View::ALL {
            assert_eq!(v.to_string().parse::<View>().unwrap(), v);
        }
        assert!("w".parse::<View>().is_err());
    }

    #[test]
    fn free_space_encoding() {
        let g = VoxelGrid::from_fn(3, |x, _, _| x == 1).unwrap();
        let m = depth_scan(&g, View::ALL[0]);
        let t = encode_scan(&m, 3, OcclusionEncoding::ShellAndFreeSpace).unwrap();
        assert_eq!(t.at(&[0, 0, 0, 0]), -1.0);
        assert_eq!(t.at(&[0, 1, 2, 2]), 1.0);
        assert_eq!(t.at(&[0, 2, 1, 1]), 0.0);
        let s = encode_scan(&m, 3, OcclusionEncoding::Shell).unwrap();
        assert_eq!(s.at(&[0, 2, 1, 1]), -1.0);
    }

    proptest! {
        #[test]
        fn scan_matches_brute_force(seed in 0u64..5000, n in 1usize..9, density in 0.0f64..0.4, view in 0usize..6) {
            let g = random_grid(n, density, seed);
            let view = View::ALL[view];
            let m = depth_scan(&g, view);
            prop_assert_eq!(&m.depth, &brute_force(&g, view));

            let shell = occlude_to_grid(&m, n).unwrap();
            prop_assert!(shell.is_subset_of(&g));
            prop_assert_eq!(shell.count(), m.hits());
            prop_assert_eq!(depth_scan(&shell, view), m.clone());

            let img = render_silhouette(&g, view);
            for (p, d) in img.pixels.iter().zip(&m.depth) {
                prop_assert_eq!(*p > 0.0, d.is_some());
            }
        }
    }
}

//! Procedural solid shapes for small experiments.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::voxel::grid::{Axis, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ToyKind {
    Boxes,
    Spheres,
    Ells,
    /// Cycles box, sphere, ell.
    Mixed,
}

impl ToyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ToyKind::Boxes => "boxes",
            ToyKind::Spheres => "spheres",
            ToyKind::Ells => "ells",
            ToyKind::Mixed => "mixed",
        }
    }
}

impl fmt::Display for ToyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boxes" => Ok(ToyKind::Boxes),
            "spheres" => Ok(ToyKind::Spheres),
            "ells" => Ok(ToyKind::Ells),
            "mixed" => Ok(ToyKind::Mixed),
            _ => Err(Error::Data(format!("unknown toy dataset `{s}` (boxes, spheres, ells, mixed)"))),
        }
    }
}

pub const MIN_TOY_EXTENT: usize = 8;

fn between(rng: &mut RngState, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

/// Solid cuboid with sides in `[2, 3N/4]`.
pub fn random_box(n: usize, rng: &mut RngState) -> Result<VoxelGrid> {
    let hi = 3 * n / 4;
    let size = [between(rng, 2, hi), between(rng, 2, hi), between(rng, 2, hi)];
    let at = size.map(|s| rng.below(n - s + 1));
    cuboid(n, at, size)
}

pub fn cuboid(n: usize, at: [usize; 3], size: [usize; 3]) -> Result<VoxelGrid> {
    if (0..3).any(|i| at[i] + size[i] > n) {
        return Err(Error::Data(format!("cuboid {size:?} at {at:?} does not fit in {n}³")));
    }
    VoxelGrid::from_fn(n, |x, y, z| {
        let c = [x, y, z];
        (0..3).all(|i| c[i] >= at[i] && c[i] < at[i] + size[i])
    })
}

/// Solid ball with radius in `[1.5, 0.35 N]` whose bounding box fits.
pub fn random_sphere(n: usize, rng: &mut RngState) -> Result<VoxelGrid> {
    let r = 1.5 + rng.uniform() * (0.35 * n as f64 - 1.5);
    let span = n as f64 - 2.0 * r;
    let centre = [0, 1, 2].map(|_| r - 0.5 + rng.uniform() * span.max(0.0));
    ball(n, centre, r)
}

pub fn ball(n: usize, centre: [f64; 3], r: f64) -> Result<VoxelGrid> {
    if (0..3).any(|i| centre[i] - r < -0.5 || centre[i] + r > n as f64 - 0.5) {
        return Err(Error::Data(format!("ball of radius {r} at {centre:?} does not fit in {n}³")));
    }
    VoxelGrid::from_fn(n, |x, y, z| {
        let d2 = [x, y, z]
            .iter()
            .zip(centre)
            .map(|(&c, m)| (c as f64 - m).powi(2))
            .sum::<f64>();
        d2 <= r * r
    })
}

/// An L: a vertical post plus a foot running along +x from its base,
/// extruded along z. Not symmetric under any vertical quarter turn.
pub fn random_ell(n: usize, rng: &mut RngState) -> Result<VoxelGrid> {
    let hi = 3 * n / 4;
    let height = between(rng, 3, hi);
    let reach = between(rng, 3, hi);
    let thick = between(rng, 1, 2);
    let depth = between(rng, 2, n / 2);
    let at = [rng.below(n - reach + 1), rng.below(n - height + 1), rng.below(n - depth + 1)];
    ell(n, at, height, reach, thick, depth)
}

pub fn ell(n: usize, at: [usize; 3], height: usize, reach: usize, thick: usize, depth: usize) -> Result<VoxelGrid> {
    if at[0] + reach > n || at[1] + height > n || at[2] + depth > n || thick >= reach.min(height) {
        return Err(Error::Data(format!("ell {height}x{reach}x{depth} at {at:?} does not fit in {n}³")));
    }
    VoxelGrid::from_fn(n, |x, y, z| {
        let (x, y) = (x as isize - at[0] as isize, y as isize - at[1] as isize);
        let z_ok = z >= at[2] && z < at[2] + depth;
        let post = x >= 0 && (x as usize) < thick && y >= 0 && (y as usize) < height;
        let foot = x >= 0 && (x as usize) < reach && y >= 0 && (y as usize) < thick;
        z_ok && (post || foot)
    })
}

/// `count` base shapes, each emitted in `orientations` evenly spaced quarter
/// turns about the vertical axis (1, 2 or 4). Output is base-major, and the
/// random draws do not depend on `orientations`.
pub fn toy_dataset(
    kind: ToyKind,
    n: usize,
    count: usize,
    orientations: usize,
    rng: &mut RngState,
) -> Result<Vec<VoxelGrid>> {
    if n < MIN_TOY_EXTENT {
        return Err(Error::Data(format!(
            "toy shapes need an extent of at least {MIN_TOY_EXTENT}, got {n}"
        )));
    }
    if !matches!(orientations, 1 | 2 | 4) {
        return Err(Error::Data(format!("orientations must be 1, 2 or 4, got {orientations}")));
    }
    let step = 4 / orientations;
    let mut out = Vec::with_capacity(count * orientations);
    for i in 0..count {
        let family = match kind {
            ToyKind::Mixed => [ToyKind::Boxes, ToyKind::Spheres, ToyKind::Ells][i % 3],
            k => k,
        };
        let mut base = match family {
            ToyKind::Boxes => random_box(n, rng)?,
            ToyKind::Spheres => random_sphere(n, rng)?,
            _ => random_ell(n, rng)?,
        };
        base.class_tag = Some(family.as_str().trim_end_matches('s').to_string());
        base.set_orientation(Some(0))?;
        for q in 0..orientations {
            out.push(base.rotate90(Axis::Y, (q * step) as u8)?);
        }
    }
    Ok(out)
}

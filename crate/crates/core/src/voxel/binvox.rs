//! binvox reader and writer.
//!
//! binvox walks voxels with y fastest, then z, then x:
//! `index = x * N * N + z * N + y`. Occupancy is stored as `(value, count)`
//! byte pairs with `1 <= count <= 255`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::voxel::grid::VoxelGrid;

/// The world-space placement carried by the `translate` and `scale` lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub translate: [f64; 3],
    pub scale: f64,
}

impl Default for Placement {
    fn default() -> Self {
        Placement {
            translate: [0.0; 3],
            scale: 1.0,
        }
    }
}

pub fn read_binvox(path: &Path) -> Result<VoxelGrid> {
    Ok(decode_binvox(&std::fs::read(path)?)?.0)
}

pub fn write_binvox(grid: &VoxelGrid, path: &Path) -> Result<()> {
    std::fs::write(path, encode_binvox(grid, &Placement::default()))?;
    Ok(())
}

pub fn decode_binvox(bytes: &[u8]) -> Result<(VoxelGrid, Placement)> {
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("binvox header ended before `data`".into()))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end])
            .map(|s| s.trim_end_matches('\r'))
            .map_err(|_| Error::Format("binvox header is not ASCII".into()))
    };

    if next_line()?.trim() != "#binvox 1" {
        return Err(Error::Format("bad magic: expected `#binvox 1`".into()));
    }
    let mut dim = None;
    let mut placement = Placement::default();
    loop {
        let line = next_line()?;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("data") => break,
            Some("dim") => {
                let d: Vec<usize> = words
                    .map(|w| w.parse().map_err(|_| Error::Format(format!("bad dim line `{line}`"))))
                    .collect::<Result<_>>()?;
                if d.len() != 3 || d[0] == 0 || d[0] != d[1] || d[1] != d[2] {
                    return Err(Error::Format(format!("dim mismatch: `{line}` is not a cubic grid")));
                }
                dim = Some(d[0]);
            }
            Some("translate") => {
                let t: Vec<f64> = words
                    .map(|w| w.parse().map_err(|_| Error::Format(format!("bad translate line `{line}`"))))
                    .collect::<Result<_>>()?;
                placement.translate = t
                    .try_into()
                    .map_err(|_| Error::Format(format!("bad translate line `{line}`")))?;
            }
            Some("scale") => {
                placement.scale = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad scale line `{line}`")))?;
            }
            _ => return Err(Error::Format(format!("unexpected binvox header line `{line}`"))),
        }
    }
    let n = dim.ok_or_else(|| Error::Format("binvox header has no dim line".into()))?;
    let total = n * n * n;

    let body = &bytes[pos..];
    if !body.len().is_multiple_of(2) {
        return Err(Error::Format("binvox data has an odd number of bytes".into()));
    }
    let mut grid = VoxelGrid::empty(n)?;
    let mut i = 0;
    for pair in body.chunks_exact(2) {
        let (value, count) = (pair[0], pair[1] as usize);
        if value > 1 {
            return Err(Error::Format(format!("binvox run value {value} is not 0 or 1")));
        }
        if i + count > total {
            return Err(Error::Format(format!("RLE overrun: runs exceed {total} voxels")));
        }
        if value == 1 {
            for k in i..i + count {
                let (x, z, y) = (k / (n * n), (k / n) % n, k % n);
                grid.set(x, y, z, 1.0);
            }
        }
        i += count;
    }
    if i != total {
        return Err(Error::Format(format!("RLE underrun: {i} of {total} voxels")));
    }
    Ok((grid, placement))
}

/// Soft grids are binarized at 0.5.
pub fn encode_binvox(grid: &VoxelGrid, placement: &Placement) -> Vec<u8> {
    let n = grid.extent();
    let [tx, ty, tz] = placement.translate;
    let mut out = format!(
        "#binvox 1\ndim {n} {n} {n}\ntranslate {tx} {ty} {tz}\nscale {}\ndata\n",
        placement.scale
    )
    .into_bytes();
    let mut run: Option<(u8, u8)> = None;
    for x in 0..n {
        for z in 0..n {
            for y in 0..n {
                let v = grid.occupied(x, y, z) as u8;
                run = match run {
                    Some((rv, c)) if rv == v && c < 255 => Some((rv, c + 1)),
                    Some((rv, c)) => {
                        out.extend_from_slice(&[rv, c]);
                        Some((v, 1))
                    }
                    None => Some((v, 1)),
                };
            }
        }
    }
    if let Some((rv, c)) = run {
        out.extend_from_slice(&[rv, c]);
    }
    out
}

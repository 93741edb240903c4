//! Grid serialization: 8-bit PGM/PNG per channel and a raw little-endian
//! float32 container with a 32-byte header (magic, width, height, resolution,
//! channel count).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Channel, GridGeometry, OccupancyGrid};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"MAGRID1\0";
const HEADER_LEN: usize = 32;

/// Write one channel as binary PGM, value = round(255 * cell).
pub fn write_grid_pgm<S: Scalar>(
    grid: &OccupancyGrid<S>,
    channel: Channel,
    path: &Path,
) -> Result<()> {
    let g = &grid.geometry;
    let mut buf = format!("P5\n{} {}\n255\n", g.width, g.height).into_bytes();
    buf.extend(grid.channel(channel).iter().map(|&v| to_u8(v)));
    std::fs::write(path, buf)?;
    Ok(())
}

/// Write one channel as an 8-bit grayscale PNG.
pub fn write_grid_png<S: Scalar>(
    grid: &OccupancyGrid<S>,
    channel: Channel,
    path: &Path,
) -> Result<()> {
    let g = &grid.geometry;
    let pixels: Vec<u8> = grid.channel(channel).iter().map(|&v| to_u8(v)).collect();
    let img = image::GrayImage::from_raw(g.width as u32, g.height as u32, pixels)
        .expect("pixel buffer matches dimensions");
    img.save(path)
        .map_err(|e| Error::Serde(format!("png write: {e}")))?;
    Ok(())
}

fn to_u8<S: Scalar>(v: S) -> u8 {
    (v.to_f64_().clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Raw container: 32-byte header then `channels` planes of h*w f32 LE values.
pub fn write_grid_raw<S: Scalar, W: Write>(grid: &OccupancyGrid<S>, mut w: W) -> Result<()> {
    let g = &grid.geometry;
    let mut header = [0u8; HEADER_LEN];
    header[..8].copy_from_slice(MAGIC);
    header[8..12].copy_from_slice(&(g.width as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(g.height as u32).to_le_bytes());
    header[16..20].copy_from_slice(&(g.resolution.to_f64_() as f32).to_le_bytes());
    header[20..24].copy_from_slice(&2u32.to_le_bytes());
    w.write_all(&header)?;
    for ch in [Channel::Obstacle, Channel::Explored] {
        for &v in grid.channel(ch) {
            w.write_all(&(v.to_f64_() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read the raw container back; the grid is given a centered geometry.
pub fn read_grid_raw<R: Read>(mut r: R) -> Result<OccupancyGrid<f32>> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[..8] != MAGIC {
        return Err(Error::SchemaMismatch("bad grid magic".into()));
    }
    let width = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let resolution = f32::from_le_bytes(header[16..20].try_into().unwrap());
    let channels = u32::from_le_bytes(header[20..24].try_into().unwrap());
    if channels != 2 {
        return Err(Error::SchemaMismatch(format!("expected 2 channels, got {channels}")));
    }
    let mut grid = OccupancyGrid::zeros(GridGeometry::centered(height, width, resolution));
    for ch in [Channel::Obstacle, Channel::Explored] {
        let plane = grid.channel_mut(ch);
        let mut bytes = vec![0u8; plane.len() * 4];
        r.read_exact(&mut bytes)?;
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            plane[i] = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn raw_roundtrip_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut g = OccupancyGrid::<f32>::zeros(GridGeometry::centered(10, 14, 0.05));
        for r in 0..10 {
            for c in 0..14 {
                let e: f32 = rng.gen();
                g.set(r, c, rng.gen::<f32>() * e, e);
            }
        }
        let mut buf = Vec::new();
        write_grid_raw(&g, &mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 2 * 10 * 14 * 4);
        let back = read_grid_raw(buf.as_slice()).unwrap();
        assert_eq!(back.obstacle, g.obstacle);
        assert_eq!(back.explored, g.explored);
        assert_eq!(back.geometry, g.geometry);
    }

    #[test]
    fn pgm_header_and_values() {
        let mut g = OccupancyGrid::<f32>::zeros(GridGeometry::centered(2, 2, 0.05));
        g.set(0, 0, 0.0, 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        write_grid_pgm(&g, Channel::Explored, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[255, 0, 0, 0]);
    }
}

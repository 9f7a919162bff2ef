//! Binary field files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! 0..4    magic "LPSF"
//! 4       version (u8) = 1
//! 5       dim (u8)
//! 6..8    reserved (u16) = 0
//! 8..16   reserved, zero
//! then    dim × u32 points per axis
//! then    dim × f64 extent per axis
//! then    N^d × (re f64, im f64), row-major, last axis fastest
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{Field, Grid};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"LPSF";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 16;

pub fn write_field<W: Write>(f: &Field, mut out: W) -> Result<()> {
    let g = f.grid();
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(MAGIC);
    header[4] = VERSION;
    header[5] = g.dim() as u8;
    out.write_all(&header)?;
    for _ in 0..g.dim() {
        out.write_all(&(g.points_per_axis() as u32).to_le_bytes())?;
    }
    for _ in 0..g.dim() {
        out.write_all(&g.extent().to_le_bytes())?;
    }
    for v in f.values() {
        out.write_all(&v.re.to_le_bytes())?;
        out.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_field(f: &Field, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    write_field(f, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Parse a field file, taking the grid from its header.
pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    let bytes = fs::read(path)?;
    parse(&bytes)
}

/// Parse a field file and require it to live on `grid`.
pub fn load_field(grid: &Grid, path: impl AsRef<Path>) -> Result<Field> {
    let f = read_field(path)?;
    if f.grid() != grid {
        return Err(Error::Format(format!(
            "file holds a {}-d grid with {} points/axis and extent {}, expected {}-d, {} points/axis, extent {}",
            f.grid().dim(),
            f.grid().points_per_axis(),
            f.grid().extent(),
            grid.dim(),
            grid.points_per_axis(),
            grid.extent()
        )));
    }
    Ok(f)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = *pos + n;
    if end > bytes.len() {
        return Err(Error::Format(format!("truncated: need {end} bytes, have {}", bytes.len())));
    }
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

fn parse(bytes: &[u8]) -> Result<Field> {
    let mut pos = 0;
    let header = take(bytes, &mut pos, HEADER_LEN)?;
    if &header[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if header[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", header[4])));
    }
    let dim = header[5] as usize;
    if !(1..=3).contains(&dim) {
        return Err(Error::Format(format!("bad dimension {dim}")));
    }
    let mut counts = Vec::with_capacity(dim);
    for _ in 0..dim {
        let b = take(bytes, &mut pos, 4)?;
        counts.push(u32::from_le_bytes(b.try_into().unwrap()) as usize);
    }
    let mut extents = Vec::with_capacity(dim);
    for _ in 0..dim {
        let b = take(bytes, &mut pos, 8)?;
        extents.push(f64::from_le_bytes(b.try_into().unwrap()));
    }
    if counts.iter().any(|&c| c != counts[0]) || extents.iter().any(|&e| e != extents[0]) {
        return Err(Error::Format("only cubic grids are supported".into()));
    }
    let grid = Grid::new(dim, extents[0], counts[0]).map_err(|e| Error::Format(e.to_string()))?;
    let payload = take(bytes, &mut pos, grid.len() * 16)?;
    if pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - pos)));
    }
    let values = payload
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Field::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::random_field;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let g = Grid::new(2, 3.0, 4).unwrap();
        let mut buf = Vec::new();
        write_field(&Field::zeros(g), &mut buf).unwrap();
        assert_eq!(&buf[..4], b"LPSF");
        assert_eq!(buf[4], 1);
        assert_eq!(buf[5], 2);
        assert_eq!(&buf[6..16], &[0u8; 10]);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 4);
        assert_eq!(f64::from_le_bytes(buf[24..32].try_into().unwrap()), 3.0);
        assert_eq!(buf.len(), 16 + 2 * 4 + 2 * 8 + 16 * 16);
    }

    #[test]
    fn wrong_grid_and_empty_file_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.lpsf");
        let g = Grid::new(1, 3.0, 8).unwrap();
        save_field(&random_field(&g, 1, 0), &path).unwrap();
        assert!(load_field(&Grid::new(1, 3.0, 16).unwrap(), &path).is_err());
        assert!(load_field(&Grid::new(2, 3.0, 8).unwrap(), &path).is_err());
        let empty = dir.path().join("empty");
        fs::write(&empty, b"").unwrap();
        assert!(read_field(&empty).is_err());
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&empty, &bytes).unwrap();
        assert!(read_field(&empty).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip_is_bit_exact(dim in 1usize..=3, n in 4usize..9, seed in any::<u64>()) {
            let g = Grid::new(dim, 1.5 + n as f64, n).unwrap();
            let f = random_field(&g, seed, 0);
            let mut buf = Vec::new();
            write_field(&f, &mut buf).unwrap();
            let back = parse(&buf).unwrap();
            prop_assert_eq!(back.grid(), f.grid());
            for (a, b) in back.values().iter().zip(f.values()) {
                prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
                prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
        }
    }
}

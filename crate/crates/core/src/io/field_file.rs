//! Binary nodal field files.
//!
//! Layout, all little-endian:
//!
//! | bytes          | content                                 |
//! |----------------|-----------------------------------------|
//! | 6              | magic `NLCHF1`                          |
//! | 1              | dimension `d`                           |
//! | 1              | kind: 0 scalar, 1 vector (`d` components) |
//! | 8 d            | node counts, `u64`                      |
//! | 8 d            | extents, `f64`                          |
//! | 8 N c          | values, `f64`, axis 0 fastest, components in order |

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};

pub const MAGIC: &[u8; 6] = b"NLCHF1";

#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Scalar(ScalarField),
    Vector(VectorField),
}

impl FieldData {
    pub fn grid(&self) -> &Arc<Grid> {
        match self {
            FieldData::Scalar(f) => f.grid(),
            FieldData::Vector(v) => v.grid(),
        }
    }

    pub fn into_scalar(self) -> Result<ScalarField> {
        match self {
            FieldData::Scalar(f) => Ok(f),
            FieldData::Vector(_) => Err(Error::FieldFile("expected a scalar field, found a vector field".into())),
        }
    }

    pub fn into_vector(self) -> Result<VectorField> {
        match self {
            FieldData::Vector(v) => Ok(v),
            FieldData::Scalar(_) => Err(Error::FieldFile("expected a vector field, found a scalar field".into())),
        }
    }
}

pub fn encode(field: &FieldData) -> Vec<u8> {
    let grid = field.grid();
    let (kind, comps): (u8, Vec<&ScalarField>) = match field {
        FieldData::Scalar(f) => (0, vec![f]),
        FieldData::Vector(v) => (1, v.components().iter().collect()),
    };
    let mut out = Vec::with_capacity(8 + 16 * grid.dim() + 8 * grid.len() * comps.len());
    out.extend_from_slice(MAGIC);
    out.push(grid.dim() as u8);
    out.push(kind);
    for &n in grid.nodes() {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for &l in grid.extents() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for c in comps {
        for &x in c.values() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::FieldFile(format!("truncated file: need {n} bytes at offset {pos}")))?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

pub fn decode(bytes: &[u8]) -> Result<FieldData> {
    let mut pos = 0;
    if take(bytes, &mut pos, 6)? != MAGIC {
        return Err(Error::FieldFile("bad magic".into()));
    }
    let dim = take(bytes, &mut pos, 1)?[0] as usize;
    let kind = take(bytes, &mut pos, 1)?[0];
    if !(1..=3).contains(&dim) || kind > 1 {
        return Err(Error::FieldFile(format!("bad header: dim {dim}, kind {kind}")));
    }
    let mut nodes = Vec::with_capacity(dim);
    for _ in 0..dim {
        let n = u64::from_le_bytes(take(bytes, &mut pos, 8)?.try_into().expect("8 bytes"));
        nodes.push(usize::try_from(n).map_err(|_| Error::FieldFile(format!("node count {n}")))?);
    }
    let mut extents = Vec::with_capacity(dim);
    for _ in 0..dim {
        extents.push(f64::from_le_bytes(take(bytes, &mut pos, 8)?.try_into().expect("8 bytes")));
    }
    let grid = Grid::new(&extents, &nodes).map_err(|e| Error::FieldFile(e.to_string()))?;
    let comps = if kind == 0 { 1 } else { dim };
    let expected = grid.len() * comps * 8;
    if bytes.len() - pos != expected {
        return Err(Error::FieldFile(format!(
            "payload has {} bytes, header implies {expected}",
            bytes.len() - pos
        )));
    }
    let mut fields = Vec::with_capacity(comps);
    for _ in 0..comps {
        let vals = take(bytes, &mut pos, grid.len() * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        fields.push(ScalarField::from_values(&grid, vals)?);
    }
    Ok(if kind == 0 {
        FieldData::Scalar(fields.pop().expect("one component"))
    } else {
        FieldData::Vector(VectorField::from_components(fields)?)
    })
}

pub fn write_field(path: &Path, field: &FieldData) -> Result<()> {
    fs::write(path, encode(field))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<FieldData> {
    let bytes = fs::read(path).map_err(|e| Error::FieldFile(format!("{}: {e}", path.display())))?;
    decode(&bytes).map_err(|e| match e {
        Error::FieldFile(m) => Error::FieldFile(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Reads a scalar field and checks it lives on `grid`.
pub fn read_scalar_on(path: &Path, grid: &Arc<Grid>) -> Result<ScalarField> {
    let f = read_field(path)?.into_scalar()?;
    if !f.grid().same_as(grid) {
        return Err(Error::FieldFile(format!("{}: grid differs from the configured grid", path.display())));
    }
    // re-home onto the shared grid handle
    ScalarField::from_values(grid, f.into_values())
}

pub fn read_vector_on(path: &Path, grid: &Arc<Grid>) -> Result<VectorField> {
    let v = read_field(path)?.into_vector()?;
    if !v.grid().same_as(grid) {
        return Err(Error::FieldFile(format!("{}: grid differs from the configured grid", path.display())));
    }
    let comps = v
        .into_components()
        .into_iter()
        .map(|c| ScalarField::from_values(grid, c.into_values()))
        .collect::<Result<Vec<_>>>()?;
    VectorField::from_components(comps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_bit_exact() {
        let g = Grid::new(&[1.0, 2.0], &[4, 5]).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0] + 10.0 * x[1]);
        let bytes = encode(&FieldData::Scalar(f.clone()));
        assert_eq!(&bytes[..6], b"NLCHF1");
        assert_eq!(bytes[6], 2);
        assert_eq!(bytes[7], 0);
        assert_eq!(&bytes[8..16], &4u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &5u64.to_le_bytes());
        assert_eq!(&bytes[24..32], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[32..40], &2.0f64.to_le_bytes());
        assert_eq!(&bytes[40..48], &f.values()[0].to_le_bytes());
        assert_eq!(bytes.len(), 40 + 8 * 20);
        assert_eq!(decode(&bytes).unwrap(), FieldData::Scalar(f));
    }

    #[test]
    fn vector_roundtrip_and_corruption() {
        let g = Grid::new(&[1.0, 1.0, 1.0], &[4, 4, 5]).unwrap();
        let v = VectorField::from_components(vec![
            ScalarField::from_fn(&g, |x| x[0]),
            ScalarField::from_fn(&g, |x| x[1] * x[2]),
            ScalarField::from_fn(&g, |x| -x[2]),
        ])
        .unwrap();
        let bytes = encode(&FieldData::Vector(v.clone()));
        assert_eq!(decode(&bytes).unwrap(), FieldData::Vector(v));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
    }
}

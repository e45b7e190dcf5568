//! `.fvecs` / `.bvecs` / `.ivecs` files: per row, a little-endian `i32`
//! dimension count followed by that many elements.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::scalar::{ElemKind, Element};

/// Conventional file extension for an element kind, if it has one.
pub fn vecs_extension(kind: ElemKind) -> Option<&'static str> {
    match kind {
        ElemKind::F32 => Some("fvecs"),
        ElemKind::U8 => Some("bvecs"),
        ElemKind::I32 => Some("ivecs"),
        _ => None,
    }
}

fn parse<T: Element>(bytes: &[u8], metric: Metric) -> Result<Dataset<T>> {
    let width = T::KIND.size();
    let mut data = Vec::new();
    let mut dims: Option<usize> = None;
    let mut pos = 0;
    let mut row = 0usize;
    while pos < bytes.len() {
        let Some(head) = bytes.get(pos..pos + 4) else {
            return Err(Error::Format(format!("row {row}: truncated dimension field at byte {pos}")));
        };
        let d = i32::from_le_bytes(head.try_into().unwrap());
        if d <= 0 {
            return Err(Error::Format(format!("row {row}: invalid dimension {d}")));
        }
        let d = d as usize;
        match dims {
            None => dims = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::Format(format!(
                    "row {row}: dimension {d} differs from {expected} in earlier rows"
                )));
            }
            Some(_) => {}
        }
        pos += 4;
        let Some(body) = bytes.get(pos..pos + d * width) else {
            return Err(Error::Format(format!("row {row}: truncated, expected {d} elements")));
        };
        data.extend(body.chunks_exact(width).map(T::read_le));
        pos += d * width;
        row += 1;
    }
    Dataset::new(data, dims.unwrap_or(0), metric)
}

/// Reads a whole vecs file. The element type picks the layout: `f32` for
/// fvecs, `u8` for bvecs, `i32` for ivecs.
pub fn read_vecs<T: Element>(path: impl AsRef<Path>, metric: Metric) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    parse(&bytes, metric).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_vecs<T: Element>(dataset: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    let dims = i32::try_from(dataset.dims())
        .map_err(|_| Error::Format(format!("dims {} do not fit the header", dataset.dims())))?;
    let mut buf = Vec::with_capacity(dataset.dims() * T::KIND.size());
    for row in dataset.rows() {
        buf.clear();
        for &x in row {
            x.write_le(&mut buf);
        }
        out.write_all(&dims.to_le_bytes())?;
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fvecs_bytes(rows: &[(i32, &[f32])]) -> Vec<u8> {
        let mut out = Vec::new();
        for (d, vals) in rows {
            out.extend_from_slice(&d.to_le_bytes());
            for v in *vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn parses_two_rows() {
        let bytes = fvecs_bytes(&[(2, &[1.0, 2.0]), (2, &[3.0, 4.0])]);
        let ds: Dataset<f32> = parse(&bytes, Metric::L2).unwrap();
        assert_eq!((ds.len(), ds.dims()), (2, 2));
        assert_eq!(ds.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_ragged_and_truncated() {
        let ragged = fvecs_bytes(&[(3, &[1.0, 2.0, 3.0]), (2, &[1.0, 2.0])]);
        assert!(matches!(parse::<f32>(&ragged, Metric::L2), Err(Error::Format(_))));
        let mut truncated = fvecs_bytes(&[(2, &[1.0, 2.0])]);
        truncated.pop();
        assert!(matches!(parse::<f32>(&truncated, Metric::L2), Err(Error::Format(_))));
        assert!(matches!(parse::<f32>(&[1, 0], Metric::L2), Err(Error::Format(_))));
        let zero = fvecs_bytes(&[(0, &[])]);
        assert!(matches!(parse::<f32>(&zero, Metric::L2), Err(Error::Format(_))));
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let ds: Dataset<u8> = parse(&[], Metric::L2).unwrap();
        assert!(ds.is_empty());
    }
}

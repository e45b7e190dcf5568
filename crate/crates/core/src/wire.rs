//! Serialized region layout shared by the rank simulator and graph files.
//!
//! Little-endian header, 22 bytes:
//!
//! | offset | size | field     |
//! |--------|------|-----------|
//! | 0      | 4    | magic     |
//! | 4      | 1    | kind      |
//! | 5      | 8    | rows      |
//! | 13     | 8    | cols      |
//! | 21     | 1    | elem kind |
//!
//! followed by the row-major payload. Datasets carry `rows x cols`
//! elements of the given kind. kNN graphs and search results carry the
//! `u32` id matrix followed by the `f32` distance matrix (elem kind is
//! `F32`, naming the distance type). Search graphs carry only the `u32`
//! id matrix.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{IdSpace, KnnGraph, SearchGraph};
use crate::metric::Metric;
use crate::scalar::{ElemKind, Element};

pub const MAGIC: u32 = 0x474E_4E4B;
pub const HEADER_LEN: usize = 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum RegionKind {
    Dataset = 0,
    Knng = 1,
    SearchGraph = 2,
    Result = 3,
}

impl RegionKind {
    fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => RegionKind::Dataset,
            1 => RegionKind::Knng,
            2 => RegionKind::SearchGraph,
            3 => RegionKind::Result,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegionHeader {
    pub kind: RegionKind,
    pub rows: u64,
    pub cols: u64,
    pub elem: ElemKind,
}

impl RegionHeader {
    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.rows.to_le_bytes());
        out.extend_from_slice(&self.cols.to_le_bytes());
        out.push(self.elem as u8);
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("region shorter than header ({} bytes)", bytes.len())));
        }
        let magic = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        if magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:#010x}")));
        }
        let kind = RegionKind::from_code(bytes[4])
            .ok_or_else(|| Error::Format(format!("unknown region kind {}", bytes[4])))?;
        let rows = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
        let cols = u64::from_le_bytes(bytes[13..21].try_into().unwrap());
        let elem = ElemKind::from_code(bytes[21])
            .ok_or_else(|| Error::Format(format!("unknown element kind {}", bytes[21])))?;
        Ok(Self { kind, rows, cols, elem })
    }

    /// Exact payload size implied by the header.
    pub fn payload_len(&self) -> Result<usize> {
        let cells = self
            .rows
            .checked_mul(self.cols)
            .ok_or_else(|| Error::Format("region shape overflows".into()))?;
        let per_cell = match self.kind {
            RegionKind::Dataset => self.elem.size() as u64,
            RegionKind::Knng | RegionKind::Result => 8,
            RegionKind::SearchGraph => 4,
        };
        cells
            .checked_mul(per_cell)
            .and_then(|b| usize::try_from(b).ok())
            .ok_or_else(|| Error::Format("region size overflows".into()))
    }

    /// Total serialized size, header included.
    pub fn region_len(&self) -> Result<usize> {
        Ok(HEADER_LEN + self.payload_len()?)
    }
}

fn checked_payload(bytes: &[u8], expect: RegionKind) -> Result<(RegionHeader, &[u8])> {
    let header = RegionHeader::parse(bytes)?;
    if header.kind != expect {
        return Err(Error::Format(format!("expected {expect:?} region, found {:?}", header.kind)));
    }
    let len = header.payload_len()?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != len {
        return Err(Error::Format(format!(
            "{expect:?} payload is {} bytes, header implies {len}",
            payload.len()
        )));
    }
    Ok((header, payload))
}

fn read_u32s(bytes: &[u8]) -> Vec<u32> {
    bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect()
}

fn read_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()
}

pub fn encode_dataset<T: Element>(ds: &Dataset<T>) -> Vec<u8> {
    let header = RegionHeader {
        kind: RegionKind::Dataset,
        rows: ds.len() as u64,
        cols: ds.dims() as u64,
        elem: T::KIND,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + ds.as_slice().len() * T::KIND.size());
    header.write(&mut out);
    for &x in ds.as_slice() {
        x.write_le(&mut out);
    }
    out
}

pub fn decode_dataset<T: Element>(bytes: &[u8], metric: Metric) -> Result<Dataset<T>> {
    let (header, payload) = checked_payload(bytes, RegionKind::Dataset)?;
    if header.elem != T::KIND {
        return Err(Error::Format(format!(
            "dataset holds {}, expected {}",
            header.elem.name(),
            T::KIND.name()
        )));
    }
    let data = payload.chunks_exact(T::KIND.size()).map(T::read_le).collect();
    Dataset::new(data, header.cols as usize, metric)
}

fn encode_pair(kind: RegionKind, rows: usize, cols: usize, ids: &[u32], dists: &[f32]) -> Vec<u8> {
    let header = RegionHeader { kind, rows: rows as u64, cols: cols as u64, elem: ElemKind::F32 };
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * ids.len());
    header.write(&mut out);
    for id in ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    for d in dists {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

fn decode_pair(bytes: &[u8], kind: RegionKind) -> Result<(usize, usize, Vec<u32>, Vec<f32>)> {
    let (header, payload) = checked_payload(bytes, kind)?;
    let half = payload.len() / 2;
    Ok((
        header.rows as usize,
        header.cols as usize,
        read_u32s(&payload[..half]),
        read_f32s(&payload[half..]),
    ))
}

pub fn encode_knng(g: &KnnGraph) -> Vec<u8> {
    encode_pair(RegionKind::Knng, g.num_sources(), g.k(), g.ids(), g.dists())
}

/// The id space is not part of the layout; the reader states it.
pub fn decode_knng(bytes: &[u8], id_space: IdSpace) -> Result<KnnGraph> {
    let (rows, cols, ids, dists) = decode_pair(bytes, RegionKind::Knng)?;
    KnnGraph::from_parts(rows, cols, ids, dists, id_space)
}

pub fn encode_search_result(rows: usize, cols: usize, ids: &[u32], dists: &[f32]) -> Vec<u8> {
    encode_pair(RegionKind::Result, rows, cols, ids, dists)
}

pub fn decode_search_result(bytes: &[u8]) -> Result<(usize, usize, Vec<u32>, Vec<f32>)> {
    decode_pair(bytes, RegionKind::Result)
}

pub fn encode_search_graph(g: &SearchGraph) -> Vec<u8> {
    let header = RegionHeader {
        kind: RegionKind::SearchGraph,
        rows: g.num_sources() as u64,
        cols: g.out_degree() as u64,
        elem: ElemKind::U32,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * g.ids().len());
    header.write(&mut out);
    for id in g.ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    out
}

pub fn decode_search_graph(bytes: &[u8], id_space: IdSpace) -> Result<SearchGraph> {
    let (header, payload) = checked_payload(bytes, RegionKind::SearchGraph)?;
    SearchGraph::from_parts(header.rows as usize, header.cols as usize, read_u32s(payload), id_space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let mut out = Vec::new();
        RegionHeader { kind: RegionKind::Knng, rows: 2, cols: 3, elem: ElemKind::F32 }.write(&mut out);
        assert_eq!(out.len(), HEADER_LEN);
        assert_eq!(&out[..4], &[0x4B, 0x4E, 0x4E, 0x47]);
        assert_eq!(out[4], 1);
        assert_eq!(&out[5..13], &2u64.to_le_bytes());
        assert_eq!(&out[13..21], &3u64.to_le_bytes());
        assert_eq!(out[21], 0);
    }

    #[test]
    fn rejects_wrong_kind_and_truncation() {
        let g = KnnGraph::from_parts(1, 1, vec![3], vec![0.5], IdSpace::Local).unwrap();
        let bytes = encode_knng(&g);
        assert_eq!(bytes.len(), HEADER_LEN + 8);
        assert!(decode_search_graph(&bytes, IdSpace::Local).is_err());
        assert!(decode_knng(&bytes[..bytes.len() - 1], IdSpace::Local).is_err());
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        assert!(decode_knng(&bad, IdSpace::Local).is_err());
    }

    #[test]
    fn dataset_kind_mismatch() {
        let ds = Dataset::new(vec![1u8, 2], 2, Metric::L2).unwrap();
        let bytes = encode_dataset(&ds);
        assert_eq!(bytes.len(), HEADER_LEN + 2);
        assert!(decode_dataset::<f32>(&bytes, Metric::L2).is_err());
        assert_eq!(decode_dataset::<u8>(&bytes, Metric::L2).unwrap(), ds);
    }

    proptest! {
        #[test]
        fn knng_round_trip(rows in 0usize..6, cols in 1usize..5, seed in any::<u32>()) {
            let ids: Vec<u32> = (0..rows * cols).map(|i| seed.wrapping_add(i as u32)).collect();
            let dists: Vec<f32> = (0..rows * cols).map(|i| i as f32 * 0.5).collect();
            let g = KnnGraph::from_parts(rows, cols, ids, dists, IdSpace::Global).unwrap();
            let bytes = encode_knng(&g);
            prop_assert_eq!(bytes.len(), RegionHeader::parse(&bytes).unwrap().region_len().unwrap());
            prop_assert_eq!(decode_knng(&bytes, IdSpace::Global).unwrap(), g);
        }
    }
}

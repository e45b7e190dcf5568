//! Element types a [`Dataset`](crate::Dataset) can store.
//!
//! Every algorithm in the crate is generic over [`Element`]. Distances are
//! always computed and stored as `f32`; integer elements are promoted at
//! distance-computation time.

use std::fmt::Debug;

use num_traits::{NumCast, ToPrimitive};

/// Storage tag written into serialized regions and used by the file readers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ElemKind {
    F32 = 0,
    U8 = 1,
    I32 = 2,
    U32 = 3,
    F64 = 4,
}

impl ElemKind {
    pub fn size(self) -> usize {
        match self {
            ElemKind::U8 => 1,
            ElemKind::F32 | ElemKind::I32 | ElemKind::U32 => 4,
            ElemKind::F64 => 8,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => ElemKind::F32,
            1 => ElemKind::U8,
            2 => ElemKind::I32,
            3 => ElemKind::U32,
            4 => ElemKind::F64,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ElemKind::F32 => "float32",
            ElemKind::U8 => "uint8",
            ElemKind::I32 => "int32",
            ElemKind::U32 => "uint32",
            ElemKind::F64 => "float64",
        }
    }
}

pub trait Element:
    Copy + Send + Sync + Debug + PartialEq + PartialOrd + ToPrimitive + NumCast + 'static
{
    const KIND: ElemKind;

    fn to_f32(self) -> f32;

    fn write_le(self, out: &mut Vec<u8>);

    /// `bytes` must hold exactly `KIND.size()` bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! impl_element {
    ($t:ty, $kind:expr) => {
        impl Element for $t {
            const KIND: ElemKind = $kind;

            #[inline(always)]
            fn to_f32(self) -> f32 {
                self as f32
            }

            #[inline]
            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            #[inline]
            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("element width"))
            }
        }
    };
}

impl_element!(f32, ElemKind::F32);
impl_element!(f64, ElemKind::F64);
impl_element!(u8, ElemKind::U8);
impl_element!(i32, ElemKind::I32);
impl_element!(u32, ElemKind::U32);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_codes_round_trip() {
        for kind in [ElemKind::F32, ElemKind::U8, ElemKind::I32, ElemKind::U32, ElemKind::F64] {
            assert_eq!(ElemKind::from_code(kind as u8), Some(kind));
        }
        assert_eq!(ElemKind::from_code(9), None);
    }

    #[test]
    fn le_encoding() {
        let mut buf = Vec::new();
        1.5f32.write_le(&mut buf);
        200u8.write_le(&mut buf);
        assert_eq!(buf.len(), 5);
        assert_eq!(f32::read_le(&buf[..4]), 1.5);
        assert_eq!(u8::read_le(&buf[4..]), 200);
        assert_eq!(200u8.to_f32(), 200.0);
    }
}

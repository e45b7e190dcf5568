use std::fmt;
use std::str::FromStr;

use crate::error::{usage, Error, Result};
use crate::scalar::Element;

/// Distance function bound to a dataset. Smaller is always more similar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Metric {
    #[default]
    L2,
    /// `1 - cos(a, b)`, clamped to be nonnegative. A zero vector on either
    /// side yields `1.0`.
    Cosine,
}

impl Metric {
    /// Unchecked hot-path distance. Both slices must have the same length.
    #[inline]
    pub fn eval<T: Element>(self, a: &[T], b: &[T]) -> f32 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::L2 => l2(a, b),
            Metric::Cosine => cosine(a, b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::Cosine => "cosine",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Metric::L2),
            "cosine" | "cosine_distance" => Ok(Metric::Cosine),
            other => Err(usage(format!("unknown metric {other:?} (expected l2 or cosine)"))),
        }
    }
}

/// Checked distance between two vectors.
pub fn distance<T: Element>(metric: Metric, a: &[T], b: &[T]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), actual: b.len() });
    }
    Ok(metric.eval(a, b))
}

#[inline]
fn l2<T: Element>(a: &[T], b: &[T]) -> f32 {
    let mut acc = 0.0f32;
    for (&x, &y) in a.iter().zip(b) {
        let d = x.to_f32() - y.to_f32();
        acc += d * d;
    }
    acc.sqrt()
}

#[inline]
fn cosine<T: Element>(a: &[T], b: &[T]) -> f32 {
    let (mut dot, mut na, mut nb) = (0.0f32, 0.0f32, 0.0f32);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.to_f32(), y.to_f32());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb).sqrt()).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pythagorean_triple() {
        assert_eq!(distance(Metric::L2, &[0.0f32, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn cosine_identical_and_orthogonal() {
        let v = [0.3f32, -1.2, 4.0];
        assert!(distance(Metric::Cosine, &v, &v).unwrap().abs() < 1e-6);
        assert_eq!(distance(Metric::Cosine, &[1.0f32, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn cosine_zero_vector_is_one() {
        assert_eq!(Metric::Cosine.eval(&[0.0f32, 0.0], &[1.0, 2.0]), 1.0);
        assert_eq!(Metric::Cosine.eval(&[0.0f32, 0.0], &[0.0, 0.0]), 1.0);
    }

    #[test]
    fn uint8_promotes() {
        assert_eq!(Metric::L2.eval(&[0u8, 0], &[3, 4]), 5.0);
        assert_eq!(Metric::L2.eval(&[255u8], &[0]), 255.0);
    }

    #[test]
    fn mismatch_is_rejected() {
        let err = distance(Metric::L2, &[1.0f32], &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, actual: 2 }));
    }

    #[test]
    fn parse_names() {
        assert_eq!("l2".parse::<Metric>().unwrap(), Metric::L2);
        assert_eq!("cosine".parse::<Metric>().unwrap(), Metric::Cosine);
        assert!("hamming".parse::<Metric>().is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_nonnegative(
            pair in (1usize..24).prop_flat_map(|d| (
                proptest::collection::vec(-100.0f32..100.0, d),
                proptest::collection::vec(-100.0f32..100.0, d),
            ))
        ) {
            let (a, b) = pair;
            for m in [Metric::L2, Metric::Cosine] {
                let ab = m.eval(&a, &b);
                let ba = m.eval(&b, &a);
                prop_assert!(ab >= 0.0);
                prop_assert!((ab - ba).abs() <= 1e-6 * ab.abs().max(1.0));
            }
            prop_assert_eq!(Metric::L2.eval(&a, &a), 0.0);
        }
    }
}

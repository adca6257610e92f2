//! Flat parameter vectors with a named segment layout.
//!
//! All trainable function approximators store their parameters in a single
//! `Vec<f64>`; the layout maps segment names (e.g. `"l0.w"`, `"log_std"`) to
//! contiguous ranges. The layout is fixed for the lifetime of a model, so
//! gradients, optimizer moment buffers, and checkpoints all share it.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn new(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    segments: Vec<Segment>,
    offsets: Vec<usize>,
    total: usize,
}

impl ParamLayout {
    pub fn new(segments: Vec<Segment>) -> Self {
        let mut offsets = Vec::with_capacity(segments.len());
        let mut total = 0;
        for seg in &segments {
            offsets.push(total);
            total += seg.len();
        }
        Self {
            segments,
            offsets,
            total,
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn has(&self, name: &str) -> bool {
        self.segments.iter().any(|s| s.name == name)
    }

    pub fn range(&self, name: &str) -> Result<Range<usize>> {
        for (seg, &off) in self.segments.iter().zip(&self.offsets) {
            if seg.name == name {
                return Ok(off..off + seg.len());
            }
        }
        Err(Error::UnknownSegment(name.to_string()))
    }

    /// Name of the segment containing the given flat index; used in
    /// diagnostics.
    pub fn segment_at(&self, index: usize) -> &str {
        for (seg, &off) in self.segments.iter().zip(&self.offsets) {
            if index < off + seg.len() {
                return &seg.name;
            }
        }
        "<out of range>"
    }

    /// Layout with `other`'s segments appended after `self`'s.
    pub fn concat(&self, other: &ParamLayout) -> Self {
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().cloned());
        Self::new(segments)
    }
}

/// Flat, finitely-valued parameter vector over a fixed layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    layout: ParamLayout,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: ParamLayout) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn from_values(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::DimMismatch {
                what: "parameter vector".to_string(),
                expected: layout.len(),
                got: values.len(),
            });
        }
        Ok(Self { layout, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn segment(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.values[self.layout.range(name)?])
    }

    pub fn segment_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let range = self.layout.range(name)?;
        Ok(&mut self.values[range])
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layout.clone())
    }

    pub fn fill(&mut self, value: f64) {
        self.values.iter_mut().for_each(|v| *v = value);
    }

    /// `self += a * other`. Layouts must match.
    pub fn add_scaled(&mut self, a: f64, other: &ParamVector) {
        assert_eq!(self.layout, other.layout, "parameter layout mismatch");
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += a * o;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v * v).sum())
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> f64 {
        assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Errors with the offending segment name if any value is NaN or Inf.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("{context}, segment '{}'", self.layout.segment_at(i)),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ParamLayout {
        ParamLayout::new(vec![
            Segment::new("a.w", &[2, 3]),
            Segment::new("a.b", &[2]),
            Segment::new("log_std", &[1]),
        ])
    }

    #[test]
    fn total_length_is_sum_of_segments() {
        let l = layout();
        assert_eq!(l.len(), 6 + 2 + 1);
        assert_eq!(l.range("a.b").unwrap(), 6..8);
        assert_eq!(l.range("log_std").unwrap(), 8..9);
    }

    #[test]
    fn unknown_segment_is_an_error() {
        let p = ParamVector::zeros(layout());
        assert!(matches!(
            p.segment("missing"),
            Err(Error::UnknownSegment(_))
        ));
    }

    #[test]
    fn check_finite_names_offending_segment() {
        let mut p = ParamVector::zeros(layout());
        p.segment_mut("a.b").unwrap()[1] = f64::NAN;
        let err = p.check_finite("gradient").unwrap_err();
        match err {
            Error::NonFinite { context } => assert!(context.contains("a.b"), "{context}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn add_scaled_and_norm() {
        let mut p = ParamVector::zeros(layout());
        let mut g = ParamVector::zeros(layout());
        g.values_mut()[0] = 3.0;
        g.values_mut()[8] = 4.0;
        p.add_scaled(0.5, &g);
        assert_eq!(p.values()[0], 1.5);
        assert_eq!(p.values()[8], 2.0);
        assert!((g.l2_norm() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn concat_preserves_order() {
        let a = ParamLayout::new(vec![Segment::new("x", &[2])]);
        let b = ParamLayout::new(vec![Segment::new("y", &[3])]);
        let c = a.concat(&b);
        assert_eq!(c.len(), 5);
        assert_eq!(c.range("x").unwrap(), 0..2);
        assert_eq!(c.range("y").unwrap(), 2..5);
    }
}

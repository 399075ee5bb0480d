//! Flat parameter vectors with named segments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// Raw (pre-softplus) lengthscale and outputscale, 1×2.
    Kernel,
    /// Raw observation noise, 1×1.
    Noise,
    CoresetInputs,
    CoresetOutputs,
    CoresetWeights,
    Inducing,
    VariationalMean,
    VariationalCovFactor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    segments: Vec<Segment>,
    total: usize,
}

impl ParamLayout {
    /// Segments are laid out contiguously in the given order.
    pub fn new(shapes: Vec<(SegmentKind, usize, usize)>) -> Self {
        let mut offset = 0;
        let segments = shapes
            .into_iter()
            .map(|(kind, rows, cols)| {
                let s = Segment {
                    kind,
                    offset,
                    rows,
                    cols,
                };
                offset += rows * cols;
                s
            })
            .collect();
        Self {
            segments,
            total: offset,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn segment(&self, kind: SegmentKind) -> Option<&Segment> {
        self.segments.iter().find(|s| s.kind == kind)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    layout: ParamLayout,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: layout.total,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(Self { layout, values })
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same layout, new values. Length must match.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.layout.total);
        Self {
            layout: self.layout.clone(),
            values,
        }
    }

    pub fn segment_values(&self, kind: SegmentKind) -> &[f64] {
        match self.layout.segment(kind) {
            Some(s) => &self.values[s.range()],
            None => &[],
        }
    }

    pub fn segment_matrix(&self, kind: SegmentKind) -> Matrix {
        let s = self
            .layout
            .segment(kind)
            .unwrap_or_else(|| panic!("no {kind:?} segment"));
        Matrix::from_raw(s.rows, s.cols, self.values[s.range()].to_vec())
    }
}

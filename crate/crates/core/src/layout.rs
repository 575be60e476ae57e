//! Partition of a flat parameter vector into contiguous blocks (one per
//! weight matrix or bias vector).

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("layout has no blocks")]
    Empty,
    #[error("block {index} is empty")]
    EmptyBlock { index: usize },
    #[error("block {index} starts at {start}, expected {expected}")]
    Gap {
        index: usize,
        start: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    blocks: Vec<Range<usize>>,
}

impl BlockLayout {
    /// Validates that the ranges tile `[0, n)` in order without gaps or overlap.
    pub fn new(blocks: Vec<Range<usize>>) -> Result<Self, LayoutError> {
        if blocks.is_empty() {
            return Err(LayoutError::Empty);
        }
        let mut expected = 0;
        for (index, b) in blocks.iter().enumerate() {
            if b.start != expected {
                return Err(LayoutError::Gap {
                    index,
                    start: b.start,
                    expected,
                });
            }
            if b.end <= b.start {
                return Err(LayoutError::EmptyBlock { index });
            }
            expected = b.end;
        }
        Ok(Self { blocks })
    }

    pub fn single(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self {
            blocks: std::iter::once(0..dimension).collect(),
        }
    }

    /// Consecutive blocks of the given sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self, LayoutError> {
        let mut start = 0;
        let blocks = sizes
            .iter()
            .map(|&s| {
                let r = start..start + s;
                start += s;
                r
            })
            .collect();
        Self::new(blocks)
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn dimension(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.end)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::error::{Error, Result};

/// Which side of the blanket a coordinate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Internal,
    Blanket,
    External,
}

/// Sizes of the internal (η), blanket (b) and external (μ) blocks.
///
/// Coordinates are laid out as `[η^0..η^k, b^0..b^l, μ^0..μ^m]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPartition", into = "RawPartition")]
pub struct PartitionSpec {
    k: usize,
    l: usize,
    m: usize,
}

#[derive(Serialize, Deserialize)]
struct RawPartition {
    k: usize,
    l: usize,
    m: usize,
}

impl TryFrom<RawPartition> for PartitionSpec {
    type Error = Error;
    fn try_from(raw: RawPartition) -> Result<Self> {
        PartitionSpec::new(raw.k, raw.l, raw.m)
    }
}

impl From<PartitionSpec> for RawPartition {
    fn from(p: PartitionSpec) -> Self {
        RawPartition {
            k: p.k,
            l: p.l,
            m: p.m,
        }
    }
}

impl PartitionSpec {
    pub fn new(k: usize, l: usize, m: usize) -> Result<Self> {
        if k == 0 || l == 0 || m == 0 {
            return Err(Error::structural(
                "partition",
                format!("every block needs at least one coordinate, got (k, l, m) = ({k}, {l}, {m})"),
            ));
        }
        Ok(PartitionSpec { k, l, m })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.k + self.l + self.m
    }

    pub fn internal(&self) -> Range<usize> {
        0..self.k
    }

    pub fn blanket(&self) -> Range<usize> {
        self.k..self.k + self.l
    }

    pub fn external(&self) -> Range<usize> {
        self.k + self.l..self.n()
    }

    pub fn range(&self, block: Block) -> Range<usize> {
        match block {
            Block::Internal => self.internal(),
            Block::Blanket => self.blanket(),
            Block::External => self.external(),
        }
    }

    /// Global coordinate of the `i`-th internal state.
    pub fn eta(&self, i: usize) -> Result<usize> {
        if i < self.k {
            Ok(i)
        } else {
            Err(Error::Index(format!("η index {i} out of 0..{}", self.k)))
        }
    }

    pub fn b(&self, v: usize) -> Result<usize> {
        if v < self.l {
            Ok(self.k + v)
        } else {
            Err(Error::Index(format!("b index {v} out of 0..{}", self.l)))
        }
    }

    /// Global coordinate of the `j`-th external state.
    pub fn mu(&self, j: usize) -> Result<usize> {
        if j < self.m {
            Ok(self.k + self.l + j)
        } else {
            Err(Error::Index(format!("μ index {j} out of 0..{}", self.m)))
        }
    }

    pub fn block_of(&self, coord: usize) -> Option<Block> {
        if coord < self.k {
            Some(Block::Internal)
        } else if coord < self.k + self.l {
            Some(Block::Blanket)
        } else if coord < self.n() {
            Some(Block::External)
        } else {
            None
        }
    }

    /// Human-readable label such as `η^0`, `b^1` or `μ^2`.
    pub fn label(&self, coord: usize) -> Option<String> {
        self.block_of(coord).map(|block| match block {
            Block::Internal => format!("η^{coord}"),
            Block::Blanket => format!("b^{}", coord - self.k),
            Block::External => format!("μ^{}", coord - self.k - self.l),
        })
    }
}

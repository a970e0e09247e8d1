//! Boolean query x key visibility matrices.

use std::fmt;

use crate::error::{Error, Result};

/// What rule produced a mask. Informational; `allowed` is authoritative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskKind {
    /// Every query sees every key.
    Full,
    /// `allowed[i][j] <=> j <= i`.
    Causal,
    /// `allowed[i][j] <=> j <= i + delta`.
    Latency(usize),
    /// Context-enhanced encoder layout (near-past | short | anticipation).
    Encoder { delta: usize },
    /// Memory refinement layout.
    Refinement { delta: usize },
    /// Anything else, e.g. padding masks.
    Custom,
}

/// `allowed[i * cols + j]` is true when query row `i` may attend key column `j`.
#[derive(Clone, PartialEq, Eq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
    kind: MaskKind,
}

impl AttentionMask {
    /// Builds a mask from a predicate and checks that no row is fully masked.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        kind: MaskKind,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut allowed = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                allowed.push(f(i, j));
            }
        }
        let mask = Self {
            rows,
            cols,
            allowed,
            kind,
        };
        mask.validate()?;
        Ok(mask)
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            allowed: vec![true; rows * cols],
            kind: MaskKind::Full,
        }
    }

    pub fn causal(n: usize) -> Self {
        Self::from_fn(n, n, MaskKind::Causal, |i, j| j <= i).expect("diagonal always allowed")
    }

    pub fn latency(n: usize, delta: usize) -> Self {
        Self::from_fn(n, n, MaskKind::Latency(delta), |i, j| j <= i + delta)
            .expect("diagonal always allowed")
    }

    /// Every row must allow at least one column.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.rows {
            if !self.row(i).iter().any(|&a| a) {
                return Err(Error::FullyMaskedRow { row: i });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    #[inline]
    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.allowed[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_all_true(&self) -> bool {
        self.allowed.iter().all(|&a| a)
    }

    /// Same mask with its columns reordered: column `j` of the result is column `perm[j]`.
    pub fn permute_cols(&self, perm: &[usize]) -> Self {
        let mut allowed = Vec::with_capacity(self.allowed.len());
        for i in 0..self.rows {
            for &p in perm {
                allowed.push(self.allowed(i, p));
            }
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            allowed,
            kind: MaskKind::Custom,
        }
    }
}

impl fmt::Debug for AttentionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "AttentionMask {:?} [{} x {}]", self.kind, self.rows, self.cols)?;
        for i in 0..self.rows {
            let line: String = self.row(i).iter().map(|&a| if a { '1' } else { '.' }).collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

use super::{BinaryMatrix, CycleSeries, ProductivityFlag};
use crate::error::{RcaError, Result};

/// `a` consecutive cycles stacked row-wise.
#[derive(Debug, Clone)]
pub struct CycleBatch {
    pub start_cycle: u32,
    pub cycles: Vec<CycleSeries>,
    pub flags: Vec<ProductivityFlag>,
    pub stacked: BinaryMatrix,
    /// Productivity flag of the cycle owning each stacked row.
    pub labels_per_row: Vec<u8>,
}

impl CycleBatch {
    pub fn new(cycles: Vec<CycleSeries>, flags: Vec<ProductivityFlag>) -> Result<Self> {
        if cycles.is_empty() {
            return Err(RcaError::Degenerate("empty batch".into()));
        }
        if cycles.len() != flags.len() {
            return Err(RcaError::Dimension {
                expected: cycles.len(),
                actual: flags.len(),
            });
        }
        let dim = cycles[0].dim();
        let mut stacked = BinaryMatrix::new(dim);
        let mut labels_per_row = Vec::new();
        for (c, f) in cycles.iter().zip(&flags) {
            if c.cycle_id != f.cycle_id {
                return Err(RcaError::Config(format!(
                    "flag for cycle {} paired with cycle {}",
                    f.cycle_id, c.cycle_id
                )));
            }
            if c.dim() != dim {
                return Err(RcaError::Dimension {
                    expected: dim,
                    actual: c.dim(),
                });
            }
            for r in c.matrix.iter_rows() {
                stacked.push_row(r);
            }
            labels_per_row.extend(std::iter::repeat(f.flag).take(c.len()));
        }
        Ok(Self {
            start_cycle: cycles[0].cycle_id,
            cycles,
            flags,
            stacked,
            labels_per_row,
        })
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.stacked.cols()
    }
}

/// Streaming window of `a` cycles.
#[derive(Debug)]
pub struct Batcher {
    size: usize,
    pending: Vec<(CycleSeries, ProductivityFlag)>,
}

impl Batcher {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(RcaError::Config("batch size must be at least 1".into()));
        }
        Ok(Self {
            size,
            pending: Vec::with_capacity(size),
        })
    }

    pub fn push(&mut self, cycle: CycleSeries, flag: ProductivityFlag) -> Result<Option<CycleBatch>> {
        self.pending.push((cycle, flag));
        if self.pending.len() == self.size {
            self.flush()
        } else {
            Ok(None)
        }
    }

    /// Emits the trailing partial window, if any.
    pub fn flush(&mut self) -> Result<Option<CycleBatch>> {
        if self.pending.is_empty() {
            return Ok(None);
        }
        let (cycles, flags) = std::mem::take(&mut self.pending).into_iter().unzip();
        CycleBatch::new(cycles, flags).map(Some)
    }
}

/// Non-overlapping windows of `a` cycles; a trailing partial window is kept.
pub fn make_batches(cycles: &[CycleSeries], flags: &[ProductivityFlag], a: usize) -> Result<Vec<CycleBatch>> {
    if cycles.len() != flags.len() {
        return Err(RcaError::Dimension {
            expected: cycles.len(),
            actual: flags.len(),
        });
    }
    let mut batcher = Batcher::new(a)?;
    let mut out = Vec::with_capacity(cycles.len().div_ceil(a));
    for (c, f) in cycles.iter().zip(flags) {
        out.extend(batcher.push(c.clone(), *f)?);
    }
    out.extend(batcher.flush()?);
    Ok(out)
}

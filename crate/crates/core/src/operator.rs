//! Operators acting on blocks of orbitals.

use faer::Mat;

use crate::hamiltonian::HamiltonianOp;
use crate::{Error, Result, WaveBlock, C64};

/// A self-adjoint operator applied column-wise to a [`WaveBlock`].
pub trait BlockOperator: Sync {
    fn dim(&self) -> usize;

    fn apply_block(&self, x: &WaveBlock) -> Result<WaveBlock>;
}

impl BlockOperator for HamiltonianOp {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply_block(&self, x: &WaveBlock) -> Result<WaveBlock> {
        self.apply(x)
    }
}

/// An explicit Hermitian matrix; used for toy problems and dense checks.
#[derive(Clone, Debug)]
pub struct DenseOperator(pub Mat<C64>);

impl DenseOperator {
    pub fn diagonal(d: &[f64]) -> Self {
        Self(Mat::from_fn(d.len(), d.len(), |i, j| if i == j { C64::new(d[i], 0.0) } else { C64::new(0.0, 0.0) }))
    }
}

impl BlockOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply_block(&self, x: &WaveBlock) -> Result<WaveBlock> {
        if x.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} rows", self.dim()),
                found: format!("{} rows", x.nrows()),
            });
        }
        Ok(WaveBlock::from_mat(&self.0 * x.as_mat()))
    }
}

//! Block-diagonal cone elements and the linear map interface the
//! interior-point engine works against.
//!
//! The engine solves the pair
//!
//! ```text
//! (P)  min <C, Z>   s.t.  A(Z) = b,          Z >= 0
//! (D)  max b'y      s.t.  C - A*(y) = S,     S >= 0
//! ```
//!
//! where `Z` and `S` are block diagonal with dense PSD blocks and
//! nonnegative diagonal (linear) blocks.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{symmetric_eigenvalues, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BlockShape {
    Psd(usize),
    Diag(usize),
}

impl BlockShape {
    pub(crate) fn order(&self) -> usize {
        match *self {
            BlockShape::Psd(n) | BlockShape::Diag(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Block {
    Psd(DMatrix<f64>),
    Diag(DVector<f64>),
}

pub(crate) type Blocks = Vec<Block>;

impl Block {
    pub(crate) fn zeros(shape: BlockShape) -> Block {
        match shape {
            BlockShape::Psd(n) => Block::Psd(DMatrix::zeros(n, n)),
            BlockShape::Diag(n) => Block::Diag(DVector::zeros(n)),
        }
    }

    pub(crate) fn scaled_identity(shape: BlockShape, value: f64) -> Block {
        match shape {
            BlockShape::Psd(n) => Block::Psd(DMatrix::identity(n, n) * value),
            BlockShape::Diag(n) => Block::Diag(DVector::from_element(n, value)),
        }
    }

    pub(crate) fn shape(&self) -> BlockShape {
        match self {
            Block::Psd(m) => BlockShape::Psd(m.nrows()),
            Block::Diag(v) => BlockShape::Diag(v.len()),
        }
    }

    pub(crate) fn as_psd(&self) -> &DMatrix<f64> {
        match self {
            Block::Psd(m) => m,
            Block::Diag(_) => panic!("expected a PSD block"),
        }
    }

    pub(crate) fn as_diag(&self) -> &DVector<f64> {
        match self {
            Block::Diag(v) => v,
            Block::Psd(_) => panic!("expected a diagonal block"),
        }
    }

    fn dot(&self, other: &Block) -> f64 {
        match (self, other) {
            (Block::Psd(a), Block::Psd(b)) => a.dot(b),
            (Block::Diag(a), Block::Diag(b)) => a.dot(b),
            _ => panic!("block kinds differ"),
        }
    }

    fn norm_squared(&self) -> f64 {
        match self {
            Block::Psd(m) => m.norm_squared(),
            Block::Diag(v) => v.norm_squared(),
        }
    }

    fn trace(&self) -> f64 {
        match self {
            Block::Psd(m) => m.trace(),
            Block::Diag(v) => v.sum(),
        }
    }
}

pub(crate) fn dot(a: &[Block], b: &[Block]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

pub(crate) fn norm(a: &[Block]) -> f64 {
    a.iter().map(Block::norm_squared).sum::<f64>().sqrt()
}

pub(crate) fn trace(a: &[Block]) -> f64 {
    a.iter().map(Block::trace).sum()
}

/// `a + alpha * b`
pub(crate) fn axpy(a: &[Block], alpha: f64, b: &[Block]) -> Blocks {
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x, y) {
            (Block::Psd(x), Block::Psd(y)) => Block::Psd(x + y * alpha),
            (Block::Diag(x), Block::Diag(y)) => Block::Diag(x + y * alpha),
            _ => panic!("block kinds differ"),
        })
        .collect()
}

pub(crate) fn scale(a: &[Block], alpha: f64) -> Blocks {
    a.iter()
        .map(|x| match x {
            Block::Psd(m) => Block::Psd(m * alpha),
            Block::Diag(v) => Block::Diag(v * alpha),
        })
        .collect()
}

/// Symmetric part of the blockwise product `a * b * c`.
pub(crate) fn sym_product(a: &[Block], b: &[Block], c: &[Block]) -> Blocks {
    a.iter()
        .zip(b)
        .zip(c)
        .map(|((x, y), z)| match (x, y, z) {
            (Block::Psd(x), Block::Psd(y), Block::Psd(z)) => {
                let mut p = x * y * z;
                symmetrize(&mut p);
                Block::Psd(p)
            }
            (Block::Diag(x), Block::Diag(y), Block::Diag(z)) => {
                Block::Diag(x.component_mul(y).component_mul(z))
            }
            _ => panic!("block kinds differ"),
        })
        .collect()
}

/// Blockwise inverse of a positive definite element, or `None` if some
/// block is not numerically positive definite.
pub(crate) fn inverse(a: &[Block]) -> Option<Blocks> {
    a.iter()
        .map(|x| match x {
            Block::Psd(m) => {
                if m.nrows() == 0 {
                    return Some(Block::Psd(m.clone()));
                }
                let mut inv = m.clone().cholesky()?.inverse();
                symmetrize(&mut inv);
                Some(Block::Psd(inv))
            }
            Block::Diag(v) => {
                if v.iter().all(|&x| x > 0.0) {
                    Some(Block::Diag(v.map(|x| 1.0 / x)))
                } else {
                    None
                }
            }
        })
        .collect()
}

pub(crate) fn is_positive_definite(a: &[Block]) -> bool {
    a.iter().all(|x| match x {
        Block::Psd(m) => m.nrows() == 0 || m.clone().cholesky().is_some(),
        Block::Diag(v) => v.iter().all(|&x| x > 0.0),
    })
}

/// Largest `alpha` with `x + alpha * dx` positive semidefinite (`inf` when
/// every direction stays inside the cone). `x` must be positive definite.
pub(crate) fn max_step(x: &[Block], dx: &[Block]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (b, d) in x.iter().zip(dx) {
        match (b, d) {
            (Block::Psd(m), Block::Psd(dm)) => {
                if m.nrows() == 0 {
                    continue;
                }
                let Some(chol) = m.clone().cholesky() else {
                    return 0.0;
                };
                let l = chol.l();
                // L^{-1} dX L^{-T}
                let Some(li) = l.clone().try_inverse() else {
                    return 0.0;
                };
                let mut w = &li * dm * li.transpose();
                symmetrize(&mut w);
                let lmin = symmetric_eigenvalues(&w).first().copied().unwrap_or(0.0);
                if lmin < 0.0 {
                    alpha = alpha.min(-1.0 / lmin);
                }
            }
            (Block::Diag(v), Block::Diag(dv)) => {
                for (xi, di) in v.iter().zip(dv.iter()) {
                    if *di < 0.0 {
                        alpha = alpha.min(-xi / di);
                    }
                }
            }
            _ => panic!("block kinds differ"),
        }
    }
    alpha
}

/// A linear map `y -> sum_i y_i A_i` into a block-diagonal space, with the
/// constant term and cost of a conic program attached.
pub(crate) trait ConicMap: Sync {
    fn num_vars(&self) -> usize;
    fn shapes(&self) -> Vec<BlockShape>;
    /// `C`
    fn constant(&self) -> Blocks;
    /// `b` (maximised in the dual form).
    fn objective(&self) -> DVector<f64>;
    /// `A*(y) = sum_i y_i A_i`
    fn apply(&self, y: &DVector<f64>) -> Blocks;
    /// `A(Z)_i = <A_i, Z>` for symmetric `Z`.
    fn adjoint(&self, z: &[Block]) -> DVector<f64>;
    /// `M_ij = tr(A_i Z A_j W)` for symmetric `Z`, `W`; the full symmetric
    /// matrix is written to `out`.
    fn schur(&self, z: &[Block], w: &[Block], out: &mut faer::Mat<f64>);
    /// Rough Frobenius norms of the `A_i`, used only to scale the start point.
    fn column_norms(&self) -> DVector<f64>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_to_the_boundary() {
        let x = vec![Block::Psd(DMatrix::identity(2, 2)), Block::Diag(DVector::from_vec(vec![1.0, 2.0]))];
        let dx = vec![
            Block::Psd(DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 1.0])),
            Block::Diag(DVector::from_vec(vec![1.0, -1.0])),
        ];
        assert!((max_step(&x, &dx) - 0.5).abs() < 1e-14);
        let up = vec![Block::Psd(DMatrix::identity(2, 2)), Block::Diag(DVector::from_vec(vec![0.0, 0.0]))];
        assert_eq!(max_step(&x, &up), f64::INFINITY);
    }

    #[test]
    fn inverse_rejects_indefinite_blocks() {
        let x = vec![Block::Psd(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]))];
        assert!(inverse(&x).is_none());
        let y = vec![Block::Diag(DVector::from_vec(vec![2.0, 4.0]))];
        assert_eq!(inverse(&y).unwrap()[0].as_diag(), &DVector::from_vec(vec![0.5, 0.25]));
    }
}

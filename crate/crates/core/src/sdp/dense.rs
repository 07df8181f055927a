//! Conic map of a generic affine LMI `F0 + sum_i x_i F_i < 0` with explicit
//! coefficient matrices. Meant for small problems.

use nalgebra::{DMatrix, DVector};

use super::cone::{Block, BlockShape, Blocks, ConicMap};
use super::AffineLmi;

pub(crate) struct DenseMap<'a> {
    problem: &'a AffineLmi,
    margin: f64,
    floor: f64,
}

impl<'a> DenseMap<'a> {
    pub(crate) fn new(problem: &'a AffineLmi, margin: f64, floor: f64) -> Self {
        DenseMap { problem, margin, floor }
    }
}

impl ConicMap for DenseMap<'_> {
    fn num_vars(&self) -> usize {
        self.problem.coefficients.len()
    }

    fn shapes(&self) -> Vec<BlockShape> {
        let mut s = vec![BlockShape::Psd(self.problem.constant.nrows())];
        if self.problem.positive {
            s.push(BlockShape::Diag(self.num_vars()));
        }
        s
    }

    fn constant(&self) -> Blocks {
        let d = self.problem.constant.nrows();
        let mut out = vec![Block::Psd(-&self.problem.constant - DMatrix::identity(d, d) * self.margin)];
        if self.problem.positive {
            out.push(Block::Diag(DVector::from_element(self.num_vars(), -self.floor)));
        }
        out
    }

    fn objective(&self) -> DVector<f64> {
        -&self.problem.cost
    }

    fn apply(&self, y: &DVector<f64>) -> Blocks {
        let d = self.problem.constant.nrows();
        let mut f = DMatrix::zeros(d, d);
        for (fi, yi) in self.problem.coefficients.iter().zip(y.iter()) {
            f += fi * *yi;
        }
        let mut out = vec![Block::Psd(f)];
        if self.problem.positive {
            out.push(Block::Diag(-y));
        }
        out
    }

    fn adjoint(&self, z: &[Block]) -> DVector<f64> {
        let z0 = z[0].as_psd();
        let mut out = DVector::from_iterator(
            self.num_vars(),
            self.problem.coefficients.iter().map(|fi| fi.dot(z0)),
        );
        if self.problem.positive {
            out -= z[1].as_diag();
        }
        out
    }

    fn schur(&self, z: &[Block], w: &[Block], out: &mut faer::Mat<f64>) {
        let z0 = z[0].as_psd();
        let w0 = w[0].as_psd();
        let f = &self.problem.coefficients;
        for j in 0..f.len() {
            let g = z0 * &f[j] * w0;
            for i in 0..f.len() {
                out[(i, j)] = f[i].dot(&g);
            }
        }
        // Symmetrise away rounding.
        for j in 0..f.len() {
            for i in 0..j {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        if self.problem.positive {
            let zd = z[1].as_diag();
            let wd = w[1].as_diag();
            for i in 0..f.len() {
                out[(i, i)] += zd[i] * wd[i];
            }
        }
    }

    fn column_norms(&self) -> DVector<f64> {
        DVector::from_iterator(self.num_vars(), self.problem.coefficients.iter().map(|f| f.norm()))
    }
}

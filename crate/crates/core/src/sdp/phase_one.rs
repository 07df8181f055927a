//! Feasibility problem: minimise the largest eigenvalue of the first
//! (negative-definite) constraint block, keeping every other block as is.
//!
//! Adds one variable `t` with `C0 - A0*(y) + t I >= 0` and `t >= -floor`,
//! and maximises `-t`. Any point with `t < 0` is strictly feasible for the
//! original problem.

use nalgebra::DVector;

use super::cone::{Block, BlockShape, Blocks, ConicMap};

pub(crate) struct PhaseOne<'a> {
    inner: &'a dyn ConicMap,
    floor: f64,
}

impl<'a> PhaseOne<'a> {
    pub(crate) fn new(inner: &'a dyn ConicMap, floor: f64) -> Self {
        PhaseOne { inner, floor }
    }

    fn split<'b>(&self, z: &'b [Block]) -> (&'b [Block], f64) {
        let k = z.len() - 1;
        (&z[..k], z[k].as_diag()[0])
    }
}

impl ConicMap for PhaseOne<'_> {
    fn num_vars(&self) -> usize {
        self.inner.num_vars() + 1
    }

    fn shapes(&self) -> Vec<BlockShape> {
        let mut s = self.inner.shapes();
        s.push(BlockShape::Diag(1));
        s
    }

    fn constant(&self) -> Blocks {
        let mut c = self.inner.constant();
        c.push(Block::Diag(DVector::from_element(1, self.floor)));
        c
    }

    fn objective(&self) -> DVector<f64> {
        let m = self.inner.num_vars();
        let mut b = DVector::zeros(m + 1);
        b[m] = -1.0;
        b
    }

    fn apply(&self, y: &DVector<f64>) -> Blocks {
        let m = self.inner.num_vars();
        let t = y[m];
        let mut out = self.inner.apply(&y.rows(0, m).into_owned());
        match &mut out[0] {
            Block::Psd(g) => {
                for i in 0..g.nrows() {
                    g[(i, i)] -= t;
                }
            }
            Block::Diag(v) => v.add_scalar_mut(-t),
        }
        out.push(Block::Diag(DVector::from_element(1, -t)));
        out
    }

    fn adjoint(&self, z: &[Block]) -> DVector<f64> {
        let (inner_z, ze) = self.split(z);
        let a = self.inner.adjoint(inner_z);
        let m = a.len();
        let trace0 = match &inner_z[0] {
            Block::Psd(g) => g.trace(),
            Block::Diag(v) => v.sum(),
        };
        let mut out = DVector::zeros(m + 1);
        out.rows_mut(0, m).copy_from(&a);
        out[m] = -trace0 - ze;
        out
    }

    fn schur(&self, z: &[Block], w: &[Block], out: &mut faer::Mat<f64>) {
        let m = self.inner.num_vars();
        let (zi, ze) = self.split(z);
        let (wi, we) = self.split(w);
        let mut inner = faer::Mat::zeros(m, m);
        self.inner.schur(zi, wi, &mut inner);
        for j in 0..m {
            for i in 0..m {
                out[(i, j)] = inner[(i, j)];
            }
        }
        // c_i = tr(A_i Z (-I) W) over block 0 only.
        let mut only_first: Blocks = zi.iter().map(|b| Block::zeros(b.shape())).collect();
        let zw = match (&zi[0], &wi[0]) {
            (Block::Psd(a), Block::Psd(b)) => {
                let mut p = a * b;
                crate::linalg::symmetrize(&mut p);
                Block::Psd(p)
            }
            (Block::Diag(a), Block::Diag(b)) => Block::Diag(a.component_mul(b)),
            _ => unreachable!(),
        };
        let tr = match &zw {
            Block::Psd(p) => p.trace(),
            Block::Diag(v) => v.sum(),
        };
        only_first[0] = zw;
        let c = self.inner.adjoint(&only_first);
        for i in 0..m {
            out[(i, m)] = -c[i];
            out[(m, i)] = -c[i];
        }
        out[(m, m)] = tr + ze * we;
    }

    fn column_norms(&self) -> DVector<f64> {
        let inner = self.inner.column_norms();
        let m = inner.len();
        let order = self.inner.shapes()[0].order() as f64;
        let mut out = DVector::zeros(m + 1);
        out.rows_mut(0, m).copy_from(&inner);
        out[m] = order.sqrt() + 1.0;
        out
    }
}

//! Conic map of the observer LMI after block elimination.
//!
//! With the margin `F(p, X, Y) + eps I <= 0`, the constant blocks
//! `-(gamma - eps) I` and the precision block `-(gamma diag(p) - eps I)` are
//! removed by Schur complements, and the gain variable is minimised out in
//! closed form at `Y = -Cy^T (gamma diag(p) - eps I)`. What remains is
//!
//! ```text
//! [ XA + A'X + eps I + Cz'Cz/(gamma-eps) - Cy'(gamma P - eps I)Cy   XB ]
//! [ B'X                                                   -(gamma-eps) ] <= 0
//! ```
//!
//! over `(X, p)` only, together with `X >= eps_pd I` and `p >= floor`.

use nalgebra::{DMatrix, DVector};

use super::cone::{Block, BlockShape, Blocks, ConicMap};
use super::LmiProblem;

pub(crate) struct ReducedObserverMap {
    n: usize,
    k: usize,
    ny: usize,
    gamma: f64,
    /// `[A, B]`, n x (n+k)
    a_bar: DMatrix<f64>,
    /// Sensor rows padded to n+k.
    c_rows: Vec<DVector<f64>>,
    constant: Blocks,
    objective: DVector<f64>,
    /// (row, col) of each X variable, row <= col.
    pairs: Vec<(usize, usize)>,
}

impl ReducedObserverMap {
    pub(crate) fn new(problem: &LmiProblem, margin: f64, pd_margin: f64, p_floor: f64) -> Self {
        let n = problem.a.nrows();
        let k = problem.bd.ncols();
        let ny = problem.cy.nrows();
        let gamma = problem.gamma;

        let mut a_bar = DMatrix::zeros(n, n + k);
        a_bar.view_mut((0, 0), (n, n)).copy_from(&problem.a);
        a_bar.view_mut((0, n), (n, k)).copy_from(&problem.bd);

        let c_rows = (0..ny)
            .map(|i| {
                let mut v = DVector::zeros(n + k);
                v.rows_mut(0, n).copy_from(&problem.cy.row(i).transpose());
                v
            })
            .collect();

        let mut top = DMatrix::identity(n, n) * margin
            + problem.cz.transpose() * &problem.cz / (gamma - margin)
            + problem.cy.transpose() * &problem.cy * margin;
        top.neg_mut();
        let mut c1 = DMatrix::zeros(n + k, n + k);
        c1.view_mut((0, 0), (n, n)).copy_from(&top);
        for j in 0..k {
            c1[(n + j, n + j)] = gamma - margin;
        }
        let constant = vec![
            Block::Psd(c1),
            Block::Psd(DMatrix::identity(n, n) * -pd_margin),
            Block::Diag(DVector::from_element(ny, -p_floor)),
        ];

        let nx = n * (n + 1) / 2;
        let mut objective = DVector::zeros(nx + ny);
        for i in 0..ny {
            objective[nx + i] = -problem.weights[i];
        }
        let pairs = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();

        ReducedObserverMap {
            n,
            k,
            ny,
            gamma,
            a_bar,
            c_rows,
            constant,
            objective,
            pairs,
        }
    }

    pub(crate) fn x_vars(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    /// Symmetric `X` from the variable vector.
    pub(crate) fn unpack_x(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.n, self.n);
        for (idx, &(a, b)) in self.pairs.iter().enumerate() {
            x[(a, b)] = y[idx];
            x[(b, a)] = y[idx];
        }
        x
    }

    pub(crate) fn unpack_p(&self, y: &DVector<f64>) -> DVector<f64> {
        y.rows(self.x_vars(), self.ny).into_owned()
    }

    pub(crate) fn pack(&self, x: &DMatrix<f64>, p: &DVector<f64>) -> DVector<f64> {
        let nx = self.x_vars();
        let mut y = DVector::zeros(nx + self.ny);
        for (idx, &(a, b)) in self.pairs.iter().enumerate() {
            y[idx] = 0.5 * (x[(a, b)] + x[(b, a)]);
        }
        y.rows_mut(nx, self.ny).copy_from(p);
        y
    }

    /// Top n rows of an (n+k)-square matrix.
    fn top_rows(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
        m.rows(0, n).into_owned()
    }
}

/// `x' B_ab y` for the symmetric basis element of the pair (a, b).
#[inline]
fn basis_form(x: &DVector<f64>, y: &DVector<f64>, a: usize, b: usize) -> f64 {
    if a == b {
        x[a] * y[a]
    } else {
        x[a] * y[b] + x[b] * y[a]
    }
}

impl ConicMap for ReducedObserverMap {
    fn num_vars(&self) -> usize {
        self.x_vars() + self.ny
    }

    fn shapes(&self) -> Vec<BlockShape> {
        vec![
            BlockShape::Psd(self.n + self.k),
            BlockShape::Psd(self.n),
            BlockShape::Diag(self.ny),
        ]
    }

    fn constant(&self) -> Blocks {
        self.constant.clone()
    }

    fn objective(&self) -> DVector<f64> {
        self.objective.clone()
    }

    fn apply(&self, y: &DVector<f64>) -> Blocks {
        let n = self.n;
        let x = self.unpack_x(y);
        let p = self.unpack_p(y);
        let xa = &x * &self.a_bar; // n x (n+k)
        let mut g = DMatrix::zeros(n + self.k, n + self.k);
        g.view_mut((0, 0), (n, n + self.k)).copy_from(&xa);
        g += xa_transpose_padded(&xa, n, self.k);
        for (i, c) in self.c_rows.iter().enumerate() {
            g -= c * c.transpose() * (self.gamma * p[i]);
        }
        vec![Block::Psd(g), Block::Psd(-x), Block::Diag(-p)]
    }

    fn adjoint(&self, z: &[Block]) -> DVector<f64> {
        let n = self.n;
        let z1 = z[0].as_psd();
        let z2 = z[1].as_psd();
        let z3 = z[2].as_diag();
        // W = A_bar Z1 E' + E Z1 A_bar' - Z2
        let t = &self.a_bar * z1.columns(0, n);
        let w = &t + t.transpose() - z2;
        let nx = self.x_vars();
        let mut out = DVector::zeros(nx + self.ny);
        for (idx, &(a, b)) in self.pairs.iter().enumerate() {
            out[idx] = if a == b { w[(a, a)] } else { 2.0 * w[(a, b)] };
        }
        for (i, c) in self.c_rows.iter().enumerate() {
            out[nx + i] = -self.gamma * c.dot(&(z1 * c)) - z3[i];
        }
        out
    }

    fn schur(&self, z: &[Block], w: &[Block], out: &mut faer::Mat<f64>) {
        let n = self.n;
        let z1 = z[0].as_psd();
        let w1 = w[0].as_psd();
        let z2 = z[1].as_psd();
        let w2 = w[1].as_psd();

        // Pairs (P, Q) with M[ab, cd] += tr(B_ab P B_cd Q).
        let az = &self.a_bar * z1; // n x (n+k)
        let aw = &self.a_bar * w1;
        let p1 = az.columns(0, n).into_owned(); // A_bar Z E'
        let q1 = aw.columns(0, n).into_owned(); // A_bar W E'
        let p2 = &az * self.a_bar.transpose(); // A_bar Z A_bar'
        let q2 = Self::top_rows(w1, n).columns(0, n).into_owned(); // E W E'
        let p3 = Self::top_rows(z1, n).columns(0, n).into_owned(); // E Z E'
        let q3 = &aw * self.a_bar.transpose(); // A_bar W A_bar'
        let p4 = p1.transpose(); // E Z A_bar'
        let q4 = q1.transpose(); // E W A_bar'
        let terms: [(&DMatrix<f64>, &DMatrix<f64>); 5] =
            [(&p1, &q1), (&p2, &q2), (&p3, &q3), (&p4, &q4), (z2, w2)];
        let t = terms.len();

        let nx = self.x_vars();
        let mut u = DMatrix::zeros(n, 2 * t);
        let mut v = DMatrix::zeros(2 * t, n);
        let mut r = DMatrix::zeros(n, n);
        for (row, &(a, b)) in self.pairs.iter().enumerate() {
            // R[k, l] = sum over terms (i, j) of B_ab of sum_t P_t[j, k] Q_t[l, i]
            u.fill(0.0);
            v.fill(0.0);
            for (ti, (p, q)) in terms.iter().enumerate() {
                u.column_mut(2 * ti).copy_from(&p.row(b).transpose());
                v.row_mut(2 * ti).copy_from(&q.column(a).transpose());
                if a != b {
                    u.column_mut(2 * ti + 1).copy_from(&p.row(a).transpose());
                    v.row_mut(2 * ti + 1).copy_from(&q.column(b).transpose());
                }
            }
            r.gemm(1.0, &u, &v, 0.0);
            for (colx, &(c, d)) in self.pairs.iter().enumerate().skip(row) {
                let val = if c == d { r[(c, c)] } else { r[(c, d)] + r[(d, c)] };
                out[(row, colx)] = val;
                out[(colx, row)] = val;
            }
        }

        // X-p coupling and p-p block.
        let ny = self.ny;
        let zc: Vec<DVector<f64>> = self.c_rows.iter().map(|c| z1 * c).collect();
        let wc: Vec<DVector<f64>> = self.c_rows.iter().map(|c| w1 * c).collect();
        for i in 0..ny {
            let uvec = &wc[i];
            let vvec = &zc[i];
            let alpha = uvec.rows(0, n).into_owned();
            let beta = &self.a_bar * vvec;
            let alpha2 = &self.a_bar * uvec;
            let beta2 = vvec.rows(0, n).into_owned();
            for (idx, &(a, b)) in self.pairs.iter().enumerate() {
                let val = -self.gamma
                    * (basis_form(&alpha, &beta, a, b) + basis_form(&alpha2, &beta2, a, b));
                out[(idx, nx + i)] = val;
                out[(nx + i, idx)] = val;
            }
        }
        let z3 = z[2].as_diag();
        let w3 = w[2].as_diag();
        let g2 = self.gamma * self.gamma;
        for i in 0..ny {
            for j in 0..ny {
                let mut val = g2 * self.c_rows[i].dot(&zc[j]) * self.c_rows[j].dot(&wc[i]);
                if i == j {
                    val += z3[i] * w3[i];
                }
                out[(nx + i, nx + j)] = val;
            }
        }
    }

    fn column_norms(&self) -> DVector<f64> {
        let n = self.n;
        let row_norms: Vec<f64> = (0..n).map(|a| self.a_bar.row(a).norm()).collect();
        let nx = self.x_vars();
        let mut out = DVector::zeros(nx + self.ny);
        for (idx, &(a, b)) in self.pairs.iter().enumerate() {
            out[idx] = if a == b {
                2.0 * row_norms[a] + 1.0
            } else {
                2.0 * (row_norms[a].powi(2) + row_norms[b].powi(2)).sqrt() + 2f64.sqrt()
            };
        }
        for (i, c) in self.c_rows.iter().enumerate() {
            out[nx + i] = self.gamma * c.norm_squared() + 1.0;
        }
        out
    }
}

/// `(X A_bar)'` placed in the leading n columns of an (n+k)-square matrix.
fn xa_transpose_padded(xa: &DMatrix<f64>, n: usize, k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n + k, n + k);
    m.view_mut((0, 0), (n + k, n)).copy_from(&xa.transpose());
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::cone;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, ny: usize) -> LmiProblem {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)) - DMatrix::identity(n, n) * 3.0;
        let bd = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let cz = DMatrix::identity(n, n);
        let cy = DMatrix::from_fn(ny, n, |_, _| rng.random_range(-1.0..1.0));
        let w = DVector::from_fn(ny, |_, _| rng.random_range(0.5..2.0));
        LmiProblem::new(a, bd, cz, cy, 1.5, w).unwrap()
    }

    /// Explicit basis matrices of the map, built one variable at a time.
    fn explicit_columns(map: &ReducedObserverMap) -> Vec<Blocks> {
        let m = map.num_vars();
        (0..m)
            .map(|i| {
                let mut e = DVector::zeros(m);
                e[i] = 1.0;
                map.apply(&e)
            })
            .collect()
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &g * g.transpose() + DMatrix::identity(n, n)
    }

    fn random_blocks(rng: &mut ChaCha8Rng, map: &ReducedObserverMap) -> Blocks {
        map.shapes()
            .into_iter()
            .map(|s| match s {
                BlockShape::Psd(n) => Block::Psd(random_psd(rng, n)),
                BlockShape::Diag(n) => Block::Diag(DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0))),
            })
            .collect()
    }

    #[test]
    fn adjoint_matches_explicit_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let problem = random_problem(&mut rng, 4, 2);
        let map = ReducedObserverMap::new(&problem, 1e-6, 1e-6, 1e-6);
        let cols = explicit_columns(&map);
        let z = random_blocks(&mut rng, &map);
        let adj = map.adjoint(&z);
        for (i, col) in cols.iter().enumerate() {
            let expect = cone::dot(col, &z);
            assert!((adj[i] - expect).abs() < 1e-10 * (1.0 + expect.abs()), "var {i}: {} vs {expect}", adj[i]);
        }
    }

    #[test]
    fn schur_matches_explicit_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let problem = random_problem(&mut rng, 4, 3);
        let map = ReducedObserverMap::new(&problem, 1e-6, 1e-6, 1e-6);
        let cols = explicit_columns(&map);
        let z = random_blocks(&mut rng, &map);
        let w = random_blocks(&mut rng, &map);
        let m = map.num_vars();
        let mut out = faer::Mat::zeros(m, m);
        map.schur(&z, &w, &mut out);
        for i in 0..m {
            let zaw: Vec<Blocks> = vec![cone::sym_product(&z, &cols[i], &w)];
            for j in 0..m {
                let expect = cone::dot(&cols[j], &zaw[0]);
                let got = out[(j, i)];
                assert!((got - expect).abs() < 1e-9 * (1.0 + expect.abs()), "M[{j},{i}] = {got} vs {expect}");
            }
        }
    }

    #[test]
    fn pack_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let problem = random_problem(&mut rng, 5, 2);
        let map = ReducedObserverMap::new(&problem, 0.0, 0.0, 0.0);
        let x = random_psd(&mut rng, 5);
        let p = DVector::from_vec(vec![0.3, 0.7]);
        let y = map.pack(&x, &p);
        assert!((map.unpack_x(&y) - &x).amax() < 1e-15);
        assert_eq!(map.unpack_p(&y), p);
    }
}

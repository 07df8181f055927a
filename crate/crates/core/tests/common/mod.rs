#![allow(dead_code)]

use cellsense::hinf::ErrorSystem;
use cellsense::CellParams;
use rand::Rng;

/// Reference parameters with every entry scaled by a factor in [0.7, 1.3].
pub fn random_params<R: Rng>(rng: &mut R) -> CellParams {
    let d = CellParams::default();
    let mut f = || rng.random_range(0.7..1.3);
    CellParams {
        cc: d.cc * f(),
        cs: d.cs * f(),
        cf: d.cf * f(),
        re: d.re * f(),
        rc: d.rc * f(),
        ru: d.ru * f(),
        rcc: d.rcc * f(),
        sd: d.sd * f(),
    }
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

fn gain(sys: &ErrorSystem, w: f64) -> f64 {
    let g = sys.frequency_response(w).expect("frequency response");
    g.svd(false, false).singular_values.max()
}

/// Largest singular value of `G(jw)` over `w = 0` and 10^4 log-spaced
/// frequencies in `[1e-6, 1e3]`, with the best grid cell searched again on
/// finer grids. Uses only the dense complex LU route.
pub fn sweep_norm(sys: &ErrorSystem) -> f64 {
    let grid = log_grid(1e-6, 1e3, 10_000);
    let mut best = gain(sys, 0.0);
    let mut arg = None;
    for (i, &w) in grid.iter().enumerate() {
        let g = gain(sys, w);
        if g > best {
            best = g;
            arg = Some(i);
        }
    }
    if let Some(i) = arg {
        let mut lo = grid[i.saturating_sub(1)];
        let mut hi = grid[(i + 1).min(grid.len() - 1)];
        for _ in 0..3 {
            let fine = log_grid(lo, hi, 201);
            let mut k = 0;
            for (j, &w) in fine.iter().enumerate() {
                let g = gain(sys, w);
                if g >= best {
                    best = g;
                    k = j;
                }
            }
            lo = fine[k.saturating_sub(1)];
            hi = fine[(k + 1).min(fine.len() - 1)];
        }
    }
    best
}

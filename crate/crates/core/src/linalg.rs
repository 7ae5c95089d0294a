//! Banded Cholesky factorization for grid stencil operators and a plain
//! conjugate-gradient solver.

use crate::error::{Error, Result};
use crate::grid::{inner_product, Field, Grid};

/// Stencil radius supported by [`assemble_banded`].
const PROBE_PERIOD: usize = 5;

/// Symmetric banded matrix in lower-band storage: row `r` holds
/// `A[r, r - bw ..= r]` (entries before column 0 are unused).
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, r: usize, c: usize) -> usize {
        debug_assert!(c <= r && r - c <= self.bw);
        r * (self.bw + 1) + (self.bw + c - r)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if c > r { (c, r) } else { (r, c) };
        if r - c > self.bw {
            return 0.0;
        }
        self.data[self.slot(r, c)]
    }

    /// `self + a * other`, both sharing the same band layout.
    pub fn add_scaled(&self, a: f64, other: &BandedMatrix) -> BandedMatrix {
        assert_eq!(self.n, other.n);
        assert_eq!(self.bw, other.bw);
        let data = self.data.iter().zip(&other.data).map(|(x, y)| x + a * y).collect();
        BandedMatrix {
            n: self.n,
            bw: self.bw,
            data,
        }
    }

    pub fn scaled(&self, a: f64) -> BandedMatrix {
        BandedMatrix {
            n: self.n,
            bw: self.bw,
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    pub fn add_diagonal(&mut self, d: f64) {
        for r in 0..self.n {
            let s = self.slot(r, r);
            self.data[s] += d;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for r in 0..self.n {
            let c0 = r.saturating_sub(self.bw);
            let mut acc = 0.0;
            for c in c0..=r {
                let a = self.data[self.slot(r, c)];
                acc += a * x[c];
                if c != r {
                    y[c] += a * x[r];
                }
            }
            y[r] += acc;
        }
        y
    }

    /// Row-sum norm.
    pub fn norm_inf(&self) -> f64 {
        let mut sums = vec![0.0; self.n];
        for r in 0..self.n {
            for c in r.saturating_sub(self.bw)..=r {
                let a = self.data[self.slot(r, c)].abs();
                sums[r] += a;
                if c != r {
                    sums[c] += a;
                }
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }
}

/// Assembles the matrix of a linear stencil operator of radius at most 2 by
/// probing it with `PROBE_PERIOD^2` colored vectors. The result is exact
/// (bit-for-bit the operator's own arithmetic), so the factorization and the
/// matrix-free operator agree to rounding.
pub fn assemble_banded(grid: &Grid, op: impl Fn(&Field) -> Field) -> BandedMatrix {
    let (nx, ny) = (grid.nx, grid.ny);
    let n = grid.len();
    let bw = 2 * nx;
    let mut data = vec![0.0; n * (bw + 1)];
    for cy in 0..PROBE_PERIOD {
        for cx in 0..PROBE_PERIOD {
            let probe = Field::from_values(
                grid,
                (0..n)
                    .map(|k| {
                        let (i, j) = (k % nx, k / nx);
                        if i % PROBE_PERIOD == cx && j % PROBE_PERIOD == cy {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            )
            .expect("probe length matches grid");
            let image = op(&probe);
            for j in 0..ny {
                for i in 0..nx {
                    let r = grid.index(i, j);
                    for dj in -2isize..=2 {
                        for di in -2isize..=2 {
                            let (ci, cj) = (i as isize + di, j as isize + dj);
                            if ci < 0 || cj < 0 || ci >= nx as isize || cj >= ny as isize {
                                continue;
                            }
                            let (ci, cj) = (ci as usize, cj as usize);
                            if ci % PROBE_PERIOD != cx || cj % PROBE_PERIOD != cy {
                                continue;
                            }
                            let c = grid.index(ci, cj);
                            if c <= r && r - c <= bw {
                                data[r * (bw + 1) + (bw + c - r)] = image.values()[r];
                            }
                        }
                    }
                }
            }
        }
    }
    BandedMatrix { n, bw, data }
}

/// Cholesky factor `A = L L^T` of a symmetric positive definite banded matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &BandedMatrix) -> Result<Self> {
        let (n, bw) = (a.n, a.bw);
        let w = bw + 1;
        let mut l = a.data.clone();
        for r in 0..n {
            let c0 = r.saturating_sub(bw);
            for c in c0..=r {
                // L[r,c] = (A[r,c] - sum_k L[r,k] L[c,k]) / L[c,c]
                let k0 = c0.max(c.saturating_sub(bw));
                let mut s = l[r * w + bw + c - r];
                for k in k0..c {
                    s -= l[r * w + bw + k - r] * l[c * w + bw + k - c];
                }
                if c == r {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::SolverNonConvergence(format!(
                            "matrix not positive definite at pivot {r} ({s:e})"
                        )));
                    }
                    l[r * w + bw] = s.sqrt();
                } else {
                    l[r * w + bw + c - r] = s / l[c * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`; uses a per-call workspace, so shared references may be
    /// solved against concurrently.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut x = b.to_vec();
        for r in 0..n {
            let mut s = x[r];
            for k in r.saturating_sub(bw)..r {
                s -= self.l[r * w + bw + k - r] * x[k];
            }
            x[r] = s / self.l[r * w + bw];
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for k in r + 1..(r + bw + 1).min(n) {
                s -= self.l[k * w + bw + r - k] * x[k];
            }
            x[r] = s / self.l[r * w + bw];
        }
        x
    }
}

/// Normwise backward error `|b - A x| / (|A| |x| + |b|)` in the max norm.
pub fn backward_error(a: &BandedMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r = ax.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    let xn = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let denom = a.norm_inf() * xn + bn;
    if denom == 0.0 {
        0.0
    } else {
        r / denom
    }
}

/// Factorized stencil operator with its matrix, for solves with a residual check.
#[derive(Debug, Clone)]
pub struct FactoredOperator {
    grid: Grid,
    matrix: BandedMatrix,
    factor: BandedCholesky,
    tol: f64,
}

impl FactoredOperator {
    pub fn new(grid: &Grid, matrix: BandedMatrix, tol: f64) -> Result<Self> {
        let factor = BandedCholesky::factor(&matrix)?;
        Ok(Self {
            grid: *grid,
            matrix,
            factor,
            tol,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &BandedMatrix {
        &self.matrix
    }

    pub fn solve(&self, rhs: &Field) -> Result<Field> {
        self.grid.check(rhs)?;
        let b = rhs.values();
        let mut x = self.factor.solve(b);
        let mut err = backward_error(&self.matrix, &x, b);
        // one round of refinement is enough for these well-scaled operators
        if err > self.tol {
            let ax = self.matrix.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            let dx = self.factor.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            err = backward_error(&self.matrix, &x, b);
        }
        if !(err <= self.tol) {
            return Err(Error::SolverNonConvergence(format!(
                "direct solve backward error {err:e} exceeds {:e}",
                self.tol
            )));
        }
        Field::from_values(&self.grid, x)
    }
}

/// Conjugate gradients for an SPD operator on grid fields.
pub fn conjugate_gradient(
    grid: &Grid,
    apply: impl Fn(&Field) -> Field,
    rhs: &Field,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Field> {
    let bnorm = inner_product(rhs, rhs, grid).sqrt();
    let mut x = Field::zeros(grid);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = inner_product(&r, &r, grid);
    for _ in 0..max_iter {
        if rr.sqrt() <= rel_tol * bnorm {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap = inner_product(&p, &ap, grid);
        if pap <= 0.0 {
            return Err(Error::SolverNonConvergence(
                "conjugate gradient met a non-positive curvature direction".into(),
            ));
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rr_new = inner_product(&r, &r, grid);
        let beta = rr_new / rr;
        rr = rr_new;
        let mut np = r.clone();
        np.axpy(beta, &p);
        p = np;
    }
    if rr.sqrt() <= rel_tol * bnorm {
        return Ok(x);
    }
    Err(Error::SolverNonConvergence(format!(
        "conjugate gradient stalled after {max_iter} iterations (relative residual {:e})",
        rr.sqrt() / bnorm
    )))
}

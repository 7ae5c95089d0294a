//! Uniform rectangular grid over the plate domain with clamped boundary handling.
//!
//! A [`Field`] stores one value per *interior* node. Node `(i, j)` (zero based,
//! `i < nx`, `j < ny`) sits at `((i + 1) hx, (j + 1) hy)`. The boundary nodes
//! carry the clamped value `u = 0` implicitly. Stencils that reach one node past
//! the boundary (the 13-point biharmonic) use a ghost value equal to the mirror
//! interior value, which is the centered discretization of `du/dn = 0`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

/// Rectangle `[0, lx] x [0, ly]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lx: f64,
    pub ly: f64,
}

impl Domain {
    pub fn new(lx: f64, ly: f64) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "domain extents must be positive, got lx = {lx}, ly = {ly}"
            )));
        }
        Ok(Self { lx, ly })
    }

    pub fn unit_square() -> Self {
        Self { lx: 1.0, ly: 1.0 }
    }

    pub fn diameter(&self) -> f64 {
        self.lx.hypot(self.ly)
    }

    pub fn contains_closed(&self, x: f64, y: f64) -> bool {
        (0.0..=self.lx).contains(&x) && (0.0..=self.ly).contains(&y)
    }
}

pub const MIN_NODES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub domain: Domain,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

/// Builds a grid with `nx * ny` interior nodes.
pub fn build_grid(domain: Domain, nx: usize, ny: usize) -> Result<Grid> {
    Grid::new(domain, nx, ny)
}

impl Grid {
    pub fn new(domain: Domain, nx: usize, ny: usize) -> Result<Self> {
        let domain = Domain::new(domain.lx, domain.ly)?;
        if nx < MIN_NODES || ny < MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_NODES} interior nodes per axis, got {nx}x{ny}"
            )));
        }
        Ok(Self {
            domain,
            nx,
            ny,
            hx: domain.lx / (nx + 1) as f64,
            hy: domain.ly / (ny + 1) as f64,
        })
    }

    /// Unit square with `n` interior nodes per axis, `h = 1/(n+1)`.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(Domain::unit_square(), n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.hy
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn check(&self, f: &Field) -> Result<()> {
        if f.nx != self.nx || f.ny != self.ny {
            return Err(Error::ShapeMismatch {
                expected_nx: self.nx,
                expected_ny: self.ny,
                nx: f.nx,
                ny: f.ny,
            });
        }
        Ok(())
    }
}

/// Grid function on the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every interior node.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                values.push(f(grid.x(i), y));
            }
        }
        Self {
            nx: grid.nx,
            ny: grid.ny,
            values,
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self {
            nx: grid.nx,
            ny: grid.ny,
            values,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[j * self.nx + i] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Field) {
        debug_assert!(self.same_shape(x));
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn scaled(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert!(self.same_shape(other));
        Field {
            nx: self.nx,
            ny: self.ny,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Max-norm over nodes.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Quadrature L2 norm.
    pub fn norm(&self, grid: &Grid) -> f64 {
        inner_product(self, self, grid).sqrt()
    }
}

impl Add<&Field> for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub<&Field> for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.scaled(rhs)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.scaled(-1.0)
    }
}

impl AddAssign<&Field> for Field {
    fn add_assign(&mut self, rhs: &Field) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&Field> for Field {
    fn sub_assign(&mut self, rhs: &Field) {
        self.axpy(-1.0, rhs);
    }
}

/// Copy of a field with two layers of padding: the boundary layer (zero) and,
/// when `mirror` is set, a ghost layer holding the mirror interior value.
struct Padded {
    stride: usize,
    data: Vec<f64>,
}

impl Padded {
    fn new(f: &Field, mirror: bool) -> Self {
        let (nx, ny) = (f.nx, f.ny);
        let stride = nx + 4;
        let mut data = vec![0.0; stride * (ny + 4)];
        for j in 0..ny {
            let row = (j + 2) * stride;
            data[row + 2..row + 2 + nx].copy_from_slice(&f.values[j * nx..(j + 1) * nx]);
            if mirror {
                data[row] = f.values[j * nx];
                data[row + nx + 3] = f.values[j * nx + nx - 1];
            }
        }
        if mirror {
            let (lo, hi) = (0, (ny + 3) * stride);
            let (first, last) = (2 * stride, (ny + 1) * stride);
            for i in 2..nx + 2 {
                data[lo + i] = data[first + i];
                data[hi + i] = data[last + i];
            }
        }
        Self { stride, data }
    }

    /// Value at interior index `(i, j)` offset by `(di, dj)`.
    #[inline]
    fn at(&self, i: usize, j: usize, di: isize, dj: isize) -> f64 {
        let ii = (i as isize + 2 + di) as usize;
        let jj = (j as isize + 2 + dj) as usize;
        self.data[jj * self.stride + ii]
    }
}

fn apply_stencil(f: &Field, mirror: bool, op: impl Fn(&Padded, usize, usize) -> f64) -> Field {
    let p = Padded::new(f, mirror);
    let mut values = Vec::with_capacity(f.len());
    for j in 0..f.ny {
        for i in 0..f.nx {
            values.push(op(&p, i, j));
        }
    }
    Field {
        nx: f.nx,
        ny: f.ny,
        values,
    }
}

pub fn d_x(f: &Field, g: &Grid) -> Field {
    let c = 0.5 / g.hx;
    apply_stencil(f, false, |p, i, j| c * (p.at(i, j, 1, 0) - p.at(i, j, -1, 0)))
}

pub fn d_y(f: &Field, g: &Grid) -> Field {
    let c = 0.5 / g.hy;
    apply_stencil(f, false, |p, i, j| c * (p.at(i, j, 0, 1) - p.at(i, j, 0, -1)))
}

pub fn d_xx(f: &Field, g: &Grid) -> Field {
    let c = 1.0 / (g.hx * g.hx);
    apply_stencil(f, false, |p, i, j| {
        c * (p.at(i, j, 1, 0) - 2.0 * p.at(i, j, 0, 0) + p.at(i, j, -1, 0))
    })
}

pub fn d_yy(f: &Field, g: &Grid) -> Field {
    let c = 1.0 / (g.hy * g.hy);
    apply_stencil(f, false, |p, i, j| {
        c * (p.at(i, j, 0, 1) - 2.0 * p.at(i, j, 0, 0) + p.at(i, j, 0, -1))
    })
}

pub fn d_xy(f: &Field, g: &Grid) -> Field {
    let c = 0.25 / (g.hx * g.hy);
    apply_stencil(f, false, |p, i, j| {
        c * (p.at(i, j, 1, 1) - p.at(i, j, 1, -1) - p.at(i, j, -1, 1) + p.at(i, j, -1, -1))
    })
}

/// 5-point Laplacian with `u = 0` on the boundary.
pub fn laplacian(f: &Field, g: &Grid) -> Field {
    let cx = 1.0 / (g.hx * g.hx);
    let cy = 1.0 / (g.hy * g.hy);
    apply_stencil(f, false, |p, i, j| {
        let c = p.at(i, j, 0, 0);
        cx * (p.at(i, j, 1, 0) - 2.0 * c + p.at(i, j, -1, 0))
            + cy * (p.at(i, j, 0, 1) - 2.0 * c + p.at(i, j, 0, -1))
    })
}

/// 13-point clamped biharmonic `D4x + D4y + 2 DxxDyy` with mirror ghosts.
pub fn biharmonic_apply(f: &Field, g: &Grid) -> Field {
    let cx = 1.0 / g.hx.powi(4);
    let cy = 1.0 / g.hy.powi(4);
    let cxy = 2.0 / (g.hx * g.hx * g.hy * g.hy);
    apply_stencil(f, true, |p, i, j| {
        let c = p.at(i, j, 0, 0);
        let xx = p.at(i, j, -2, 0) - 4.0 * p.at(i, j, -1, 0) + 6.0 * c - 4.0 * p.at(i, j, 1, 0)
            + p.at(i, j, 2, 0);
        let yy = p.at(i, j, 0, -2) - 4.0 * p.at(i, j, 0, -1) + 6.0 * c - 4.0 * p.at(i, j, 0, 1)
            + p.at(i, j, 0, 2);
        let edges = p.at(i, j, 1, 0) + p.at(i, j, -1, 0) + p.at(i, j, 0, 1) + p.at(i, j, 0, -1);
        let corners =
            p.at(i, j, 1, 1) + p.at(i, j, 1, -1) + p.at(i, j, -1, 1) + p.at(i, j, -1, -1);
        cx * xx + cy * yy + cxy * (corners - 2.0 * edges + 4.0 * c)
    })
}

/// Midpoint quadrature over interior nodes.
pub fn inner_product(f: &Field, g_field: &Field, grid: &Grid) -> f64 {
    debug_assert!(f.same_shape(g_field));
    let s: f64 = f.values.iter().zip(&g_field.values).map(|(a, b)| a * b).sum();
    s * grid.cell_area()
}

/// Bilinear interpolation of the zero-extended field; zero outside the closed domain.
pub fn sample_extended(f: &Field, g: &Grid, x: f64, y: f64) -> f64 {
    if !(x > 0.0 && x < g.domain.lx && y > 0.0 && y < g.domain.ly) {
        return 0.0;
    }
    let sx = x / g.hx;
    let sy = y / g.hy;
    // cell corner in padded node numbering: node k sits at k*h, k = 0 is the boundary
    let kx = (sx.floor() as usize).min(g.nx);
    let ky = (sy.floor() as usize).min(g.ny);
    let tx = sx - kx as f64;
    let ty = sy - ky as f64;
    let node = |kx: usize, ky: usize| -> f64 {
        if kx == 0 || ky == 0 || kx > g.nx || ky > g.ny {
            0.0
        } else {
            f.get(kx - 1, ky - 1)
        }
    };
    let f00 = node(kx, ky);
    let f10 = node(kx + 1, ky);
    let f01 = node(kx, ky + 1);
    let f11 = node(kx + 1, ky + 1);
    (1.0 - ty) * ((1.0 - tx) * f00 + tx * f10) + ty * ((1.0 - tx) * f01 + tx * f11)
}

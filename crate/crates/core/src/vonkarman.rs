//! Von Karman bracket, Airy stress function and the plate restoring forces.
//!
//! The equation of motion is written `u_tt + D^2 u + k u_t + f(u) = p`, so every
//! force returned here is the left-hand-side term `f(u)`. The von Karman force
//! is assembled in the adjoint ("divergence") form of the bracket, which makes
//! it the exact gradient of the discrete potential
//! `1/4 <D^2_h v(u), v(u)> - 1/2 <[u, F0]_h, u>`. Pointwise and adjoint forms
//! agree to O(h^2).

use crate::error::{Error, Result};
use crate::grid::{biharmonic_apply, d_xx, d_xy, d_yy, inner_product, laplacian, Field, Grid};
use crate::linalg::{assemble_banded, FactoredOperator};

pub const AIRY_TOL: f64 = 1e-12;

/// Pointwise bracket `[u, w] = u_xx w_yy + u_yy w_xx - 2 u_xy w_xy`.
pub fn vk_bracket(u: &Field, w: &Field, g: &Grid) -> Field {
    let (uxx, uyy, uxy) = (d_xx(u, g), d_yy(u, g), d_xy(u, g));
    let (wxx, wyy, wxy) = (d_xx(w, g), d_yy(w, g), d_xy(w, g));
    let mut out = Field::zeros(g);
    for (k, o) in out.values_mut().iter_mut().enumerate() {
        let (a, b, c) = (uxx.values()[k], uyy.values()[k], uxy.values()[k]);
        let (p, q, r) = (wxx.values()[k], wyy.values()[k], wxy.values()[k]);
        *o = a * q + b * p - 2.0 * c * r;
    }
    out
}

/// Second differences of a field, cached for repeated bracket evaluation.
#[derive(Debug, Clone)]
pub struct Curvatures {
    pub xx: Field,
    pub yy: Field,
    pub xy: Field,
}

impl Curvatures {
    pub fn of(u: &Field, g: &Grid) -> Self {
        Self {
            xx: d_xx(u, g),
            yy: d_yy(u, g),
            xy: d_xy(u, g),
        }
    }

    /// Pointwise `[u, w]` given the curvatures of `u`.
    pub fn bracket(&self, w: &Field, g: &Grid) -> Field {
        let (wxx, wyy, wxy) = (d_xx(w, g), d_yy(w, g), d_xy(w, g));
        let mut out = Field::zeros(g);
        for (k, o) in out.values_mut().iter_mut().enumerate() {
            *o = self.xx.values()[k] * wyy.values()[k] + self.yy.values()[k] * wxx.values()[k]
                - 2.0 * self.xy.values()[k] * wxy.values()[k];
        }
        out
    }

    /// Adjoint of `w -> [u, w]_h`:
    /// `D_yy(u_xx phi) + D_xx(u_yy phi) - 2 D_xy(u_xy phi)`.
    pub fn bracket_adjoint(&self, phi: &Field, g: &Grid) -> Field {
        let a = phi.zip_map(&self.xx, |p, c| p * c);
        let b = phi.zip_map(&self.yy, |p, c| p * c);
        let c = phi.zip_map(&self.xy, |p, c| p * c);
        let mut out = d_yy(&a, g);
        out += &d_xx(&b, g);
        out.axpy(-2.0, &d_xy(&c, g));
        out
    }
}

/// Second derivatives of the in-plane load `F0`. `F0` need not vanish on the
/// boundary, so it is carried by its curvatures rather than as a clamped field.
#[derive(Debug, Clone)]
pub struct InPlaneLoad {
    pub curv: Curvatures,
    zero: bool,
}

impl InPlaneLoad {
    pub fn zero(g: &Grid) -> Self {
        Self {
            curv: Curvatures {
                xx: Field::zeros(g),
                yy: Field::zeros(g),
                xy: Field::zeros(g),
            },
            zero: true,
        }
    }

    /// Central differences of `f0` sampled on the full node lattice including
    /// the boundary; exact for quadratics.
    pub fn from_fn(g: &Grid, f0: impl Fn(f64, f64) -> f64) -> Self {
        let (hx, hy) = (g.hx, g.hy);
        let node = |i: isize, j: isize| f0(i as f64 * hx, j as f64 * hy);
        let mut xx = Field::zeros(g);
        let mut yy = Field::zeros(g);
        let mut xy = Field::zeros(g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (a, b) = (i as isize + 1, j as isize + 1);
                let c = node(a, b);
                xx.set(i, j, (node(a + 1, b) - 2.0 * c + node(a - 1, b)) / (hx * hx));
                yy.set(i, j, (node(a, b + 1) - 2.0 * c + node(a, b - 1)) / (hy * hy));
                xy.set(
                    i,
                    j,
                    (node(a + 1, b + 1) - node(a + 1, b - 1) - node(a - 1, b + 1)
                        + node(a - 1, b - 1))
                        / (4.0 * hx * hy),
                );
            }
        }
        let zero = xx.max_abs() == 0.0 && yy.max_abs() == 0.0 && xy.max_abs() == 0.0;
        Self {
            curv: Curvatures { xx, yy, xy },
            zero,
        }
    }

    /// Load given as a clamped grid field (zero on the boundary).
    pub fn from_field(f0: &Field, g: &Grid) -> Self {
        let curv = Curvatures::of(f0, g);
        let zero = f0.max_abs() == 0.0;
        Self { curv, zero }
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Pointwise `[u, F0]_h`.
    pub fn bracket(&self, u: &Field, g: &Grid) -> Field {
        self.curv.bracket(u, g)
    }

    /// Symmetrized linear operator `1/2 ([u, F0]_h + adjoint)`; both halves are
    /// consistent with `[u, F0]`, the sum is symmetric.
    pub fn apply_sym(&self, u: &Field, g: &Grid) -> Field {
        if self.zero {
            return Field::zeros(g);
        }
        let mut out = self.curv.bracket(u, g);
        out += &self.curv.bracket_adjoint(u, g);
        out.scaled(0.5)
    }
}

/// Prefactorized clamped biharmonic for the Airy stress problem.
#[derive(Debug, Clone)]
pub struct AirySolver {
    op: FactoredOperator,
}

impl AirySolver {
    pub fn new(grid: &Grid) -> Result<Self> {
        let mat = assemble_banded(grid, |f| biharmonic_apply(f, grid));
        Ok(Self {
            op: FactoredOperator::new(grid, mat, AIRY_TOL)?,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.op.grid()
    }

    /// Solves `D^2_h v = rhs` with clamped conditions on `v`.
    pub fn solve_biharmonic(&self, rhs: &Field) -> Result<Field> {
        self.op.solve(rhs)
    }
}

/// Airy stress function `v(u)`: `D^2 v = -[u, u]`, `v = dv/dn = 0`.
pub fn airy_solve(u: &Field, s: &AirySolver) -> Result<Field> {
    let g = *s.grid();
    g.check(u)?;
    let b = vk_bracket(u, u, &g);
    s.solve_biharmonic(&b.scaled(-1.0))
}

/// Von Karman restoring force `f(u) = -[u, v(u) + F0]` (adjoint form).
pub fn vk_force(u: &Field, f0: &InPlaneLoad, s: &AirySolver) -> Result<Field> {
    Ok(vk_eval(u, f0, s)?.force)
}

/// Everything one von Karman evaluation produces.
#[derive(Debug, Clone)]
pub struct VkEval {
    pub force: Field,
    pub airy: Field,
    /// `1/4 <D^2_h v, v>`
    pub airy_energy: f64,
    /// `-1/2 <[u, F0]_h, u>`
    pub inplane_energy: f64,
}

pub fn vk_eval(u: &Field, f0: &InPlaneLoad, s: &AirySolver) -> Result<VkEval> {
    let g = *s.grid();
    g.check(u)?;
    let curv = Curvatures::of(u, &g);
    let b = curv.bracket(u, &g);
    let v = s.solve_biharmonic(&b.scaled(-1.0))?;
    let mut force = curv.bracket_adjoint(&v, &g).scaled(-1.0);
    let mut inplane_energy = 0.0;
    if !f0.is_zero() {
        let lf = f0.apply_sym(u, &g);
        inplane_energy = -0.5 * inner_product(&lf, u, &g);
        force -= &lf;
    }
    let airy_energy = -0.25 * inner_product(&b, &v, &g);
    Ok(VkEval {
        force,
        airy: v,
        airy_energy,
        inplane_energy,
    })
}

/// Directional derivative `Df(u) du` of the von Karman force.
pub fn vk_force_derivative(
    u: &Field,
    du: &Field,
    f0: &InPlaneLoad,
    s: &AirySolver,
) -> Result<Field> {
    let g = *s.grid();
    let cu = Curvatures::of(u, &g);
    let cd = Curvatures::of(du, &g);
    let v = s.solve_biharmonic(&cu.bracket(u, &g).scaled(-1.0))?;
    let dv = s.solve_biharmonic(&cu.bracket(du, &g).scaled(-2.0))?;
    let mut out = cd.bracket_adjoint(&v, &g);
    out += &cu.bracket_adjoint(&dv, &g);
    out = out.scaled(-1.0);
    out -= &f0.apply_sym(du, &g);
    Ok(out)
}

/// Discrete `|grad u|^2 = -<D_h u, u>` (forward-difference gradient energy).
pub fn grad_norm_sq(u: &Field, g: &Grid) -> f64 {
    -inner_product(&laplacian(u, g), u, g)
}

/// Berger membrane force `(b1 |grad u|^2 - b0) D u`. The restoring term in the
/// equation of motion is its negative,
/// `f_B(u) = (b0 - b1 |grad u|^2) D u`, the gradient of
/// `b1/4 |grad u|^4 - b0/2 |grad u|^2`.
pub fn berger_force(u: &Field, b0: f64, b1: f64, g: &Grid) -> Result<Field> {
    if b1 < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "Berger stiffness b1 must be non-negative, got {b1}"
        )));
    }
    let lap = laplacian(u, g);
    let gn = -inner_product(&lap, u, g);
    Ok(lap.scaled(b1 * gn - b0))
}

/// Discrete H^2 norm squared, `|u|^2 + |D_h u|^2`.
pub fn h2_norm_sq(u: &Field, g: &Grid) -> f64 {
    let lap = laplacian(u, g);
    inner_product(u, u, g) + inner_product(&lap, &lap, g)
}

/// Largest nodal second difference of `v`, the discrete `W^{2,inf}` seminorm.
pub fn max_second_difference(v: &Field, g: &Grid) -> f64 {
    d_xx(v, g)
        .max_abs()
        .max(d_yy(v, g).max_abs())
        .max(d_xy(v, g).max_abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonlinearityKind {
    VonKarman,
    Berger { b0: f64, b1: f64 },
    None,
}

/// Potential energy split of the nonlinear restoring force.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NonlinearEnergy {
    pub airy: f64,
    pub inplane: f64,
    pub membrane: f64,
}

impl NonlinearEnergy {
    pub fn total(&self) -> f64 {
        self.airy + self.inplane + self.membrane
    }
}

/// Restoring force `f(u)` for a chosen nonlinearity on a fixed grid.
#[derive(Debug, Clone)]
pub struct RestoringForce {
    pub kind: NonlinearityKind,
    pub grid: Grid,
    pub load: InPlaneLoad,
    airy: AirySolver,
}

impl RestoringForce {
    pub fn new(kind: NonlinearityKind, grid: &Grid, load: InPlaneLoad) -> Result<Self> {
        if let NonlinearityKind::Berger { b1, .. } = kind {
            if b1 < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "Berger stiffness b1 must be non-negative, got {b1}"
                )));
            }
        }
        Ok(Self {
            kind,
            grid: *grid,
            load,
            airy: AirySolver::new(grid)?,
        })
    }

    pub fn airy_solver(&self) -> &AirySolver {
        &self.airy
    }

    /// `(f(u), energy split)`.
    pub fn eval(&self, u: &Field) -> Result<(Field, NonlinearEnergy)> {
        let g = &self.grid;
        match self.kind {
            NonlinearityKind::VonKarman => {
                let e = vk_eval(u, &self.load, &self.airy)?;
                Ok((
                    e.force,
                    NonlinearEnergy {
                        airy: e.airy_energy,
                        inplane: e.inplane_energy,
                        membrane: 0.0,
                    },
                ))
            }
            NonlinearityKind::Berger { b0, b1 } => {
                let lap = laplacian(u, g);
                let gn = -inner_product(&lap, u, g);
                let force = lap.scaled(b0 - b1 * gn);
                let membrane = 0.25 * b1 * gn * gn - 0.5 * b0 * gn;
                Ok((
                    force,
                    NonlinearEnergy {
                        membrane,
                        ..Default::default()
                    },
                ))
            }
            NonlinearityKind::None => Ok((Field::zeros(g), NonlinearEnergy::default())),
        }
    }

    pub fn force(&self, u: &Field) -> Result<Field> {
        Ok(self.eval(u)?.0)
    }

    pub fn energy(&self, u: &Field) -> Result<NonlinearEnergy> {
        Ok(self.eval(u)?.1)
    }

    /// `Df(u) du`.
    pub fn derivative(&self, u: &Field, du: &Field) -> Result<Field> {
        let g = &self.grid;
        match self.kind {
            NonlinearityKind::VonKarman => vk_force_derivative(u, du, &self.load, &self.airy),
            NonlinearityKind::Berger { b0, b1 } => {
                let lap_u = laplacian(u, g);
                let lap_d = laplacian(du, g);
                let gn = -inner_product(&lap_u, u, g);
                let dgn = -2.0 * inner_product(&lap_u, du, g);
                let mut out = lap_d.scaled(b0 - b1 * gn);
                out.axpy(-b1 * dgn, &lap_u);
                Ok(out)
            }
            NonlinearityKind::None => Ok(Field::zeros(g)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use std::f64::consts::PI;

    fn smooth(g: &Grid, a: f64, b: f64) -> Field {
        Field::from_fn(g, |x, y| {
            ((PI * x).sin() * (PI * y).sin()).powi(2) * (1.0 + a * x + b * (2.0 * PI * y).sin())
        })
    }

    #[test]
    fn bracket_of_linear_vanishes() {
        let g = Grid::unit(10).unwrap();
        let u = Field::from_fn(&g, |x, y| 2.0 * x - 3.0 * y + 1.0);
        let w = smooth(&g, 0.3, 0.2);
        let b = vk_bracket(&u, &w, &g);
        // interior of the stencil only: the affine field is not clamped
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                assert!(b.get(i, j).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn bracket_of_squares() {
        let g = Grid::unit(10).unwrap();
        let u = Field::from_fn(&g, |x, _| x * x);
        let w = Field::from_fn(&g, |_, y| y * y);
        let b = vk_bracket(&u, &w, &g);
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                assert!((b.get(i, j) - 4.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bracket_is_symmetric_pointwise() {
        let g = Grid::unit(12).unwrap();
        let u = smooth(&g, 0.4, -0.7);
        let w = smooth(&g, -1.1, 0.5);
        let d = &vk_bracket(&u, &w, &g) - &vk_bracket(&w, &u, &g);
        assert!(d.max_abs() <= 1e-12 * vk_bracket(&u, &w, &g).max_abs());
    }

    #[test]
    fn airy_of_zero_is_zero() {
        let g = Grid::unit(8).unwrap();
        let s = AirySolver::new(&g).unwrap();
        assert_eq!(airy_solve(&Field::zeros(&g), &s).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn airy_is_quadratically_homogeneous() {
        let g = Grid::unit(15).unwrap();
        let s = AirySolver::new(&g).unwrap();
        let u = smooth(&g, 0.2, 0.3);
        let v1 = airy_solve(&u, &s).unwrap();
        let v3 = airy_solve(&u.scaled(3.0), &s).unwrap();
        let err = (&v3 - &v1.scaled(9.0)).max_abs() / v3.max_abs();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn airy_residual_matches_stencil() {
        let g = Grid::unit(15).unwrap();
        let s = AirySolver::new(&g).unwrap();
        let u = smooth(&g, -0.5, 0.9);
        let v = airy_solve(&u, &s).unwrap();
        let lhs = biharmonic_apply(&v, &g);
        let rhs = vk_bracket(&u, &u, &g).scaled(-1.0);
        assert!((&lhs - &rhs).max_abs() <= 1e-9 * rhs.max_abs());
    }

    #[test]
    fn vk_force_vanishes_at_zero() {
        let g = Grid::unit(8).unwrap();
        let s = AirySolver::new(&g).unwrap();
        let f0 = InPlaneLoad::from_fn(&g, |x, y| x * x + y);
        let f = vk_force(&Field::zeros(&g), &f0, &s).unwrap();
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn radial_load_gives_laplacian() {
        let g = Grid::unit(14).unwrap();
        let s = AirySolver::new(&g).unwrap();
        let u = smooth(&g, 0.1, 0.1).scaled(1e-4);
        let load = InPlaneLoad::from_fn(&g, |x, y| 0.5 * (x * x + y * y));
        let with = vk_force(&u, &load, &s).unwrap();
        let without = vk_force(&u, &InPlaneLoad::zero(&g), &s).unwrap();
        let f0_part = &with - &without;
        let lap = laplacian(&u, &g);
        assert!((&f0_part + &lap).max_abs() <= 1e-10 * lap.max_abs());
    }

    #[test]
    fn vk_force_is_cubic() {
        let g = Grid::unit(12).unwrap();
        let s = AirySolver::new(&g).unwrap();
        let u = smooth(&g, 0.7, -0.2);
        let zero = InPlaneLoad::zero(&g);
        let f1 = vk_force(&u, &zero, &s).unwrap();
        let f2 = vk_force(&u.scaled(2.5), &zero, &s).unwrap();
        let err = (&f2 - &f1.scaled(2.5f64.powi(3))).max_abs() / f2.max_abs();
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn adjoint_and_pointwise_forms_converge_together() {
        let err = |n: usize| {
            let g = Grid::unit(n).unwrap();
            let s = AirySolver::new(&g).unwrap();
            let u = smooth(&g, 0.3, 0.4);
            let v = airy_solve(&u, &s).unwrap();
            let adj = vk_force(&u, &InPlaneLoad::zero(&g), &s).unwrap();
            let point = vk_bracket(&u, &v, &g).scaled(-1.0);
            (&adj - &point).norm(&g) / point.norm(&g)
        };
        let (e1, e2) = (err(15), err(31));
        assert!(e2 < e1 / 2.5, "{e1} {e2}");
    }

    #[test]
    fn berger_cases() {
        let g = Grid::unit(10).unwrap();
        let u = smooth(&g, 0.2, 0.1);
        let zero = berger_force(&Field::zeros(&g), 1.0, 2.0, &g).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let lin = berger_force(&u, 0.7, 0.0, &g).unwrap();
        assert_eq!(lin, laplacian(&u, &g).scaled(-0.7));
        let lam = 2.0;
        let direct = berger_force(&u.scaled(lam), 0.7, 1.3, &g).unwrap();
        let gn = grad_norm_sq(&u, &g);
        let expected = laplacian(&u, &g).scaled((1.3 * lam * lam * gn - 0.7) * lam);
        assert!((&direct - &expected).max_abs() <= 1e-12 * expected.max_abs());
        assert!(berger_force(&u, 0.0, -1.0, &g).is_err());
    }

    #[test]
    fn restoring_force_is_gradient_of_potential() {
        let g = Grid::new(Domain::new(1.2, 0.9).unwrap(), 13, 11).unwrap();
        let load = InPlaneLoad::from_fn(&g, |x, y| 3.0 * x * x - y * y + x * y * y);
        for kind in [
            NonlinearityKind::VonKarman,
            NonlinearityKind::Berger { b0: 2.0, b1: 5.0 },
        ] {
            let rf = RestoringForce::new(kind, &g, load.clone()).unwrap();
            let u = smooth(&g, 0.5, 0.3);
            let du = Field::from_fn(&g, |x, y| (x * (1.2 - x) * y * (0.9 - y)).powi(2) * (x + 2.0));
            let f = rf.force(&u).unwrap();
            let eps = 1e-5;
            let ep = rf.energy(&(&u + &du.scaled(eps))).unwrap().total();
            let em = rf.energy(&(&u - &du.scaled(eps))).unwrap().total();
            let fd = (ep - em) / (2.0 * eps);
            let an = inner_product(&f, &du, &g);
            assert!((fd - an).abs() <= 1e-6 * an.abs(), "{kind:?}: {fd} vs {an}");
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let g = Grid::unit(11).unwrap();
        let load = InPlaneLoad::from_fn(&g, |x, y| -(x * x + y * y) + 0.3 * x);
        for kind in [
            NonlinearityKind::VonKarman,
            NonlinearityKind::Berger { b0: 1.0, b1: 3.0 },
        ] {
            let rf = RestoringForce::new(kind, &g, load.clone()).unwrap();
            let u = smooth(&g, 0.2, 0.6);
            let du = smooth(&g, -0.9, 0.1);
            let eps = 1e-6;
            let fp = rf.force(&(&u + &du.scaled(eps))).unwrap();
            let fm = rf.force(&(&u - &du.scaled(eps))).unwrap();
            let fd = (&fp - &fm).scaled(0.5 / eps);
            let an = rf.derivative(&u, &du).unwrap();
            assert!((&fd - &an).max_abs() <= 1e-6 * an.max_abs(), "{kind:?}");
        }
    }
}

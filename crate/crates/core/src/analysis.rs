//! Linear stability of the flat and buckled plate, flutter-point location,
//! static equilibria by Newton's method and natural-parameter continuation.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, Side};
use rayon::prelude::*;

use crate::aero::{self, Closure, DelayQuadrature, HistoryBuffer};
use crate::dynamics::{growth_ratio, simulate_system, PlateConfig, PlateSystem};
use crate::error::{Error, Result};
use crate::grid::{biharmonic_apply, d_x, inner_product, laplacian, Field, Grid};
use crate::linalg::assemble_banded;
use crate::vonkarman::RestoringForce;

/// Largest first-order state dimension handed to the dense eigensolver.
pub const MAX_DENSE_DIM: usize = 8192;
pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 50;
pub const MIN_LINE_STEP: f64 = 1.0 / 64.0;

/// Dense column-major matrix of a linear map on grid fields.
fn dense_from_columns(g: &Grid, op: impl Fn(&Field) -> Result<Field> + Sync) -> Result<Mat<f64>> {
    let n = g.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = Field::zeros(g);
            e.values_mut()[j] = 1.0;
            op(&e).map(Field::into_values)
        })
        .collect::<Result<_>>()?;
    Ok(Mat::from_fn(n, n, |r, c| cols[c][r]))
}

/// First-order generator `d/dt (u, v) = A (u, v)` of the linearized plate.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    pub grid: Grid,
    pub matrix: Mat<f64>,
}

impl LinearOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Max-row-sum norm.
    pub fn norm_inf(&self) -> f64 {
        let m = &self.matrix;
        (0..m.nrows())
            .map(|r| (0..m.ncols()).map(|c| m[(r, c)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `A (u, v)`, returned as `(u', v')`.
    pub fn apply(&self, u: &Field, v: &Field) -> Result<(Field, Field)> {
        let n = self.grid.len();
        let x: Vec<f64> = u.values().iter().chain(v.values()).copied().collect();
        let m = &self.matrix;
        let y: Vec<f64> = (0..2 * n)
            .map(|r| (0..2 * n).map(|c| m[(r, c)] * x[c]).sum())
            .collect();
        Ok((
            Field::from_values(&self.grid, y[..n].to_vec())?,
            Field::from_values(&self.grid, y[n..].to_vec())?,
        ))
    }
}

/// Linearization at the flat state.
pub fn linearize(cfg: &PlateConfig) -> Result<LinearOperator> {
    let z = Field::zeros(&cfg.grid);
    linearize_at(cfg, &z)
}

/// Linearization about an equilibrium `u_eq` (zero velocity).
pub fn linearize_at(cfg: &PlateConfig, u_eq: &Field) -> Result<LinearOperator> {
    cfg.validate()?;
    let g = cfg.grid;
    g.check(u_eq)?;
    let n = g.len();
    if 2 * n > MAX_DENSE_DIM {
        return Err(Error::DimensionTooLarge {
            dim: 2 * n,
            max: MAX_DENSE_DIM,
        });
    }
    let force = RestoringForce::new(cfg.nonlinearity, &g, cfg.f0.clone())?;
    let mach = cfg.aero.mach;
    let alpha = cfg.alpha;

    // stiffness K, damping C and mass Mc with Mc a = -K u - C v
    let (a_ut, b_ux, gamma): (f64, f64, Option<Field>) = match cfg.aero.closure {
        Closure::DelayedPotential { .. } => {
            return Err(Error::NotLinearizable("delayed_potential"))
        }
        Closure::PistonCubic { c1, c2, c3 } => {
            let w0 = d_x(u_eq, &g).scaled(mach);
            let gam = w0.map(|w| c1 + w * (2.0 * c2 + 3.0 * c3 * w));
            (0.0, 0.0, Some(gam))
        }
        Closure::CorrectedPiston => (1.0, mach, None),
        _ => {
            let (a, b) = cfg.aero.local_linear_coefficients().expect("local closure");
            (a, b, None)
        }
    };
    let stiffness = dense_from_columns(&g, |e| {
        let mut col = biharmonic_apply(e, &g);
        col += &force.derivative(u_eq, e)?;
        let dx = d_x(e, &g);
        col.axpy(b_ux, &dx);
        if let Some(gam) = &gamma {
            col += &gam.zip_map(&dx, |c, d| c * mach * d);
        }
        Ok(col)
    })?;
    let corrected = cfg.aero.closure == Closure::CorrectedPiston;
    let damping = dense_from_columns(&g, |e| {
        let mut col = e.scaled(cfg.k + a_ut);
        if let Some(gam) = &gamma {
            col += &gam.zip_map(e, |c, v| c * v);
        }
        if corrected {
            col -= &aero::cumulative_x(&d_x(e, &g), &g);
        }
        Ok(col)
    })?;
    let mass = dense_from_columns(&g, |e| {
        let mut col = e.clone();
        if alpha > 0.0 {
            col.axpy(-alpha, &laplacian(e, &g));
        }
        if corrected {
            col.axpy(-1.0 / mach, &aero::cumulative_x(e, &g));
        }
        Ok(col)
    })?;
    let lu = mass.partial_piv_lu();
    let mk = lu.solve(&stiffness);
    let mc = lu.solve(&damping);
    let matrix = Mat::from_fn(2 * n, 2 * n, |r, c| match (r < n, c < n) {
        (true, true) => 0.0,
        (true, false) => {
            if c - n == r {
                1.0
            } else {
                0.0
            }
        }
        (false, true) => -mk[(r - n, c)],
        (false, false) => -mc[(r - n, c - n)],
    });
    if !(0..2 * n).all(|r| (0..2 * n).all(|c| matrix[(r, c)].is_finite())) {
        return Err(Error::SolverNonConvergence(
            "linearized operator has non-finite entries (singular mass)".into(),
        ));
    }
    Ok(LinearOperator { grid: g, matrix })
}

/// The `m` eigenvalues of largest real part, by descending real part.
pub fn spectrum(l: &LinearOperator, m: usize) -> Result<Vec<c64>> {
    if l.dim() > MAX_DENSE_DIM {
        return Err(Error::DimensionTooLarge {
            dim: l.dim(),
            max: MAX_DENSE_DIM,
        });
    }
    let mut ev = l
        .matrix
        .eigenvalues()
        .map_err(|e| Error::SolverNonConvergence(format!("eigenvalue solve: {e:?}")))?;
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    ev.truncate(m);
    Ok(ev)
}

/// `max Re lambda` of the flat-state linearization.
pub fn growth_rate(cfg: &PlateConfig) -> Result<f64> {
    let l = linearize(cfg)?;
    Ok(spectrum(&l, 1)?[0].re)
}

fn with_mach(cfg: &PlateConfig, mach: f64) -> Result<PlateConfig> {
    let mut c = cfg.clone();
    c.aero = cfg.aero.with_mach(mach)?;
    Ok(c)
}

/// Grid points of the sign scan preceding bisection.
pub const FLUTTER_SCAN_POINTS: usize = 9;

/// Flutter point `U_c` in `[u_min, u_max]` where the leading growth rate
/// crosses zero, located by a coarse scan and bisection to `tol`.
pub fn flutter_point(cfg: &PlateConfig, u_min: f64, u_max: f64, tol: f64) -> Result<Option<f64>> {
    if !(u_min < u_max && tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "flutter interval must satisfy u_min < u_max and tol > 0, got ({u_min}, {u_max}), tol {tol}"
        )));
    }
    let rate = |u: f64| growth_rate(&with_mach(cfg, u)?);
    let nodes: Vec<f64> = (0..FLUTTER_SCAN_POINTS)
        .map(|i| u_min + (u_max - u_min) * i as f64 / (FLUTTER_SCAN_POINTS - 1) as f64)
        .collect();
    let rates: Vec<f64> = nodes.par_iter().map(|&u| rate(u)).collect::<Result<_>>()?;
    let Some(i) = (0..nodes.len() - 1).find(|&i| (rates[i] > 0.0) != (rates[i + 1] > 0.0)) else {
        return Ok(None);
    };
    let (mut lo, mut hi) = (nodes[i], nodes[i + 1]);
    let lo_unstable = rates[i] > 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if (rate(mid)? > 0.0) == lo_unstable {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Growth classification of a simulation from fixed initial data.
pub fn grows_in_time(cfg: &PlateConfig, u0: &Field, u1: &Field) -> Result<bool> {
    let sys = PlateSystem::new(cfg.clone())?;
    let traj = simulate_system(&sys, u0, u1)?;
    if traj.blowup.is_some() {
        return Ok(true);
    }
    Ok(growth_ratio(&traj.norm_ut()) > 1.0)
}

/// Mach number separating growth from decay in the time domain, by
/// bisection on [`grows_in_time`]; `None` if both ends classify alike.
pub fn time_domain_boundary(
    cfg: &PlateConfig,
    u_lo: f64,
    u_hi: f64,
    tol: f64,
    u0: &Field,
    u1: &Field,
) -> Result<Option<f64>> {
    let classify = |u: f64| grows_in_time(&with_mach(cfg, u)?, u0, u1);
    let (a, b) = rayon::join(|| classify(u_lo), || classify(u_hi));
    let (glo, ghi) = (a?, b?);
    if glo == ghi {
        return Ok(None);
    }
    let (mut lo, mut hi) = (u_lo, u_hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if classify(mid)? == glo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Clamped buckling load: smallest `lambda` with `D^2_h w = lambda (-D_h) w`.
pub fn buckling_load(g: &Grid) -> Result<(f64, Field)> {
    let n = g.len();
    if n > MAX_DENSE_DIM / 2 {
        return Err(Error::DimensionTooLarge {
            dim: n,
            max: MAX_DENSE_DIM / 2,
        });
    }
    let b = assemble_banded(g, |f| biharmonic_apply(f, g));
    let a = assemble_banded(g, |f| laplacian(f, g).scaled(-1.0));
    let bd = Mat::<f64>::from_fn(n, n, |r, c| b.get(r, c));
    let ad = Mat::<f64>::from_fn(n, n, |r, c| a.get(r, c));
    // symmetric reduction C = A^{-1/2} B A^{-1/2}
    let ea = ad
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::SolverNonConvergence(format!("eigensolve of -laplacian: {e:?}")))?;
    let (qa, da) = (ea.U(), ea.S().column_vector());
    let inv_sqrt = Mat::from_fn(n, n, |r, c| qa[(r, c)] / da[c].sqrt());
    let a_half = &inv_sqrt * qa.transpose();
    let c = &a_half * &bd * &a_half;
    let c = Mat::from_fn(n, n, |r, s| 0.5 * (c[(r, s)] + c[(s, r)]));
    let evd = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::SolverNonConvergence(format!("symmetric eigensolve: {e:?}")))?;
    let lam = evd.S().column_vector()[0];
    let y = Mat::from_fn(n, 1, |r, _| evd.U()[(r, 0)]);
    let w = &a_half * &y;
    let mut mode = Field::from_values(g, (0..n).map(|r| w[(r, 0)]).collect())?;
    let scale = mode.norm(g);
    let pivot = mode.values().iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
    mode = mode.scaled(pivot.signum() / scale);
    Ok((lam, mode))
}

/// Steady pressure of the closure at `u_t = u_tt = 0`, without the delay.
fn static_local_pressure(sys: &PlateSystem, u: &Field) -> Result<Field> {
    let a = &sys.cfg.aero;
    let g = sys.grid();
    let z = Field::zeros(g);
    match a.closure {
        Closure::Off => Ok(a.p0.clone()),
        Closure::PistonLinear | Closure::CorrectedPiston | Closure::DelayedPotential { .. } => {
            Ok(aero::piston_linear(u, &z, a.mach, &a.p0, g))
        }
        Closure::PistonCubic { c1, c2, c3 } => {
            Ok(aero::piston_cubic(u, &z, a.mach, &a.p0, (c1, c2, c3), g))
        }
        Closure::LowFreqSupersonic => aero::piston_lowfreq(u, &z, a.mach, &a.p0, g),
    }
}

/// Steady delayed potential for displacement frozen in time.
#[derive(Debug, Clone)]
pub struct StaticDelay {
    matrix: Mat<f64>,
    grid: Grid,
}

impl StaticDelay {
    pub fn new(sys: &PlateSystem) -> Result<Option<Self>> {
        let Closure::DelayedPotential { n_theta, .. } = sys.cfg.aero.closure else {
            return Ok(None);
        };
        let g = *sys.grid();
        let quad = DelayQuadrature::new(n_theta)?;
        let (dt, mach, ts) = (sys.cfg.dt, sys.cfg.aero.mach, sys.delay_window());
        let matrix = dense_from_columns(&g, |e| {
            let h = HistoryBuffer::from_fn(&g, dt, ts, 0.0, |_| e.clone())?;
            aero::delay_sum(&h, &quad, mach, ts, 0)
        })?;
        Ok(Some(Self { matrix, grid: g }))
    }

    pub fn apply(&self, u: &Field) -> Field {
        let n = self.grid.len();
        let x = u.values();
        let m = &self.matrix;
        let y = (0..n).map(|r| (0..n).map(|c| m[(r, c)] * x[c]).sum()).collect();
        Field::from_values(&self.grid, y).expect("shape preserved")
    }
}

/// `D^2 u + f(u) - p_static(u)`.
pub fn static_residual(sys: &PlateSystem, delay: Option<&StaticDelay>, u: &Field) -> Result<Field> {
    let g = sys.grid();
    let mut r = biharmonic_apply(u, g);
    r += &sys.force.force(u)?;
    r -= &static_local_pressure(sys, u)?;
    if let Some(q) = delay {
        r += &q.apply(u);
    }
    Ok(r)
}

/// Result of a Newton solve.
#[derive(Debug, Clone)]
pub struct StaticSolution {
    pub u: Field,
    pub residual: f64,
    pub iterations: usize,
    /// Residual norm before each iteration and after the last one.
    pub history: Vec<f64>,
}

/// Newton's method with the exact (column-assembled) Jacobian and a halving
/// line search.
pub fn static_solve(sys: &PlateSystem, guess: &Field) -> Result<StaticSolution> {
    let delay = StaticDelay::new(sys)?;
    static_solve_with(sys, delay.as_ref(), guess)
}

pub fn static_solve_with(
    sys: &PlateSystem,
    delay: Option<&StaticDelay>,
    guess: &Field,
) -> Result<StaticSolution> {
    let g = *sys.grid();
    g.check(guess)?;
    let n = g.len();
    let mut u = guess.clone();
    let mut r = static_residual(sys, delay, &u)?;
    let mut rn = r.norm(&g);
    let mut history = vec![rn];
    let z = Field::zeros(&g);
    for it in 0..NEWTON_MAX_ITER {
        if rn <= NEWTON_TOL {
            return Ok(StaticSolution {
                u,
                residual: rn,
                iterations: it,
                history,
            });
        }
        let jac = dense_from_columns(&g, |e| {
            let mut col = biharmonic_apply(e, &g);
            col += &sys.force.derivative(&u, e)?;
            let a = &sys.cfg.aero;
            let eps_dp = match a.closure {
                Closure::Off => z.clone(),
                Closure::PistonCubic { c1, c2, c3 } => {
                    let w0 = d_x(&u, &g).scaled(a.mach);
                    let dw = d_x(e, &g).scaled(a.mach);
                    w0.zip_map(&dw, |w, d| -(c1 + w * (2.0 * c2 + 3.0 * c3 * w)) * d)
                }
                Closure::LowFreqSupersonic => {
                    d_x(e, &g).scaled(-aero::lowfreq_coefficients(a.mach).1)
                }
                _ => d_x(e, &g).scaled(-a.mach),
            };
            col -= &eps_dp;
            if let Some(q) = delay {
                col += &q.apply(e);
            }
            Ok(col)
        })?;
        let rhs = Mat::from_fn(n, 1, |i, _| -r.values()[i]);
        let du = jac.partial_piv_lu().solve(&rhs);
        let du = Field::from_values(&g, (0..n).map(|i| du[(i, 0)]).collect())?;
        if !du.is_finite() {
            return Err(Error::NewtonDiverged {
                iterations: it + 1,
                residual: rn,
            });
        }
        let mut step = 1.0;
        loop {
            let mut trial = u.clone();
            trial.axpy(step, &du);
            let tr = static_residual(sys, delay, &trial)?;
            let tn = tr.norm(&g);
            if tn < rn || step <= MIN_LINE_STEP {
                u = trial;
                r = tr;
                rn = tn;
                break;
            }
            step *= 0.5;
        }
        history.push(rn);
    }
    if rn <= NEWTON_TOL {
        return Ok(StaticSolution {
            u,
            residual: rn,
            iterations: NEWTON_MAX_ITER,
            history,
        });
    }
    Err(Error::NewtonDiverged {
        iterations: NEWTON_MAX_ITER,
        residual: rn,
    })
}

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub param: f64,
    pub u: Field,
    pub residual: f64,
    pub stable: bool,
    pub max_re: f64,
}

#[derive(Debug, Clone)]
pub struct EquilibriumBranch {
    pub points: Vec<BranchPoint>,
    /// Set when Newton failed; the branch ends at the last good point.
    pub stopped_at: Option<(f64, Error)>,
}

/// Relative real-part tolerance below which a mode counts as neutral.
pub const NEUTRAL_TOL: f64 = 1e-8;

/// Natural-parameter continuation over `params` with a secant predictor.
/// While the previous solution is (numerically) flat, `perturbation` is
/// added to the guess so that a bifurcating branch can be picked up.
pub fn continuation(
    make_cfg: impl Fn(f64) -> Result<PlateConfig>,
    params: &[f64],
    guess: &Field,
    perturbation: Option<&Field>,
) -> Result<EquilibriumBranch> {
    let mut points: Vec<BranchPoint> = Vec::new();
    let mut prev = guess.clone();
    let mut stopped_at = None;
    for &p in params {
        let cfg = make_cfg(p)?;
        let sys = PlateSystem::new(cfg.clone())?;
        // secant predictor along the branch once two points are known
        let mut start = match points.as_slice() {
            [.., a, b] if b.param != a.param => {
                let mut s = b.u.clone();
                s.axpy((p - b.param) / (b.param - a.param), &(&b.u - &a.u));
                s
            }
            _ => prev.clone(),
        };
        if let Some(d) = perturbation {
            if prev.max_abs() <= 1e-8 {
                start += d;
            }
        }
        let sol = match static_solve(&sys, &start) {
            Ok(s) => s,
            Err(e @ Error::NewtonDiverged { .. }) => {
                stopped_at = Some((p, e));
                break;
            }
            Err(e) => return Err(e),
        };
        let lin = linearize_at(&cfg, &sol.u)?;
        let max_re = spectrum(&lin, 1)?[0].re;
        let stable = max_re <= NEUTRAL_TOL * lin.norm_inf();
        prev = sol.u.clone();
        points.push(BranchPoint {
            param: p,
            u: sol.u,
            residual: sol.residual,
            stable,
            max_re,
        });
    }
    Ok(EquilibriumBranch { points, stopped_at })
}

/// Discrete `L2` norm of each branch point.
pub fn branch_norms(b: &EquilibriumBranch, g: &Grid) -> Vec<f64> {
    b.points.iter().map(|p| inner_product(&p.u, &p.u, g).sqrt()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aero::AeroModel;
    use crate::vonkarman::NonlinearityKind;
    use std::f64::consts::PI;

    fn base(n: usize) -> PlateConfig {
        PlateConfig::new(Grid::unit(n).unwrap(), NonlinearityKind::VonKarman, 1e-3, 1.0)
    }

    #[test]
    fn conservative_spectrum_is_imaginary() {
        let cfg = base(7);
        let l = linearize(&cfg).unwrap();
        let ev = spectrum(&l, l.dim()).unwrap();
        let max_re = ev.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        assert!(max_re <= 1e-8 * l.norm_inf(), "{max_re}");
        // omega^2 are the biharmonic eigenvalues
        let basis = crate::diagnostics::ModalBasis::new(&cfg.grid, 1).unwrap();
        let w_max = ev.iter().map(|z| z.im).fold(f64::INFINITY, |a, b| a.min(b.abs()));
        assert!((w_max * w_max - basis.eigenvalues[0]).abs() <= 1e-6 * basis.eigenvalues[0]);
    }

    #[test]
    fn damping_is_stable() {
        let mut cfg = base(6);
        cfg.k = 0.5;
        assert!(growth_rate(&cfg).unwrap() < 0.0);
    }

    #[test]
    fn delayed_closure_is_not_linearizable() {
        let mut cfg = base(6);
        cfg.aero = AeroModel::new(
            Closure::DelayedPotential {
                n_theta: 8,
                t_star_override: None,
            },
            2.0,
            Field::zeros(&cfg.grid),
        )
        .unwrap();
        assert!(matches!(linearize(&cfg), Err(Error::NotLinearizable(_))));
    }

    #[test]
    fn flat_plate_static_solve_is_immediate() {
        let cfg = base(6);
        let sys = PlateSystem::new(cfg).unwrap();
        let s = static_solve(&sys, &Field::zeros(sys.grid())).unwrap();
        assert_eq!(s.iterations, 0);
        assert_eq!(s.u.max_abs(), 0.0);
    }

    #[test]
    fn small_load_converges() {
        let mut cfg = base(9);
        cfg.aero.p0 = Field::from_fn(&cfg.grid, |x, y| 0.01 * (PI * x).sin() * (PI * y).sin());
        let sys = PlateSystem::new(cfg).unwrap();
        let s = static_solve(&sys, &Field::zeros(sys.grid())).unwrap();
        assert!(s.iterations <= 20);
        assert!(s.residual <= NEWTON_TOL);
    }

    #[test]
    fn flutter_interval_validation() {
        let cfg = base(5);
        assert!(flutter_point(&cfg, 2.0, 1.0, 0.01).is_err());
    }
}

//! Plate energy, discrete energy budgets, the dissipation integral, the
//! delayed-potential decay bound and modal-energy concentration.

use faer::{Mat, Side};

use crate::aero::{self, DelayQuadrature, HistoryBuffer};
use crate::dynamics::{PlateState, PlateSystem, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{biharmonic_apply, inner_product, laplacian, Field, Grid};
use crate::linalg::assemble_banded;
use crate::vonkarman::NonlinearEnergy;

/// Plate energy split. Bending is `1/2 <D^2_h u, u>` (the discrete
/// `1/2 ||Du||^2` for clamped fields), kinetic is `1/2 <(1 - alpha D_h) u_t, u_t>`,
/// and the static load enters as `-<p0, u>` so that the conservative total is
/// an invariant of the unforced, undamped motion.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyReport {
    pub t: f64,
    pub kinetic: f64,
    pub bending: f64,
    pub airy: f64,
    pub inplane: f64,
    /// Berger membrane potential (zero for von Karman).
    pub membrane: f64,
    pub load: f64,
    pub total: f64,
    pub budget_residual: f64,
}

fn assemble_report(sys: &PlateSystem, s: &PlateState, nl: NonlinearEnergy) -> EnergyReport {
    let g = sys.grid();
    let alpha = sys.cfg.alpha;
    let mut kinetic = inner_product(&s.ut, &s.ut, g);
    if alpha > 0.0 {
        kinetic -= alpha * inner_product(&laplacian(&s.ut, g), &s.ut, g);
    }
    kinetic *= 0.5;
    let bending = 0.5 * inner_product(&biharmonic_apply(&s.u, g), &s.u, g);
    let load = -inner_product(&sys.cfg.aero.p0, &s.u, g);
    EnergyReport {
        t: s.t,
        kinetic,
        bending,
        airy: nl.airy,
        inplane: nl.inplane,
        membrane: nl.membrane,
        load,
        total: kinetic + bending + nl.total() + load,
        budget_residual: 0.0,
    }
}

/// Energy of a state produced by the stepper (uses its cached potential).
pub fn energy_of(sys: &PlateSystem, s: &PlateState) -> EnergyReport {
    assemble_report(sys, s, s.potential)
}

/// Energy of an arbitrary state; the nonlinear potential is recomputed.
pub fn plate_energy(s: &PlateState, sys: &PlateSystem) -> Result<EnergyReport> {
    let nl = sys.force.energy(&s.u)?;
    Ok(assemble_report(sys, s, nl))
}

/// Running defect of the discrete energy identity
/// `E(t_n) - E(0) + int k ||u_t||^2 - int <p - p0, u_t>`, trapezoid in time.
pub fn energy_budget(traj: &Trajectory, k: f64) -> Vec<f64> {
    let dt = traj.dt;
    let rec = &traj.records;
    let Some(first) = rec.first() else {
        return Vec::new();
    };
    let e0 = first.energy.total;
    let mut out = Vec::with_capacity(rec.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in rec.windows(2) {
        let h = w[1].t - w[0].t;
        debug_assert!((h - dt).abs() <= 1e-9 * dt);
        acc += 0.5 * h * (k * (w[0].ut_sq + w[1].ut_sq) - (w[0].aero_power + w[1].aero_power));
        out.push(w[1].energy.total - e0 + acc);
    }
    out
}

/// Cumulative aerodynamic work `int <p - p0, u_t>` (trapezoid).
pub fn aero_work(traj: &Trajectory) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for w in traj.records.windows(2) {
        acc += 0.5 * (w[1].t - w[0].t) * (w[0].aero_power + w[1].aero_power);
        out.push(acc);
    }
    out
}

/// Fills `budget_residual` of every record's energy report.
pub fn annotate_budget(traj: &mut Trajectory, k: f64) {
    let r = energy_budget(traj, k);
    for (rec, r) in traj.records.iter_mut().zip(r) {
        rec.energy.budget_residual = r;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dissipation {
    /// Running `sum dt ||u_t||^2` at each record.
    pub running: Vec<f64>,
    /// Increment over the final window (the last tenth of the run).
    pub final_increment: f64,
}

impl Dissipation {
    /// Whether the integral has visibly settled.
    pub fn converged(&self, tol: f64) -> bool {
        self.final_increment <= tol
    }
}

pub fn dissipation_integral(traj: &Trajectory) -> Dissipation {
    let mut running = Vec::with_capacity(traj.records.len());
    let mut acc = 0.0;
    for (n, r) in traj.records.iter().enumerate() {
        if n > 0 {
            acc += traj.dt * r.ut_sq;
        }
        running.push(acc);
    }
    let n = running.len();
    let final_increment = if n < 2 {
        0.0
    } else {
        let w = ((n - 1) / 10).max(1);
        running[n - 1] - running[n - 1 - w]
    };
    Dissipation {
        running,
        final_increment,
    }
}

/// Leading eigenfields of the clamped biharmonic, orthonormal under
/// [`inner_product`].
#[derive(Debug, Clone)]
pub struct ModalBasis {
    pub grid: Grid,
    pub eigenvalues: Vec<f64>,
    pub modes: Vec<Field>,
}

/// Beyond this many unknowns the dense symmetric eigensolve is refused.
pub const MODAL_MAX_DIM: usize = 4096;

impl ModalBasis {
    pub fn new(grid: &Grid, m: usize) -> Result<Self> {
        let n = grid.len();
        if n > MODAL_MAX_DIM {
            return Err(Error::DimensionTooLarge {
                dim: n,
                max: MODAL_MAX_DIM,
            });
        }
        if m == 0 || m > n {
            return Err(Error::InvalidParameter(format!(
                "mode count must lie in 1..={n}, got {m}"
            )));
        }
        let b = assemble_banded(grid, |f| biharmonic_apply(f, grid));
        let dense = Mat::<f64>::from_fn(n, n, |r, c| b.get(r, c));
        let evd = dense
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::SolverNonConvergence(format!("symmetric eigensolve: {e:?}")))?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let scale = 1.0 / grid.cell_area().sqrt();
        let mut eigenvalues = Vec::with_capacity(m);
        let mut modes = Vec::with_capacity(m);
        for j in 0..m {
            let col: Vec<f64> = (0..n).map(|r| u[(r, j)] * scale).collect();
            // fix the sign so the largest entry is positive
            let pivot = col
                .iter()
                .cloned()
                .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            modes.push(Field::from_values(grid, col.into_iter().map(|v| v * sign).collect())?);
            eigenvalues.push(s[j]);
        }
        Ok(Self {
            grid: *grid,
            eigenvalues,
            modes,
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalEnergy {
    pub coefficients: Vec<f64>,
    /// `cumulative[i]`: bending-energy fraction held by the first `i + 1` modes.
    pub cumulative: Vec<f64>,
}

impl ModalEnergy {
    pub fn captured(&self, m: usize) -> f64 {
        if m == 0 {
            return 0.0;
        }
        self.cumulative[(m - 1).min(self.cumulative.len() - 1)]
    }
}

pub fn modal_energy(u: &Field, basis: &ModalBasis) -> Result<ModalEnergy> {
    let g = &basis.grid;
    g.check(u)?;
    let total = inner_product(&biharmonic_apply(u, g), u, g);
    let coefficients: Vec<f64> = basis.modes.iter().map(|w| inner_product(u, w, g)).collect();
    let mut acc = 0.0;
    let cumulative = coefficients
        .iter()
        .zip(&basis.eigenvalues)
        .map(|(c, l)| {
            acc += c * c * l;
            if total > 0.0 {
                acc / total
            } else {
                0.0
            }
        })
        .collect();
    Ok(ModalEnergy {
        coefficients,
        cumulative,
    })
}

/// One row of the delayed-potential decay table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuRow {
    pub mach: f64,
    pub t_star: f64,
    /// `max_t ||q^u(t)||^2 U / int_{t - t*}^t ||D u||^2`
    pub ratio: f64,
    /// `max_t ||q^u(t)||`
    pub max_q_norm: f64,
}

fn guarded_ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Replays a prescribed history `u(t)` at each Mach number and evaluates the
/// decay ratio at the sample times `times`. The window `c/U` of the bound is
/// the delay horizon `t*`.
pub fn qu_bound_replay(
    grid: &Grid,
    machs: &[f64],
    dt: f64,
    n_theta: usize,
    times: &[f64],
    history: impl Fn(f64) -> Field + Sync,
) -> Result<Vec<QuRow>> {
    let quad = DelayQuadrature::new(n_theta)?;
    machs
        .iter()
        .map(|&mach| {
            let ts = aero::t_star(mach, &grid.domain)?;
            let mut ratio: f64 = 0.0;
            let mut max_q: f64 = 0.0;
            for &t in times {
                let h = HistoryBuffer::from_fn(grid, dt, ts, t, &history)?;
                let q = aero::delay_potential(&h, &quad, mach, t, grid)?;
                let qn = inner_product(&q, &q, grid);
                // trapezoid of ||D u||^2 over [t - t*, t] on the slice grid
                let n_s = (ts / dt).ceil() as usize;
                let mut integral = 0.0;
                for m in 0..=n_s {
                    let lap = laplacian(&h.back(m)?.u, grid);
                    let w = if m == 0 || m == n_s { 0.5 * dt } else { dt };
                    integral += w * inner_product(&lap, &lap, grid);
                }
                ratio = ratio.max(guarded_ratio(qn * mach, integral));
                max_q = max_q.max(qn.sqrt());
            }
            Ok(QuRow {
                mach,
                t_star: ts,
                ratio,
                max_q_norm: max_q,
            })
        })
        .collect()
}

/// Decay ratio read off a delayed-potential simulation: `q^u` is recovered
/// from the recorded pressure, the window being the delay horizon.
pub fn qu_bound_from_run(sys: &PlateSystem, traj: &Trajectory) -> Result<QuRow> {
    let mach = sys.cfg.aero.mach;
    let ts = sys.delay_window();
    let dt = traj.dt;
    let n_s = (ts / dt).ceil() as usize;
    let lap_sq: Vec<f64> = traj.records.iter().map(|r| r.norm_lap_u * r.norm_lap_u).collect();
    let mut ratio: f64 = 0.0;
    let mut max_q: f64 = 0.0;
    for (n, r) in traj.records.iter().enumerate() {
        max_q = max_q.max(r.delay_norm);
        if n < n_s {
            continue;
        }
        let mut integral = 0.0;
        for m in 0..=n_s {
            let w = if m == 0 || m == n_s { 0.5 * dt } else { dt };
            integral += w * lap_sq[n - m];
        }
        ratio = ratio.max(guarded_ratio(r.delay_norm * r.delay_norm * mach, integral));
    }
    Ok(QuRow {
        mach,
        t_star: ts,
        ratio,
        max_q_norm: max_q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, PlateConfig};
    use crate::grid::Domain;
    use crate::vonkarman::{InPlaneLoad, NonlinearityKind};
    use std::f64::consts::PI;

    fn smooth(g: &Grid) -> Field {
        Field::from_fn(g, |x, y| {
            let (lx, ly) = (g.domain.lx, g.domain.ly);
            ((PI * x / lx).sin() * (PI * y / ly).sin()).powi(2) * (1.0 + 0.4 * x - 0.2 * y)
        })
    }

    fn state(g: &Grid, u: Field, ut: Field) -> PlateState {
        let mut s = PlateState::zero(g);
        s.u = u;
        s.ut = ut;
        s
    }

    #[test]
    fn zero_state_energy() {
        let g = Grid::unit(8).unwrap();
        let cfg = PlateConfig::new(g, NonlinearityKind::VonKarman, 1e-3, 1.0);
        let sys = PlateSystem::new(cfg).unwrap();
        let e = plate_energy(&PlateState::zero(&g), &sys).unwrap();
        assert_eq!(e.total, 0.0);
        assert_eq!(e.kinetic + e.bending + e.airy + e.inplane + e.load, 0.0);
    }

    #[test]
    fn first_mode_energy_is_half_eigenvalue() {
        let g = Grid::unit(11).unwrap();
        let basis = ModalBasis::new(&g, 3).unwrap();
        let cfg = PlateConfig::new(g, NonlinearityKind::None, 1e-3, 1.0);
        let sys = PlateSystem::new(cfg).unwrap();
        let e = plate_energy(&state(&g, basis.modes[0].clone(), Field::zeros(&g)), &sys).unwrap();
        assert!((e.total - 0.5 * basis.eigenvalues[0]).abs() <= 1e-10 * basis.eigenvalues[0]);
    }

    #[test]
    fn airy_energy_is_quartic() {
        let g = Grid::unit(12).unwrap();
        let cfg = PlateConfig::new(g, NonlinearityKind::VonKarman, 1e-3, 1.0);
        let sys = PlateSystem::new(cfg).unwrap();
        let u = smooth(&g);
        let z = Field::zeros(&g);
        let a = plate_energy(&state(&g, u.clone(), z.clone()), &sys).unwrap().airy;
        let b = plate_energy(&state(&g, u.scaled(1.7), z), &sys).unwrap().airy;
        assert!(a > 0.0);
        assert!((b - 1.7f64.powi(4) * a).abs() <= 1e-9 * b);
    }

    #[test]
    fn energy_gradient_matches_forces() {
        let g = Grid::new(Domain::new(1.0, 1.3).unwrap(), 10, 12).unwrap();
        let mut cfg = PlateConfig::new(g, NonlinearityKind::VonKarman, 1e-3, 1.0);
        cfg.f0 = InPlaneLoad::from_fn(&g, |x, y| 2.0 * x * x - x * y + 0.5 * y * y);
        cfg.aero.p0 = Field::from_fn(&g, |x, y| (PI * x).sin() * y);
        cfg.alpha = 0.1;
        let sys = PlateSystem::new(cfg).unwrap();
        let u = smooth(&g).scaled(0.3);
        let du = Field::from_fn(&g, |x, y| (x * (1.0 - x) * y * (1.3 - y)).powi(2) * (2.0 - y));
        let z = Field::zeros(&g);
        let eps = 1e-5;
        let ep = plate_energy(&state(&g, &u + &du.scaled(eps), z.clone()), &sys).unwrap().total;
        let em = plate_energy(&state(&g, &u - &du.scaled(eps), z), &sys).unwrap().total;
        let numeric = (ep - em) / (2.0 * eps);
        let mut grad = biharmonic_apply(&u, &g);
        grad += &sys.force.force(&u).unwrap();
        grad -= &sys.cfg.aero.p0;
        let analytic = inner_product(&grad, &du, &g);
        assert!((numeric - analytic).abs() <= 1e-4 * analytic.abs(), "{numeric} {analytic}");
    }

    #[test]
    fn modal_basis_orthonormal_and_ascending() {
        let g = Grid::new(Domain::new(1.2, 1.0).unwrap(), 9, 8).unwrap();
        let b = ModalBasis::new(&g, 10).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let ip = inner_product(&b.modes[i], &b.modes[j], &g);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() <= 1e-10);
            }
        }
        assert!(b.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn modal_energy_of_modes() {
        let g = Grid::unit(9).unwrap();
        let b = ModalBasis::new(&g, 6).unwrap();
        let me = modal_energy(&b.modes[2], &b).unwrap();
        assert!((me.coefficients[2] - 1.0).abs() <= 1e-10);
        for (i, c) in me.coefficients.iter().enumerate() {
            if i != 2 {
                assert!(c.abs() <= 1e-10);
            }
        }
        assert!((me.captured(3) - 1.0).abs() <= 1e-10);
        let me = modal_energy(&(&b.modes[0] + &b.modes[1]), &b).unwrap();
        assert!((me.captured(2) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn parseval_with_full_basis() {
        let g = Grid::unit(5).unwrap();
        let b = ModalBasis::new(&g, g.len()).unwrap();
        let u = smooth(&g);
        let me = modal_energy(&u, &b).unwrap();
        let s: f64 = me.coefficients.iter().map(|c| c * c).sum();
        assert!((s - inner_product(&u, &u, &g)).abs() <= 1e-10 * s);
        let partial: f64 = me.coefficients[..6].iter().map(|c| c * c).sum();
        assert!(partial <= s);
        assert!((me.captured(g.len()) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn zero_trajectory_has_zero_dissipation() {
        let g = Grid::unit(6).unwrap();
        let cfg = PlateConfig::new(g, NonlinearityKind::VonKarman, 1e-3, 1e-2);
        let traj = simulate(&cfg, &Field::zeros(&g), &Field::zeros(&g)).unwrap();
        let d = dissipation_integral(&traj);
        assert!(d.running.iter().all(|&v| v == 0.0));
        assert_eq!(d.final_increment, 0.0);
        assert!(energy_budget(&traj, 0.0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quiescent_replay_guards_zero_ratio() {
        let g = Grid::unit(6).unwrap();
        let rows = qu_bound_replay(&g, &[2.0, 4.0], 0.05, 8, &[1.0], |_| Field::zeros(&g)).unwrap();
        assert!(rows.iter().all(|r| r.ratio == 0.0 && r.max_q_norm == 0.0));
    }
}

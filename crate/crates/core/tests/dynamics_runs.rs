use std::f64::consts::PI;

use panelflutter_core::aero::{lowfreq_coefficients, AeroModel, Closure};
use panelflutter_core::diagnostics::{aero_work, annotate_budget, dissipation_integral, ModalBasis};
use panelflutter_core::dynamics::{
    growth_ratio, mass_apply, mass_solve, rk4_dt_limit, simulate, simulate_system, Integrator,
    PlateConfig, PlateState, PlateSystem,
};
use panelflutter_core::grid::{biharmonic_apply, inner_product, laplacian};
use panelflutter_core::vonkarman::{airy_solve, AirySolver, Curvatures, NonlinearityKind};
use panelflutter_core::{Field, Grid};

fn bump(g: &Grid, a: f64) -> Field {
    Field::from_fn(g, |x, y| a * ((PI * x).sin() * (PI * y).sin()).powi(2))
}

fn wavy(g: &Grid, a: f64) -> Field {
    Field::from_fn(g, |x, y| {
        a * (PI * x).sin() * (2.0 * PI * x).sin() * (PI * y).sin().powi(2) * (1.0 + 0.3 * y)
    })
}

fn with_closure(mut cfg: PlateConfig, closure: Closure, mach: f64) -> PlateConfig {
    cfg.aero = AeroModel::new(closure, mach, Field::zeros(&cfg.grid)).unwrap();
    cfg
}

fn l2(f: &Field, g: &Grid) -> f64 {
    inner_product(f, f, g).sqrt()
}

#[test]
fn acceleration_matches_term_by_term_evaluation() {
    // vK plate, U = 0 piston: M a = (p0 - u_t) - B u - k u_t - f_vk(u), with
    // f_vk = -(D_yy(u_xx v) + D_xx(u_yy v) - 2 D_xy(u_xy v)) for v = airy(u)
    let g = Grid::unit(9).unwrap();
    let mut cfg = PlateConfig::new(g, NonlinearityKind::VonKarman, 1e-3, 0.0);
    cfg.alpha = 0.2;
    cfg.k = 0.3;
    let p0 = Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
    cfg.aero = AeroModel::new(Closure::PistonLinear, 0.0, p0.clone()).unwrap();
    let sys = PlateSystem::new(cfg).unwrap();
    let u = bump(&g, 0.4);
    let ut = wavy(&g, 1.5);
    let mut state = PlateState::zero(&g);
    state.u = u.clone();
    state.ut = ut.clone();
    let h = sys.new_history(&state).unwrap();
    let a = sys.acceleration(&state, &h).unwrap();

    let v = airy_solve(&u, &AirySolver::new(&g).unwrap()).unwrap();
    let c = Curvatures::of(&u, &g);
    let f_vk = c.bracket_adjoint(&v, &g).scaled(-1.0);
    let mut rhs = &p0 - &ut;
    rhs -= &biharmonic_apply(&u, &g);
    rhs.axpy(-0.3, &ut);
    rhs -= &f_vk;
    let lhs = mass_apply(0.2, &a, &g);
    let err = (&lhs - &rhs).max_abs() / rhs.max_abs();
    assert!(err <= 1e-10, "relative mismatch {err:e}");
}

#[test]
fn mass_solve_recovers_manufactured_field() {
    let g = Grid::unit(15).unwrap();
    let a = bump(&g, 1.0);
    let rhs = &a - &laplacian(&a, &g).scaled(0.3);
    let back = mass_solve(0.3, &rhs, &g).unwrap();
    assert!((&back - &a).max_abs() <= 1e-10);
}

fn final_u(cfg: &PlateConfig, u0: &Field, u1: &Field) -> Field {
    simulate(cfg, u0, u1).unwrap().final_state.u
}

#[test]
fn newmark_self_convergence_is_second_order() {
    let g = Grid::unit(7).unwrap();
    // about one period of the fundamental (omega_1 ~ 34)
    let t_end = 0.2;
    let u0 = bump(&g, 0.3);
    let u1 = Field::zeros(&g);
    let run = |dt: f64| {
        let mut cfg = PlateConfig::new(g, NonlinearityKind::VonKarman, dt, t_end);
        cfg.sample_every = 0;
        final_u(&cfg, &u0, &u1)
    };
    let dt = 2e-3;
    let reference = run(dt / 16.0);
    let e1 = l2(&(&run(dt) - &reference), &g);
    let e2 = l2(&(&run(dt / 2.0) - &reference), &g);
    let ratio = e1 / e2;
    assert!((3.3..=4.7).contains(&ratio), "self-convergence ratio {ratio}");
}

#[test]
fn rk4_agrees_with_newmark_at_newmark_order() {
    let g = Grid::unit(7).unwrap();
    let u0 = bump(&g, 0.05);
    let u1 = Field::zeros(&g);
    let dt_rk = 0.9 * rk4_dt_limit(&g, 0.0);
    let t_end = 0.2;
    let mut rk = PlateConfig::new(g, NonlinearityKind::None, dt_rk, t_end);
    rk.integrator = Integrator::Rk4;
    rk.sample_every = 0;
    // the RK4 path has error O(dt_rk^4), negligible here; the gap is Newmark's
    let n_rk = (t_end / dt_rk).round();
    rk.dt = t_end / n_rk;
    let reference = final_u(&rk, &u0, &u1);
    let gap = |dt: f64| {
        let mut nm = PlateConfig::new(g, NonlinearityKind::None, dt, t_end);
        nm.sample_every = 0;
        l2(&(&final_u(&nm, &u0, &u1) - &reference), &g)
    };
    let (e1, e2) = (gap(2e-3), gap(1e-3));
    assert!(e1 / e2 > 3.3 && e1 / e2 < 4.7, "gaps {e1:e} {e2:e}");
    assert!(e2 <= 1e-2 * l2(&u0, &g));
}

#[test]
fn rk4_energy_drift_at_cfl_step() {
    // on this grid the CFL step resolves the low modes carrying the data
    let g = Grid::unit(15).unwrap();
    let dt = rk4_dt_limit(&g, 0.0);
    let mut cfg = PlateConfig::new(g, NonlinearityKind::VonKarman, dt, 1000.0 * dt);
    cfg.integrator = Integrator::Rk4;
    cfg.sample_every = 0;
    let modes = ModalBasis::new(&g, 2).unwrap().modes;
    let traj = simulate(&cfg, &modes[0].scaled(0.1), &modes[1].scaled(1.0)).unwrap();
    assert_eq!(traj.records.len(), 1001);
    let e0 = traj.records[0].energy.total;
    let drift = traj
        .records
        .iter()
        .map(|r| (r.energy.total - e0).abs() / e0)
        .fold(0.0, f64::max);
    assert!(drift <= 1e-6, "RK4 drift {drift:e}");
}

#[test]
fn damped_plate_settles() {
    let g = Grid::unit(8).unwrap();
    let mut cfg = PlateConfig::new(g, NonlinearityKind::VonKarman, 2e-3, 50.0);
    cfg.k = 1.0;
    cfg.sample_every = 0;
    let cfg = with_closure(cfg, Closure::PistonLinear, 0.0);
    let traj = simulate(&cfg, &bump(&g, 1e-3), &bump(&g, 1e-3)).unwrap();
    let first = traj.records[0].norm_ut;
    let last = traj.records.last().unwrap().norm_ut;
    assert!(last <= 1e-4 * first, "{last:e} vs {first:e}");
}

#[test]
fn negative_damping_grows_monotonically_and_draws_energy() {
    let g = Grid::unit(8).unwrap();
    let mut cfg = PlateConfig::new(g, NonlinearityKind::VonKarman, 2e-3, 4.0);
    cfg.sample_every = 0;
    let cfg = with_closure(cfg, Closure::LowFreqSupersonic, 1.2);
    assert!(lowfreq_coefficients(1.2).0 < 0.0);
    let traj = simulate(&cfg, &bump(&g, 1e-3), &wavy(&g, 1e-2)).unwrap();
    assert!(traj.blowup.is_none());
    let nut = traj.norm_ut();
    // peaks over consecutive windows of ~3 fundamental periods grow after the first second
    let w = 250;
    let peaks: Vec<f64> = nut[500..]
        .chunks(w)
        .filter(|c| c.len() == w)
        .map(|c| c.iter().cloned().fold(0.0, f64::max))
        .collect();
    assert!(peaks.windows(2).all(|p| p[1] > p[0]), "{peaks:?}");
    assert!(growth_ratio(&nut) > 1.0);
    let work = aero_work(&traj);
    assert!(work.last().unwrap() > &0.0);
    assert!(work[work.len() - 1] > work[work.len() / 2]);
    // unstable run: the dissipation integral keeps growing
    let d = dissipation_integral(&traj);
    assert!(d.final_increment > 1e-3 * d.running.last().unwrap());
}

#[test]
fn conservative_budget_closes() {
    let g = Grid::unit(9).unwrap();
    let mut cfg = PlateConfig::new(g, NonlinearityKind::VonKarman, 1e-3, 0.5);
    cfg.sample_every = 0;
    let mut traj = simulate(&cfg, &bump(&g, 0.4), &wavy(&g, 3.0)).unwrap();
    annotate_budget(&mut traj, 0.0);
    let e0 = traj.records[0].energy.total;
    for r in &traj.records {
        assert!(r.energy.budget_residual.abs() <= 1e-8 * e0);
    }
}

#[test]
fn delayed_closure_runs_from_warm_history() {
    let g = Grid::unit(7).unwrap();
    let mut cfg = PlateConfig::new(g, NonlinearityKind::VonKarman, 0.02, 0.4);
    cfg.k = 0.5;
    let cfg = with_closure(
        cfg,
        Closure::DelayedPotential {
            n_theta: 16,
            t_star_override: None,
        },
        3.0,
    );
    let sys = PlateSystem::new(cfg).unwrap();
    assert!(sys.is_delayed());
    let traj = simulate_system(&sys, &bump(&g, 1e-2), &Field::zeros(&g)).unwrap();
    assert!(traj.warmup_used);
    assert!(traj.blowup.is_none());
    assert!(traj.records.iter().all(|r| r.delay_norm.is_finite()));
    // the steady delay responds to the initial x-slope
    assert!(traj.records[0].delay_norm > 0.0);
}

use std::f64::consts::PI;

use panelflutter_core::aero::{AeroModel, Closure};
use panelflutter_core::analysis::{
    buckling_load, branch_norms, continuation, flutter_point, growth_rate, linearize,
    linearize_at, spectrum,
};
use panelflutter_core::dynamics::{PlateConfig, PlateState, PlateSystem};
use panelflutter_core::vonkarman::{InPlaneLoad, NonlinearityKind};
use panelflutter_core::{Field, Grid};

fn cfg_with(g: Grid, closure: Closure, mach: f64, k: f64) -> PlateConfig {
    let mut cfg = PlateConfig::new(g, NonlinearityKind::VonKarman, 1e-3, 0.0);
    cfg.k = k;
    cfg.aero = AeroModel::new(closure, mach, Field::zeros(&g)).unwrap();
    cfg
}

fn smooth(g: &Grid, seed: f64) -> Field {
    Field::from_fn(g, |x, y| {
        ((PI * x).sin() * (PI * y).sin()).powi(2)
            * ((seed * x + 0.3).sin() + 0.5 * (2.0 * seed * y - 0.1).cos() + x * y)
    })
}

/// `(u_t, u_tt)` of the nonlinear system at the given state.
fn rhs(sys: &PlateSystem, u: &Field, v: &Field) -> (Field, Field) {
    let mut s = PlateState::zero(sys.grid());
    s.u = u.clone();
    s.ut = v.clone();
    let h = sys.new_history(&s).unwrap();
    (v.clone(), sys.acceleration(&s, &h).unwrap())
}

fn tangent_mismatch(cfg: PlateConfig, u_eq: &Field) -> f64 {
    let g = cfg.grid;
    let lin = linearize_at(&cfg, u_eq).unwrap();
    let sys = PlateSystem::new(cfg).unwrap();
    let (du, dv) = (smooth(&g, 2.0), smooth(&g, 5.0).scaled(0.7));
    let eps = 1e-4;
    let mut up = u_eq.clone();
    up.axpy(eps, &du);
    let mut um = u_eq.clone();
    um.axpy(-eps, &du);
    let (_, ap) = rhs(&sys, &up, &dv.scaled(eps));
    let (_, am) = rhs(&sys, &um, &dv.scaled(-eps));
    let fd = (&ap - &am).scaled(0.5 / eps);
    let (lu, la) = lin.apply(&du, &dv).unwrap();
    let e1 = (&lu - &dv).max_abs();
    let e2 = (&la - &fd).max_abs() / fd.max_abs();
    e1.max(e2)
}

#[test]
fn linearization_matches_finite_difference_of_dynamics() {
    let g = Grid::unit(7).unwrap();
    let flat = Field::zeros(&g);
    let bent = smooth(&g, 1.0).scaled(0.3);
    let mut loaded = cfg_with(g, Closure::PistonLinear, 3.0, 0.1);
    loaded.alpha = 0.1;
    loaded.f0 = InPlaneLoad::from_fn(&g, |x, y| 2.0 * (PI * x).sin() * (PI * y).sin());
    let cases = [
        (loaded, flat.clone()),
        (cfg_with(g, Closure::LowFreqSupersonic, 2.5, 0.0), bent.clone()),
        (
            cfg_with(g, Closure::PistonCubic { c1: 1.0, c2: 0.5, c3: 0.1 }, 4.0, 0.2),
            bent,
        ),
    ];
    for (cfg, u_eq) in cases {
        let name = cfg.aero.closure.name();
        let err = tangent_mismatch(cfg, &u_eq);
        assert!(err <= 1e-6, "{name}: tangent mismatch {err:e}");
    }
}

#[test]
fn uniform_damping_shifts_spectrum_by_half_k() {
    let g = Grid::unit(7).unwrap();
    let r0 = growth_rate(&cfg_with(g, Closure::LowFreqSupersonic, 2.0, 0.0)).unwrap();
    let r1 = growth_rate(&cfg_with(g, Closure::LowFreqSupersonic, 2.0, 0.1)).unwrap();
    assert!(((r0 - r1) - 0.05).abs() <= 1e-8, "shift {}", r0 - r1);
}

#[test]
fn leading_eigenvalue_is_grid_stable() {
    // past the coalescence speed the leading pair is a low-mode flutter pair,
    // not one of the (uniformly damped) grid-scale modes
    let lead = |n: usize| {
        let cfg = cfg_with(Grid::unit(n).unwrap(), Closure::PistonLinear, 1000.0, 0.0);
        spectrum(&linearize(&cfg).unwrap(), 1).unwrap()[0]
    };
    let (a, b) = (lead(23), lead(31));
    assert!(b.re > 0.0, "{b}");
    let rel = (a - b).norm() / b.norm();
    assert!(rel <= 0.05, "{a} vs {b}");
}

#[test]
fn damped_subsonic_piston_has_no_flutter() {
    let g = Grid::unit(7).unwrap();
    let cfg = cfg_with(g, Closure::PistonLinear, 0.5, 0.1);
    assert_eq!(flutter_point(&cfg, 0.1, 0.9, 1e-3).unwrap(), None);
}

#[test]
fn low_supersonic_band_is_unstable() {
    let g = Grid::unit(7).unwrap();
    let r = growth_rate(&cfg_with(g, Closure::LowFreqSupersonic, 1.2, 0.0)).unwrap();
    assert!(r > 0.0);
    // and recovers past sqrt(2) + margin
    let r = growth_rate(&cfg_with(g, Closure::LowFreqSupersonic, 2.0, 0.0)).unwrap();
    assert!(r < 0.0);
}

#[test]
fn pitchfork_branch_norm_departs_from_zero() {
    let g = Grid::unit(8).unwrap();
    let (lc, mode) = buckling_load(&g).unwrap();
    let guess = mode.scaled(4.0 / mode.max_abs());
    let params: Vec<f64> = [0.6, 0.9, 0.97, 1.03, 1.1, 1.2].iter().map(|f| f * lc).collect();
    let make = |lam: f64| {
        let mut cfg = PlateConfig::new(g, NonlinearityKind::VonKarman, 1e-3, 0.0);
        cfg.f0 = InPlaneLoad::from_fn(&g, move |x, y| -0.5 * lam * (x * x + y * y));
        Ok(cfg)
    };
    let branch = continuation(make, &params, &Field::zeros(&g), Some(&guess)).unwrap();
    let norms = branch_norms(&branch, &g);
    assert_eq!(norms.len(), params.len());
    assert!(norms[..3].iter().all(|&n| n <= 1e-8), "{norms:?}");
    assert!(norms[3] > 1e-3);
    assert!(norms[3..].windows(2).all(|w| w[1] > w[0]), "{norms:?}");
    // below lambda_c the flat plate is stable, above it the buckled states are
    assert!(branch.points[..3].iter().all(|p| p.stable));
    assert!(branch.points[3..].iter().all(|p| p.stable));
}

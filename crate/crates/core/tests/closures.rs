use std::f64::consts::PI;

use panelflutter_core::aero::{
    aero_pressure, corrected_integral, AeroModel, Closure, HistoryBuffer,
};
use panelflutter_core::dynamics::PlateState;
use panelflutter_core::grid::inner_product;
use panelflutter_core::{Field, Grid};

fn l2(f: &Field, g: &Grid) -> f64 {
    inner_product(f, f, g).sqrt()
}

#[test]
fn delay_term_fades_with_mach() {
    // pressure gap between the delayed and the linear piston closure on the
    // same oscillating state, at U = 2 and U = 8
    let g = Grid::unit(11).unwrap();
    let shape = Field::from_fn(&g, |x, y| ((PI * x).sin() * (PI * y).sin()).powi(2) * (1.0 + x));
    let omega = 6.0;
    let at = |t: f64| shape.scaled((omega * t).cos());
    let t = 1.0;
    let gap = |mach: f64| {
        let delayed = AeroModel::new(
            Closure::DelayedPotential {
                n_theta: 32,
                t_star_override: None,
            },
            mach,
            Field::zeros(&g),
        )
        .unwrap();
        let piston = AeroModel::new(Closure::PistonLinear, mach, Field::zeros(&g)).unwrap();
        let window = delayed.delay_window(&g.domain).unwrap();
        let dt = 0.01;
        let h = HistoryBuffer::from_fn(&g, dt, window, t, &at).unwrap();
        let mut s = PlateState::zero(&g);
        s.t = t;
        s.u = at(t);
        s.ut = shape.scaled(-omega * (omega * t).sin());
        let pd = aero_pressure(&delayed, &s, &h, &g).unwrap();
        let pp = aero_pressure(&piston, &s, &h, &g).unwrap();
        l2(&(&pd - &pp), &g)
    };
    let (g2, g8) = (gap(2.0), gap(8.0));
    assert!(g8 < g2, "gap at U=8 {g8:e} not below U=2 {g2:e}");
}

#[test]
fn corrected_integral_converges_to_refined_quadrature() {
    // smooth clamped fields; the oracle integrates the exact integrand with
    // a trapezoid rule 8x finer in x
    let mach = 2.5;
    let ut = |x: f64, y: f64| ((PI * x).sin() * (PI * y).sin()).powi(2) * (1.0 + 0.4 * x);
    let ut_x = |x: f64, y: f64| {
        let s = (PI * y).sin().powi(2);
        s * (2.0 * PI * (PI * x).sin() * (PI * x).cos() * (1.0 + 0.4 * x)
            + 0.4 * (PI * x).sin().powi(2))
    };
    let utt = |x: f64, y: f64| (PI * x).sin().powi(2) * (2.0 * PI * y).sin() * (PI * y).sin();
    let err = |n: usize| {
        let g = Grid::unit(n).unwrap();
        let c = corrected_integral(&Field::from_fn(&g, ut), &Field::from_fn(&g, utt), mach, &g);
        let fine = 8 * (n + 1);
        let hf = 1.0 / fine as f64;
        let oracle = Field::from_fn(&g, |x, y| {
            let m = (x / hf).round() as usize;
            let integrand = |k: usize| {
                let xi = k as f64 * hf;
                utt(xi, y) + mach * ut_x(xi, y)
            };
            let mut acc = 0.0;
            for k in 0..m {
                acc += 0.5 * hf * (integrand(k) + integrand(k + 1));
            }
            acc / mach
        });
        (&c - &oracle).max_abs() / oracle.max_abs()
    };
    let (e1, e2) = (err(15), err(31));
    assert!(e1 / e2 >= 3.0, "relative errors {e1:e} {e2:e}");
    assert!(e2 <= 1e-2, "relative errors {e1:e} {e2:e}");
}

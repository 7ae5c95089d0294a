//! Time integration of the semi-discrete plate
//! `(1 - alpha D) u_tt + D^2 u + k u_t + f(u) = p(u, u_t, history)`.
//!
//! The default integrator is average-acceleration Newmark written in its
//! trapezoidal form. The linear stiffness, damping and mass are solved exactly
//! through one prefactorized banded matrix. The nonlinear force enters as its
//! Simpson average along the step, which is the exact average of a cubic force,
//! so the scheme conserves the discrete plate energy to solver tolerance.
//! Aerodynamic pressure enters as the trapezoidal average of its end values.

use crate::aero::{self, AeroModel, Closure, HistoryBuffer};
use crate::diagnostics::{self, EnergyReport};
use crate::error::{Error, Result};
use crate::grid::{biharmonic_apply, inner_product, laplacian, sample_extended, Field, Grid};
use crate::linalg::{assemble_banded, conjugate_gradient, BandedCholesky};
use crate::vonkarman::{InPlaneLoad, NonlinearEnergy, NonlinearityKind, RestoringForce};

pub const CFL_CONSTANT: f64 = 0.2;
pub const DEFAULT_FP_TOL: f64 = 1e-10;
pub const DEFAULT_FP_MAX_ITER: usize = 50;
pub const DEFAULT_BLOWUP_AMPLITUDE: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Newmark,
    Rk4,
}

#[derive(Debug, Clone)]
pub struct PlateConfig {
    pub grid: Grid,
    pub alpha: f64,
    pub k: f64,
    pub nonlinearity: NonlinearityKind,
    pub aero: AeroModel,
    pub f0: InPlaneLoad,
    pub dt: f64,
    pub t_end: f64,
    pub integrator: Integrator,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    /// Displacement amplitude treated as blow-up.
    pub blowup_amplitude: f64,
    /// Keep every `sample_every`-th state as a snapshot (0 keeps none).
    pub sample_every: usize,
    pub probes: Vec<(f64, f64)>,
}

impl PlateConfig {
    /// Linear-coefficient plate with aero off and no in-plane load.
    pub fn new(grid: Grid, nonlinearity: NonlinearityKind, dt: f64, t_end: f64) -> Self {
        Self {
            aero: AeroModel::off(&grid),
            f0: InPlaneLoad::zero(&grid),
            grid,
            alpha: 0.0,
            k: 0.0,
            nonlinearity,
            dt,
            t_end,
            integrator: Integrator::Newmark,
            fp_tol: DEFAULT_FP_TOL,
            fp_max_iter: DEFAULT_FP_MAX_ITER,
            blowup_amplitude: DEFAULT_BLOWUP_AMPLITUDE,
            sample_every: 0,
            probes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidParameter(format!("{what} = {v}")));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive, got dt", self.dt);
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be non-negative, got t_end", self.t_end);
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative, got alpha", self.alpha);
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return bad("k must be non-negative, got k", self.k);
        }
        if !(self.fp_tol > 0.0) || self.fp_max_iter == 0 {
            return Err(Error::InvalidParameter(
                "fixed-point tolerance and iteration cap must be positive".into(),
            ));
        }
        self.grid.check(&self.aero.p0)?;
        self.aero.validate()?;
        if self.integrator == Integrator::Rk4 {
            if matches!(self.aero.closure, Closure::DelayedPotential { .. }) {
                return Err(Error::InvalidParameter(
                    "rk4 supports the local closures only; use newmark for the delayed potential"
                        .into(),
                ));
            }
            let limit = rk4_dt_limit(&self.grid, self.alpha);
            if self.dt > limit {
                return Err(Error::CflViolation {
                    dt: self.dt,
                    limit,
                });
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Explicit bound `C h^2 / sqrt(1 + alpha)` for RK4.
pub fn rk4_dt_limit(g: &Grid, alpha: f64) -> f64 {
    let h = g.hx.min(g.hy);
    CFL_CONSTANT * h * h / (1.0 + alpha).sqrt()
}

/// Plate state with the quantities the stepper caches at acceptance.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateState {
    pub t: f64,
    pub u: Field,
    pub ut: Field,
    /// Acceleration consistent with the equation at `t`.
    pub utt: Field,
    /// Aerodynamic pressure at `t`.
    pub pressure: Field,
    /// Restoring force `f(u)` at `t`.
    pub force: Field,
    pub potential: NonlinearEnergy,
}

impl PlateState {
    pub fn zero(g: &Grid) -> Self {
        let z = Field::zeros(g);
        Self {
            t: 0.0,
            u: z.clone(),
            ut: z.clone(),
            utt: z.clone(),
            pressure: z.clone(),
            force: z,
            potential: NonlinearEnergy::default(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.ut.is_finite() && self.utt.is_finite()
    }
}

/// `(I - alpha D)a = rhs` by conjugate gradients.
pub fn mass_solve(alpha: f64, rhs: &Field, g: &Grid) -> Result<Field> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be non-negative, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(rhs.clone());
    }
    g.check(rhs)?;
    conjugate_gradient(g, |f| mass_apply(alpha, f, g), rhs, 1e-12, 10 * g.len())
}

pub fn mass_apply(alpha: f64, f: &Field, g: &Grid) -> Field {
    if alpha == 0.0 {
        return f.clone();
    }
    let mut out = f.clone();
    out.axpy(-alpha, &laplacian(f, g));
    out
}

/// Everything fixed for one configuration: factorizations and the force.
#[derive(Debug, Clone)]
pub struct PlateSystem {
    pub cfg: PlateConfig,
    pub force: RestoringForce,
    mass: Option<BandedCholesky>,
    newmark: BandedCholesky,
    delay_window: f64,
}

impl PlateSystem {
    pub fn new(cfg: PlateConfig) -> Result<Self> {
        cfg.validate()?;
        let g = cfg.grid;
        let force = RestoringForce::new(cfg.nonlinearity, &g, cfg.f0.clone())?;
        let bih = assemble_banded(&g, |f| biharmonic_apply(f, &g));
        let m = if cfg.alpha > 0.0 {
            Some(assemble_banded(&g, |f| mass_apply(cfg.alpha, f, &g)))
        } else {
            None
        };
        let mass = m.as_ref().map(BandedCholesky::factor).transpose()?;
        let (dt, k) = (cfg.dt, cfg.k);
        let mut s = bih.scaled(0.25 * dt * dt);
        match &m {
            Some(m) => s = s.add_scaled(1.0, m),
            None => s.add_diagonal(1.0),
        }
        s.add_diagonal(0.5 * dt * k);
        let newmark = BandedCholesky::factor(&s)?;
        let delay_window = cfg.aero.delay_window(&g.domain)?;
        Ok(Self {
            cfg,
            force,
            mass,
            newmark,
            delay_window,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.cfg.grid
    }

    pub fn delay_window(&self) -> f64 {
        self.delay_window
    }

    pub fn new_history(&self, state: &PlateState) -> Result<HistoryBuffer> {
        HistoryBuffer::new(self.grid(), self.cfg.dt, self.delay_window, state.t, &state.u)
    }

    fn mass_inverse(&self, rhs: &Field) -> Result<Field> {
        match &self.mass {
            None => Ok(rhs.clone()),
            Some(c) => Field::from_values(self.grid(), c.solve(rhs.values())),
        }
    }

    fn mass_times(&self, f: &Field) -> Field {
        mass_apply(self.cfg.alpha, f, self.grid())
    }

    /// `M^{-1}(p - D^2 u - k u_t - f)`.
    fn accel_from(&self, u: &Field, ut: &Field, p: &Field, f: &Field) -> Result<Field> {
        let g = self.grid();
        let mut rhs = p - &biharmonic_apply(u, g);
        rhs.axpy(-self.cfg.k, ut);
        rhs -= f;
        self.mass_inverse(&rhs)
    }

    /// Pressure for a local closure; `utt_lag` feeds the corrected piston.
    fn local_pressure(&self, u: &Field, ut: &Field, utt_lag: &Field) -> Result<Field> {
        let a = &self.cfg.aero;
        let g = self.grid();
        match a.closure {
            Closure::Off => Ok(a.p0.clone()),
            Closure::PistonLinear => Ok(aero::piston_linear(u, ut, a.mach, &a.p0, g)),
            Closure::PistonCubic { c1, c2, c3 } => {
                Ok(aero::piston_cubic(u, ut, a.mach, &a.p0, (c1, c2, c3), g))
            }
            Closure::LowFreqSupersonic => aero::piston_lowfreq(u, ut, a.mach, &a.p0, g),
            Closure::CorrectedPiston => aero::piston_corrected(u, ut, utt_lag, a.mach, &a.p0, g),
            Closure::DelayedPotential { .. } => Ok(aero::piston_linear(u, ut, a.mach, &a.p0, g)),
        }
    }

    pub fn is_delayed(&self) -> bool {
        matches!(self.cfg.aero.closure, Closure::DelayedPotential { .. })
    }

    fn quadrature(&self) -> Result<aero::DelayQuadrature> {
        match self.cfg.aero.closure {
            Closure::DelayedPotential { n_theta, .. } => aero::DelayQuadrature::new(n_theta),
            _ => Ok(aero::DelayQuadrature::default()),
        }
    }

    /// State at `t0` from initial displacement and velocity, with the
    /// derived acceleration, pressure and force filled in. The history is
    /// taken as the initial displacement held constant.
    pub fn initial_state(&self, t0: f64, u0: &Field, u1: &Field) -> Result<PlateState> {
        let g = self.grid();
        g.check(u0)?;
        g.check(u1)?;
        let (force, potential) = self.force.eval(u0)?;
        let zero = Field::zeros(g);
        let mut state = PlateState {
            t: t0,
            u: u0.clone(),
            ut: u1.clone(),
            utt: zero.clone(),
            pressure: zero,
            force,
            potential,
        };
        let history = self.new_history(&state)?;
        // the corrected piston needs an acceleration to start from; two passes
        // of the lagged evaluation settle it well enough for a start-up value
        let passes = if self.cfg.aero.closure == Closure::CorrectedPiston { 2 } else { 1 };
        for _ in 0..passes {
            state.pressure = aero::aero_pressure(&self.cfg.aero, &state, &history, g)?;
            state.utt = self.accel_from(u0, u1, &state.pressure, &state.force)?;
        }
        Ok(state)
    }

    /// Acceleration recomputed from scratch (no cached quantities used
    /// except `utt` as the lagged acceleration of the corrected piston).
    pub fn acceleration(&self, state: &PlateState, history: &HistoryBuffer) -> Result<Field> {
        let p = aero::aero_pressure(&self.cfg.aero, state, history, self.grid())?;
        let f = self.force.force(&state.u)?;
        self.accel_from(&state.u, &state.ut, &p, &f)
    }

    pub fn step(&self, state: &PlateState, history: &mut HistoryBuffer) -> Result<PlateState> {
        match self.cfg.integrator {
            Integrator::Newmark => self.step_newmark(state, history),
            Integrator::Rk4 => self.step_rk4(state, history),
        }
    }

    /// One average-acceleration step; pushes the new displacement to history.
    pub fn step_newmark(&self, s: &PlateState, history: &mut HistoryBuffer) -> Result<PlateState> {
        let g = *self.grid();
        let (dt, k) = (self.cfg.dt, self.cfg.k);
        let t1 = s.t + dt;
        let bu = biharmonic_apply(&s.u, &g);
        let but = biharmonic_apply(&s.ut, &g);
        let mut base = self.mass_times(&s.ut);
        base.axpy(-dt, &bu);
        base.axpy(-0.25 * dt * dt, &but);
        base.axpy(-0.5 * dt * k, &s.ut);

        // history part of q^u at t1 is fixed while iterating
        let (delay_hist, quad_w) = if self.is_delayed() {
            let quad = self.quadrature()?;
            let h = aero::delay_sum(history, &quad, self.cfg.aero.mach, self.delay_window, 1)?;
            (Some(h), aero::current_slice_weight(dt))
        } else {
            (None, 0.0)
        };

        let new_u = |w: &Field| {
            let mut u1 = s.u.clone();
            u1.axpy(0.5 * dt, &s.ut);
            u1.axpy(0.5 * dt, w);
            u1
        };
        let pressure_at = |u1: &Field, w: &Field| -> Result<Field> {
            let mut p = self.local_pressure(u1, w, &s.utt)?;
            if let Some(h) = &delay_hist {
                p -= h;
                p.axpy(-quad_w, &laplacian(u1, &g));
            }
            Ok(p)
        };
        let linear = matches!(self.cfg.nonlinearity, NonlinearityKind::None);

        let mut w = s.ut.clone();
        w.axpy(dt, &s.utt);
        let mut iterations = 0;
        loop {
            iterations += 1;
            let u1 = new_u(&w);
            let mut gavg = Field::zeros(&g);
            if !linear {
                let mid = (&s.u + &u1).scaled(0.5);
                gavg = s.force.clone();
                gavg.axpy(4.0, &self.force.force(&mid)?);
                gavg += &self.force.force(&u1)?;
                gavg = gavg.scaled(1.0 / 6.0);
            }
            let p1 = pressure_at(&u1, &w)?;
            let mut rhs = base.clone();
            rhs.axpy(0.5 * dt, &s.pressure);
            rhs.axpy(0.5 * dt, &p1);
            rhs.axpy(-dt, &gavg);
            let w_new = Field::from_values(&g, self.newmark.solve(rhs.values()))?;
            let inc = (&w_new - &w).max_abs();
            let scale = w_new.max_abs().max(s.ut.max_abs());
            w = w_new;
            if !w.is_finite() {
                return Err(Error::FixedPointDiverged {
                    t: t1,
                    iterations,
                    increment: f64::NAN,
                });
            }
            if inc <= self.cfg.fp_tol * scale || inc == 0.0 {
                break;
            }
            if iterations >= self.cfg.fp_max_iter {
                return Err(Error::FixedPointDiverged {
                    t: t1,
                    iterations,
                    increment: inc / scale.max(f64::MIN_POSITIVE),
                });
            }
        }
        let u1 = new_u(&w);
        let (force, potential) = self.force.eval(&u1)?;
        let pressure = pressure_at(&u1, &w)?;
        let utt = self.accel_from(&u1, &w, &pressure, &force)?;
        history.push(t1, u1.clone())?;
        Ok(PlateState {
            t: t1,
            u: u1,
            ut: w,
            utt,
            pressure,
            force,
            potential,
        })
    }

    /// Classical RK4 on `(u, u_t)`; the corrected piston uses the acceleration
    /// of the step start as its lagged value.
    pub fn step_rk4(&self, s: &PlateState, history: &mut HistoryBuffer) -> Result<PlateState> {
        if self.is_delayed() {
            return Err(Error::InvalidParameter(
                "rk4 supports the local closures only".into(),
            ));
        }
        let dt = self.cfg.dt;
        let rhs = |u: &Field, ut: &Field| -> Result<(Field, Field)> {
            let p = self.local_pressure(u, ut, &s.utt)?;
            let f = self.force.force(u)?;
            Ok((ut.clone(), self.accel_from(u, ut, &p, &f)?))
        };
        let shift = |x: &Field, a: f64, d: &Field| {
            let mut y = x.clone();
            y.axpy(a, d);
            y
        };
        let (k1u, k1v) = (s.ut.clone(), s.utt.clone());
        let (k2u, k2v) = rhs(&shift(&s.u, 0.5 * dt, &k1u), &shift(&s.ut, 0.5 * dt, &k1v))?;
        let (k3u, k3v) = rhs(&shift(&s.u, 0.5 * dt, &k2u), &shift(&s.ut, 0.5 * dt, &k2v))?;
        let (k4u, k4v) = rhs(&shift(&s.u, dt, &k3u), &shift(&s.ut, dt, &k3v))?;
        let combine = |x: &Field, a: &Field, b: &Field, c: &Field, d: &Field| {
            let mut y = x.clone();
            y.axpy(dt / 6.0, a);
            y.axpy(dt / 3.0, b);
            y.axpy(dt / 3.0, c);
            y.axpy(dt / 6.0, d);
            y
        };
        let u1 = combine(&s.u, &k1u, &k2u, &k3u, &k4u);
        let ut1 = combine(&s.ut, &k1v, &k2v, &k3v, &k4v);
        let (force, potential) = self.force.eval(&u1)?;
        let pressure = self.local_pressure(&u1, &ut1, &s.utt)?;
        let utt = self.accel_from(&u1, &ut1, &pressure, &force)?;
        let t1 = s.t + dt;
        history.push(t1, u1.clone())?;
        Ok(PlateState {
            t: t1,
            u: u1,
            ut: ut1,
            utt,
            pressure,
            force,
            potential,
        })
    }
}

/// Scalars recorded after every accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub energy: EnergyReport,
    /// `||u_t||^2`
    pub ut_sq: f64,
    /// `<p - p0, u_t>`, the aerodynamic power into the plate.
    pub aero_power: f64,
    pub norm_ut: f64,
    pub norm_lap_u: f64,
    pub max_u: f64,
    /// `||q^u||` for the delayed closure, zero otherwise.
    pub delay_norm: f64,
    pub probes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlowUpReason {
    NonFinite,
    Amplitude(f64),
    FixedPoint(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowUp {
    pub t: f64,
    pub reason: BlowUpReason,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<PlateState>,
    pub final_state: PlateState,
    pub blowup: Option<BlowUp>,
    /// Whether history older than the start was filled by the warm-up rule.
    pub warmup_used: bool,
    pub dt: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn norm_ut(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.norm_ut).collect()
    }
}

/// Records the scalars of one state.
pub fn record_state(sys: &PlateSystem, s: &PlateState) -> StepRecord {
    let g = sys.grid();
    let energy = diagnostics::energy_of(sys, s);
    let ut_sq = inner_product(&s.ut, &s.ut, g);
    let dp = &s.pressure - &sys.cfg.aero.p0;
    let lap = laplacian(&s.u, g);
    let delay_norm = if sys.is_delayed() {
        let a = &sys.cfg.aero;
        let q = &aero::piston_linear(&s.u, &s.ut, a.mach, &a.p0, g) - &s.pressure;
        q.norm(g)
    } else {
        0.0
    };
    StepRecord {
        t: s.t,
        energy,
        ut_sq,
        aero_power: inner_product(&dp, &s.ut, g),
        norm_ut: ut_sq.sqrt(),
        norm_lap_u: inner_product(&lap, &lap, g).sqrt(),
        max_u: s.u.max_abs(),
        delay_norm,
        probes: sys
            .cfg
            .probes
            .iter()
            .map(|&(x, y)| sample_extended(&s.u, g, x, y))
            .collect(),
    }
}

/// Runs the configured time loop from `(u0, u1)` at `t = 0`.
pub fn simulate(cfg: &PlateConfig, u0: &Field, u1: &Field) -> Result<Trajectory> {
    let sys = PlateSystem::new(cfg.clone())?;
    simulate_system(&sys, u0, u1)
}

pub fn simulate_system(sys: &PlateSystem, u0: &Field, u1: &Field) -> Result<Trajectory> {
    if !(u0.is_finite() && u1.is_finite()) {
        return Err(Error::InvalidParameter("initial data must be finite".into()));
    }
    let cfg = &sys.cfg;
    let state = sys.initial_state(0.0, u0, u1)?;
    let mut history = sys.new_history(&state)?;
    let steps = cfg.steps();
    let warmup_used = sys.delay_window() > 0.0 && steps > 0;
    let mut records = vec![record_state(sys, &state)];
    let mut snapshots = Vec::new();
    if cfg.sample_every > 0 {
        snapshots.push(state.clone());
    }
    let mut current = state;
    let mut blowup = None;
    for n in 1..=steps {
        let next = match sys.step(&current, &mut history) {
            Ok(s) => s,
            Err(e @ Error::FixedPointDiverged { .. }) => {
                blowup = Some(BlowUp {
                    t: current.t + cfg.dt,
                    reason: BlowUpReason::FixedPoint(e),
                });
                break;
            }
            Err(e) => return Err(e),
        };
        if !next.is_finite() {
            blowup = Some(BlowUp {
                t: next.t,
                reason: BlowUpReason::NonFinite,
            });
            break;
        }
        let amp = next.u.max_abs();
        let rec = record_state(sys, &next);
        records.push(rec);
        if cfg.sample_every > 0 && n % cfg.sample_every == 0 {
            snapshots.push(next.clone());
        }
        current = next;
        if amp > cfg.blowup_amplitude {
            blowup = Some(BlowUp {
                t: current.t,
                reason: BlowUpReason::Amplitude(amp),
            });
            break;
        }
    }
    Ok(Trajectory {
        records,
        snapshots,
        final_state: current,
        blowup,
        warmup_used,
        dt: cfg.dt,
    })
}

/// Trend of `||u_t||` after the transient: compares the peak over the last
/// third of the record with the peak over the middle third.
pub fn growth_ratio(norm_ut: &[f64]) -> f64 {
    let n = norm_ut.len();
    if n < 3 {
        return f64::NAN;
    }
    let peak = |a: &[f64]| a.iter().cloned().fold(0.0, f64::max);
    let mid = peak(&norm_ut[n / 3..2 * n / 3]);
    let last = peak(&norm_ut[2 * n / 3..]);
    if mid == 0.0 {
        if last == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        last / mid
    }
}

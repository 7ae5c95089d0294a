//! Aerodynamic pressure closures.
//!
//! Piston-theory family (linear, cubic, low-frequency supersonic, the
//! inverse-Mach corrected form) and the exact reduction of linear potential
//! flow to a delayed forcing `q^u(t)` that integrates past plate curvature
//! along backward flow characteristics.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rayon::prelude::*;

use crate::dynamics::PlateState;
use crate::error::{Error, Result};
use crate::grid::{d_x, d_xx, d_xy, d_yy, Domain, Field, Grid};

/// Distance from `U = 1` below which the sonic limit is considered degenerate.
pub const EPS_MACH: f64 = 1e-3;
pub const DEFAULT_N_THETA: usize = 32;
pub const DEFAULT_CUBIC: (f64, f64, f64) = (1.0, 0.0, 0.1);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Closure {
    /// `p0 - (u_t + U u_x)`
    PistonLinear,
    /// `p0 - (c1 w + c2 w^2 + c3 w^3)`, `w = u_t + U u_x`
    PistonCubic { c1: f64, c2: f64, c3: f64 },
    /// Low-frequency supersonic piston; negative damping for `1 < U < sqrt 2`.
    LowFreqSupersonic,
    /// Piston theory with the first inverse-Mach correction.
    CorrectedPiston,
    /// `p0 - (u_t + U u_x) - q^u(t)`
    DelayedPotential {
        n_theta: usize,
        t_star_override: Option<f64>,
    },
    Off,
}

impl Closure {
    pub fn name(&self) -> &'static str {
        match self {
            Closure::PistonLinear => "piston_linear",
            Closure::PistonCubic { .. } => "piston_cubic",
            Closure::LowFreqSupersonic => "piston_lowfreq",
            Closure::CorrectedPiston => "piston_corrected",
            Closure::DelayedPotential { .. } => "delayed_potential",
            Closure::Off => "off",
        }
    }
}

/// Closure, Mach number and static pressure.
#[derive(Debug, Clone)]
pub struct AeroModel {
    pub closure: Closure,
    pub mach: f64,
    pub p0: Field,
}

impl AeroModel {
    pub fn new(closure: Closure, mach: f64, p0: Field) -> Result<Self> {
        let m = Self { closure, mach, p0 };
        m.validate()?;
        Ok(m)
    }

    pub fn off(g: &Grid) -> Self {
        Self {
            closure: Closure::Off,
            mach: 0.0,
            p0: Field::zeros(g),
        }
    }

    pub fn with_mach(&self, mach: f64) -> Result<Self> {
        Self::new(self.closure, mach, self.p0.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let u = self.mach;
        if !(u >= 0.0 && u.is_finite()) {
            return Err(Error::InvalidMach {
                mach: u,
                model: self.closure.name(),
                reason: "Mach number must be finite and non-negative",
            });
        }
        match self.closure {
            Closure::LowFreqSupersonic if u <= 1.0 + EPS_MACH => Err(Error::InvalidMach {
                mach: u,
                model: self.closure.name(),
                reason: "requires supersonic flow U > 1",
            }),
            Closure::CorrectedPiston if u <= EPS_MACH => Err(Error::InvalidMach {
                mach: u,
                model: self.closure.name(),
                reason: "the 1/U correction needs U > 0",
            }),
            Closure::DelayedPotential {
                n_theta,
                t_star_override,
            } => {
                DelayQuadrature::new(n_theta)?;
                if let Some(ts) = t_star_override {
                    if !(ts > 0.0 && ts.is_finite()) {
                        return Err(Error::InvalidParameter(format!(
                            "t_star override must be positive, got {ts}"
                        )));
                    }
                } else if (u - 1.0).abs() <= EPS_MACH {
                    return Err(Error::DegenerateMach(u));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Memory length of the closure; zero for the local piston closures.
    pub fn delay_window(&self, d: &Domain) -> Result<f64> {
        match self.closure {
            Closure::DelayedPotential {
                t_star_override: Some(ts),
                ..
            } => Ok(ts),
            Closure::DelayedPotential { .. } => t_star(self.mach, d),
            _ => Ok(0.0),
        }
    }

    /// Linear part `p - p0 = -a u_t - b d_x u` for closures that are local
    /// and first order; `None` for the corrected piston and the delay.
    pub fn local_linear_coefficients(&self) -> Option<(f64, f64)> {
        let u = self.mach;
        match self.closure {
            Closure::PistonLinear => Some((1.0, u)),
            Closure::PistonCubic { c1, .. } => Some((c1, c1 * u)),
            Closure::LowFreqSupersonic => {
                let (a, b) = lowfreq_coefficients(u);
                Some((a, b))
            }
            Closure::Off => Some((0.0, 0.0)),
            Closure::CorrectedPiston | Closure::DelayedPotential { .. } => None,
        }
    }
}

/// Delay horizon `diam / |U - 1|`: the slowest backward characteristic moves
/// at speed `min_theta sqrt(U^2 + 2 U sin(theta) + 1) = |U - 1|`.
pub fn t_star(mach: f64, d: &Domain) -> Result<f64> {
    let gap = (mach - 1.0).abs();
    if !(gap > EPS_MACH) {
        return Err(Error::DegenerateMach(mach));
    }
    Ok(d.diameter() / gap)
}

/// One stored displacement with its curvatures.
#[derive(Debug, Clone)]
pub struct HistorySlice {
    pub t: f64,
    pub u: Field,
    pub dxx: Field,
    pub dyy: Field,
    pub dxy: Field,
}

impl HistorySlice {
    pub fn new(t: f64, u: Field, g: &Grid) -> Self {
        Self {
            t,
            dxx: d_xx(&u, g),
            dyy: d_yy(&u, g),
            dxy: d_xy(&u, g),
            u,
        }
    }
}

/// Ring of displacement slices at uniform spacing `dt`, newest last.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    grid: Grid,
    dt: f64,
    capacity: usize,
    slices: VecDeque<HistorySlice>,
    warmup: bool,
    dropped: bool,
}

impl HistoryBuffer {
    /// Buffer holding `ceil(window / dt) + 2` slices, seeded with `(t0, u0)`.
    pub fn new(grid: &Grid, dt: f64, window: f64, t0: f64, u0: &Field) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if !(window >= 0.0 && window.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "history window must be finite and non-negative, got {window}"
            )));
        }
        grid.check(u0)?;
        let capacity = (window / dt).ceil() as usize + 2;
        let mut slices = VecDeque::with_capacity(capacity);
        slices.push_back(HistorySlice::new(t0, u0.clone(), grid));
        Ok(Self {
            grid: *grid,
            dt,
            capacity,
            slices,
            warmup: true,
            dropped: false,
        })
    }

    /// Full buffer sampled from `u_of_t` at `t_now - k dt`.
    pub fn from_fn(
        grid: &Grid,
        dt: f64,
        window: f64,
        t_now: f64,
        u_of_t: impl Fn(f64) -> Field,
    ) -> Result<Self> {
        let cap = (window / dt).ceil() as usize + 2;
        let t0 = t_now - (cap - 1) as f64 * dt;
        let mut h = Self::new(grid, dt, window, t0, &u_of_t(t0))?;
        for k in 1..cap {
            let t = t0 + k as f64 * dt;
            h.push(t, u_of_t(t))?;
        }
        Ok(h)
    }

    /// Disables the warm-up rule: requests older than the first slice fail.
    pub fn set_warmup(&mut self, enabled: bool) {
        self.warmup = enabled;
    }

    pub fn warmup_enabled(&self) -> bool {
        self.warmup
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn latest(&self) -> &HistorySlice {
        self.slices.back().expect("history is never empty")
    }

    /// Whether the stored slices already span `window`.
    pub fn covers(&self, window: f64) -> bool {
        self.dropped || (self.slices.len() - 1) as f64 * self.dt >= window - 1e-12 * window
    }

    pub fn push(&mut self, t: f64, u: Field) -> Result<()> {
        self.grid.check(&u)?;
        let expected = self.latest().t + self.dt;
        if (t - expected).abs() > 1e-6 * self.dt {
            return Err(Error::InvalidParameter(format!(
                "history slices must be uniformly spaced: expected t = {expected}, got {t}"
            )));
        }
        if self.slices.len() == self.capacity {
            self.slices.pop_front();
            self.dropped = true;
        }
        self.slices.push_back(HistorySlice::new(t, u, &self.grid));
        Ok(())
    }

    /// Slice `m` steps back from the newest. Before warm-up the oldest slice
    /// (the initial displacement) stands in for anything older.
    pub fn back(&self, m: usize) -> Result<&HistorySlice> {
        let n = self.slices.len();
        if m < n {
            return Ok(&self.slices[n - 1 - m]);
        }
        if self.warmup && !self.dropped {
            return Ok(&self.slices[0]);
        }
        Err(Error::InsufficientHistory {
            needed: m + 1,
            available: n,
        })
    }
}

/// Periodic trapezoid nodes in theta; the s nodes are the history slices.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayQuadrature {
    n_theta: usize,
    sin: Vec<f64>,
    cos: Vec<f64>,
}

impl DelayQuadrature {
    pub fn new(n_theta: usize) -> Result<Self> {
        if n_theta < 8 || n_theta % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "n_theta must be even and at least 8, got {n_theta}"
            )));
        }
        let (sin, cos) = (0..n_theta)
            .map(|k| (2.0 * PI * k as f64 / n_theta as f64).sin_cos())
            .unzip();
        Ok(Self { n_theta, sin, cos })
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }
}

impl Default for DelayQuadrature {
    fn default() -> Self {
        Self::new(DEFAULT_N_THETA).expect("default quadrature is valid")
    }
}

/// Bilinear sample of `a uxx + b uxy + c uyy` with extension by zero.
#[inline]
fn sample_curvature(sl: &HistorySlice, g: &Grid, x: f64, y: f64, w: [f64; 3]) -> f64 {
    let sx = x / g.hx;
    let sy = y / g.hy;
    let kx = (sx.floor() as usize).min(g.nx);
    let ky = (sy.floor() as usize).min(g.ny);
    let tx = sx - kx as f64;
    let ty = sy - ky as f64;
    let node = |kx: usize, ky: usize| -> f64 {
        if kx == 0 || ky == 0 || kx > g.nx || ky > g.ny {
            0.0
        } else {
            let k = (ky - 1) * g.nx + (kx - 1);
            w[0] * sl.dxx.values()[k] + w[1] * sl.dxy.values()[k] + w[2] * sl.dyy.values()[k]
        }
    };
    (1.0 - ty) * ((1.0 - tx) * node(kx, ky) + tx * node(kx + 1, ky))
        + ty * ((1.0 - tx) * node(kx, ky + 1) + tx * node(kx + 1, ky + 1))
}

/// Delayed potential at `latest.t + lead * dt`, summing only the s-nodes that
/// are already stored (`m >= lead`); the caller supplies the missing ones.
pub fn delay_sum(
    h: &HistoryBuffer,
    q: &DelayQuadrature,
    mach: f64,
    t_star: f64,
    lead: usize,
) -> Result<Field> {
    let g = *h.grid();
    let dt = h.dt();
    let n_s = (t_star / dt).ceil().max(1.0) as usize;
    let slices: Vec<&HistorySlice> = (lead..=n_s)
        .map(|m| h.back(m - lead))
        .collect::<Result<_>>()?;
    let (lx, ly) = (g.domain.lx, g.domain.ly);
    let norm = 1.0 / q.n_theta as f64; // (1/2pi) * periodic weight 2pi/n
    let values: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|k| {
            let x = g.x(k % g.nx);
            let y = g.y(k / g.nx);
            let mut acc = 0.0;
            for (&st, &ct) in q.sin.iter().zip(&q.cos) {
                let w = [st * st, 2.0 * st * ct, ct * ct];
                let (vx, vy) = (mach + st, ct);
                let mut sum = 0.0;
                for (off, sl) in slices.iter().enumerate() {
                    let m = lead + off;
                    let s = m as f64 * dt;
                    let (px, py) = (x - vx * s, y - vy * s);
                    // characteristics are straight lines; once outside the
                    // convex domain they never return
                    if !(px > 0.0 && px < lx && py > 0.0 && py < ly) {
                        break;
                    }
                    let ws = if m == 0 || m == n_s { 0.5 * dt } else { dt };
                    sum += ws * sample_curvature(sl, &g, px, py, w);
                }
                acc += sum;
            }
            acc * norm
        })
        .collect();
    Field::from_values(&g, values)
}

/// `q^u(t)` for `t` equal to the newest slice time.
pub fn delay_potential(
    h: &HistoryBuffer,
    q: &DelayQuadrature,
    mach: f64,
    t: f64,
    g: &Grid,
) -> Result<Field> {
    g.check(&h.latest().u)?;
    if (t - h.latest().t).abs() > 1e-6 * h.dt() {
        return Err(Error::InvalidParameter(format!(
            "delay potential requested at t = {t} but newest history slice is at t = {}",
            h.latest().t
        )));
    }
    let ts = t_star(mach, &g.domain)?;
    delay_sum(h, q, mach, ts, 0)
}

/// Weight of the current (`s = 0`) slice: its contribution is
/// `current_weight(dt) * laplacian(u)` since the theta average of `M_theta^2`
/// at a node is half the Laplacian.
pub fn current_slice_weight(dt: f64) -> f64 {
    0.25 * dt
}

pub fn piston_linear(u: &Field, ut: &Field, mach: f64, p0: &Field, g: &Grid) -> Field {
    let mut p = p0 - ut;
    p.axpy(-mach, &d_x(u, g));
    p
}

/// `(ut coefficient, u_x coefficient)` of the low-frequency closure.
pub fn lowfreq_coefficients(mach: f64) -> (f64, f64) {
    let u2 = mach * mach;
    let pre = mach / (u2 - 1.0).sqrt();
    (pre * (u2 - 2.0) / (u2 - 1.0), pre * mach)
}

pub fn piston_lowfreq(u: &Field, ut: &Field, mach: f64, p0: &Field, g: &Grid) -> Result<Field> {
    if !(mach > 1.0 + EPS_MACH) {
        return Err(Error::InvalidMach {
            mach,
            model: "piston_lowfreq",
            reason: "requires supersonic flow U > 1",
        });
    }
    let (a, b) = lowfreq_coefficients(mach);
    let mut p = p0.clone();
    p.axpy(-a, ut);
    p.axpy(-b, &d_x(u, g));
    Ok(p)
}

pub fn piston_cubic(
    u: &Field,
    ut: &Field,
    mach: f64,
    p0: &Field,
    c: (f64, f64, f64),
    g: &Grid,
) -> Field {
    let mut w = ut.clone();
    w.axpy(mach, &d_x(u, g));
    let (c1, c2, c3) = c;
    p0.zip_map(&w, |p, w| p - w * (c1 + w * (c2 + w * c3)))
}

/// Cumulative trapezoid of `f` in x from the `x = 0` edge along each row. The
/// edge value is linearly extrapolated from the first two interior nodes, so
/// the rule is exact for integrands affine in x.
pub fn cumulative_x(f: &Field, g: &Grid) -> Field {
    let mut out = Field::zeros(g);
    for j in 0..g.ny {
        let f0 = f.get(0, j);
        let edge = 2.0 * f0 - f.get(1, j);
        let mut acc = 0.5 * g.hx * (edge + f0);
        out.set(0, j, acc);
        for i in 1..g.nx {
            acc += 0.5 * g.hx * (f.get(i - 1, j) + f.get(i, j));
            out.set(i, j, acc);
        }
    }
    out
}

/// Correction term `(1/U) int_0^x (u_tt + U u_tx) dxi`.
pub fn corrected_integral(ut: &Field, utt: &Field, mach: f64, g: &Grid) -> Field {
    let mut integrand = utt.clone();
    integrand.axpy(mach, &d_x(ut, g));
    cumulative_x(&integrand, g).scaled(1.0 / mach)
}

pub fn piston_corrected(
    u: &Field,
    ut: &Field,
    utt_lag: &Field,
    mach: f64,
    p0: &Field,
    g: &Grid,
) -> Result<Field> {
    if !(mach > EPS_MACH) {
        return Err(Error::InvalidMach {
            mach,
            model: "piston_corrected",
            reason: "the 1/U correction needs U > 0",
        });
    }
    let mut p = piston_linear(u, ut, mach, p0, g);
    p += &corrected_integral(ut, utt_lag, mach, g);
    Ok(p)
}

/// Pressure on the plate for the given state. For the delayed closure the
/// newest history slice must be the state's displacement.
pub fn aero_pressure(
    model: &AeroModel,
    state: &PlateState,
    history: &HistoryBuffer,
    g: &Grid,
) -> Result<Field> {
    let (u, ut, mach, p0) = (&state.u, &state.ut, model.mach, &model.p0);
    match model.closure {
        Closure::Off => Ok(p0.clone()),
        Closure::PistonLinear => Ok(piston_linear(u, ut, mach, p0, g)),
        Closure::PistonCubic { c1, c2, c3 } => Ok(piston_cubic(u, ut, mach, p0, (c1, c2, c3), g)),
        Closure::LowFreqSupersonic => piston_lowfreq(u, ut, mach, p0, g),
        Closure::CorrectedPiston => piston_corrected(u, ut, &state.utt, mach, p0, g),
        Closure::DelayedPotential { n_theta, .. } => {
            model.validate()?;
            let quad = DelayQuadrature::new(n_theta)?;
            let ts = model.delay_window(&g.domain)?;
            if (state.t - history.latest().t).abs() > 1e-6 * history.dt() {
                return Err(Error::InvalidParameter(format!(
                    "state at t = {} does not match newest history slice t = {}",
                    state.t,
                    history.latest().t
                )));
            }
            let qu = delay_sum(history, &quad, mach, ts, 0)?;
            let mut p = piston_linear(u, ut, mach, p0, g);
            p -= &qu;
            Ok(p)
        }
    }
}

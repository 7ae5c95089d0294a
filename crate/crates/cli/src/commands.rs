//! Subcommand implementations. Each returns the process exit code on
//! success; configuration and argument errors come back as `Err` (exit 1).

use std::path::PathBuf;

use panelflutter_core::analysis::{self, continuation, linearize, spectrum};
use panelflutter_core::diagnostics::{
    aero_work, annotate_budget, dissipation_integral, qu_bound_replay,
};
use panelflutter_core::dynamics::{growth_ratio, simulate_system, BlowUpReason, PlateSystem, Trajectory};
use panelflutter_core::grid::inner_product;
use panelflutter_core::{Field, Grid};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{shape_field, ConfigError, LoadPreset, RunConfig, Shape};
use crate::output::{self, Table};
use crate::Common;

type CmdResult = Result<u8, ConfigError>;

const HALF_FACTOR_NOTE: &str = "in-plane load energy is -1/2 <F0,[u,u]>; the plate energy as usually displayed omits the 1/2, which would not close the energy budget";
const WARMUP_NOTE: &str = "delay history before t = 0 is the initial displacement held constant; output before t = t* depends on this warm-up rule";

fn io_err(path: &std::path::Path) -> impl Fn(std::io::Error) -> ConfigError + '_ {
    move |e| ConfigError(format!("cannot write {}: {e}", path.display()))
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
}

fn prepare(c: &Common) -> Result<Run, ConfigError> {
    let cfg = RunConfig::load(&c.config)?;
    let out = c
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    Ok(Run { cfg, out })
}

fn echo(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn classification(traj: &Trajectory) -> (&'static str, f64) {
    let ratio = growth_ratio(&traj.norm_ut());
    let label = if traj.blowup.is_some() {
        "blow_up"
    } else if ratio > 1.0 {
        "growing"
    } else {
        "decaying"
    };
    (label, ratio)
}

fn blowup_json(traj: &Trajectory) -> Value {
    match &traj.blowup {
        None => Value::Null,
        Some(b) => {
            let reason = match &b.reason {
                BlowUpReason::NonFinite => "non-finite state".to_string(),
                BlowUpReason::Amplitude(a) => format!("amplitude {a:e} above threshold"),
                BlowUpReason::FixedPoint(e) => e.to_string(),
            };
            json!({"t": b.t, "reason": reason})
        }
    }
}

fn final_json(traj: &Trajectory, g: &Grid) -> Value {
    let s = &traj.final_state;
    let r = traj.records.last().expect("trajectory has its initial record");
    json!({
        "t": s.t,
        "norm_u": inner_product(&s.u, &s.u, g).sqrt(),
        "norm_ut": r.norm_ut,
        "norm_lap_u": r.norm_lap_u,
        "max_u": r.max_u,
        "energy": r.energy.total,
        "budget_residual": r.energy.budget_residual,
    })
}

/// Runs the configured simulation and writes timeseries and snapshots.
fn run_simulation(run: &Run) -> Result<(PlateSystem, Trajectory), ConfigError> {
    let sys = PlateSystem::new(run.cfg.plate_config()?)?;
    let (u0, u1) = run.cfg.initial_fields()?;
    let mut traj = simulate_system(&sys, &u0, &u1)?;
    annotate_budget(&mut traj, sys.cfg.k);
    let g = *sys.grid();
    let table = output::timeseries(&traj.records, sys.cfg.sample_every);
    let path = run.out.join("timeseries.csv");
    table.write(&path).map_err(io_err(&path))?;
    output::write_snapshots(&run.out, &traj, &g).map_err(io_err(&run.out))?;
    Ok((sys, traj))
}

fn simulation_summary(run: &Run, sys: &PlateSystem, traj: &Trajectory, command: &str) -> Value {
    let (label, ratio) = classification(traj);
    let mut warnings = vec![HALF_FACTOR_NOTE];
    if traj.warmup_used {
        warnings.push(WARMUP_NOTE);
    }
    let t_star = if sys.is_delayed() {
        json!(sys.delay_window())
    } else {
        Value::Null
    };
    json!({
        "command": command,
        "config": echo(&run.cfg),
        "t_star": t_star,
        "steps": traj.records.len() - 1,
        "classification": label,
        "growth_ratio": if ratio.is_finite() { json!(ratio) } else { Value::Null },
        "final": final_json(traj, sys.grid()),
        "blowup": blowup_json(traj),
        "warnings": warnings,
    })
}

fn write_summary(run: &Run, v: &Value) -> Result<(), ConfigError> {
    let path = run.out.join("summary.json");
    output::write_json(&path, v).map_err(io_err(&path))
}

pub fn simulate(c: &Common) -> CmdResult {
    let run = prepare(c)?;
    let (sys, traj) = run_simulation(&run)?;
    write_summary(&run, &simulation_summary(&run, &sys, &traj, "simulate"))?;
    if let Some(b) = &traj.blowup {
        eprintln!("blow-up at t = {}", b.t);
        return Ok(2);
    }
    Ok(0)
}

pub fn energy_audit(c: &Common) -> CmdResult {
    let run = prepare(c)?;
    let (sys, traj) = run_simulation(&run)?;
    let mut summary = simulation_summary(&run, &sys, &traj, "energy-audit");
    let e0 = traj.records[0].energy.total;
    let max_res = traj
        .records
        .iter()
        .map(|r| r.energy.budget_residual.abs())
        .fold(0.0, f64::max);
    let max_drift = traj
        .records
        .iter()
        .map(|r| (r.energy.total - e0).abs())
        .fold(0.0, f64::max);
    let diss = dissipation_integral(&traj);
    summary["audit"] = json!({
        "initial_energy": e0,
        "max_abs_budget_residual": max_res,
        "max_abs_energy_drift": max_drift,
        "aero_work": aero_work(&traj).last().copied().unwrap_or(0.0),
        "dissipation_integral": diss.running.last().copied().unwrap_or(0.0),
        "dissipation_final_increment": diss.final_increment,
    });
    write_summary(&run, &summary)?;
    Ok(if traj.blowup.is_some() { 2 } else { 0 })
}

pub fn eigen(c: &Common, count: Option<usize>) -> CmdResult {
    let run = prepare(c)?;
    let cfg = run.cfg.plate_config()?;
    let l = linearize(&cfg)?;
    let m = count.unwrap_or(l.dim()).min(l.dim());
    let eigs = spectrum(&l, m)?;
    let mut t = Table::new(&["re", "im"]);
    for z in &eigs {
        t.row(&[z.re, z.im]);
    }
    let path = run.out.join("eigs.csv");
    t.write(&path).map_err(io_err(&path))?;
    let max_re = eigs.first().map_or(f64::NAN, |z| z.re);
    write_summary(
        &run,
        &json!({
            "command": "eigen",
            "config": echo(&run.cfg),
            "dimension": l.dim(),
            "max_re": max_re,
            "stable": max_re <= analysis::NEUTRAL_TOL * l.norm_inf(),
            "warnings": [HALF_FACTOR_NOTE],
        }),
    )?;
    Ok(0)
}

pub fn flutter_sweep(c: &Common, umin: f64, umax: f64, tol: f64, points: usize) -> CmdResult {
    let run = prepare(c)?;
    let cfg = run.cfg.plate_config()?;
    let uc = analysis::flutter_point(&cfg, umin, umax, tol)?;
    let n = points.max(2);
    let us: Vec<f64> = (0..n)
        .map(|i| umin + (umax - umin) * i as f64 / (n - 1) as f64)
        .collect();
    let rates: Vec<f64> = us
        .par_iter()
        .map(|&u| {
            let mut c = cfg.clone();
            c.aero = cfg.aero.with_mach(u)?;
            analysis::growth_rate(&c)
        })
        .collect::<panelflutter_core::Result<_>>()?;
    let mut t = Table::new(&["U", "max_re"]);
    for (u, r) in us.iter().zip(&rates) {
        t.row(&[*u, *r]);
    }
    let path = run.out.join("sweep.csv");
    t.write(&path).map_err(io_err(&path))?;
    let mut summary = json!({
        "command": "flutter-sweep",
        "config": echo(&run.cfg),
        "interval": [umin, umax],
        "tol": tol,
    });
    match uc {
        Some(u) => summary["flutter_point"] = json!(u),
        None => {
            summary["flutter_point"] = Value::Null;
            summary["reason"] = json!("no sign change");
        }
    }
    write_summary(&run, &summary)?;
    Ok(0)
}

fn with_param(cfg: &RunConfig, param: &str, p: f64) -> Result<RunConfig, ConfigError> {
    let mut c = cfg.clone();
    match param {
        "lambda" => match c.plate.f0 {
            LoadPreset::Radial { .. } => c.plate.f0 = LoadPreset::Radial { lambda: p },
            _ => {
                return Err(ConfigError(
                    "--param lambda needs plate.F0 preset \"radial\"".into(),
                ))
            }
        },
        "p0" => c.plate.p0 = LoadPreset::Sine { amplitude: p },
        "U" => c.aero.mach = p,
        other => {
            return Err(ConfigError(format!(
                "unknown continuation parameter {other:?}; expected lambda, p0 or U"
            )))
        }
    }
    Ok(c)
}

pub fn equilibria(c: &Common, param: &str, from: f64, to: f64, steps: usize, perturb: f64) -> CmdResult {
    let run = prepare(c)?;
    if steps == 0 || !from.is_finite() || !to.is_finite() {
        return Err(ConfigError("equilibria needs finite --from/--to and --steps >= 1".into()));
    }
    with_param(&run.cfg, param, from)?.plate_config()?;
    let params: Vec<f64> = (0..=steps)
        .map(|i| from + (to - from) * i as f64 / steps as f64)
        .collect();
    let g = run.cfg.grid()?;
    let bump = shape_field(&Shape::Bump { amplitude: perturb }, &g);
    let make = |p: f64| {
        with_param(&run.cfg, param, p)
            .and_then(|c| c.plate_config())
            .map_err(|e| panelflutter_core::Error::InvalidParameter(e.0))
    };
    let branch = continuation(
        make,
        &params,
        &Field::zeros(&g),
        (perturb != 0.0).then_some(&bump),
    )?;
    let norms = analysis::branch_norms(&branch, &g);
    let mut t = Table::new(&["param", "norm_u", "residual", "stable"]);
    for (pt, nrm) in branch.points.iter().zip(&norms) {
        t.row(&[pt.param, *nrm, pt.residual, if pt.stable { 1.0 } else { 0.0 }]);
    }
    let path = run.out.join("branch.csv");
    t.write(&path).map_err(io_err(&path))?;
    let stopped = branch
        .stopped_at
        .as_ref()
        .map(|(p, e)| json!({"param": p, "reason": e.to_string()}))
        .unwrap_or(Value::Null);
    write_summary(
        &run,
        &json!({
            "command": "equilibria",
            "config": echo(&run.cfg),
            "param": param,
            "points": branch.points.len(),
            "stopped_at": stopped,
            "warnings": [HALF_FACTOR_NOTE],
        }),
    )?;
    Ok(0)
}

/// Sample times of the replayed history used by `qbound`.
pub const QBOUND_TIMES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Replayed oscillatory history `S0 cos(2 pi t) + S1 sin(3 pi t)`, with the
/// shapes taken from the `initial` section (a bump and the (2,1) mode if
/// both are zero).
fn replay_shapes(cfg: &RunConfig, g: &Grid) -> (Field, Field) {
    if cfg.initial.u0 == Shape::Zero && cfg.initial.u1 == Shape::Zero {
        (
            shape_field(&Shape::Bump { amplitude: 1.0 }, g),
            shape_field(&Shape::Mode { m: 2, n: 1, amplitude: 0.5 }, g),
        )
    } else {
        (shape_field(&cfg.initial.u0, g), shape_field(&cfg.initial.u1, g))
    }
}

pub fn qbound(c: &Common, ulist: &[f64]) -> CmdResult {
    let run = prepare(c)?;
    if ulist.is_empty() {
        return Err(ConfigError("qbound needs --ulist with at least one Mach number".into()));
    }
    if let Some(&u) = ulist.iter().find(|&&u| !(u > 1.0)) {
        return Err(ConfigError(format!(
            "qbound needs supersonic Mach numbers (U > 1), got {u}"
        )));
    }
    let g = run.cfg.grid()?;
    let n_theta = run.cfg.aero.n_theta.unwrap_or(panelflutter_core::aero::DEFAULT_N_THETA);
    let (s0, s1) = replay_shapes(&run.cfg, &g);
    let history = |t: f64| {
        let mut u = s0.scaled((2.0 * std::f64::consts::PI * t).cos());
        u.axpy((3.0 * std::f64::consts::PI * t).sin(), &s1);
        u
    };
    let rows = qu_bound_replay(&g, ulist, run.cfg.time.dt, n_theta, &QBOUND_TIMES, history)?;
    let mut t = Table::new(&["U", "t_star", "ratio", "max_q_norm"]);
    for r in &rows {
        t.row(&[r.mach, r.t_star, r.ratio, r.max_q_norm]);
    }
    let path = run.out.join("qbound.csv");
    t.write(&path).map_err(io_err(&path))?;
    let finite = rows.iter().all(|r| r.ratio.is_finite());
    write_summary(
        &run,
        &json!({
            "command": "qbound",
            "config": echo(&run.cfg),
            "rows": rows.iter().map(|r| json!({
                "U": r.mach, "t_star": r.t_star, "ratio": r.ratio, "max_q_norm": r.max_q_norm
            })).collect::<Vec<_>>(),
            "all_finite": finite,
        }),
    )?;
    Ok(0)
}

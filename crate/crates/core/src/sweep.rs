//! Parameter sweeps over the modulation settings, duty-cycle optimisation
//! and time × axis trace grids.
//!
//! Points run in parallel on the rayon pool and are collected in axis
//! order. Each point is a pure function of its inputs, so results do not
//! depend on the number of workers.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{coupling_k, mhz_to_rad, LineParams, QubitParams};
use crate::optimize::golden_section;
use crate::pulse::{v_peak_for_rabi, Modulation, PulseSpec, DEFAULT_T_M};
use crate::scattering::{
    offres_reference, sample_envelope, OffResReference, Simulation, Trace, DEFAULT_EMISSION_WINDOW,
};
use crate::C64;

/// Shared settings for every point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingPoint {
    pub params: QubitParams,
    pub line: LineParams,
    /// Peak |Ω| of the pulse (rad/s).
    pub omega_peak: f64,
    pub tau: f64,
    pub t0: f64,
    pub t_m: f64,
    pub t_i: Option<f64>,
    /// Emission window after t0.
    pub window: f64,
    pub dt: Option<f64>,
    pub offres: OffResReference,
    pub v_noise: f64,
}

impl WorkingPoint {
    /// Ω/2π = 0.154 MHz, τ = 1/γ, t_m = −2.5 µs on the given qubit.
    pub fn new(params: QubitParams) -> Self {
        Self {
            params,
            line: LineParams::default(),
            omega_peak: mhz_to_rad(0.154),
            tau: params.t2(),
            t0: 0.0,
            t_m: DEFAULT_T_M,
            t_i: None,
            window: DEFAULT_EMISSION_WINDOW,
            dt: None,
            offres: OffResReference::Analytic,
            v_noise: 0.0,
        }
    }

    pub fn table_one() -> Self {
        Self::new(QubitParams::table_one())
    }

    pub fn v_peak(&self) -> f64 {
        v_peak_for_rabi(self.omega_peak, coupling_k(&self.params, &self.line), &self.line)
    }

    pub fn spec(&self, modulation: Modulation) -> Result<PulseSpec> {
        PulseSpec::new(self.v_peak(), self.tau)?.with_times(self.t0, self.t_m, self.t_i)?.with_modulation(modulation)
    }

    pub fn simulation(&self, modulation: Modulation) -> Result<Simulation> {
        let spec = self.spec(modulation)?;
        Ok(Simulation {
            params: self.params,
            line: self.line,
            spec,
            delta: 0.0,
            dt: self.dt,
            t_f: self.t0 + self.window,
            offres: self.offres,
            v_noise: self.v_noise,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Number of square-wave periods N.
    N,
    /// Modulation phase θ (rad).
    Theta,
    /// Duty cycle d.
    Duty,
    /// Sawtooth frequency f_m (Hz).
    Fm,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::Theta => "theta",
            SweepAxis::Duty => "duty",
            SweepAxis::Fm => "fm",
        }
    }
}

/// Fixed modulation settings the swept axis is applied on top of.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareTemplate {
    pub intervals: u32,
    pub theta: f64,
    pub duty: f64,
}

impl Default for SquareTemplate {
    /// N = 50, θ = π, d = 0.5.
    fn default() -> Self {
        Self { intervals: 50, theta: PI, duty: 0.5 }
    }
}

impl SquareTemplate {
    fn modulation(self, axis: SweepAxis, value: f64) -> Result<Modulation> {
        let Self { intervals, theta, duty } = self;
        Ok(match axis {
            SweepAxis::N => {
                if !(value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                    return Err(Error::invalid("n", format!("must be a non-negative integer, got {value}")));
                }
                Modulation::Square { intervals: value as u32, theta, duty }
            }
            SweepAxis::Theta => Modulation::Square { intervals, theta: value, duty },
            SweepAxis::Duty => Modulation::Square { intervals, theta, duty: value },
            SweepAxis::Fm => Modulation::Sawtooth { f_m: value },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub eta: f64,
    pub e_res: f64,
    pub e_offres: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    pub grid: Option<TraceGrid>,
}

impl SweepResult {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn etas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.eta).collect()
    }
}

/// Rectangular grids on a common uniform time axis; row `i` belongs to
/// `axis[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceGrid {
    pub times: Vec<f64>,
    pub axis: Vec<f64>,
    pub v_out: Vec<Vec<C64>>,
    pub v_offres: Vec<Vec<C64>>,
    pub p_e: Vec<Vec<f64>>,
}

/// Off-resonant energy of the unmodulated pulse. |V_in| does not depend on
/// Π(t), so one reference serves the whole sweep.
fn shared_offres_energy(wp: &WorkingPoint) -> Result<f64> {
    let sim = wp.simulation(Modulation::None)?;
    let trace = offres_reference(&sim, sim.offres)?;
    let e = trace.energy(sim.spec.t_i(), sim.spec.t0(), sim.v_noise, &sim.line)?;
    if !(e > 0.0) {
        return Err(Error::ZeroInputEnergy(e));
    }
    Ok(e)
}

struct PointOutput {
    point: SweepPoint,
    rows: Option<(Vec<C64>, Vec<C64>, Vec<f64>)>,
}

fn run_point(
    wp: &WorkingPoint,
    modulation: Modulation,
    value: f64,
    e_offres: f64,
    times: Option<&[f64]>,
) -> Result<PointOutput> {
    let sim = wp.simulation(modulation)?;
    let (traj, v_out) = sim.reflected(sim.delta)?;
    let e_res = v_out.energy(sim.spec.t0(), sim.t_f, sim.v_noise, &sim.line)?;
    let point = SweepPoint { value, eta: e_res / e_offres, e_res, e_offres };
    let rows = match times {
        None => None,
        Some(times) => {
            let v_off = match sim.offres {
                OffResReference::Analytic => sample_envelope(&sim.spec, traj.grid()),
                mode => offres_reference(&sim, mode)?,
            };
            let pe = Trace::continuous(
                traj.grid().clone(),
                traj.excited_population().into_iter().map(|p| C64::new(p, 0.0)).collect(),
            )?;
            Some((
                resample(&v_out, times),
                resample(&v_off, times),
                resample(&pe, times).into_iter().map(|z| z.re).collect(),
            ))
        }
    };
    Ok(PointOutput { point, rows })
}

/// Linear interpolation between right values and left limits; outside the
/// trace the end values are held.
fn resample(trace: &Trace, times: &[f64]) -> Vec<C64> {
    let t = trace.times();
    let (vals, left) = (trace.values(), trace.left());
    times
        .iter()
        .map(|&x| {
            if x <= t[0] {
                return vals[0];
            }
            let last = t.len() - 1;
            if x >= t[last] {
                return vals[last];
            }
            let i = t.partition_point(|&s| s <= x) - 1;
            if x == t[i] {
                return vals[i];
            }
            let w = (x - t[i]) / (t[i + 1] - t[i]);
            vals[i] * (1.0 - w) + left[i + 1] * w
        })
        .collect()
}

/// Runs `values` along `axis`. With `grid_step` set, also resamples every
/// trace onto a uniform grid of that step from t_i to t_f.
pub fn run_sweep(
    wp: &WorkingPoint,
    axis: SweepAxis,
    values: &[f64],
    template: SquareTemplate,
    grid_step: Option<f64>,
) -> Result<SweepResult> {
    let e_offres = shared_offres_energy(wp)?;
    let times = match grid_step {
        Some(step) => {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::invalid("grid_step", format!("must be > 0, got {step}")));
            }
            let spec = wp.spec(Modulation::None)?;
            let (start, end) = (spec.t_i(), wp.t0 + wp.window);
            let n = ((end - start) / step).round() as usize;
            Some((0..=n).map(|i| start + i as f64 * step).collect::<Vec<f64>>())
        }
        None => None,
    };
    let outputs: Vec<PointOutput> = values
        .par_iter()
        .map(|&value| {
            let modulation = template.modulation(axis, value)?;
            run_point(wp, modulation, value, e_offres, times.as_deref())
        })
        .collect::<Vec<Result<PointOutput>>>()
        .into_iter()
        .zip(values)
        .map(|(r, &value)| r.map_err(|e| Error::SweepPoint { axis: axis.name(), value, source: Box::new(e) }))
        .collect::<Result<_>>()?;

    let grid = times.map(|times| {
        let mut g = TraceGrid { times, axis: values.to_vec(), v_out: vec![], v_offres: vec![], p_e: vec![] };
        for out in &outputs {
            let (v, off, pe) = out.rows.clone().expect("rows requested");
            g.v_out.push(v);
            g.v_offres.push(off);
            g.p_e.push(pe);
        }
        g
    });
    Ok(SweepResult { axis, points: outputs.into_iter().map(|o| o.point).collect(), grid })
}

/// η versus N at fixed θ, duty 0.5.
pub fn sweep_n(wp: &WorkingPoint, ns: &[u32], theta: f64) -> Result<SweepResult> {
    let values: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    run_sweep(wp, SweepAxis::N, &values, SquareTemplate { theta, ..Default::default() }, None)
}

/// η versus θ at fixed N, duty 0.5.
pub fn sweep_theta(wp: &WorkingPoint, thetas: &[f64], intervals: u32) -> Result<SweepResult> {
    run_sweep(wp, SweepAxis::Theta, thetas, SquareTemplate { intervals, ..Default::default() }, None)
}

/// η versus duty cycle at fixed N and θ.
pub fn sweep_duty(wp: &WorkingPoint, duties: &[f64], intervals: u32, theta: f64) -> Result<SweepResult> {
    run_sweep(wp, SweepAxis::Duty, duties, SquareTemplate { intervals, theta, duty: 0.5 }, None)
}

/// η versus sawtooth frequency (Hz).
pub fn sweep_fm(wp: &WorkingPoint, fms: &[f64]) -> Result<SweepResult> {
    run_sweep(wp, SweepAxis::Fm, fms, SquareTemplate::default(), None)
}

/// V_out, far-detuned reference and P_e on a common time × axis grid.
pub fn trace_grid(
    wp: &WorkingPoint,
    axis: SweepAxis,
    values: &[f64],
    template: SquareTemplate,
    step: f64,
) -> Result<TraceGrid> {
    Ok(run_sweep(wp, axis, values, template, Some(step))?.grid.expect("grid requested"))
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Duty at which θ and 0 pieces of one period carry equal drive area.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaBalance {
    pub duty: f64,
    /// (d, signed area) with the area normalised to one full period.
    pub curve: Vec<(f64, f64)>,
}

/// (0-piece area − θ-piece area)/(period area) for an envelope e^{t/τ}
/// whose period starts with the θ piece.
pub fn signed_area(duty: f64, interval: f64, tau: f64) -> f64 {
    let a = interval / tau;
    (a.exp() - 2.0 * (duty * a).exp() + 1.0) / a.exp_m1()
}

/// Closed-form balance d* = (τ/Δt)·ln((1 + e^{Δt/τ})/2) for a square
/// modulated pulse, plus the signed-area curve over d ∈ [0, 1].
pub fn duty_area_balance(spec: &PulseSpec) -> Result<AreaBalance> {
    let Some(interval) = spec.interval() else {
        return Err(Error::invalid("modulation", "area balance needs square modulation with N >= 1"));
    };
    let a = interval / spec.tau();
    // ln((1 + e^a)/2) = a + ln((1 + e^-a)/2), stable for large a
    let duty = (a + ((-a).exp().ln_1p() - std::f64::consts::LN_2)) / a;
    let curve = linspace(0.0, 1.0, 201).into_iter().map(|d| (d, signed_area(d, interval, spec.tau()))).collect();
    Ok(AreaBalance { duty, curve })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DutyOptimum {
    pub duty: f64,
    pub eta: f64,
    pub scan: Vec<SweepPoint>,
}

pub const DUTY_SCAN_STEP: f64 = 0.005;

/// Coarse scan of η(d) over `range` at [`DUTY_SCAN_STEP`], then golden
/// section on the bracketing cells down to `tol`.
pub fn optimize_duty(
    wp: &WorkingPoint,
    intervals: u32,
    theta: f64,
    range: (f64, f64),
    tol: f64,
) -> Result<DutyOptimum> {
    let (lo, hi) = range;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(Error::invalid("duty", format!("search range ({lo}, {hi}) must lie inside (0, 1)")));
    }
    let n = ((hi - lo) / DUTY_SCAN_STEP).round() as usize;
    let duties = linspace(lo, hi, n + 1);
    let scan = sweep_duty(wp, &duties, intervals, theta)?.points;
    let best = (0..scan.len()).min_by(|&a, &b| scan[a].eta.total_cmp(&scan[b].eta)).expect("non-empty scan");
    if best == 0 || best == scan.len() - 1 {
        return Err(Error::BoundaryOptimum { duty: scan[best].value });
    }
    let e_offres = scan[best].e_offres;
    let eval = |d: f64| -> Result<f64> {
        let m = Modulation::Square { intervals, theta, duty: d };
        Ok(run_point(wp, m, d, e_offres, None)?.point.eta)
    };
    let (duty, eta) = golden_section(eval, scan[best - 1].value, scan[best + 1].value, tol)?;
    Ok(DutyOptimum { duty, eta, scan })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn area_balance_closed_form() {
        let wp = WorkingPoint::table_one();
        let spec = wp.spec(Modulation::square(50, PI)).unwrap();
        let bal = duty_area_balance(&spec).unwrap();
        assert!((bal.duty - 0.545).abs() < 2e-3, "{}", bal.duty);
        // small Δt/τ recovers the uniform-amplitude limit
        let slow = spec.with_tau(1e-3).unwrap();
        assert!((duty_area_balance(&slow).unwrap().duty - 0.5).abs() < 1e-4);
    }

    #[test]
    fn area_balance_matches_quadrature() {
        let (interval, tau) = (50e-9, QubitParams::table_one().t2());
        let spec = WorkingPoint::table_one().spec(Modulation::square(50, PI)).unwrap();
        let d = duty_area_balance(&spec).unwrap().duty;
        let trap = |a: f64, b: f64| {
            let n = 200_000;
            let h = (b - a) / n as f64;
            let f = |t: f64| (t / tau).exp();
            h * ((1..n).map(|i| f(a + i as f64 * h)).sum::<f64>() + 0.5 * (f(a) + f(b)))
        };
        let theta_area = trap(0.0, d * interval);
        let zero_area = trap(d * interval, interval);
        assert!(((zero_area - theta_area) / (zero_area + theta_area)).abs() < 1e-10);
        assert!(signed_area(d, interval, tau).abs() < 1e-12);
    }

    #[test]
    fn area_curve_crosses_at_balance() {
        let spec = WorkingPoint::table_one().spec(Modulation::square(50, PI)).unwrap();
        let bal = duty_area_balance(&spec).unwrap();
        let interval = spec.interval().unwrap();
        let fine = linspace(0.4, 0.75, 35_001);
        let scan_min = fine
            .iter()
            .copied()
            .min_by(|a, b| {
                signed_area(*a, interval, spec.tau()).abs().total_cmp(&signed_area(*b, interval, spec.tau()).abs())
            })
            .unwrap();
        assert!((scan_min - bal.duty).abs() < 1e-3);
        assert_relative_eq!(bal.curve[0].1, 1.0, max_relative = 1e-12);
        assert_relative_eq!(bal.curve[200].1, -1.0, max_relative = 1e-12);
    }

    #[test]
    fn area_balance_needs_square() {
        let spec = WorkingPoint::table_one().spec(Modulation::None).unwrap();
        assert!(duty_area_balance(&spec).is_err());
    }

    #[test]
    fn zero_theta_is_a_no_op() {
        let wp = WorkingPoint::table_one();
        let res = sweep_n(&wp, &[0, 7, 50], 0.0).unwrap();
        let e = res.etas();
        assert!((e[0] - e[1]).abs() < 1e-6 && (e[0] - e[2]).abs() < 1e-6, "{e:?}");
    }

    #[test]
    fn shared_reference_is_per_sweep() {
        let wp = WorkingPoint::table_one();
        let res = sweep_theta(&wp, &[0.0, PI], 10).unwrap();
        assert_eq!(res.points[0].e_offres, res.points[1].e_offres);
        assert!(res.points[1].eta < res.points[0].eta);
    }

    #[test]
    fn bad_point_carries_axis_value() {
        let wp = WorkingPoint::table_one();
        let err = sweep_duty(&wp, &[0.5, 1.5], 50, PI).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("duty = 1.5") && msg.contains("duty"), "{msg}");
        assert_eq!(err.kind(), crate::ErrorKind::Config);
    }

    #[test]
    fn resample_respects_jumps() {
        let grid = crate::pulse::TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let one = C64::new(1.0, 0.0);
        let trace = Trace::new(grid, vec![one, -one, -one], vec![one, one, -one]).unwrap();
        let out = resample(&trace, &[-1.0, 0.5, 1.0, 1.5, 3.0]);
        assert_eq!(out, vec![one, one, -one, -one, -one]);
    }

    #[test]
    fn grids_are_rectangular() {
        let wp = WorkingPoint::table_one();
        let g = trace_grid(&wp, SweepAxis::Theta, &[0.0, PI], SquareTemplate::default(), 10e-9).unwrap();
        assert_eq!(g.v_out.len(), 2);
        assert!(g.v_out.iter().chain(&g.v_offres).all(|row| row.len() == g.times.len()));
        assert!(g.p_e.iter().all(|row| row.len() == g.times.len()));
    }
}

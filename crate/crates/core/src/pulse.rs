//! Exponentially rising drive pulses with square-wave or linear phase shaping.
//!
//! The envelope is `V·e^{(t−t0)/τ}·e^{iΠ(t)}` for `t < t0` and zero from `t0`
//! on. Π(t) is piecewise constant (square mode) or linear (sawtooth mode) on
//! the modulation window `[t_m, t0)` and zero elsewhere.
//!
//! Every jump of the envelope is listed by [`PulseSpec::switch_times`] and
//! [`build_grid`] places a sample on each one, so ODE steps never straddle a
//! discontinuity. Code that needs one-sided limits evaluates the envelope with
//! [`PulseSpec::envelope_on_segment`], which picks the smooth branch belonging
//! to a given segment.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LineParams;
use crate::C64;

/// Default modulation start, 2.5 µs before turn-off.
pub const DEFAULT_T_M: f64 = -2.5e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Modulation {
    None,
    /// Phase `theta` on the first `duty` fraction of each of `intervals`
    /// equal periods tiling `[t_m, t0)`, zero on the rest.
    Square {
        intervals: u32,
        theta: f64,
        duty: f64,
    },
    /// Linear phase ramp 2π·f_m·(t − t_m) on `[t_m, t0)`; `f_m` in Hz.
    Sawtooth {
        f_m: f64,
    },
}

impl Modulation {
    pub fn square(intervals: u32, theta: f64) -> Self {
        Modulation::Square { intervals, theta, duty: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    v_peak: f64,
    tau: f64,
    t0: f64,
    t_m: f64,
    /// `None` means the automatic start time, see [`PulseSpec::t_i`].
    t_i: Option<f64>,
    modulation: Modulation,
}

impl PulseSpec {
    /// Unmodulated pulse turning off at t0 = 0 with t_m = −2.5 µs.
    pub fn new(v_peak: f64, tau: f64) -> Result<Self> {
        let spec = Self { v_peak, tau, t0: 0.0, t_m: DEFAULT_T_M, t_i: None, modulation: Modulation::None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_modulation(mut self, modulation: Modulation) -> Result<Self> {
        self.modulation = modulation;
        self.validate()?;
        Ok(self)
    }

    pub fn with_v_peak(mut self, v_peak: f64) -> Result<Self> {
        self.v_peak = v_peak;
        self.validate()?;
        Ok(self)
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        self.tau = tau;
        self.validate()?;
        Ok(self)
    }

    /// Set turn-off time, modulation start and (optionally) trace start.
    pub fn with_times(mut self, t0: f64, t_m: f64, t_i: Option<f64>) -> Result<Self> {
        self.t0 = t0;
        self.t_m = t_m;
        self.t_i = t_i;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.v_peak.is_finite() && self.v_peak >= 0.0) {
            return Err(Error::invalid("v_peak", format!("must be finite and >= 0, got {}", self.v_peak)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::invalid("tau", format!("must be > 0, got {}", self.tau)));
        }
        if !(self.t0.is_finite() && self.t_m.is_finite() && self.t_m < self.t0) {
            return Err(Error::invalid("t_m", format!("need t_m < t0, got t_m = {}, t0 = {}", self.t_m, self.t0)));
        }
        if let Some(t_i) = self.t_i {
            if !(t_i.is_finite() && t_i < self.t_m) {
                return Err(Error::invalid("t_i", format!("need t_i < t_m, got t_i = {t_i}, t_m = {}", self.t_m)));
            }
        }
        match self.modulation {
            Modulation::None => {}
            Modulation::Square { theta, duty, .. } => {
                if !(duty > 0.0 && duty < 1.0) {
                    return Err(Error::invalid("duty", format!("must lie in (0, 1), got {duty}")));
                }
                if !(0.0..=TAU).contains(&theta) {
                    return Err(Error::invalid("theta", format!("must lie in [0, 2π], got {theta}")));
                }
            }
            Modulation::Sawtooth { f_m } => {
                if !f_m.is_finite() {
                    return Err(Error::invalid("f_m", "must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn v_peak(&self) -> f64 {
        self.v_peak
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_m(&self) -> f64 {
        self.t_m
    }

    /// Trace start. Defaults to `t0 − max(10τ, (t0 − t_m) + 5τ)`, which keeps
    /// the truncated pulse energy below 1e-8 of the total.
    pub fn t_i(&self) -> f64 {
        self.t_i.unwrap_or_else(|| self.t0 - f64::max(10.0 * self.tau, (self.t0 - self.t_m) + 5.0 * self.tau))
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    /// Switching period Δt = (t0 − t_m)/N in square mode with N ≥ 1.
    pub fn interval(&self) -> Option<f64> {
        match self.modulation {
            Modulation::Square { intervals, .. } if intervals > 0 => Some((self.t0 - self.t_m) / intervals as f64),
            _ => None,
        }
    }

    /// Shortest constant-phase piece of the square wave, Δt·min(d, 1 − d).
    pub fn shortest_subinterval(&self) -> Option<f64> {
        match self.modulation {
            Modulation::Square { duty, .. } => self.interval().map(|dt| dt * duty.min(1.0 - duty)),
            _ => None,
        }
    }

    fn interval_start(&self, j: u32, dt: f64) -> f64 {
        match self.modulation {
            // t0 − NΔt can miss t_m by an ulp
            Modulation::Square { intervals, .. } if j == intervals => self.t_m,
            _ => self.t0 - j as f64 * dt,
        }
    }

    /// Index j of the period [t0 − jΔt, t0 − (j−1)Δt) containing `t`.
    fn interval_index(&self, t: f64, n: u32, dt: f64) -> u32 {
        let mut j = ((self.t0 - t) / dt).ceil().clamp(1.0, n as f64) as u32;
        while j < n && t < self.interval_start(j, dt) {
            j += 1;
        }
        while j > 1 && t >= self.interval_start(j - 1, dt) {
            j -= 1;
        }
        j
    }

    /// Unwrapped phase Π(t) in radians.
    pub fn phase(&self, t: f64) -> f64 {
        if t < self.t_m || t >= self.t0 {
            return 0.0;
        }
        match self.modulation {
            Modulation::None => 0.0,
            Modulation::Square { intervals: 0, .. } => 0.0,
            Modulation::Square { intervals, theta, duty } => {
                let dt = (self.t0 - self.t_m) / intervals as f64;
                let j = self.interval_index(t, intervals, dt);
                if t < self.interval_start(j, dt) + duty * dt {
                    theta
                } else {
                    0.0
                }
            }
            Modulation::Sawtooth { f_m } => TAU * f_m * (t - self.t_m),
        }
    }

    /// Π(t) wrapped into [−π, π), for reporting.
    pub fn phase_wrapped(&self, t: f64) -> f64 {
        wrap_phase(self.phase(t))
    }

    /// V_in(t), right-continuous; exactly zero from t0 on.
    pub fn envelope(&self, t: f64) -> C64 {
        self.envelope_on_segment(t, t)
    }

    /// Envelope on the smooth branch selected by `anchor`, a time strictly
    /// inside the segment of interest. Evaluating at a segment endpoint with
    /// the segment midpoint as anchor yields the one-sided limit.
    pub fn envelope_on_segment(&self, t: f64, anchor: f64) -> C64 {
        if anchor >= self.t0 {
            return C64::new(0.0, 0.0);
        }
        let phase = match self.modulation {
            Modulation::Sawtooth { f_m } if anchor >= self.t_m => TAU * f_m * (t - self.t_m),
            _ => self.phase(anchor),
        };
        C64::from_polar(self.v_peak * ((t - self.t0) / self.tau).exp(), phase)
    }

    /// Complex Rabi frequency Ω(t) = k·V_in(t)/√(2Z₀).
    pub fn rabi(&self, t: f64, k: f64, line: &LineParams) -> C64 {
        self.envelope(t) * (k / (2.0 * line.z0()).sqrt())
    }

    /// Exact ∫_{t_i}^{t0} |V_in|²/2Z₀ dt.
    pub fn input_energy_closed_form(&self, line: &LineParams) -> f64 {
        let full = self.v_peak * self.v_peak * self.tau / (4.0 * line.z0());
        full * -(2.0 * (self.t_i() - self.t0) / self.tau).exp_m1()
    }

    /// Every instant where the envelope may jump: t_m, t0, and for square
    /// modulation the period starts t0 − jΔt and phase flips t0 − jΔt + dΔt.
    pub fn switch_times(&self) -> Vec<f64> {
        let mut times = vec![self.t_m, self.t0];
        if let (Modulation::Square { intervals, duty, .. }, Some(dt)) = (self.modulation, self.interval()) {
            for j in 1..=intervals {
                let start = self.interval_start(j, dt);
                times.push(start);
                times.push(start + duty * dt);
            }
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }

    /// Default integration step: min(1/(200γ), Δt·min(d, 1−d)/8).
    pub fn default_step(&self, decoherence: f64) -> f64 {
        let base = 1.0 / (200.0 * decoherence);
        match self.shortest_subinterval() {
            Some(sub) => base.min(sub / 8.0),
            None => base,
        }
    }
}

/// Peak voltage that produces a peak Rabi frequency `omega_peak`.
pub fn v_peak_for_rabi(omega_peak: f64, k: f64, line: &LineParams) -> f64 {
    omega_peak * (2.0 * line.z0()).sqrt() / k
}

pub fn wrap_phase(phase: f64) -> f64 {
    let w = (phase + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// Strictly increasing sample times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("grid", "needs at least two samples"));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid", "times must be finite and strictly increasing"));
        }
        Ok(Self { times })
    }

    /// `start, start + step, ...` up to and including `end`.
    pub fn uniform(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && end > start) {
            return Err(Error::invalid("grid", "need step > 0 and end > start"));
        }
        let m = ((end - start) / step).round().max(1.0) as usize;
        Self::new((0..=m).map(|i| start + (end - start) * i as f64 / m as f64).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.times[0]
    }

    pub fn last(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Index of an exact sample at `t`.
    pub fn position(&self, t: f64) -> Option<usize> {
        self.times.binary_search_by(|x| x.total_cmp(&t)).ok()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.position(t).is_some()
    }

    /// Consecutive `(a, b)` pairs.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Grid over `[t_i, t_f]` with step at most `dt_max` that hits every
/// [`PulseSpec::switch_times`] entry exactly.
pub fn build_grid(spec: &PulseSpec, dt_max: f64, t_f: f64) -> Result<TimeGrid> {
    if !(dt_max.is_finite() && dt_max > 0.0) {
        return Err(Error::invalid("dt", format!("must be > 0, got {dt_max}")));
    }
    if !(t_f.is_finite() && t_f > spec.t0()) {
        return Err(Error::invalid("t_f", format!("must exceed t0 = {}, got {t_f}", spec.t0())));
    }
    if let Some(sub) = spec.shortest_subinterval() {
        if dt_max > sub / 2.0 {
            return Err(Error::UnderResolvedGrid { dt_max, limit: sub / 2.0 });
        }
    }

    let mut breaks = spec.switch_times();
    breaks.push(spec.t_i());
    breaks.push(t_f);
    breaks.sort_by(f64::total_cmp);
    // t0 − NΔt and t_m can differ by an ulp
    let merge = 1e-9 * dt_max;
    breaks.dedup_by(|b, a| *b - *a <= merge);

    let mut times = Vec::new();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = ((b - a) / dt_max).ceil().max(1.0) as usize;
        times.extend((0..m).map(|i| a + (b - a) * i as f64 / m as f64));
    }
    times.push(*breaks.last().expect("non-empty"));
    TimeGrid::new(times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QubitParams;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn square(n: u32, theta: f64, duty: f64) -> PulseSpec {
        PulseSpec::new(1.0, QubitParams::table_one().t2())
            .unwrap()
            .with_modulation(Modulation::Square { intervals: n, theta, duty })
            .unwrap()
    }

    #[test]
    fn square_phase_first_interval() {
        let spec = square(50, PI, 0.5);
        assert_relative_eq!(spec.interval().unwrap(), 50e-9, max_relative = 1e-12);
        assert_eq!(spec.phase(-30e-9), PI);
        assert_eq!(spec.phase(-10e-9), 0.0);
        // interval boundaries: θ at the start of each period, 0 from the midpoint
        assert_eq!(spec.phase(-50e-9), PI);
        assert_eq!(spec.phase(-25e-9), 0.0);
        assert_eq!(spec.phase(-2.5e-6), PI);
        assert_eq!(spec.phase(-2.6e-6), 0.0);
        assert_eq!(spec.phase(0.0), 0.0);
    }

    #[test]
    fn zero_intervals_means_no_phase() {
        let spec = square(0, PI, 0.5);
        for i in 0..1000 {
            let t = -3e-6 + i as f64 * 3.1e-9;
            assert_eq!(spec.phase(t), 0.0);
        }
    }

    #[test]
    fn sawtooth_wraps_at_half_period() {
        let spec = PulseSpec::new(1.0, 1e-7).unwrap().with_modulation(Modulation::Sawtooth { f_m: 10e6 }).unwrap();
        let t = spec.t_m() + 50e-9;
        assert_relative_eq!(spec.phase(t), PI, max_relative = 1e-9);
        let w = spec.phase_wrapped(t);
        assert!((-PI..PI).contains(&w));
        assert_relative_eq!(w.cos(), -1.0, max_relative = 1e-12);
        assert_eq!(wrap_phase(PI), -PI);
        assert_eq!(spec.phase(spec.t_m() - 1e-9), 0.0);
    }

    #[test]
    fn envelope_values() {
        let tau = QubitParams::table_one().t2();
        let spec = PulseSpec::new(2.0, tau).unwrap();
        let v = spec.envelope(-tau);
        assert_relative_eq!(v.norm(), 2.0 / std::f64::consts::E, max_relative = 1e-14);
        assert_eq!(v.arg(), 0.0);
        assert_eq!(spec.envelope(1e-9), C64::new(0.0, 0.0));
        assert_eq!(spec.envelope(0.0), C64::new(0.0, 0.0));
        // left limit at t0 is the peak
        assert_relative_eq!(spec.envelope_on_segment(0.0, -1e-10).norm(), 2.0, max_relative = 1e-14);

        let shaped = spec.with_modulation(Modulation::square(50, PI)).unwrap();
        let v = shaped.envelope(-30e-9);
        assert_relative_eq!(v.norm(), 2.0 * (-30e-9 / tau).exp(), max_relative = 1e-14);
        assert_relative_eq!(v.arg().abs(), PI, max_relative = 1e-14);
    }

    #[test]
    fn rabi_is_linear_in_amplitude() {
        let line = LineParams::default();
        let spec = PulseSpec::new(1e-9, 1e-7).unwrap().with_modulation(Modulation::square(10, 1.0)).unwrap();
        let doubled = spec.with_v_peak(2e-9).unwrap();
        for i in 0..200 {
            let t = -2e-6 + i as f64 * 1.1e-8;
            let a = spec.rabi(t, 1e16, &line);
            let b = doubled.rabi(t, 1e16, &line);
            assert_relative_eq!(b.re, 2.0 * a.re, max_relative = 1e-14, epsilon = 1e-300);
            assert_relative_eq!(b.im, 2.0 * a.im, max_relative = 1e-14, epsilon = 1e-300);
        }
        assert_eq!(spec.rabi(0.0, 1e16, &line), C64::new(0.0, 0.0));
    }

    #[test]
    fn amplitude_from_working_point_rabi() {
        // Ω/2π = 0.154 MHz, k ≈ 1.0657e16: V = Ω·√(2Z₀)/k ≈ 0.908 nV (by hand)
        let p = QubitParams::table_one();
        let line = LineParams::default();
        let k = crate::model::coupling_k(&p, &line);
        let v = v_peak_for_rabi(TAU * 0.154e6, k, &line);
        assert_relative_eq!(v, 0.908e-9, max_relative = 2e-3);
    }

    #[test]
    fn closed_form_energy() {
        let line = LineParams::default();
        let tau = QubitParams::table_one().t2();
        let spec = PulseSpec::new(2e-9, tau).unwrap();
        // 4e-18 V² · 1.35567e-7 s / 200 Ω
        assert_relative_eq!(spec.input_energy_closed_form(&line), 2.7113e-27, max_relative = 1e-4);
        let far = spec.with_times(0.0, -2.5e-6, Some(-1.0)).unwrap();
        assert_eq!(far.input_energy_closed_form(&line), 2e-9 * 2e-9 * tau / 200.0);
        let empty = PulseSpec { t_i: Some(0.0), ..spec };
        assert_eq!(empty.input_energy_closed_form(&line), 0.0);
    }

    #[test]
    fn trapezoid_matches_closed_form() {
        let line = LineParams::default();
        let tau = QubitParams::table_one().t2();
        let spec = PulseSpec::new(1.0, tau).unwrap().with_modulation(Modulation::square(50, PI)).unwrap();
        let trapezoid = |dt_max: f64| {
            let grid = build_grid(&spec, dt_max, 1e-6).unwrap();
            grid.segments()
                .filter(|&(_, b)| b <= spec.t0())
                .map(|(a, b)| {
                    let mid = 0.5 * (a + b);
                    let pa = line.power(spec.envelope_on_segment(a, mid));
                    let pb = line.power(spec.envelope_on_segment(b, mid));
                    0.5 * (b - a) * (pa + pb)
                })
                .sum::<f64>()
        };
        let exact = spec.input_energy_closed_form(&line);
        // trapezoid error on e^{2t/τ} is ≈ (2h/τ)²/12
        let coarse = (trapezoid(tau / 100.0) - exact) / exact;
        assert!(coarse > 0.0 && coarse < 4e-5, "{coarse}");
        let fine = (trapezoid(tau / 1000.0) - exact) / exact;
        assert!(fine.abs() < 1e-6, "{fine}");
    }

    #[test]
    fn grid_hits_every_switch() {
        let spec = square(50, PI, 0.5);
        let grid = build_grid(&spec, 5e-9, 5e-6).unwrap();
        for t in spec.switch_times() {
            assert!(grid.contains(t), "missing {t}");
        }
        for j in 0..100 {
            let t = -(j as f64) * 25e-9;
            assert!(grid.times().iter().any(|x| (x - t).abs() < 1e-18), "missing {t}");
        }
        assert!(grid.segments().all(|(a, b)| b - a <= 5e-9 * (1.0 + 1e-12)));
        assert_eq!(grid.first(), spec.t_i());
        assert_eq!(grid.last(), 5e-6);
    }

    #[test]
    fn grid_rejects_coarse_step() {
        let spec = square(50, PI, 0.5);
        assert!(matches!(build_grid(&spec, 30e-9, 5e-6), Err(Error::UnderResolvedGrid { .. })));
        assert!(build_grid(&spec, 5e-9, -1e-6).is_err());
        assert!(build_grid(&spec, 0.0, 1e-6).is_err());
    }

    #[test]
    fn grid_without_modulation() {
        let spec = square(0, PI, 0.5);
        let grid = build_grid(&spec, 1e-9, 1e-6).unwrap();
        assert!(grid.contains(spec.t_m()));
        assert!(grid.contains(0.0));
        assert_eq!(spec.switch_times(), vec![spec.t_m(), 0.0]);
    }

    #[test]
    fn validation_names_the_field() {
        let e = PulseSpec::new(1.0, 1e-7)
            .unwrap()
            .with_modulation(Modulation::Square { intervals: 5, theta: 1.0, duty: 1.5 })
            .unwrap_err();
        assert!(e.to_string().contains("duty"));
        assert!(PulseSpec::new(1.0, -1.0).is_err());
        assert!(PulseSpec::new(-1.0, 1.0).is_err());
        assert!(PulseSpec::new(1.0, 1.0).unwrap().with_times(0.0, 1.0, None).is_err());
    }

    proptest! {
        #[test]
        fn shaping_never_changes_magnitude(
            n in 0u32..80,
            theta in 0.0..TAU,
            duty in 0.05..0.95f64,
            f_m in -30e6..30e6f64,
            t in -4e-6..1e-6f64,
        ) {
            let base = PulseSpec::new(1.3e-9, 1.2e-7).unwrap();
            let plain = base.envelope(t).norm();
            let sq = base.with_modulation(Modulation::Square { intervals: n, theta, duty }).unwrap();
            let saw = base.with_modulation(Modulation::Sawtooth { f_m }).unwrap();
            prop_assert!((sq.envelope(t).norm() - plain).abs() <= 1e-15 * plain.max(1e-300));
            prop_assert!((saw.envelope(t).norm() - plain).abs() <= 1e-15 * plain.max(1e-300));
        }

        #[test]
        fn square_phase_measure(n in 1u32..60, theta in 0.1..6.0f64, duty in 0.05..0.95f64) {
            let spec = square(n, theta, duty);
            let sub = spec.shortest_subinterval().unwrap();
            let grid = build_grid(&spec, sub / 2.0, 1e-7).unwrap();
            let mut on = 0.0;
            for (a, b) in grid.segments() {
                let p = spec.phase(0.5 * (a + b));
                prop_assert!(p == 0.0 || p == theta);
                if p == theta {
                    on += b - a;
                }
            }
            let expected = duty * (spec.t0() - spec.t_m());
            prop_assert!((on - expected).abs() < 1e-12 * expected);
        }
    }
}

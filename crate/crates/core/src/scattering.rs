//! Reflected field, energy bookkeeping and interaction efficiency.
//!
//! The reflected voltage follows from input-output theory,
//! `V_out = V_in + (2Γ/k)·√(2Z₀)·⟨σ₋⟩`. The interaction efficiency compares
//! the input energy stored before turn-off (far-detuned trace) with the
//! coherent energy re-emitted after turn-off (resonant trace).

use serde::{Deserialize, Serialize};

use crate::bloch::{integrate, DriveContext, PulseDrive, Trajectory};
use crate::error::{Error, Result};
use crate::model::{coupling_k, BlochState, LineParams, QubitParams};
use crate::pulse::{build_grid, PulseSpec, TimeGrid};
use crate::C64;

/// Default measurement window after turn-off.
pub const DEFAULT_EMISSION_WINDOW: f64 = 5e-6;

/// Complex voltage samples with one-sided limits.
///
/// `values[i]` is the right limit at `times[i]`, `left[i]` the left limit.
/// They only differ where the drive jumps; quadrature uses `values[i]` and
/// `left[i + 1]` on each segment so jumps never leak into the integral.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    grid: TimeGrid,
    values: Vec<C64>,
    left: Vec<C64>,
}

impl Trace {
    pub fn new(grid: TimeGrid, values: Vec<C64>, left: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() || left.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples and {} left limits for {} grid points",
                values.len(),
                left.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values, left })
    }

    /// A trace without jumps.
    pub fn continuous(grid: TimeGrid, values: Vec<C64>) -> Result<Self> {
        let left = values.clone();
        Self::new(grid, values, left)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn left(&self) -> &[C64] {
        &self.left
    }

    /// ∫_a^b (|V|² − v_noise²) dt / 2Z₀ by the trapezoidal rule; `a` and `b`
    /// must be grid points.
    pub fn energy(&self, a: f64, b: f64, v_noise: f64, line: &LineParams) -> Result<f64> {
        let find = |t: f64| {
            self.grid.position(t).ok_or_else(|| Error::GridMismatch(format!("window edge {t:e} s is not a grid point")))
        };
        let (ia, ib) = (find(a)?, find(b)?);
        if ib < ia {
            return Err(Error::GridMismatch(format!("window [{a:e}, {b:e}] is reversed")));
        }
        let noise = v_noise * v_noise;
        let t = self.grid.times();
        let sum: f64 = (ia..ib)
            .map(|i| {
                let h = t[i + 1] - t[i];
                0.5 * h * (self.values[i].norm_sqr() + self.left[i + 1].norm_sqr() - 2.0 * noise)
            })
            .sum();
        Ok(sum / (2.0 * line.z0()))
    }
}

/// Samples V_in on `grid` with both one-sided limits.
pub fn sample_envelope(spec: &PulseSpec, grid: &TimeGrid) -> Trace {
    let t = grid.times();
    let n = t.len();
    let values = (0..n)
        .map(|i| match t.get(i + 1) {
            Some(next) => spec.envelope_on_segment(t[i], 0.5 * (t[i] + next)),
            None => spec.envelope(t[i]),
        })
        .collect();
    let left = (0..n)
        .map(|i| if i == 0 { spec.envelope(t[0]) } else { spec.envelope_on_segment(t[i], 0.5 * (t[i - 1] + t[i])) })
        .collect();
    Trace { grid: grid.clone(), values, left }
}

fn check_aligned(spec: &PulseSpec, grid: &TimeGrid) -> Result<()> {
    let (lo, hi) = (grid.first(), grid.last());
    match spec.switch_times().into_iter().find(|&t| t >= lo && t <= hi && !grid.contains(t)) {
        Some(t) => Err(Error::GridMismatch(format!("pulse switch at {t:e} s is not a grid point"))),
        None => Ok(()),
    }
}

/// V_out(t) = V_in(t) + (2Γ/k)·√(2Z₀)·⟨σ₋⟩(t) on the trajectory grid.
pub fn output_voltage(
    traj: &Trajectory,
    spec: &PulseSpec,
    params: &QubitParams,
    k: f64,
    line: &LineParams,
) -> Result<Trace> {
    check_aligned(spec, traj.grid())?;
    let emission = 2.0 * params.radiative() / k * (2.0 * line.z0()).sqrt();
    let v_in = sample_envelope(spec, traj.grid());
    let atom = traj.states().iter().map(|s| s.sm * emission);
    let values = v_in.values.iter().zip(atom.clone()).map(|(v, a)| v + a).collect();
    let left = v_in.left.iter().zip(atom).map(|(v, a)| v + a).collect();
    Trace::new(traj.grid().clone(), values, left)
}

/// Stationary reflection coefficient under a continuous drive of magnitude
/// `omega_mag` at detuning `delta`:
///
/// `r = 1 − (Γ/γ)·(1 + iδ/γ) / (1 + (δ/γ)² + Ω²/(γΓ))`.
///
/// This is the fixed point of [`crate::bloch::bloch_rhs`] inserted into the
/// input-output relation, so the sign of the imaginary part follows the
/// δ = ω_p − ω₁₀ convention used by the integrator.
pub fn reflection_ss(delta: f64, omega_mag: f64, params: &QubitParams) -> C64 {
    let gamma = params.decoherence();
    let big = params.radiative();
    let x = delta / gamma;
    let denom = 1.0 + x * x + omega_mag * omega_mag / (gamma * big);
    C64::new(1.0, 0.0) - C64::new(1.0, x) * (big / gamma / denom)
}

/// Fraction of incident power not reflected coherently, 1 − |r|².
pub fn power_loss_fraction(delta: f64, omega_mag: f64, params: &QubitParams) -> f64 {
    1.0 - reflection_ss(delta, omega_mag, params).norm_sqr()
}

/// Weak-probe efficiency of an exponentially rising pulse with rise time `tau`:
/// `Γ²/τ / ((Γ/2 + Γ_φ,l)(Γ/2 + Γ_φ,l + 1/τ)²)`.
pub fn analytic_efficiency(params: &QubitParams, tau: f64) -> f64 {
    let big = params.radiative();
    let gamma = params.decoherence();
    let rate = 1.0 / tau;
    big * big * rate / (gamma * (gamma + rate) * (gamma + rate))
}

/// Average photon number carried by `energy` at the qubit frequency.
pub fn photon_number(energy: f64, params: &QubitParams, line: &LineParams) -> f64 {
    energy / (line.hbar() * params.omega10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindows {
    /// Input energy, integrated over [t_i, t0] of the far-detuned trace.
    pub off_res: f64,
    /// Re-emitted energy, integrated over [t0, t_f] of the resonant trace.
    pub res: f64,
    /// Set when noise subtraction drove either energy negative.
    pub negative: bool,
}

/// E_offres = ∫_{t_i}^{t0} and E_res = ∫_{t0}^{t_f} of (|V|² − |V_N|²)/2Z₀.
pub fn energy_windows(
    v_res: &Trace,
    v_offres: &Trace,
    v_noise: f64,
    t_i: f64,
    t0: f64,
    t_f: f64,
    line: &LineParams,
) -> Result<EnergyWindows> {
    let off_res = v_offres.energy(t_i, t0, v_noise, line)?;
    let res = v_res.energy(t0, t_f, v_noise, line)?;
    Ok(EnergyWindows { off_res, res, negative: off_res < 0.0 || res < 0.0 })
}

/// η = E_res / E_offres.
pub fn efficiency(energies: &EnergyWindows) -> Result<f64> {
    if energies.off_res > 0.0 {
        Ok(energies.res / energies.off_res)
    } else {
        Err(Error::ZeroInputEnergy(energies.off_res))
    }
}

/// Centered moving average over `window` seconds; models the smoothing of a
/// finite demodulation time. `window = 0` is the identity.
pub fn demod_filter(trace: &Trace, window: f64) -> Result<Trace> {
    if !(window >= 0.0 && window.is_finite()) {
        return Err(Error::invalid("filter window", format!("must be >= 0, got {window}")));
    }
    if window == 0.0 {
        return Ok(trace.clone());
    }
    let t = trace.times();
    let v = trace.values();
    let half = window / 2.0;
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut sum = C64::new(0.0, 0.0);
    let mut out = Vec::with_capacity(t.len());
    for &ti in t {
        while hi < t.len() && t[hi] <= ti + half {
            sum += v[hi];
            hi += 1;
        }
        while t[lo] < ti - half {
            sum -= v[lo];
            lo += 1;
        }
        out.push(sum / (hi - lo) as f64);
    }
    Trace::continuous(trace.grid.clone(), out)
}

/// How the far-detuned reference trace is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OffResReference {
    /// V_offres = V_in exactly (r = 1 far from resonance).
    Analytic,
    /// Full simulation at detuning `delta_off` (rad/s), |δ| ≥ 50γ.
    Simulated { delta_off: f64 },
}

/// One pulse hitting the atom: everything needed to run the pipeline.
#[derive(Debug, Clone, Copy)]
pub struct Simulation {
    pub params: QubitParams,
    pub line: LineParams,
    pub spec: PulseSpec,
    /// Probe detuning δ = ω_p − ω₁₀ (rad/s) of the resonant run.
    pub delta: f64,
    /// Maximum step; `None` picks [`PulseSpec::default_step`].
    pub dt: Option<f64>,
    pub t_f: f64,
    pub offres: OffResReference,
    /// Noise level V_N subtracted in the energy windows (volts).
    pub v_noise: f64,
}

impl Simulation {
    pub fn new(params: QubitParams, spec: PulseSpec) -> Self {
        Self {
            params,
            line: LineParams::default(),
            spec,
            delta: 0.0,
            dt: None,
            t_f: spec.t0() + DEFAULT_EMISSION_WINDOW,
            offres: OffResReference::Analytic,
            v_noise: 0.0,
        }
    }

    pub fn coupling(&self) -> f64 {
        coupling_k(&self.params, &self.line)
    }

    /// Step used at detuning `delta`. The default also resolves the free
    /// precession at δ with at least ten steps per radian.
    pub fn step(&self, delta: f64) -> f64 {
        match self.dt {
            Some(dt) => dt,
            None => {
                let base = self.spec.default_step(self.params.decoherence());
                if delta != 0.0 {
                    base.min(0.1 / delta.abs())
                } else {
                    base
                }
            }
        }
    }

    pub fn grid(&self, delta: f64) -> Result<TimeGrid> {
        build_grid(&self.spec, self.step(delta), self.t_f)
    }

    /// Integrates from the ground state at detuning `delta`.
    pub fn trajectory(&self, delta: f64) -> Result<Trajectory> {
        let grid = self.grid(delta)?;
        let drive = PulseDrive::new(self.spec, self.coupling(), &self.line);
        integrate(&DriveContext::new(delta, self.params, drive), &grid, BlochState::ground())
    }

    /// Reflected voltage at detuning `delta`.
    pub fn reflected(&self, delta: f64) -> Result<(Trajectory, Trace)> {
        let traj = self.trajectory(delta)?;
        let v_out = output_voltage(&traj, &self.spec, &self.params, self.coupling(), &self.line)?;
        Ok((traj, v_out))
    }
}

/// Far-detuned reference trace used for E_offres.
pub fn offres_reference(sim: &Simulation, mode: OffResReference) -> Result<Trace> {
    match mode {
        OffResReference::Analytic => Ok(sample_envelope(&sim.spec, &sim.grid(sim.delta)?)),
        OffResReference::Simulated { delta_off } => {
            let limit = 50.0 * sim.params.decoherence();
            if !(delta_off.abs() >= limit) {
                return Err(Error::invalid(
                    "delta_off",
                    format!("|δ_off| = {:e} rad/s is below 50γ = {limit:e} rad/s", delta_off.abs()),
                ));
            }
            Ok(sim.reflected(delta_off)?.1)
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScatterResult {
    pub v_in: Trace,
    pub v_out: Trace,
    pub v_offres: Trace,
    pub energies: EnergyWindows,
    pub eta: f64,
    pub traj: Trajectory,
}

impl ScatterResult {
    pub fn photon_number(&self, params: &QubitParams, line: &LineParams) -> f64 {
        photon_number(self.energies.off_res, params, line)
    }
}

/// Runs the resonant simulation and the off-resonant reference and evaluates η.
pub fn simulate(sim: &Simulation) -> Result<ScatterResult> {
    let (traj, v_out) = sim.reflected(sim.delta)?;
    let v_in = sample_envelope(&sim.spec, traj.grid());
    let v_offres = match sim.offres {
        OffResReference::Analytic => v_in.clone(),
        mode => offres_reference(sim, mode)?,
    };
    let energies = energy_windows(&v_out, &v_offres, sim.v_noise, sim.spec.t_i(), sim.spec.t0(), sim.t_f, &sim.line)?;
    let eta = efficiency(&energies)?;
    Ok(ScatterResult { v_in, v_out, v_offres, energies, eta, traj })
}

//! Driven optical Bloch equations for ⟨σ₋⟩ and ⟨σ_z⟩.
//!
//! ```text
//! d⟨σ₋⟩/dt = (iδ − γ)⟨σ₋⟩ + Ω(t)⟨σ_z⟩/2
//! d⟨σ_z⟩/dt = −Γ(1 + ⟨σ_z⟩) − Ω(t)⟨σ₊⟩ − Ω*(t)⟨σ₋⟩
//! ```
//!
//! ⟨σ₊⟩ is the conjugate of ⟨σ₋⟩ and is never integrated separately.
//! Integration is classical RK4 with one or more fixed steps per grid segment;
//! the grid is expected to put a sample on every drive discontinuity.

use crate::error::{Error, Result};
use crate::model::{excited_population, BlochState, LineParams, QubitParams, BLOCH_TOL};
use crate::pulse::{PulseSpec, TimeGrid};
use crate::C64;

/// A complex Rabi frequency Ω(t) in rad/s.
pub trait Drive: Sync {
    /// Ω at `t` on the smooth branch containing `anchor`.
    fn rabi_on_segment(&self, t: f64, anchor: f64) -> C64;

    /// Right-continuous Ω(t).
    fn rabi(&self, t: f64) -> C64 {
        self.rabi_on_segment(t, t)
    }
}

/// Ω(t) = k·V_in(t)/√(2Z₀) for a shaped pulse.
#[derive(Debug, Clone, Copy)]
pub struct PulseDrive {
    spec: PulseSpec,
    scale: f64,
}

impl PulseDrive {
    pub fn new(spec: PulseSpec, k: f64, line: &LineParams) -> Self {
        Self { spec, scale: k / (2.0 * line.z0()).sqrt() }
    }

    pub fn spec(&self) -> &PulseSpec {
        &self.spec
    }
}

impl Drive for PulseDrive {
    fn rabi_on_segment(&self, t: f64, anchor: f64) -> C64 {
        self.spec.envelope_on_segment(t, anchor) * self.scale
    }
}

/// Continuous-wave drive.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDrive(pub C64);

impl Drive for ConstantDrive {
    fn rabi_on_segment(&self, _t: f64, _anchor: f64) -> C64 {
        self.0
    }
}

impl<D: Drive> Drive for &D {
    fn rabi_on_segment(&self, t: f64, anchor: f64) -> C64 {
        (*self).rabi_on_segment(t, anchor)
    }
}

/// Detuning δ = ω_p − ω₁₀ (rad/s), qubit and drive.
#[derive(Debug, Clone, Copy)]
pub struct DriveContext<D> {
    pub delta: f64,
    pub params: QubitParams,
    pub drive: D,
}

impl<D: Drive> DriveContext<D> {
    pub fn new(delta: f64, params: QubitParams, drive: D) -> Self {
        Self { delta, params, drive }
    }
}

/// Time derivative of a [`BlochState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochRate {
    pub dsm: C64,
    pub dsz: f64,
}

pub fn bloch_rhs(state: &BlochState, omega: C64, delta: f64, params: &QubitParams) -> BlochRate {
    let gamma = params.decoherence();
    let dsm = C64::new(-gamma, delta) * state.sm + omega * (state.sz / 2.0);
    // Ω⟨σ₊⟩ + Ω*⟨σ₋⟩ = 2 Re(Ω*⟨σ₋⟩)
    let dsz = -params.radiative() * (1.0 + state.sz) - 2.0 * (omega.conj() * state.sm).re;
    BlochRate { dsm, dsz }
}

fn advance(s: &BlochState, r: &BlochRate, h: f64) -> BlochState {
    BlochState { sm: s.sm + r.dsm * h, sz: s.sz + r.dsz * h }
}

/// Sampled solution of the Bloch equations.
///
/// `omega[i]` is the right limit of Ω at `grid[i]` and `omega_left[i]` the
/// left limit; they differ only on drive discontinuities.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: TimeGrid,
    states: Vec<BlochState>,
    omega: Vec<C64>,
    omega_left: Vec<C64>,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    pub fn states(&self) -> &[BlochState] {
        &self.states
    }

    pub fn omega(&self) -> &[C64] {
        &self.omega
    }

    pub fn omega_left(&self) -> &[C64] {
        &self.omega_left
    }

    pub fn excited_population(&self) -> Vec<f64> {
        self.states.iter().map(excited_population).collect()
    }

    pub fn max_norm_sqr(&self) -> f64 {
        self.states.iter().map(BlochState::norm_sqr).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn last(&self) -> &BlochState {
        self.states.last().expect("trajectory is never empty")
    }
}

/// RK4 over `grid`, one step per segment.
pub fn integrate<D: Drive>(ctx: &DriveContext<D>, grid: &TimeGrid, initial: BlochState) -> Result<Trajectory> {
    if !initial.is_physical(BLOCH_TOL) {
        return Err(Error::invalid("initial", format!("not a valid Bloch state: {initial:?}")));
    }
    let n = grid.len();
    let mut states = Vec::with_capacity(n);
    let mut omega = Vec::with_capacity(n);
    let mut omega_left = Vec::with_capacity(n);
    let rhs = |s: &BlochState, w: C64| bloch_rhs(s, w, ctx.delta, &ctx.params);

    let mut s = initial;
    states.push(s);
    for (a, b) in grid.segments() {
        let h = b - a;
        let mid = 0.5 * (a + b);
        let wa = ctx.drive.rabi_on_segment(a, mid);
        let wm = ctx.drive.rabi_on_segment(mid, mid);
        let wb = ctx.drive.rabi_on_segment(b, mid);

        let k1 = rhs(&s, wa);
        let k2 = rhs(&advance(&s, &k1, h / 2.0), wm);
        let k3 = rhs(&advance(&s, &k2, h / 2.0), wm);
        let k4 = rhs(&advance(&s, &k3, h), wb);
        s = BlochState {
            sm: s.sm + (k1.dsm + (k2.dsm + k3.dsm) * 2.0 + k4.dsm) * (h / 6.0),
            sz: s.sz + (k1.dsz + 2.0 * (k2.dsz + k3.dsz) + k4.dsz) * (h / 6.0),
        };
        if !s.is_physical(BLOCH_TOL) {
            return Err(Error::BlochNorm { t: b, norm: s.norm_sqr().sqrt() });
        }
        states.push(s);
        omega.push(wa);
        omega_left.push(wb);
    }
    let t_end = grid.last();
    omega.push(ctx.drive.rabi(t_end));
    omega_left.insert(0, omega[0]);

    Ok(Trajectory { grid: grid.clone(), states, omega, omega_left })
}

/// Fixed point of the Bloch equations under constant Ω.
pub fn steady_state(params: &QubitParams, delta: f64, omega: C64) -> BlochState {
    let gamma = params.decoherence();
    let saturation = omega.norm_sqr() * gamma / (params.radiative() * (gamma * gamma + delta * delta));
    let sz = -1.0 / (1.0 + saturation);
    let sm = omega * sz / (C64::new(gamma, -delta) * 2.0);
    BlochState { sm, sz }
}

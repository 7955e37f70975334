//! Spectroscopy calibration on synthetic (or recorded) reflection data.
//!
//! The measurement chain sees `r_all = √(G·A)·r(δ, Ω)` where `A` is the
//! source-to-chip power attenuation and `G` the chip-to-receiver gain. The
//! chain recovered here runs:
//!
//! 1. [`remove_background`]: divide out the far-detuned background.
//! 2. [`circle_fit`]: Γ, γ and ω₁₀ from the weak-probe resonance circle.
//! 3. [`power_sweep_fit`]: k_src from the on-resonance saturation curve.
//! 4. [`derive_chain`]: A, G and k from k_src, Γ and the background level.
//!
//! Synthetic noise is complex Gaussian with independent quadratures, drawn
//! from a ChaCha8 generator seeded with `seed`, so a given seed always
//! reproduces the same trace.

mod circle;
mod power;

pub use circle::{circle_fit, remove_background, BackgroundRemoved, CircleFit};
pub use power::{power_sweep_fit, PowerSweepFit};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{coupling_k, LineParams, QubitParams};
use crate::scattering::reflection_ss;
use crate::C64;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Measurement chain: attenuation A, gain G (both power ratios) and the
/// source-referred Rabi constant k_src = √A·k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    attenuation: f64,
    gain: f64,
    k_src: f64,
}

impl ChainParams {
    pub fn new(attenuation: f64, gain: f64, k_src: f64) -> Result<Self> {
        if !(attenuation > 0.0 && attenuation <= 1.0) {
            return Err(Error::invalid("attenuation", format!("must lie in (0, 1], got {attenuation}")));
        }
        if !(gain >= 1.0 && gain.is_finite()) {
            return Err(Error::invalid("gain", format!("must be >= 1, got {gain}")));
        }
        if !(k_src > 0.0 && k_src.is_finite()) {
            return Err(Error::invalid("k_src", format!("must be > 0, got {k_src}")));
        }
        Ok(Self { attenuation, gain, k_src })
    }

    /// Chain with A and G in dB; k_src follows from k = √(8πΓ/ħω₁₀).
    pub fn from_db(attenuation_db: f64, gain_db: f64, params: &QubitParams, line: &LineParams) -> Result<Self> {
        let a = db_to_linear(attenuation_db);
        Self::new(a, db_to_linear(gain_db), a.sqrt() * coupling_k(params, line))
    }

    /// Spectroscopy chain of the characterised device: A = −133.66 dB, G = 60.87 dB.
    pub fn spectroscopy_reference(params: &QubitParams, line: &LineParams) -> Self {
        Self::from_db(-133.66, 60.87, params, line).expect("reference chain is valid")
    }

    /// Time-domain chain of the characterised device: A = −154.84 dB, G = 104.51 dB.
    pub fn time_domain_reference(params: &QubitParams, line: &LineParams) -> Self {
        Self::from_db(-154.84, 104.51, params, line).expect("reference chain is valid")
    }

    pub fn attenuation(&self) -> f64 {
        self.attenuation
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn k_src(&self) -> f64 {
        self.k_src
    }

    /// Chip-referred k = k_src/√A.
    pub fn k(&self) -> f64 {
        self.k_src / self.attenuation.sqrt()
    }

    pub fn attenuation_db(&self) -> f64 {
        linear_to_db(self.attenuation)
    }

    pub fn gain_db(&self) -> f64 {
        linear_to_db(self.gain)
    }

    /// Far-detuned |r_all| = √(G·A).
    pub fn background(&self) -> f64 {
        (self.gain * self.attenuation).sqrt()
    }
}

/// Frequency-swept reflection at one source power.
///
/// Detunings are probe offsets from `reference` (rad/s); the qubit sits at
/// an unknown offset that [`circle_fit`] recovers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopyTrace {
    pub reference: f64,
    pub detunings: Vec<f64>,
    pub r_all: Vec<C64>,
    pub source_power: f64,
}

impl SpectroscopyTrace {
    pub fn new(reference: f64, detunings: Vec<f64>, r_all: Vec<C64>, source_power: f64) -> Result<Self> {
        if detunings.len() != r_all.len() {
            return Err(Error::invalid("spectroscopy", "detunings and samples differ in length"));
        }
        if detunings.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("spectroscopy", "detunings must be strictly increasing"));
        }
        if r_all.iter().any(|r| !(r.re.is_finite() && r.im.is_finite())) || detunings.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("spectroscopy", "samples must be finite"));
        }
        Ok(Self { reference, detunings, r_all, source_power })
    }
}

/// One on-resonance point of a power sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub p_src: f64,
    /// Probe offset from the trace reference frequency (rad/s).
    pub detuning: f64,
    pub r: C64,
}

fn noise_source(sigma: f64, seed: u64) -> Result<(ChaCha8Rng, Normal<f64>)> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid("noise_sigma", e.to_string()))?;
    Ok((ChaCha8Rng::seed_from_u64(seed), normal))
}

/// Noisy `√(GA)·r(δ, Ω)` sampled at `detunings` (offsets from `reference`).
/// `noise_sigma` is the per-quadrature standard deviation in r_all units.
#[allow(clippy::too_many_arguments)]
pub fn synth_spectroscopy(
    params: &QubitParams,
    chain: &ChainParams,
    reference: f64,
    detunings: &[f64],
    omega_mag: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<SpectroscopyTrace> {
    let (mut rng, normal) = noise_source(noise_sigma, seed)?;
    let scale = chain.background();
    let r_all = detunings
        .iter()
        .map(|&d| {
            let clean = reflection_ss(reference + d - params.omega10(), omega_mag, params) * scale;
            clean + C64::new(normal.sample(&mut rng), normal.sample(&mut rng))
        })
        .collect();
    let p_src = (omega_mag / chain.k_src()).powi(2);
    SpectroscopyTrace::new(reference, detunings.to_vec(), r_all, p_src)
}

/// Raw `r_all` at fixed probe offset `detuning` for each source power.
pub fn synth_power_sweep(
    params: &QubitParams,
    chain: &ChainParams,
    reference: f64,
    detuning: f64,
    powers: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<PowerPoint>> {
    let (mut rng, normal) = noise_source(noise_sigma, seed)?;
    let delta = reference + detuning - params.omega10();
    Ok(powers
        .iter()
        .map(|&p| {
            let omega = chain.k_src() * p.sqrt();
            let r = reflection_ss(delta, omega, params) * chain.background()
                + C64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            PowerPoint { p_src: p, detuning, r }
        })
        .collect())
}

/// A = k_src²ħω₁₀/(8πΓ), k = √(8πΓ/ħω₁₀), G = |r_all,bg|²/A.
pub fn derive_chain(k_src: f64, params: &QubitParams, background: f64, line: &LineParams) -> Result<ChainParams> {
    let k = coupling_k(params, line);
    let attenuation = (k_src / k).powi(2);
    let gain = background * background / attenuation;
    let chain = ChainParams::new(attenuation, gain, k_src)?;
    debug_assert!((chain.k() - k).abs() <= 1e-12 * k);
    Ok(chain)
}

/// Everything the calibration chain extracts, with 1σ errors.
#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub params: QubitParams,
    pub circle: CircleFit,
    pub power: PowerSweepFit,
    pub chain: ChainParams,
    pub background: C64,
}

/// Runs the full chain on a weak-probe spectroscopy trace plus a raw
/// on-resonance power sweep recorded through the same chain.
pub fn calibrate(trace: &SpectroscopyTrace, sweep: &[PowerPoint], line: &LineParams) -> Result<Calibration> {
    let removed = remove_background(trace)?;
    let circle = circle_fit(&removed.r, &trace.detunings)?;
    let params = circle.qubit_params(trace.reference)?;
    let normalised: Vec<PowerPoint> = sweep.iter().map(|p| PowerPoint { r: p.r / removed.background, ..*p }).collect();
    let power = power_sweep_fit(&normalised, &params, trace.reference)?;
    let chain = derive_chain(power.k_src, &params, removed.background.norm(), line)?;
    Ok(Calibration { params, circle, power, chain, background: removed.background })
}

//! Shared physical types: qubit and line parameters, Bloch states.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Reduced Planck constant (J s), CODATA 2018 exact value.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Slack allowed on the Bloch-vector length and on `sz` bounds.
pub const BLOCH_TOL: f64 = 1e-9;

/// Two-level atom parameters, all angular (rad/s).
///
/// `dephasing` is the lumped rate Γ_φ,l = Γ_φ + Γ_nr/2. The two contributions
/// cannot be separated from reflection data, so only their combination is kept.
/// It may be zero (the lossless limit); the other two rates must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    omega10: f64,
    radiative: f64,
    dephasing: f64,
}

impl QubitParams {
    pub fn new(omega10: f64, radiative: f64, dephasing: f64) -> Result<Self> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("omega10", omega10)?;
        positive("radiative", radiative)?;
        if !(dephasing.is_finite() && dephasing >= 0.0) {
            return Err(Error::invalid("dephasing", format!("must be finite and >= 0, got {dephasing}")));
        }
        Ok(Self { omega10, radiative, dephasing })
    }

    /// Build from cyclic frequencies in MHz (the X/2π values of a parameter table).
    pub fn from_cyclic_mhz(f10_mhz: f64, radiative_mhz: f64, dephasing_mhz: f64) -> Result<Self> {
        Self::new(mhz_to_rad(f10_mhz), mhz_to_rad(radiative_mhz), mhz_to_rad(dephasing_mhz))
    }

    /// Build from Γ/2π and γ/2π in MHz; Γ_φ,l = γ − Γ/2.
    pub fn from_decoherence_mhz(f10_mhz: f64, radiative_mhz: f64, decoherence_mhz: f64) -> Result<Self> {
        let dephasing_mhz = decoherence_mhz - radiative_mhz / 2.0;
        if dephasing_mhz < 0.0 {
            return Err(Error::invalid(
                "decoherence",
                format!("γ/2π = {decoherence_mhz} MHz must exceed Γ/4π = {} MHz", radiative_mhz / 2.0),
            ));
        }
        Self::from_cyclic_mhz(f10_mhz, radiative_mhz, dephasing_mhz)
    }

    /// The characterised device: ω₁₀/2π = 4766 MHz, Γ/2π = 2.271 MHz,
    /// γ/2π = 1.174 MHz (so Γ_φ,l/2π = 0.0385 MHz).
    pub fn table_one() -> Self {
        Self::from_decoherence_mhz(4766.0, 2.271, 1.174).expect("reference parameters are valid")
    }

    pub fn omega10(&self) -> f64 {
        self.omega10
    }

    /// Radiative relaxation rate Γ.
    pub fn radiative(&self) -> f64 {
        self.radiative
    }

    /// Lumped pure-dephasing plus non-radiative rate Γ_φ,l.
    pub fn dephasing(&self) -> f64 {
        self.dephasing
    }

    /// Decoherence rate γ = Γ/2 + Γ_φ,l.
    pub fn decoherence(&self) -> f64 {
        self.radiative / 2.0 + self.dephasing
    }

    /// T₂ = 1/γ, the matched rise time.
    pub fn t2(&self) -> f64 {
        1.0 / self.decoherence()
    }
}

/// Transmission-line constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    z0: f64,
    hbar: f64,
}

impl LineParams {
    pub fn new(z0: f64) -> Result<Self> {
        if !(z0.is_finite() && z0 > 0.0) {
            return Err(Error::invalid("z0", format!("must be > 0, got {z0}")));
        }
        Ok(Self { z0, hbar: HBAR })
    }

    pub fn z0(&self) -> f64 {
        self.z0
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Instantaneous power |V|²/2Z₀ carried by a complex envelope.
    pub fn power(&self, v: C64) -> f64 {
        v.norm_sqr() / (2.0 * self.z0)
    }
}

impl Default for LineParams {
    fn default() -> Self {
        Self { z0: 50.0, hbar: HBAR }
    }
}

/// Expectation values ⟨σ₋⟩ and ⟨σ_z⟩; ⟨σ₊⟩ is the conjugate of `sm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub sm: C64,
    pub sz: f64,
}

impl BlochState {
    pub fn new(sm: C64, sz: f64) -> Self {
        Self { sm, sz }
    }

    pub fn ground() -> Self {
        Self { sm: C64::new(0.0, 0.0), sz: -1.0 }
    }

    pub fn excited() -> Self {
        Self { sm: C64::new(0.0, 0.0), sz: 1.0 }
    }

    pub fn sp(&self) -> C64 {
        self.sm.conj()
    }

    /// Squared Bloch-vector length, 4|⟨σ₋⟩|² + ⟨σ_z⟩².
    pub fn norm_sqr(&self) -> f64 {
        4.0 * self.sm.norm_sqr() + self.sz * self.sz
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        self.norm_sqr() <= 1.0 + tol && self.sz >= -1.0 - tol && self.sz <= 1.0 + tol
    }
}

/// Coupling constant k = √(8πΓ/ħω₁₀) linking Ω(t) to √P_in(t).
pub fn coupling_k(params: &QubitParams, line: &LineParams) -> f64 {
    coupling_from_rates(params.radiative(), params.omega10(), line.hbar())
}

/// Same as [`coupling_k`] on raw rates; also defined for Γ = 0.
pub fn coupling_from_rates(radiative: f64, omega_r: f64, hbar: f64) -> f64 {
    (8.0 * PI * radiative / (hbar * omega_r)).sqrt()
}

/// P_e = (1 + ⟨σ_z⟩)/2, clamped to [0, 1].
pub fn excited_population(state: &BlochState) -> f64 {
    ((1.0 + state.sz) / 2.0).clamp(0.0, 1.0)
}

pub fn mhz_to_rad(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz * 1e6
}

pub fn rad_to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e6)
}

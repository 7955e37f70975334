//! TOML run configuration in engineering units (MHz, ns, nV).
//!
//! Every section and key is optional; omitted values take the reference
//! device and working point. Unknown keys are rejected.
//!
//! ```toml
//! [qubit]
//! f10_mhz = 4766.0          # ω₁₀/2π
//! radiative_mhz = 2.271     # Γ/2π
//! decoherence_mhz = 1.174   # γ/2π; or dephasing_mhz = Γ_φ/2π
//! z0_ohm = 50.0
//!
//! [pulse]
//! omega_mhz = 0.154         # peak |Ω|/2π; or v_peak_nv (Ω wins if both)
//! tau_ns = "auto"           # 1/γ
//! t0_ns = 0.0
//! t_m_ns = -2500.0
//! mode = "none"             # none | square | sawtooth
//! n = 0
//! theta_deg = 180.0
//! duty = 0.5
//! f_m_mhz = 0.0
//!
//! [sim]
//! delta_mhz = 0.0           # probe detuning of the resonant run
//! window_ns = 5000.0        # t_f = t0 + window
//! offres = "analytic"       # analytic | simulated
//! delta_off_mhz = 1000.0
//! v_noise_nv = 0.0
//! # dt_ns, t_i_ns: automatic unless set
//!
//! [sweep]
//! n_max = 50
//! theta_points = 101
//! duty_min = 0.4
//! duty_max = 0.75
//! fm_max_mhz = 20.0
//! fm_points = 81
//! grid_step_ns = 5.0
//!
//! [calibrate]
//! reference_mhz = 4765.0
//! noise = 0.0               # per-quadrature σ as a fraction of the circle diameter
//! attenuation_db = -133.66
//! gain_db = 60.87
//! span_linewidths = 30.0
//! points = 601
//! probe_fraction = 0.01     # probe |Ω| in units of γ
//! power_min_w = 1e-8
//! power_decades = 5.0
//! power_points = 41
//! # input = "trace.csv"    # relative to the config file
//!
//! [output]
//! dir = "out"
//! ```

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use atomfield_core::model::mhz_to_rad;
use atomfield_core::scattering::OffResReference;
use atomfield_core::{LineParams, Modulation, QubitParams, WorkingPoint};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub qubit: QubitSection,
    #[serde(default)]
    pub pulse: PulseSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub calibrate: CalibrateSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QubitSection {
    pub f10_mhz: f64,
    pub radiative_mhz: f64,
    pub decoherence_mhz: Option<f64>,
    pub dephasing_mhz: Option<f64>,
    pub z0_ohm: f64,
}

impl Default for QubitSection {
    fn default() -> Self {
        Self { f10_mhz: 4766.0, radiative_mhz: 2.271, decoherence_mhz: None, dephasing_mhz: None, z0_ohm: 50.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Tau {
    Ns(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    None,
    Square,
    Sawtooth,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    pub omega_mhz: Option<f64>,
    pub v_peak_nv: Option<f64>,
    pub tau_ns: Tau,
    pub t0_ns: f64,
    pub t_m_ns: f64,
    pub mode: Mode,
    pub n: u32,
    pub theta_deg: f64,
    pub duty: f64,
    pub f_m_mhz: f64,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self {
            omega_mhz: None,
            v_peak_nv: None,
            tau_ns: Tau::Auto(AutoTag::Auto),
            t0_ns: 0.0,
            t_m_ns: -2500.0,
            mode: Mode::None,
            n: 0,
            theta_deg: 180.0,
            duty: 0.5,
            f_m_mhz: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffRes {
    Analytic,
    Simulated,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub delta_mhz: f64,
    pub dt_ns: Option<f64>,
    pub t_i_ns: Option<f64>,
    pub window_ns: f64,
    pub offres: OffRes,
    pub delta_off_mhz: f64,
    pub v_noise_nv: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            delta_mhz: 0.0,
            dt_ns: None,
            t_i_ns: None,
            window_ns: 5000.0,
            offres: OffRes::Analytic,
            delta_off_mhz: 1000.0,
            v_noise_nv: 0.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub n_max: u32,
    pub theta_points: usize,
    pub duty_min: f64,
    pub duty_max: f64,
    pub fm_max_mhz: f64,
    pub fm_points: usize,
    pub grid_step_ns: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            n_max: 50,
            theta_points: 101,
            duty_min: 0.4,
            duty_max: 0.75,
            fm_max_mhz: 20.0,
            fm_points: 81,
            grid_step_ns: 5.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateSection {
    pub input: Option<PathBuf>,
    pub reference_mhz: f64,
    pub noise: f64,
    pub attenuation_db: f64,
    pub gain_db: f64,
    pub span_linewidths: f64,
    pub points: usize,
    pub probe_fraction: f64,
    pub power_min_w: f64,
    pub power_decades: f64,
    pub power_points: usize,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self {
            input: None,
            reference_mhz: 4765.0,
            noise: 0.0,
            attenuation_db: -133.66,
            gain_db: 60.87,
            span_linewidths: 30.0,
            points: 601,
            probe_fraction: 0.01,
            power_min_w: 1e-8,
            power_decades: 5.0,
            power_points: 41,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

fn bad(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{key}`: {reason}"))
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let cfg: RunConfig = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                let mut cfg: RunConfig =
                    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                if let (Some(input), Some(dir)) = (&cfg.calibrate.input, p.parent()) {
                    cfg.calibrate.input = Some(dir.join(input));
                }
                cfg
            }
        };
        // build everything once so bad values fail at load time
        let wp = cfg.working_point()?;
        wp.simulation(cfg.modulation()?).map_err(CliError::from_config)?;
        cfg.check_sections()?;
        Ok(cfg)
    }

    pub fn qubit(&self) -> Result<QubitParams, CliError> {
        let q = &self.qubit;
        let params = match (q.decoherence_mhz, q.dephasing_mhz) {
            (Some(_), Some(_)) => {
                return Err(bad("qubit.dephasing_mhz", "give either decoherence_mhz or dephasing_mhz, not both"))
            }
            (Some(g), None) => QubitParams::from_decoherence_mhz(q.f10_mhz, q.radiative_mhz, g),
            (None, Some(phi)) => QubitParams::from_cyclic_mhz(q.f10_mhz, q.radiative_mhz, phi),
            (None, None) => QubitParams::from_decoherence_mhz(q.f10_mhz, q.radiative_mhz, 1.174),
        };
        params.map_err(CliError::from_config)
    }

    pub fn line(&self) -> Result<LineParams, CliError> {
        LineParams::new(self.qubit.z0_ohm).map_err(CliError::from_config)
    }

    /// Working point with Ω taking precedence over V; warns when both are set.
    pub fn working_point(&self) -> Result<WorkingPoint, CliError> {
        let params = self.qubit()?;
        let mut wp = WorkingPoint::new(params);
        wp.line = self.line()?;
        let p = &self.pulse;
        match (p.omega_mhz, p.v_peak_nv) {
            (Some(omega), v) => {
                if v.is_some() {
                    eprintln!("warning: both pulse.omega_mhz and pulse.v_peak_nv are set; using omega_mhz");
                }
                wp.omega_peak = mhz_to_rad(omega);
            }
            (None, Some(v)) => {
                let k = atomfield_core::coupling_k(&params, &wp.line);
                wp.omega_peak = v * 1e-9 * k / (2.0 * wp.line.z0()).sqrt();
            }
            (None, None) => {}
        }
        if !(wp.omega_peak > 0.0 && wp.omega_peak.is_finite()) {
            return Err(bad("pulse.omega_mhz", "peak drive must be > 0"));
        }
        wp.tau = match p.tau_ns {
            Tau::Auto(_) => params.t2(),
            Tau::Ns(ns) => ns * 1e-9,
        };
        wp.t0 = p.t0_ns * 1e-9;
        wp.t_m = p.t_m_ns * 1e-9;
        let s = &self.sim;
        wp.t_i = s.t_i_ns.map(|t| t * 1e-9);
        wp.dt = s.dt_ns.map(|t| t * 1e-9);
        if !(s.window_ns > 0.0 && s.window_ns.is_finite()) {
            return Err(bad("sim.window_ns", "must be > 0"));
        }
        wp.window = s.window_ns * 1e-9;
        if !(s.v_noise_nv >= 0.0) {
            return Err(bad("sim.v_noise_nv", "must be >= 0"));
        }
        wp.v_noise = s.v_noise_nv * 1e-9;
        wp.offres = match s.offres {
            OffRes::Analytic => OffResReference::Analytic,
            OffRes::Simulated => OffResReference::Simulated { delta_off: mhz_to_rad(s.delta_off_mhz) },
        };
        if let Some(dt) = wp.dt {
            if !(dt > 0.0) {
                return Err(bad("sim.dt_ns", "must be > 0"));
            }
        }
        Ok(wp)
    }

    pub fn modulation(&self) -> Result<Modulation, CliError> {
        let p = &self.pulse;
        Ok(match p.mode {
            Mode::None => Modulation::None,
            Mode::Square => Modulation::Square { intervals: p.n, theta: p.theta_deg.to_radians(), duty: p.duty },
            Mode::Sawtooth => Modulation::Sawtooth { f_m: p.f_m_mhz * 1e6 },
        })
    }

    pub fn theta(&self) -> f64 {
        self.pulse.theta_deg * PI / 180.0
    }

    fn check_sections(&self) -> Result<(), CliError> {
        let p = &self.pulse;
        // square-mode fields are validated even when another mode is active
        if !(p.duty > 0.0 && p.duty < 1.0) {
            return Err(bad("pulse.duty", format!("must lie in (0, 1), got {}", p.duty)));
        }
        if !p.theta_deg.is_finite() {
            return Err(bad("pulse.theta_deg", "must be finite"));
        }
        let w = &self.sweep;
        if w.theta_points < 2 || w.fm_points < 2 {
            return Err(bad("sweep", "theta_points and fm_points must be >= 2"));
        }
        if !(0.0 < w.duty_min && w.duty_min < w.duty_max && w.duty_max < 1.0) {
            return Err(bad("sweep.duty_min", "need 0 < duty_min < duty_max < 1"));
        }
        if !(w.fm_max_mhz > 0.0) {
            return Err(bad("sweep.fm_max_mhz", "must be > 0"));
        }
        if !(w.grid_step_ns > 0.0) {
            return Err(bad("sweep.grid_step_ns", "must be > 0"));
        }
        let c = &self.calibrate;
        if !(c.noise >= 0.0) {
            return Err(bad("calibrate.noise", "must be >= 0"));
        }
        if c.points < 50 {
            return Err(bad("calibrate.points", "need at least 50"));
        }
        if !(c.probe_fraction > 0.0) {
            return Err(bad("calibrate.probe_fraction", "must be > 0"));
        }
        if !(c.span_linewidths > 0.0) {
            return Err(bad("calibrate.span_linewidths", "must be > 0"));
        }
        if !(c.power_min_w > 0.0 && c.power_decades > 0.0) || c.power_points < 3 {
            return Err(bad("calibrate.power_points", "need power_min_w > 0, power_decades > 0 and >= 3 points"));
        }
        Ok(())
    }
}

//! Background removal and weak-probe circle fitting.
//!
//! At weak drive the stationary reflection is `r = 1 − D/(1 − iu)` with
//! `D = Γ/γ` and `u = (δ − δ₀)/γ`, a circle of diameter D through the
//! far-detuned anchor 1 + 0i. Seen from the centre, the sample angle is
//! `φ_b + π + 2s·atan(u)` where `φ_b` points at the anchor and `s = ±1`
//! is the sense of rotation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::QubitParams;
use crate::optimize::{levenberg_marquardt, solve};
use crate::pulse::wrap_phase;
use crate::C64;

use super::SpectroscopyTrace;

/// Minimum number of samples accepted by [`circle_fit`].
pub const MIN_CIRCLE_POINTS: usize = 50;
/// Minimum detuning span, in units of the fitted γ.
pub const MIN_CIRCLE_SPAN: f64 = 6.0;
/// Required reach beyond resonance, in units of the half-width.
pub const MIN_BACKGROUND_REACH: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundRemoved {
    pub r: Vec<C64>,
    /// Complex background `r_all` far from resonance.
    pub background: C64,
}

/// Divides out the far-detuned background of a spectroscopy trace.
///
/// The first estimate is the mean of the 10 % of samples farthest from
/// resonance. A locus fit on the normalised data then moves the estimate
/// onto the fitted anchor, which removes the bias left by the resonance
/// tails. Traces with no visible resonance are normalised by their mean.
pub fn remove_background(trace: &SpectroscopyTrace) -> Result<BackgroundRemoved> {
    let r = &trace.r_all;
    let d = &trace.detunings;
    let n = r.len();
    if n < 10 {
        return Err(Error::InsufficientSpan(format!("{n} samples are too few to locate the background")));
    }
    let ends = (r[0] + r[n - 1]) / 2.0;
    let (res, peak) =
        r.iter().map(|s| (s - ends).norm()).enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).expect("non-empty");
    if ends.norm() == 0.0 {
        return Err(Error::InsufficientSpan("background level is zero".into()));
    }
    if peak < 1e-2 * ends.norm() {
        let mean = r.iter().sum::<C64>() / n as f64;
        return Ok(BackgroundRemoved { r: r.iter().map(|s| s / mean).collect(), background: mean });
    }

    let half_width = half_width(r, d, res, ends, peak);
    let reach = d.iter().map(|x| (x - d[res]).abs()).fold(0.0, f64::max);
    if reach < MIN_BACKGROUND_REACH * half_width {
        return Err(Error::InsufficientSpan(format!(
            "data reach {:.1} half-widths beyond resonance, need {MIN_BACKGROUND_REACH}",
            reach / half_width
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| (d[b] - d[res]).abs().total_cmp(&(d[a] - d[res]).abs()));
    let far = &order[..n.div_ceil(10)];
    let b0 = far.iter().map(|&i| r[i]).sum::<C64>() / far.len() as f64;

    let scaled: Vec<C64> = r.iter().map(|s| s / b0).collect();
    let background = match fit_locus(&scaled, d) {
        Ok(locus) => b0 * refine_anchor(&scaled, d, &locus).unwrap_or(locus.anchor()),
        Err(_) => b0,
    };
    Ok(BackgroundRemoved { r: r.iter().map(|s| s / background).collect(), background })
}

/// Half-width of the dip in `|r − ends|`, read off at the 1/√2 level.
fn half_width(r: &[C64], d: &[f64], res: usize, ends: C64, peak: f64) -> f64 {
    let level = peak / std::f64::consts::SQRT_2;
    let inside = |i: usize| (r[i] - ends).norm() >= level;
    let mut lo = res;
    while lo > 0 && inside(lo - 1) {
        lo -= 1;
    }
    let mut hi = res;
    while hi + 1 < r.len() && inside(hi + 1) {
        hi += 1;
    }
    let left = if lo > 0 { Some(d[res] - d[lo - 1]) } else { None };
    let right = if hi + 1 < r.len() { Some(d[hi + 1] - d[res]) } else { None };
    let width = match (left, right) {
        (Some(a), Some(b)) => 0.5 * (a + b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => d[d.len() - 1] - d[0],
    };
    // one grid step at least, so a single-sample dip is not zero width
    let step = (d[d.len() - 1] - d[0]) / (d.len() - 1) as f64;
    width.max(step)
}

/// Result of [`circle_fit`]. Rates are in rad/s, `delta0` is the resonance
/// offset from the trace reference frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CircleFit {
    pub center: C64,
    pub radius: f64,
    /// Fitted far-detuned point of the locus.
    pub anchor: C64,
    /// Circle diameter relative to the anchor magnitude, Γ/γ.
    pub diameter: f64,
    pub radiative: f64,
    pub decoherence: f64,
    pub delta0: f64,
    pub radiative_err: f64,
    pub decoherence_err: f64,
    pub delta0_err: f64,
    pub anchor_err: f64,
    /// RMS of the radial residuals.
    pub residual_rms: f64,
    /// +1 when the locus turns counter-clockwise with increasing δ.
    pub orientation: f64,
}

impl CircleFit {
    /// Qubit parameters with ω₁₀ = `reference + delta0`.
    pub fn qubit_params(&self, reference: f64) -> Result<QubitParams> {
        QubitParams::new(reference + self.delta0, self.radiative, self.decoherence - self.radiative / 2.0)
    }
}

struct Locus {
    center: C64,
    radius: f64,
    noise: f64,
    phase_b: f64,
    delta0: f64,
    gamma: f64,
    orientation: f64,
    errors: [f64; 3],
}

impl Locus {
    fn anchor(&self) -> C64 {
        self.center + C64::from_polar(self.radius, self.phase_b)
    }
}

/// Fits `b·(1 − a·(1 + icw)/(1 + w²))`, `w = (δ − δ₀)/g`, to the samples and
/// returns `b`. The free aspect ratio `c` absorbs the slight flattening of
/// the locus at finite probe power and the sense of rotation, so noiseless
/// data give the background to rounding.
fn refine_anchor(z: &[C64], d: &[f64], locus: &Locus) -> Option<C64> {
    let g0 = locus.gamma;
    let x: Vec<f64> = d.iter().map(|v| (v - locus.delta0) / g0).collect();
    let anchor = locus.anchor();
    let init = [anchor.re, anchor.im, 2.0 * locus.radius / anchor.norm(), locus.orientation, 0.0, 1.0];
    let model = |p: &[f64; 6]| {
        let [b_re, b_im, a, c, x0, g] = *p;
        let b = C64::new(b_re, b_im);
        let mut res = Vec::with_capacity(2 * z.len());
        let mut jac = Vec::with_capacity(2 * z.len());
        for (zi, xi) in z.iter().zip(&x) {
            let w = (xi - x0) / g;
            let q = 1.0 + w * w;
            let h = C64::new(1.0, c * w) / q;
            let dh_dw = (C64::new(0.0, c) * q - C64::new(1.0, c * w) * (2.0 * w)) / (q * q);
            let shape = 1.0 - h * a;
            let diff = zi - b * shape;
            let cols = [
                -shape,
                -C64::i() * shape,
                b * h,
                b * a * C64::new(0.0, w / q),
                -(b * a * dh_dw) / g,
                -(b * a * dh_dw) * w / g,
            ];
            res.push(diff.re);
            res.push(diff.im);
            jac.push(cols.map(|v| v.re));
            jac.push(cols.map(|v| v.im));
        }
        (res, jac)
    };
    let fit = levenberg_marquardt(model, init, 200).ok()?;
    let b = C64::new(fit.params[0], fit.params[1]);
    // reject a refinement that wandered off the circle estimate
    ((b - anchor).norm() < 0.1 * anchor.norm()).then_some(b)
}

/// Kåsa algebraic fit: minimises Σ(|z|² + a·x + b·y + c)².
fn kasa(z: &[C64]) -> Option<(C64, f64)> {
    // centre the data first for conditioning
    let mean = z.iter().sum::<C64>() / z.len() as f64;
    let scale = z.iter().map(|p| (p - mean).norm()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let mut m = [[0.0; 3]; 3];
    let mut v = [0.0; 3];
    for p in z {
        let q = (p - mean) / scale;
        let row = [q.re, q.im, 1.0];
        let rhs = -q.norm_sqr();
        for i in 0..3 {
            v[i] += row[i] * rhs;
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
        }
    }
    let [a, b, c] = solve(m, v)?;
    let r2 = (a * a + b * b) / 4.0 - c;
    if !(r2 > 0.0) {
        return None;
    }
    Some((mean + C64::new(-a / 2.0, -b / 2.0) * scale, r2.sqrt() * scale))
}

fn fit_locus(z: &[C64], d: &[f64]) -> Result<Locus> {
    let Some((center, radius)) = kasa(z) else {
        return Err(Error::DegenerateCircle { radius: 0.0, noise: 0.0 });
    };
    let n = z.len();
    let noise = (z.iter().map(|p| ((p - center).norm() - radius).powi(2)).sum::<f64>() / n as f64).sqrt();
    if radius < 10.0 * noise {
        return Err(Error::DegenerateCircle { radius, noise });
    }
    let angles: Vec<f64> = z.iter().map(|p| (p - center).arg()).collect();

    // resonance: the sample farthest from the ends; the anchor sits opposite
    let ends = (z[0] + z[n - 1]) / 2.0;
    let res = (0..n).max_by(|&a, &b| (z[a] - ends).norm().total_cmp(&(z[b] - ends).norm())).expect("non-empty");
    let phase_b0 = wrap_phase(angles[res] + std::f64::consts::PI);

    let (lo, hi) = (res.saturating_sub(1), (res + 1).min(n - 1));
    let orientation = if wrap_phase(angles[hi] - angles[lo]) >= 0.0 { 1.0 } else { -1.0 };

    // γ guess: the sample nearest a quarter turn from resonance
    let quarter = (0..n)
        .min_by(|&a, &b| {
            let qa = (wrap_phase(angles[a] - angles[res]).abs() - std::f64::consts::FRAC_PI_2).abs();
            let qb = (wrap_phase(angles[b] - angles[res]).abs() - std::f64::consts::FRAC_PI_2).abs();
            qa.total_cmp(&qb)
        })
        .expect("non-empty");
    let span = d[n - 1] - d[0];
    let gamma0 = (d[quarter] - d[res]).abs().max(span / n as f64);

    // fit in units of gamma0 around the first resonance guess
    let x: Vec<f64> = d.iter().map(|v| (v - d[res]) / gamma0).collect();
    let model = |p: &[f64; 3]| {
        let [phase_b, x0, g] = *p;
        let mut res = Vec::with_capacity(n);
        let mut jac = Vec::with_capacity(n);
        for (xi, th) in x.iter().zip(&angles) {
            let u = (xi - x0) / g;
            let predicted = phase_b + std::f64::consts::PI + 2.0 * orientation * u.atan();
            res.push(wrap_phase(th - predicted));
            let w = 2.0 * orientation / (1.0 + u * u);
            jac.push([-1.0, w / g, w * u / g]);
        }
        (res, jac)
    };
    let fit = levenberg_marquardt(model, [phase_b0, 0.0, 1.0], 200)?;
    let [phase_b, x0, g] = fit.params;
    if !(g > 0.0) {
        return Err(Error::FitFailed(format!("non-positive linewidth {g:e} from the phase fit")));
    }
    Ok(Locus {
        center,
        radius,
        noise,
        phase_b: wrap_phase(phase_b),
        delta0: d[res] + x0 * gamma0,
        gamma: g * gamma0,
        orientation,
        errors: [fit.errors[0], fit.errors[1] * gamma0, fit.errors[2] * gamma0],
    })
}

/// Algebraic circle fit followed by a phase-vs-δ fit for γ and δ₀.
///
/// `r` should be background-removed weak-probe data (Ω ≤ γ/10), at least
/// [`MIN_CIRCLE_POINTS`] samples over at least [`MIN_CIRCLE_SPAN`]·γ.
pub fn circle_fit(r: &[C64], detunings: &[f64]) -> Result<CircleFit> {
    if r.len() != detunings.len() {
        return Err(Error::invalid("circle_fit", "samples and detunings differ in length"));
    }
    if r.len() < MIN_CIRCLE_POINTS {
        return Err(Error::FitFailed(format!("{} samples, need at least {MIN_CIRCLE_POINTS}", r.len())));
    }
    let locus = fit_locus(r, detunings)?;
    let span = detunings[detunings.len() - 1] - detunings[0];
    if span < MIN_CIRCLE_SPAN * locus.gamma {
        return Err(Error::FitFailed(format!(
            "detuning span covers {:.2} linewidths, need {MIN_CIRCLE_SPAN}",
            span / locus.gamma
        )));
    }

    let anchor = locus.anchor();
    let n = r.len() as f64;
    // radial noise averaged over the samples sets the radius and anchor error
    let radius_err = locus.noise / n.sqrt();
    let anchor_err = radius_err.hypot(locus.radius * locus.errors[0]);
    let diameter = 2.0 * locus.radius / anchor.norm();
    let diameter_rel = (radius_err / locus.radius).hypot(anchor_err / anchor.norm());
    let decoherence = locus.gamma;
    let radiative = diameter * decoherence;
    let decoherence_err = locus.errors[2];
    Ok(CircleFit {
        center: locus.center,
        radius: locus.radius,
        anchor,
        diameter,
        radiative,
        decoherence,
        delta0: locus.delta0,
        radiative_err: radiative * diameter_rel.hypot(decoherence_err / decoherence),
        decoherence_err,
        delta0_err: locus.errors[1],
        anchor_err,
        residual_rms: locus.noise,
        orientation: locus.orientation,
    })
}

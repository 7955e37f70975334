//! Saturation fit of the on-resonance reflection against source power.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::QubitParams;
use crate::optimize::levenberg_marquardt;
use crate::scattering::reflection_ss;
use crate::C64;

use super::PowerPoint;

/// Minimum ratio between the largest and smallest source power.
pub const MIN_POWER_DECADES: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerSweepFit {
    pub k_src: f64,
    pub k_src_err: f64,
    /// RMS of the complex residuals.
    pub residual_rms: f64,
}

/// Fits `k_src` with Γ, γ and ω₁₀ held fixed, using `Ω = k_src·√P_src`.
///
/// Points must be background-removed. The fit runs in `ln k_src²`, which
/// keeps the single parameter well scaled across the power range.
pub fn power_sweep_fit(points: &[PowerPoint], params: &QubitParams, reference: f64) -> Result<PowerSweepFit> {
    if points.len() < 3 {
        return Err(Error::FitFailed(format!("{} power points, need at least 3", points.len())));
    }
    if points.iter().any(|p| !(p.p_src > 0.0 && p.p_src.is_finite())) {
        return Err(Error::invalid("p_src", "source powers must be positive and finite"));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.p_src.total_cmp(&b.p_src));
    let decades = (pts[pts.len() - 1].p_src / pts[0].p_src).log10();
    if decades < MIN_POWER_DECADES {
        return Err(Error::FitFailed(format!("power sweep covers {decades:.2} decades, need {MIN_POWER_DECADES}")));
    }
    check_monotone(&pts)?;

    let g = params.decoherence();
    let big = params.radiative();
    let diameter = big / g;
    let x = |p: &PowerPoint| (reference + p.detuning - params.omega10()) / g;

    // Re(1 − r) = D/(1 + x² + s) with s = Ω²/(γΓ)
    let mut guesses: Vec<f64> = pts
        .iter()
        .filter_map(|p| {
            let s = diameter / (1.0 - p.r.re) - 1.0 - x(p).powi(2);
            (0.05..=20.0).contains(&s).then(|| (s * g * big / p.p_src).ln())
        })
        .collect();
    if guesses.is_empty() {
        return Err(Error::FitFailed("no point lies in the saturation knee".into()));
    }
    guesses.sort_by(f64::total_cmp);
    let q0 = guesses[guesses.len() / 2];

    let model = |q: &[f64; 1]| {
        let k2 = q[0].exp();
        let mut res = Vec::with_capacity(2 * pts.len());
        let mut jac = Vec::with_capacity(2 * pts.len());
        for p in &pts {
            let xi = x(p);
            let s = k2 * p.p_src / (g * big);
            let denom = 1.0 + xi * xi + s;
            let predicted = reflection_ss(xi * g, (k2 * p.p_src).sqrt(), params);
            // dr/dq = D(1 + ix)·s/denom²
            let d = C64::new(1.0, xi) * (diameter * s / (denom * denom));
            let diff = p.r - predicted;
            res.push(diff.re);
            res.push(diff.im);
            jac.push([-d.re]);
            jac.push([-d.im]);
        }
        (res, jac)
    };
    let fit = levenberg_marquardt(model, [q0], 200)?;
    let k_src = (0.5 * fit.params[0]).exp();
    Ok(PowerSweepFit {
        k_src,
        k_src_err: 0.5 * k_src * fit.errors[0],
        residual_rms: (fit.ssr / pts.len() as f64).sqrt(),
    })
}

/// Re r climbs from 1 − D toward 1 as the drive saturates. |r| is no good
/// here: it passes through zero when D > 1.
fn check_monotone(sorted: &[PowerPoint]) -> Result<()> {
    let first = sorted[0].r.re;
    let last = sorted[sorted.len() - 1].r.re;
    if last <= first {
        return Err(Error::FitFailed("reflection does not rise with power".into()));
    }
    let mut high = f64::NEG_INFINITY;
    for p in sorted {
        if p.r.re < high - 0.1 {
            return Err(Error::FitFailed(format!("non-monotonic reflection at P_src = {:e} W", p.p_src)));
        }
        high = high.max(p.r.re);
    }
    Ok(())
}

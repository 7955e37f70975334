//! Shared fixtures for the criterion benches.

use atomfield_core::model::mhz_to_rad;
use atomfield_core::{synth_spectroscopy, ChainParams, LineParams, QubitParams, SpectroscopyTrace};

/// 601-point trace over ±30γ on the reference qubit, 1% noise.
pub fn spectroscopy_trace(seed: u64) -> SpectroscopyTrace {
    let p = QubitParams::table_one();
    let line = LineParams::default();
    let chain = ChainParams::spectroscopy_reference(&p, &line);
    let reference = mhz_to_rad(4765.0);
    let g = p.decoherence();
    let offsets: Vec<f64> = (0..=600).map(|i| p.omega10() - reference + (-30.0 + 0.1 * i as f64) * g).collect();
    let sigma = 0.01 * p.radiative() / g * chain.background();
    synth_spectroscopy(&p, &chain, reference, &offsets, g / 100.0, sigma, seed).expect("valid fixture")
}

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use atomfield_core::calibration::db_to_linear;
use atomfield_core::model::{mhz_to_rad, rad_to_mhz};
use atomfield_core::{
    analytic_efficiency, calibrate as run_calibration, demod_filter, duty_area_balance, linspace, optimize_duty,
    photon_number, power_loss_fraction, reflection_ss, run_sweep, simulate as run_simulation, synth_power_sweep,
    synth_spectroscopy, ChainParams, Modulation, PowerPoint, SpectroscopyTrace, SquareTemplate, SweepAxis,
    WorkingPoint, C64,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Mode, RunConfig};
use crate::output::{emit_json, Table};
use crate::{Axis, CliError};

const DUTY_TOL: f64 = 1e-4;

pub fn simulate(cfg: &RunConfig, out: &Path, filter_ns: Option<f64>) -> Result<(), CliError> {
    let wp = cfg.working_point()?;
    let mut sim = wp.simulation(cfg.modulation()?).map_err(CliError::from_config)?;
    sim.delta = mhz_to_rad(cfg.sim.delta_mhz);
    let res = run_simulation(&sim)?;

    let p_e = res.traj.excited_population();
    let times = res.v_out.times();
    let filtered = match filter_ns {
        Some(w) => Some(demod_filter(&res.v_out, w * 1e-9).map_err(CliError::from_config)?),
        None => None,
    };
    let mut header = vec!["t_s", "v_in_re", "v_in_im", "v_out_re", "v_out_im", "p_e", "phase_rad"];
    if filtered.is_some() {
        header.extend(["v_out_filt_re", "v_out_filt_im"]);
    }
    let mut table = Table::new(header);
    for (i, &t) in times.iter().enumerate() {
        let (vi, vo) = (res.v_in.values()[i], res.v_out.values()[i]);
        let mut row = vec![t, vi.re, vi.im, vo.re, vo.im, p_e[i], sim.spec.phase_wrapped(t)];
        if let Some(f) = &filtered {
            row.extend([f.values()[i].re, f.values()[i].im]);
        }
        table.push(row);
    }
    table.write(&out.join("trace.csv"))?;

    let analytic = matches!(cfg.pulse.mode, Mode::None).then(|| analytic_efficiency(&sim.params, sim.spec.tau()));
    emit_json(
        &json!({
            "eta": res.eta,
            "eta_analytic_weak_drive": analytic,
            "e_res_j": res.energies.res,
            "e_offres_j": res.energies.off_res,
            "noise_exceeds_signal": res.energies.negative,
            "photon_number": res.photon_number(&sim.params, &sim.line),
            "v_peak_nv": sim.spec.v_peak() * 1e9,
            "omega_peak_mhz": rad_to_mhz(wp.omega_peak),
            "tau_ns": sim.spec.tau() * 1e9,
            "modulation": sim.spec.modulation(),
            "samples": times.len(),
        }),
        &out.join("simulate.json"),
    )
}

fn template(cfg: &RunConfig) -> SquareTemplate {
    let p = &cfg.pulse;
    SquareTemplate { intervals: if p.n == 0 { 50 } else { p.n }, theta: cfg.theta(), duty: p.duty }
}

pub fn sweep(cfg: &RunConfig, out: &Path, axis: Axis, grid: bool) -> Result<(), CliError> {
    let wp = cfg.working_point()?;
    let tpl = template(cfg);
    let s = &cfg.sweep;
    let step = grid.then_some(s.grid_step_ns * 1e-9);
    let (axis, values, column) = match axis {
        Axis::N => (SweepAxis::N, (0..=s.n_max).map(f64::from).collect(), "n"),
        Axis::Theta => (SweepAxis::Theta, linspace(0.0, TAU, s.theta_points), "theta_rad"),
        Axis::Fm => (SweepAxis::Fm, linspace(0.0, s.fm_max_mhz * 1e6, s.fm_points), "f_m_hz"),
        Axis::Duty => return duty(cfg, out, &wp, tpl, step),
    };
    let res = run_sweep(&wp, axis, &values, tpl, step)?;
    let mut table = Table::new([column, "eta", "e_res_j", "e_offres_j"]);
    for p in &res.points {
        table.push(vec![p.value, p.eta, p.e_res, p.e_offres]);
    }
    table.write(&out.join(format!("sweep_{}.csv", axis.name())))?;
    if let Some(g) = &res.grid {
        write_grid(out, axis, g)?;
    }
    let (best, worst) = extremes(&res.points);
    emit_json(
        &json!({
            "axis": axis.name(),
            "points": res.points.len(),
            "template": tpl,
            "eta_min": { "value": best.value, "eta": best.eta },
            "eta_max": { "value": worst.value, "eta": worst.eta },
        }),
        &out.join(format!("sweep_{}.json", axis.name())),
    )
}

fn extremes(points: &[atomfield_core::SweepPoint]) -> (atomfield_core::SweepPoint, atomfield_core::SweepPoint) {
    let min = points.iter().min_by(|a, b| a.eta.total_cmp(&b.eta)).copied().expect("non-empty sweep");
    let max = points.iter().max_by(|a, b| a.eta.total_cmp(&b.eta)).copied().expect("non-empty sweep");
    (min, max)
}

fn duty(
    cfg: &RunConfig,
    out: &Path,
    wp: &WorkingPoint,
    tpl: SquareTemplate,
    step: Option<f64>,
) -> Result<(), CliError> {
    let s = &cfg.sweep;
    let opt = optimize_duty(wp, tpl.intervals, tpl.theta, (s.duty_min, s.duty_max), DUTY_TOL)?;
    let mut table = Table::new(["duty", "eta", "e_res_j", "e_offres_j"]);
    for p in &opt.scan {
        table.push(vec![p.value, p.eta, p.e_res, p.e_offres]);
    }
    table.write(&out.join("sweep_duty.csv"))?;

    let spec = wp.spec(Modulation::Square { intervals: tpl.intervals, theta: tpl.theta, duty: 0.5 })?;
    let balance = duty_area_balance(&spec)?;
    let mut curve = Table::new(["duty", "signed_area"]);
    for &(d, a) in &balance.curve {
        curve.push(vec![d, a]);
    }
    curve.write(&out.join("area_balance.csv"))?;

    if let Some(step) = step {
        let values: Vec<f64> = opt.scan.iter().map(|p| p.value).collect();
        let res = run_sweep(wp, SweepAxis::Duty, &values, tpl, Some(step))?;
        write_grid(out, SweepAxis::Duty, res.grid.as_ref().expect("grid requested"))?;
    }
    emit_json(
        &json!({
            "axis": "duty",
            "intervals": tpl.intervals,
            "theta_rad": tpl.theta,
            "duty_opt": opt.duty,
            "eta_opt": opt.eta,
            "duty_area_balance": balance.duty,
            "scan_points": opt.scan.len(),
        }),
        &out.join("sweep_duty.json"),
    )
}

fn write_grid(out: &Path, axis: SweepAxis, g: &atomfield_core::TraceGrid) -> Result<(), CliError> {
    let header = || std::iter::once("t_s".to_string()).chain(g.axis.iter().map(|v| format!("{v:.6e}")));
    let pick = |f: &dyn Fn(usize, usize) -> f64| {
        let mut t = Table::new(header());
        for (i, &time) in g.times.iter().enumerate() {
            t.push(std::iter::once(time).chain((0..g.axis.len()).map(|j| f(j, i))).collect());
        }
        t
    };
    let name = axis.name();
    pick(&|j, i| g.v_out[j][i].re).write(&out.join(format!("grid_{name}_v_out_re.csv")))?;
    pick(&|j, i| g.v_out[j][i].im).write(&out.join(format!("grid_{name}_v_out_im.csv")))?;
    pick(&|j, i| g.p_e[j][i]).write(&out.join(format!("grid_{name}_p_e.csv")))
}

/// One row of a calibration CSV.
#[derive(Debug, Serialize, Deserialize)]
struct CalRow {
    delta_hz: f64,
    re: f64,
    im: f64,
    p_src_w: f64,
}

/// Rows at the most frequent source power form the spectroscopy trace; the
/// remaining rows are the power sweep.
fn split_rows(rows: &[CalRow], reference: f64) -> Result<(SpectroscopyTrace, Vec<PowerPoint>), CliError> {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for r in rows {
        *counts.entry(r.p_src_w.to_bits()).or_default() += 1;
    }
    let Some((&modal, _)) = counts.iter().max_by_key(|(_, &c)| c) else {
        return Err(CliError::Config("calibration input is empty".into()));
    };
    let (mut det, mut r_all, mut sweep) = (vec![], vec![], vec![]);
    for row in rows {
        let d = row.delta_hz * TAU;
        let r = C64::new(row.re, row.im);
        if row.p_src_w.to_bits() == modal {
            det.push(d);
            r_all.push(r);
        } else {
            sweep.push(PowerPoint { p_src: row.p_src_w, detuning: d, r });
        }
    }
    let trace = SpectroscopyTrace::new(reference, det, r_all, f64::from_bits(modal)).map_err(CliError::from_config)?;
    Ok((trace, sweep))
}

fn read_rows(path: &Path) -> Result<Vec<CalRow>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(CliError::Csv)?;
    rdr.deserialize().collect::<Result<_, _>>().map_err(CliError::Csv)
}

pub fn calibrate(cfg: &RunConfig, out: &Path, seed: u64) -> Result<(), CliError> {
    let c = &cfg.calibrate;
    let line = cfg.line()?;
    let reference = mhz_to_rad(c.reference_mhz);
    let mut truth = None;
    let rows = match &c.input {
        Some(path) => read_rows(path)?,
        None => {
            let p = cfg.qubit()?;
            let chain = ChainParams::from_db(c.attenuation_db, c.gain_db, &p, &line).map_err(CliError::from_config)?;
            let g = p.decoherence();
            let half = c.span_linewidths * g;
            let offsets: Vec<f64> =
                linspace(-half, half, c.points).into_iter().map(|x| x + p.omega10() - reference).collect();
            let sigma = c.noise * p.radiative() / g * chain.background();
            let trace = synth_spectroscopy(&p, &chain, reference, &offsets, c.probe_fraction * g, sigma, seed)?;
            let powers: Vec<f64> = linspace(0.0, c.power_decades, c.power_points)
                .into_iter()
                .map(|e| c.power_min_w * 10f64.powf(e))
                .collect();
            // distinct stream for the sweep noise
            let sweep = synth_power_sweep(
                &p,
                &chain,
                reference,
                p.omega10() - reference,
                &powers,
                sigma,
                seed.wrapping_add(1),
            )?;
            let mut rows: Vec<CalRow> = trace
                .detunings
                .iter()
                .zip(&trace.r_all)
                .map(|(&d, r)| CalRow { delta_hz: d / TAU, re: r.re, im: r.im, p_src_w: trace.source_power })
                .collect();
            rows.extend(sweep.iter().map(|pt| CalRow {
                delta_hz: pt.detuning / TAU,
                re: pt.r.re,
                im: pt.r.im,
                p_src_w: pt.p_src,
            }));
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r).map_err(CliError::Csv)?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?;
            crate::output::write_atomic(&out.join("spectroscopy.csv"), &bytes)?;
            truth = Some((p, chain));
            rows
        }
    };
    let (trace, sweep) = split_rows(&rows, reference)?;
    let cal = run_calibration(&trace, &sweep, &line)?;
    let f = &cal.circle;
    let mut report = json!({
        "radiative_mhz": rad_to_mhz(cal.params.radiative()),
        "radiative_err_mhz": rad_to_mhz(f.radiative_err),
        "decoherence_mhz": rad_to_mhz(cal.params.decoherence()),
        "decoherence_err_mhz": rad_to_mhz(f.decoherence_err),
        "dephasing_mhz": rad_to_mhz(cal.params.dephasing()),
        "f10_mhz": rad_to_mhz(cal.params.omega10()),
        "f10_err_mhz": rad_to_mhz(f.delta0_err),
        "k_src": cal.power.k_src,
        "k_src_err": cal.power.k_src_err,
        "k": cal.chain.k(),
        "attenuation_db": cal.chain.attenuation_db(),
        "gain_db": cal.chain.gain_db(),
        "background": [cal.background.re, cal.background.im],
        "circle_residual_rms": f.residual_rms,
        "power_residual_rms": cal.power.residual_rms,
        "orientation": f.orientation,
    });
    if let Some((p, chain)) = truth {
        let rel = |x: f64, y: f64| (x / y - 1.0).abs();
        report["truth"] = json!({
            "radiative_mhz": rad_to_mhz(p.radiative()),
            "decoherence_mhz": rad_to_mhz(p.decoherence()),
            "f10_mhz": rad_to_mhz(p.omega10()),
            "k_src": chain.k_src(),
            "attenuation_db": chain.attenuation_db(),
            "gain_db": chain.gain_db(),
        });
        report["rel_err"] = json!({
            "radiative": rel(cal.params.radiative(), p.radiative()),
            "decoherence": rel(cal.params.decoherence(), p.decoherence()),
            "f10": rel(cal.params.omega10(), p.omega10()),
            "k_src": rel(cal.power.k_src, chain.k_src()),
            "attenuation": rel(cal.chain.attenuation(), db_to_linear(c.attenuation_db)),
            "gain": rel(cal.chain.gain(), db_to_linear(c.gain_db)),
        });
        report["seed"] = json!(seed);
    }
    emit_json(&report, &out.join("calibrate.json"))
}

pub fn analytic(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let wp = cfg.working_point()?;
    let p = wp.params;
    let g = p.decoherence();
    let delta = mhz_to_rad(cfg.sim.delta_mhz);

    let mut scan = Table::new(["tau_s", "eta"]);
    for e in linspace(-1.0, 1.0, 201) {
        let tau = p.t2() * 10f64.powf(e);
        scan.push(vec![tau, analytic_efficiency(&p, tau)]);
    }
    scan.write(&out.join("analytic_tau.csv"))?;

    let mut refl = Table::new(["delta_hz", "r_re", "r_im", "loss"]);
    for d in linspace(-10.0 * g, 10.0 * g, 401) {
        let r = reflection_ss(d, wp.omega_peak, &p);
        refl.push(vec![d / TAU, r.re, r.im, power_loss_fraction(d, wp.omega_peak, &p)]);
    }
    refl.write(&out.join("analytic_reflection.csv"))?;

    let spec = wp.spec(Modulation::None).map_err(CliError::from_config)?;
    let e_in = spec.input_energy_closed_form(&wp.line);
    let r = reflection_ss(delta, wp.omega_peak, &p);
    emit_json(
        &json!({
            "eta": analytic_efficiency(&p, wp.tau),
            "eta_max": analytic_efficiency(&p, p.t2()),
            "tau_opt_ns": p.t2() * 1e9,
            "reflection": [r.re, r.im],
            "loss": power_loss_fraction(delta, wp.omega_peak, &p),
            "saturation": wp.omega_peak * wp.omega_peak / (g * p.radiative()),
            "input_energy_j": e_in,
            "photon_number": photon_number(e_in, &p, &wp.line),
        }),
        &out.join("analytic.json"),
    )
}

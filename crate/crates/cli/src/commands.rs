use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use tlres::calibrate::{calibrate_loss, calibrate_reactance, discriminate_parasitics, ModeMeasurement};
use tlres::circlefit::{fit_notch, NotchModel};
use tlres::flags::Flag;
use tlres::loss::{qi_forward, tan_delta_single_mode};
use tlres::netsynth::{coupling_for_pull, frequency_pull, linear_grid, synth_s21, ComplexTrace, HangerNetwork};
use tlres::resonance::{
    max_participation_point, participation, reactance_from_frequencies, solve_resonance, standing_wave,
    stored_energies,
};
use tlres::stats::{
    fit_lognormal, kappa_fit, lognormal_ensemble, monte_carlo_uncertainty, normal_deviate,
    single_mode_tand_distribution, KappaPoint, UncertaintyModel, EPSILON_0,
};
use tlres::txline::LoadKind;

use crate::config::{load_kind, missing, JobConfig, MonteCarloInput, ModeRow};
use crate::output::{read_modes, read_trace, write_table, write_trace, MODE_HEADER};
use crate::CliError;

/// What a command produced, before it is wrapped in the envelope.
pub struct Report {
    pub result: Value,
    pub flags: Vec<Flag>,
    pub outputs: Vec<String>,
}

pub struct Context<'a> {
    pub config: &'a JobConfig,
    /// Directory relative paths in the config are resolved against.
    pub base_dir: &'a Path,
    pub out_dir: &'a Path,
    pub seed: u64,
}

impl Context<'_> {
    fn output(&self, name: &str, outputs: &mut Vec<String>) -> std::path::PathBuf {
        outputs.push(name.to_string());
        self.out_dir.join(name)
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn merge(flags: &mut Vec<Flag>, more: &[Flag]) {
    for f in more {
        if !flags.contains(f) {
            flags.push(*f);
        }
    }
}

pub fn solve(ctx: &Context) -> Result<Report, CliError> {
    let cfg = ctx.config.solve.as_ref().ok_or_else(|| missing("solve"))?;
    let line = ctx.config.line_spec()?;
    let load = ctx.config.load_model()?;
    if cfg.modes.is_empty() {
        return Err(CliError::Validation("solve.modes is empty".into()));
    }
    let mut flags = load.validity_flags();
    let mut outputs = Vec::new();
    let mut rows = Vec::new();
    let mut modes = Vec::new();
    for &n in &cfg.modes {
        let sol = solve_resonance(&load, &line, n)?;
        merge(&mut flags, &sol.flags);
        let loss = qi_forward(sol.phi, load.tan_delta(), &line.attenuation)?;
        let q_i = finite(loss.q_i());
        let max_p = match load.kind() {
            LoadKind::SeriesComposite => None,
            kind => max_participation_point(n, kind).ok(),
        };
        rows.push(vec![Some(n as f64), Some(sol.f_r), q_i]);
        if cfg.profile_points > 0 {
            let profile = standing_wave(&sol, cfg.profile_points)?;
            let table: Vec<Vec<Option<f64>>> = (0..profile.positions.len())
                .map(|i| {
                    let (v, c) = (profile.voltage[i], profile.current[i]);
                    vec![Some(profile.positions[i]), Some(v.re), Some(v.im), Some(c.re), Some(c.im)]
                })
                .collect();
            let path = ctx.output(&format!("standing_wave_n{n}.csv"), &mut outputs);
            write_table(&path, &["z_over_l", "re_v", "im_v", "re_i", "im_i"], &table)?;
        }
        modes.push(json!({
            "mode_n": n,
            "f_r_hz": sol.f_r,
            "phi": sol.phi,
            "participation": sol.participation,
            "x_at_resonance_ohm": sol.x_at_resonance,
            "energies": to_value(&stored_energies(&sol)),
            "q_i": q_i,
            "q_dut_inv": loss.q_dut_inv,
            "q_res_inv": loss.q_res_inv,
            "max_participation": max_p.map(|m| to_value(&m)),
            "flags": to_value(&sol.flags),
        }));
    }
    let path = ctx.output("modes.csv", &mut outputs);
    write_table(&path, &MODE_HEADER, &rows)?;
    Ok(Report { result: json!({ "modes": modes }), flags, outputs })
}

fn measurements(rows: &[ModeRow], f_r_sigma: Option<f64>, q_rel: Option<f64>) -> Vec<ModeMeasurement> {
    rows.iter()
        .map(|r| ModeMeasurement {
            mode_n: r.mode_n,
            f_r: r.f_r_hz,
            q_i: r.q_i,
            f_r_sigma,
            q_i_sigma: q_rel.and_then(|s| r.q_i.map(|q| s * q)),
        })
        .collect()
}

pub fn calibrate(ctx: &Context) -> Result<Report, CliError> {
    let cfg = ctx.config.calibrate.as_ref().ok_or_else(|| missing("calibrate"))?;
    let rows = match (&cfg.modes_csv, &cfg.modes) {
        (Some(p), None) => read_modes(&ctx.base_dir.join(p))?,
        (None, Some(m)) => m.clone(),
        _ => return Err(CliError::Validation("calibrate needs exactly one of modes_csv or modes".into())),
    };
    let modes = measurements(&rows, cfg.f_r_sigma_hz, cfg.q_i_rel_sigma);
    let kind = load_kind(cfg.kind);
    let reactance = calibrate_reactance(&modes, cfg.z0, kind)?;
    let mut flags = reactance.flags.clone();

    let with_q = modes.iter().filter(|m| m.q_i.is_some()).count();
    let loss = if with_q >= 2 {
        let l = calibrate_loss(&modes, &reactance, cfg.exponent_s)?;
        merge(&mut flags, &l.flags);
        Some(l)
    } else {
        None
    };
    let parasitics = if cfg.discriminate {
        let r = discriminate_parasitics(&modes, cfg.z0, reactance.f_open)?;
        merge(&mut flags, &r.flags);
        Some(r)
    } else {
        None
    };

    let mut outputs = Vec::new();
    let mut table = Vec::new();
    let mut per_mode = Vec::new();
    for m in &modes {
        let phi = 2.0 * PI * m.f_r / reactance.f_open;
        let p = participation(phi);
        let x = reactance_from_frequencies(m.f_r, reactance.f_open, m.mode_n, cfg.z0).ok();
        table.push(vec![Some(m.mode_n as f64), Some(m.f_r), m.q_i, Some(phi), Some(p), x]);
        per_mode.push(json!({ "mode_n": m.mode_n, "phi": phi, "participation": p, "reactance_ohm": x }));
    }
    let path = ctx.output("calibration_modes.csv", &mut outputs);
    write_table(&path, &["mode_n", "f_r_hz", "q_i", "phi", "participation", "reactance_ohm"], &table)?;

    Ok(Report {
        result: json!({
            "reactance": {
                "kind": kind,
                "f_open_hz": reactance.f_open,
                "f_open_sigma_hz": finite(reactance.f_open_sigma()),
                "load_value": reactance.load_value,
                "load_value_sigma": finite(reactance.load_value_sigma()),
                "residuals": reactance.residuals,
            },
            "loss": loss.as_ref().map(to_value),
            "modes": per_mode,
            "parasitics": parasitics.as_ref().map(to_value),
        }),
        flags,
        outputs,
    })
}

fn model_of(fit: &tlres::circlefit::NotchFitResult) -> NotchModel {
    NotchModel {
        f_r: fit.f_r,
        q_loaded: fit.q_loaded,
        q_coupling_mag: fit.q_coupling_mag,
        phi0: fit.impedance_mismatch_phi0,
        amplitude_a: fit.amplitude_a,
        phase_alpha: fit.phase_alpha,
        delay_tau: fit.delay_tau,
    }
}

pub fn extract(ctx: &Context) -> Result<Report, CliError> {
    let cfg = ctx.config.extract.as_ref().ok_or_else(|| missing("extract"))?;
    let trace = read_trace(&ctx.base_dir.join(&cfg.trace_csv))?;
    let fit = fit_notch(&trace)?;
    let mut flags = fit.flags.clone();
    let single_mode = match &cfg.reference {
        Some(r) => {
            let phi = 2.0 * PI * fit.f_r / r.f_open;
            let est = tan_delta_single_mode(fit.q_internal, r.q_open_ref, phi, r.exponent_s)?;
            merge(&mut flags, &est.flags());
            Some(est)
        }
        None => None,
    };
    let mut outputs = Vec::new();
    let path = ctx.output("model_trace.csv", &mut outputs);
    write_trace(&path, &model_of(&fit).trace(&trace.freqs)?)?;
    Ok(Report {
        result: json!({ "fit": to_value(&fit), "single_mode": single_mode.as_ref().map(to_value) }),
        flags,
        outputs,
    })
}

pub fn oracle(ctx: &Context) -> Result<Report, CliError> {
    let cfg = ctx.config.oracle.as_ref().ok_or_else(|| missing("oracle"))?;
    let line = ctx.config.line_spec()?;
    let load = ctx.config.load_model()?;
    if cfg.points < 2 || !(cfg.span_linewidths > 0.0) || !(cfg.noise_sigma >= 0.0) {
        return Err(CliError::Validation("oracle needs points >= 2, span_linewidths > 0, noise_sigma >= 0".into()));
    }
    let sol = solve_resonance(&load, &line, cfg.mode_n)?;
    let q_i = qi_forward(sol.phi, load.tan_delta(), &line.attenuation)?.q_i();
    if !q_i.is_finite() {
        return Err(CliError::Validation("oracle needs a lossy line or load".into()));
    }
    let coupling_c = match (cfg.coupling_c, cfg.rel_pull) {
        (Some(c), None) => c,
        (None, pull) => coupling_for_pull(&line, &load, cfg.mode_n, pull.unwrap_or(5e-6), cfg.feed_z0)?,
        _ => return Err(CliError::Validation("give coupling_c or rel_pull, not both".into())),
    };
    let net = HangerNetwork::new(line, coupling_c, load.clone(), cfg.feed_z0)?;
    let pull = frequency_pull(&net, cfg.mode_n)?;
    // centre the sweep on the pulled notch
    let grid = linear_grid(sol.f_r + pull, cfg.span_linewidths * sol.f_r / q_i, cfg.points);
    let mut trace = synth_s21(&net, &grid)?.with_delay(cfg.delay_tau);
    if cfg.noise_sigma > 0.0 {
        let s21 = trace
            .s21
            .iter()
            .enumerate()
            .map(|(i, z)| {
                // one deviate stream per quadrature sample
                let k = 2 * i as u64;
                let (a, b) = (normal_deviate(ctx.seed, k), normal_deviate(ctx.seed, k + 1));
                z + cfg.noise_sigma * Complex64::new(a, b)
            })
            .collect();
        trace = ComplexTrace::new(trace.freqs, s21)?;
    }
    let mut outputs = Vec::new();
    let path = ctx.output("trace.csv", &mut outputs);
    write_trace(&path, &trace)?;
    let fit = fit_notch(&trace)?;
    let path = ctx.output("model_trace.csv", &mut outputs);
    write_trace(&path, &model_of(&fit).trace(&trace.freqs)?)?;
    Ok(Report {
        result: json!({
            "analytic": { "f_r_hz": sol.f_r, "q_i": q_i, "participation": sol.participation },
            "coupling_c": coupling_c,
            "relative_pull": pull / sol.f_r,
            "fit": to_value(&fit),
            "relative_error": {
                "f_r": (fit.f_r / sol.f_r - 1.0).abs(),
                "q_i": (fit.q_internal / q_i - 1.0).abs(),
            },
        }),
        flags: fit.flags.clone(),
        outputs,
    })
}

pub fn stats(ctx: &Context) -> Result<Report, CliError> {
    let cfg = ctx.config.stats.as_ref().ok_or_else(|| missing("stats"))?;
    if cfg.monte_carlo.is_none() && cfg.reference.is_none() && cfg.kappa.is_none() {
        return Err(CliError::Validation("stats needs monte_carlo, reference or kappa".into()));
    }
    let mut flags = Vec::new();
    let mut outputs = Vec::new();
    let mut result = serde_json::Map::new();

    if let Some(mc) = &cfg.monte_carlo {
        let model = match mc.model {
            MonteCarloInput::FOpen { kind, mode_n, f_r, f_open, z0 } => {
                UncertaintyModel::FOpen { kind: load_kind(kind), mode_n, f_r, f_open, z0 }
            }
            MonteCarloInput::QOpen { phi, tan_delta, q_open, exponent_s } => {
                UncertaintyModel::QOpen { phi, tan_delta, q_open, exponent_s }
            }
        };
        let r = monte_carlo_uncertainty(&model, mc.rel_sigma, mc.n_samples, ctx.seed)?;
        merge(&mut flags, &r.flags);
        result.insert("monte_carlo".into(), to_value(&r));
    }

    if let Some(r) = &cfg.reference {
        let samples = lognormal_ensemble(r.q_open_mean, r.rel_sigma, r.n, ctx.seed);
        let fit = fit_lognormal(&samples)?;
        let phi = 2.0 * PI * r.f_r / r.f_open;
        let dist = single_mode_tand_distribution(r.q_i, phi, &samples, r.exponent_s)?;
        merge(&mut flags, &fit.flags);
        let table = samples
            .iter()
            .map(|&q| {
                let t = tan_delta_single_mode(r.q_i, q, phi, r.exponent_s).map(|e| e.tan_delta).ok();
                vec![Some(q), t]
            })
            .collect::<Vec<_>>();
        let path = ctx.output("tan_delta_samples.csv", &mut outputs);
        write_table(&path, &["q_open", "tan_delta"], &table)?;
        result.insert(
            "reference".into(),
            json!({
                "lognormal": to_value(&fit),
                "median_q_open": fit.median(),
                "distribution": to_value(&dist),
            }),
        );
    }

    if let Some(rows) = &cfg.kappa {
        let points: Vec<KappaPoint> = rows
            .iter()
            .map(|k| KappaPoint {
                area: k.area_um2 * 1e-12,
                thickness: k.thickness_nm * 1e-9,
                capacitance: k.capacitance_ff * 1e-15,
                area_sigma: k.area_sigma,
            })
            .collect();
        let fit = kappa_fit(&points)?;
        let table = points
            .iter()
            .map(|p| {
                let x = EPSILON_0 * p.area / p.thickness;
                vec![Some(x), Some(p.capacitance), Some(fit.kappa * x)]
            })
            .collect::<Vec<_>>();
        let path = ctx.output("kappa_points.csv", &mut outputs);
        write_table(&path, &["eps0_area_over_d_f", "capacitance_f", "fit_capacitance_f"], &table)?;
        result.insert("kappa".into(), to_value(&fit));
    }

    Ok(Report { result: Value::Object(result), flags, outputs })
}

//! Python bindings. The extension module is importable as `tlres`.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tlres::stats::{KappaPoint, UncertaintyModel};
use tlres::txline::ReactiveElement;
use tlres::{AttenuationModel, ComplexTrace, Flag, HangerNetwork, LineSpec, LoadKind, LoadModel, ModeMeasurement};

create_exception!(tlres, ValidationError, PyValueError);
create_exception!(tlres, NumericalError, PyArithmeticError);

fn err(e: tlres::Error) -> PyErr {
    if e.is_validation() {
        ValidationError::new_err(e.to_string())
    } else {
        NumericalError::new_err(e.to_string())
    }
}

fn flag_names(flags: &[Flag]) -> Vec<String> {
    flags.iter().map(|f| f.to_string()).collect()
}

fn parse_kind(kind: &str) -> PyResult<LoadKind> {
    match kind {
        "capacitor" => Ok(LoadKind::Capacitor),
        "inductor" => Ok(LoadKind::Inductor),
        other => Err(ValidationError::new_err(format!(
            "kind must be 'capacitor' or 'inductor', got {other:?}"
        ))),
    }
}

/// Transmission line with open-circuit fundamental `f_open`.
#[pyclass(frozen, module = "tlres")]
struct Line {
    inner: LineSpec,
}

#[pymethods]
impl Line {
    #[new]
    #[pyo3(signature = (z0, f_open, q_open_ref=None, exponent_s=1.0))]
    fn new(z0: f64, f_open: f64, q_open_ref: Option<f64>, exponent_s: f64) -> PyResult<Self> {
        let atten = match q_open_ref {
            Some(q) => AttenuationModel::new(q, exponent_s).map_err(err)?,
            None => AttenuationModel::lossless(),
        };
        Ok(Self { inner: LineSpec::new(z0, f_open, atten).map_err(err)? })
    }

    #[getter]
    fn z0(&self) -> f64 {
        self.inner.z0
    }

    #[getter]
    fn f_open(&self) -> f64 {
        self.inner.f_open
    }

    fn __repr__(&self) -> String {
        format!("Line(z0={}, f_open={})", self.inner.z0, self.inner.f_open)
    }
}

/// Reactive device under test.
#[pyclass(frozen, module = "tlres")]
struct Load {
    inner: LoadModel,
}

#[pymethods]
impl Load {
    #[staticmethod]
    #[pyo3(signature = (c, tan_delta=0.0))]
    fn capacitor(c: f64, tan_delta: f64) -> PyResult<Self> {
        Ok(Self { inner: LoadModel::capacitor(c, tan_delta).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (l, tan_delta=0.0))]
    fn inductor(l: f64, tan_delta: f64) -> PyResult<Self> {
        Ok(Self { inner: LoadModel::inductor(l, tan_delta).map_err(err)? })
    }

    /// Series chain from `[("capacitor", 1e-13), ("inductor", 1e-10), ...]`.
    #[staticmethod]
    #[pyo3(signature = (elements, tan_delta=0.0))]
    fn series(elements: Vec<(String, f64)>, tan_delta: f64) -> PyResult<Self> {
        let elements = elements
            .into_iter()
            .map(|(kind, v)| match parse_kind(&kind)? {
                LoadKind::Capacitor => Ok(ReactiveElement::Capacitor(v)),
                _ => Ok(ReactiveElement::Inductor(v)),
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self { inner: LoadModel::series(elements, tan_delta).map_err(err)? })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn value(&self) -> Option<f64> {
        self.inner.value()
    }

    #[getter]
    fn tan_delta(&self) -> f64 {
        self.inner.tan_delta()
    }

    fn __repr__(&self) -> String {
        format!("Load(kind={:?}, elements={:?}, tan_delta={})", self.kind(), self.inner.elements(), self.tan_delta())
    }
}

#[pyclass(frozen, get_all, module = "tlres")]
struct Resonance {
    mode_n: u32,
    f_r: f64,
    phi: f64,
    participation: f64,
    x_at_resonance: f64,
    flags: Vec<String>,
}

#[pymethods]
impl Resonance {
    fn __repr__(&self) -> String {
        format!("Resonance(mode_n={}, f_r={}, participation={})", self.mode_n, self.f_r, self.participation)
    }
}

/// Mode `n` of `load` terminating `line`.
#[pyfunction]
fn solve_resonance(load: &Load, line: &Line, n: u32) -> PyResult<Resonance> {
    let s = tlres::solve_resonance(&load.inner, &line.inner, n).map_err(err)?;
    Ok(Resonance {
        mode_n: s.mode_n,
        f_r: s.f_r,
        phi: s.phi,
        participation: s.participation,
        x_at_resonance: s.x_at_resonance,
        flags: flag_names(&s.flags),
    })
}

#[pyfunction]
fn participation(phi: f64) -> f64 {
    tlres::participation(phi)
}

/// Normalized stored energies `(w_res_electric, w_res_magnetic, w_dut)`.
#[pyfunction]
fn stored_energies(phi: f64) -> (f64, f64, f64) {
    let e = tlres::resonance::energies_from_phase(phi);
    (e.w_res_electric, e.w_res_magnetic, e.w_dut)
}

/// `(phi_star, p_max, attained)` on the branch of mode `n`.
#[pyfunction]
fn max_participation(n: u32, kind: &str) -> PyResult<(f64, f64, bool)> {
    let m = tlres::max_participation_point(n, parse_kind(kind)?).map_err(err)?;
    Ok((m.phi_star, m.p_max, m.attained))
}

/// `Q_i` of a mode at phase `phi`, with its loss split.
#[pyfunction]
#[pyo3(signature = (phi, tan_delta, q_open_ref, exponent_s=1.0))]
fn qi_forward<'py>(
    py: Python<'py>,
    phi: f64,
    tan_delta: f64,
    q_open_ref: f64,
    exponent_s: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let atten = AttenuationModel::new(q_open_ref, exponent_s).map_err(err)?;
    let b = tlres::qi_forward(phi, tan_delta, &atten).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("q_i", b.q_i())?;
    d.set_item("q_i_inv", b.q_i_inv)?;
    d.set_item("q_dut_inv", b.q_dut_inv)?;
    d.set_item("q_res_inv", b.q_res_inv)?;
    Ok(d)
}

/// Loss tangent from one mode and a reference `Q_open`.
#[pyfunction]
#[pyo3(signature = (q_i, q_open_ref, phi, exponent_s=1.0))]
fn tan_delta_single_mode(q_i: f64, q_open_ref: f64, phi: f64, exponent_s: f64) -> PyResult<(f64, f64)> {
    let e = tlres::tan_delta_single_mode(q_i, q_open_ref, phi, exponent_s).map_err(err)?;
    Ok((e.tan_delta, e.participation))
}

#[pyclass(frozen, get_all, module = "tlres")]
struct ReactanceCalibration {
    kind: &'static str,
    f_open: f64,
    load_value: f64,
    f_open_sigma: f64,
    load_value_sigma: f64,
    residuals: Vec<f64>,
    flags: Vec<String>,
}

#[pyclass(frozen, get_all, module = "tlres")]
struct LossCalibration {
    tan_delta: f64,
    tan_delta_sigma: f64,
    q_open_ref: f64,
    q_open_ref_sigma: f64,
    condition_number: f64,
    residuals: Vec<f64>,
    flags: Vec<String>,
}

#[pyclass(frozen, get_all, module = "tlres")]
struct Calibration {
    reactance: Py<ReactanceCalibration>,
    loss: Option<Py<LossCalibration>>,
}

fn measurements(modes: &[(u32, f64, Option<f64>)], f_r_sigma: Option<f64>, q_i_rel_sigma: Option<f64>) -> Vec<ModeMeasurement> {
    modes
        .iter()
        .map(|&(n, f_r, q_i)| ModeMeasurement {
            mode_n: n,
            f_r,
            q_i,
            f_r_sigma,
            q_i_sigma: q_i.zip(q_i_rel_sigma).map(|(q, r)| q * r),
        })
        .collect()
}

/// Load value and `f_open` from modes `[(n, f_r, q_i or None), ...]`; the
/// loss tangent too when at least two modes carry `q_i`.
#[pyfunction]
#[pyo3(signature = (modes, kind, z0=50.0, exponent_s=1.0, f_r_sigma=None, q_i_rel_sigma=None))]
fn calibrate(
    py: Python<'_>,
    modes: Vec<(u32, f64, Option<f64>)>,
    kind: &str,
    z0: f64,
    exponent_s: f64,
    f_r_sigma: Option<f64>,
    q_i_rel_sigma: Option<f64>,
) -> PyResult<Calibration> {
    let ms = measurements(&modes, f_r_sigma, q_i_rel_sigma);
    let r = tlres::calibrate_reactance(&ms, z0, parse_kind(kind)?).map_err(err)?;
    let loss = if ms.iter().filter(|m| m.q_i.is_some()).count() >= 2 {
        let l = tlres::calibrate_loss(&ms, &r, exponent_s).map_err(err)?;
        Some(Py::new(
            py,
            LossCalibration {
                tan_delta: l.tan_delta,
                tan_delta_sigma: l.tan_delta_sigma,
                q_open_ref: l.q_open_ref,
                q_open_ref_sigma: l.q_open_ref_sigma,
                condition_number: l.condition_number,
                residuals: l.residuals,
                flags: flag_names(&l.flags),
            },
        )?)
    } else {
        None
    };
    let reactance = Py::new(
        py,
        ReactanceCalibration {
            kind: r.kind.name(),
            f_open: r.f_open,
            load_value: r.load_value,
            f_open_sigma: r.f_open_sigma(),
            load_value_sigma: r.load_value_sigma(),
            residuals: r.residuals,
            flags: flag_names(&r.flags),
        },
    )?;
    Ok(Calibration { reactance, loss })
}

/// Capacitively coupled hanger: feedline, coupling capacitor, loaded line.
#[pyclass(frozen, module = "tlres")]
struct Hanger {
    inner: HangerNetwork,
}

#[pymethods]
impl Hanger {
    #[new]
    #[pyo3(signature = (line, load, coupling_c, feed_z0=50.0))]
    fn new(line: &Line, load: &Load, coupling_c: f64, feed_z0: f64) -> PyResult<Self> {
        let inner = HangerNetwork::new(line.inner, coupling_c, load.inner.clone(), feed_z0).map_err(err)?;
        Ok(Self { inner })
    }

    /// Coupling capacitance giving a relative notch pull on mode `n`.
    #[staticmethod]
    #[pyo3(signature = (line, load, mode_n, rel_pull, feed_z0=50.0))]
    fn for_pull(line: &Line, load: &Load, mode_n: u32, rel_pull: f64, feed_z0: f64) -> PyResult<Self> {
        let c = tlres::netsynth::coupling_for_pull(&line.inner, &load.inner, mode_n, rel_pull, feed_z0)
            .map_err(err)?;
        Self::new(line, load, c, feed_z0)
    }

    #[getter]
    fn coupling_c(&self) -> f64 {
        self.inner.coupling_c
    }

    /// Notch shift of mode `n` caused by the coupling, in Hz.
    fn frequency_pull(&self, mode_n: u32) -> PyResult<f64> {
        tlres::frequency_pull(&self.inner, mode_n).map_err(err)
    }

    fn s21(&self, freqs: Vec<f64>) -> PyResult<Vec<Complex64>> {
        Ok(tlres::synth_s21(&self.inner, &freqs).map_err(err)?.s21)
    }
}

#[pyclass(frozen, get_all, module = "tlres")]
struct NotchFit {
    f_r: f64,
    q_loaded: f64,
    q_coupling_mag: f64,
    q_internal: f64,
    impedance_mismatch_phi0: f64,
    amplitude_a: f64,
    phase_alpha: f64,
    delay_tau: f64,
    fit_residual: f64,
    flags: Vec<String>,
}

#[pymethods]
impl NotchFit {
    fn __repr__(&self) -> String {
        format!("NotchFit(f_r={}, q_loaded={}, q_internal={})", self.f_r, self.q_loaded, self.q_internal)
    }
}

/// Notch circle fit of a complex S21 trace.
#[pyfunction]
fn fit_notch(freqs: Vec<f64>, s21: Vec<Complex64>) -> PyResult<NotchFit> {
    let trace = ComplexTrace::new(freqs, s21).map_err(err)?;
    let r = tlres::fit_notch(&trace).map_err(err)?;
    Ok(NotchFit {
        f_r: r.f_r,
        q_loaded: r.q_loaded,
        q_coupling_mag: r.q_coupling_mag,
        q_internal: r.q_internal,
        impedance_mismatch_phi0: r.impedance_mismatch_phi0,
        amplitude_a: r.amplitude_a,
        phase_alpha: r.phase_alpha,
        delay_tau: r.delay_tau,
        fit_residual: r.fit_residual,
        flags: flag_names(&r.flags),
    })
}

#[pyclass(frozen, get_all, module = "tlres")]
struct UncertaintyReport {
    analytic_relative_sigma: f64,
    monte_carlo_relative_sigma: f64,
    n_samples: usize,
    n_rejected: usize,
    seed: u64,
    flags: Vec<String>,
}

fn run_monte_carlo(model: UncertaintyModel, rel_sigma: f64, n_samples: usize, seed: u64) -> PyResult<UncertaintyReport> {
    let r = tlres::monte_carlo_uncertainty(&model, rel_sigma, n_samples, seed).map_err(err)?;
    Ok(UncertaintyReport {
        analytic_relative_sigma: r.analytic_relative_sigma,
        monte_carlo_relative_sigma: r.monte_carlo_relative_sigma,
        n_samples: r.n_samples,
        n_rejected: r.n_rejected,
        seed: r.seed,
        flags: flag_names(&r.flags),
    })
}

/// Normal noise on `f_open` propagated into the load value.
#[pyfunction]
#[pyo3(signature = (kind, mode_n, f_r, f_open, rel_sigma, z0=50.0, n_samples=100_000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn monte_carlo_f_open(
    kind: &str,
    mode_n: u32,
    f_r: f64,
    f_open: f64,
    rel_sigma: f64,
    z0: f64,
    n_samples: usize,
    seed: u64,
) -> PyResult<UncertaintyReport> {
    let model = UncertaintyModel::FOpen { kind: parse_kind(kind)?, mode_n, f_r, f_open, z0 };
    run_monte_carlo(model, rel_sigma, n_samples, seed)
}

/// Log-normal noise on `Q_open` propagated into the loss tangent.
#[pyfunction]
#[pyo3(signature = (phi, tan_delta, q_open, rel_sigma, exponent_s=1.0, n_samples=100_000, seed=0))]
fn monte_carlo_q_open(
    phi: f64,
    tan_delta: f64,
    q_open: f64,
    rel_sigma: f64,
    exponent_s: f64,
    n_samples: usize,
    seed: u64,
) -> PyResult<UncertaintyReport> {
    let model = UncertaintyModel::QOpen { phi, tan_delta, q_open, exponent_s };
    run_monte_carlo(model, rel_sigma, n_samples, seed)
}

/// `(mu, sigma)` of a log-normal maximum-likelihood fit.
#[pyfunction]
fn fit_lognormal(samples: Vec<f64>) -> PyResult<(f64, f64)> {
    let f = tlres::fit_lognormal(&samples).map_err(err)?;
    Ok((f.mu, f.sigma))
}

/// Spread of single-mode loss tangents over a `Q_open` ensemble.
#[pyfunction]
#[pyo3(signature = (q_i, phi, q_open_samples, exponent_s=1.0))]
fn single_mode_tand_distribution<'py>(
    py: Python<'py>,
    q_i: f64,
    phi: f64,
    q_open_samples: Vec<f64>,
    exponent_s: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let d = tlres::single_mode_tand_distribution(q_i, phi, &q_open_samples, exponent_s).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("median", d.median)?;
    out.set_item("q25", d.q25)?;
    out.set_item("q75", d.q75)?;
    out.set_item("iqr", d.iqr)?;
    out.set_item("fraction_negative", d.fraction_negative)?;
    out.set_item("n", d.n)?;
    Ok(out)
}

/// Relative permittivity from `[(area_m2, thickness_m, capacitance_f, area_sigma), ...]`.
#[pyfunction]
fn kappa_fit(points: Vec<(f64, f64, f64, f64)>) -> PyResult<(f64, f64)> {
    let points: Vec<KappaPoint> = points
        .into_iter()
        .map(|(area, thickness, capacitance, area_sigma)| KappaPoint { area, thickness, capacitance, area_sigma })
        .collect();
    let f = tlres::kappa_fit(&points).map_err(err)?;
    Ok((f.kappa, f.sigma_kappa))
}

#[pymodule]
#[pyo3(name = "tlres")]
fn tlres_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("ValidationError", py.get_type::<ValidationError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add_class::<Line>()?;
    m.add_class::<Load>()?;
    m.add_class::<Resonance>()?;
    m.add_class::<ReactanceCalibration>()?;
    m.add_class::<LossCalibration>()?;
    m.add_class::<Calibration>()?;
    m.add_class::<Hanger>()?;
    m.add_class::<NotchFit>()?;
    m.add_class::<UncertaintyReport>()?;
    m.add_function(wrap_pyfunction!(solve_resonance, m)?)?;
    m.add_function(wrap_pyfunction!(participation, m)?)?;
    m.add_function(wrap_pyfunction!(stored_energies, m)?)?;
    m.add_function(wrap_pyfunction!(max_participation, m)?)?;
    m.add_function(wrap_pyfunction!(qi_forward, m)?)?;
    m.add_function(wrap_pyfunction!(tan_delta_single_mode, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_notch, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_f_open, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_q_open, m)?)?;
    m.add_function(wrap_pyfunction!(fit_lognormal, m)?)?;
    m.add_function(wrap_pyfunction!(single_mode_tand_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(kappa_fit, m)?)?;
    Ok(())
}

//! Python bindings: masks, detection, metrics, controllers and simulation.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rowtsm_core::eval::{self, EvalRecord};
use rowtsm_core::servo::{self, IbvsConfig as CoreIbvs, PControllerConfig, ServoError};
use rowtsm_core::sim::{self, CorpusSpec, TrialConfig};
use rowtsm_core::tsm::{self, TsmConfig as CoreTsm};
use rowtsm_core::{mask, BinaryMask};

/// `(class, eps_b, eps, eps_b_reported, eps_reported)`.
type TableRow = (String, f64, f64, f64, f64);
/// `(id, mask, (l_x1, l_x2, theta_deg))`.
type CorpusEntry = (String, Mask, (f64, f64, f64));

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Binary crop mask; `True` marks crop pixels.
#[pyclass(name = "Mask", module = "rowtsm", from_py_object)]
#[derive(Clone)]
pub struct Mask {
    inner: BinaryMask,
}

#[pymethods]
impl Mask {
    #[new]
    fn new(width: usize, height: usize) -> PyResult<Self> {
        Ok(Self {
            inner: BinaryMask::new(width, height).map_err(value_err)?,
        })
    }

    /// Builds a mask from a list of rows of truthy values.
    #[staticmethod]
    fn from_rows(rows: Vec<Vec<bool>>) -> PyResult<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(PyValueError::new_err("rows must have equal length"));
        }
        let pixels = rows.into_iter().flatten().collect();
        Ok(Self {
            inner: BinaryMask::from_pixels(width, height, pixels).map_err(value_err)?,
        })
    }

    /// Decodes a binary P5 PGM (gray >= 128 is foreground).
    #[staticmethod]
    fn from_pgm(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: mask::load_mask(data).map_err(value_err)?,
        })
    }

    fn to_pgm(&self) -> Vec<u8> {
        mask::save_mask(&self.inner)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<bool> {
        self.check(x, y)?;
        Ok(self.inner.get(x, y))
    }

    fn set(&mut self, x: usize, y: usize, value: bool) -> PyResult<()> {
        self.check(x, y)?;
        self.inner.set(x, y, value);
        Ok(())
    }

    fn count_foreground(&self) -> usize {
        self.inner.count_foreground()
    }

    fn __repr__(&self) -> String {
        format!("Mask({}x{})", self.inner.width(), self.inner.height())
    }
}

impl Mask {
    fn check(&self, x: usize, y: usize) -> PyResult<()> {
        if x < self.inner.width() && y < self.inner.height() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!(
                "pixel ({x}, {y}) out of range"
            )))
        }
    }
}

/// Triangle-scan parameters.
#[pyclass(
    name = "TsmConfig",
    module = "rowtsm",
    get_all,
    set_all,
    from_py_object
)]
#[derive(Clone)]
pub struct TsmConfig {
    scale_factor: f64,
    begin: usize,
    cease: usize,
    anchor_threshold_ratio: f64,
    default_anchor: usize,
}

impl From<CoreTsm> for TsmConfig {
    fn from(c: CoreTsm) -> Self {
        Self {
            scale_factor: c.scale_factor,
            begin: c.begin,
            cease: c.cease,
            anchor_threshold_ratio: c.anchor_threshold_ratio,
            default_anchor: c.default_anchor,
        }
    }
}

impl From<&TsmConfig> for CoreTsm {
    fn from(c: &TsmConfig) -> Self {
        CoreTsm {
            scale_factor: c.scale_factor,
            begin: c.begin,
            cease: c.cease,
            anchor_threshold_ratio: c.anchor_threshold_ratio,
            default_anchor: c.default_anchor,
        }
    }
}

#[pymethods]
impl TsmConfig {
    #[new]
    #[pyo3(signature = (width = 512))]
    fn new(width: usize) -> Self {
        CoreTsm::for_width(width).into()
    }

    /// Parameters used by the simulator for a square render of `size`.
    #[staticmethod]
    fn simulation(size: usize) -> Self {
        sim::simulation_tsm(size).into()
    }

    fn __repr__(&self) -> String {
        format!(
            "TsmConfig(scale_factor={}, begin={}, cease={}, anchor_threshold_ratio={}, default_anchor={})",
            self.scale_factor, self.begin, self.cease, self.anchor_threshold_ratio, self.default_anchor
        )
    }
}

#[pyclass(name = "Detection", module = "rowtsm", get_all, frozen)]
pub struct Detection {
    l_x1: usize,
    l_x2: usize,
    delta_theta: f64,
    anchor_fallback: bool,
    anchor_peak_ratio: f64,
}

#[pymethods]
impl Detection {
    fn __repr__(&self) -> String {
        format!(
            "Detection(l_x1={}, l_x2={}, delta_theta={}, anchor_fallback={})",
            self.l_x1,
            self.l_x2,
            self.delta_theta,
            if self.anchor_fallback {
                "True"
            } else {
                "False"
            }
        )
    }
}

/// Detects the central crop row; the config defaults to one scaled to the mask width.
#[pyfunction]
#[pyo3(signature = (mask, config = None))]
fn detect(mask: &Mask, config: Option<&TsmConfig>) -> PyResult<Detection> {
    let cfg = config.map_or_else(|| CoreTsm::for_width(mask.inner.width()), CoreTsm::from);
    let d = tsm::detect(&mask.inner, &cfg).map_err(value_err)?;
    Ok(Detection {
        l_x1: d.l_x1,
        l_x2: d.l_x2,
        delta_theta: d.delta_theta,
        anchor_fallback: d.anchor_fallback,
        anchor_peak_ratio: d.anchor_peak_ratio,
    })
}

/// Combined score of absolute angle and bottom-column errors, in [.., 1].
#[pyfunction]
#[pyo3(signature = (dtheta, dlx2, dtheta_max = eval::APPENDIX_DTHETA_MAX, dlx2_max = eval::APPENDIX_DLX2_MAX))]
fn epsilon(dtheta: Vec<f64>, dlx2: Vec<f64>, dtheta_max: f64, dlx2_max: f64) -> PyResult<f64> {
    if dtheta.len() != dlx2.len() {
        return Err(PyValueError::new_err(
            "dtheta and dlx2 must have equal length",
        ));
    }
    let records: Vec<EvalRecord> = dtheta
        .into_iter()
        .zip(dlx2)
        .map(|(t, l)| EvalRecord {
            image_id: String::new(),
            dtheta_abs: t.abs(),
            dlx2_abs: l.abs(),
            category: None,
        })
        .collect();
    Ok(eval::epsilon(&records, dtheta_max, dlx2_max)
        .map_err(value_err)?
        .epsilon)
}

/// Proportional yaw-rate command.
#[pyfunction]
#[pyo3(signature = (delta_lx2, delta_theta, alpha = -0.12, w1 = 1.0, w2 = 0.04))]
fn p_control(delta_lx2: f64, delta_theta: f64, alpha: f64, w1: f64, w2: f64) -> f64 {
    let cfg = PControllerConfig {
        alpha,
        w1,
        w2,
        ..PControllerConfig::default()
    };
    servo::p_control(
        &ServoError {
            delta_lx2,
            delta_theta,
        },
        &cfg,
    )
}

/// Image-based visual servoing yaw-rate command.
#[pyfunction]
#[pyo3(signature = (delta_lx2, delta_theta, jacobian_w, jacobian_v = (0.0, 0.0), lambda_ = 2.0, v_star = 0.5))]
fn ibvs_control(
    delta_lx2: f64,
    delta_theta: f64,
    jacobian_w: (f64, f64),
    jacobian_v: (f64, f64),
    lambda_: f64,
    v_star: f64,
) -> PyResult<f64> {
    let cfg = CoreIbvs {
        lambda: lambda_,
        v_star,
        jacobian_v: [jacobian_v.0, jacobian_v.1],
        jacobian_w: [jacobian_w.0, jacobian_w.1],
    };
    servo::ibvs_control(
        &ServoError {
            delta_lx2,
            delta_theta,
        },
        &cfg,
    )
    .map_err(value_err)
}

/// Column range (B, C) from ground-truth bottom columns.
#[pyfunction]
#[pyo3(signature = (lx2_values, min_freq = 5))]
fn suggest_bc(lx2_values: Vec<i64>, min_freq: usize) -> PyResult<(i64, i64)> {
    let s = eval::suggest_bc(&lx2_values, min_freq).map_err(value_err)?;
    Ok((s.begin, s.cease))
}

/// Recomputed per-class scores of the shipped table:
/// `(class, eps_b, eps, eps_b_reported, eps_reported)` in percent.
#[pyfunction]
fn reproduce_table() -> PyResult<Vec<TableRow>> {
    let rows = eval::parse_appendix(eval::APPENDIX_A_CSV).map_err(value_err)?;
    let results =
        eval::reproduce_appendix_a(&rows, eval::APPENDIX_DTHETA_MAX, eval::APPENDIX_DLX2_MAX)
            .map_err(value_err)?;
    Ok(results
        .into_iter()
        .map(|r| (r.class, r.eps_b, r.eps, r.eps_b_reported, r.eps_reported))
        .collect())
}

/// Random renders of the middle row: `(id, mask, (l_x1, l_x2, theta_deg))`.
#[pyfunction]
#[pyo3(signature = (count = 200, seed = 0))]
fn render_corpus(count: usize, seed: u64) -> PyResult<Vec<CorpusEntry>> {
    let items = sim::render_corpus(&CorpusSpec {
        count,
        seed,
        ..CorpusSpec::default()
    })
    .map_err(value_err)?;
    Ok(items
        .into_iter()
        .map(|it| {
            let t = it.truth;
            (
                it.id,
                Mask { inner: it.mask },
                (t.l_x1, t.l_x2, t.theta_deg),
            )
        })
        .collect())
}

/// Runs closed-loop trials with the default field and proportional gains.
/// Returns the batch means and per-trial heading traces.
#[pyfunction]
#[pyo3(signature = (trials = 20, seed = 0, heading = None, dropout = 0.0))]
fn simulate<'py>(
    py: Python<'py>,
    trials: usize,
    seed: u64,
    heading: Option<f64>,
    dropout: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let field_spec = sim::FieldSpec {
        seed,
        ..sim::FieldSpec::default()
    };
    let field = sim::generate_field(&field_spec).map_err(value_err)?;
    let base = TrialConfig {
        degrade: (dropout > 0.0).then(|| mask::DegradeSpec {
            dropout_probability: dropout,
            seed,
            ..mask::DegradeSpec::identity()
        }),
        ..TrialConfig::default()
    };
    let configs: Vec<TrialConfig> = match heading {
        Some(h) => vec![
            TrialConfig {
                initial_heading_deg: h,
                ..base
            };
            trials
        ],
        None => sim::protocol_trials(&base, trials, seed),
    };
    let (summary, traces) = py
        .detach(|| sim::run_batch(&configs, &field, true))
        .map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("mean_settling_frames", summary.mean_settling_frames)?;
    out.set_item("mean_abs_theta_deg", summary.mean_abs_theta_deg)?;
    out.set_item("mean_abs_lateral_m", summary.mean_abs_lateral_m)?;
    out.set_item("all_settled", summary.all_settled)?;
    out.set_item(
        "initial_headings",
        configs
            .iter()
            .map(|c| c.initial_heading_deg)
            .collect::<Vec<_>>(),
    )?;
    out.set_item(
        "theta_traces",
        traces
            .iter()
            .map(|t| {
                t.records
                    .iter()
                    .map(|r| r.theta_world_deg)
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>(),
    )?;
    Ok(out)
}

#[pymodule]
fn rowtsm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Mask>()?;
    m.add_class::<TsmConfig>()?;
    m.add_class::<Detection>()?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(p_control, m)?)?;
    m.add_function(wrap_pyfunction!(ibvs_control, m)?)?;
    m.add_function(wrap_pyfunction!(suggest_bc, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce_table, m)?)?;
    m.add_function(wrap_pyfunction!(render_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}

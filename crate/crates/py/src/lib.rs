//! Python module `emac_fem`: run experiments from JSON configs and simulate
//! the unit-square problems, returning diagnostics as plain lists.

use std::path::PathBuf;
use std::sync::Arc;

use emac_bench::{run_experiment, write_report, ExperimentConfig};
use emac_core::diagnostics::DiagnosticsSeries;
use emac_core::forms::FormKind;
use emac_core::mesh::{build_structured_mesh, refine_by, Rect};
use emac_core::problems::{FlowProblem, LatticeVortex, Manufactured};
use emac_core::solvers::{run_simulation, ErrorSchedule, Method, RunOptions, SchemeConfig, TimeScheme};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Runs the experiment in `config` and writes its outputs to `out`, or to
/// the configured directory. Returns the checks and the written files.
#[pyfunction]
#[pyo3(signature = (config, out=None))]
fn run_config<'py>(py: Python<'py>, config: PathBuf, out: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig::load(&config).map_err(value_error)?;
    let dir = match (out, &cfg.output) {
        (Some(d), _) => d,
        (None, Some(d)) => cfg.resolve(d),
        (None, None) => PathBuf::from("out").join(cfg.experiment.name()),
    };
    let (report, written) = py
        .detach(|| {
            let report = run_experiment(&cfg)?;
            let written = write_report(&dir, &cfg, &report)?;
            Ok::<_, emac_bench::BenchError>((report, written))
        })
        .map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("passed", report.passed())?;
    let checks: Vec<(String, f64, String, bool)> =
        report.checks.iter().map(|c| (c.name.clone(), c.value, c.bound.clone(), c.passed)).collect();
    d.set_item("checks", checks)?;
    d.set_item("notes", report.notes.clone())?;
    d.set_item("files", written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>())?;
    d.set_item("summary", report.summary)?;
    Ok(d)
}

fn series_dict<'py>(py: Python<'py>, s: &DiagnosticsSeries) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let col = |f: &dyn Fn(&emac_core::diagnostics::Record) -> f64| s.records.iter().map(f).collect::<Vec<f64>>();
    d.set_item("t", col(&|r| r.t))?;
    d.set_item("energy", col(&|r| r.energy))?;
    d.set_item("momentum_x", col(&|r| r.momentum[0]))?;
    d.set_item("momentum_y", col(&|r| r.momentum[1]))?;
    d.set_item("angular_momentum", col(&|r| r.angular_momentum))?;
    if s.records.iter().all(|r| r.errors.is_some()) && !s.records.is_empty() {
        let e = |f: fn(&emac_core::diagnostics::ErrorNorms) -> f64| s.records.iter().map(|r| f(r.errors.as_ref().unwrap())).collect::<Vec<f64>>();
        d.set_item("l2_velocity", e(|x| x.l2_velocity))?;
        d.set_item("h1_velocity", e(|x| x.h1_velocity))?;
        d.set_item("l2_pressure_primal", e(|x| x.l2_pressure_primal))?;
        d.set_item("l2_pressure_emac", e(|x| x.l2_pressure_emac))?;
    }
    d.set_item("stopped", s.blow_up.as_ref().map(|(step, why)| (*step, why.clone())))?;
    Ok(d)
}

/// Simulates `problem` ("manufactured" or "lattice-vortex") on the unit
/// square with `fine` and `coarse` cells per side, recording diagnostics and
/// errors every step.
#[pyfunction]
#[pyo3(signature = (problem, fine, coarse, nu, dt, t_final, method="two-level-newton", form="emac", time_scheme="bdf2", blow_up_factor=None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    problem: &str,
    fine: usize,
    coarse: usize,
    nu: f64,
    dt: f64,
    t_final: f64,
    method: &str,
    form: &str,
    time_scheme: &str,
    blow_up_factor: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let flow: Box<dyn FlowProblem> = match problem {
        "manufactured" => Box::new(Manufactured { nu }),
        "lattice-vortex" => Box::new(LatticeVortex { nu }),
        other => return Err(value_error(format!("unknown problem '{other}'"))),
    };
    if coarse == 0 || !fine.is_multiple_of(coarse) {
        return Err(value_error("fine must be a positive multiple of coarse"));
    }
    let mut cfg = SchemeConfig::new(nu, dt, t_final);
    cfg.method = method.parse::<Method>().map_err(value_error)?;
    cfg.form = form.parse::<FormKind>().map_err(value_error)?;
    cfg.time_scheme = match time_scheme {
        "bdf1" => TimeScheme::Bdf1,
        "bdf2" => TimeScheme::Bdf2,
        other => return Err(value_error(format!("unknown time scheme '{other}'"))),
    };
    let opts = RunOptions {
        errors: ErrorSchedule::EveryStep,
        blow_up_factor,
        label: format!("{problem} {method} {form}"),
        ..Default::default()
    };
    let series = py
        .detach(|| {
            let c = Arc::new(build_structured_mesh(coarse, Rect::UNIT)?);
            let f = if fine == coarse { Arc::clone(&c) } else { Arc::new(refine_by(&c, fine / coarse)?) };
            run_simulation(flow.as_ref(), &cfg, &f, Some(&c), &opts, |_, _| {}).map(|r| r.series)
        })
        .map_err(value_error)?;
    series_dict(py, &series)
}

#[pymodule]
fn emac_fem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("FORMS", ["emac", "conv", "skew", "rota", "dive"])?;
    m.add("METHODS", ["one-level", "two-level-stokes", "two-level-newton"])?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}

//! The three experiments: manufactured-solution convergence, lattice vortex
//! and flow past a cylinder.

use std::fmt::Write as _;
use std::sync::Arc;

use emac_core::diagnostics::{convergence_rates, DiagnosticsSeries, ForceScales, RateTable};
use emac_core::forms::FormKind;
use emac_core::mesh::{build_structured_mesh, load_mesh, refine_by, BoundaryTag, Mesh, Rect};
use emac_core::problems::{ChannelFlow, LatticeVortex, Manufactured};
use emac_core::solvers::{run_simulation, ErrorSchedule, ForceSetup, Method, RunOptions, SimulationResult, StepReport};
use log::{info, warn};

use crate::config::{ExperimentConfig, ExperimentId};
use crate::error::{BenchError, Result};
use crate::output::{Artifact, Check, Report};
use crate::plot::{emit_plot_script, Panel, SeriesRef};

pub const ERROR_COLUMNS: [&str; 4] = ["l2_velocity", "h1_velocity", "l2_pressure_primal", "l2_pressure_emac"];

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    match cfg.experiment {
        ExperimentId::Convergence => run_convergence_study(cfg),
        ExperimentId::LatticeVortex => run_lattice_vortex(cfg),
        ExperimentId::Cylinder => run_cylinder(cfg),
    }
}

/// Coarse structured mesh with `coarse` cells per side and its refinement
/// with `fine` cells per side.
fn unit_square_pair(fine: usize, coarse: usize) -> Result<(Arc<Mesh>, Arc<Mesh>)> {
    let c = Arc::new(build_structured_mesh(coarse, Rect::UNIT)?);
    let f = if fine == coarse { Arc::clone(&c) } else { Arc::new(refine_by(&c, fine / coarse)?) };
    Ok((f, c))
}

fn run_tag(method: Method, form: FormKind) -> String {
    format!("{}_{}", method.name(), form.name())
}

/// Largest linear and Newton residuals over accepted steps.
fn worst_residuals(reports: &[StepReport]) -> (f64, f64) {
    reports.iter().fold((0.0f64, 0.0f64), |(l, n), r| (l.max(r.linear_residual), n.max(r.newton_residual)))
}

fn residual_checks(report: &mut Report, cfg: &ExperimentConfig, label: &str, res: &SimulationResult) {
    if let Some(bound) = cfg.thresholds.linear_residual {
        let (lin, newton) = worst_residuals(&res.reports);
        report.checks.push(Check::at_most(format!("{label} linear residual"), lin, bound));
        report.checks.push(Check::at_most(format!("{label} newton residual"), newton, bound));
    }
}

pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::default();
    let problem = Manufactured { nu: cfg.scheme.nu };
    let initial = cfg.scheme.initial_data()?;
    for method in cfg.method_list()? {
        for form in cfg.form_kinds()? {
            let tag = run_tag(method, form);
            let mut rows = Vec::new();
            let mut pairs = Vec::new();
            for &[nf, nc] in &cfg.mesh.pairs {
                let (h, coarse_h) = (1.0 / nf as f64, 1.0 / nc as f64);
                let dt = cfg.scheme.dt.resolve(h, coarse_h)?;
                let scheme = cfg.scheme.scheme(dt, method, form)?;
                let (fine, coarse) = unit_square_pair(nf, nc)?;
                let opts = RunOptions {
                    initial,
                    errors: ErrorSchedule::Final,
                    label: format!("{tag} ({nf},{nc})"),
                    ..Default::default()
                };
                info!("convergence {tag}: 1/h = {nf}, 1/H = {nc}, dt = {dt:.3e}, {} steps", scheme.num_steps());
                let outcome = run_simulation(&problem, &scheme, &fine, Some(&coarse), &opts, |_, _| {});
                let errors = outcome.as_ref().ok().and_then(|r| r.series.records.last().and_then(|x| x.errors));
                match (outcome, errors) {
                    (Ok(res), Some(e)) => {
                        residual_checks(&mut report, cfg, &opts.label, &res);
                        rows.push((h, coarse_h, dt, vec![e.l2_velocity, e.h1_velocity, e.l2_pressure_primal, e.l2_pressure_emac]));
                        pairs.push([nf, nc]);
                    }
                    (Ok(_), None) => report.notes.push(format!("{}: no final error recorded", opts.label)),
                    (Err(e), _) => {
                        warn!("{}: {e}", opts.label);
                        report.notes.push(format!("{} failed: {e}", opts.label));
                    }
                }
            }
            if rows.is_empty() {
                continue;
            }
            let table = convergence_rates(&ERROR_COLUMNS, &rows)?;
            rate_checks(&mut report, cfg, &tag, &table, &pairs);
            let file = format!("convergence_{tag}.csv");
            let csv = table.to_csv();
            let series = [SeriesRef::from_csv(&tag, &file, &csv)];
            let panels: Vec<Panel> = ERROR_COLUMNS.iter().map(|c| Panel::new(c, "h", c).log_log()).collect();
            report.artifacts.push(Artifact::new(
                format!("convergence_{tag}.gp"),
                emit_plot_script(&format!("convergence {tag}"), &format!("convergence_{tag}.png"), &series, &panels),
            ));
            report.artifacts.push(Artifact::new(file, csv));
            let _ = writeln!(report.summary, "{tag}\n{}", table.to_console());
        }
    }
    Ok(report)
}

fn rate_checks(report: &mut Report, cfg: &ExperimentConfig, tag: &str, table: &RateTable, pairs: &[[usize; 2]]) {
    for (row, [nf, nc]) in table.rows.iter().zip(pairs) {
        for (col, rate) in ERROR_COLUMNS.iter().zip(&row.rates) {
            if let (Some(rate), Some([lo, hi])) = (rate, cfg.thresholds.rates.get(*col)) {
                report.checks.push(Check::within(format!("{tag} {col} rate ({nf},{nc})"), *rate, *lo, *hi));
            }
        }
    }
    if let Some(reference) = &cfg.thresholds.reference_errors {
        match pairs.iter().position(|p| *p == reference.pair) {
            Some(i) => {
                let [nf, nc] = reference.pair;
                for (col, e) in ERROR_COLUMNS.iter().zip(&table.rows[i].errors) {
                    if let Some(r) = reference.values.get(*col) {
                        let ratio = (e / r).max(r / e);
                        report.checks.push(Check::at_most(format!("{tag} {col} ({nf},{nc}) / reference"), ratio, reference.factor));
                    }
                }
            }
            None => report.checks.push(Check {
                name: format!("{tag} reference row {:?}", reference.pair),
                value: f64::NAN,
                bound: "row present".into(),
                passed: false,
            }),
        }
    }
}

/// Maximum EMAC energy drift on one mesh pair.
type PairDrift = ([usize; 2], f64);

pub fn run_lattice_vortex(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::default();
    let problem = LatticeVortex { nu: cfg.scheme.nu };
    let initial = cfg.scheme.initial_data()?;
    let methods = cfg.method_list()?;
    let forms = cfg.form_kinds()?;
    let th = &cfg.thresholds;
    let mut energy_drift: Vec<(Method, Vec<PairDrift>)> = methods.iter().map(|&m| (m, Vec::new())).collect();

    for &[nf, nc] in &cfg.mesh.pairs {
        let (h, coarse_h) = (1.0 / nf as f64, 1.0 / nc as f64);
        let dt = cfg.scheme.dt.resolve(h, coarse_h)?;
        let (fine, coarse) = unit_square_pair(nf, nc)?;
        for (mi, &method) in methods.iter().enumerate() {
            let mut runs: Vec<(FormKind, DiagnosticsSeries)> = Vec::new();
            let mut refs = Vec::new();
            for &form in &forms {
                let scheme = cfg.scheme.scheme(dt, method, form)?;
                let label = format!("{} ({nf},{nc})", run_tag(method, form));
                let opts = RunOptions {
                    initial,
                    errors: ErrorSchedule::EveryStep,
                    pivot: [0.5, 0.5],
                    blow_up_factor: cfg.blow_up_factor,
                    label: label.clone(),
                    ..Default::default()
                };
                info!("lattice vortex {label}: dt = {dt:.3e}, {} steps", scheme.num_steps());
                let res = match run_simulation(&problem, &scheme, &fine, Some(&coarse), &opts, |_, _| {}) {
                    Ok(r) => r,
                    Err(e) => {
                        warn!("{label}: {e}");
                        report.notes.push(format!("{label} failed: {e}"));
                        continue;
                    }
                };
                if let Some((step, why)) = &res.series.blow_up {
                    report.notes.push(format!("{label} stopped at step {step}: {why}"));
                }
                residual_checks(&mut report, cfg, &label, &res);
                if form == FormKind::Emac {
                    lattice_invariant_checks(&mut report, cfg, &label, &res.series, scheme.num_steps());
                    energy_drift[mi].1.push(([nf, nc], res.series.max_drift(|r| r.energy)));
                }
                let file = format!("lattice_{nf}_{nc}_{}.csv", run_tag(method, form));
                let csv = res.series.to_csv();
                refs.push(SeriesRef::from_csv(form.name(), &file, &csv));
                report.artifacts.push(Artifact::new(file, csv));
                runs.push((form, res.series));
            }
            if let Some(min) = th.unstable_forms {
                let unstable = count_unstable(&runs, cfg.blow_up_factor, th.error_factor.unwrap_or(10.0));
                report.checks.push(Check::at_least(
                    format!("{} ({nf},{nc}) non-EMAC forms unstable", method.name()),
                    unstable as f64,
                    min as f64,
                ));
            }
            let _ = writeln!(report.summary, "{} ({nf},{nc})", method.name());
            for (form, s) in &runs {
                let last = s.records.last();
                let _ = writeln!(
                    report.summary,
                    "  {:>5}: t_end = {:.2}, energy {:.6e}, max |dE| {:.3e}, max |dM| {:.3e}, max |dL| {:.3e}{}",
                    form.name(),
                    last.map_or(0.0, |r| r.t),
                    last.map_or(f64::NAN, |r| r.energy),
                    s.max_drift(|r| r.energy),
                    s.max_drift(|r| r.momentum[0]).max(s.max_drift(|r| r.momentum[1])),
                    s.max_drift(|r| r.angular_momentum),
                    if s.blow_up.is_some() { " (stopped)" } else { "" }
                );
            }
            let panels = [
                Panel::new("energy", "t", "energy"),
                Panel::new("momentum (x)", "t", "momentum_x"),
                Panel::new("angular momentum", "t", "angular_momentum"),
                Panel::new("L2 velocity error", "t", "l2_velocity").log_y(),
            ];
            let stem = format!("lattice_{nf}_{nc}_{}", method.name());
            report.artifacts.push(Artifact::new(
                format!("{stem}.gp"),
                emit_plot_script(&format!("lattice vortex, {} ({nf},{nc})", method.name()), &format!("{stem}.png"), &refs, &panels),
            ));
        }
    }

    for (method, drifts) in &energy_drift {
        let Some(min_ratio) = th.drift_ratio.get(method.name()) else { continue };
        for w in drifts.windows(2) {
            let ([a, b], [c, d]) = (w[0].0, w[1].0);
            let ratio = w[0].1 / w[1].1;
            let _ = writeln!(report.summary, "{} energy drift ({a},{b}) {:.3e} -> ({c},{d}) {:.3e}: ratio {ratio:.2}", method.name(), w[0].1, w[1].1);
            report.checks.push(Check::at_least(format!("{} energy drift ratio ({a},{b})->({c},{d})", method.name()), ratio, *min_ratio));
        }
    }
    Ok(report)
}

fn lattice_invariant_checks(report: &mut Report, cfg: &ExperimentConfig, label: &str, s: &DiagnosticsSeries, steps: usize) {
    let th = &cfg.thresholds;
    if let (Some(bound), Some(r0)) = (th.initial_invariants, s.initial()) {
        let m0 = r0.momentum[0].abs().max(r0.momentum[1].abs());
        report.checks.push(Check::at_most(format!("{label} initial momentum"), m0, bound));
        report.checks.push(Check::at_most(format!("{label} initial angular momentum"), r0.angular_momentum.abs(), bound));
    }
    if let Some(bound) = th.conservation {
        let dm = s.max_drift(|r| r.momentum[0]).max(s.max_drift(|r| r.momentum[1]));
        report.checks.push(Check::at_most(format!("{label} momentum drift"), dm, bound));
        report.checks.push(Check::at_most(format!("{label} angular momentum drift"), s.max_drift(|r| r.angular_momentum), bound));
    }
    if let Some([lo, hi]) = th.emac_energy {
        let (emin, emax) = s.records.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.energy), b.max(r.energy)));
        report.checks.push(Check::within(format!("{label} min energy"), emin, Some(lo), Some(hi)));
        report.checks.push(Check::within(format!("{label} max energy"), emax, Some(lo), Some(hi)));
    }
    if th.conservation.is_some() || th.emac_energy.is_some() {
        let done = s.records.last().map_or(0, |r| r.step);
        report.checks.push(Check::at_least(format!("{label} steps completed"), done as f64, steps as f64));
    }
}

/// Non-EMAC runs that stopped on energy growth, or whose L2 error reaches
/// `factor` times the EMAC error at the same step.
fn count_unstable(runs: &[(FormKind, DiagnosticsSeries)], blow_up: Option<f64>, factor: f64) -> usize {
    let emac = runs.iter().find(|(f, _)| *f == FormKind::Emac).map(|(_, s)| s);
    runs.iter()
        .filter(|(f, _)| *f != FormKind::Emac)
        .filter(|(_, s)| {
            let grew = match (blow_up, s.initial()) {
                (Some(b), Some(r0)) => s.records.iter().any(|r| !(r.energy <= b * r0.energy)),
                _ => false,
            };
            let worse = emac.is_some_and(|e| {
                s.records.iter().zip(&e.records).any(|(a, b)| match (a.errors, b.errors) {
                    (Some(x), Some(y)) => x.l2_velocity >= factor * y.l2_velocity,
                    _ => false,
                })
            });
            grew || worse
        })
        .count()
}

fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn run_cylinder(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::default();
    let spec = cfg.cylinder.as_ref().ok_or_else(|| BenchError::Config("missing cylinder section".into()))?;
    let path = cfg.resolve(cfg.mesh.file.as_deref().expect("validated"));
    let coarse = Arc::new(load_mesh(&path)?);
    let fine = match cfg.mesh.refine.unwrap_or(1) {
        1 => Arc::clone(&coarse),
        k => Arc::new(refine_by(&coarse, k)?),
    };
    let problem = ChannelFlow {
        height: spec.height,
        peak: spec.peak_velocity,
        schedule: (&spec.schedule).into(),
    };
    let forces = ForceSetup {
        tag: BoundaryTag::CYLINDER,
        front: spec.front,
        back: spec.back,
        scales: ForceScales {
            diameter: spec.diameter,
            mean_velocity: spec.mean_velocity,
        },
    };
    let initial = cfg.scheme.initial_data()?;
    let dt = cfg.scheme.dt.resolve(fine.size(), coarse.size())?;
    for method in cfg.method_list()? {
        for form in cfg.form_kinds()? {
            let tag = run_tag(method, form);
            let scheme = cfg.scheme.scheme(dt, method, form)?;
            let opts = RunOptions {
                initial,
                pivot: spec.front,
                forces: Some(forces),
                label: format!("cylinder {tag}"),
                ..Default::default()
            };
            info!(
                "cylinder {tag}: {} coarse / {} fine cells, dt = {dt:.3e}, {} steps",
                coarse.num_cells(),
                fine.num_cells(),
                scheme.num_steps()
            );
            let mut last_log = 0.0;
            let res = run_simulation(&problem, &scheme, &fine, Some(&coarse), &opts, |s, r| {
                if s.t >= last_log + 0.5 {
                    last_log = s.t;
                    if let Some([d, l, p]) = r.forces {
                        info!("cylinder {tag}: t = {:.2}, c_d = {d:.5}, c_l = {l:.5}, dp = {p:.5}", s.t);
                    }
                }
            })?;
            residual_checks(&mut report, cfg, &opts.label, &res);
            cylinder_checks(&mut report, cfg, &tag, &res.series);
            let file = format!("cylinder_{tag}.csv");
            let csv = res.series.to_csv();
            let series = [SeriesRef::from_csv(&tag, &file, &csv)];
            let panels = [
                Panel::new("drag coefficient", "t", "drag"),
                Panel::new("lift coefficient", "t", "lift"),
                Panel::new("pressure difference", "t", "pressure_difference"),
            ];
            report.artifacts.push(Artifact::new(
                format!("cylinder_{tag}.gp"),
                emit_plot_script(&format!("flow past a cylinder, {tag}"), &format!("cylinder_{tag}.png"), &series, &panels),
            ));
            report.artifacts.push(Artifact::new(file, csv));
        }
    }
    Ok(report)
}

/// Peak drag and lift with their times, and the final pressure difference.
pub fn cylinder_peaks(series: &DiagnosticsSeries) -> Option<[(f64, f64); 3]> {
    let forces: Vec<(f64, [f64; 3])> = series.records.iter().filter_map(|r| r.forces.map(|f| (r.t, f))).collect();
    let peak = |k: usize| forces.iter().map(|(t, f)| (f[k], *t)).fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    let (t, f) = forces.last()?;
    Some([peak(0), peak(1), (f[2], *t)])
}

fn cylinder_checks(report: &mut Report, cfg: &ExperimentConfig, tag: &str, s: &DiagnosticsSeries) {
    let Some([(cd, tcd), (cl, tcl), (dp, t_end)]) = cylinder_peaks(s) else {
        report.notes.push(format!("{tag}: no force records"));
        return;
    };
    let _ = writeln!(
        report.summary,
        "{tag}: max c_d = {cd:.6} at t = {tcd:.3}, max c_l = {cl:.6} at t = {tcl:.3}, dp(t = {t_end:.3}) = {dp:.6}"
    );
    let spec = cfg.cylinder.as_ref().expect("validated");
    if let (Some(tol), Some(r)) = (cfg.thresholds.peak_tolerance, &spec.reference) {
        for (name, value, reference) in [
            ("max drag", cd, r.drag_max),
            ("max lift", cl, r.lift_max),
            ("final pressure difference", dp, r.pressure_difference_final),
        ] {
            let rel = ((value - reference) / reference).abs();
            let _ = writeln!(report.summary, "  {name}: {value:.6} vs reference {reference} ({:.2}%)", 100.0 * rel);
            report.checks.push(Check::at_most(format!("{tag} {name} relative deviation"), rel, tol));
        }
    }
    if let Some(min) = cfg.thresholds.oscillation_ratio {
        let lift: Vec<f64> = s.records.iter().filter_map(|r| r.forces.map(|f| f[1])).collect();
        let n = lift.len();
        let early = std_dev(&lift[..(n / 10).max(1)]);
        let late = std_dev(&lift[n - (n / 5).max(1)..]);
        let ratio = late / early;
        let _ = writeln!(report.summary, "  lift std: first 10% {early:.3e}, last 20% {late:.3e}");
        report.checks.push(Check::at_least(format!("{tag} lift oscillation ratio"), ratio, min));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use emac_core::diagnostics::Record;

    fn series(energies: &[f64], errors: &[f64]) -> DiagnosticsSeries {
        let mut s = DiagnosticsSeries::new("x", [0.5, 0.5]);
        for (k, (&e, &err)) in energies.iter().zip(errors).enumerate() {
            s.push(Record {
                step: k,
                t: k as f64,
                energy: e,
                errors: Some(emac_core::diagnostics::ErrorNorms {
                    l2_velocity: err,
                    h1_velocity: err,
                    l2_pressure_primal: err,
                    l2_pressure_emac: err,
                }),
                ..Default::default()
            });
        }
        s
    }

    #[test]
    fn unstable_forms_are_counted_by_growth_or_error() {
        let runs = vec![
            (FormKind::Emac, series(&[0.5, 0.5, 0.5], &[1e-3, 1e-3, 1e-3])),
            (FormKind::Conv, series(&[0.5, 2.0, 6.0], &[1e-3, 1e-3, 1e-3])),
            (FormKind::Skew, series(&[0.5, 0.5, 0.5], &[1e-3, 5e-3, 1e-2])),
            (FormKind::Rota, series(&[0.5, 0.5, 0.5], &[1e-3, 2e-3, 5e-3])),
        ];
        assert_eq!(count_unstable(&runs, Some(10.0), 10.0), 2);
        assert_eq!(count_unstable(&runs, None, 10.0), 1);
    }

    #[test]
    fn standard_deviation() {
        assert_eq!(std_dev(&[1.0, 1.0]), 0.0);
        assert!((std_dev(&[1.0, 3.0]) - 1.0).abs() < 1e-15);
        assert!(std_dev(&[]).is_nan());
    }
}

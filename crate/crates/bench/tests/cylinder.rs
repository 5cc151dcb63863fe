use std::fs;
use std::path::{Path, PathBuf};

use emac_bench::experiments::{cylinder_peaks, run_cylinder};
use emac_bench::ExperimentConfig;
use emac_core::diagnostics::DiagnosticsSeries;
use emac_core::mesh::{build_cylinder_channel, load_mesh, CylinderChannel};

fn shipped_mesh() -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "data", "cylinder.mesh"].iter().collect()
}

fn small_config(dir: &Path, peak: f64) -> ExperimentConfig {
    let g = CylinderChannel {
        around: 4,
        radial: 3,
        downstream: 8,
        ..Default::default()
    };
    fs::write(dir.join("small.mesh"), build_cylinder_channel(&g).unwrap().to_text()).unwrap();
    let text = format!(
        r#"{{
          "experiment": "cylinder",
          "mesh": {{"file": "small.mesh", "refine": 2}},
          "scheme": {{"nu": 1e-3, "t_final": 0.05, "dt": 0.01}},
          "cylinder": {{
            "height": 0.41, "peak_velocity": {peak},
            "schedule": {{"kind": "ramp", "ramp": 1.0}},
            "diameter": 0.1, "mean_velocity": 1.0,
            "front": [0.15, 0.2], "back": [0.25, 0.2]
          }},
          "thresholds": {{"linear_residual": 1e-10}}
        }}"#
    );
    ExperimentConfig::from_json(&text, dir).unwrap()
}

#[test]
fn shipped_mesh_is_the_default_generator_output() {
    let text = fs::read_to_string(shipped_mesh()).unwrap();
    let generated = build_cylinder_channel(&CylinderChannel::default()).unwrap();
    assert_eq!(text, generated.to_text());
    let mesh = load_mesh(shipped_mesh()).unwrap();
    assert_eq!(mesh.euler_characteristic(), 0);
    assert_eq!(mesh.num_cells(), generated.num_cells());
}

#[test]
fn zero_inflow_gives_zero_functionals() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_cylinder(&small_config(dir.path(), 0.0)).unwrap();
    let csv = &report.artifact("cylinder_two-level-newton_emac.csv").unwrap().content;
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let cols: Vec<usize> = ["drag", "lift", "pressure_difference"].iter().map(|c| header.iter().position(|h| h == c).unwrap()).collect();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    for line in rows {
        let fields: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        for &c in &cols {
            assert_eq!(fields[c], 0.0, "{line}");
        }
    }
    assert!(report.passed());
}

#[test]
fn inflow_pushes_the_cylinder_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_cylinder(&small_config(dir.path(), 1.5)).unwrap();
    assert!(report.passed(), "{}", report.checks_table());
    let script = &report.artifact("cylinder_two-level-newton_emac.gp").unwrap().content;
    assert_eq!(script.matches("plot '").count(), 3);
    assert!(report.summary.contains("max c_d"));
}

#[test]
fn peaks_come_from_the_force_records() {
    let mut s = DiagnosticsSeries::new("x", [0.2, 0.2]);
    for (k, f) in [[0.0, 0.0, 0.0], [2.0, -1.0, 0.5], [1.0, 0.5, -0.1]].into_iter().enumerate() {
        s.push(emac_core::diagnostics::Record {
            step: k,
            t: k as f64,
            forces: Some(f),
            ..Default::default()
        });
    }
    let [(cd, tcd), (cl, tcl), (dp, t_end)] = cylinder_peaks(&s).unwrap();
    assert_eq!((cd, tcd, cl, tcl, dp, t_end), (2.0, 1.0, 0.5, 2.0, -0.1, 2.0));
    assert!(cylinder_peaks(&DiagnosticsSeries::new("y", [0.0, 0.0])).is_none());
}

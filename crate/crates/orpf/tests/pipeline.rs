mod common;

use std::fs;
use std::path::Path;

use orpf::netmodel::profiles::Profiles;
use orpf::objectives::{ObjectiveSpec, WeightVector, Weighted};
use orpf::pipeline::report::write_report;
use orpf::pipeline::{run_combined, run_interdependence, study_cases, PipelineConfig, Scenario};

fn toy_hv() -> Scenario {
    let profiles = Profiles::parse_str(&common::data("toy_hv_profiles.csv")).unwrap();
    Scenario::new(common::network("toy_hv.json"), Some(profiles)).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn results_do_not_depend_on_the_worker_count() {
    let sc = toy_hv();
    let cfg = PipelineConfig {
        cases: Some(4),
        ..Default::default()
    };
    let cases = study_cases(&sc, &cfg).unwrap();
    assert_eq!(cases, study_cases(&sc, &cfg).unwrap());
    let weights = WeightVector::new(vec![
        Weighted { objective: ObjectiveSpec::parse("B.U").unwrap(), alpha: 2.0 },
        Weighted { objective: ObjectiveSpec::parse("slack.P").unwrap(), alpha: 1.0 },
    ])
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in [1, 3] {
        let inter = run_interdependence(&sc, &cases, &cfg, workers).unwrap();
        let comb = run_combined(&sc, &cases, &weights, Some(&inter), &cfg, workers).unwrap();
        let out = dir.path().join(workers.to_string());
        write_report(&out, "toy_hv", &cfg, &inter, Some(&comb)).unwrap();
        outputs.push((inter, comb, files(&out)));
    }
    let (a, b) = (&outputs[0], &outputs[1]);
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    assert_eq!(a.2.len(), 6);
}

#[test]
fn combined_performance_agrees_with_per_case_aggregation() {
    let sc = toy_hv();
    let cfg = PipelineConfig {
        cases: Some(3),
        seed: 11,
        ..Default::default()
    };
    let cases = study_cases(&sc, &cfg).unwrap();
    let weights = WeightVector::new(
        ObjectiveSpec::standard()
            .into_iter()
            .zip([4.0, 1.0, 1.0, 0.5, 0.25])
            .map(|(objective, alpha)| Weighted { objective, alpha })
            .collect(),
    )
    .unwrap();
    let comb = run_combined(&sc, &cases, &weights, None, &cfg, 2).unwrap();
    assert_eq!(comb.row.failures, 0);
    let (f, d) = (comb.f_alpha, comb.f_alpha_direct);
    assert!((f - d).abs() <= 1e-12 * f.max(d), "{f} vs {d}");
}

#[test]
fn single_weight_combined_run_reproduces_the_objective_row() {
    let sc = toy_hv();
    let cfg = PipelineConfig {
        cases: Some(3),
        ..Default::default()
    };
    let cases = study_cases(&sc, &cfg).unwrap();
    let inter = run_interdependence(&sc, &cases, &cfg, 2).unwrap();
    for (o, spec) in cfg.objectives.iter().enumerate() {
        let w = WeightVector::new(vec![Weighted { objective: *spec, alpha: 7.0 }]).unwrap();
        let comb = run_combined(&sc, &cases, &w, Some(&inter), &cfg, 2).unwrap();
        assert_eq!(comb.row.values, inter.rows[o + 1].values, "{spec}");
        assert_eq!(comb.f_alpha.to_bits(), comb.row.values[o].to_bits(), "{spec}");
    }
}

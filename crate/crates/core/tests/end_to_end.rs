use signcong::bootstrap::{load_replicates, trimmed_bootstrap_correlation, ReplicateFormat};
use signcong::calibration::{emit_critical_table, write_table_csv, CalibrationConfig, Calibrator};
use signcong::normal::{sample_bvn, Correlation, Covariance2};
use signcong::procedures::{run_test, EstimatePair, NullDirection, TestName};
use signcong::simulate::{mc_rate_surface, SimScenario};

fn quick() -> Calibrator {
    Calibrator::new(CalibrationConfig {
        grid_step: 0.01,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn rates_do_not_depend_on_thread_count() {
    let cal = quick();
    let scenario = SimScenario {
        test: TestName::Recommended,
        mu_grid: vec![(0.0, 0.0), (0.0, 1.0), (1.5, -1.5)],
        cov: Covariance2::new(1.0, 2.0, Correlation::new(-0.7).unwrap()).unwrap(),
        alpha: 0.05,
        reps: 100_000,
        seed: 42,
        n_schedule: None,
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_rate_surface(&cal, &scenario).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(7));
}

#[test]
fn replicate_files_round_trip() {
    let draws = sample_bvn((0.3, -0.2), &Covariance2::new(1.0, 0.5, Correlation::new(0.6).unwrap()).unwrap(), 500, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("reps.csv");
    let json_path = dir.path().join("reps.json");
    let mut w = csv::Writer::from_path(&csv_path).unwrap();
    w.write_record(["b1", "b2"]).unwrap();
    for (a, b) in &draws {
        w.write_record([a.to_string(), b.to_string()]).unwrap();
    }
    w.flush().unwrap();
    let arrays: Vec<[f64; 2]> = draws.iter().map(|&(a, b)| [a, b]).collect();
    std::fs::write(&json_path, serde_json::to_string(&arrays).unwrap()).unwrap();

    let from_csv = load_replicates(&csv_path, ReplicateFormat::from_path(&csv_path)).unwrap();
    let from_json = load_replicates(&json_path, ReplicateFormat::from_path(&json_path)).unwrap();
    assert_eq!(from_csv.pairs(), draws.as_slice());
    assert_eq!(from_csv.pairs(), from_json.pairs());
    let rho = trimmed_bootstrap_correlation(&from_csv).unwrap().value();
    assert!((rho - 0.6).abs() < 0.1, "{rho}");
}

#[test]
fn table_csv_layout() {
    let rhos = [Correlation::new(-0.9).unwrap(), Correlation::ZERO];
    let cells = emit_critical_table(&[0.05, 0.01], &rhos, &CalibrationConfig {
        grid_step: 0.01,
        ..Default::default()
    })
    .unwrap();
    let mut buf = Vec::new();
    write_table_csv(&cells, &mut buf, |x| format!("{x:.6}")).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha,rho,c,argmax_mu2,achieved_size,one_sided_flag,error");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0.050000,-0.900000,1.74893"));
    assert!(lines[3].ends_with(",inf,0.050000,true,"));
}

#[test]
fn dispatch_covers_every_test() {
    let cal = quick();
    let known = EstimatePair::known(3.0, -2.5, Covariance2::unit(Correlation::ZERO)).unwrap();
    let estimated = EstimatePair::estimated(0.3, -0.25, Covariance2::unit(Correlation::ZERO), 100).unwrap();
    for test in TestName::ALL {
        let est = if test == TestName::Feasible { &estimated } else { &known };
        let out = run_test(&cal, test, est, 0.05, NullDirection::Congruent).unwrap();
        assert_eq!(out.test, test);
        assert!(out.reject, "{test}");
    }
}

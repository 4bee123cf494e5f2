use roughavg::experiment::{run_convergence_study, Drivers, ExperimentConfig, Scenario};
use roughavg::fastslow::drift::{averaged_drift_probes, DriftSettings, EstimatorMode};
use roughavg::fastslow::solve_fastslow;
use roughavg::stats::{log_log_slope, median};

#[test]
fn ensemble_and_ergodic_estimators_agree() {
    let cfg = ExperimentConfig::for_scenario(Scenario::Coupled);
    let setup = cfg.setup().unwrap();
    let settings = DriftSettings {
        samples: 300,
        horizon: 300.0,
        ..cfg.estimator.settings()
    };
    let xs: Vec<Vec<f64>> = cfg.estimator.probes.iter().map(|&x| vec![x]).collect();
    assert_eq!(xs.len(), 10);
    let ens = averaged_drift_probes(&setup.system, &xs, &settings, EstimatorMode::Ensemble).unwrap();
    let erg = averaged_drift_probes(&setup.system, &xs, &settings, EstimatorMode::Ergodic).unwrap();
    for ((x, a), b) in xs.iter().zip(&ens).zip(&erg) {
        let se = a.stderr[0].hypot(b.stderr[0]);
        assert!((a.value[0] - b.value[0]).abs() <= 4.0 * se, "x = {x:?}: {a:?} vs {b:?}");
    }
}

#[test]
fn fast_solution_grows_sublinearly() {
    let mut cfg = ExperimentConfig::for_scenario(Scenario::Acceptance);
    cfg.study.eps = vec![0.5, 0.25, 0.125, 0.0625];
    cfg.grid.fast_resolution = 0.08;
    let setup = cfg.setup().unwrap();
    let mut sup = vec![Vec::new(); cfg.study.eps.len()];
    for seed in 0..6 {
        let drivers = Drivers::sample(&cfg, &setup.system, seed).unwrap();
        for (k, &eps) in cfg.study.eps.iter().enumerate() {
            let system = setup.system.with_eps(eps).unwrap();
            let out = solve_fastslow(
                &system,
                &setup.x0,
                &setup.y0,
                &drivers.omega1,
                &drivers.fast_driver(eps).unwrap(),
                cfg.grid.fast_resolution,
                cfg.study.scheme,
            )
            .unwrap();
            sup[k].push(out.y.sup_norm());
        }
    }
    let inv: Vec<f64> = cfg.study.eps.iter().map(|e| 1.0 / e).collect();
    let med: Vec<f64> = sup.iter().map(|s| median(s)).collect();
    let slope = log_log_slope(&inv, &med);
    // The stationary fast process reaches sqrt(log(1/eps)) over [0, T].
    assert!(slope < 0.5, "sup |Y| medians {med:?}, slope {slope}");
}

#[test]
fn distance_shrinks_with_eps() {
    let mut cfg = ExperimentConfig::for_scenario(Scenario::Acceptance);
    cfg.study.eps = vec![0.5, 0.05];
    cfg.study.delta = vec![0.2, 0.1];
    cfg.study.seeds = 6;
    cfg.grid.fast_resolution = 0.04;
    let res = run_convergence_study(&cfg).unwrap();
    assert_eq!(res.failures(), 0);
    let sup = res.medians_by_eps(|c| c.distance.sup);
    assert!(sup[1] < sup[0], "{sup:?}");
}

use std::path::PathBuf;

use ironfi_cli::config::{ExperimentConfig, GridSpec, NoiseSpec};
use proptest::prelude::*;

fn shipped(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap()
}

#[test]
fn shipped_configs_match_defaults() {
    assert_eq!(shipped("quad_sim.toml"), ExperimentConfig::quadratic_default());
    assert_eq!(shipped("logreg_sweep.toml"), ExperimentConfig::logistic_default());
    assert_eq!(shipped("logcosh_sim.toml"), ExperimentConfig::logcosh_default());

    let mut lyap = ExperimentConfig::quadratic_default();
    lyap.output_dir = "out/quad_lyapunov".into();
    lyap.grids = GridSpec { alpha: vec![1.0, 10.0, 50.0, 200.0, 500.0], delta: vec![], alpha_min: None };
    assert_eq!(shipped("quad_lyapunov.toml"), lyap);
}

#[test]
fn shipped_configs_validate() {
    for name in ["quad_sim.toml", "quad_lyapunov.toml", "logreg_sweep.toml", "logcosh_sim.toml"] {
        shipped(name).validate().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let mut text = ExperimentConfig::quadratic_default().to_toml().unwrap();
    text.push_str("\nextra_key = 1\n");
    assert!(toml::from_str::<ExperimentConfig>(&text).is_err());
}

#[test]
fn validation_catches_bad_values() {
    let mut cfg = ExperimentConfig::quadratic_default();
    cfg.grids.alpha.clear();
    assert!(cfg.validate().is_err());

    let mut cfg = ExperimentConfig::quadratic_default();
    cfg.grids.alpha = vec![10.0, 1.0];
    assert!(cfg.validate().is_err());

    let mut cfg = ExperimentConfig::quadratic_default();
    cfg.grids.alpha = vec![0.5];
    assert!(cfg.validate().is_err());

    let mut cfg = ExperimentConfig::logistic_default();
    cfg.grids.delta = vec![0.0];
    assert!(cfg.validate().is_err());

    let mut cfg = ExperimentConfig::logcosh_default();
    cfg.dynamics.mu = 0.0;
    assert!(cfg.validate().is_err());
}

#[test]
fn general_noise_path_resolves_next_to_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("sigma.csv"), "0.1,0,0\n0,0.2,0\n0,0,0.3\n").unwrap();
    let mut cfg = ExperimentConfig::quadratic_default();
    cfg.noise = NoiseSpec::General { sigma_sqrt_path: "sigma.csv".into(), seed: 3 };
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let loaded = ExperimentConfig::load(&path).unwrap();
    let model = loaded.noise_model().unwrap();
    assert!((model.trace(3) - (0.01 + 0.04 + 0.09)).abs() < 1e-15);
}

proptest! {
    #[test]
    fn toml_round_trip(
        rho in 0.0f64..1.0,
        seed in any::<u64>(),
        n in 1usize..100_000,
        burn in 0.0f64..0.99,
        alphas in proptest::collection::vec(1.0f64..1e4, 1..6),
        tol in 1e-14f64..1e3,
    ) {
        let mut cfg = ExperimentConfig::quadratic_default();
        cfg.noise = NoiseSpec::Isotropic { rho, seed };
        cfg.ensemble.n_particles = n;
        cfg.ensemble.burn_in_fraction = burn;
        cfg.grids.alpha = alphas;
        cfg.inner.tol = tol;
        let back: ExperimentConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

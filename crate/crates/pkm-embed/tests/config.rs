use pkm_core::irsbot2::{ExperimentKind, IrsbotParams, TrajectorySpec};
use pkm_core::solver::{SolverKind, WarmStart};
use pkm_embed::config::{Experiment, Mode, Scheme, WarmStartConfig};
use pkm_embed::{CliError, RunConfig};

#[test]
fn defaults_describe_the_nominal_nested_run() {
    let c = RunConfig::default();
    assert_eq!(c.model, "irsbot2");
    let r = c.resolve().unwrap();
    assert_eq!(r.kind, ExperimentKind::IkNested);
    assert_eq!(r.solver, SolverKind::Nested);
    assert_eq!(r.spec, TrajectorySpec::nominal(&IrsbotParams::default()));
    assert_eq!(r.settings, pkm_core::solver::IkSettings::default());
}

#[test]
fn json_fields_override_the_defaults() {
    let c = RunConfig::from_json(
        r#"{"experiment": "singularity", "mode": "cut_joint", "solver": "compound",
            "trajectory": {"dt": 0.01, "dz": -0.3},
            "settings": {"epsilon": 1e-9, "warm_start": "previous", "alpha": 2.0},
            "out": "results", "validate": {"states": 5, "suites": ["fd-jacobian"]}}"#,
    )
    .unwrap();
    assert_eq!((c.experiment, c.mode, c.solver), (Experiment::Singularity, Mode::CutJoint, Some(Scheme::Compound)));
    assert_eq!(c.settings.warm_start, WarmStartConfig::Previous);
    let r = c.resolve().unwrap();
    assert_eq!(r.solver, SolverKind::Compound);
    assert_eq!(r.settings.warm_start, WarmStart::Previous);
    assert_eq!((r.settings.epsilon, r.settings.epsilon1, r.settings.metric.alpha), (1e-9, 1e-10, 2.0));
    assert_eq!((r.spec.dt, r.spec.dx, r.spec.dz), (0.01, -0.15, -0.3));
    assert_eq!(r.spec.n_samples(), 101);
    assert_eq!(c.validate.states, 5);
}

#[test]
fn singularity_defaults_to_its_own_path() {
    let c = RunConfig { experiment: Experiment::Singularity, ..RunConfig::default() };
    let r = c.resolve().unwrap();
    assert_eq!((r.spec.dx, r.spec.dz), (-0.15, -0.6085));
}

#[test]
fn malformed_settings_are_configuration_errors() {
    let bad = [
        r#"{"experiment": "ik_sideways"}"#,
        r#"{"unknown": 1}"#,
        r#"{"trajectory": {"dt": 0.0}}"#,
        r#"{"trajectory": {"duration": -1.0}}"#,
        r#"{"settings": {"epsilon": -1.0}}"#,
        r#"{"settings": {"max_outer": 0}}"#,
        r#"{"settings": {"beta": -1.0}}"#,
        r#"{"settings": {"alpha": 0.0, "beta": 0.0}}"#,
        r#"{"experiment": "ik_nested", "solver": "compound"}"#,
        "not json",
    ];
    for text in bad {
        let r = RunConfig::from_json(text).and_then(|c| c.resolve().map(|_| ()));
        assert!(matches!(r, Err(CliError::Config(_))), "{text}: {r:?}");
    }
}

#[test]
fn names_parse_like_the_json_spelling() {
    for (name, e) in Experiment::NAMES.iter().zip([Experiment::IkNested, Experiment::IkCompound, Experiment::Invdyn, Experiment::Singularity]) {
        assert_eq!(name.parse::<Experiment>().unwrap(), e);
    }
    assert!(matches!("ik".parse::<Experiment>(), Err(CliError::Config(_))));
    assert_eq!("cut_joint".parse::<Mode>().unwrap(), Mode::CutJoint);
    assert!("cut-joint".parse::<Mode>().is_err());
    assert_eq!("nested".parse::<Scheme>().unwrap(), Scheme::Nested);
}

#[test]
fn missing_model_file_is_a_model_error() {
    let c = RunConfig { model: "/nonexistent/model.json".into(), ..RunConfig::default() };
    assert!(matches!(c.resolve(), Err(CliError::Model(_))));
}

#[test]
fn configuration_errors_take_precedence_over_model_errors() {
    let mut c = RunConfig { model: "/nonexistent/model.json".into(), ..RunConfig::default() };
    c.trajectory.dt = -1.0;
    assert!(matches!(c.resolve(), Err(CliError::Config(_))));
}

#[test]
fn exit_codes_are_distinct() {
    let codes: Vec<u8> = [
        CliError::Validation(String::new()),
        CliError::Config(String::new()),
        CliError::Model(String::new()),
        CliError::Solver(String::new()),
    ]
    .iter()
    .map(CliError::exit_code)
    .collect();
    assert_eq!(codes, vec![1, 2, 3, 4]);
}

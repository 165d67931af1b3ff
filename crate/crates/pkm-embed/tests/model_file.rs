use pkm_core::irsbot2::{build_model, default_model, IrsbotParams, ProximalMode};
use pkm_embed::model_file::ModelFile;
use pkm_embed::CliError;

#[test]
fn built_in_model_round_trips_through_json() {
    for mode in [ProximalMode::Analytic, ProximalMode::CutJoint] {
        let m = build_model(&IrsbotParams::default(), mode).unwrap();
        let file = ModelFile::from_model(&m);
        let text = file.to_json();
        let back: ModelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_model().unwrap(), m);
    }
}

#[test]
fn file_lists_joints_by_id_with_screws_on_tree_joints_only() {
    let f = ModelFile::from_model(&default_model());
    let l = &f.limbs[0];
    assert_eq!(l.joints.iter().map(|j| j.id).collect::<Vec<_>>(), (1..=8).collect::<Vec<_>>());
    assert_eq!(l.cuts, vec![7, 8]);
    let screws: Vec<usize> = l.joints.iter().map(|j| j.screws.len()).collect();
    assert_eq!(screws, vec![1, 1, 1, 2, 2, 2, 0, 0]);
    assert_eq!(l.body_ref.len(), 7);
    assert_eq!(l.cycles[0].closure.as_ref().unwrap(), &vec![vec![1.0], vec![-1.0], vec![1.0]]);
    assert!(l.cycles[1].closure.is_none());
}

type Edit = Box<dyn FnOnce(&mut ModelFile)>;

fn edit(f: impl FnOnce(&mut ModelFile)) -> Result<pkm_core::PkmModel, CliError> {
    let mut file = ModelFile::from_model(&default_model());
    f(&mut file);
    file.to_model()
}

#[test]
fn invalid_descriptions_are_model_errors() {
    let cases: Vec<Edit> = vec![
        Box::new(|f| f.limbs[0].body_ref[2].rotation[0][0] = 2.0),
        Box::new(|f| f.limbs[0].p_t[1].pop().map(drop).unwrap_or(())),
        Box::new(|f| f.limbs[0].joints[0].screws[0] = [0.0, 2.0, 0.0, 0.0, 0.0, 0.0]),
        Box::new(|f| f.limbs[0].cuts = vec![7]),
        Box::new(|f| f.limbs[1].cycles[1].dependent = vec![0, 1, 2]),
        Box::new(|f| f.actuators[0] = vec![3]),
        Box::new(|f| f.gravity[2] = f64::NAN),
        Box::new(|f| f.limbs[0].inertia.as_mut().unwrap().pop().map(drop).unwrap_or(())),
        Box::new(|f| f.limbs.clear()),
    ];
    for (i, c) in cases.into_iter().enumerate() {
        assert!(matches!(edit(c), Err(CliError::Model(_))), "case {i}");
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let mut v: serde_json::Value = serde_json::from_str(&ModelFile::from_model(&default_model()).to_json()).unwrap();
    v["limbs"][0]["colour"] = "red".into();
    assert!(serde_json::from_value::<ModelFile>(v).is_err());
}

#[test]
fn perturbed_anchor_still_builds() {
    // Anchors are not checked at construction; the residual suite catches them.
    let m = edit(|f| f.limbs[0].cycles[1].cut.d_k[0] += 0.01).unwrap();
    let r = pkm_core::oracle::cut_residual(&m.limbs[0], &m.limbs[0].cycles[1].cut, &nalgebra::DVector::zeros(9));
    assert!((r.norm() - 0.01).abs() < 1e-12);
}

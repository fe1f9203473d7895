use super::*;
use crate::autodiff::grad_check;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(feat: usize, hidden: usize, classes: usize) -> ModelConfig {
    ModelConfig {
        feat_dim: feat,
        hidden,
        classes,
        ..ModelConfig::default()
    }
}

fn stream(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..len)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

#[test]
fn window_counts() {
    let w = AnticipationWindow::new(1.5, 1.0, 0.25).unwrap();
    assert_eq!((w.n_o(), w.n_a()), (6, 4));
    assert!(AnticipationWindow::new(1.6, 1.0, 0.25).is_err());
    assert!(AnticipationWindow::new(1.5, 0.0, 0.25).is_err());
    let w = AnticipationWindow::new(1.5, 2.0, 0.25).unwrap();
    let tags: Vec<f64> = (1..=w.n_a()).map(|k| w.step_horizon(k)).collect();
    assert_eq!(tags, vec![2.0, 1.75, 1.5, 1.25, 1.0, 0.75, 0.5, 0.25]);
}

#[test]
fn zero_model_zero_features() {
    let mut m = Model::new(small(3, 4, 5), 1).unwrap();
    for p in m.params_mut() {
        p.data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    let mut g = Graph::new();
    let p = m.bind(&mut g, false);
    let zeros = vec![vec![0.0; 3]; 6];
    let inputs = batch_inputs(&mut g, &[&zeros[..]], 6, 3).unwrap();
    let trace = GruGru.encode(&mut g, &p, &inputs).unwrap();
    let feats = GruGru.decode(&mut g, &p, *trace.last().unwrap(), 8).unwrap();
    assert_eq!(feats.len(), 8);
    for f in feats {
        assert!(g.value(f).data().iter().all(|&x| x == 0.0));
    }
}

#[test]
fn eight_steps_per_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = Model::new(small(3, 6, 4), 3).unwrap();
    let w = AnticipationWindow::new(1.5, 2.0, 0.25).unwrap();
    let a = stream(&mut rng, 6, 3);
    let b = stream(&mut rng, 6, 3);
    let preds = m.predict(&[&a[..], &b[..]], &w).unwrap();
    assert_eq!(preds.len(), 2);
    assert!(preds.iter().all(|p| p.steps.len() == 8));
    let again = m.predict(&[&a[..], &b[..]], &w).unwrap();
    assert_eq!(preds, again);
}

#[test]
fn input_checks() {
    let m = Model::new(small(3, 4, 4), 3).unwrap();
    let w = AnticipationWindow::new(1.5, 0.5, 0.25).unwrap();
    let short = vec![vec![0.0; 3]; 5];
    assert!(matches!(
        m.predict(&[&short[..]], &w),
        Err(ModelError::Input { what: "observed length", expected: 6, got: 5 })
    ));
    let wide = vec![vec![0.0; 4]; 6];
    assert!(matches!(
        m.predict(&[&wide[..]], &w),
        Err(ModelError::Input { what: "feature dimension", expected: 3, got: 4 })
    ));
}

#[test]
fn encoder_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = Model::new(small(3, 4, 3), 5).unwrap();
    let s = stream(&mut rng, 4, 3);
    let params = m.params().to_vec();
    let report = grad_check(
        |g, v| {
            let p = Bound {
                vars: v.to_vec(),
                config: *m.config(),
            };
            let inputs = batch_inputs(g, &[&s[..]], 4, 3).map_err(|e| {
                crate::autodiff::AutodiffError::Invalid(e.to_string())
            })?;
            let trace = GruGru.encode(g, &p, &inputs)?;
            let feats = GruGru.decode(g, &p, *trace.last().unwrap(), 3)?;
            let all = g.concat(&feats, 0)?;
            Ok(g.mean(all))
        },
        &params,
        1e-6,
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn zero_uncertainty_head_gives_softplus_zero() {
    let mut m = Model::new(small(2, 3, 4), 6).unwrap();
    for name in ["head_u.w", "head_u.b"] {
        let i = m.names().iter().position(|n| n == name).unwrap();
        m.params_mut()[i].data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    let w = AnticipationWindow::new(0.5, 0.5, 0.25).unwrap();
    let s = vec![vec![0.3, -0.2]; 2];
    let p = m.predict(&[&s[..]], &w).unwrap();
    assert!((p[0].last().u - (2f64.ln() + 0.1)).abs() < 1e-12);
}

#[test]
fn pooling_modes() {
    assert_eq!(Pooling::Mean.apply(&[1.0, 2.0, 3.0]), 2.0);
    assert_eq!(Pooling::Max.apply(&[1.0, 2.0, 3.0]), 3.0);
    assert_eq!(Pooling::Min.apply(&[1.0, 2.0, 3.0]), 1.0);
    assert_eq!("max".parse::<Pooling>().unwrap(), Pooling::Max);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn pooled_uncertainty_in_bounds(seed in 0u64..1000, pool in 0usize..3, scale in 0.1f64..20.0) {
        let mut cfg = small(3, 5, 4);
        cfg.pooling = [Pooling::Mean, Pooling::Max, Pooling::Min][pool];
        let mut m = Model::new(cfg, seed).unwrap();
        for p in m.params_mut() {
            p.data_mut().iter_mut().for_each(|x| *x *= scale);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = stream(&mut rng, 2, 3);
        let w = AnticipationWindow::new(0.5, 0.75, 0.25).unwrap();
        for step in &m.predict(&[&s[..]], &w).unwrap()[0].steps {
            prop_assert!(step.u >= cfg.u_floor && step.u <= cfg.u_ceiling && step.u > 0.0);
            prop_assert!((step.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let m = Model::new(small(3, 4, 5), 9).unwrap();
    let mut buf = Vec::new();
    let extra = serde_json::json!({"seed": 9});
    write_checkpoint(&m, &extra, &mut buf).unwrap();
    let (back, meta) = read_checkpoint(buf.as_slice(), None).unwrap();
    assert_eq!(meta, extra);
    for (a, b) in m.params().iter().zip(back.params()) {
        let ab: Vec<u64> = a.data().iter().map(|x| x.to_bits()).collect();
        let bb: Vec<u64> = b.data().iter().map(|x| x.to_bits()).collect();
        assert_eq!(ab, bb);
    }
    let mut again = Vec::new();
    write_checkpoint(&back, &extra, &mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn checkpoint_dimension_mismatch_names_shapes() {
    let m = Model::new(small(3, 4, 5), 9).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&m, &serde_json::Value::Null, &mut buf).unwrap();
    let err = read_checkpoint(buf.as_slice(), Some(&small(5, 4, 5))).unwrap_err();
    match err {
        ModelError::ParamShape { name, expected, found } => {
            assert_eq!(name, "enc.wx");
            assert_eq!(expected, vec![5, 12]);
            assert_eq!(found, vec![3, 12]);
        }
        other => panic!("{other:?}"),
    }
    assert!(read_checkpoint(&b"garbage!and more"[..], None).is_err());
}

#[test]
fn mc_dropout_limits_and_reproducibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let m = Model::new(small(3, 6, 4), 11).unwrap();
    let w = AnticipationWindow::new(1.0, 1.0, 0.25).unwrap();
    let a = stream(&mut rng, 4, 3);
    let b = stream(&mut rng, 4, 3);
    let streams = [&a[..], &b[..]];
    let tiny = mc_dropout_forward(&m, &streams, &w, 5, 1e-12, 1).unwrap();
    assert!(tiny.model_uncertainty.iter().all(|&x| x < 1e-12));
    assert!(tiny.pass_probs.windows(2).all(|p| p[0] == p[1]));

    let r1 = mc_dropout_forward(&m, &streams, &w, 2, 0.3, 5).unwrap();
    let r2 = mc_dropout_forward(&m, &streams, &w, 2, 0.3, 5).unwrap();
    assert_eq!(r1, r2);

    let fifty = mc_dropout_forward(&m, &streams, &w, 50, 0.3, 5).unwrap();
    assert!(fifty.mean_model_uncertainty() > 0.0 && fifty.mean_model_uncertainty().is_finite());

    assert!(mc_dropout_forward(&m, &streams, &w, 1, 0.3, 5).is_err());
    assert!(mc_dropout_forward(&m, &streams, &w, 3, 1.0, 5).is_err());
}

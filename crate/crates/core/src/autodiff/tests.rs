use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

#[test]
fn add_componentwise() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::vector(vec![1.0, 2.0]));
    let b = g.constant(Tensor::vector(vec![3.0, 4.0]));
    let c = g.add(a, b).unwrap();
    assert_eq!(g.value(c).data(), &[4.0, 6.0]);
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut g = Graph::new();
    let z = g.constant(Tensor::vector(vec![0.0; 3]));
    let s = g.softmax(z, 0).unwrap();
    for &p in g.value(s).data() {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn identity_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_tensor(&mut rng, &[3, 3], -2.0, 2.0);
    let mut g = Graph::new();
    let i = g.constant(Tensor::identity(3));
    let av = g.constant(a.clone());
    let p = g.matmul(i, av).unwrap();
    assert_eq!(g.value(p), &a);
}

#[test]
fn shape_mismatch_names_op() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 3]));
    let err = g.matmul(a, b).unwrap_err();
    assert!(err.to_string().contains("matmul"));
    assert!(err.to_string().contains("[2, 3]"));
    let c = g.constant(Tensor::zeros(&[4]));
    assert!(g.add(a, c).unwrap_err().to_string().contains("add"));
}

#[test]
fn backward_square_sum() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0]));
    let s = g.square(x);
    let r = g.sum(s);
    assert_eq!(g.backward(r).unwrap().wrt(x).data(), &[2.0, 4.0]);
}

#[test]
fn backward_log_softmax_pick() {
    let z = vec![0.3, -1.2, 2.0, 0.5];
    let k = 2;
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(z.clone()));
    let ls = g.log_softmax(x, 0).unwrap();
    let picked = g.slice(ls, 0, k, 1).unwrap();
    let grads = g.backward(picked).unwrap();
    let zmax = z.iter().cloned().fold(f64::MIN, f64::max);
    let denom: f64 = z.iter().map(|v| (v - zmax).exp()).sum();
    for (j, &gv) in grads.wrt(x).data().iter().enumerate() {
        let soft = (z[j] - zmax).exp() / denom;
        let expect = if j == k { 1.0 - soft } else { -soft };
        assert!((gv - expect).abs() < 1e-14);
    }
}

#[test]
fn backward_mean() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![3.0, -1.0, 2.0, 7.0]));
    let m = g.mean(x);
    assert_eq!(g.backward(m).unwrap().wrt(x).data(), &[0.25; 4]);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(
        g.backward(x),
        Err(AutodiffError::NonScalarRoot(_))
    ));
}

#[test]
fn unreached_leaf_gets_zero_gradient() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0]));
    let y = g.param(Tensor::vector(vec![5.0]));
    let r = g.sum(x);
    let grads = g.backward(r).unwrap();
    assert_eq!(grads.wrt(y).data(), &[0.0]);
}

#[test]
fn quadratic_grad_check_is_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = rand_tensor(&mut rng, &[5], -3.0, 3.0);
    let report = grad_check(
        |g, v| {
            let s = g.square(v[0]);
            let s = g.scale(s, 1.5);
            Ok(g.sum(s))
        },
        &[p],
        1e-5,
        1e-7,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn grad_check_reports_non_finite() {
    let p = Tensor::vector(vec![1e-7, 1.0]);
    let err = grad_check(
        |g, v| {
            let l = g.log(v[0]);
            Ok(g.sum(l))
        },
        &[p],
        1e-6,
        1e-4,
    )
    .unwrap_err();
    assert_eq!(err, AutodiffError::NonFinite { input: 0, index: 0 });
}

#[test]
fn softmax_rows_normalised_and_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let t = rand_tensor(&mut rng, &[4, 7], -40.0, 40.0);
        let mut g = Graph::new();
        let x = g.constant(t);
        let s = g.softmax(x, 1).unwrap();
        let v = g.value(s);
        for r in 0..4 {
            let row = v.row(r);
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn backward_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = rand_tensor(&mut rng, &[3, 4], -1.0, 1.0);
    let w = rand_tensor(&mut rng, &[4, 5], -1.0, 1.0);
    let build = |g: &mut Graph| {
        let x = g.param(a.clone());
        let wv = g.param(w.clone());
        let h = g.matmul(x, wv).unwrap();
        let t = g.tanh(h);
        let s = g.log_softmax(t, 1).unwrap();
        let r = g.mean(s);
        (x, wv, r)
    };
    let mut g = Graph::new();
    let (x, wv, r) = build(&mut g);
    let g1 = g.backward(r).unwrap();
    let g2 = g.backward(r).unwrap();
    assert_eq!(g1.wrt(x).data(), g2.wrt(x).data());
    assert_eq!(g1.wrt(wv).data(), g2.wrt(wv).data());
}

type OpCase = (
    &'static str,
    Vec<Vec<usize>>,
    (f64, f64),
    fn(&mut Graph, &[Var]) -> Result<Var, AutodiffError>,
);

/// Each op is wrapped into a scalar by a fixed random projection so every
/// output coordinate contributes to the checked gradient.
fn project(g: &mut Graph, y: Var) -> Result<Var, AutodiffError> {
    let n = g.value(y).numel();
    let w: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 17) as f64 / 17.0 - 0.4).collect();
    let shape = g.shape(y).to_vec();
    let wv = g.constant(Tensor::new(shape, w)?);
    let p = g.mul(y, wv)?;
    Ok(g.sum(p))
}

fn op_cases() -> Vec<OpCase> {
    vec![
        ("add", vec![vec![3, 4], vec![1, 4]], (-2.0, 2.0), |g, v| {
            let y = g.add(v[0], v[1])?;
            project(g, y)
        }),
        ("sub", vec![vec![3, 4], vec![3, 1]], (-2.0, 2.0), |g, v| {
            let y = g.sub(v[0], v[1])?;
            project(g, y)
        }),
        ("mul", vec![vec![3, 4], vec![3, 4]], (-2.0, 2.0), |g, v| {
            let y = g.mul(v[0], v[1])?;
            project(g, y)
        }),
        ("div", vec![vec![3, 4], vec![3, 1]], (0.5, 2.0), |g, v| {
            let y = g.div(v[0], v[1])?;
            project(g, y)
        }),
        ("matmul", vec![vec![3, 4], vec![4, 2]], (-2.0, 2.0), |g, v| {
            let y = g.matmul(v[0], v[1])?;
            project(g, y)
        }),
        ("concat", vec![vec![2, 3], vec![2, 2]], (-2.0, 2.0), |g, v| {
            let y = g.concat(&[v[0], v[1]], 1)?;
            project(g, y)
        }),
        ("slice", vec![vec![3, 6]], (-2.0, 2.0), |g, v| {
            let y = g.slice(v[0], 1, 2, 3)?;
            project(g, y)
        }),
        ("sum", vec![vec![3, 4]], (-2.0, 2.0), |g, v| {
            let y = g.square(v[0]);
            Ok(g.sum(y))
        }),
        ("mean", vec![vec![3, 4]], (-2.0, 2.0), |g, v| {
            let y = g.square(v[0]);
            Ok(g.mean(y))
        }),
        ("mean_axis", vec![vec![3, 4]], (-2.0, 2.0), |g, v| {
            let y = g.mean_axis(v[0], 1)?;
            project(g, y)
        }),
        ("sum_axis", vec![vec![3, 4]], (-2.0, 2.0), |g, v| {
            let y = g.sum_axis(v[0], 0)?;
            project(g, y)
        }),
        ("exp", vec![vec![3, 4]], (-2.0, 2.0), |g, v| {
            let y = g.exp(v[0]);
            project(g, y)
        }),
        ("log", vec![vec![3, 4]], (0.5, 3.0), |g, v| {
            let y = g.log(v[0]);
            project(g, y)
        }),
        ("sigmoid", vec![vec![3, 4]], (-3.0, 3.0), |g, v| {
            let y = g.sigmoid(v[0]);
            project(g, y)
        }),
        ("tanh", vec![vec![3, 4]], (-3.0, 3.0), |g, v| {
            let y = g.tanh(v[0]);
            project(g, y)
        }),
        ("softplus", vec![vec![3, 4]], (-3.0, 3.0), |g, v| {
            let y = g.softplus(v[0]);
            project(g, y)
        }),
        ("softmax_axis", vec![vec![3, 5]], (-3.0, 3.0), |g, v| {
            let y = g.softmax(v[0], 1)?;
            project(g, y)
        }),
        ("log_softmax_axis", vec![vec![3, 5]], (-3.0, 3.0), |g, v| {
            let y = g.log_softmax(v[0], 1)?;
            project(g, y)
        }),
        ("scale_by_scalar_node", vec![vec![3, 4], vec![1]], (-2.0, 2.0), |g, v| {
            let y = g.scale_by(v[0], v[1])?;
            project(g, y)
        }),
        ("square", vec![vec![3, 4]], (-2.0, 2.0), |g, v| {
            let y = g.square(v[0]);
            project(g, y)
        }),
        ("gather_rows", vec![vec![4, 3]], (-2.0, 2.0), |g, v| {
            let y = g.gather_rows(v[0], &[2, 0, 2, 3])?;
            project(g, y)
        }),
        ("max_axis", vec![vec![3, 5]], (-2.0, 2.0), |g, v| {
            let y = g.max_axis(v[0], 1)?;
            project(g, y)
        }),
        ("min_axis", vec![vec![3, 5]], (-2.0, 2.0), |g, v| {
            let y = g.min_axis(v[0], 1)?;
            project(g, y)
        }),
    ]
}

#[test]
fn every_op_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (name, shapes, (lo, hi), f) in op_cases() {
        for trial in 0..100 {
            let point: Vec<Tensor> = shapes
                .iter()
                .map(|s| rand_tensor(&mut rng, s, lo, hi))
                .collect();
            let report = grad_check(f, &point, 1e-6, 1e-4).unwrap();
            assert!(
                report.passed(),
                "{name} trial {trial}: {report:?} at {point:?}"
            );
        }
    }
}

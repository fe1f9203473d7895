//! Builds a small graph by hand, backpropagates, and compares the result
//! with central differences.
//!
//! cargo run --example gradient_check

use ubant::autodiff::{grad_check, Graph, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut g = Graph::new();
    let x = g.param(Tensor::from_rows(&[vec![0.5, -1.0, 2.0], vec![1.5, 0.0, -0.5]]));
    let w = g.param(Tensor::from_rows(&[vec![0.2, -0.3], vec![0.1, 0.4], vec![-0.6, 0.2]]));
    let h = g.matmul(x, w)?;
    let h = g.tanh(h);
    let lp = g.log_softmax(h, 1)?;
    let loss = g.mean(lp);
    let loss = g.neg(loss);
    let grads = g.backward(loss)?;
    println!("loss  {:.6}", g.scalar(loss));
    println!("dL/dw {:?}", grads.wrt(w).data());

    let point = [g.value(x).clone(), g.value(w).clone()];
    let report = grad_check(
        |g, v| {
            let h = g.matmul(v[0], v[1])?;
            let h = g.tanh(h);
            let lp = g.log_softmax(h, 1)?;
            let m = g.mean(lp);
            Ok(g.neg(m))
        },
        &point,
        1e-6,
        1e-6,
    )?;
    println!(
        "{} coordinates, max relative error {:.2e}, passed {}",
        report.coordinates,
        report.max_rel_error,
        report.passed()
    );
    Ok(())
}

//! Value and logit gradient of each loss for one prediction vector.
//!
//!     cargo run --example loss_gradients

use spml::losses::{loss_an, loss_an_ls, loss_em, loss_role};

fn show(name: &str, loss: f64, grad: &[f64]) {
    let g: Vec<String> = grad.iter().map(|v| format!("{v:+.4}")).collect();
    println!("{name:<18} loss {loss:.6}  grad [{}]", g.join(", "));
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let f = [0.8, 0.3, 0.6];
    let observed = 0;

    let o = loss_an(&f, observed)?;
    show("AN", o.loss, &o.grad);
    let o = loss_an_ls(&f, observed, 0.1)?;
    show("AN-LS (ε=0.1)", o.loss, &o.grad);
    let o = loss_em(&f, observed, 0.1)?;
    show("EM (α=0.1)", o.loss, &o.grad);

    // ROLE also learns a per-image label estimate ỹ.
    let estimate = [0.5, 0.2, 0.7];
    let o = loss_role(&f, &estimate, observed, 2.0, 1.0)?;
    show("ROLE (k=2, λ=1)", o.loss, &o.grad_logits);
    show("  ∂/∂ estimator", o.loss, &o.grad_estimator_logits);
    Ok(())
}

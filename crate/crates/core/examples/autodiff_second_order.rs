//! Differentiating a gradient: d²/dx² of sum(x³) is 6x.
//!
//!     cargo run --release --example autodiff_second_order

use ssml::tensor::{grad, Graph, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = Graph::<f64>::new();
    let x = g.leaf(&Tensor::from_f64(&[-1.0, 0.5, 2.0], &[3])?);
    let y = x.powf(3.0)?.sum()?;

    let dy = grad(&y, &[&x], true)?.remove(0);
    println!("x        = {:?}", x.data());
    println!("dy/dx    = {:?}  (3x²)", dy.data());

    // sum the first derivative so the second pass is again scalar
    let d2y = grad(&dy.sum()?, &[&x], false)?.remove(0);
    println!("d²y/dx²  = {:?}  (6x)", d2y.data());
    Ok(())
}

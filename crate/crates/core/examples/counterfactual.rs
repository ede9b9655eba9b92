//! Abduction and exact counterfactuals on the Loan model.
//!
//! cargo run --release --example counterfactual

use causal_recourse::data::loan_label;
use causal_recourse::scm::{self, Intervention};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = scm::loan();
    let names = m.graph().names().to_vec();
    let s = m.sample(3, 11)?;
    for x in &s.x {
        let u_hat = m.abduct(x)?;
        let mut theta = vec![0.0; m.dim()];
        theta[3] = -2.0;
        theta[5] = 1.5;
        let cf = m.counterfactual_exact(x, &u_hat, &theta)?;
        println!("{:>10} {:>10} {:>10}", "node", "factual", "L-2, I+1.5");
        for (j, n) in names.iter().enumerate() {
            println!("{n:>10} {:>10.4} {:>10.4}", x[j], cf[j]);
        }
        println!("{:>10} {:>10.4} {:>10.4}", "P(Y)", loan_label(x), loan_label(&cf));
        let fixed = m.intervene(x, &u_hat, &[Intervention::Hard { node: 5, value: 5.0 }])?;
        println!("do(I = 5): S {:.4} -> {:.4}\n", x[6], fixed[6]);
    }
    Ok(())
}

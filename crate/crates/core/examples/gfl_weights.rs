//! Tabulates GFL weights over likelihood for several (eta, gamma) settings.
//!
//! `cargo run --example gfl_weights`

use dataset_equity::{gfl_weight, GflParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let settings = [(0.0, 1.0), (0.0, 5.0), (1.0, 5.0), (5.0, 2.0)];
    print!("likelihood");
    for (eta, gamma) in settings {
        print!("  eta={eta},g={gamma}");
    }
    println!();
    for step in 0..=10 {
        let p = step as f64 / 10.0;
        print!("{p:>10.1}");
        for (eta, gamma) in settings {
            print!("  {:>11.5}", gfl_weight(p, &GflParams::new(eta, gamma)?)?);
        }
        println!();
    }
    Ok(())
}

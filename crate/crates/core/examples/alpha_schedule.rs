//! How alpha moves from communication (0) to tacit reconstruction (1).
//!
//! `cargo run --example alpha_schedule`

use taco::taco::{AlphaSchedule, Phase};

fn main() {
    let t_max = 40_000;
    let linear = AlphaSchedule::linear(t_max);
    let leap = AlphaSchedule::leap();
    println!("{:>7} {:>8} {:>11} {:>10}", "step", "linear", "leap/train", "leap/eval");
    for t in [0, 1, 4_000, 10_000, 20_000, 39_999, 40_000, 50_000] {
        println!(
            "{t:>7} {:>8.5} {:>11} {:>10}",
            linear.alpha_at(t, Phase::Training),
            leap.alpha_at(t, Phase::Training),
            leap.alpha_at(t, Phase::Evaluation)
        );
    }
}

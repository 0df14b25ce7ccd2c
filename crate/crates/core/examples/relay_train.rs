//! Train TACO-QMIX on the relay map and watch the tacit success rate catch
//! up with the communicating one as alpha reaches 1.
//!
//! `cargo run --release --example relay_train -- [algo] [t_max]`

use taco::harness::cmd_train;

fn main() -> taco::Result<()> {
    let mut args = std::env::args().skip(1);
    let algo = args.next().unwrap_or_else(|| "taco_qmix".into());
    let t_max = args.next().unwrap_or_else(|| "40000".into());
    let pairs = vec![
        ("algo".to_string(), algo),
        ("env".to_string(), "relay".to_string()),
        ("t_max".to_string(), t_max),
    ];
    println!("{:>6} {:>6} {:>8} {:>8} {:>8}", "step", "alpha", "td", "success", "tacit");
    let art = cmd_train(&pairs, |r| {
        println!(
            "{:>6} {:>6.3} {:>8.4} {:>8.3} {:>8.3}",
            r.step,
            r.alpha,
            r.train.map_or(f32::NAN, |m| m.td_loss),
            r.eval_mixed.success_rate,
            r.eval_tacit.success_rate
        );
    })?;
    println!("run written to {}", art.output_dir.display());
    Ok(())
}

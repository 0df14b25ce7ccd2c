//! A small grid over algorithms and seeds, summarized per cell.
//!
//! `cargo run --release --example sweep`

use taco::harness::{cmd_sweep, SweepSpec};

fn main() -> taco::Result<()> {
    let spec = SweepSpec::parse(
        "t_max=4000\neval_interval=2000\neval_episodes=32\n\
         sweep.seeds=0,1\nsweep.axis.algo=qmix,qmix_attn\n",
    )?;
    let out = std::env::temp_dir().join("taco_sweep_example");
    let report = cmd_sweep(&spec, &out, 1)?;
    for cell in &report.cells {
        let med = cell.stats[0].map_or("failed".into(), |(m, lo, hi)| format!("{m:.3} [{lo:.3}, {hi:.3}]"));
        println!("{:?}: ok {} success median {med}", cell.assignment, cell.ok);
    }
    println!("summary: {}", report.summary_csv.display());
    Ok(())
}

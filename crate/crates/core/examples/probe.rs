//! How hard is each reconstruction target to read off an agent's own
//! hidden state? Trains a short run unless one is given.
//!
//! `cargo run --release --example probe -- [run_dir]`

use std::path::PathBuf;

use taco::harness::{cmd_probe_reconstruction, cmd_train, ProbeConfig, RunHandle};

fn main() -> taco::Result<()> {
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            let pairs = vec![
                ("algo".to_string(), "taco_qmix".to_string()),
                ("t_max".to_string(), "10000".to_string()),
                ("output_dir".to_string(), std::env::temp_dir().join("taco_probe_example").display().to_string()),
            ];
            cmd_train(&pairs, |_| {})?.output_dir
        }
    };
    let run = RunHandle::open(&dir, &[])?;
    for r in cmd_probe_reconstruction(&run, &ProbeConfig::default())? {
        println!(
            "{:>12}  dim {:>3}  held-out mse {:.5}  normalized {}",
            r.target.name(),
            r.dim,
            r.mse,
            r.normalized_mse.map_or("-".into(), |x| format!("{x:.3}"))
        );
    }
    Ok(())
}

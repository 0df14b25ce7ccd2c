//! Dump the communicated and reconstructed information of every agent step
//! to CSV, e.g. for a t-SNE plot.
//!
//! `cargo run --release --example export -- [run_dir]`

use std::path::PathBuf;

use taco::harness::{cmd_export_embeddings, cmd_train, RunHandle};

fn main() -> taco::Result<()> {
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            let pairs = vec![
                ("algo".to_string(), "taco_qmix".to_string()),
                ("t_max".to_string(), "3000".to_string()),
                ("output_dir".to_string(), std::env::temp_dir().join("taco_export_example").display().to_string()),
            ];
            cmd_train(&pairs, |_| {})?.output_dir
        }
    };
    let run = RunHandle::open(&dir, &[])?;
    let out = dir.join("embeddings.csv");
    let export = cmd_export_embeddings(&run, 20, None, &out)?;
    println!("{} rows of {} + {} values -> {}", export.rows, export.info_dim, export.info_dim, out.display());
    Ok(())
}

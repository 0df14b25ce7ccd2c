//! VDN on an additive 2x2 matrix game recovers the payoff table.
//!
//! `cargo run --release --example matrix_game_vdn`

use taco::config::resolve;
use taco::tensor::Tensor;
use taco::trainer::train;

fn main() -> taco::Result<()> {
    let dir = std::env::temp_dir().join("taco_matrix_example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let payoff = dir.join("additive.txt");
    std::fs::write(&payoff, "1 3\n2 4\n").expect("payoff file");

    let pairs: Vec<(String, String)> = [
        ("algo", "vdn".to_string()),
        ("env", format!("matrix:{}", payoff.display())),
        ("t_max", "20000".to_string()),
        ("eval_interval", "5000".to_string()),
        ("output_dir", dir.join("run").display().to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let art = train(&resolve(&pairs)?)?;

    let l = &art.learner;
    let mut states = l.agent.initial_states();
    let q = l.agent.act_step(&l.store, &[vec![1.0], vec![1.0]], &mut states, 0.0)?;
    let mut joint = Vec::new();
    for a in 0..2 {
        for b in 0..2 {
            joint.extend([q[0][a], q[1][b]]);
        }
    }
    let qt = l.mixer.eval(&l.store, &Tensor::new(vec![4, 2], joint)?, &Tensor::new(vec![4, 1], vec![1.0; 4])?)?;
    println!("payoff  [[1, 3], [2, 4]]");
    println!("learned [[{:.2}, {:.2}], [{:.2}, {:.2}]]", qt[0], qt[1], qt[2], qt[3]);
    Ok(())
}

//! Attention weights of three agents: each row sums to one and no agent
//! attends to itself.
//!
//! `cargo run --example attention`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taco::nn::{Attention, AttentionSpec};
use taco::tensor::{Graph, ParamStore, Tensor};

fn main() -> taco::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let spec = AttentionSpec {
        hidden_dim: 8,
        att_dim: 4,
        n_heads: 2,
        project_values: true,
    };
    let att = Attention::new(&mut store, "cam", spec, &mut rng)?;
    let n = 3;
    let h = Tensor::new(vec![n, 8], (0..n * 8).map(|_| rng.random_range(-1.0..1.0)).collect())?;

    for i in 0..n {
        let w = att.weights_for_agent(&store, &h, i)?;
        for head in 0..spec.n_heads {
            let row = w.row(head);
            let sum: f32 = row.iter().sum();
            println!("agent {i} head {head}: {row:.3?}  sum {sum:.6}");
        }
    }

    let mut g = Graph::new();
    let hv = g.constant(h);
    let v = att.forward(&mut g, &store, hv, n)?;
    println!("aggregate shape {:?}", g.shape(v));
    for i in 0..n {
        println!("v_{i} = {:.3?}", g.value(v).row(i));
    }
    Ok(())
}

//! Compare tape gradients of a small MLP with central differences.
//!
//! `cargo run --example gradcheck`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taco::nn::{Activation, Mlp, MlpSpec};
use taco::tensor::{Graph, ParamStore, Tensor};

fn loss(mlp: &Mlp, store: &ParamStore, x: &Tensor) -> f32 {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let y = mlp.forward(&mut g, store, xv).unwrap();
    let sq = g.square(y);
    let l = g.sum(sq);
    g.value(l).item()
}

fn main() -> taco::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let spec = MlpSpec {
        layer_sizes: vec![4, 6, 3],
        activation: Activation::Relu,
    };
    let mlp = Mlp::new(&mut store, "mlp", &spec, &mut rng)?;
    let x = Tensor::new(vec![2, 4], vec![0.3, -0.7, 1.1, 0.2, -0.4, 0.9, 0.05, -1.3])?;

    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let y = mlp.forward(&mut g, &store, xv)?;
    let sq = g.square(y);
    let l = g.sum(sq);
    store.zero_grad();
    g.backward(l, &mut store)?;

    // f32 differences are coarse; a step of 1e-2 keeps rounding noise small.
    let h = 1e-2f32;
    let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();
    for (k, name) in names.iter().enumerate() {
        let n = store.iter().nth(k).unwrap().value.data().len();
        let mut worst = 0.0f32;
        for j in 0..n {
            let orig = store.iter().nth(k).unwrap().value.data()[j];
            store.iter_mut().nth(k).unwrap().value.data_mut()[j] = orig + h;
            let up = loss(&mlp, &store, &x);
            store.iter_mut().nth(k).unwrap().value.data_mut()[j] = orig - h;
            let down = loss(&mlp, &store, &x);
            store.iter_mut().nth(k).unwrap().value.data_mut()[j] = orig;
            let fd = (up - down) / (2.0 * h);
            let tape = store.iter().nth(k).unwrap().grad.data()[j];
            worst = worst.max((fd - tape).abs() / fd.abs().max(tape.abs()).max(1e-2));
        }
        println!("{name:12} {n:3} entries  max rel err {worst:.2e}");
    }
    Ok(())
}

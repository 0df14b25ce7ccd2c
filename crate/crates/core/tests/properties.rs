//! Randomized properties of the small pure pieces.

use proptest::prelude::*;
use taco::agent::greedy_action;
use taco::harness::quantile;
use taco::taco::{td_targets, AlphaSchedule, Phase};
use taco::tensor::checkpoint::{decode, encode};
use taco::tensor::{CheckpointRecord, Tensor};

proptest! {
    #[test]
    fn linear_schedule_is_monotone_and_bounded(t_max in 1u64..1_000_000, a in 0u64..2_000_000, b in 0u64..2_000_000) {
        let s = AlphaSchedule::linear(t_max);
        let (lo, hi) = (a.min(b), a.max(b));
        let (x, y) = (s.alpha_at(lo, Phase::Training), s.alpha_at(hi, Phase::Training));
        prop_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
        prop_assert!(x <= y);
        prop_assert_eq!(s.alpha_at(t_max, Phase::Training), 1.0);
    }

    #[test]
    fn greedy_never_picks_a_masked_action(
        q in prop::collection::vec(-10.0f32..10.0, 1..8),
        mask in prop::collection::vec(any::<bool>(), 8),
    ) {
        let mut avail = mask[..q.len()].to_vec();
        avail[0] = true;
        let a = greedy_action(&q, &avail).unwrap();
        prop_assert!(avail[a]);
        for (k, &ok) in avail.iter().enumerate() {
            if ok {
                prop_assert!(q[k] <= q[a]);
            }
        }
    }

    #[test]
    fn terminal_steps_ignore_the_bootstrap(
        steps in prop::collection::vec((-5.0f32..5.0, any::<bool>(), -50.0f32..50.0), 1..20),
        gamma in 0.0f32..1.0,
    ) {
        let r: Vec<f32> = steps.iter().map(|s| s.0).collect();
        let d: Vec<bool> = steps.iter().map(|s| s.1).collect();
        let n: Vec<f32> = steps.iter().map(|s| s.2).collect();
        let y = td_targets(&r, &d, &n, gamma).unwrap();
        for k in 0..y.len() {
            let want = if d[k] { r[k] } else { r[k] + gamma * n[k] };
            prop_assert_eq!(y[k], want);
        }
    }

    #[test]
    fn quantiles_stay_inside_the_sample(v in prop::collection::vec(-1e3f64..1e3, 1..30), q in 0.0f64..=1.0) {
        let x = quantile(&v, q);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= x && x <= hi);
    }

    #[test]
    fn checkpoints_round_trip(
        tensors in prop::collection::vec((1usize..4, 1usize..5, any::<u32>()), 0..5),
    ) {
        let records: Vec<CheckpointRecord> = tensors
            .iter()
            .enumerate()
            .map(|(k, &(r, c, seed))| {
                let data = (0..r * c).map(|j| f32::from_bits(seed.wrapping_add(j as u32) & 0x3fff_ffff)).collect();
                CheckpointRecord {
                    name: format!("p{k}.w"),
                    tensor: Tensor::new(vec![r, c], data).unwrap(),
                }
            })
            .collect();
        prop_assert_eq!(decode(&encode(&records)).unwrap(), records);
    }
}

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slasched_core::nmac::gradcheck::{self, GRAD_TOL};
use slasched_core::nmac::{
    read_checkpoint, MlpParams, MultiAgentEnv, Nmac, OutputActivation, TrainConfig,
};
use slasched_core::{Error, Result};

#[test]
fn analytic_gradients_match_finite_differences() {
    for r in gradcheck::run_all(20, 7).unwrap() {
        assert!(r.passed && r.max_rel_error < GRAD_TOL, "{r:?}");
        assert_eq!(r.points, 20);
    }
}

#[test]
fn critic_descent_is_monotone_for_fifty_steps() {
    let (ok, losses) = gradcheck::check_critic_descent(50, 0.01, 3).unwrap();
    assert!(ok, "{losses:?}");
}

/// Forward pass written against the raw layer fields only.
fn naive_forward(net: &MlpParams, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for (k, layer) in net.layers.iter().enumerate() {
        let mut z = vec![0.0; layer.outputs];
        for o in 0..layer.outputs {
            let mut s = layer.bias[o];
            for i in 0..layer.inputs {
                s += layer.weights[o * layer.inputs + i] * a[i];
            }
            z[o] = s;
        }
        a = if k + 1 < net.layers.len() {
            z.into_iter()
                .map(|v| if v > 0.0 { v } else { 0.0 })
                .collect()
        } else {
            match net.output {
                OutputActivation::Sigmoid => {
                    z.into_iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect()
                }
                OutputActivation::Identity => z,
            }
        };
    }
    a
}

proptest! {
    #[test]
    fn forward_matches_naive_version(seed in 0u64..10_000, x in proptest::collection::vec(-3.0..3.0f64, 6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = MlpParams::new(&[6, 64, 64, 3], OutputActivation::Sigmoid, &mut rng);
        let fast = net.forward(&x).unwrap();
        let slow = naive_forward(&net, &x);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!(*a > 0.0 && *a < 1.0);
        }
        prop_assert_eq!(net.forward(&x).unwrap(), fast);
    }
}

/// Two agents, each rewarded by how close its own action is to 0.8.
struct Target {
    obs: Vec<Vec<f64>>,
    frames: usize,
}

impl MultiAgentEnv for Target {
    fn num_agents(&self) -> usize {
        2
    }
    fn observation_dim(&self) -> usize {
        3
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn episode_length(&self) -> usize {
        self.frames
    }
    fn reset(&mut self, episode: u64) -> Result<Vec<Vec<f64>>> {
        let e = (episode % 5) as f64 * 0.1;
        self.obs = vec![vec![e, 0.5, 1.0], vec![0.2, e, 0.0]];
        Ok(self.obs.clone())
    }
    fn step(&mut self, actions: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if actions.len() != 2 {
            return Err(Error::Shape("two agents".into()));
        }
        let r = actions.iter().map(|a| 1.0 - (a[0] - 0.8).abs()).collect();
        Ok((r, self.obs.clone()))
    }
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        exploration_episodes: 3,
        hidden_units: 16,
        seed: 9,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_episodes_leave_parameters_alone() {
    let mut nmac = Nmac::new(2, 3, 1, small_cfg()).unwrap();
    let before = nmac.agents.clone();
    let log = nmac
        .train(
            &mut Target {
                obs: vec![],
                frames: 5,
            },
            0,
        )
        .unwrap();
    assert!(log.episodes.is_empty());
    assert_eq!(nmac.agents, before);
}

#[test]
fn training_is_reproducible() {
    let run = || {
        let mut nmac = Nmac::new(2, 3, 1, small_cfg()).unwrap();
        let log = nmac
            .train(
                &mut Target {
                    obs: vec![],
                    frames: 10,
                },
                8,
            )
            .unwrap();
        (serde_json::to_string(&log).unwrap(), nmac.agents)
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
}

#[test]
fn training_moves_actions_toward_reward() {
    let mut nmac = Nmac::new(2, 3, 1, small_cfg()).unwrap();
    let mut env = Target {
        obs: vec![],
        frames: 20,
    };
    nmac.train(&mut env, 60).unwrap();
    let obs = env.reset(0).unwrap();
    for (i, o) in obs.iter().enumerate() {
        let a = nmac.act(i, o).unwrap()[0];
        assert!((a - 0.8).abs() < 0.25, "agent {i} acts {a}");
    }
}

#[test]
fn checkpoint_round_trip_and_version_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    let mut nmac = Nmac::new(2, 3, 1, small_cfg()).unwrap();
    nmac.train(
        &mut Target {
            obs: vec![],
            frames: 5,
        },
        4,
    )
    .unwrap();
    nmac.save(&path).unwrap();
    let back = Nmac::load(&path).unwrap();
    assert_eq!(back.agents, nmac.agents);
    assert_eq!(back.cfg, nmac.cfg);

    let mut raw: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    raw["format"] = "nmac-checkpoint/99".into();
    std::fs::write(&path, serde_json::to_vec(&raw).unwrap()).unwrap();
    assert!(matches!(read_checkpoint(&path), Err(Error::Version { .. })));
}

//! Learner update rules, target tracking, the encoder and checkpoints.

mod common;

use common::equivalence::{n1_equivalence, random_batch, V_DIM};
use microgrid_core::diffkit::{soft_update, ParamSet, Tensor};
use microgrid_core::encoder::{Encoder, EncoderShape, ForecastWindow};
use microgrid_core::grid::MicrogridConfig;
use microgrid_core::maddpg::learner::td_targets;
use microgrid_core::maddpg::{JointLearner, LearnerConfig, Maddpg};
use microgrid_core::rng::SeedStreams;
use rand::Rng;

fn two_agents(cfg: LearnerConfig, seed: u64) -> Maddpg {
    let mg = MicrogridConfig::default();
    Maddpg::new(cfg, mg.ess[..2].to_vec(), mg.dt(), V_DIM, &mut SeedStreams::new(seed).stream("init"))
}

#[test]
fn single_agent_maddpg_is_ddpg_bit_for_bit() {
    let eq = n1_equivalence(100, 11);
    assert!(eq.compared_scalars > 0);
    assert_eq!(eq.diverged_updates, 0);
}

#[test]
fn td_target_hand_example() {
    let q_next = Tensor::matrix(3, 1, vec![3.0, 4.0, -1.0]).unwrap();
    let y = td_targets(&[1.0, -2.0, 0.5], &q_next, &[false, true, false], 0.5, 2.0);
    // 2*1 + 0.5*3, terminal row drops the bootstrap, 2*0.5 + 0.5*(-1).
    assert_eq!(y.data(), &[3.5, -4.0, 0.5]);
}

#[test]
fn critic_regression_descends_on_a_frozen_batch() {
    let cfg = LearnerConfig { gamma: 0.0, lr_critic: 1e-3, ..Default::default() };
    let mut m = two_agents(cfg, 2);
    let batch = random_batch(&mut SeedStreams::new(2).stream("batch"), 64, 2);
    let losses: Vec<f64> = (0..100).map(|_| m.critic_update(0, &batch).unwrap()).collect();
    assert!(losses[99] < 0.5 * losses[0], "{} -> {}", losses[0], losses[99]);
    let rising = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rising < 10, "{rising} increases");
}

#[test]
fn actor_ascends_a_frozen_critic() {
    let cfg = LearnerConfig { lr_actor: 1e-3, ..Default::default() };
    let mut m = two_agents(cfg, 3);
    let batch = random_batch(&mut SeedStreams::new(3).stream("batch"), 64, 2);
    let first = m.actor_update(1, &batch).unwrap().0;
    for _ in 0..100 {
        m.actor_update(1, &batch).unwrap();
    }
    let last = m.actor_update(1, &batch).unwrap().0;
    assert!(last > first, "{first} -> {last}");
}

#[test]
fn target_error_shrinks_by_one_minus_tau() {
    let m = two_agents(LearnerConfig::default(), 4);
    let online = m.agents[0].critic.online.clone();
    let mut target = online.clone();
    let mut rng = SeedStreams::new(4).stream("perturb");
    common::randomize(&mut target, 1.0, &mut rng);
    let err = |t: &ParamSet| -> f64 {
        t.tensors().iter().zip(online.tensors()).map(|(a, b)| {
            a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
        }).sum::<f64>().sqrt()
    };
    let tau = 0.05;
    let mut prev = err(&target);
    for _ in 0..200 {
        soft_update(&mut target, &online, tau).unwrap();
        let e = err(&target);
        assert!((e / prev - (1.0 - tau)).abs() < 1e-9, "{}", e / prev);
        prev = e;
    }
}

fn random_window<R: Rng>(rng: &mut R, rows: usize, cols: usize, caps: &[f64]) -> ForecastWindow {
    let data = (0..rows).flat_map(|r| (0..cols).map(move |_| r)).map(|r| rng.random_range(0.0..=caps[r])).collect();
    ForecastWindow { rows, cols, data }
}

#[test]
fn encoder_output_is_nonnegative_and_order_sensitive() {
    let mg = MicrogridConfig::default();
    let caps: Vec<f64> = mg.pv.iter().map(|p| p.p_max).chain(mg.loads.iter().map(|l| l.p_max)).collect();
    let shape = EncoderShape::default();
    let mut rng = SeedStreams::new(6).stream("encoder");
    let mut changed = 0;
    for _ in 0..20 {
        let mut p = ParamSet::new("enc");
        let enc = Encoder::init(&mut p, shape, &caps, &mut rng);
        let w = random_window(&mut rng, caps.len(), shape.window, &caps);
        let v = enc.encode(&p, &w).unwrap();
        assert_eq!(v.len(), 16);
        assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert_eq!(v, enc.encode(&p, &w).unwrap());
        if enc.encode(&p, &w.reversed()).unwrap() != v {
            changed += 1;
        }
    }
    assert_eq!(changed, 20);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut m = two_agents(LearnerConfig::default(), 7);
    let mut rng = SeedStreams::new(7).stream("batch");
    for _ in 0..3 {
        m.update(&random_batch(&mut rng, 16, 2)).unwrap();
    }
    let mut saved = ParamSet::new("maddpg.checkpoint");
    m.export(&mut saved);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.params");
    saved.save(&path).unwrap();
    let loaded = ParamSet::load(&path).unwrap();
    assert_eq!(loaded, saved);
    let bits = |p: &ParamSet| -> Vec<u64> {
        p.tensors().iter().flat_map(|t| t.data().iter().map(|x| x.to_bits())).collect()
    };
    assert_eq!(bits(&loaded), bits(&saved));

    let mut fresh = two_agents(LearnerConfig::default(), 99);
    fresh.import(&loaded).unwrap();
    let next = random_batch(&mut rng, 16, 2);
    assert_eq!(fresh.act(&next.states).unwrap(), m.act(&next.states).unwrap());
    // Moments came along too, so the next update matches.
    let a = fresh.update(&next).unwrap();
    let b = m.update(&next).unwrap();
    assert_eq!(a, b);
}

//! Training loop persistence and resume, imitation, PPO steps and arena
//! statistics.

mod common;

use std::fs;
use std::path::Path;

use omar::arena::{bootstrap_mean_ci, run_arena, wilson_interval, Z95};
use omar::policy::{load_checkpoint, Policy, PolicyParameters};
use omar::rng;
use omar::rollout::{MiniBatch, TokenSample};
use omar::train::imitation::demonstrator;
use omar::train::ppo::ppo_update;
use omar::train::{imitation_update, train_loop, StopReason, TrainOutput};
use omar::trajectory::{read_jsonl, write_jsonl};

fn out(dir: &Path) -> TrainOutput {
    TrainOutput { dir: Some(dir.to_path_buf()), resume: None }
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let mut cfg = common::tiny("werewolf");
    cfg.train.trajectory_interval = 1;
    let full = tempfile::tempdir().unwrap();
    let whole = train_loop(&cfg, 8, &out(full.path())).unwrap();
    assert_eq!(whole.steps_done, 6);

    let resumed = tempfile::tempdir().unwrap();
    let ckpt = full.path().join("checkpoints/step_000002.json");
    let again = train_loop(&cfg, 8, &TrainOutput { dir: Some(resumed.path().to_path_buf()), resume: Some(ckpt) }).unwrap();
    assert_eq!(again.params, whole.params);
    for f in ["metrics.csv", "final_policy.json", "initial_policy.json", "checkpoints/step_000006.json"] {
        assert_eq!(fs::read(full.path().join(f)).unwrap(), fs::read(resumed.path().join(f)).unwrap(), "{f} differs");
    }
    // the resumed run records only the steps it played
    let a = fs::read_to_string(full.path().join("trajectories.jsonl")).unwrap();
    let b = fs::read_to_string(resumed.path().join("trajectories.jsonl")).unwrap();
    let per_step = cfg.train.episodes_per_batch;
    assert_eq!(a.lines().count(), 6 * per_step);
    assert_eq!(a.lines().skip(2 * per_step).collect::<Vec<_>>(), b.lines().collect::<Vec<_>>());
}

#[test]
fn outputs_round_trip() {
    let mut cfg = common::tiny("negotiation");
    cfg.train.trajectory_interval = 2;
    let dir = tempfile::tempdir().unwrap();
    let outcome = train_loop(&cfg, 3, &out(dir.path())).unwrap();

    let shape = Some((cfg.env.vocabulary().len(), cfg.policy.feature_dim, cfg.policy.embed_dim));
    assert_eq!(load_checkpoint(&dir.path().join("final_policy.json"), shape).unwrap(), outcome.params);
    assert_eq!(load_checkpoint(&dir.path().join("initial_policy.json"), shape).unwrap(), cfg.initial_params(3));

    let bytes = fs::read(dir.path().join("trajectories.jsonl")).unwrap();
    let records = read_jsonl(&bytes[..]).unwrap();
    assert_eq!(records.len(), 3 * cfg.train.episodes_per_batch);
    assert!(records.iter().all(|r| r.trajectories.iter().all(|t| t.has_advantages())));
    let mut again = Vec::new();
    write_jsonl(&mut again, &records).unwrap();
    assert_eq!(again, bytes);

    let saved = omar::config::Config::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(saved, cfg);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("final.json")).unwrap()).unwrap();
    assert_eq!(summary["steps_completed"], 6);
    assert!(summary["stop_reason"].is_null());
}

#[test]
fn filter_collapse_stops_training() {
    let mut cfg = common::tiny("negotiation");
    cfg.train.warm_start.enabled = false;
    cfg.train.steps = 40;
    // an untrained policy babbles, so demanding a perfect pass rate must stop
    cfg.train.early_stop.filter_fail_threshold = 1.0;
    let o = train_loop(&cfg, 1, &TrainOutput::default()).unwrap();
    assert_eq!(o.stop, Some(StopReason::FilterCollapse));
    // it stops at the first logged interval with any filtered turn
    let first = o.metrics.iter().position(|m| m.filter_pass_rate < 1.0).unwrap();
    assert_eq!(first + 1, o.metrics.len());
    assert_eq!(o.steps_done, o.metrics.len() * cfg.train.log_interval);
    assert!(o.steps_done < cfg.train.steps);
}

#[test]
fn warm_start_lowers_cross_entropy() {
    let cfg = common::tiny("werewolf");
    let o = train_loop(&cfg, 5, &TrainOutput::default()).unwrap();
    let ce = &o.warm_start_cross_entropy;
    assert_eq!(ce.len(), cfg.train.warm_start.steps);
    let head: f64 = ce[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = ce[ce.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(tail < head, "cross-entropy went from {head} to {tail}");
}

fn sample(p: &PolicyParameters, context: &[u32], token: u32, advantage: f64) -> TokenSample {
    let features = p.featurize(context, 0);
    let old = p.token_distribution(&features, 1.0).unwrap()[token as usize].ln();
    TokenSample { episode_id: 0, role_id: 0, features, token, old_log_prob: old, advantage, value_target: 0.0 }
}

#[test]
fn imitating_one_token_drives_its_probability_up() {
    let mut p = PolicyParameters::initialize(12, 64, 4, 6, 1, 0.05, &mut rng::stream(1, "init", &[]));
    let samples: Vec<TokenSample> = (0..8).map(|_| sample(&p, &[1, 5, 2], 7, 0.0)).collect();
    let before = p.token_distribution(&samples[0].features, 1.0).unwrap()[7];
    assert!((before - 1.0 / 12.0).abs() < 0.01);
    imitation_update(&mut p, &samples, 1.0, 1.0, 200, 0, &mut rng::stream(1, "shuffle", &[])).unwrap();
    let after = p.token_distribution(&samples[0].features, 1.0).unwrap()[7];
    assert!(after > 0.9, "{after}");
}

#[test]
fn one_ppo_step_follows_the_advantage_sign() {
    let p0 = PolicyParameters::initialize(10, 64, 3, 4, 2, 0.1, &mut rng::stream(2, "init", &[]));
    let settings = common::tiny("negotiation").train.ppo_settings(1.0);
    for (adv, up) in [(1.0, true), (-1.0, false)] {
        let mut p = p0.clone();
        let x = sample(&p, &[3, 3, 4], 6, adv);
        let batch = MiniBatch { samples: vec![x.clone()], trajectories: 1, turns: 1, passed_turns: 1 };
        let stats = ppo_update(&mut p, &[batch], &settings, 0.1, 1).unwrap();
        assert_eq!(stats.clipped, 0);
        let lp = p.token_distribution(&x.features, 1.0).unwrap()[6].ln();
        assert_eq!(lp > x.old_log_prob, up, "advantage {adv}: {} -> {lp}", x.old_log_prob);
    }
}

#[test]
fn wilson_interval_reference_values() {
    let close = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12;
    assert!(close(wilson_interval(7.0, 10, Z95), (0.39677814746114537, 0.8922087325936989)));
    assert!(close(wilson_interval(250.0, 500, Z95), (0.4563412653024843, 0.5436587346975157)));
    assert!(close(wilson_interval(0.0, 1, Z95), (0.0, 0.7934506856227626)));
    assert!(close(wilson_interval(1.0, 1, Z95), (0.20654931437723745, 1.0)));
    assert_eq!(wilson_interval(0.0, 0, Z95), (0.0, 1.0));
}

#[test]
fn bootstrap_of_a_constant_is_the_constant() {
    assert_eq!(bootstrap_mean_ci(&[0.25; 40], 500, 3), (0.25, 0.25));
    let (lo, hi) = bootstrap_mean_ci(&[0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0], 2000, 3);
    assert!(lo < 0.5 && 0.5 < hi && lo >= 0.0 && hi <= 1.0);
}

#[test]
fn arena_side_swap_is_balanced() {
    for env_id in ["negotiation", "werewolf"] {
        let mut cfg = common::tiny(env_id);
        cfg.arena.n_episodes = 10;
        let bot = demonstrator(&cfg.env);
        let initial = Policy::new(cfg.initial_params(0), cfg.policy.decode());
        let r = run_arena(&cfg.env, bot.as_ref(), &initial, &cfg.arena, &cfg.rollout_settings()).unwrap();
        assert_eq!(r.episodes.len(), 10);
        for side in [&r.a, &r.b] {
            assert_eq!(side.by_group.values().map(|g| g.0).collect::<Vec<_>>(), vec![5, 5], "{env_id}");
        }
        assert!((r.a.win_rate + r.b.win_rate - 1.0).abs() < 1e-12);
        assert!((r.win_rate_diff - (r.a.win_rate - r.b.win_rate)).abs() < 1e-12);
        let mean: f64 = r.episodes.iter().map(|e| e.a_reward - e.b_reward).sum::<f64>() / 10.0;
        assert!((r.reward_diff - mean).abs() < 1e-12);

        cfg.arena.n_episodes = 1;
        let one = run_arena(&cfg.env, bot.as_ref(), &initial, &cfg.arena, &cfg.rollout_settings()).unwrap();
        assert_eq!(one.episodes.len(), 1);
        assert_eq!(one.a.win_rate_ci, wilson_interval(one.a.wins, 1, Z95));
    }
}

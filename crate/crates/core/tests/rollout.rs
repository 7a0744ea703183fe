//! Scripted episodes through the rollout engine, with hand-worked outcomes.

mod common;

use omar::advantage::{annotate_trajectory, AdvantageConfig};
use omar::env::{EnvironmentSpec, NegotiationConfig, WerewolfConfig, WerewolfEnv, WerewolfRole};
use omar::policy::Policy;
use omar::rollout::{run_episode, run_episode_in, run_episodes, Episode, EpisodeKey, RolloutSettings, Seating};
use omar::trajectory::EndCondition;

use common::Scripted;

const KEY: EpisodeKey = EpisodeKey { seed: 1, step: 0, episode_id: 0 };

fn negotiate(actor: &Scripted) -> Episode {
    let spec = EnvironmentSpec::Negotiation(NegotiationConfig::default());
    run_episode(&spec, KEY, &Seating::SelfPlay(actor), &RolloutSettings::default()).unwrap()
}

#[test]
fn offer_then_accept_splits_evenly() {
    let actor = Scripted::new(&[((0, 0), &["OFFER_5", "END"]), ((1, 1), &["ACCEPT", "END"])], &["FILLER_1", "END"]);
    let ep = negotiate(&actor);
    let o = &ep.record.outcome;
    assert_eq!(o.end_condition, EndCondition::Consensus);
    assert_eq!(o.agreed_price, Some(5));
    assert_eq!(o.turns_played, 2);
    // 5/10 + 0.2 for both sides
    assert_eq!(o.per_role_rewards.values().copied().collect::<Vec<_>>(), vec![0.7, 0.7]);
    for t in &ep.record.trajectories {
        assert_eq!(t.turns.len(), 2);
        assert_eq!(t.episode_reward, 0.7);
    }
}

#[test]
fn seller_accepting_buyer_offer() {
    let actor = Scripted::new(&[((1, 0), &["OFFER_3", "END"]), ((0, 1), &["ACCEPT", "END"])], &["FILLER_1", "END"]);
    let o = negotiate(&actor).record.outcome;
    assert_eq!(o.agreed_price, Some(3));
    let r: Vec<f64> = o.per_role_rewards.values().copied().collect();
    assert!((r[0] - 0.5).abs() < 1e-12 && (r[1] - 0.9).abs() < 1e-12, "{r:?}");
}

#[test]
fn filler_only_runs_to_the_turn_limit() {
    let actor = Scripted::new(&[], &["FILLER_1", "FILLER_2", "END"]);
    let ep = negotiate(&actor);
    assert_eq!(ep.record.outcome.end_condition, EndCondition::TurnLimit);
    assert_eq!(ep.record.outcome.turns_played, 5);
    assert!(ep.record.outcome.per_role_rewards.values().all(|&r| r == 0.0));
    assert_eq!(ep.record.history.len(), 10);
    assert!(ep.record.trajectories.iter().all(|t| t.turns.len() == 5));
}

#[test]
fn leaving_ends_without_agreement() {
    let actor = Scripted::new(&[((0, 0), &["OFFER_9", "END"]), ((1, 1), &["LEAVE", "END"])], &["FILLER_3", "END"]);
    let o = negotiate(&actor).record.outcome;
    assert_eq!(o.end_condition, EndCondition::Abstention);
    assert_eq!(o.turns_played, 2);
    assert!(o.per_role_rewards.values().all(|&r| r == 0.0));
}

/// Wolves 0 and 1, seer 2, villagers 3..=5.
fn six() -> Vec<WerewolfRole> {
    use WerewolfRole::*;
    vec![Werewolf, Werewolf, Seer, Villager, Villager, Villager]
}

/// Night 1 kills P3, the first vote removes P0, night 2 kills P4 and the
/// second vote removes P1: the villagers win after six turns.
fn scripted_werewolf() -> Scripted {
    Scripted::new(
        &[
            ((0, 0), &["KILL_3", "END"]),
            ((1, 0), &["KILL_3", "END"]),
            ((2, 0), &["INSPECT_0", "END"]),
            ((2, 1), &["REPORT_WOLF_0", "END"]),
            ((0, 2), &["VOTE_2", "END"]),
            ((1, 2), &["VOTE_2", "END"]),
            ((2, 2), &["VOTE_0", "END"]),
            ((4, 2), &["VOTE_0", "END"]),
            ((5, 2), &["VOTE_0", "END"]),
            ((1, 3), &["KILL_4", "END"]),
            ((1, 5), &["VOTE_2", "END"]),
            ((2, 5), &["VOTE_1", "END"]),
            ((5, 5), &["VOTE_1", "END"]),
        ],
        &["PASS", "END"],
    )
}

fn werewolf_episode() -> Episode {
    let env = WerewolfEnv::with_roles(WerewolfConfig::default(), six()).unwrap();
    run_episode_in(Box::new(env), 0, KEY, &Seating::SelfPlay(&scripted_werewolf()), &RolloutSettings::default()).unwrap()
}

#[test]
fn scripted_werewolf_game() {
    let ep = werewolf_episode();
    let o = &ep.record.outcome;
    assert_eq!(o.end_condition, EndCondition::WinLoss);
    assert_eq!(o.winner_team.as_deref(), Some("villager"));
    assert_eq!(o.turns_played, 6);
    let rewards: Vec<f64> = o.per_role_rewards.values().copied().collect();
    assert_eq!(rewards, vec![0.0, 0.0, 1.0, 0.75, 0.75, 1.0]);
    assert_eq!(ep.record.turn_labels, ["night", "day_discussion", "day_vote", "night", "day_discussion", "day_vote"]);
}

#[test]
fn eliminated_players_stop_speaking() {
    let ep = werewolf_episode();
    // P0 voted out on turn 2, P3 killed on turn 0, P4 killed on turn 3
    let counts: Vec<usize> = ep.record.trajectories.iter().map(|t| t.turns.len()).collect();
    assert_eq!(counts, vec![3, 6, 6, 1, 4, 6]);
    let per_turn: Vec<usize> = (0..6).map(|t| ep.record.history.iter().filter(|u| u.turn_index == t).count()).collect();
    assert_eq!(per_turn, vec![6, 5, 5, 4, 3, 3]);
    // every trajectory still annotates: one turn advantage per turn spoken
    for t in &ep.record.trajectories {
        let mut t = t.clone();
        annotate_trajectory(&mut t, &AdvantageConfig::default()).unwrap();
        assert_eq!(t.turn_advantages.len(), t.turns.len());
    }
}

#[test]
fn night_talk_is_hidden_from_the_village() {
    let ep = werewolf_episode();
    let vocab = EnvironmentSpec::Werewolf(WerewolfConfig::default()).vocabulary();
    let kill = vocab.expect_id("KILL_3");
    // P5's turn-1 context must not contain the wolves' night kill, P1's must
    let ctx = |role: usize, k: usize| ep.contexts[role][k].clone();
    assert!(!ctx(5, 1).contains(&kill));
    assert!(ctx(1, 1).contains(&kill));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    for spec in [EnvironmentSpec::Negotiation(NegotiationConfig::default()), EnvironmentSpec::Werewolf(WerewolfConfig::default())] {
        let cfg = omar::config::Config::for_env(spec);
        let policy = Policy::new(cfg.initial_params(4), cfg.policy.decode());
        let play = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let (eps, aborted) = pool.install(|| {
                run_episodes(&cfg.env, 9, 3, 100, 12, &Seating::SelfPlay(&policy), &cfg.rollout_settings())
            });
            assert!(aborted.is_empty());
            eps.into_iter().map(|e| serde_json::to_string(&e.record).unwrap()).collect::<Vec<_>>()
        };
        let one = play(1);
        assert_eq!(one.len(), 12);
        assert_eq!(one, play(4));
    }
}

//! Plain-text transcripts of recorded episodes. The layout is stable so it
//! can be compared against golden files.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trajectory::{read_jsonl, EpisodeRecord};

fn fmt_list(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", items.join(", "))
}

pub fn render_episode(rec: &EpisodeRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "episode {} ({}, seed {})", rec.episode_id, rec.env_id, rec.seed);
    for r in &rec.roles {
        let team = r.team.as_deref().unwrap_or("-");
        let _ = writeln!(s, "  role P{} team {}", r.role_id, team);
    }
    let mut turn_of_entry = std::collections::BTreeMap::new();
    for traj in &rec.trajectories {
        for (k, t) in traj.turns.iter().enumerate() {
            turn_of_entry.insert((t.turn_index, traj.role_id), (traj, k));
        }
    }
    let mut current = None;
    for u in &rec.history {
        if current != Some(u.turn_index) {
            current = Some(u.turn_index);
            match rec.turn_labels.get(u.turn_index).filter(|l| !l.is_empty()) {
                Some(label) => {
                    let _ = writeln!(s, "turn {} [{}]", u.turn_index, label);
                }
                None => {
                    let _ = writeln!(s, "turn {}", u.turn_index);
                }
            }
        }
        let _ = write!(s, "  P{}: {}", u.role_id, u.symbols.join(" "));
        if u.truncated {
            s.push_str(" (truncated)");
        }
        if let Some((traj, k)) = turn_of_entry.get(&(u.turn_index, u.role_id)) {
            let entry = &traj.turns[*k];
            if !entry.filter_passed {
                let _ = write!(s, "  FILTERED({})", entry.filter_reasons.join(","));
            }
            s.push('\n');
            if traj.has_advantages() {
                let _ = writeln!(
                    s,
                    "      turn advantage {:.6}  token advantages {}",
                    traj.turn_advantages[*k],
                    fmt_list(&traj.token_advantages[*k])
                );
            }
        } else {
            s.push('\n');
        }
    }
    let o = &rec.outcome;
    let _ = write!(s, "outcome: {} after {} turns", o.end_condition.as_str(), o.turns_played);
    if let Some(w) = &o.winner_team {
        let _ = write!(s, ", winner {w}");
    }
    if let Some(p) = o.agreed_price {
        let _ = write!(s, ", price {p}");
    }
    s.push('\n');
    let rewards: Vec<String> = o.per_role_rewards.iter().map(|(r, x)| format!("P{r}={x:.6}")).collect();
    let _ = writeln!(s, "rewards: {}", rewards.join(" "));
    s
}

/// Transcript of one episode of a trajectory file.
pub fn replay_file(path: &Path, episode_id: u64) -> Result<String> {
    let f = File::open(path).map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    let records = read_jsonl(BufReader::new(f))?;
    if records.is_empty() {
        return Err(Error::InvalidInput(format!("{} contains no episodes", path.display())));
    }
    records
        .iter()
        .find(|r| r.episode_id == episode_id)
        .map(render_episode)
        .ok_or(Error::EpisodeNotFound(episode_id))
}

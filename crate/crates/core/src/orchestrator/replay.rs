// SPDX-License-Identifier: Apache-2.0
//! Episode replay buffer and the JSON-lines transition log.

use super::ppo::Transition;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

pub type Episode = Vec<Transition>;

/// Bounded FIFO of completed episodes, safe to append from many threads.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: Mutex<VecDeque<Episode>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), episodes: Mutex::new(VecDeque::new()) }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, VecDeque<Episode>> {
        self.episodes.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Appends an episode, evicting the oldest when full. Empty episodes are
    /// ignored.
    pub fn push(&self, episode: Episode) {
        if episode.is_empty() {
            return;
        }
        let mut q = self.lock();
        if q.len() == self.capacity {
            q.pop_front();
        }
        q.push_back(episode);
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All transitions in episode order.
    pub fn transitions(&self) -> Vec<Transition> {
        self.lock().iter().flatten().cloned().collect()
    }

    pub fn drain(&self) -> Vec<Episode> {
        self.lock().drain(..).collect()
    }

    /// `n` episodes drawn with replacement, seeded.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Episode> {
        let q = self.lock();
        let all: Vec<&Episode> = q.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).filter_map(|_| all.choose(&mut rng).map(|e| (*e).clone())).collect()
    }
}

/// Appends one JSON object per transition.
pub fn write_transitions(path: &Path, transitions: &[Transition]) -> std::io::Result<()> {
    let f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = BufWriter::new(f);
    for t in transitions {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_transitions(path: &Path) -> std::io::Result<Vec<Transition>> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::action::OrchestrationAction;
    use crate::orchestrator::reward::RewardBreakdown;

    fn t(r: f64, done: bool) -> Transition {
        Transition {
            state: vec![0.5, 0.25],
            action: OrchestrationAction::new(1, 2, 0.1, 0.2, 0.3, 0.4).unwrap(),
            pre_sigmoid: [0.0, -1.0, 0.5, 2.0],
            reward: RewardBreakdown { term: r, eff: -0.5, qual: 0.0, prog: 5.0, total: r + 4.5 },
            next_state: vec![0.0, 1.0],
            done,
            tokens: 0,
        }
    }

    #[test]
    fn capacity_and_concurrency() {
        let b = ReplayBuffer::new(50);
        std::thread::scope(|s| {
            for i in 0..8 {
                let b = &b;
                s.spawn(move || {
                    for j in 0..10 {
                        b.push(vec![t(f64::from(i * 10 + j), true)]);
                    }
                });
            }
        });
        assert_eq!(b.len(), 50);
        assert_eq!(b.sample(5, 1), b.sample(5, 1));
        b.push(Vec::new());
        assert_eq!(b.drain().len(), 50);
        assert!(b.is_empty());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        write_transitions(&p, &[t(1.0, false), t(2.0, true)]).unwrap();
        write_transitions(&p, &[t(3.0, true)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 3);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["state", "action", "reward", "next_state", "done"] {
            assert!(first.get(key).is_some(), "{key}");
        }
        assert_eq!(read_transitions(&p).unwrap(), vec![t(1.0, false), t(2.0, true), t(3.0, true)]);
    }
}

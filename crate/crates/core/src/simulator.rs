//! Synthetic expert and inexpert workers.
//!
//! A task feeds pieces one after another until seven are valid or twelve
//! were attempted. Each piece waits `inter_piece_gap` after the previous
//! one left the belt, then takes `output_delay` on the line. Task counters
//! are drawn per task from the profile's rates.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::model::{
    round_millis, ExpertiseLabel, PieceEvent, PieceId, SessionId, SessionRecord, WorkerId, PROTOCOL_MAX_ATTEMPTS,
    PROTOCOL_MAX_VALID,
};
use crate::rng::{self, StreamRng};
use crate::store::{Store, StoreError};

pub const MIN_DELAY: f64 = 1.0;
/// 2023-03-06 00:00:00 UTC, a Monday.
pub const DEFAULT_EPOCH: f64 = 1_678_060_800.0;
const SHIFT_START: f64 = 8.0 * 3600.0;
const SESSION_SPACING: f64 = 45.0 * 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub level: ExpertiseLabel,
    pub mean_output_delay: f64,
    /// Piece-to-piece spread of the output delay.
    pub delay_jitter: f64,
    /// Task-to-task spread of the mean output delay.
    pub pace_jitter: f64,
    pub invalid_rate: f64,
    /// Share of tray pickups routed through the buffer.
    pub buffer_propensity: f64,
    /// Buffer slots a worker keeps stocked; stocked pieces left over at the
    /// end of a task count as collected from the tray and taken to the buffer.
    pub buffer_slots: u32,
    pub incidence_rate: f64,
    /// Probability that the gap before a piece includes a material reload.
    pub reload_rate: f64,
    /// Mean pause added by one reload.
    pub reload_pause: f64,
    /// Probability that an incidence forces an assistant reboot.
    pub assistant_reboot_rate: f64,
    pub inter_piece_gap: f64,
    pub gap_jitter: f64,
}

pub fn default_profile(level: ExpertiseLabel) -> BehaviorProfile {
    match level {
        ExpertiseLabel::Expert => BehaviorProfile {
            level,
            mean_output_delay: 25.0,
            delay_jitter: 6.0,
            pace_jitter: 2.0,
            invalid_rate: 0.15,
            buffer_propensity: 0.8,
            buffer_slots: 3,
            incidence_rate: 0.4,
            reload_rate: 0.15,
            reload_pause: 45.0,
            assistant_reboot_rate: 0.3,
            inter_piece_gap: 15.0,
            gap_jitter: 10.0,
        },
        ExpertiseLabel::Inexpert => BehaviorProfile {
            level,
            mean_output_delay: 40.0,
            delay_jitter: 12.0,
            pace_jitter: 3.0,
            invalid_rate: 0.35,
            buffer_propensity: 0.2,
            buffer_slots: 3,
            incidence_rate: 0.8,
            reload_rate: 0.15,
            reload_pause: 45.0,
            assistant_reboot_rate: 0.5,
            inter_piece_gap: 15.0,
            gap_jitter: 10.0,
        },
    }
}

impl BehaviorProfile {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.invalid_rate)
            && unit(self.buffer_propensity)
            && unit(self.assistant_reboot_rate)
            && unit(self.reload_rate))
        {
            return Err("rates must lie in [0, 1]".into());
        }
        let nonneg = [
            self.mean_output_delay,
            self.delay_jitter,
            self.pace_jitter,
            self.incidence_rate,
            self.reload_pause,
            self.inter_piece_gap,
            self.gap_jitter,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err("times and rates must be finite and non-negative".into());
        }
        Ok(())
    }
}

/// Normal draw truncated below at `min` by rejection, clamped after 64 tries.
fn truncated_normal(r: &mut StreamRng, mean: f64, sd: f64, min: f64) -> f64 {
    if sd <= 0.0 {
        return mean.max(min);
    }
    let n = Normal::new(mean, sd).expect("finite parameters");
    for _ in 0..64 {
        let v = n.sample(r);
        if v >= min {
            return v;
        }
    }
    min
}

fn poisson(r: &mut StreamRng, rate: f64) -> u32 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(r) as u32
}

fn binomial(r: &mut StreamRng, n: u32, p: f64) -> u32 {
    Binomial::new(u64::from(n), p.clamp(0.0, 1.0)).expect("valid binomial").sample(r) as u32
}

/// One protocol-conforming task.
pub fn simulate_session(
    profile: &BehaviorProfile,
    session_id: &SessionId,
    worker_id: &WorkerId,
    start_time: f64,
    seed: u64,
) -> SessionRecord {
    let mut r = rng::stream(seed, "session");
    let mut pieces = Vec::new();
    let mut clock = start_time;
    let mut valid = 0;
    let mut reloads = 0;
    let pace = truncated_normal(&mut r, profile.mean_output_delay, profile.pace_jitter, MIN_DELAY);
    while valid < PROTOCOL_MAX_VALID && pieces.len() < PROTOCOL_MAX_ATTEMPTS {
        let gap = if pieces.is_empty() {
            0.0
        } else {
            let mut g = truncated_normal(&mut r, profile.inter_piece_gap, profile.gap_jitter, 0.5);
            if r.random_bool(profile.reload_rate) {
                reloads += 1;
                g += truncated_normal(&mut r, profile.reload_pause, profile.reload_pause / 3.0, 0.0);
            }
            round_millis(g)
        };
        clock = round_millis(clock + gap);
        let delay = round_millis(truncated_normal(&mut r, pace, profile.delay_jitter, MIN_DELAY));
        let ok = !r.random_bool(profile.invalid_rate.clamp(0.0, 1.0));
        valid += usize::from(ok);
        pieces.push(PieceEvent {
            piece_id: PieceId::new(format!("{}", pieces.len() + 1)),
            session_id: session_id.clone(),
            worker_id: worker_id.clone(),
            input_instant: clock,
            output_delay: delay,
            time_between_pieces: gap,
            valid: ok,
        });
        clock += delay;
    }

    let n = pieces.len() as u32;
    let valid_instants: Vec<f64> = pieces.iter().filter(|p| p.valid).map(|p| p.input_instant).collect();
    let leftover = binomial(&mut r, profile.buffer_slots, profile.buffer_propensity);
    let n_from_tray = n + leftover;
    let n_to_buffer = leftover + binomial(&mut r, n, profile.buffer_propensity);
    let n_incidences = poisson(&mut r, profile.incidence_rate);
    let n_assistant_reboots = binomial(&mut r, n_incidences, profile.assistant_reboot_rate);
    let last = pieces.last().expect("at least one piece");
    let total_time = round_millis(last.input_instant + last.output_delay - start_time);
    SessionRecord {
        session_id: session_id.clone(),
        worker_id: worker_id.clone(),
        n_incidences,
        n_invalid: n - valid as u32,
        n_valid: valid as u32,
        n_direct_placed: n_from_tray - n_to_buffer,
        n_from_tray,
        n_to_buffer,
        n_reloads: reloads,
        n_assistant_reboots,
        piece_types: pieces.iter().map(|p| p.valid).collect(),
        time_between_pieces: pieces.iter().map(|p| p.time_between_pieces).collect(),
        time_between_valid: valid_instants.windows(2).map(|w| round_millis(w[1] - w[0])).collect(),
        total_time,
        label: Some(profile.level),
        pieces,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_expert_workers: usize,
    pub n_inexpert_workers: usize,
    pub days: usize,
    pub expert_sessions_per_day: usize,
    pub inexpert_sessions_per_day: usize,
    pub expert_profile: BehaviorProfile,
    pub inexpert_profile: BehaviorProfile,
    /// Midnight (UTC) of the first day.
    pub epoch: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_expert_workers: 3,
            n_inexpert_workers: 2,
            days: 5,
            expert_sessions_per_day: 4,
            inexpert_sessions_per_day: 2,
            expert_profile: default_profile(ExpertiseLabel::Expert),
            inexpert_profile: default_profile(ExpertiseLabel::Inexpert),
            epoch: DEFAULT_EPOCH,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Worker {
    pub worker_id: WorkerId,
    pub profile: BehaviorProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub workers: Vec<Worker>,
    pub sessions: Vec<SessionRecord>,
}

impl Corpus {
    pub fn pieces(&self) -> Vec<PieceEvent> {
        self.sessions.iter().flat_map(|s| s.pieces.iter().cloned()).collect()
    }

    pub fn piece_count(&self) -> usize {
        self.sessions.iter().map(|s| s.pieces.len()).sum()
    }

    /// Appends every task and its pieces.
    pub fn populate(&self, store: &mut Store) -> Result<(), StoreError> {
        for s in &self.sessions {
            store.append_session(s.clone())?;
            for p in &s.pieces {
                store.append_piece(p.clone())?;
            }
        }
        Ok(())
    }
}

/// Deals each level's daily tasks round-robin over its workers, starting one
/// worker later every day, so per-worker totals stay balanced.
pub fn generate_corpus(config: &CorpusConfig) -> Corpus {
    let mut workers = Vec::new();
    for (profile, count, prefix) in [
        (&config.expert_profile, config.n_expert_workers, "e"),
        (&config.inexpert_profile, config.n_inexpert_workers, "i"),
    ] {
        for k in 0..count {
            workers.push(Worker { worker_id: WorkerId::new(format!("{prefix}{}", k + 1)), profile: profile.clone() });
        }
    }
    let experts: Vec<usize> = (0..config.n_expert_workers).collect();
    let inexperts: Vec<usize> = (config.n_expert_workers..workers.len()).collect();

    let mut sessions = Vec::new();
    for day in 0..config.days {
        let mut slots: Vec<usize> = Vec::new();
        for (group, per_day) in
            [(&experts, config.expert_sessions_per_day), (&inexperts, config.inexpert_sessions_per_day)]
        {
            if group.is_empty() {
                continue;
            }
            slots.extend((0..per_day).map(|j| group[(day + j) % group.len()]));
        }
        // Every worker's tasks of the day are spaced apart in time.
        let mut seen = vec![0usize; workers.len()];
        for w in slots {
            let slot = seen[w];
            seen[w] += 1;
            let start = config.epoch + day as f64 * 86_400.0 + SHIFT_START + slot as f64 * SESSION_SPACING;
            let id = SessionId::new(format!("t{:03}", sessions.len() + 1));
            let seed = rng::derive_seed(config.seed, &format!("sim/{id}"));
            sessions.push(simulate_session(&workers[w].profile, &id, &workers[w].worker_id, start, seed));
        }
    }
    sessions.sort_by(|a, b| {
        a.pieces[0]
            .input_instant
            .total_cmp(&b.pieces[0].input_instant)
            .then(a.session_id.as_str().cmp(b.session_id.as_str()))
    });
    Corpus { workers, sessions }
}

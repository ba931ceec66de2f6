//! Slow, obviously-correct reference models. Each function re-derives its
//! answer from definitions using only the public data of the engine types,
//! never the engine's own helpers.

use std::collections::BTreeSet;

use puffer_core::rooms::{CrowdLevel, NoiseLevel, RoomFilter, RoomMeta};
use puffer_core::{Boundary, BubbleConfig, Constants, PlayerId, PlayerPair, Vec3, WorldState};

fn dist(a: Vec3, b: Vec3) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
}

fn radius_against(
    owner: &BubbleConfig,
    kind: Boundary,
    other: PlayerId,
    c: &Constants,
) -> Option<f64> {
    if owner.enabled && owner.boundary == kind && !owner.exempt.contains(&other) {
        Some(owner.radius_al * c.arm_length_m)
    } else {
        None
    }
}

/// Pairs whose hard constraint is violated by more than `eps`, as
/// `(pair, distance, required)`.
pub fn separation_violations(world: &WorldState, eps: f64) -> Vec<(PlayerPair, f64, f64)> {
    let c = &world.constants;
    let ids: Vec<PlayerId> = world.players.keys().copied().collect();
    let mut out = Vec::new();
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            let (pa, pb) = (&world.players[&a], &world.players[&b]);
            let req = [
                radius_against(&pa.bubble, Boundary::Hard, b, c),
                radius_against(&pb.bubble, Boundary::Hard, a, c),
            ]
            .into_iter()
            .flatten()
            .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
            if let Some(req) = req {
                let d = dist(pa.pose.position, pb.pose.position);
                if d < req - eps {
                    out.push((PlayerPair::new(a, b), d, req));
                }
            }
        }
    }
    out
}

/// All-pairs hidden set for the current positions, given the hidden set of
/// the previous step (hysteresis).
pub fn hidden_pairs(world: &WorldState, prev: &BTreeSet<PlayerPair>) -> BTreeSet<PlayerPair> {
    let c = &world.constants;
    let ids: Vec<PlayerId> = world.players.keys().copied().collect();
    let mut out = BTreeSet::new();
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            let (pa, pb) = (&world.players[&a], &world.players[&b]);
            let d = dist(pa.pose.position, pb.pose.position);
            let pair = PlayerPair::new(a, b);
            let was = prev.contains(&pair);
            let radii = [
                radius_against(&pa.bubble, Boundary::Soft, b, c),
                radius_against(&pb.bubble, Boundary::Soft, a, c),
            ];
            let hidden = radii.into_iter().flatten().any(|r| {
                if was {
                    d <= c.soft_exit_factor * r
                } else {
                    d < r
                }
            });
            if hidden {
                out.insert(pair);
            }
        }
    }
    out
}

/// Checks one resolved hard-boundary move by sampling its segment.
///
/// Every sampled point between `start` and `resolved` must satisfy all
/// constraints against `obstacles` (up to `eps`); when the mover stopped
/// short of `target`, a point slightly past `resolved` must violate one.
pub fn check_clamped_move(
    start: Vec3,
    target: Vec3,
    resolved: Vec3,
    obstacles: &[(Vec3, f64)],
    eps: f64,
) -> Result<(), String> {
    let feasible = |p: Vec3, slack: f64| obstacles.iter().all(|(o, s)| dist(p, *o) >= s - slack);
    let start_ok = feasible(start, eps);
    let full = dist(start, target);
    let travelled = dist(start, resolved);
    if full > 0.0 && travelled > full + 1e-9 {
        return Err(format!("overshoot: travelled {travelled} of {full}"));
    }
    if start_ok {
        const STEPS: usize = 64;
        for k in 0..=STEPS {
            let t = k as f64 / STEPS as f64;
            let p = start + (resolved - start) * t;
            if !feasible(p, eps) {
                return Err(format!("infeasible point at t={t}: {p:?}"));
            }
        }
        if travelled + 1e-9 < full {
            let dir = (target - start) * (1.0 / full);
            let past = resolved + dir * 1e-6;
            if feasible(past, -1e-12) {
                return Err("stopped although the path ahead was clear".into());
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateOracleDecision {
    Delivered { cooldown_started: Option<u64> },
    CoolingDown { until: u64 },
}

/// Sliding-window limiter replayed from the complete, never-pruned history
/// of accepted sends.
pub fn rate_limit_oracle(
    attempts: &[u64],
    limit: u32,
    window: u64,
    cooldown: u64,
) -> Vec<RateOracleDecision> {
    let mut history: Vec<u64> = Vec::new();
    let mut cooling: Option<u64> = None;
    let mut out = Vec::with_capacity(attempts.len());
    for &now in attempts {
        if let Some(until) = cooling {
            if now < until {
                out.push(RateOracleDecision::CoolingDown { until });
                continue;
            }
        }
        history.push(now);
        let in_window = history.iter().filter(|&&t| t + window > now).count();
        if in_window > limit as usize {
            cooling = Some(now + cooldown);
            out.push(RateOracleDecision::Delivered {
                cooldown_started: Some(now + cooldown),
            });
        } else {
            out.push(RateOracleDecision::Delivered {
                cooldown_started: None,
            });
        }
    }
    out
}

pub fn crowd_by_definition(count: u32, capacity: u32) -> CrowdLevel {
    // occupancy compared against thirds by cross-multiplication in u128
    let (n, c) = (count as u128, capacity as u128);
    if n * 3 < c {
        CrowdLevel::Uncrowded
    } else if n * 3 < c * 2 {
        CrowdLevel::Medium
    } else {
        CrowdLevel::Crowded
    }
}

pub fn noise_by_definition(unmuted: u32, c: &Constants) -> NoiseLevel {
    match unmuted {
        n if n <= c.noise_quiet_max => NoiseLevel::Quiet,
        n if n <= c.noise_medium_max => NoiseLevel::Medium,
        _ => NoiseLevel::Loud,
    }
}

/// Linear predicate scan over the directory listing, with levels recomputed
/// from raw counts.
pub fn filter_scan(rooms: &[RoomMeta], filter: &RoomFilter, c: &Constants) -> Vec<RoomMeta> {
    let mut keep: Vec<RoomMeta> = Vec::new();
    for r in rooms {
        let crowd_ok = !filter.uncrowded_only
            || crowd_by_definition(r.player_count, r.capacity) == CrowdLevel::Uncrowded;
        let noise_ok =
            !filter.quiet_only || noise_by_definition(r.unmuted_count, c) == NoiseLevel::Quiet;
        if crowd_ok && noise_ok {
            keep.push(r.clone());
        }
    }
    // selection sort: busiest first, then room id
    let mut out = Vec::with_capacity(keep.len());
    while !keep.is_empty() {
        let mut best = 0;
        for i in 1..keep.len() {
            let (a, b) = (&keep[i], &keep[best]);
            if a.player_count > b.player_count
                || (a.player_count == b.player_count && a.room_id < b.room_id)
            {
                best = i;
            }
        }
        out.push(keep.remove(best));
    }
    out
}

/// Number of contiguous runs of `true`.
pub fn count_runs(inside: impl IntoIterator<Item = bool>) -> usize {
    let mut runs = 0;
    let mut prev = false;
    for x in inside {
        if x && !prev {
            runs += 1;
        }
        prev = x;
    }
    runs
}

/// Time for a pursuer moving straight at `speed` to close from `start_gap`
/// to `contact` distance.
pub fn chase_time(start_gap: f64, contact: f64, speed: f64) -> f64 {
    (start_gap - contact).max(0.0) / speed
}

pub mod gen;

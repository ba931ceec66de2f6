//! Random world and intent generators for fuzz and property tests.

use rand::Rng;

use puffer_core::{
    Boundary, BubbleConfig, Constants, MoveIntent, PlayerId, Pose, Vec3, WorldState,
};

#[derive(Debug, Clone, Copy)]
pub struct WorldSpec {
    pub players: usize,
    /// Half-width of the square spawn area, meters.
    pub extent: f64,
    /// Probability that a player has an enabled bubble.
    pub bubble_p: f64,
    /// Probability that an enabled bubble is soft rather than hard.
    pub soft_p: f64,
    /// Probability that a given other player is on someone's exempt list.
    pub exempt_p: f64,
}

pub fn random_bubble<R: Rng>(rng: &mut R, spec: &WorldSpec, c: &Constants) -> BubbleConfig {
    BubbleConfig {
        enabled: rng.gen_bool(spec.bubble_p),
        boundary: if rng.gen_bool(spec.soft_p) {
            Boundary::Soft
        } else {
            Boundary::Hard
        },
        radius_al: rng.gen_range(c.radius_min_al..=c.radius_max_al),
        alerts_enabled: rng.gen_bool(0.7),
        ..Default::default()
    }
}

/// Players placed by rejection sampling so that no hard constraint is
/// violated at spawn.
pub fn random_world<R: Rng>(rng: &mut R, spec: &WorldSpec, c: &Constants) -> WorldState {
    let mut w = WorldState::new(c.clone());
    let n = spec.players as u64;
    let mut bubbles: Vec<BubbleConfig> = (0..n).map(|_| random_bubble(rng, spec, c)).collect();
    for (i, b) in bubbles.iter_mut().enumerate() {
        for j in 0..n {
            if j != i as u64 + 1 && rng.gen_bool(spec.exempt_p) {
                b.exempt.insert(PlayerId(j + 1));
            }
        }
    }
    let mut placed: Vec<(Vec3, &BubbleConfig, PlayerId)> = Vec::new();
    for (i, bubble) in bubbles.iter().enumerate() {
        let id = PlayerId(i as u64 + 1);
        let pos = 'sample: loop {
            let p = Vec3::planar(
                rng.gen_range(-spec.extent..spec.extent),
                rng.gen_range(-spec.extent..spec.extent),
            );
            for (q, qb, qid) in &placed {
                let need = [hard_against(bubble, *qid, c), hard_against(qb, id, c)]
                    .into_iter()
                    .flatten()
                    .fold(0.0_f64, f64::max);
                if p.distance(*q) < need + 1e-3 {
                    continue 'sample;
                }
            }
            break p;
        };
        placed.push((pos, bubble, id));
    }
    for (i, (pos, bubble, id)) in placed.iter().enumerate() {
        let facing = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut st = puffer_core::PlayerState::new(format!("bot{i}"), Pose::new(*pos, facing));
        st.bubble = (*bubble).clone();
        w.insert_player(*id, st).expect("valid player");
    }
    w
}

fn hard_against(b: &BubbleConfig, other: PlayerId, c: &Constants) -> Option<f64> {
    (b.enabled && b.boundary == Boundary::Hard && !b.exempt.contains(&other))
        .then_some(b.radius_al * c.arm_length_m)
}

/// One random-walk intent per player, at most the speed cap away, drifting
/// back toward the origin when outside `extent`.
pub fn walker_intents<R: Rng>(rng: &mut R, w: &WorldState, extent: f64) -> Vec<MoveIntent> {
    let step_max = w.constants.max_step_m();
    let mut out = Vec::new();
    for (id, p) in &w.players {
        if !rng.gen_bool(0.9) {
            continue;
        }
        out.push({
            let pos = p.pose.position;
            let mut ang = rng.gen_range(0.0..std::f64::consts::TAU);
            if pos.x.abs() > extent || pos.y.abs() > extent {
                ang = (-pos.y).atan2(-pos.x) + rng.gen_range(-0.5..0.5);
            }
            let step = rng.gen_range(0.0..=step_max) * 0.999_999;
            MoveIntent {
                player: *id,
                target: Pose::new(pos + Vec3::planar(ang.cos(), ang.sin()) * step, ang),
                tick: w.tick + 1,
            }
        });
    }
    out
}

/// Intents that all head straight for `goal` at full speed.
pub fn converging_intents(w: &WorldState, goal: Vec3, movers: &[PlayerId]) -> Vec<MoveIntent> {
    let step = w.constants.max_step_m() * 0.999_999;
    movers
        .iter()
        .map(|id| {
            let pos = w.players[id].pose.position;
            let d = goal - pos;
            let n = d.norm();
            let target = if n <= step {
                goal
            } else {
                pos + d * (step / n)
            };
            MoveIntent {
                player: *id,
                target: Pose::new(target, d.y.atan2(d.x)),
                tick: w.tick + 1,
            }
        })
        .collect()
}

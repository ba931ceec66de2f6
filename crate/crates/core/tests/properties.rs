use std::collections::BTreeMap;

use proptest::prelude::*;
use puffer_core::rooms::{default_filter_from_badges, Directory, RoomFilter, RoomId, RoomSeed};
use puffer_core::{
    BadgeSet, BadgeSlot, BadgeValue, Boundary, BubbleConfig, Constants, Feature, Interaction,
    PlayerId, Pose, Response, SendOutcome, SocialEnergy, Sound, WorldState,
};
use puffer_oracles::{crowd_by_definition, filter_scan, rate_limit_oracle, RateOracleDecision};

fn bubble() -> impl Strategy<Value = BubbleConfig> {
    (any::<bool>(), any::<bool>(), 0.5f64..=4.0, any::<bool>()).prop_map(|(on, hard, r, alerts)| {
        let mut b = if hard {
            BubbleConfig::hard(r)
        } else {
            BubbleConfig::soft(r)
        };
        b.enabled = on;
        b.alerts_enabled = alerts;
        b
    })
}

fn badge_value() -> impl Strategy<Value = BadgeValue> {
    prop_oneof![
        prop_oneof![
            Just(Interaction::Open),
            Just(Interaction::ArmLength),
            Just(Interaction::NoPhysical)
        ]
        .prop_map(BadgeValue::Interaction),
        prop_oneof![Just(Sound::None), Just(Sound::Quiet)].prop_map(BadgeValue::Sound),
        prop_oneof![
            Just(SocialEnergy::None),
            Just(SocialEnergy::Social),
            Just(SocialEnergy::FriendsOnly),
            Just(SocialEnergy::Individual)
        ]
        .prop_map(BadgeValue::Social),
    ]
}

#[derive(Debug, Clone)]
enum BadgeOp {
    Set(BadgeValue),
    Clear(BadgeSlot),
    Bubble(BubbleConfig),
}

fn badge_op() -> impl Strategy<Value = BadgeOp> {
    prop_oneof![
        4 => badge_value().prop_map(BadgeOp::Set),
        2 => prop_oneof![Just(BadgeSlot::Interaction), Just(BadgeSlot::Sound), Just(BadgeSlot::Social)]
            .prop_map(BadgeOp::Clear),
        1 => bubble().prop_map(BadgeOp::Bubble),
    ]
}

fn one_player(b: BubbleConfig) -> (WorldState, PlayerId) {
    let mut w = WorldState::new(Constants::default());
    let p = PlayerId(1);
    w.add_player(p, "p", Pose::at(0.0, 0.0)).unwrap();
    w.set_bubble(p, b).unwrap();
    (w, p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn coupled_badges_restore_the_prior_bubble(
        start in bubble(),
        seq in prop::collection::vec(
            prop_oneof![Just(Interaction::ArmLength), Just(Interaction::NoPhysical)], 1..6),
        side in prop::collection::vec(badge_value().prop_filter("non-interaction", |v| v.slot() != BadgeSlot::Interaction), 0..4),
    ) {
        let (mut w, p) = one_player(start.clone());
        for (i, badge) in seq.iter().enumerate() {
            w.set_badge(p, BadgeSlot::Interaction, BadgeValue::Interaction(*badge)).unwrap();
            if let Some(v) = side.get(i) {
                w.set_badge(p, v.slot(), *v).unwrap();
            }
            let b = &w.players[&p].bubble;
            prop_assert!(b.enabled && b.boundary == Boundary::Hard);
            prop_assert!(w.coupling_holds());
        }
        w.clear_badge(p, BadgeSlot::Interaction).unwrap();
        prop_assert_eq!(&w.players[&p].bubble, &start);
        prop_assert!(w.players[&p].badges.saved_bubble.is_none());
    }

    #[test]
    fn coupling_invariant_survives_any_op_sequence(
        start in bubble(),
        ops in prop::collection::vec(badge_op(), 0..20),
    ) {
        let (mut w, p) = one_player(start);
        for op in ops {
            match op {
                BadgeOp::Set(v) => { w.set_badge(p, v.slot(), v).unwrap(); }
                BadgeOp::Clear(s) => { w.clear_badge(p, s).unwrap(); }
                BadgeOp::Bubble(b) => { w.set_bubble(p, b).unwrap(); }
            }
            prop_assert!(w.coupling_holds());
        }
    }

    #[test]
    fn mismatched_badge_slot_is_rejected_without_change(v in badge_value(), start in bubble()) {
        let (mut w, p) = one_player(start);
        let before = w.canonical_json();
        for slot in [BadgeSlot::Interaction, BadgeSlot::Sound, BadgeSlot::Social] {
            if slot != v.slot() {
                prop_assert!(w.set_badge(p, slot, v).is_err());
            }
        }
        prop_assert_eq!(before, w.canonical_json());
    }
}

/// Send times with a mix of bursts and gaps, in ticks.
fn send_times() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(prop_oneof![3 => 0u64..40, 1 => 40u64..1500], 1..40).prop_map(|gaps| {
        let mut t = 0;
        gaps.into_iter()
            .map(|g| {
                t += g;
                t
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn limiter_matches_full_history_replay(times in send_times()) {
        let c = Constants::default();
        let mut w = WorldState::new(c.clone());
        let sender = PlayerId(1);
        w.add_player(sender, "s", Pose::at(0.0, 0.0)).unwrap();
        for i in 0..4 {
            w.add_player(PlayerId(10 + i), "r", Pose::at(10.0 + 3.0 * i as f64, 0.0)).unwrap();
        }
        let oracle = rate_limit_oracle(&times, c.suggestion_limit, c.window_ticks(), c.cooldown_ticks());
        for (k, (&now, expect)) in times.iter().zip(&oracle).enumerate() {
            let receiver = PlayerId(10 + (k % 4) as u64);
            let (outcome, effects) = w.send_suggestion(sender, receiver, Feature::PersonalBubble, now).unwrap();
            match (outcome, expect) {
                (SendOutcome::Delivered { id }, RateOracleDecision::Delivered { cooldown_started }) => {
                    let started = effects.iter().find_map(|e| match e.kind {
                        puffer_core::EffectKind::CooldownStarted { until, .. } => Some(until),
                        _ => None,
                    });
                    prop_assert_eq!(started, *cooldown_started);
                    // keep pairs free so pending state never interferes
                    w.respond(receiver, id, Response::Decline, now).unwrap();
                }
                (SendOutcome::CoolingDown { until }, RateOracleDecision::CoolingDown { until: u }) => {
                    prop_assert_eq!(until, *u);
                }
                (got, want) => prop_assert!(false, "send {} at {}: {:?} vs {:?}", k, now, got, want),
            }
        }
    }
}

#[derive(Debug, Clone)]
enum SugOp {
    Send { from: u64, to: u64 },
    Respond { who: u64, response: Response },
    Wait(u64),
}

fn sug_op() -> impl Strategy<Value = SugOp> {
    let response = prop_oneof![
        Just(Response::Accept),
        Just(Response::More),
        Just(Response::Decline),
        Just(Response::BlockSender),
        Just(Response::BlockAll),
    ];
    prop_oneof![
        5 => (1u64..5, 1u64..5).prop_map(|(from, to)| SugOp::Send { from, to }),
        2 => (1u64..5, response).prop_map(|(who, response)| SugOp::Respond { who, response }),
        2 => (1u64..900).prop_map(SugOp::Wait),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn blocks_are_opaque_and_pairs_hold_one_pending(ops in prop::collection::vec(sug_op(), 1..60)) {
        let mut w = WorldState::new(Constants::default());
        for i in 1..5 {
            w.add_player(PlayerId(i), "x", Pose::at(5.0 * i as f64, 0.0)).unwrap();
        }
        // receiver -> senders it has blocked, plus block-all flags
        let mut blocked: BTreeMap<PlayerId, Vec<PlayerId>> = BTreeMap::new();
        let mut block_all: Vec<PlayerId> = Vec::new();
        for op in ops {
            match op {
                SugOp::Send { from, to } if from != to => {
                    let (s, r) = (PlayerId(from), PlayerId(to));
                    let now = w.tick;
                    let (out, _) = w.send_suggestion(s, r, Feature::PersonalBubble, now).unwrap();
                    let refused = block_all.contains(&r) || blocked.get(&r).is_some_and(|v| v.contains(&s));
                    if refused {
                        prop_assert_eq!(out, SendOutcome::NotReceiving);
                    }
                }
                SugOp::Send { .. } => {}
                SugOp::Respond { who, response } => {
                    let r = PlayerId(who);
                    let first = w.suggestions.pending_for(r).next().cloned();
                    if let Some(s) = first {
                        let now = w.tick;
                        w.respond(r, s.id, response, now).unwrap();
                        match response {
                            Response::BlockSender => blocked.entry(r).or_default().push(s.sender),
                            Response::BlockAll => block_all.push(r),
                            _ => {}
                        }
                    }
                }
                SugOp::Wait(n) => {
                    for _ in 0..n {
                        w.advance(&[]);
                    }
                }
            }
            let mut seen = std::collections::BTreeSet::new();
            for s in w.suggestions.pending() {
                prop_assert!(seen.insert((s.sender, s.receiver)), "two pending for {:?}", (s.sender, s.receiver));
                prop_assert!(w.tick - s.sent_at < w.constants.expiry_ticks());
            }
        }
    }
}

fn seeds() -> impl Strategy<Value = Vec<(u32, u32, u32)>> {
    // (capacity, players, muted among them)
    prop::collection::vec(
        (1u32..40)
            .prop_flat_map(|cap| (Just(cap), 0..=cap))
            .prop_flat_map(|(cap, n)| (Just(cap), Just(n), 0..=n)),
        0..12,
    )
}

fn build_directory(rooms: &[(u32, u32, u32)]) -> Directory {
    let seeds = rooms.iter().enumerate().map(|(i, &(cap, _, _))| RoomSeed {
        room_id: RoomId(format!("room-{i:02}")),
        name: format!("Room {i}"),
        theme_tags: vec![],
        capacity: cap,
    });
    let mut d = Directory::new(seeds).unwrap();
    let mut next = 0;
    for (i, &(_, n, muted)) in rooms.iter().enumerate() {
        let id = RoomId(format!("room-{i:02}"));
        for k in 0..n {
            next += 1;
            d.join_room(PlayerId(next), &id).unwrap();
            if k < muted {
                d.set_muted(PlayerId(next), true).unwrap();
            }
        }
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn filtering_matches_linear_scan(rooms in seeds(), crowd in any::<bool>(), quiet in any::<bool>()) {
        let d = build_directory(&rooms);
        let all: Vec<_> = d.rooms().cloned().collect();
        let filter = RoomFilter { uncrowded_only: crowd, quiet_only: quiet };
        let c = Constants::default();
        prop_assert_eq!(d.filter_rooms(&filter), filter_scan(&all, &filter, &c));
        for m in &all {
            prop_assert_eq!(m.crowd, crowd_by_definition(m.player_count, m.capacity));
        }
    }
}

#[test]
fn every_badge_combination_maps_to_the_expected_filter() {
    let c = Constants::default();
    let rooms: Vec<(u32, u32, u32)> = (0..30u32).map(|i| (30, i, i / 2)).collect();
    let d = build_directory(&rooms);
    let all: Vec<_> = d.rooms().cloned().collect();
    let mut combos = 0;
    for interaction in [
        Interaction::Open,
        Interaction::ArmLength,
        Interaction::NoPhysical,
    ] {
        for sound in [Sound::None, Sound::Quiet] {
            for social in [
                SocialEnergy::None,
                SocialEnergy::Social,
                SocialEnergy::FriendsOnly,
                SocialEnergy::Individual,
            ] {
                let badges = BadgeSet {
                    interaction,
                    sound,
                    social,
                    saved_bubble: None,
                };
                let f = default_filter_from_badges(&badges);
                assert_eq!(f.uncrowded_only, interaction != Interaction::Open);
                assert_eq!(f.quiet_only, sound == Sound::Quiet);
                assert_eq!(d.filter_rooms(&f), filter_scan(&all, &f, &c));
                combos += 1;
            }
        }
    }
    assert_eq!(combos, 24);
}

#[test]
fn join_leave_churn_keeps_counts_exact() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let rooms: Vec<(u32, u32, u32)> = vec![(10, 0, 0), (25, 0, 0), (4, 0, 0)];
    let mut d = build_directory(&rooms);
    let ids: Vec<RoomId> = (0..3).map(|i| RoomId(format!("room-{i:02}"))).collect();
    let mut truth: BTreeMap<PlayerId, (usize, bool)> = BTreeMap::new();
    for _ in 0..1000 {
        let p = PlayerId(rng.gen_range(0..40));
        match truth.get(&p).copied() {
            Some((_, muted)) if rng.gen_bool(0.3) => {
                d.set_muted(p, !muted).unwrap();
                truth.get_mut(&p).unwrap().1 = !muted;
            }
            Some(_) => {
                d.leave_room(p).unwrap();
                truth.remove(&p);
            }
            None => {
                let r = rng.gen_range(0..3);
                if d.join_room(p, &ids[r]).is_ok() {
                    truth.insert(p, (r, false));
                } else {
                    assert_eq!(
                        truth.values().filter(|(x, _)| *x == r).count() as u32,
                        rooms[r].0
                    );
                }
            }
        }
        for (r, id) in ids.iter().enumerate() {
            let m = d.meta(id).unwrap();
            let members = truth.values().filter(|(x, _)| *x == r);
            assert_eq!(m.player_count as usize, members.clone().count());
            assert_eq!(
                m.unmuted_count as usize,
                members.filter(|(_, muted)| !muted).count()
            );
            assert_eq!(m.crowd, crowd_by_definition(m.player_count, m.capacity));
        }
    }
}

#[test]
fn clearing_sound_badge_drops_quiet_filter() {
    let (mut w, p) = one_player(BubbleConfig::default());
    w.set_badge(p, BadgeSlot::Sound, BadgeValue::Sound(Sound::Quiet))
        .unwrap();
    assert!(default_filter_from_badges(&w.players[&p].badges).quiet_only);
    w.clear_badge(p, BadgeSlot::Sound).unwrap();
    assert_eq!(
        default_filter_from_badges(&w.players[&p].badges),
        RoomFilter::default()
    );
}

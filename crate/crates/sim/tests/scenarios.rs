use std::path::PathBuf;
use std::sync::OnceLock;

use proptest::prelude::*;
use puffer_core::{Constants, PlayerId};
use puffer_sim::scenario::{BubbleSpec, CastMember, Params};
use puffer_sim::{
    aggregate, run_many, run_probed, run_scenario, AccessPath, InvalidScript, Role, ScenarioScript,
};

fn scenario(name: &str) -> ScenarioScript {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    ScenarioScript::load(&path).unwrap()
}

fn member(name: &str, role: Role, x: f64, y: f64) -> CastMember {
    CastMember {
        name: name.into(),
        role,
        position: [x, y],
        facing: 0.0,
        badges: Vec::new(),
        bubble: None,
        params: Params::default(),
    }
}

fn with_path(mut s: ScenarioScript, path: AccessPath) -> ScenarioScript {
    s.access_path = path;
    s
}

fn notes(log: &[String], bot: &str, note: &str) -> Vec<serde_json::Value> {
    log.iter()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v["bot"] == bot && v["note"] == note)
        .collect()
}

#[test]
fn zero_duration_gives_empty_log_and_zero_metrics() {
    let mut s = scenario("tagging.json");
    s.duration_ticks = 0;
    let out = run_scenario(&s, 0).unwrap();
    assert!(out.log.is_empty());
    let m = out.metrics;
    assert!(!m.tagged_before_activation);
    assert_eq!(m.time_to_activation_s, None);
    assert_eq!(
        (m.tags, m.alerts_raised, m.violations, m.greetings),
        (0, 0, 0, 0)
    );
    assert_eq!(m.suggestions, Default::default());
}

#[test]
fn hotkey_activates_before_the_tag() {
    let out = run_scenario(&with_path(scenario("tagging.json"), AccessPath::Hotkey), 0).unwrap();
    let m = out.metrics;
    assert!(!m.tagged_before_activation);
    assert!(m.time_to_activation_s.unwrap() < 1.0);
}

#[test]
fn menu_is_too_slow_to_beat_the_tag() {
    let out = run_scenario(&with_path(scenario("tagging.json"), AccessPath::Menu), 0).unwrap();
    let m = out.metrics;
    assert!(m.tagged_before_activation);
    assert!(m.time_to_activation_s.unwrap() > 1.9);
}

#[test]
fn suggestion_assist_goes_through_an_accepted_suggestion() {
    let out = run_scenario(
        &with_path(scenario("tagging.json"), AccessPath::SuggestionAssist),
        0,
    )
    .unwrap();
    let m = out.metrics;
    assert!(m.suggestions.delivered >= 1);
    assert_eq!(m.suggestions.accepted, 1);
    assert!(m.time_to_activation_s.is_some());
}

#[test]
fn tagger_ignores_players_it_cannot_see() {
    // the tagger's own soft bubble hides the two nearby players from it
    let mut tagger = member("Thunderhawk", Role::Tagger, 0.0, 0.0);
    tagger.bubble = Some(BubbleSpec {
        enabled: true,
        boundary: puffer_core::Boundary::Soft,
        radius_al: 4.0,
        alerts_enabled: true,
    });
    tagger.params.speed_mps = 1.0;
    let s = ScenarioScript {
        name: "hidden".into(),
        seed: 5,
        duration_ticks: 40,
        access_path: AccessPath::Menu,
        subject: None,
        room: puffer_core::RoomSeed {
            room_id: puffer_core::RoomId("field".into()),
            name: "Field".into(),
            theme_tags: vec![],
            capacity: 8,
        },
        cast: vec![
            tagger,
            member("Moss", Role::HumanProxy, 1.5, 0.0),
            member("Fern", Role::HumanProxy, -1.5, 0.0),
        ],
        latency: Default::default(),
        tag_range_m: 0.4,
        strip_badges: false,
    };
    let out = run_scenario(&s, 0).unwrap();
    assert!(notes(&out.log, "Thunderhawk", "pursuing").is_empty());
    assert!(!notes(&out.log, "Thunderhawk", "wandering").is_empty());
    assert_eq!(out.metrics.tags, 0);
    assert_eq!(out.metrics.hygiene_violations, 0);

    // a visible player in the same room is chased
    let mut s2 = s.clone();
    s2.cast.push(member("Pebble", Role::HumanProxy, 8.0, 0.0));
    let out = run_scenario(&s2, 0).unwrap();
    let chased = notes(&out.log, "Thunderhawk", "pursuing");
    assert!(!chased.is_empty());
    assert_eq!(chased[0]["player"], 4);
    assert_eq!(out.metrics.hygiene_violations, 0);
}

#[test]
fn greeter_keeps_away_from_individual_badges() {
    let mut s = scenario("roleplay.json");
    let clover = s.cast.iter().position(|m| m.name == "Clover").unwrap();
    // put Clover between the greeter and everyone else
    s.cast[clover].position = [4.0, 0.3];
    s.duration_ticks = 800;
    let keep = Params::default().keep_m;
    let step = 1.2 / f64::from(Constants::default().tick_hz);
    let (greeter, clover_id) = (PlayerId(2), PlayerId(4));
    let mut closest = f64::INFINITY;
    let out = run_probed(&s, &Constants::default(), 0, &mut |w| {
        let d = w.players[&greeter]
            .pose
            .position
            .distance(w.players[&clover_id].pose.position);
        closest = closest.min(d);
    })
    .unwrap();
    assert!(closest >= keep - step - 1e-9, "came within {closest} m");
    let greeted = notes(&out.log, "Thunderhawk", "greeted");
    assert!(greeted.iter().all(|n| n["player"] != 4));
}

#[test]
fn greeter_gives_up_on_a_flashing_target() {
    let out = run_scenario(&scenario("roleplay.json"), 0).unwrap();
    let avoided = notes(&out.log, "Thunderhawk", "avoiding");
    assert_eq!(avoided.len(), 1);
    assert_eq!(avoided[0]["player"], 1);
    let first_flash = out
        .log
        .iter()
        .position(|l| l.contains("\"bubble_flash\"") && l.contains("\"owner\":1"))
        .unwrap();
    assert!(out.log[first_flash + 1].contains("\"avoiding\""));
    assert!(notes(&out.log, "Thunderhawk", "greeted")
        .iter()
        .all(|n| n["player"] != 1));
}

#[test]
fn spammer_hits_exactly_one_cooldown() {
    let out = run_scenario(&scenario("spam.json"), 0).unwrap();
    let m = out.metrics;
    let k = Constants::default().suggestion_limit;
    assert_eq!(m.suggestions.cooldowns, 1);
    assert_eq!(m.suggestions.sent, k + 1);
    assert!(m.suggestions.delivered >= k);
}

#[test]
fn blocking_receivers_stop_delivery_without_revealing_which_block() {
    for response in ["block_sender", "block_all"] {
        let mut s = scenario("spam.json");
        for m in s.cast.iter_mut().filter(|m| m.role == Role::Wanderer) {
            m.params.on_suggestion = serde_json::from_value(response.into()).unwrap();
        }
        let out = run_scenario(&s, 0).unwrap();
        let m = out.metrics;
        assert_eq!(m.suggestions.blocked, 3, "{response}");
        let outcomes: Vec<String> = notes(&out.log, "Zephyr", "outcome")
            .into_iter()
            .map(|n| n["outcome"]["outcome"].as_str().unwrap().to_owned())
            .collect();
        assert!(
            outcomes.iter().any(|o| o == "not_receiving"),
            "{response}: {outcomes:?}"
        );
        assert!(outcomes
            .iter()
            .all(|o| o == "delivered" || o == "not_receiving"));
    }
}

#[test]
fn bystander_signals_follow_the_badge_arm() {
    let badge = run_scenario(&scenario("roleplay.json"), 0).unwrap().metrics;
    let juniper = badge.bystanders["Juniper"];
    assert!(juniper.saw_badge.is_some() && juniper.saw_flash.is_some());

    let mut s = scenario("roleplay.json");
    s.strip_badges = true;
    let plain = run_scenario(&s, 0).unwrap().metrics;
    let juniper = plain.bystanders["Juniper"];
    assert_eq!((juniper.saw_badge, juniper.saw_flash), (None, None));
    assert!(plain.greetings > badge.greetings);
}

#[test]
fn bots_never_act_on_hidden_players() {
    for name in ["tagging.json", "roleplay.json", "spam.json"] {
        for path in AccessPath::ALL {
            let outs = run_many(&with_path(scenario(name), path), 10).unwrap();
            for o in outs {
                assert_eq!(o.metrics.hygiene_violations, 0, "{name}");
                assert_eq!(o.metrics.violations, 0, "{name}");
                assert!(o.log.iter().all(|l| !l.contains("hygiene_violation")));
            }
        }
    }
}

#[test]
fn replay_is_deterministic() {
    let s = scenario("tagging.json");
    let a = run_scenario(&s, 0).unwrap();
    let b = run_scenario(&s, 0).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.metrics, b.metrics);
    let mut other = s.clone();
    other.seed += 1;
    assert_ne!(run_scenario(&other, 0).unwrap().log, a.log);
}

#[test]
fn single_run_aggregate_is_that_run() {
    let out = run_scenario(&scenario("tagging.json"), 0).unwrap();
    let aggs = aggregate(std::slice::from_ref(&out.metrics));
    assert_eq!(aggs.len(), 1);
    let a = &aggs[0];
    assert_eq!(a.runs, 1);
    assert_eq!(
        a.time_to_activation_s.unwrap().mean,
        out.metrics.time_to_activation_s.unwrap()
    );
    assert_eq!(a.time_to_activation_s.unwrap().ci95, None);
    assert_eq!(a.alerts_raised.mean, f64::from(out.metrics.alerts_raised));
}

fn tagging_metrics() -> Vec<puffer_sim::RunMetrics> {
    static RUNS: OnceLock<Vec<puffer_sim::RunMetrics>> = OnceLock::new();
    RUNS.get_or_init(|| {
        AccessPath::ALL
            .into_iter()
            .flat_map(|p| run_many(&with_path(scenario("tagging.json"), p), 8).unwrap())
            .map(|o| o.metrics)
            .collect()
    })
    .clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregates_ignore_run_order(perm in Just(tagging_metrics()).prop_shuffle()) {
        let reference = aggregate(&tagging_metrics());
        prop_assert_eq!(aggregate(&perm), reference);
    }
}

#[test]
fn csv_has_one_row_per_arm() {
    let aggs = aggregate(&tagging_metrics());
    let mut buf = Vec::new();
    puffer_sim::report::write_csv(&aggs, &mut buf).unwrap();
    let mut r = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(
        r.headers().unwrap().len(),
        puffer_sim::report::CSV_HEADER.len()
    );
    let rows: Vec<_> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[0][0], "menu");
}

#[test]
fn invalid_scripts_are_rejected() {
    let c = Constants::default();
    let base = scenario("tagging.json");

    let mut s = base.clone();
    s.cast[1].name = s.cast[0].name.clone();
    assert!(matches!(
        s.validate(&c),
        Err(InvalidScript::DuplicateName(_))
    ));

    let mut s = base.clone();
    s.subject = Some("Nobody".into());
    assert!(matches!(
        s.validate(&c),
        Err(InvalidScript::UnknownSubject(_))
    ));

    let mut s = base.clone();
    s.cast[0].bubble.as_mut().unwrap().radius_al = 9.0;
    assert!(matches!(s.validate(&c), Err(InvalidScript::Member { .. })));

    let mut s = base.clone();
    s.cast[1].params.speed_mps = 10.0;
    assert!(matches!(s.validate(&c), Err(InvalidScript::Member { .. })));

    let mut s = base.clone();
    s.room.capacity = 2;
    assert!(matches!(
        s.validate(&c),
        Err(InvalidScript::Capacity { .. })
    ));

    let mut s = base.clone();
    s.cast.clear();
    assert!(matches!(s.validate(&c), Err(InvalidScript::EmptyCast)));

    let mut s = base;
    s.subject = Some("Thunderhawk".into());
    assert!(s.validate(&c).is_err());

    assert!(ScenarioScript::from_json(r#"{"name":"x","bogus":1}"#).is_err());
}

#[test]
fn tagging_seed_42_matches_the_golden_log() {
    let golden =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/tagging_seed42.jsonl");
    let out = run_scenario(&scenario("tagging.json"), 0).unwrap();
    let text = out.log.join("\n") + "\n";
    if std::env::var_os("PUFFER_BLESS").is_some() {
        std::fs::create_dir_all(golden.parent().unwrap()).unwrap();
        std::fs::write(&golden, &text).unwrap();
    }
    let want =
        std::fs::read_to_string(&golden).expect("golden log exists; rerun with PUFFER_BLESS=1");
    assert_eq!(text, want);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn tagging_runs_over_websockets() {
    let mut s = scenario("tagging.json");
    s.access_path = AccessPath::Hotkey;
    s.duration_ticks = 60;
    let server = puffer_server::net::start(
        "127.0.0.1:0".parse().unwrap(),
        Constants::default(),
        vec![s.room.clone()],
    )
    .await
    .unwrap();
    let url = format!("ws://{}", server.addr);
    let summary = puffer_sim::wire::run_over_wire(&s, &url).await.unwrap();
    server.handle.abort();
    assert_eq!(summary.ticks, 60);
    assert!(summary.snapshots > 0);
    assert!(summary.errors.is_empty(), "{:?}", summary.errors);
    assert!(summary.subject_activated);
}

//! Engine-level behavior: reference resolution, side effects, focus
//! dynamics, identity chains, snapshots and the shipped corpus.

use xapagy_core::engine::Agent;
use xapagy_core::error::XapagyError;
use xapagy_core::knowledge::KnowledgeBase;
use xapagy_core::model::{LinkKind, ViForm, ViObject};
use xapagy_core::Config;

const DOMAIN: &str = include_str!("../../../domains/lrrh.dom");
const CORPUS: &str = include_str!("../../../stories/lrrh.xapi");

fn agent() -> Agent {
    Agent::new(KnowledgeBase::load(DOMAIN).unwrap(), Config::default()).unwrap()
}

fn run(agent: &mut Agent, text: &str) {
    agent.run_text(text).unwrap();
}

#[test]
fn corpus_runs_clean() {
    let mut a = agent();
    run(&mut a, CORPUS);
    assert!(a.trace.count("vi") > 60);
    assert_eq!(a.trace.count("warning"), 0, "corpus must resolve unambiguously");
}

#[test]
fn corpus_builds_a_long_identity_chain() {
    let mut a = agent();
    run(&mut a, CORPUS);
    // the protagonist is fragmented into one instance per scene, all
    // connected through identity links
    let mut best = 0;
    for id in a.memory.instances.keys() {
        best = best.max(a.memory.identity_closure(*id).len());
    }
    assert!(best >= 10, "longest identity closure is {best}, expected >= 10");
}

#[test]
fn corpus_scene_count() {
    let mut a = agent();
    run(&mut a, CORPUS);
    let scenes = a.memory.instances.values().filter(|i| i.is_scene).count();
    assert!(scenes >= 10, "got {scenes} scenes");
}

#[test]
fn definite_reference_prefers_better_match() {
    let mut a = agent();
    run(&mut a, "A big wolf / exists.\nA small wolf / exists.\n");
    run(&mut a, "The big wolf / cries.\n");
    let cry = a.memory.vis.values().find(|v| a.render_vi(v.id).contains("cries")).unwrap();
    let subject = &a.memory.instances[&cry.subject];
    let big = a.kb.concept_id("big").unwrap();
    assert!(subject.attributes.contains(big));
}

#[test]
fn is_a_grows_attributes_and_rejects_floored_ones() {
    let mut a = agent();
    run(&mut a, "A wolf / exists.\nThe wolf / is-a / alive.\n");
    let err = a.run_text("The wolf / is-a / dead.\n").unwrap_err();
    assert!(matches!(err, XapagyError::IncompatibleAttribute { .. }), "got {err:?}");
}

#[test]
fn changes_fragments_the_instance() {
    let mut a = agent();
    run(&mut a, "A wolf / is-a / alive.\nThe wolf / changes / dead.\n");
    let identities = a
        .memory
        .links
        .iter()
        .filter(|l| l.kind == LinkKind::Identity)
        .count();
    assert_eq!(identities, 1);
    // exactly one wolf instance still carries real focus strength
    let wolves: Vec<_> = a
        .focus
        .instance_strengths
        .iter()
        .filter(|(i, s)| !a.memory.instances[i].is_scene && **s > 0.5)
        .collect();
    assert_eq!(wolves.len(), 1);
    let new_wolf = &a.memory.instances[wolves[0].0];
    let dead = a.kb.concept_id("dead").unwrap();
    assert!(new_wolf.attributes.contains(dead));
}

#[test]
fn action_push_out_and_decay() {
    let mut a = agent();
    run(&mut a, "A girl / hits / a wolf.\n");
    let first = *a.focus.vi_strengths.keys().next().unwrap();
    let before = a.focus.strength(first.into());
    run(&mut a, "The wolf / hits-back / the girl.\n");
    let after = a.focus.strength(first.into());
    // pushed out by its successor on top of one tick of decay
    assert!(after < before * 0.7, "no push-out: {before} -> {after}");
    let succ = a.memory.links.iter().any(|l| l.kind == LinkKind::Succession);
    assert!(succ);
}

#[test]
fn expired_items_never_return() {
    let mut a = agent();
    run(&mut a, "A girl / cries.\n");
    let vi = *a.focus.vi_strengths.keys().next().unwrap();
    for _ in 0..20 {
        a.empty_tick();
    }
    assert!(!a.focus.contains(vi.into()), "VI should have expired");
    assert!(a.focus.is_expired(vi.into()));
    // a new similar statement creates a new VI rather than reviving the old
    run(&mut a, "A girl / cries.\n");
    assert!(!a.focus.contains(vi.into()));
    assert!(a.memory.vis.len() >= 2);
}

#[test]
fn salience_accrues_while_in_focus_then_freezes() {
    let mut a = agent();
    run(&mut a, "A girl / cries.\n");
    let vi = *a.memory.vis.keys().next().unwrap();
    for _ in 0..20 {
        a.empty_tick();
    }
    let frozen = a.memory.salience(vi.into()).unwrap();
    for _ in 0..5 {
        a.empty_tick();
    }
    assert_eq!(a.memory.salience(vi.into()).unwrap(), frozen);
    assert!(frozen > 0.0);
}

#[test]
fn question_links_to_answer_within_window() {
    let mut a = agent();
    run(&mut a, "A girl / exists.\nThe girl / cries?\nThe girl / cries.\n");
    assert!(a.memory.links.iter().any(|l| l.kind == LinkKind::QuestionAnswer));
}

#[test]
fn quote_continuation_macro_reuses_prefix() {
    let mut a = agent();
    run(
        &mut a,
        "A man \"Grim\" / exists.\n\
         The \"Grim\" / says in \"Story\" // A wolf / growls.\n\
         $.// The wolf / runs.\n",
    );
    let quotes: Vec<_> =
        a.memory.vis.values().filter(|v| v.form == ViForm::Quote).collect();
    assert_eq!(quotes.len(), 2);
    // both inquits live in the same quoted scene
    let scene_of = |q: &&xapagy_core::model::VerbInstance| match q.object {
        ViObject::Inquit(id) => a.memory.vis[&id].scene,
        _ => panic!("quote without inquit"),
    };
    assert_eq!(scene_of(&quotes[0]), scene_of(&quotes[1]));
}

#[test]
fn group_reference_reuses_the_group_instance() {
    let mut a = agent();
    run(
        &mut a,
        "A wolf / exists.\nA hunter / exists.\n\
         The wolf + the hunter / fights.\n\
         The wolf + the hunter / fights.\n",
    );
    let groups = a.memory.instances.values().filter(|i| i.is_group).count();
    assert_eq!(groups, 1);
}

#[test]
fn relation_vi_strength_tracks_participants() {
    let mut a = agent();
    run(&mut a, "A girl / exists.\nA wolf / exists.\nThe girl / loves / the wolf.\n");
    let rel = *a
        .memory
        .vis
        .iter()
        .find(|(_, v)| v.relation_kind.as_deref() == Some("loves"))
        .unwrap()
        .0;
    for _ in 0..3 {
        a.empty_tick();
    }
    let rel_strength = a.focus.strength(rel.into());
    let min_part = a
        .memory
        .vis[&rel]
        .participants()
        .iter()
        .map(|p| a.focus.strength((*p).into()))
        .fold(f64::INFINITY, f64::min);
    assert!((rel_strength - min_part).abs() < 1e-12);
}

#[test]
fn snapshot_roundtrip_preserves_behavior() {
    let mut a = agent();
    run(&mut a, "A girl / greets / a wolf.\nThe girl / hits / the wolf.\n");
    let snap = a.save_snapshot();
    let mut b = Agent::load_snapshot(&snap).unwrap();
    run(&mut a, "The wolf / cries.\n");
    run(&mut b, "The wolf / cries.\n");
    assert_eq!(a.dump_focus(), b.dump_focus());
    assert_eq!(a.dump_shadows(), b.dump_shadows());
}

#[test]
fn render_round_trip() {
    let mut a = agent();
    run(&mut a, "A girl / greets / a wolf.\n");
    let vi = *a.memory.vis.keys().next().unwrap();
    let text = a.render_vi(vi);
    // the rendered statement parses and resolves to the same participants
    let before = a.memory.vis.len();
    run(&mut a, &format!("{text}\n"));
    let new_vi = a.memory.vis.values().nth(before).unwrap();
    let old_vi = &a.memory.vis[&vi];
    assert_eq!(new_vi.form, old_vi.form);
    assert_eq!(new_vi.subject, old_vi.subject);
    assert_eq!(new_vi.object, old_vi.object);
}

#[test]
fn unknown_word_error_names_the_line() {
    let mut a = agent();
    let err = a.run_text("A girl / exists.\nThe borogove / cries.\n").unwrap_err();
    match err {
        XapagyError::UnknownWord { word, position } => {
            assert_eq!(word, "borogove");
            assert_eq!(position, "line 2");
        }
        other => panic!("unexpected error {other:?}"),
    }
}

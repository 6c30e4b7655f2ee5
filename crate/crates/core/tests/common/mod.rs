//! Shared oracle machinery used by both the focused oracle suites and the
//! acceptance target. All checks panic on failure.

#![allow(dead_code)]

pub mod diffusion {
    use std::collections::{BTreeMap, BTreeSet};

    use xapagy_core::config::Config;
    use xapagy_core::knowledge::{ConceptOverlay, KnowledgeBase, VerbOverlay};
    use xapagy_core::model::{
        Instance, InstanceId, LinkKind, VerbInstance, ViForm, ViId, ViObject,
    };
    use xapagy_core::shadow::Shadows;
    use xapagy_core::state::{Focus, Memory};

    pub const TOL: f64 = 1e-12;

    pub const DOMAIN: &str = "\
concept scene
concept girl
concept wolf
concept hunter
overlap girl hunter 0.5
verb hits side_effect=action
verb greets side_effect=action
verb cries side_effect=action
overlap hits greets 0.6
word scene = scene
word girl = girl
word wolf = wolf
word hunter = hunter
word hits = hits
word greets = greets
word cries = cries
";

    pub struct World {
        pub kb: KnowledgeBase,
        pub memory: Memory,
        pub focus: Focus,
        pub shadows: Shadows,
        pub config: Config,
    }

    impl World {
        pub fn new() -> World {
            let mut config = Config::default();
            // isolate: callers re-enable exactly one rule
            for key in [
                "shadow.mu",
                "shadow.rate_head_match",
                "shadow.rate_body_match",
                "shadow.rate_verb_match",
                "shadow.rate_identity",
                "shadow.rate_link",
                "shadow.delta",
            ] {
                config.set(key, "0").unwrap();
            }
            World {
                kb: KnowledgeBase::load(DOMAIN).unwrap(),
                memory: Memory::new(),
                focus: Focus::new(),
                shadows: Shadows::new(),
                config,
            }
        }

        pub fn attrs(&mut self, word: &str) -> ConceptOverlay {
            self.kb.lookup_concept_word(word, "test").unwrap()
        }

        pub fn verbs(&self, word: &str) -> VerbOverlay {
            self.kb.lookup_verb_word(word, "test").unwrap()
        }

        pub fn inst(&mut self, id: u64, word: &str, scene: u64, in_focus: bool) -> InstanceId {
            let attributes = self.attrs(word);
            let iid = InstanceId(id);
            self.memory.record_instance(Instance {
                id: iid,
                attributes,
                scene: InstanceId(scene),
                created_at: 0,
                is_scene: false,
                is_group: false,
                group_members: BTreeSet::new(),
            });
            if in_focus {
                self.focus.insert(iid.into());
            } else {
                self.memory.add_salience(iid.into(), 0.5);
            }
            iid
        }

        pub fn vi(
            &mut self,
            id: u64,
            verb: &str,
            subject: InstanceId,
            object: Option<InstanceId>,
            scene: u64,
            in_focus: bool,
        ) -> ViId {
            let vid = ViId(id);
            self.memory.record_vi(VerbInstance {
                id: vid,
                form: if object.is_some() { ViForm::SVO } else { ViForm::SV },
                verbs: self.verbs(verb),
                subject,
                object: object.map_or(ViObject::None, ViObject::Instance),
                scene: InstanceId(scene),
                created_at: 0,
                is_question: false,
                relation_kind: None,
                is_action: true,
                is_summary: false,
            });
            if in_focus {
                self.focus.insert(vid.into());
            } else {
                self.memory.add_salience(vid.into(), 0.5);
            }
            vid
        }

        pub fn step(&mut self) {
            self.shadows
                .diffusion_step(1.0, &self.kb, &self.memory, &self.focus, &self.config, 1.0);
        }
    }

    pub fn check_rule_a() {
        let mut w = World::new();
        w.config.set("shadow.mu", "0.1").unwrap();
        let head = w.inst(0, "girl", 100, true);
        let m1 = w.inst(1, "girl", 100, false);
        let m2 = w.inst(2, "wolf", 101, false);
        w.shadows.instances.insert(head, BTreeMap::from([(m1, 0.4), (m2, 0.2)]));
        w.step();
        let d = (-0.1f64).exp();
        let body = &w.shadows.instances[&head];
        assert!((body[&m1] - 0.4 * d).abs() < TOL);
        assert!((body[&m2] - 0.2 * d).abs() < TOL);
    }

    pub fn check_rule_b() {
        let mut w = World::new();
        w.config.set("shadow.rate_head_match", "0.05").unwrap();
        let head = w.inst(0, "girl", 100, true);
        let twin = w.inst(1, "girl", 101, false); // match 1, salience 0.5
        let other = w.inst(2, "wolf", 101, false); // no overlap with girl
        let faint = w.inst(3, "girl", 101, false);
        w.memory.add_salience(faint.into(), -0.45); // net 0.05, below pool floor
        w.shadows.instances.insert(head, BTreeMap::new());
        w.step();
        let body = &w.shadows.instances[&head];
        // oracle: rate * match * salience * dt = 0.05 * 1.0 * 0.5 * 1
        assert!((body[&twin] - 0.05 * 1.0 * 0.5).abs() < TOL);
        assert!(!body.contains_key(&other));
        assert!(!body.contains_key(&faint));
    }

    pub fn check_rule_c() {
        let mut w = World::new();
        w.config.set("shadow.rate_body_match", "0.05").unwrap();
        let head = w.inst(0, "wolf", 100, true);
        let member = w.inst(1, "girl", 101, false);
        let kin = w.inst(2, "hunter", 102, false); // match(girl,hunter) = 0.5
        w.shadows.instances.insert(head, BTreeMap::from([(member, 0.6)]));
        w.step();
        let body = &w.shadows.instances[&head];
        // oracle: rate * beta * max_b(match * e_b) = 0.05 * 0.5 * (0.5 * 0.6)
        let expected_kin = 0.05 * 0.5 * (0.5 * 0.6);
        assert!((body[&kin] - expected_kin).abs() < TOL);
        // a body member reinforces itself through its own energy (self term)
        let expected_member = 0.6 + 0.05 * 0.5 * 0.6;
        assert!((body[&member] - expected_member).abs() < TOL);
    }

    pub fn check_rule_d() {
        let mut w = World::new();
        w.config.set("shadow.rate_verb_match", "0.05").unwrap();
        let s = w.inst(0, "girl", 100, true);
        let o = w.inst(1, "wolf", 100, true);
        let ms = w.inst(2, "girl", 101, false);
        let mo = w.inst(3, "wolf", 101, false);
        let head = w.vi(0, "hits", s, Some(o), 100, true);
        let mem = w.vi(1, "greets", ms, Some(mo), 101, false);
        w.shadows.instances.insert(s, BTreeMap::from([(ms, 0.3)]));
        w.shadows.instances.insert(o, BTreeMap::new());
        w.shadows.vis.insert(head, BTreeMap::new());
        w.step();
        // verb match: overlap 0.6, unit areas and masses -> 0.6
        let vm: f64 = 0.6;
        let amp = 1.0 + 0.3 + 0.0; // subject part shadowed at 0.3, object at 0
        let gain = 0.05 * vm * amp;
        assert!((w.shadows.vis[&head][&mem] - gain).abs() < TOL);
        // gamma feedback into both part shadows
        let fb = 0.2 * gain;
        assert!((w.shadows.instances[&s][&ms] - (0.3 + fb)).abs() < TOL);
        assert!((w.shadows.instances[&o][&mo] - fb).abs() < TOL);
    }

    pub fn check_rule_e() {
        let mut w = World::new();
        w.config.set("shadow.rate_identity", "0.05").unwrap();
        let head = w.inst(0, "girl", 100, true);
        let past = w.inst(1, "girl", 101, false);
        let member = w.inst(2, "wolf", 101, false);
        let member_kin = w.inst(3, "wolf", 102, false);
        w.memory.record_link(LinkKind::Identity, head.into(), past.into(), 1.0);
        w.memory.record_link(LinkKind::Identity, member.into(), member_kin.into(), 1.0);
        w.shadows.instances.insert(head, BTreeMap::from([(member, 0.4)]));
        w.step();
        let body = &w.shadows.instances[&head];
        // head-identity: rate * dt; member-identity: rate * e_member * dt
        assert!((body[&past] - 0.05).abs() < TOL);
        assert!((body[&member_kin] - 0.05 * 0.4).abs() < TOL);
        assert!((body[&member] - 0.4).abs() < TOL);
    }

    pub fn check_rule_f() {
        let mut w = World::new();
        w.config.set("shadow.rate_link", "0.05").unwrap();
        let a = w.inst(0, "girl", 100, true);
        let b = w.inst(1, "wolf", 100, true);
        let ma = w.inst(2, "girl", 101, false);
        let mb = w.inst(3, "wolf", 101, false);
        let h1 = w.vi(0, "hits", a, Some(b), 100, true);
        let h2 = w.vi(1, "cries", b, None, 100, true);
        let m1 = w.vi(2, "hits", ma, Some(mb), 101, false);
        let m2 = w.vi(3, "cries", mb, None, 101, false);
        w.memory.record_link(LinkKind::Succession, h1.into(), h2.into(), 1.0);
        w.memory.record_link(LinkKind::Succession, m1.into(), m2.into(), 1.0);
        w.shadows.vis.insert(h1, BTreeMap::from([(m1, 0.3)]));
        w.shadows.vis.insert(h2, BTreeMap::from([(m2, 0.6)]));
        w.step();
        // m1 succeeds into m2, which sits in the shadow of h1's successor h2
        assert!((w.shadows.vis[&h1][&m1] - (0.3 + 0.05 * 0.6)).abs() < TOL);
        // symmetric reverse direction for h2's body member m2
        assert!((w.shadows.vis[&h2][&m2] - (0.6 + 0.05 * 0.3)).abs() < TOL);
    }

    pub fn check_rule_g() {
        let mut w = World::new();
        w.config.set("shadow.delta", "0.1").unwrap();
        let head = w.inst(0, "girl", 100, true);
        let strong = w.inst(1, "girl", 101, false);
        let weak = w.inst(2, "wolf", 101, false); // same scene 101
        let lone = w.inst(3, "wolf", 102, false); // alone in its scene
        w.shadows
            .instances
            .insert(head, BTreeMap::from([(strong, 0.5), (weak, 0.2), (lone, 0.3)]));
        w.step();
        let body = &w.shadows.instances[&head];
        // winner takes delta * (mass - winner) from the scene group
        assert!((body[&strong] - (0.5 + 0.1 * 0.2)).abs() < TOL);
        assert!((body[&weak] - (0.2 - 0.1 * 0.2)).abs() < TOL);
        assert!((body[&lone] - 0.3).abs() < TOL);
        let mass: f64 = body.values().sum();
        assert!((mass - 1.0).abs() < TOL); // sharpening conserves mass
    }

    pub fn check_rule_h() {
        let mut w = World::new();
        w.config.set("shadow.delta", "0.1").unwrap();
        let a = w.inst(0, "girl", 100, true);
        let ma = w.inst(1, "girl", 101, false);
        let head = w.vi(0, "hits", a, None, 100, true);
        let strong = w.vi(1, "hits", ma, None, 101, false);
        let weak = w.vi(2, "cries", ma, None, 101, false);
        w.shadows.vis.insert(head, BTreeMap::from([(strong, 0.4), (weak, 0.1)]));
        w.step();
        let body = &w.shadows.vis[&head];
        assert!((body[&strong] - (0.4 + 0.1 * 0.1)).abs() < TOL);
        assert!((body[&weak] - (0.1 - 0.1 * 0.1)).abs() < TOL);
    }

    pub fn check_cap_renormalization() {
        let mut w = World::new();
        w.config.set("shadow.rate_head_match", "0.05").unwrap();
        let head = w.inst(0, "girl", 100, true);
        let m1 = w.inst(1, "girl", 101, false);
        let m2 = w.inst(2, "girl", 102, false);
        w.shadows.instances.insert(head, BTreeMap::from([(m1, 0.7), (m2, 0.7)]));
        w.step();
        let mass: f64 = w.shadows.instances[&head].values().sum();
        assert!(mass <= 1.0 + TOL);
        // proportions preserved by renormalization
        let body = &w.shadows.instances[&head];
        assert!((body[&m1] / body[&m2] - 1.0).abs() < 1e-9);
    }

    pub fn check_convergence() {
        let mut w = World::new();
        w.config = Config::default(); // all rules on
        let s = w.inst(0, "girl", 100, true);
        let o = w.inst(1, "wolf", 100, true);
        let mut prev_instances = BTreeMap::new();
        let mut prev_vis = BTreeMap::new();
        // 16 memory items over 4 past scenes
        for k in 0..4u64 {
            let ms = w.inst(10 + 2 * k, "girl", 200 + k, false);
            let mo = w.inst(11 + 2 * k, "wolf", 200 + k, false);
            let a = w.vi(10 + 2 * k, "hits", ms, Some(mo), 200 + k, false);
            let b = w.vi(11 + 2 * k, "cries", mo, None, 200 + k, false);
            w.memory.record_link(LinkKind::Succession, a.into(), b.into(), 1.0);
        }
        let h1 = w.vi(0, "hits", s, Some(o), 100, true);
        let h2 = w.vi(1, "cries", o, None, 100, true);
        w.memory.record_link(LinkKind::Succession, h1.into(), h2.into(), 1.0);
        w.shadows.instances.insert(s, BTreeMap::new());
        w.shadows.instances.insert(o, BTreeMap::new());
        w.shadows.vis.insert(h1, BTreeMap::new());
        w.shadows.vis.insert(h2, BTreeMap::new());

        let mut converged_at = None;
        for step in 0..200 {
            w.step();
            let mut max_delta = 0.0f64;
            for (head, body) in &w.shadows.instances {
                let empty = BTreeMap::new();
                let prev: &BTreeMap<_, _> = prev_instances.get(head).unwrap_or(&empty);
                for k in body.keys().chain(prev.keys()) {
                    let d = (body.get(k).copied().unwrap_or(0.0)
                        - prev.get(k).copied().unwrap_or(0.0))
                    .abs();
                    max_delta = max_delta.max(d);
                }
            }
            for (head, body) in &w.shadows.vis {
                let empty = BTreeMap::new();
                let prev: &BTreeMap<_, _> = prev_vis.get(head).unwrap_or(&empty);
                for k in body.keys().chain(prev.keys()) {
                    let d = (body.get(k).copied().unwrap_or(0.0)
                        - prev.get(k).copied().unwrap_or(0.0))
                    .abs();
                    max_delta = max_delta.max(d);
                }
            }
            prev_instances = w.shadows.instances.clone();
            prev_vis = w.shadows.vis.clone();
            if max_delta < 1e-6 {
                converged_at = Some(step);
                break;
            }
        }
        assert!(converged_at.is_some(), "diffusion did not settle within 200 steps");
    }

    /// All per-rule oracles plus renormalization and convergence.
    pub fn check_all() {
        check_rule_a();
        check_rule_b();
        check_rule_c();
        check_rule_d();
        check_rule_e();
        check_rule_f();
        check_rule_g();
        check_rule_h();
        check_cap_renormalization();
        check_convergence();
    }
}

pub mod hls {
    use std::collections::BTreeMap;

    use xapagy_core::engine::Agent;
    use xapagy_core::hls::{
        Hls, PartSlot, PipelineCtx, Svr, SvrType, Svri, TemplateObject, ViTemplate, aggregate,
        compute_hlss,
    };
    use xapagy_core::knowledge::{KnowledgeBase, overlay_match};
    use xapagy_core::model::{InstanceId, ItemId, LinkKind, ViForm, ViId, ViObject};
    use xapagy_core::Config;

    pub const DOMAIN: &str = include_str!("../../../../domains/lrrh.dom");

    pub const STORY: &str = "\
A girl / greets / a wolf.
The girl / hits / the wolf.
The wolf / cries.
















A girl / greets / a wolf.
The girl / hits / the wolf.
The wolf / cries.
















A girl / greets / a wolf.
";

    pub fn primed_agent() -> Agent {
        let kb = KnowledgeBase::load(DOMAIN).unwrap();
        let mut agent = Agent::new(kb, Config::default()).unwrap();
        agent.run_text(STORY).unwrap();
        agent
    }

    pub fn ctx(agent: &Agent) -> PipelineCtx<'_> {
        PipelineCtx {
            kb: &agent.kb,
            memory: &agent.memory,
            focus: &agent.focus,
            shadows: &agent.shadows,
            config: &agent.config,
            relaxation: 1.0,
        }
    }

    /// Oracle SVR enumeration straight off the raw link table.
    pub fn oracle_svrs(agent: &Agent) -> Vec<Svr> {
        let eps = agent.config.hls_epsilon_svr;
        let mut out = Vec::new();
        for (focus_vi, body) in &agent.shadows.vis {
            for (root, energy) in body {
                let mut push = |source: ViId, t: SvrType, e: f64| {
                    if e >= eps {
                        out.push(Svr {
                            focus_vi: *focus_vi,
                            vi_root: *root,
                            vi_source: source,
                            svr_type: t,
                            energy: e,
                        });
                    }
                };
                push(*root, SvrType::InShadow, *energy);
                for link in &agent.memory.links {
                    let (ItemId::Vi(from), ItemId::Vi(to)) = (link.from, link.to) else {
                        continue;
                    };
                    let forward_type = match link.kind {
                        LinkKind::Succession => Some(SvrType::Successor),
                        LinkKind::Summarization => Some(SvrType::Elaboration),
                        LinkKind::QuestionAnswer => Some(SvrType::Answer),
                        LinkKind::Context => Some(SvrType::ContextImplication),
                        _ => None,
                    };
                    let Some(ft) = forward_type else { continue };
                    if from == *root {
                        push(to, ft, energy * link.weight);
                    }
                    if to == *root {
                        push(from, ft.opposite(), energy * link.weight);
                    }
                }
            }
        }
        out
    }

    /// Oracle part interpretation: direct root alignment, else reverse
    /// shadow shares plus the NEW floor.
    pub fn oracle_parts(
        agent: &Agent,
        part: InstanceId,
        root: ViId,
        focus_vi: ViId,
    ) -> Vec<(PartSlot, f64)> {
        let root_vi = &agent.memory.vis[&root];
        let fvi = &agent.memory.vis[&focus_vi];
        if part == root_vi.subject {
            return vec![(PartSlot::Focus(fvi.subject), 1.0)];
        }
        if root_vi.object_instance() == Some(part) {
            if let Some(fo) = fvi.object_instance() {
                return vec![(PartSlot::Focus(fo), 1.0)];
            }
        }
        let mut out = Vec::new();
        let mut max_share = 0.0f64;
        for (head, body) in &agent.shadows.instances {
            if let Some(e) = body.get(&part) {
                let mass: f64 = body.values().sum();
                if mass > 0.0 {
                    let share = e / mass;
                    max_share = max_share.max(share);
                    out.push((PartSlot::Focus(*head), share));
                }
            }
        }
        let new_share = (1.0 - max_share).max(agent.config.hls_new_floor);
        out.push((
            PartSlot::New(agent.memory.instances[&part].attributes.clone()),
            new_share,
        ));
        out
    }

    pub fn oracle_svris(agent: &Agent, svrs: &[Svr]) -> Vec<Svri> {
        let eps = agent.config.hls_epsilon_svr;
        let mut out = Vec::new();
        for svr in svrs {
            let source = &agent.memory.vis[&svr.vi_source];
            if source.form == ViForm::Quote || matches!(source.object, ViObject::Inquit(_)) {
                continue;
            }
            let focus_vi = &agent.memory.vis[&svr.focus_vi];
            let subjects = oracle_parts(agent, source.subject, svr.vi_root, svr.focus_vi);
            let objects: Vec<(TemplateObject, f64)> = match &source.object {
                ViObject::None => vec![(TemplateObject::None, 1.0)],
                ViObject::Adjective(a) => vec![(TemplateObject::Adjective(a.clone()), 1.0)],
                ViObject::Instance(o) => oracle_parts(agent, *o, svr.vi_root, svr.focus_vi)
                    .into_iter()
                    .map(|(s, w)| (TemplateObject::Part(s), w))
                    .collect(),
                ViObject::Inquit(_) => continue,
            };
            for (subject, ws) in &subjects {
                for (object, wo) in &objects {
                    let weight = svr.energy * ws * wo;
                    if weight < eps {
                        continue;
                    }
                    out.push(Svri {
                        svr: svr.clone(),
                        template: ViTemplate {
                            form: source.form,
                            verbs: source.verbs.clone(),
                            subject: subject.clone(),
                            object: object.clone(),
                            scene: focus_vi.scene,
                        },
                        weight,
                    });
                }
            }
        }
        out
    }

    pub fn template_key(agent: &Agent, t: &ViTemplate) -> String {
        let slot = |s: &PartSlot| match s {
            PartSlot::Focus(i) => format!("F{}", i.0),
            PartSlot::New(a) => {
                let attrs: Vec<String> =
                    a.members().map(|c| agent.kb.name_of_concept(c).to_string()).collect();
                format!("N[{}]", attrs.join(","))
            }
        };
        let object = match &t.object {
            TemplateObject::None => "-".to_string(),
            TemplateObject::Part(s) => slot(s),
            TemplateObject::Adjective(a) => {
                let attrs: Vec<String> =
                    a.members().map(|c| agent.kb.name_of_concept(c).to_string()).collect();
                format!("A[{}]", attrs.join(","))
            }
        };
        let verbs: Vec<String> =
            t.verbs.members().map(|v| agent.kb.name_of_verb(v).to_string()).collect();
        format!("{:?}|{}|{}|{}", t.form, slot(&t.subject), verbs.join(","), object)
    }

    pub fn check_pipeline() {
        let agent = primed_agent();
        assert!(agent.memory.vis.len() <= 30, "state grew past the oracle scale");
        let ctx = ctx(&agent);

        // SVR sets agree exactly
        let mut engine_svrs = xapagy_core::hls::collect_svrs(&ctx);
        let mut oracle = oracle_svrs(&agent);
        let key = |s: &Svr| (s.focus_vi, s.vi_root, s.vi_source, s.svr_type);
        engine_svrs.sort_by_key(key);
        oracle.sort_by_key(key);
        assert_eq!(engine_svrs.len(), oracle.len(), "SVR count mismatch");
        for (a, b) in engine_svrs.iter().zip(&oracle) {
            assert_eq!(key(a), key(b));
            assert!((a.energy - b.energy).abs() < 1e-9);
        }

        // HLS sets agree: same templates, same per-purpose evidence mass
        let engine_hlss = compute_hlss(&ctx);
        let oracle_hlss: Vec<Hls> = aggregate(&ctx, oracle_svris(&agent, &oracle));
        assert!(!engine_hlss.is_empty(), "expected headless shadows after priming");
        let collect = |hlss: &[Hls]| -> BTreeMap<String, BTreeMap<SvrType, f64>> {
            let mut out: BTreeMap<String, BTreeMap<SvrType, f64>> = BTreeMap::new();
            for h in hlss {
                let entry = out.entry(template_key(&agent, &h.template)).or_default();
                for (t, w) in &h.evidence {
                    *entry.entry(*t).or_insert(0.0) += w;
                }
            }
            out
        };
        let engine_map = collect(&engine_hlss);
        let oracle_map = collect(&oracle_hlss);
        assert_eq!(
            engine_map.keys().collect::<Vec<_>>(),
            oracle_map.keys().collect::<Vec<_>>(),
            "template sets differ"
        );
        for (k, ev) in &engine_map {
            let oev = &oracle_map[k];
            for (t, w) in ev {
                assert!(
                    (w - oev.get(t).copied().unwrap_or(0.0)).abs() < 1e-9,
                    "evidence mismatch for {k} {t:?}"
                );
            }
        }

        // templates and verb overlays are mutually sane
        for h in &engine_hlss {
            if let PartSlot::New(attrs) = &h.template.subject {
                assert!(!attrs.is_empty());
            }
            assert!(overlay_match(&h.template.verbs, &h.template.verbs, &agent.kb) > 0.99);
        }
    }
}

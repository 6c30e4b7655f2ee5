//! The agent engine: serial spike activities over the focus, time-driven
//! diffusion in between, and the per-tick HLS recomputation that feeds the
//! reasoning behaviors.
//!
//! Per-tick phase order is fixed: parse/execute SAs, decay, diffusion, HLS
//! recompute, mood-gated inference.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Config;
use crate::error::{Result, XapagyError};
use crate::hls::{Hls, PartSlot, PipelineCtx, Purpose, TemplateObject, ViTemplate, compute_hlss};
use crate::knowledge::{
    ConceptOverlay, ENERGY_FLOOR, KnowledgeBase, SideEffect, SymbolTable, VerbOverlay,
    overlay_add, overlay_match,
};
use crate::model::{
    Instance, InstanceId, ItemId, LinkKind, SceneId, VerbInstance, ViForm, ViId, ViObject,
};
use crate::parser::{
    Article, MacroRequest, ObjectReq, RefExpr, Request, ViRequest, parse,
};
use crate::reasoning::Mood;
use crate::shadow::{InstanceBody, Shadows, ViBody};
use crate::state::{Focus, Memory};
use crate::trace::{Origin, Trace};

/// Surprise bookkeeping for one observed VI, settled after the tick's
/// diffusion step.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PendingSurprise {
    vi: ViId,
    origin: Origin,
    expectedness: f64,
    pre_instance_shadows: BTreeMap<InstanceId, InstanceBody>,
    pre_vi_shadows: BTreeMap<ViId, ViBody>,
    /// (focus parts, support) of the positive continuation HLSs that were
    /// live before the SA.
    pre_continuations: Vec<(Vec<InstanceId>, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Agent {
    pub kb: KnowledgeBase,
    pub config: Config,
    pub memory: Memory,
    pub focus: Focus,
    pub shadows: Shadows,
    pub mood: Mood,
    pub trace: Trace,
    pub current_scene: SceneId,
    next_instance: u64,
    next_vi: u64,
    rng: ChaCha8Rng,
    last_quote_prefix: Option<(RefExpr, VerbOverlay, RefExpr)>,
    #[serde(skip)]
    hls_cache: Vec<Hls>,
    pending: Vec<PendingSurprise>,
}

impl Agent {
    pub fn new(kb: KnowledgeBase, config: Config) -> Result<Agent> {
        if kb.concept_id("scene").is_none() {
            return Err(XapagyError::Config(
                "domain knowledge must define the `scene` concept".into(),
            ));
        }
        let seed = config.seed as u64;
        let mut agent = Agent {
            kb,
            config,
            memory: Memory::new(),
            focus: Focus::new(),
            shadows: Shadows::new(),
            mood: Mood::story_following(),
            trace: Trace::new(),
            current_scene: InstanceId(0),
            next_instance: 0,
            next_vi: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_quote_prefix: None,
            hls_cache: Vec::new(),
            pending: Vec::new(),
        };
        agent.mood = Mood::preset("story_following", &agent.config)?;
        for (key, value) in agent.config.pairs() {
            agent
                .trace
                .emit(0, "config", vec![("key", json!(key)), ("value", json!(value))]);
        }
        let main = agent.create_scene("Main")?;
        agent.current_scene = main;
        Ok(agent)
    }

    pub fn tick(&self) -> u64 {
        self.focus.tick
    }

    fn scene_concept(&self) -> crate::knowledge::ConceptId {
        self.kb.concept_id("scene").unwrap()
    }

    fn pipeline_ctx(&self) -> PipelineCtx<'_> {
        PipelineCtx {
            kb: &self.kb,
            memory: &self.memory,
            focus: &self.focus,
            shadows: &self.shadows,
            config: &self.config,
            relaxation: self.mood.relaxation,
        }
    }

    pub fn hlss(&self) -> &[Hls] {
        &self.hls_cache
    }

    pub fn refresh_hlss(&mut self) {
        self.hls_cache = compute_hlss(&self.pipeline_ctx());
    }

    // ------------------------------------------------------------------
    // instance and scene creation (spike activities)

    fn alloc_instance(&mut self) -> InstanceId {
        let id = InstanceId(self.next_instance);
        self.next_instance += 1;
        id
    }

    pub fn create_instance(
        &mut self,
        attributes: ConceptOverlay,
        scene: SceneId,
        is_scene: bool,
        group_members: BTreeSet<InstanceId>,
    ) -> InstanceId {
        let id = self.alloc_instance();
        let instance = Instance {
            id,
            attributes,
            scene: if is_scene { id } else { scene },
            created_at: self.focus.tick,
            is_scene,
            is_group: !group_members.is_empty(),
            group_members,
        };
        self.memory.record_instance(instance);
        self.focus.insert(id.into());
        self.shadows
            .create_instance_shadow(id, InstanceBody::new(), self.config.shadow_cap);
        let label = self.render_instance_ref(id);
        self.trace.emit(
            self.focus.tick,
            "instance",
            vec![("id", json!(id.0)), ("label", json!(label))],
        );
        id
    }

    pub fn create_scene(&mut self, name: &str) -> Result<SceneId> {
        let mut attrs = ConceptOverlay::singleton(self.scene_concept(), 1.0);
        let name_id = self.kb.mint_name(name)?;
        overlay_add(&mut attrs, &ConceptOverlay::singleton(name_id, 1.0), 1.0, &self.kb)?;
        Ok(self.create_instance(attrs, InstanceId(0), true, BTreeSet::new()))
    }

    pub fn scene_name(&self, id: SceneId) -> Option<String> {
        let inst = self.memory.instances.get(&id)?;
        inst.attributes
            .members()
            .find_map(|c| self.kb.name_of_concept(c).strip_prefix("name_").map(str::to_string))
    }

    // ------------------------------------------------------------------
    // reference resolution

    fn words_overlay(&mut self, words: &[String], position: &str) -> Result<ConceptOverlay> {
        let mut overlay = ConceptOverlay::new();
        for w in words {
            let tpl = self.kb.lookup_concept_word(w, position)?;
            overlay_add(&mut overlay, &tpl, 1.0, &self.kb)?;
        }
        Ok(overlay)
    }

    /// How well an instance's attributes cover a reference overlay:
    /// weighted geometric mean over the reference concepts of the best
    /// overlap each finds among the attributes. Any uncovered concept
    /// (no overlapping attribute at all) disqualifies the candidate.
    fn reference_coverage(&self, overlay: &ConceptOverlay, attrs: &ConceptOverlay) -> f64 {
        let mass = overlay.mass();
        if mass <= 0.0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for (x, ex) in overlay.iter() {
            let best = attrs
                .iter()
                .map(|(y, _)| self.kb.overlap(x, y))
                .fold(0.0_f64, f64::max);
            if best <= 0.0 {
                return 0.0;
            }
            log_sum += ex * best.ln();
        }
        (log_sum / mass).exp()
    }

    /// Definite selection among candidates by attribute coverage x focus
    /// strength. Group instances are skipped: groups are referenced with
    /// the `+` syntax, never by a singular expression.
    fn select_instance(
        &mut self,
        overlay: &ConceptOverlay,
        candidates: &[InstanceId],
        describe: &str,
    ) -> Result<InstanceId> {
        let mut scored: Vec<(f64, f64, u64, InstanceId)> = Vec::new();
        for id in candidates {
            let inst = &self.memory.instances[id];
            if inst.is_group {
                continue;
            }
            let m = self.reference_coverage(overlay, &inst.attributes);
            let strength = self.focus.strength((*id).into());
            let score = m * strength;
            if score > 0.0 {
                scored.push((score, strength, inst.created_at, *id));
            }
        }
        if scored.is_empty() {
            return Err(XapagyError::NoCandidate { reference: describe.to_string() });
        }
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(b.1.partial_cmp(&a.1).unwrap())
                .then(b.2.cmp(&a.2))
                .then(b.3.cmp(&a.3))
        });
        if scored.len() > 1 && (scored[0].0 - scored[1].0).abs() < 1e-9 {
            self.trace.emit(
                self.focus.tick,
                "warning",
                vec![(
                    "message",
                    json!(format!(
                        "ambiguous reference `{describe}`: tie broken by strength/recency"
                    )),
                )],
            );
        }
        Ok(scored[0].3)
    }

    fn focus_instances_in_scene(&self, scene: SceneId) -> Vec<InstanceId> {
        self.focus
            .instance_strengths
            .keys()
            .filter(|i| {
                let inst = &self.memory.instances[i];
                !inst.is_scene && inst.scene == scene
            })
            .copied()
            .collect()
    }

    fn focus_scenes(&self) -> Vec<InstanceId> {
        self.focus
            .instance_strengths
            .keys()
            .filter(|i| self.memory.instances[i].is_scene)
            .copied()
            .collect()
    }

    /// Candidate set reached by following one relation infix backwards from
    /// an already-resolved target.
    fn relation_candidates(
        &mut self,
        rel_word: &str,
        target: InstanceId,
        position: &str,
    ) -> Result<Vec<InstanceId>> {
        if rel_word == "in" {
            return Ok(self.focus_instances_in_scene(target));
        }
        let verbs = self.kb.lookup_verb_word(rel_word, position)?;
        let kind = self.kb.relation_kind(&verbs).ok_or_else(|| XapagyError::Syntax {
            position: position.to_string(),
            message: format!("`{rel_word}` is not a relation verb"),
        })?;
        let mut out = BTreeSet::new();
        for vi_id in self.focus.vi_strengths.keys() {
            let vi = &self.memory.vis[vi_id];
            if vi.relation_kind.as_deref() != Some(kind.as_str()) {
                continue;
            }
            if let Some(obj) = vi.object_instance() {
                if vi.subject == target {
                    out.insert(obj);
                } else if obj == target {
                    out.insert(vi.subject);
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    fn resolve_atomic(
        &mut self,
        article: Article,
        words: &[String],
        candidates: Option<Vec<InstanceId>>,
        scene: SceneId,
        describe: &str,
        position: &str,
    ) -> Result<InstanceId> {
        let overlay = self.words_overlay(words, position)?;
        match article {
            Article::Indefinite => {
                if overlay.is_empty() {
                    return Err(XapagyError::Syntax {
                        position: position.to_string(),
                        message: "indefinite reference needs attributes".into(),
                    });
                }
                let is_scene = overlay.contains(self.scene_concept());
                Ok(self.create_instance(overlay, scene, is_scene, BTreeSet::new()))
            }
            Article::Definite | Article::None => {
                let cands = match candidates {
                    Some(c) => c,
                    None => {
                        if overlay.contains(self.scene_concept()) {
                            self.focus_scenes()
                        } else {
                            self.focus_instances_in_scene(scene)
                        }
                    }
                };
                self.select_instance(&overlay, &cands, describe)
            }
        }
    }

    /// Resolve a reference expression in a scene. `a/an` creates, `the`
    /// selects, chains walk relation VIs, groups find-or-create.
    pub fn resolve_ref(
        &mut self,
        r: &RefExpr,
        scene: SceneId,
        position: &str,
    ) -> Result<InstanceId> {
        let describe = r.describe();
        if r.is_group() {
            let mut members = BTreeSet::new();
            for member in &r.group {
                members.insert(self.resolve_ref(member, scene, position)?);
            }
            // reuse an existing group instance with exactly these members
            for id in self.focus.instance_strengths.keys() {
                let inst = &self.memory.instances[id];
                if inst.is_group && inst.group_members == members {
                    return Ok(*id);
                }
            }
            let mut attrs = ConceptOverlay::new();
            for m in &members {
                let a = self.memory.instances[m].attributes.clone();
                overlay_add(&mut attrs, &a, 1.0, &self.kb)?;
            }
            return Ok(self.create_instance(attrs, scene, false, members));
        }
        if r.chain.is_empty() {
            return self.resolve_atomic(r.article, &r.attributes, None, scene, &describe, position);
        }
        // walk the chain from its tail: each hop constrains the candidates
        // for the element before it
        let (last_rel, last_ref) = r.chain.last().unwrap();
        if r.chain.iter().any(|(_, t)| t.article == Article::Indefinite) {
            return Err(XapagyError::Syntax {
                position: position.to_string(),
                message: "relation-chain tails must be definite".into(),
            });
        }
        let mut target =
            self.resolve_atomic(last_ref.article, &last_ref.attributes, None, scene, &describe, position)?;
        let mut rel = last_rel.clone();
        for (next_rel, elem) in r.chain.iter().rev().skip(1) {
            let cands = self.relation_candidates(&rel, target, position)?;
            target = self.resolve_atomic(
                elem.article,
                &elem.attributes,
                Some(cands),
                scene,
                &describe,
                position,
            )?;
            rel = next_rel.clone();
        }
        let cands = self.relation_candidates(&rel, target, position)?;
        self.resolve_atomic(r.article, &r.attributes, Some(cands), scene, &describe, position)
    }

    /// Resolve a quote's scene reference: an existing scene, or a freshly
    /// minted one (orders, plans and stories routinely open new scenes).
    fn resolve_scene_ref(&mut self, r: &RefExpr, position: &str) -> Result<SceneId> {
        let overlay = self.words_overlay(&r.attributes, position)?;
        let scenes = self.focus_scenes();
        let mut best: Option<(f64, InstanceId)> = None;
        for id in scenes {
            let m = overlay_match(&overlay, &self.memory.instances[&id].attributes, &self.kb);
            let score = m * self.focus.strength(id.into());
            if score > 0.0 && best.map_or(true, |(b, _)| score > b) {
                best = Some((score, id));
            }
        }
        if let Some((_, id)) = best {
            return Ok(id);
        }
        // mint: quoted name becomes the scene's name
        let name = r
            .attributes
            .iter()
            .find(|w| w.starts_with('"'))
            .map(|w| w[1..w.len() - 1].to_string())
            .ok_or_else(|| XapagyError::NoCandidate { reference: r.describe() })?;
        self.create_scene(&name)
    }

    // ------------------------------------------------------------------
    // VI instantiation

    fn effective_participants(&self, vi: &VerbInstance) -> BTreeSet<InstanceId> {
        let mut out = BTreeSet::new();
        for p in vi.participants() {
            out.insert(p);
            let inst = &self.memory.instances[&p];
            for m in &inst.group_members {
                out.insert(*m);
            }
        }
        out
    }

    fn share_participant(&self, a: &VerbInstance, b: &VerbInstance) -> bool {
        let ea = self.effective_participants(a);
        let eb = self.effective_participants(b);
        let mut closure_a = BTreeSet::new();
        for x in &ea {
            closure_a.extend(self.memory.identity_closure(*x));
        }
        eb.iter().any(|y| closure_a.contains(y))
    }

    fn alloc_vi(&mut self) -> ViId {
        let id = ViId(self.next_vi);
        self.next_vi += 1;
        id
    }

    /// Create and record a VI, apply link side effects, insert into focus,
    /// and open its shadow.
    #[allow(clippy::too_many_arguments)]
    pub fn create_vi(
        &mut self,
        form: ViForm,
        verbs: VerbOverlay,
        subject: InstanceId,
        object: ViObject,
        scene: SceneId,
        is_question: bool,
        seed: ViBody,
        origin: Origin,
    ) -> ViId {
        let is_action = self.kb.has_effect(&verbs, |e| matches!(e, SideEffect::Action));
        let is_summary = self.kb.has_effect(&verbs, |e| matches!(e, SideEffect::InSummaryMarker));
        let scene_relation =
            self.kb.has_effect(&verbs, |e| matches!(e, SideEffect::CreatesSceneRelation));
        let relation_kind = if scene_relation {
            verbs.dominant().map(|v| format!("scene_{}", self.kb.name_of_verb(v)))
        } else {
            self.kb.relation_kind(&verbs)
        };
        let id = self.alloc_vi();
        let vi = VerbInstance {
            id,
            form,
            verbs,
            subject,
            object,
            scene,
            created_at: self.focus.tick,
            is_question,
            relation_kind: relation_kind.clone(),
            is_action,
            is_summary,
        };
        let participants = vi.participants();
        self.memory.record_vi(vi);
        self.focus.insert(id.into());
        // participation reinforces the instances and keeps the scene alive
        for p in &participants {
            if self.focus.contains((*p).into()) {
                self.focus.insert((*p).into());
            }
        }
        if self.focus.contains(scene.into()) {
            self.focus.insert(scene.into());
        }

        let new_vi = self.memory.vis[&id].clone();
        let focus_vis: Vec<ViId> =
            self.focus.vi_strengths.keys().filter(|v| **v != id).copied().collect();

        // coincidence: same-tick VIs
        for other in &focus_vis {
            if self.memory.vis[other].created_at == self.focus.tick {
                self.memory.record_link(LinkKind::Coincidence, (*other).into(), id.into(), 1.0);
            }
        }
        // succession + push-out for action VIs
        if is_action {
            for other in &focus_vis {
                let o = self.memory.vis[other].clone();
                if o.is_action && self.share_participant(&o, &new_vi) {
                    let w = self.focus.strength((*other).into()).clamp(f64::MIN_POSITIVE, 1.0);
                    self.memory.record_link(LinkKind::Succession, (*other).into(), id.into(), w);
                    self.focus.scale((*other).into(), self.config.focus_push_out);
                }
            }
        }
        // context from focus relation VIs over shared participants
        for other in &focus_vis {
            let o = self.memory.vis[other].clone();
            if o.relation_kind.is_some() && self.share_participant(&o, &new_vi) {
                let w = self.focus.strength((*other).into()).clamp(f64::MIN_POSITIVE, 1.0);
                self.memory.record_link(LinkKind::Context, (*other).into(), id.into(), w);
            }
        }
        // an in-summary VI summarizes the focus actions it covers
        if is_summary {
            for other in &focus_vis {
                let o = self.memory.vis[other].clone();
                if o.is_action && self.share_participant(&o, &new_vi) {
                    let w = self.focus.strength((*other).into()).clamp(f64::MIN_POSITIVE, 1.0);
                    self.memory.record_link(LinkKind::Summarization, id.into(), (*other).into(), w);
                }
            }
        }
        // question/answer pairing within the policy window
        if !is_question {
            let window = self.config.focus_qa_window as u64;
            for other in &focus_vis {
                let o = self.memory.vis[other].clone();
                if o.is_question
                    && self.focus.tick.saturating_sub(o.created_at) <= window
                    && self.share_participant(&o, &new_vi)
                {
                    let w = self.focus.strength((*other).into()).clamp(f64::MIN_POSITIVE, 1.0);
                    self.memory.record_link(
                        LinkKind::QuestionAnswer,
                        (*other).into(),
                        id.into(),
                        w,
                    );
                }
            }
        }
        if relation_kind.as_deref() == Some("identity") {
            if let ViObject::Instance(obj) = new_vi.object {
                self.memory.record_link(LinkKind::Identity, subject.into(), obj.into(), 1.0);
            }
        }
        if scene_relation {
            // the newly created scene (the subject) becomes current
            self.current_scene = subject;
        }
        self.shadows.create_vi_shadow(id, seed, self.config.shadow_cap);
        let text = self.render_vi(id);
        self.trace.emit(
            self.focus.tick,
            "vi",
            vec![
                ("id", json!(id.0)),
                ("origin", json!(origin.name())),
                ("text", json!(text)),
            ],
        );
        id
    }

    /// `changes`: a fresh instance with the impacted attribute set, identity
    /// linked; the old instance is parked at the expiry threshold.
    pub fn change_instance(
        &mut self,
        old: InstanceId,
        new_attrs: &ConceptOverlay,
    ) -> Result<InstanceId> {
        let old_inst = self.memory.instances[&old].clone();
        if old_inst.is_scene {
            return Err(XapagyError::SceneChange);
        }
        let mut attrs = old_inst.attributes.clone();
        overlay_add(&mut attrs, new_attrs, 1.0, &self.kb)?;
        let id = self.create_instance(attrs, old_inst.scene, false, old_inst.group_members);
        self.memory.record_link(LinkKind::Identity, old.into(), id.into(), 1.0);
        self.focus.set_strength(old.into(), self.config.focus_expiry);
        Ok(id)
    }

    fn check_is_a_compatible(
        &self,
        subject: InstanceId,
        addition: &ConceptOverlay,
    ) -> Result<()> {
        let attrs = &self.memory.instances[&subject].attributes;
        for (p, e) in attrs.iter() {
            if e <= ENERGY_FLOOR {
                continue;
            }
            let mut factor = 1.0;
            for (m, e_add) in addition.iter() {
                factor += self.kb.impact(m, p) * e_add;
            }
            if e * factor <= ENERGY_FLOOR {
                return Err(XapagyError::IncompatibleAttribute {
                    attribute: self.kb.name_of_concept(p).to_string(),
                });
            }
        }
        Ok(())
    }

    /// Execute one resolved VI request as a spike activity.
    pub fn execute_vi_request(
        &mut self,
        req: &ViRequest,
        scene_override: Option<SceneId>,
        origin: Origin,
        position: &str,
    ) -> Result<ViId> {
        let scene = scene_override.unwrap_or(self.current_scene);
        let subject = self.resolve_ref(&req.subject, scene, position)?;
        let effects_is_a = self.kb.has_effect(&req.verbs, |e| matches!(e, SideEffect::IsA));
        let effects_changes = self.kb.has_effect(&req.verbs, |e| matches!(e, SideEffect::Changes));
        match (&req.form, &req.object) {
            (ViForm::SV, ObjectReq::None) => Ok(self.create_vi(
                ViForm::SV,
                req.verbs.clone(),
                subject,
                ViObject::None,
                scene,
                req.is_question,
                ViBody::new(),
                origin,
            )),
            (ViForm::SVO, ObjectReq::Ref(obj_ref)) => {
                let object = self.resolve_ref(obj_ref, scene, position)?;
                Ok(self.create_vi(
                    ViForm::SVO,
                    req.verbs.clone(),
                    subject,
                    ViObject::Instance(object),
                    scene,
                    req.is_question,
                    ViBody::new(),
                    origin,
                ))
            }
            (ViForm::SVAdj, ObjectReq::Adjective(overlay)) => {
                if effects_is_a {
                    self.check_is_a_compatible(subject, overlay)?;
                }
                let id = self.create_vi(
                    ViForm::SVAdj,
                    req.verbs.clone(),
                    subject,
                    ViObject::Adjective(overlay.clone()),
                    scene,
                    req.is_question,
                    ViBody::new(),
                    origin,
                );
                if effects_changes {
                    self.change_instance(subject, overlay)?;
                } else if effects_is_a {
                    let mut attrs = self.memory.instances[&subject].attributes.clone();
                    overlay_add(&mut attrs, overlay, 1.0, &self.kb)?;
                    self.memory.instances.get_mut(&subject).unwrap().attributes = attrs;
                    self.shadows.invalidate_instance_matches(subject);
                }
                Ok(id)
            }
            (ViForm::Quote, ObjectReq::Inquit(inquit)) => {
                let scene_ref = req.scene_ref.as_ref().ok_or_else(|| XapagyError::Syntax {
                    position: position.to_string(),
                    message: "quote without scene reference".into(),
                })?;
                let quoted_scene = self.resolve_scene_ref(scene_ref, position)?;
                let inquit_id =
                    self.execute_vi_request(inquit, Some(quoted_scene), origin, position)?;
                let id = self.create_vi(
                    ViForm::Quote,
                    req.verbs.clone(),
                    subject,
                    ViObject::Inquit(inquit_id),
                    scene,
                    req.is_question,
                    ViBody::new(),
                    origin,
                );
                self.last_quote_prefix =
                    Some((req.subject.clone(), req.verbs.clone(), scene_ref.clone()));
                Ok(id)
            }
            _ => Err(XapagyError::Syntax {
                position: position.to_string(),
                message: "request form does not match populated fields".into(),
            }),
        }
    }

    // ------------------------------------------------------------------
    // observation: expectedness, shadow seeding and surprise bookkeeping

    fn template_matches_vi(
        &self,
        template: &ViTemplate,
        vi: &VerbInstance,
        created_watermark: u64,
    ) -> bool {
        if template.form != vi.form {
            return false;
        }
        let theta = self.config.hls_theta_compat / self.mood.relaxation.max(1.0);
        if overlay_match(&template.verbs, &vi.verbs, &self.kb) < theta {
            return false;
        }
        let slot_matches = |slot: &PartSlot, part: InstanceId| match slot {
            PartSlot::Focus(s) => *s == part,
            PartSlot::New(attrs) => {
                part.0 >= created_watermark
                    && overlay_match(attrs, &self.memory.instances[&part].attributes, &self.kb)
                        >= theta
            }
        };
        if !slot_matches(&template.subject, vi.subject) {
            return false;
        }
        match (&template.object, &vi.object) {
            (TemplateObject::None, ViObject::None) => true,
            (TemplateObject::Part(slot), ViObject::Instance(o)) => slot_matches(slot, *o),
            (TemplateObject::Adjective(a), ViObject::Adjective(b)) => {
                overlay_match(a, b, &self.kb) >= theta
            }
            _ => false,
        }
    }

    fn template_focus_parts(template: &ViTemplate) -> Vec<InstanceId> {
        let mut parts = Vec::new();
        if let PartSlot::Focus(s) = &template.subject {
            parts.push(*s);
        }
        if let TemplateObject::Part(PartSlot::Focus(o)) = &template.object {
            parts.push(*o);
        }
        parts
    }

    /// Observe a narrated VI request: track expectedness against the live
    /// continuation HLSs, instantiate, seed the shadow from the predicting
    /// HLS, and queue the surprise measurement.
    pub fn observe(&mut self, req: &ViRequest, position: &str) -> Result<ViId> {
        let pre_instance_shadows = self.shadows.instances.clone();
        let pre_vi_shadows = self.shadows.vis.clone();
        let continuations: Vec<(usize, f64)> = self
            .hls_cache
            .iter()
            .enumerate()
            .filter(|(_, h)| h.matches_focus.is_none())
            .map(|(i, h)| (i, h.support(Purpose::Continuation, &self.config)))
            .filter(|(_, s)| *s > 0.0)
            .collect();
        let pre_continuations: Vec<(Vec<InstanceId>, f64)> = continuations
            .iter()
            .map(|(i, s)| (Self::template_focus_parts(&self.hls_cache[*i].template), *s))
            .collect();
        let watermark = self.next_instance;
        let vi_id = self.execute_vi_request(req, None, Origin::Narrated, position)?;
        let vi = self.memory.vis[&vi_id].clone();
        let total: f64 = continuations.iter().map(|(_, s)| s).sum();
        let mut expectedness = 0.0;
        let mut best: Option<(f64, usize)> = None;
        for (i, s) in &continuations {
            if self.template_matches_vi(&self.hls_cache[*i].template, &vi, watermark)
                && best.map_or(true, |(b, _)| *s > b)
            {
                best = Some((*s, *i));
            }
        }
        if let Some((s, i)) = best {
            if total > 0.0 {
                expectedness = (s / total).clamp(0.0, 1.0);
            }
            // the predicting HLS becomes the shadow of the new VI
            let seed = self.hls_cache[i].seed_body(Purpose::Continuation, &self.config);
            if let Some(body) = self.shadows.vis.get_mut(&vi_id) {
                let mut seeded = seed;
                seeded.remove(&vi_id);
                let mass: f64 = seeded.values().sum();
                if mass > self.config.shadow_cap {
                    let scale = self.config.shadow_cap / mass;
                    for e in seeded.values_mut() {
                        *e *= scale;
                    }
                }
                *body = seeded;
            }
        }
        self.pending.push(PendingSurprise {
            vi: vi_id,
            origin: Origin::Narrated,
            expectedness,
            pre_instance_shadows,
            pre_vi_shadows,
            pre_continuations,
        });
        Ok(vi_id)
    }

    fn settle_surprises(&mut self) {
        let pending = std::mem::take(&mut self.pending);
        for p in pending {
            let mut l1 = 0.0;
            for (head, pre_body) in &p.pre_instance_shadows {
                let empty = InstanceBody::new();
                let now = self.shadows.instances.get(head).unwrap_or(&empty);
                let keys: BTreeSet<InstanceId> =
                    pre_body.keys().chain(now.keys()).copied().collect();
                for k in keys {
                    l1 += (pre_body.get(&k).copied().unwrap_or(0.0)
                        - now.get(&k).copied().unwrap_or(0.0))
                    .abs();
                }
            }
            for (head, pre_body) in &p.pre_vi_shadows {
                let empty = ViBody::new();
                let now = self.shadows.vis.get(head).unwrap_or(&empty);
                let keys: BTreeSet<ViId> = pre_body.keys().chain(now.keys()).copied().collect();
                for k in keys {
                    l1 += (pre_body.get(&k).copied().unwrap_or(0.0)
                        - now.get(&k).copied().unwrap_or(0.0))
                    .abs();
                }
            }
            let invalidated: f64 = p
                .pre_continuations
                .iter()
                .filter(|(parts, _)| {
                    parts.iter().any(|i| !self.focus.contains((*i).into()))
                })
                .map(|(_, s)| s)
                .sum();
            // perturbation explained by a confirmed prediction is not
            // surprising, so the L1 term is discounted by expectedness
            let unexpected = (1.0 - p.expectedness).clamp(0.0, 1.0);
            let surprise = (unexpected * l1 + invalidated).max(0.0);
            self.trace.emit(
                self.focus.tick,
                "surprise",
                vec![
                    ("vi", json!(p.vi.0)),
                    ("origin", json!(p.origin.name())),
                    ("expectedness", json!(p.expectedness)),
                    ("surprise", json!(surprise)),
                ],
            );
        }
    }

    // ------------------------------------------------------------------
    // macros

    fn scene_ref_expr(&self, scene: SceneId) -> Result<RefExpr> {
        let name = self.scene_name(scene).ok_or_else(|| XapagyError::NoCandidate {
            reference: format!("scene #{}", scene.0),
        })?;
        Ok(RefExpr::attr(
            Article::Definite,
            vec!["scene".to_string(), format!("\"{name}\"")],
        ))
    }

    /// Expand a macro into the equivalent ordinary VI requests.
    pub fn expand_macro(&mut self, req: &MacroRequest, position: &str) -> Result<Vec<ViRequest>> {
        match req {
            MacroRequest::QuoteContinuation { inquit } => {
                let (subject, verbs, scene_ref) =
                    self.last_quote_prefix.clone().ok_or(XapagyError::NoQuotePrefix)?;
                Ok(vec![ViRequest {
                    form: ViForm::Quote,
                    subject,
                    verbs,
                    object: ObjectReq::Inquit(inquit.clone()),
                    scene_ref: Some(scene_ref),
                    is_question: inquit.is_question,
                }])
            }
            MacroRequest::NewSceneCurrent { name, relation, members } => {
                let prev = self.current_scene;
                let prev_ref = self.scene_ref_expr(prev)?;
                let relation_verbs = self.kb.lookup_verb_word(relation, position)?;
                if !self
                    .kb
                    .has_effect(&relation_verbs, |e| matches!(e, SideEffect::CreatesSceneRelation))
                {
                    return Err(XapagyError::Syntax {
                        position: position.to_string(),
                        message: format!("`{relation}` is not a scene-relation verb"),
                    });
                }
                let mut out = Vec::new();
                out.push(ViRequest {
                    form: ViForm::SVO,
                    subject: RefExpr::attr(
                        Article::Indefinite,
                        vec!["scene".to_string(), format!("\"{name}\"")],
                    ),
                    verbs: relation_verbs,
                    object: ObjectReq::Ref(prev_ref.clone()),
                    scene_ref: None,
                    is_question: false,
                });
                let identity = self.kb.lookup_verb_word("is-identical", position)?;
                let exists = self.kb.lookup_verb_word("exists", position)?;
                for member in members {
                    let mut attrs = member.attributes.clone();
                    attrs.push(format!("\"{}\"", member.label));
                    let subject = RefExpr::attr(Article::Indefinite, attrs);
                    match &member.identity_target {
                        Some(target) => {
                            let mut target = target.clone();
                            target.chain.push(("in".to_string(), prev_ref.clone()));
                            out.push(ViRequest {
                                form: ViForm::SVO,
                                subject,
                                verbs: identity.clone(),
                                object: ObjectReq::Ref(target),
                                scene_ref: None,
                                is_question: false,
                            });
                        }
                        None => out.push(ViRequest {
                            form: ViForm::SV,
                            subject,
                            verbs: exists.clone(),
                            object: ObjectReq::None,
                            scene_ref: None,
                            is_question: false,
                        }),
                    }
                }
                Ok(out)
            }
        }
    }

    // ------------------------------------------------------------------
    // tick driver

    /// Close the current tick: decay, diffusion, surprise settlement, HLS
    /// recomputation and mood-gated inference.
    pub fn end_tick(&mut self) {
        let expired = self.focus.decay_step(1.0, &self.config, &mut self.memory);
        for i in expired.instances {
            self.shadows.drop_head(ItemId::Instance(i));
        }
        for v in expired.vis {
            self.shadows.drop_head(ItemId::Vi(v));
        }
        self.shadows.diffusion_step(
            1.0,
            &self.kb,
            &self.memory,
            &self.focus,
            &self.config,
            self.mood.relaxation,
        );
        self.settle_surprises();
        self.refresh_hlss();
        if self.mood.budget > 0.0 {
            self.run_inference();
        }
        self.focus.tick += 1;
    }

    /// Execute one full statement (including macro expansion), then close
    /// the tick.
    pub fn step_statement(&mut self, text: &str, position: &str) -> Result<()> {
        let request = parse(text, &mut self.kb, position)?;
        match request {
            Request::Vi(vi) => {
                self.observe(&vi, position)?;
            }
            Request::Macro(m) => {
                let expanded = self.expand_macro(&m, position)?;
                for vi in &expanded {
                    self.observe(vi, position)?;
                }
            }
        }
        self.end_tick();
        Ok(())
    }

    /// An elapsed-time tick with no statement.
    pub fn empty_tick(&mut self) {
        self.end_tick();
    }

    /// Run a story text: one statement per line, `#` comments, blank lines
    /// are elapsed-time ticks, a trailing `//` joins the next line.
    pub fn run_text(&mut self, text: &str) -> Result<()> {
        let mut pending: Option<(String, usize)> = None;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim().to_string();
            if let Some((mut acc, start)) = pending.take() {
                acc.push(' ');
                acc.push_str(&line);
                if acc.trim_end().ends_with("//") {
                    pending = Some((acc, start));
                } else {
                    self.step_statement(&acc, &format!("line {start}"))?;
                }
                continue;
            }
            if line.is_empty() {
                if !raw.trim().is_empty() {
                    continue; // comment-only line, no tick
                }
                self.empty_tick();
                continue;
            }
            if line.trim_end().ends_with("//") {
                pending = Some((line, lineno));
                continue;
            }
            self.step_statement(&line, &format!("line {lineno}"))?;
        }
        if let Some((_acc, start)) = pending {
            return Err(XapagyError::Syntax {
                position: format!("line {start}"),
                message: "unterminated quote continuation".into(),
            });
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // snapshots

    pub fn save_snapshot(&self) -> String {
        serde_json::to_string(self).expect("agent serialization")
    }

    pub fn load_snapshot(text: &str) -> Result<Agent> {
        let mut agent: Agent =
            serde_json::from_str(text).map_err(|e| XapagyError::Snapshot(e.to_string()))?;
        agent.refresh_hlss();
        Ok(agent)
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

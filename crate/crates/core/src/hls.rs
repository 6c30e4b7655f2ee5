//! Headless shadows: SVR collection, reverse-shadowing interpretation into
//! SVRIs, and aggregation into purpose-scored HLS templates.
//!
//! The whole pipeline is pure over a state snapshot and recomputed each tick.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::knowledge::{ConceptOverlay, KnowledgeBase, VerbOverlay, overlay_match};
use crate::model::{InstanceId, LinkKind, SceneId, VerbInstance, ViForm, ViId, ViObject};
use crate::shadow::{Shadows, ViBody};
use crate::state::{Focus, Memory};

/// Relation of a `vi_source` to its `vi_root`: nine values, all but
/// IN_SHADOW arranged in opposing pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SvrType {
    InShadow,
    Predecessor,
    Successor,
    Summary,
    Elaboration,
    Answer,
    Question,
    Context,
    ContextImplication,
}

impl SvrType {
    pub fn opposite(self) -> SvrType {
        match self {
            SvrType::InShadow => SvrType::InShadow,
            SvrType::Predecessor => SvrType::Successor,
            SvrType::Successor => SvrType::Predecessor,
            SvrType::Summary => SvrType::Elaboration,
            SvrType::Elaboration => SvrType::Summary,
            SvrType::Answer => SvrType::Question,
            SvrType::Question => SvrType::Answer,
            SvrType::Context => SvrType::ContextImplication,
            SvrType::ContextImplication => SvrType::Context,
        }
    }

    /// SVR type of a link traversed from root to source.
    pub fn from_link(kind: LinkKind, forward: bool) -> Option<SvrType> {
        let t = match kind {
            LinkKind::Succession => SvrType::Successor,
            LinkKind::Summarization => SvrType::Elaboration,
            LinkKind::QuestionAnswer => SvrType::Answer,
            LinkKind::Context => SvrType::ContextImplication,
            LinkKind::Coincidence | LinkKind::Identity => return None,
        };
        Some(if forward { t } else { t.opposite() })
    }

    pub fn name(self) -> &'static str {
        match self {
            SvrType::InShadow => "IN_SHADOW",
            SvrType::Predecessor => "PREDECESSOR",
            SvrType::Successor => "SUCCESSOR",
            SvrType::Summary => "SUMMARY",
            SvrType::Elaboration => "ELABORATION",
            SvrType::Answer => "ANSWER",
            SvrType::Question => "QUESTION",
            SvrType::Context => "CONTEXT",
            SvrType::ContextImplication => "CONTEXT_IMPLICATION",
        }
    }
}

/// What an HLS is being scored for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Purpose {
    Continuation,
    MissingAction,
    MissingRelation,
    Summarization,
}

impl Purpose {
    pub fn parse(text: &str) -> Option<Purpose> {
        Some(match text.to_ascii_uppercase().as_str() {
            "CONTINUATION" => Purpose::Continuation,
            "MISSING_ACTION" => Purpose::MissingAction,
            "MISSING_RELATION" => Purpose::MissingRelation,
            "SUMMARIZATION" => Purpose::Summarization,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Purpose::Continuation => "CONTINUATION",
            Purpose::MissingAction => "MISSING_ACTION",
            Purpose::MissingRelation => "MISSING_RELATION",
            Purpose::Summarization => "SUMMARIZATION",
        }
    }
}

/// Evidence weight of one SVR type for one purpose.
pub fn evidence_sign(config: &Config, purpose: Purpose, t: SvrType) -> f64 {
    use Purpose::*;
    use SvrType::*;
    match (purpose, t) {
        (Continuation, Successor) => config.support_continuation_successor,
        (Continuation, ContextImplication) => config.support_continuation_context_implication,
        (Continuation, Elaboration) => config.support_continuation_elaboration,
        (Continuation, Predecessor) => config.support_continuation_predecessor,
        (Continuation, InShadow) => config.support_continuation_in_shadow,
        (MissingAction, Predecessor) => config.support_missing_action_predecessor,
        (MissingAction, ContextImplication) => config.support_missing_action_context_implication,
        (MissingAction, InShadow) => config.support_missing_action_in_shadow,
        (MissingAction, Successor) => config.support_missing_action_successor,
        (MissingRelation, Context) => config.support_missing_relation_context,
        (MissingRelation, InShadow) => config.support_missing_relation_in_shadow,
        (Summarization, Summary) => config.support_summarization_summary,
        (Summarization, InShadow) => config.support_summarization_in_shadow,
        _ => 0.0,
    }
}

/// The quadruplet (focus VI, shadow root VI, related source VI, type).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svr {
    pub focus_vi: ViId,
    pub vi_root: ViId,
    pub vi_source: ViId,
    pub svr_type: SvrType,
    pub energy: f64,
}

/// A template part: an in-focus instance or a to-be-created one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PartSlot {
    Focus(InstanceId),
    New(ConceptOverlay),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TemplateObject {
    None,
    Part(PartSlot),
    Adjective(ConceptOverlay),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViTemplate {
    pub form: ViForm,
    pub verbs: VerbOverlay,
    pub subject: PartSlot,
    pub object: TemplateObject,
    pub scene: SceneId,
}

/// An interpreted SVR: a focus-level template with a likelihood weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svri {
    pub svr: Svr,
    pub template: ViTemplate,
    pub weight: f64,
}

/// A VI template plus aggregated typed evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hls {
    pub template: ViTemplate,
    pub evidence: BTreeMap<SvrType, f64>,
    pub supporters: Vec<(ViId, SvrType, f64)>,
    /// Focus VI this template re-describes, if any (used only for
    /// expectation confirmation, never for internal instantiation).
    pub matches_focus: Option<ViId>,
}

impl Hls {
    pub fn support(&self, purpose: Purpose, config: &Config) -> f64 {
        self.evidence
            .iter()
            .map(|(t, w)| evidence_sign(config, purpose, *t) * w)
            .sum()
    }

    /// Seed body for the shadow of a VI instantiated from this HLS:
    /// the sources of the SVRIs contributing positively for the purpose.
    pub fn seed_body(&self, purpose: Purpose, config: &Config) -> ViBody {
        let mut body = ViBody::new();
        for (source, t, w) in &self.supporters {
            if evidence_sign(config, purpose, *t) > 0.0 {
                *body.entry(*source).or_insert(0.0) += w;
            }
        }
        body
    }
}

/// Read-only view over everything the pipeline needs.
pub struct PipelineCtx<'a> {
    pub kb: &'a KnowledgeBase,
    pub memory: &'a Memory,
    pub focus: &'a Focus,
    pub shadows: &'a Shadows,
    pub config: &'a Config,
    /// Mood relaxation; widens the compatibility threshold at > 1.
    pub relaxation: f64,
}

impl<'a> PipelineCtx<'a> {
    pub fn theta(&self) -> f64 {
        self.config.hls_theta_compat / self.relaxation.max(1.0)
    }
}

/// Enumerate all SVRs: per focus VI, per shadow body VI, the IN_SHADOW
/// self-pair plus one SVR per recorded link of the root.
pub fn collect_svrs(ctx: &PipelineCtx) -> Vec<Svr> {
    let mut out = Vec::new();
    let mut push = |svr: Svr| {
        if svr.energy >= ctx.config.hls_epsilon_svr {
            out.push(svr);
        }
    };
    for (focus_vi, body) in &ctx.shadows.vis {
        for (root, energy) in body {
            push(Svr {
                focus_vi: *focus_vi,
                vi_root: *root,
                vi_source: *root,
                svr_type: SvrType::InShadow,
                energy: *energy,
            });
            for (kind, to, weight) in ctx.memory.vi_links_out(*root) {
                if let Some(t) = SvrType::from_link(*kind, true) {
                    push(Svr {
                        focus_vi: *focus_vi,
                        vi_root: *root,
                        vi_source: *to,
                        svr_type: t,
                        energy: energy * weight,
                    });
                }
            }
            for (kind, from, weight) in ctx.memory.vi_links_in(*root) {
                if let Some(t) = SvrType::from_link(*kind, false) {
                    push(Svr {
                        focus_vi: *focus_vi,
                        vi_root: *root,
                        vi_source: *from,
                        svr_type: t,
                        energy: energy * weight,
                    });
                }
            }
        }
    }
    out
}

/// Candidate focus-level readings of one memory instance part.
fn part_candidates(
    ctx: &PipelineCtx,
    part: InstanceId,
    root: &VerbInstance,
    focus_vi: &VerbInstance,
) -> Vec<(PartSlot, f64)> {
    // a part aligned with the root maps directly onto the focus VI's part
    if part == root.subject {
        return vec![(PartSlot::Focus(focus_vi.subject), 1.0)];
    }
    if Some(part) == root.object_instance() {
        if let Some(fo) = focus_vi.object_instance() {
            return vec![(PartSlot::Focus(fo), 1.0)];
        }
    }
    // reverse shadowing: shadow heads holding this part, by relative share
    let shares = ctx.shadows.reverse_instance_shadow(part);
    let mut out: Vec<(PartSlot, f64)> = Vec::new();
    let mut max_share = 0.0f64;
    for (head, share) in shares {
        max_share = max_share.max(share);
        out.push((PartSlot::Focus(head), share));
    }
    let attrs = ctx.memory.instances[&part].attributes.clone();
    let new_share = (1.0 - max_share).max(ctx.config.hls_new_floor);
    out.push((PartSlot::New(attrs), new_share));
    out
}

/// Interpret one SVR into weighted focus-level templates.
pub fn interpret(ctx: &PipelineCtx, svr: &Svr) -> Vec<Svri> {
    let source = &ctx.memory.vis[&svr.vi_source];
    if source.form == ViForm::Quote {
        return Vec::new();
    }
    let root = &ctx.memory.vis[&svr.vi_root];
    let focus_vi = &ctx.memory.vis[&svr.focus_vi];
    let subject_candidates = part_candidates(ctx, source.subject, root, focus_vi);
    let object_candidates: Vec<(TemplateObject, f64)> = match &source.object {
        ViObject::None => vec![(TemplateObject::None, 1.0)],
        ViObject::Adjective(o) => vec![(TemplateObject::Adjective(o.clone()), 1.0)],
        ViObject::Instance(o) => part_candidates(ctx, *o, root, focus_vi)
            .into_iter()
            .map(|(slot, w)| (TemplateObject::Part(slot), w))
            .collect(),
        ViObject::Inquit(_) => return Vec::new(),
    };
    let mut out = Vec::new();
    for (subj, ws) in &subject_candidates {
        for (obj, wo) in &object_candidates {
            let weight = svr.energy * ws * wo;
            if weight < ctx.config.hls_epsilon_svr {
                continue;
            }
            out.push(Svri {
                svr: svr.clone(),
                template: ViTemplate {
                    form: source.form,
                    verbs: source.verbs.clone(),
                    subject: subj.clone(),
                    object: obj.clone(),
                    scene: focus_vi.scene,
                },
                weight,
            });
        }
    }
    out
}

fn slots_compatible(a: &PartSlot, b: &PartSlot, ctx: &PipelineCtx) -> bool {
    match (a, b) {
        (PartSlot::Focus(x), PartSlot::Focus(y)) => x == y,
        (PartSlot::New(x), PartSlot::New(y)) => overlay_match(x, y, ctx.kb) >= ctx.theta(),
        _ => false,
    }
}

fn objects_compatible(a: &TemplateObject, b: &TemplateObject, ctx: &PipelineCtx) -> bool {
    match (a, b) {
        (TemplateObject::None, TemplateObject::None) => true,
        (TemplateObject::Part(x), TemplateObject::Part(y)) => slots_compatible(x, y, ctx),
        (TemplateObject::Adjective(x), TemplateObject::Adjective(y)) => {
            overlay_match(x, y, ctx.kb) >= ctx.theta()
        }
        _ => false,
    }
}

pub fn templates_compatible(a: &ViTemplate, b: &ViTemplate, ctx: &PipelineCtx) -> bool {
    a.form == b.form
        && slots_compatible(&a.subject, &b.subject, ctx)
        && objects_compatible(&a.object, &b.object, ctx)
        && overlay_match(&a.verbs, &b.verbs, ctx.kb) >= ctx.theta()
}

/// Does a template re-describe an existing focus VI?
fn find_matching_focus_vi(ctx: &PipelineCtx, template: &ViTemplate) -> Option<ViId> {
    for vi_id in ctx.focus.vi_strengths.keys() {
        let vi = &ctx.memory.vis[vi_id];
        if vi.form != template.form {
            continue;
        }
        let subject_ok = matches!(template.subject, PartSlot::Focus(s) if s == vi.subject);
        if !subject_ok {
            continue;
        }
        let object_ok = match (&template.object, &vi.object) {
            (TemplateObject::None, ViObject::None) => true,
            (TemplateObject::Part(PartSlot::Focus(o)), ViObject::Instance(vo)) => o == vo,
            (TemplateObject::Adjective(a), ViObject::Adjective(b)) => {
                overlay_match(a, b, ctx.kb) >= ctx.theta()
            }
            _ => false,
        };
        if object_ok && overlay_match(&template.verbs, &vi.verbs, ctx.kb) >= ctx.theta() {
            return Some(*vi_id);
        }
    }
    None
}

/// Greedy descending-weight clustering of SVRIs into HLSs.
pub fn aggregate(ctx: &PipelineCtx, mut svris: Vec<Svri>) -> Vec<Hls> {
    svris.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .unwrap()
            .then(a.svr.focus_vi.cmp(&b.svr.focus_vi))
            .then(a.svr.vi_root.cmp(&b.svr.vi_root))
            .then(a.svr.vi_source.cmp(&b.svr.vi_source))
            .then(a.svr.svr_type.cmp(&b.svr.svr_type))
    });
    let mut hlss: Vec<Hls> = Vec::new();
    for svri in svris {
        let slot = hlss
            .iter_mut()
            .find(|h| templates_compatible(&h.template, &svri.template, ctx));
        match slot {
            Some(h) => {
                *h.evidence.entry(svri.svr.svr_type).or_insert(0.0) += svri.weight;
                h.supporters.push((svri.svr.vi_source, svri.svr.svr_type, svri.weight));
            }
            None => {
                let mut evidence = BTreeMap::new();
                evidence.insert(svri.svr.svr_type, svri.weight);
                hlss.push(Hls {
                    template: svri.template,
                    evidence,
                    supporters: vec![(svri.svr.vi_source, svri.svr.svr_type, svri.weight)],
                    matches_focus: None,
                });
            }
        }
    }
    for h in &mut hlss {
        h.matches_focus = find_matching_focus_vi(ctx, &h.template);
    }
    hlss
}

/// Full pipeline: SVRs → SVRIs → HLSs.
pub fn compute_hlss(ctx: &PipelineCtx) -> Vec<Hls> {
    let svrs = collect_svrs(ctx);
    let mut svris = Vec::new();
    for svr in &svrs {
        svris.extend(interpret(ctx, svr));
    }
    aggregate(ctx, svris)
}

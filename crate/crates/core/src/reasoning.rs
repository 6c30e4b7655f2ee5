//! Moods and the reasoning behaviors they gate: missing-action and
//! missing-relation inference, summarization detection, recall and
//! confabulation.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Config;
use crate::engine::Agent;
use crate::error::{Result, XapagyError};
use crate::hls::{Hls, PartSlot, Purpose, TemplateObject};
use crate::knowledge::SideEffect;
use crate::model::{InstanceId, LinkKind, ViForm, ViId, ViObject};
use crate::trace::Origin;

/// A mood: instantiation budget, per-purpose support thresholds, rate
/// relaxation and choice adherence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mood {
    pub name: String,
    /// Per-tick support budget for internal instantiation; 0 disables it.
    pub budget: f64,
    pub threshold_continuation: f64,
    pub threshold_missing_action: f64,
    pub threshold_missing_relation: f64,
    pub threshold_summarization: f64,
    /// Multiplies diffusion gain rates and widens HLS compatibility.
    pub relaxation: f64,
    /// Probability of taking the strongest continuation during recall.
    pub adherence: f64,
}

impl Mood {
    pub fn story_following() -> Mood {
        Mood::preset("story_following", &Config::default()).unwrap()
    }

    pub fn preset(name: &str, config: &Config) -> Result<Mood> {
        let base = Mood {
            name: name.to_string(),
            budget: 0.0,
            threshold_continuation: config.mood_threshold_continuation,
            threshold_missing_action: config.mood_threshold_missing_action,
            threshold_missing_relation: config.mood_threshold_missing_relation,
            threshold_summarization: config.mood_threshold_summarization,
            relaxation: 1.0,
            adherence: 1.0,
        };
        match name {
            "story_following" => Ok(base),
            "recall" => Ok(Mood { budget: config.mood_budget, ..base }),
            "confabulation" => Ok(Mood {
                budget: config.mood_budget,
                relaxation: config.mood_confabulation_relaxation,
                adherence: 0.0,
                ..base
            }),
            _ => Err(XapagyError::UnknownMoodKey(name.to_string())),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let parsed: f64 = value
            .parse()
            .map_err(|_| XapagyError::Config(format!("bad value `{value}` for `{key}`")))?;
        match key {
            "budget" => self.budget = parsed,
            "relaxation" => self.relaxation = parsed,
            "adherence" => self.adherence = parsed,
            "threshold.continuation" => self.threshold_continuation = parsed,
            "threshold.missing_action" => self.threshold_missing_action = parsed,
            "threshold.missing_relation" => self.threshold_missing_relation = parsed,
            "threshold.summarization" => self.threshold_summarization = parsed,
            _ => return Err(XapagyError::UnknownMoodKey(key.to_string())),
        }
        self.name = "custom".to_string();
        Ok(())
    }

    pub fn threshold(&self, purpose: Purpose) -> f64 {
        match purpose {
            Purpose::Continuation => self.threshold_continuation,
            Purpose::MissingAction => self.threshold_missing_action,
            Purpose::MissingRelation => self.threshold_missing_relation,
            Purpose::Summarization => self.threshold_summarization,
        }
    }
}

impl Agent {
    /// Switch mood: a preset name, or `key=value` adjustments on the
    /// current mood.
    pub fn set_mood(&mut self, spec: &str) -> Result<()> {
        if let Some((key, value)) = spec.split_once('=') {
            self.mood.set(key.trim(), value.trim())?;
        } else {
            self.mood = Mood::preset(spec.trim(), &self.config)?;
        }
        self.trace.emit(
            self.focus.tick,
            "mood",
            vec![
                ("name", json!(self.mood.name)),
                ("budget", json!(self.mood.budget)),
                ("relaxation", json!(self.mood.relaxation)),
                ("adherence", json!(self.mood.adherence)),
            ],
        );
        Ok(())
    }

    fn template_parts_in_focus(&self, hls: &Hls) -> bool {
        let check = |slot: &PartSlot| match slot {
            PartSlot::Focus(i) => self.focus.contains((*i).into()),
            PartSlot::New(_) => true,
        };
        if !check(&hls.template.subject) {
            return false;
        }
        match &hls.template.object {
            TemplateObject::Part(slot) => check(slot),
            _ => true,
        }
    }

    /// Instantiate an HLS as an internal VI; the shadow of the new VI is
    /// seeded with the HLS's own positive supporters.
    pub fn instantiate_hls(
        &mut self,
        hls: &Hls,
        purpose: Purpose,
        origin: Origin,
    ) -> Result<ViId> {
        if !self.template_parts_in_focus(hls) {
            return Err(XapagyError::StaleHls);
        }
        let template = hls.template.clone();
        let scene = if self.focus.contains(template.scene.into()) {
            template.scene
        } else {
            self.current_scene
        };
        let subject = match &template.subject {
            PartSlot::Focus(i) => *i,
            PartSlot::New(attrs) => {
                self.create_instance(attrs.clone(), scene, false, BTreeSet::new())
            }
        };
        let object = match &template.object {
            TemplateObject::None => ViObject::None,
            TemplateObject::Adjective(a) => ViObject::Adjective(a.clone()),
            TemplateObject::Part(PartSlot::Focus(i)) => ViObject::Instance(*i),
            TemplateObject::Part(PartSlot::New(attrs)) => ViObject::Instance(
                self.create_instance(attrs.clone(), scene, false, BTreeSet::new()),
            ),
        };
        let seed = hls.seed_body(purpose, &self.config);
        let support = hls.support(purpose, &self.config);
        let vi = self.create_vi(
            template.form,
            template.verbs.clone(),
            subject,
            object,
            scene,
            false,
            seed,
            origin,
        );
        self.trace.emit(
            self.focus.tick,
            "inference",
            vec![
                ("purpose", json!(purpose.name())),
                ("vi", json!(vi.0)),
                ("support", json!(support)),
            ],
        );
        Ok(vi)
    }

    /// A relation VI in focus over the same participants blocks (or, when
    /// the verbs are declared conflicting, forbids) a missing-relation
    /// instantiation.
    fn missing_relation_blocked(&self, hls: &Hls) -> bool {
        let parts: BTreeSet<InstanceId> = match (&hls.template.subject, &hls.template.object) {
            (PartSlot::Focus(s), TemplateObject::Part(PartSlot::Focus(o))) => {
                [*s, *o].into_iter().collect()
            }
            _ => return false,
        };
        let kind = self.kb.relation_kind(&hls.template.verbs);
        for vi_id in self.focus.vi_strengths.keys() {
            let vi = &self.memory.vis[vi_id];
            if vi.relation_kind.is_none() {
                continue;
            }
            let vi_parts: BTreeSet<InstanceId> = vi.participants().into_iter().collect();
            if vi_parts != parts {
                continue;
            }
            if vi.relation_kind == kind {
                return true; // already related this way
            }
            if let (Some(a), Some(b)) = (&kind, &vi.relation_kind) {
                if self.kb.conflicting(a, b) {
                    return true; // declared conflict forbids coexistence
                }
            }
        }
        false
    }

    fn hls_fits_purpose(&self, hls: &Hls, purpose: Purpose) -> bool {
        let verbs = &hls.template.verbs;
        match purpose {
            Purpose::Continuation => true,
            Purpose::MissingAction => {
                self.kb.has_effect(verbs, |e| matches!(e, SideEffect::Action))
            }
            Purpose::MissingRelation => {
                self.kb.relation_kind(verbs).is_some() && !self.missing_relation_blocked(hls)
            }
            Purpose::Summarization => {
                self.kb.has_effect(verbs, |e| matches!(e, SideEffect::InSummaryMarker))
            }
        }
    }

    fn best_hls_for(&self, purpose: Purpose) -> Option<(Hls, f64)> {
        let mut best: Option<(Hls, f64)> = None;
        for hls in self.hlss() {
            if hls.matches_focus.is_some() {
                continue;
            }
            let support = hls.support(purpose, &self.config);
            if support < self.mood.threshold(purpose) {
                continue;
            }
            if !self.hls_fits_purpose(hls, purpose) || !self.template_parts_in_focus(hls) {
                continue;
            }
            if best.as_ref().map_or(true, |(_, b)| support > *b) {
                best = Some((hls.clone(), support));
            }
        }
        best
    }

    /// Mood-gated per-tick inference: one instantiation per purpose at
    /// most, paid for from the tick budget.
    pub(crate) fn run_inference(&mut self) {
        let mut budget = self.mood.budget;
        for purpose in [Purpose::MissingAction, Purpose::MissingRelation, Purpose::Summarization]
        {
            if budget <= 0.0 {
                break;
            }
            if let Some((hls, support)) = self.best_hls_for(purpose) {
                if self.instantiate_hls(&hls, purpose, Origin::InternalInferred).is_ok() {
                    budget -= support.max(self.mood.threshold(purpose));
                    self.refresh_hlss();
                }
            }
        }
        if budget > 0.0 {
            if self.detect_builtin_summary() {
                self.refresh_hlss();
            }
        }
    }

    /// Pattern-driven summarization: a run of recent focus actions between
    /// the same two instances, expressible by a declared `in-summary` verb
    /// word, yields a group-subject summary VI.
    pub(crate) fn detect_builtin_summary(&mut self) -> bool {
        let window = self.config.summary_window.max(1.0) as usize;
        // recent focus actions, newest first
        let mut actions: Vec<ViId> = self
            .focus
            .vi_strengths
            .keys()
            .filter(|v| self.memory.vis[v].is_action)
            .copied()
            .collect();
        actions.sort_by_key(|v| {
            let vi = &self.memory.vis[v];
            (std::cmp::Reverse(vi.created_at), std::cmp::Reverse(*v))
        });
        if actions.len() < window {
            return false;
        }
        let run: Vec<ViId> = actions.into_iter().take(window).collect();
        // the run must involve exactly two instances, both appearing
        let mut parts: BTreeSet<InstanceId> = BTreeSet::new();
        for v in &run {
            parts.extend(self.memory.vis[v].participants());
        }
        if parts.len() != 2 {
            return false;
        }
        let subjects: BTreeSet<InstanceId> =
            run.iter().map(|v| self.memory.vis[v].subject).collect();
        if subjects.is_empty() {
            return false;
        }
        // skip if a focus summary already covers part of the run
        for v in self.focus.vi_strengths.keys() {
            if self.memory.vis[v].is_summary
                && self
                    .memory
                    .vi_links_out(*v)
                    .iter()
                    .any(|(k, t, _)| *k == LinkKind::Summarization && run.contains(t))
            {
                return false;
            }
        }
        // find the best-matching declared summary verb word
        let mut best: Option<(f64, String)> = None;
        let candidates: Vec<(String, crate::knowledge::VerbOverlay)> = self
            .kb
            .verb_word_entries()
            .filter(|(_, o)| {
                self.kb.has_effect(o, |e| matches!(e, SideEffect::InSummaryMarker))
            })
            .map(|(w, o)| (w.clone(), o.clone()))
            .collect();
        for (word, overlay) in candidates {
            let mut score = f64::INFINITY;
            for v in &run {
                let m = crate::knowledge::overlay_match(
                    &overlay,
                    &self.memory.vis[v].verbs,
                    &self.kb,
                );
                score = score.min(m);
            }
            if score > 0.0 && best.as_ref().map_or(true, |(b, _)| score > *b) {
                best = Some((score, word));
            }
        }
        let Some((_, word)) = best else {
            return false;
        };
        let verbs = self.kb.lookup_verb_word(&word, "summary detection").unwrap();
        // group subject: reuse a focus group with these members, else create
        let members = parts.clone();
        let mut group = None;
        for id in self.focus.instance_strengths.keys() {
            let inst = &self.memory.instances[id];
            if inst.is_group && inst.group_members == members {
                group = Some(*id);
                break;
            }
        }
        let scene = self.memory.vis[&run[0]].scene;
        let group = match group {
            Some(g) => g,
            None => {
                let mut attrs = crate::knowledge::ConceptOverlay::new();
                for m in &members {
                    let a = self.memory.instances[m].attributes.clone();
                    let _ = crate::knowledge::overlay_add(&mut attrs, &a, 1.0, &self.kb);
                }
                self.create_instance(attrs, scene, false, members)
            }
        };
        let vi = self.create_vi(
            ViForm::SV,
            verbs,
            group,
            ViObject::None,
            scene,
            false,
            crate::shadow::ViBody::new(),
            Origin::InternalInferred,
        );
        self.trace.emit(
            self.focus.tick,
            "inference",
            vec![
                ("purpose", json!(Purpose::Summarization.name())),
                ("vi", json!(vi.0)),
                ("support", json!(1.0)),
            ],
        );
        true
    }

    /// One recall/confabulation step: pick a continuation HLS (per the
    /// mood's adherence) and instantiate it. `None` when nothing clears
    /// the continuation threshold.
    pub fn recall_step(&mut self) -> Option<ViId> {
        let mut candidates: Vec<(Hls, f64)> = self
            .hlss()
            .iter()
            .filter(|h| h.matches_focus.is_none())
            .map(|h| (h.clone(), h.support(Purpose::Continuation, &self.config)))
            .filter(|(h, s)| {
                *s >= self.mood.threshold(Purpose::Continuation)
                    && self.template_parts_in_focus(h)
            })
            .collect();
        candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        if candidates.is_empty() {
            return None;
        }
        let origin = if self.mood.name == "confabulation" {
            Origin::InternalInferred
        } else {
            Origin::InternalRecalled
        };
        let top_k = (self.config.recall_top_k.max(1.0) as usize).min(candidates.len());
        let adherent = self.mood.adherence >= 1.0 || {
            let roll: f64 = self.rng().gen();
            roll < self.mood.adherence
        };
        let pick = if adherent || top_k == 1 {
            0
        } else {
            let total: f64 = candidates[..top_k].iter().map(|(_, s)| s).sum();
            let mut roll: f64 = self.rng().gen::<f64>() * total;
            let mut chosen = 0;
            for (i, (_, s)) in candidates[..top_k].iter().enumerate() {
                roll -= s;
                if roll <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        // fall through weaker candidates if the pick went stale
        for i in std::iter::once(pick).chain(0..candidates.len()) {
            let (hls, _) = &candidates[i];
            if let Ok(vi) = self.instantiate_hls(&hls.clone(), Purpose::Continuation, origin) {
                return Some(vi);
            }
        }
        None
    }

    /// Drive up to `n` recall steps, closing a tick after each; stops early
    /// when no continuation clears the threshold.
    pub fn recall(&mut self, n: usize) -> Vec<ViId> {
        let mut out = Vec::new();
        for _ in 0..n {
            match self.recall_step() {
                Some(vi) => {
                    out.push(vi);
                    self.end_tick();
                }
                None => {
                    self.end_tick();
                    break;
                }
            }
        }
        out
    }
}

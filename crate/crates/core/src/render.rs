//! Surface rendering of instances, VIs and HLS templates back into the
//! pidgin, plus the human-readable dump tables.

use std::fmt::Write as _;

use crate::engine::Agent;
use crate::hls::{PartSlot, Purpose, TemplateObject, ViTemplate};
use crate::knowledge::{ConceptId, ConceptOverlay, VerbOverlay};
use crate::model::{InstanceId, ViForm, ViId, ViObject};

impl Agent {
    fn name_label(&self, attrs: &ConceptOverlay) -> Option<String> {
        attrs
            .members()
            .find_map(|c| self.kb.name_of_concept(c).strip_prefix("name_").map(str::to_string))
    }

    /// Greedy word cover of a concept overlay: words whose senses all lie
    /// inside the overlay, largest new coverage first.
    fn cover_concepts(&self, overlay: &ConceptOverlay) -> Vec<String> {
        let mut remaining: Vec<ConceptId> = overlay
            .members()
            .filter(|c| !self.kb.name_of_concept(*c).starts_with("name_"))
            .collect();
        let mut words = Vec::new();
        while !remaining.is_empty() {
            let mut best: Option<(usize, &String)> = None;
            for (word, wo) in self.kb.concept_word_entries() {
                if word.starts_with('"') || !wo.members().all(|c| overlay.contains(c)) {
                    continue;
                }
                let covered = remaining.iter().filter(|c| wo.contains(**c)).count();
                if covered > 0 && best.map_or(true, |(b, _)| covered > b) {
                    best = Some((covered, word));
                }
            }
            let Some((_, word)) = best else { break };
            let wo = self.kb.concept_word_entries().find(|(w, _)| *w == word).unwrap().1.clone();
            remaining.retain(|c| !wo.contains(*c));
            words.push(word.clone());
        }
        words
    }

    fn cover_verbs(&self, overlay: &VerbOverlay) -> Vec<String> {
        let mut remaining: Vec<_> = overlay.members().collect();
        let mut words = Vec::new();
        while !remaining.is_empty() {
            let mut best: Option<(usize, &String)> = None;
            for (word, wo) in self.kb.verb_word_entries() {
                if !wo.members().all(|v| overlay.contains(v)) {
                    continue;
                }
                let covered = remaining.iter().filter(|v| wo.contains(**v)).count();
                if covered > 0 && best.map_or(true, |(b, _)| covered > b) {
                    best = Some((covered, word));
                }
            }
            let Some((_, word)) = best else { break };
            let wo = self.kb.verb_word_entries().find(|(w, _)| *w == word).unwrap().1.clone();
            remaining.retain(|v| !wo.contains(*v));
            words.push(word.clone());
        }
        words
    }

    pub fn render_verbs(&self, overlay: &VerbOverlay) -> String {
        let words = self.cover_verbs(overlay);
        if words.is_empty() {
            "?verb".to_string()
        } else {
            words.join(" ")
        }
    }

    pub fn render_attributes(&self, overlay: &ConceptOverlay) -> String {
        let mut parts = Vec::new();
        if let Some(label) = self.name_label(overlay) {
            parts.push(format!("\"{label}\""));
        }
        parts.extend(self.cover_concepts(overlay));
        if parts.is_empty() {
            "?thing".to_string()
        } else {
            parts.join(" ")
        }
    }

    /// Render an instance as a resolvable definite reference.
    pub fn render_instance_ref(&self, id: InstanceId) -> String {
        let Some(inst) = self.memory.instances.get(&id) else {
            return format!("#i{}", id.0);
        };
        if inst.is_group {
            return inst
                .group_members
                .iter()
                .map(|m| self.render_instance_ref(*m))
                .collect::<Vec<_>>()
                .join(" + ");
        }
        if inst.is_scene {
            if let Some(label) = self.name_label(&inst.attributes) {
                return format!("\"{label}\"");
            }
        }
        if let Some(label) = self.name_label(&inst.attributes) {
            return format!("the \"{label}\"");
        }
        format!("the {}", self.render_attributes(&inst.attributes))
    }

    /// Render a recorded VI back into statement-shaped text.
    pub fn render_vi(&self, id: ViId) -> String {
        let Some(vi) = self.memory.vis.get(&id) else {
            return format!("#v{}", id.0);
        };
        let subject = self.render_instance_ref(vi.subject);
        let verbs = self.render_verbs(&vi.verbs);
        let terminator = if vi.is_question { "?" } else { "." };
        match (&vi.form, &vi.object) {
            (ViForm::SV, _) => format!("{subject} / {verbs}{terminator}"),
            (ViForm::SVO, ViObject::Instance(o)) => {
                format!("{subject} / {verbs} / {}{terminator}", self.render_instance_ref(*o))
            }
            (ViForm::SVAdj, ViObject::Adjective(a)) => {
                format!("{subject} / {verbs} / {}{terminator}", self.render_attributes(a))
            }
            (ViForm::Quote, ViObject::Inquit(q)) => {
                let scene = self
                    .memory
                    .vis
                    .get(q)
                    .map(|inner| self.render_instance_ref(inner.scene))
                    .unwrap_or_else(|| "?scene".to_string());
                let inner = self.render_vi(*q);
                format!("{subject} / {verbs} in {scene} // {inner}")
            }
            _ => format!("#v{}", id.0),
        }
    }

    fn render_slot(&self, slot: &PartSlot) -> String {
        match slot {
            PartSlot::Focus(i) => self.render_instance_ref(*i),
            PartSlot::New(attrs) => format!("a {}", self.render_attributes(attrs)),
        }
    }

    pub fn render_template(&self, t: &ViTemplate) -> String {
        let subject = self.render_slot(&t.subject);
        let verbs = self.render_verbs(&t.verbs);
        match &t.object {
            TemplateObject::None => format!("{subject} / {verbs}."),
            TemplateObject::Part(slot) => {
                format!("{subject} / {verbs} / {}.", self.render_slot(slot))
            }
            TemplateObject::Adjective(a) => {
                format!("{subject} / {verbs} / {}.", self.render_attributes(a))
            }
        }
    }

    // ------------------------------------------------------------------
    // dump tables

    pub fn dump_focus(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "focus @ tick {}", self.focus.tick);
        let _ = writeln!(out, "  instances:");
        for (id, s) in &self.focus.instance_strengths {
            let _ =
                writeln!(out, "    i{:<5} {:>7.4}  {}", id.0, s, self.render_instance_ref(*id));
        }
        let _ = writeln!(out, "  vis:");
        for (id, s) in &self.focus.vi_strengths {
            let _ = writeln!(out, "    v{:<5} {:>7.4}  {}", id.0, s, self.render_vi(*id));
        }
        out
    }

    pub fn dump_shadows(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "shadows @ tick {}", self.focus.tick);
        for (head, body) in &self.shadows.instances {
            let _ = writeln!(out, "  head i{} {}", head.0, self.render_instance_ref(*head));
            let mut rows: Vec<_> = body.iter().collect();
            rows.sort_by(|a, b| b.1.partial_cmp(a.1).unwrap().then(a.0.cmp(b.0)));
            for (m, e) in rows {
                let _ =
                    writeln!(out, "    i{:<5} {:>7.4}  {}", m.0, e, self.render_instance_ref(*m));
            }
        }
        for (head, body) in &self.shadows.vis {
            let _ = writeln!(out, "  head v{} {}", head.0, self.render_vi(*head));
            let mut rows: Vec<_> = body.iter().collect();
            rows.sort_by(|a, b| b.1.partial_cmp(a.1).unwrap().then(a.0.cmp(b.0)));
            for (m, e) in rows {
                let _ = writeln!(out, "    v{:<5} {:>7.4}  {}", m.0, e, self.render_vi(*m));
            }
        }
        out
    }

    pub fn dump_hls(&self, purpose: Purpose) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "hls[{}] @ tick {}", purpose.name(), self.focus.tick);
        let mut rows: Vec<(f64, String, bool)> = self
            .hlss()
            .iter()
            .map(|h| {
                (
                    h.support(purpose, &self.config),
                    self.render_template(&h.template),
                    h.matches_focus.is_some(),
                )
            })
            .filter(|(s, _, _)| *s > 0.0)
            .collect();
        rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for (s, text, in_focus) in rows {
            let marker = if in_focus { " (in focus)" } else { "" };
            let _ = writeln!(out, "  {:>8.4}  {}{}", s, text, marker);
        }
        out
    }

    pub fn dump_memory(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "memory: {} instances, {} vis, {} links",
            self.memory.instances.len(),
            self.memory.vis.len(),
            self.memory.links.len()
        );
        for (id, _) in &self.memory.vis {
            let salience = self.memory.salience((*id).into()).unwrap_or(0.0);
            let _ = writeln!(out, "  v{:<5} {:>8.4}  {}", id.0, salience, self.render_vi(*id));
        }
        out
    }
}

//! Domain knowledge: concepts, verbs, overlays and the word dictionary.
//!
//! Concepts and verbs are interned symbols with an area, pairwise overlaps
//! and pairwise impacts. An overlay is a weighted activation of several
//! symbols with energies in (0, 1]. The dictionary maps surface words to
//! overlay templates; quoted proper names mint a dedicated name concept on
//! first use.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, XapagyError};

/// Multiplicative-impact floor: attributes dim but never vanish.
pub const ENERGY_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConceptId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VerbId(pub u32);

/// What instantiating a VI with this verb does to the focus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SideEffect {
    None,
    Action,
    IsA,
    Changes,
    /// Creates a persistent relation VI of the named kind. The kind
    /// `identity` additionally records an identity link.
    CreatesRelation(String),
    CreatesSceneRelation,
    QuoteCarrier,
    InSummaryMarker,
}

impl SideEffect {
    pub fn parse(text: &str) -> Option<SideEffect> {
        Some(match text {
            "none" => SideEffect::None,
            "action" => SideEffect::Action,
            "is_a" => SideEffect::IsA,
            "changes" => SideEffect::Changes,
            "creates_scene_relation" => SideEffect::CreatesSceneRelation,
            "quote_carrier" => SideEffect::QuoteCarrier,
            "in_summary_marker" => SideEffect::InSummaryMarker,
            _ => match text.strip_prefix("creates_relation") {
                Some("") => SideEffect::CreatesRelation(String::new()),
                Some(rest) => SideEffect::CreatesRelation(rest.strip_prefix(':')?.to_string()),
                None => return None,
            },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConceptDef {
    pub name: String,
    pub area: f64,
    pub overlaps: BTreeMap<ConceptId, f64>,
    pub impacts: BTreeMap<ConceptId, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerbDef {
    pub name: String,
    pub area: f64,
    pub overlaps: BTreeMap<VerbId, f64>,
    pub impacts: BTreeMap<VerbId, f64>,
    pub side_effect: SideEffect,
}

/// Area / overlap / impact lookups shared by concept and verb spaces.
pub trait SymbolTable<I: Copy + Ord> {
    fn area(&self, id: I) -> f64;
    /// Symmetric; `overlap(a, a) == area(a)`.
    fn overlap(&self, a: I, b: I) -> f64;
    /// Directed; `impact(a, a) == 0`.
    fn impact(&self, src: I, dst: I) -> f64;
    fn exists(&self, id: I) -> bool;
}

/// Weighted activation set over one symbol space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay<I: Ord> {
    energies: BTreeMap<I, f64>,
}

pub type ConceptOverlay = Overlay<ConceptId>;
pub type VerbOverlay = Overlay<VerbId>;

impl<I: Copy + Ord> Default for Overlay<I> {
    fn default() -> Self {
        Overlay { energies: BTreeMap::new() }
    }
}

impl<I: Copy + Ord> Overlay<I> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(id: I, energy: f64) -> Self {
        let mut o = Self::new();
        o.energies.insert(id, energy.clamp(ENERGY_FLOOR, 1.0));
        o
    }

    pub fn energy(&self, id: I) -> f64 {
        self.energies.get(&id).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, id: I) -> bool {
        self.energies.contains_key(&id)
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn mass(&self) -> f64 {
        self.energies.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (I, f64)> + '_ {
        self.energies.iter().map(|(k, v)| (*k, *v))
    }

    pub fn members(&self) -> impl Iterator<Item = I> + '_ {
        self.energies.keys().copied()
    }

    /// Strongest member; ties resolved toward the lowest id.
    pub fn dominant(&self) -> Option<I> {
        self.energies
            .iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(a.0)))
            .map(|(k, _)| *k)
    }
}

/// Add `addition` into `target` at the given scale.
///
/// Added members saturate at 1; every pre-existing member is then scaled by
/// the summed impacts of the added members, clamped to [ENERGY_FLOOR, 1].
/// Members are never removed.
pub fn overlay_add<I: Copy + Ord>(
    target: &mut Overlay<I>,
    addition: &Overlay<I>,
    scale: f64,
    table: &impl SymbolTable<I>,
) -> Result<()> {
    for (m, _) in addition.iter() {
        if !table.exists(m) {
            return Err(XapagyError::UnknownSymbol { kind: "symbol", id: format!("#{:?}", target.energies.len()) });
        }
    }
    let pre_existing: Vec<I> = target.members().collect();
    for (m, e_add) in addition.iter() {
        let e = target.energy(m);
        target.energies.insert(m, (e + scale * e_add).min(1.0));
    }
    for p in pre_existing {
        let mut factor = 1.0;
        for (m, e_add) in addition.iter() {
            factor += table.impact(m, p) * e_add * scale;
        }
        let e = target.energy(p);
        target
            .energies
            .insert(p, (e * factor).clamp(ENERGY_FLOOR, 1.0));
    }
    Ok(())
}

/// Symmetric overlap-weighted match in [0, 1]; 0 for disjoint vocabularies.
pub fn overlay_match<I: Copy + Ord>(
    a: &Overlay<I>,
    b: &Overlay<I>,
    table: &impl SymbolTable<I>,
) -> f64 {
    let (ma, mb) = (a.mass(), b.mass());
    if ma <= 0.0 || mb <= 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (x, ex) in a.iter() {
        for (y, ey) in b.iter() {
            let ov = table.overlap(x, y);
            if ov != 0.0 {
                sum += ex * ey * ov / (table.area(x) * table.area(y)).sqrt();
            }
        }
    }
    (sum / (ma * mb).sqrt()).clamp(0.0, 1.0)
}

/// The loaded domain knowledge: symbol databases plus the word dictionary.
///
/// Read-only after load except for proper-name minting, which only appends.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnowledgeBase {
    concepts: Vec<ConceptDef>,
    concept_ids: BTreeMap<String, ConceptId>,
    verbs: Vec<VerbDef>,
    verb_ids: BTreeMap<String, VerbId>,
    concept_words: BTreeMap<String, ConceptOverlay>,
    verb_words: BTreeMap<String, VerbOverlay>,
    /// Pairs of relation kinds declared mutually conflicting.
    conflicts: BTreeSet<(String, String)>,
}

impl SymbolTable<ConceptId> for KnowledgeBase {
    fn area(&self, id: ConceptId) -> f64 {
        self.concepts[id.0 as usize].area
    }
    fn overlap(&self, a: ConceptId, b: ConceptId) -> f64 {
        if a == b {
            return self.area(a);
        }
        self.concepts[a.0 as usize].overlaps.get(&b).copied().unwrap_or(0.0)
    }
    fn impact(&self, src: ConceptId, dst: ConceptId) -> f64 {
        if src == dst {
            return 0.0;
        }
        self.concepts[src.0 as usize].impacts.get(&dst).copied().unwrap_or(0.0)
    }
    fn exists(&self, id: ConceptId) -> bool {
        (id.0 as usize) < self.concepts.len()
    }
}

impl SymbolTable<VerbId> for KnowledgeBase {
    fn area(&self, id: VerbId) -> f64 {
        self.verbs[id.0 as usize].area
    }
    fn overlap(&self, a: VerbId, b: VerbId) -> f64 {
        if a == b {
            return self.area(a);
        }
        self.verbs[a.0 as usize].overlaps.get(&b).copied().unwrap_or(0.0)
    }
    fn impact(&self, src: VerbId, dst: VerbId) -> f64 {
        if src == dst {
            return 0.0;
        }
        self.verbs[src.0 as usize].impacts.get(&dst).copied().unwrap_or(0.0)
    }
    fn exists(&self, id: VerbId) -> bool {
        (id.0 as usize) < self.verbs.len()
    }
}

impl KnowledgeBase {
    pub fn empty() -> Self {
        KnowledgeBase {
            concepts: Vec::new(),
            concept_ids: BTreeMap::new(),
            verbs: Vec::new(),
            verb_ids: BTreeMap::new(),
            concept_words: BTreeMap::new(),
            verb_words: BTreeMap::new(),
            conflicts: BTreeSet::new(),
        }
    }

    pub fn concept_id(&self, name: &str) -> Option<ConceptId> {
        self.concept_ids.get(name).copied()
    }

    pub fn verb_id(&self, name: &str) -> Option<VerbId> {
        self.verb_ids.get(name).copied()
    }

    pub fn concept(&self, id: ConceptId) -> &ConceptDef {
        &self.concepts[id.0 as usize]
    }

    pub fn verb(&self, id: VerbId) -> &VerbDef {
        &self.verbs[id.0 as usize]
    }

    pub fn concept_word_entries(&self) -> impl Iterator<Item = (&String, &ConceptOverlay)> {
        self.concept_words.iter()
    }

    pub fn verb_word_entries(&self) -> impl Iterator<Item = (&String, &VerbOverlay)> {
        self.verb_words.iter()
    }

    pub fn conflicting(&self, a: &str, b: &str) -> bool {
        self.conflicts.contains(&(a.to_string(), b.to_string()))
            || self.conflicts.contains(&(b.to_string(), a.to_string()))
    }

    fn add_concept(&mut self, name: &str, area: f64) -> Result<ConceptId> {
        if self.concept_ids.contains_key(name) {
            return Err(XapagyError::DomainFile {
                line: 0,
                message: format!("duplicate concept `{name}`"),
            });
        }
        let id = ConceptId(self.concepts.len() as u32);
        self.concepts.push(ConceptDef {
            name: name.to_string(),
            area,
            overlaps: BTreeMap::new(),
            impacts: BTreeMap::new(),
        });
        self.concept_ids.insert(name.to_string(), id);
        Ok(id)
    }

    fn add_verb(&mut self, name: &str, area: f64, side_effect: SideEffect) -> Result<VerbId> {
        if self.verb_ids.contains_key(name) {
            return Err(XapagyError::DomainFile {
                line: 0,
                message: format!("duplicate verb `{name}`"),
            });
        }
        let id = VerbId(self.verbs.len() as u32);
        self.verbs.push(VerbDef {
            name: name.to_string(),
            area,
            overlaps: BTreeMap::new(),
            impacts: BTreeMap::new(),
            side_effect,
        });
        self.verb_ids.insert(name.to_string(), id);
        Ok(id)
    }

    /// Look up a concept word, minting a name concept for quoted words.
    ///
    /// Returns a fresh copy of the template overlay. Proper names (still
    /// carrying their quotes) are total: first use mints `name_<text>`.
    pub fn lookup_concept_word(&mut self, word: &str, position: &str) -> Result<ConceptOverlay> {
        if let Some(tpl) = self.concept_words.get(word) {
            return Ok(tpl.clone());
        }
        if word.starts_with('"') && word.ends_with('"') && word.len() >= 2 {
            let id = self.mint_name(&word[1..word.len() - 1])?;
            return Ok(Overlay::singleton(id, 1.0));
        }
        Err(XapagyError::UnknownWord { word: word.to_string(), position: position.to_string() })
    }

    pub fn lookup_verb_word(&self, word: &str, position: &str) -> Result<VerbOverlay> {
        self.verb_words
            .get(word)
            .cloned()
            .ok_or_else(|| XapagyError::UnknownWord { word: word.to_string(), position: position.to_string() })
    }

    /// Idempotent: returns the existing name concept if already minted.
    pub fn mint_name(&mut self, bare: &str) -> Result<ConceptId> {
        let cname = format!("name_{bare}");
        if let Some(id) = self.concept_ids.get(&cname) {
            return Ok(*id);
        }
        let id = self.add_concept(&cname, 1.0)?;
        self.concept_words
            .insert(format!("\"{bare}\""), Overlay::singleton(id, 1.0));
        Ok(id)
    }

    pub fn name_of_concept(&self, id: ConceptId) -> &str {
        &self.concepts[id.0 as usize].name
    }

    pub fn name_of_verb(&self, id: VerbId) -> &str {
        &self.verbs[id.0 as usize].name
    }

    /// Side effects present in a verb overlay, strongest member first.
    pub fn effects_of(&self, verbs: &VerbOverlay) -> Vec<SideEffect> {
        let mut pairs: Vec<(VerbId, f64)> = verbs.iter().collect();
        pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut out = Vec::new();
        for (id, _) in pairs {
            let eff = self.verb(id).side_effect.clone();
            if !out.contains(&eff) {
                out.push(eff);
            }
        }
        out
    }

    pub fn has_effect(&self, verbs: &VerbOverlay, pred: impl Fn(&SideEffect) -> bool) -> bool {
        verbs.members().any(|id| pred(&self.verb(id).side_effect))
    }

    /// Relation kind of a relation verb overlay, if any.
    pub fn relation_kind(&self, verbs: &VerbOverlay) -> Option<String> {
        for eff in self.effects_of(verbs) {
            if let SideEffect::CreatesRelation(kind) = eff {
                return Some(kind);
            }
        }
        None
    }

    /// Load the line-oriented domain-knowledge file format.
    pub fn load(text: &str) -> Result<KnowledgeBase> {
        let mut kb = KnowledgeBase::empty();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let at = |message: String| XapagyError::DomainFile { line, message };
            let trimmed = raw.split('#').next().unwrap_or("").trim();
            if trimmed.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = trimmed.split_whitespace().collect();
            match tokens[0] {
                "concept" => {
                    let name = tokens.get(1).ok_or_else(|| at("missing concept id".into()))?;
                    let mut area = 1.0;
                    for t in &tokens[2..] {
                        match t.strip_prefix("area=") {
                            Some(v) => {
                                area = v.parse().map_err(|_| at(format!("bad area `{v}`")))?
                            }
                            None => return Err(at(format!("unexpected token `{t}`"))),
                        }
                    }
                    if area <= 0.0 {
                        return Err(at("area must be positive".into()));
                    }
                    kb.add_concept(name, area).map_err(|e| at(e.to_string()))?;
                }
                "verb" => {
                    let name = tokens.get(1).ok_or_else(|| at("missing verb id".into()))?;
                    let mut area = 1.0;
                    let mut effect = SideEffect::None;
                    for t in &tokens[2..] {
                        if let Some(v) = t.strip_prefix("area=") {
                            area = v.parse().map_err(|_| at(format!("bad area `{v}`")))?;
                        } else if let Some(v) = t.strip_prefix("side_effect=") {
                            effect = SideEffect::parse(v)
                                .ok_or_else(|| at(format!("bad side effect `{v}`")))?;
                            if let SideEffect::CreatesRelation(kind) = &mut effect {
                                if kind.is_empty() {
                                    *kind = name.to_string();
                                }
                            }
                        } else {
                            return Err(at(format!("unexpected token `{t}`")));
                        }
                    }
                    kb.add_verb(name, area, effect).map_err(|e| at(e.to_string()))?;
                }
                "overlap" | "impact" => {
                    if tokens.len() != 4 {
                        return Err(at(format!("`{}` takes two ids and a value", tokens[0])));
                    }
                    let value: f64 = tokens[3]
                        .parse()
                        .map_err(|_| at(format!("bad value `{}`", tokens[3])))?;
                    let (a, b) = (tokens[1], tokens[2]);
                    if let (Some(ca), Some(cb)) = (kb.concept_id(a), kb.concept_id(b)) {
                        let max = kb.area(ca).min(kb.area(cb));
                        if tokens[0] == "overlap" {
                            if !(0.0..=max).contains(&value) {
                                return Err(at(format!("overlap out of [0, {max}]")));
                            }
                            kb.concepts[ca.0 as usize].overlaps.insert(cb, value);
                            kb.concepts[cb.0 as usize].overlaps.insert(ca, value);
                        } else {
                            if !(-1.0..=1.0).contains(&value) {
                                return Err(at("impact out of [-1, 1]".into()));
                            }
                            kb.concepts[ca.0 as usize].impacts.insert(cb, value);
                        }
                    } else if let (Some(va), Some(vb)) = (kb.verb_id(a), kb.verb_id(b)) {
                        if tokens[0] == "overlap" {
                            kb.verbs[va.0 as usize].overlaps.insert(vb, value);
                            kb.verbs[vb.0 as usize].overlaps.insert(va, value);
                        } else {
                            kb.verbs[va.0 as usize].impacts.insert(vb, value);
                        }
                    } else {
                        return Err(at(format!("unknown symbol pair `{a}` `{b}`")));
                    }
                }
                "word" => {
                    // word <text> = <id>[:<f>] ...
                    let eq = tokens
                        .iter()
                        .position(|t| *t == "=")
                        .ok_or_else(|| at("missing `=` in word entry".into()))?;
                    if eq != 2 || tokens.len() < 4 {
                        return Err(at("word entry is `word <text> = <id>[:<f>] ...`".into()));
                    }
                    let word = tokens[1].to_string();
                    if kb.concept_words.contains_key(&word) || kb.verb_words.contains_key(&word) {
                        return Err(at(format!("duplicate word `{word}`")));
                    }
                    let mut specs = Vec::new();
                    for t in &tokens[3..] {
                        let (id, energy) = match t.split_once(':') {
                            Some((id, e)) => {
                                (id, e.parse::<f64>().map_err(|_| at(format!("bad energy `{e}`")))?)
                            }
                            None => (*t, 1.0),
                        };
                        if !(0.0 < energy && energy <= 1.0) {
                            return Err(at(format!("energy out of (0,1] for `{t}`")));
                        }
                        specs.push((id.to_string(), energy));
                    }
                    let all_concepts = specs.iter().all(|(id, _)| kb.concept_id(id).is_some());
                    let all_verbs = specs.iter().all(|(id, _)| kb.verb_id(id).is_some());
                    if all_concepts {
                        let mut o = ConceptOverlay::new();
                        for (id, e) in &specs {
                            o.energies.insert(kb.concept_id(id).unwrap(), *e);
                        }
                        kb.concept_words.insert(word, o);
                    } else if all_verbs {
                        let mut o = VerbOverlay::new();
                        for (id, e) in &specs {
                            o.energies.insert(kb.verb_id(id).unwrap(), *e);
                        }
                        kb.verb_words.insert(word, o);
                    } else {
                        return Err(at(format!(
                            "word `{word}` must map to only concepts or only verbs"
                        )));
                    }
                }
                "conflict" => {
                    if tokens.len() != 3 {
                        return Err(at("`conflict` takes two relation kinds".into()));
                    }
                    kb.conflicts
                        .insert((tokens[1].to_string(), tokens[2].to_string()));
                }
                other => return Err(at(format!("unknown directive `{other}`"))),
            }
        }
        Ok(kb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn kb() -> KnowledgeBase {
        KnowledgeBase::load(
            "concept girl area=1.0\n\
             concept young\nconcept female\nconcept human\nconcept wolf\n\
             concept alive\nconcept dead\n\
             impact dead alive -1.0\n\
             word girl = young female human\n\
             word young = young\n\
             verb hits side_effect=action\n\
             word hits = hits\n",
        )
        .unwrap()
    }

    #[test]
    fn add_identity_case() {
        let kb = kb();
        let girl = kb.concept_id("girl").unwrap();
        let mut o = ConceptOverlay::new();
        overlay_add(&mut o, &Overlay::singleton(girl, 1.0), 1.0, &kb).unwrap();
        assert_abs_diff_eq!(o.energy(girl), 1.0);
        assert_eq!(o.len(), 1);
    }

    #[test]
    fn add_impact_floors_but_keeps() {
        let kb = kb();
        let alive = kb.concept_id("alive").unwrap();
        let dead = kb.concept_id("dead").unwrap();
        let mut o = Overlay::singleton(alive, 1.0);
        overlay_add(&mut o, &Overlay::singleton(dead, 1.0), 1.0, &kb).unwrap();
        assert_abs_diff_eq!(o.energy(alive), ENERGY_FLOOR);
        assert_abs_diff_eq!(o.energy(dead), 1.0);
    }

    #[test]
    fn add_saturates_at_one() {
        let kb = kb();
        let young = kb.concept_id("young").unwrap();
        let mut o = Overlay::singleton(young, 0.8);
        overlay_add(&mut o, &Overlay::singleton(young, 0.5), 1.0, &kb).unwrap();
        assert_abs_diff_eq!(o.energy(young), 1.0);
    }

    #[test]
    fn match_self_and_disjoint() {
        let kb = kb();
        let girl = Overlay::singleton(kb.concept_id("girl").unwrap(), 1.0);
        let wolf = Overlay::singleton(kb.concept_id("wolf").unwrap(), 1.0);
        assert_abs_diff_eq!(overlay_match(&girl, &girl, &kb), 1.0);
        assert_abs_diff_eq!(overlay_match(&girl, &wolf, &kb), 0.0);
    }

    #[test]
    fn match_partial() {
        let kb = kb();
        let young = kb.concept_id("young").unwrap();
        let female = kb.concept_id("female").unwrap();
        let mut a = Overlay::singleton(young, 1.0);
        overlay_add(&mut a, &Overlay::singleton(female, 1.0), 1.0, &kb).unwrap();
        let b = Overlay::singleton(female, 1.0);
        assert_abs_diff_eq!(overlay_match(&a, &b, &kb), 1.0 / 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn dictionary_girl_and_names() {
        let mut kb = kb();
        let girl = kb.lookup_concept_word("girl", "test").unwrap();
        for c in ["young", "female", "human"] {
            assert_abs_diff_eq!(girl.energy(kb.concept_id(c).unwrap()), 1.0);
        }
        let lrrh = kb.lookup_concept_word("\"LRRH\"", "test").unwrap();
        let name = kb.concept_id("name_LRRH").unwrap();
        assert_abs_diff_eq!(lrrh.energy(name), 1.0);
        // second lookup reuses the minted concept
        let again = kb.lookup_concept_word("\"LRRH\"", "test").unwrap();
        assert_eq!(lrrh, again);
        assert!(matches!(
            kb.lookup_concept_word("zorgon", "test"),
            Err(XapagyError::UnknownWord { .. })
        ));
    }

    #[test]
    fn duplicate_rejected() {
        assert!(KnowledgeBase::load("concept a\nconcept a\n").is_err());
        assert!(KnowledgeBase::load("concept a\nword w = a\nword w = a\n").is_err());
    }
}

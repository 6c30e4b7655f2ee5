//! Shadows: for each focus item, a weighted body of memory items maintained
//! by diffusion.
//!
//! All rules are applied against a pre-step snapshot and committed together
//! (Jacobi style), with a fixed ascending-id iteration order, so a step is a
//! deterministic function of the state. Body mass is capped per shadow; the
//! cap renormalization is the resource limitation that keeps the dynamics
//! self-regulating.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::knowledge::{KnowledgeBase, overlay_match};
use crate::model::{InstanceId, ItemId, LinkKind, ViId};
use crate::state::{Focus, Memory};

pub type InstanceBody = BTreeMap<InstanceId, f64>;
pub type ViBody = BTreeMap<ViId, f64>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Shadows {
    /// Instance shadows: focus instance -> weighted memory instances.
    pub instances: BTreeMap<InstanceId, InstanceBody>,
    /// VI shadows: focus VI -> weighted memory VIs.
    pub vis: BTreeMap<ViId, ViBody>,
    /// Pure caches of pairwise overlay matches; rebuilt on demand, so they
    /// are skipped by snapshots. Instance entries are dropped whenever an
    /// instance's attributes change (is-a), VI verbs never change.
    #[serde(skip)]
    inst_match_cache: HashMap<(InstanceId, InstanceId), f64>,
    #[serde(skip)]
    vi_match_cache: HashMap<(ViId, ViId), f64>,
}

fn cap_normalize<K: Ord + Copy>(body: &mut BTreeMap<K, f64>, cap: f64, floor: f64) {
    body.retain(|_, e| *e >= floor);
    let mass: f64 = body.values().sum();
    if mass > cap {
        let scale = cap / mass;
        for e in body.values_mut() {
            *e *= scale;
        }
    }
}

/// Sharpening transfer within one scene group: the strongest member gains
/// what the others lose; scene mass is conserved.
fn sharpen<K: Ord + Copy>(groups: BTreeMap<InstanceId, Vec<(K, f64)>>, delta_dt: f64) -> Vec<(K, f64)> {
    let mut deltas = Vec::new();
    for (_, members) in groups {
        if members.len() < 2 {
            continue;
        }
        let winner = members
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(k, _)| *k)
            .unwrap();
        let mass: f64 = members.iter().map(|(_, e)| e).sum();
        let winner_e = members.iter().find(|(k, _)| *k == winner).unwrap().1;
        let transfer = delta_dt * (mass - winner_e);
        if transfer <= 0.0 {
            continue;
        }
        deltas.push((winner, transfer));
        for (k, e) in &members {
            if *k != winner {
                deltas.push((*k, -delta_dt * e));
            }
        }
    }
    deltas
}

impl Shadows {
    pub fn new() -> Shadows {
        Shadows {
            instances: BTreeMap::new(),
            vis: BTreeMap::new(),
            inst_match_cache: HashMap::new(),
            vi_match_cache: HashMap::new(),
        }
    }

    /// Drop cached attribute matches involving an instance whose attribute
    /// overlay just changed.
    pub fn invalidate_instance_matches(&mut self, id: InstanceId) {
        self.inst_match_cache.retain(|(a, b), _| *a != id && *b != id);
    }

    /// New shadow for a just-inserted focus instance.
    pub fn create_instance_shadow(&mut self, head: InstanceId, seed: InstanceBody, cap: f64) {
        debug_assert!(!self.instances.contains_key(&head), "duplicate shadow for {head:?}");
        let mut body = seed;
        body.remove(&head);
        cap_normalize(&mut body, cap, 0.0);
        self.instances.insert(head, body);
    }

    /// New shadow for a just-inserted focus VI, optionally seeded from the
    /// headless shadow that predicted it.
    pub fn create_vi_shadow(&mut self, head: ViId, seed: ViBody, cap: f64) {
        debug_assert!(!self.vis.contains_key(&head), "duplicate shadow for {head:?}");
        let mut body = seed;
        body.remove(&head);
        cap_normalize(&mut body, cap, 0.0);
        self.vis.insert(head, body);
    }

    pub fn drop_head(&mut self, head: ItemId) {
        match head {
            ItemId::Instance(i) => {
                self.instances.remove(&i);
            }
            ItemId::Vi(v) => {
                self.vis.remove(&v);
            }
        }
    }

    pub fn instance_energy(&self, head: InstanceId, member: InstanceId) -> f64 {
        self.instances
            .get(&head)
            .and_then(|b| b.get(&member))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn vi_energy(&self, head: ViId, member: ViId) -> f64 {
        self.vis.get(&head).and_then(|b| b.get(&member)).copied().unwrap_or(0.0)
    }

    /// Relative share of a memory instance in every shadow that holds it.
    pub fn reverse_instance_shadow(&self, member: InstanceId) -> BTreeMap<InstanceId, f64> {
        let mut out = BTreeMap::new();
        for (head, body) in &self.instances {
            if let Some(e) = body.get(&member) {
                let mass: f64 = body.values().sum();
                if mass > 0.0 {
                    out.insert(*head, e / mass);
                }
            }
        }
        out
    }

    /// One diffusion interval over all shadows.
    ///
    /// `rate_scale` is the mood relaxation multiplier applied to the gain
    /// rules (not to decay).
    pub fn diffusion_step(
        &mut self,
        dt: f64,
        kb: &KnowledgeBase,
        memory: &Memory,
        focus: &Focus,
        config: &Config,
        rate_scale: f64,
    ) {
        if dt <= 0.0 {
            return;
        }
        let mut imc = std::mem::take(&mut self.inst_match_cache);
        let mut vmc = std::mem::take(&mut self.vi_match_cache);
        let snapshot = self.clone();
        let mut inst_match = |a: InstanceId, b: InstanceId| -> f64 {
            let key = if a <= b { (a, b) } else { (b, a) };
            *imc.entry(key).or_insert_with(|| {
                overlay_match(&memory.instances[&a].attributes, &memory.instances[&b].attributes, kb)
            })
        };
        let mut vi_match = |a: ViId, b: ViId| -> f64 {
            let key = if a <= b { (a, b) } else { (b, a) };
            *vmc.entry(key).or_insert_with(|| {
                overlay_match(&memory.vis[&a].verbs, &memory.vis[&b].verbs, kb)
            })
        };
        // identity closures computed at most once per body member per step
        let mut closure_cache: HashMap<InstanceId, BTreeSet<InstanceId>> = HashMap::new();
        let decay = (-config.shadow_mu * dt).exp();
        let rate_b = config.shadow_rate_head_match * rate_scale;
        let rate_c = config.shadow_rate_body_match * rate_scale;
        let rate_d = config.shadow_rate_verb_match * rate_scale;
        let rate_e = config.shadow_rate_identity * rate_scale;
        let rate_f = config.shadow_rate_link * rate_scale;

        // memory items that have left the focus are the only shadow material
        let inst_candidates: Vec<InstanceId> = memory
            .instances
            .keys()
            .filter(|i| !focus.contains(ItemId::Instance(**i)))
            .copied()
            .collect();
        let vi_candidates: Vec<ViId> = memory
            .vis
            .keys()
            .filter(|v| !focus.contains(ItemId::Vi(**v)))
            .copied()
            .collect();
        let pool_ok = |id: ItemId| {
            memory.salience(id).unwrap_or(0.0) >= config.shadow_salience_floor
        };

        // feedback from the VI verb-match rule into part shadows
        let mut part_feedback: Vec<(InstanceId, InstanceId, f64)> = Vec::new();

        let mut new_instances: BTreeMap<InstanceId, InstanceBody> = BTreeMap::new();
        for head in snapshot.instances.keys() {
            let old = &snapshot.instances[head];
            let mut body: InstanceBody = old.iter().map(|(k, e)| (*k, e * decay)).collect();
            // (e) identity with the head or with a body member, tabulated
            // up front so the candidate loop is a lookup
            let mut identity_gain: BTreeMap<InstanceId, f64> = BTreeMap::new();
            for m in memory.identity_closure(*head) {
                *identity_gain.entry(m).or_insert(0.0) += rate_e * dt;
            }
            for (b, e) in old {
                let closure = closure_cache
                    .entry(*b)
                    .or_insert_with(|| memory.identity_closure(*b));
                for m in closure.iter() {
                    if m != b {
                        *identity_gain.entry(*m).or_insert(0.0) += rate_e * e * dt;
                    }
                }
            }
            for m in &inst_candidates {
                let mut gain = 0.0;
                // (b) attributes matching the head, salience-weighted
                if pool_ok((*m).into()) {
                    let mm = inst_match(*head, *m);
                    if mm > 0.0 {
                        gain += rate_b * mm * memory.salience((*m).into()).unwrap_or(0.0) * dt;
                    }
                    // (c) attributes matching some body member
                    let mut best = 0.0f64;
                    for (b, e) in old {
                        if b == m {
                            best = best.max(*e);
                            continue;
                        }
                        best = best.max(inst_match(*b, *m) * e);
                    }
                    if best > 0.0 {
                        gain += rate_c * config.shadow_beta * best * dt;
                    }
                }
                gain += identity_gain.get(m).copied().unwrap_or(0.0);
                if gain > 0.0 {
                    *body.entry(*m).or_insert(0.0) += gain;
                }
            }
            // (g) same-scene sharpening over the pre-step body
            let mut groups: BTreeMap<InstanceId, Vec<(InstanceId, f64)>> = BTreeMap::new();
            for (b, e) in old {
                groups.entry(memory.instances[b].scene).or_default().push((*b, *e));
            }
            for (k, d) in sharpen(groups, config.shadow_delta * dt) {
                *body.entry(k).or_insert(0.0) += d;
            }
            new_instances.insert(*head, body);
        }

        let mut new_vis: BTreeMap<ViId, ViBody> = BTreeMap::new();
        for head in snapshot.vis.keys() {
            let old = &snapshot.vis[head];
            let head_vi = &memory.vis[head];
            let mut body: ViBody = old.iter().map(|(k, e)| (*k, e * decay)).collect();
            for m in &vi_candidates {
                if m == head || !pool_ok((*m).into()) {
                    continue;
                }
                let mem = &memory.vis[m];
                // (d) verb match, amplified by part-shadowing
                let vm = vi_match(*head, *m);
                if vm > 0.0 {
                    let mut amp = 1.0;
                    let mut parts = Vec::new();
                    let pairs = [
                        (Some(head_vi.subject), Some(mem.subject)),
                        (head_vi.object_instance(), mem.object_instance()),
                    ];
                    for (hp, mp) in pairs.into_iter() {
                        if let (Some(hp), Some(mp)) = (hp, mp) {
                            let e = snapshot.instance_energy(hp, mp);
                            amp += e;
                            parts.push((hp, mp));
                        }
                    }
                    let gain = rate_d * vm * amp * dt;
                    *body.entry(*m).or_insert(0.0) += gain;
                    for (hp, mp) in parts {
                        part_feedback.push((hp, mp, config.shadow_gamma * gain));
                    }
                }
            }
            // (f) link consistency with the shadows of linked focus VIs
            let focus_out: Vec<(LinkKind, ViId, f64)> = memory
                .vi_links_out(*head)
                .iter()
                .filter(|(_, t, _)| focus.contains(ItemId::Vi(*t)))
                .copied()
                .collect();
            let focus_in: Vec<(LinkKind, ViId, f64)> = memory
                .vi_links_in(*head)
                .iter()
                .filter(|(_, f, _)| focus.contains(ItemId::Vi(*f)))
                .copied()
                .collect();
            if !(focus_out.is_empty() && focus_in.is_empty()) {
                let mut deltas: Vec<(ViId, f64)> = Vec::new();
                for (b, _e) in old.iter() {
                    let mut gain = 0.0;
                    for (kind, b2, _) in memory.vi_links_out(*b) {
                        for (fk, h2, _) in &focus_out {
                            if kind == fk {
                                gain += snapshot.vi_energy(*h2, *b2);
                            }
                        }
                    }
                    for (kind, b2, _) in memory.vi_links_in(*b) {
                        for (fk, h2, _) in &focus_in {
                            if kind == fk {
                                gain += snapshot.vi_energy(*h2, *b2);
                            }
                        }
                    }
                    if gain > 0.0 {
                        deltas.push((*b, rate_f * gain * dt));
                    }
                }
                for (b, d) in deltas {
                    *body.entry(b).or_insert(0.0) += d;
                }
            }
            // (h) sharpening per dominant scene
            let mut groups: BTreeMap<InstanceId, Vec<(ViId, f64)>> = BTreeMap::new();
            for (b, e) in old {
                groups.entry(memory.vis[b].scene).or_default().push((*b, *e));
            }
            for (k, d) in sharpen(groups, config.shadow_delta * dt) {
                *body.entry(k).or_insert(0.0) += d;
            }
            new_vis.insert(*head, body);
        }

        for (hp, mp, gain) in part_feedback {
            if let Some(body) = new_instances.get_mut(&hp) {
                if !focus.contains(ItemId::Instance(mp)) {
                    *body.entry(mp).or_insert(0.0) += gain;
                }
            }
        }

        for body in new_instances.values_mut() {
            cap_normalize(body, config.shadow_cap, config.shadow_floor);
        }
        for body in new_vis.values_mut() {
            cap_normalize(body, config.shadow_cap, config.shadow_floor);
        }
        self.instances = new_instances;
        self.vis = new_vis;
        drop(inst_match);
        drop(vi_match);
        self.inst_match_cache = imc;
        self.vi_match_cache = vmc;
    }
}

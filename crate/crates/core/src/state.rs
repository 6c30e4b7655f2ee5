//! The focus (weighted working memory) and the append-only autobiographical
//! memory. Items that fall below the expiry threshold are tombstoned and can
//! never return to the focus.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::model::{InstanceId, Instance, ItemId, Link, LinkKind, VerbInstance, ViId};

/// Append-only record of everything the agent has experienced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Memory {
    pub instances: BTreeMap<InstanceId, Instance>,
    pub vis: BTreeMap<ViId, VerbInstance>,
    pub links: Vec<Link>,
    /// Outgoing VI links: from -> [(kind, to, weight)].
    vi_out: BTreeMap<ViId, Vec<(LinkKind, ViId, f64)>>,
    /// Incoming VI links: to -> [(kind, from, weight)].
    vi_in: BTreeMap<ViId, Vec<(LinkKind, ViId, f64)>>,
    /// Identity adjacency over instances.
    identity_adj: BTreeMap<InstanceId, BTreeSet<InstanceId>>,
    salience: BTreeMap<ItemId, f64>,
}

impl Memory {
    pub fn new() -> Memory {
        Memory {
            instances: BTreeMap::new(),
            vis: BTreeMap::new(),
            links: Vec::new(),
            vi_out: BTreeMap::new(),
            vi_in: BTreeMap::new(),
            identity_adj: BTreeMap::new(),
            salience: BTreeMap::new(),
        }
    }

    pub fn record_instance(&mut self, instance: Instance) {
        self.salience.entry(instance.id.into()).or_insert(0.0);
        self.instances.insert(instance.id, instance);
    }

    pub fn record_vi(&mut self, vi: VerbInstance) {
        self.salience.entry(vi.id.into()).or_insert(0.0);
        self.vis.insert(vi.id, vi);
    }

    pub fn record_link(&mut self, kind: LinkKind, from: ItemId, to: ItemId, weight: f64) {
        self.links.push(Link { kind, from, to, weight });
        match (from, to) {
            (ItemId::Vi(f), ItemId::Vi(t)) => {
                self.vi_out.entry(f).or_default().push((kind, t, weight));
                self.vi_in.entry(t).or_default().push((kind, f, weight));
            }
            (ItemId::Instance(f), ItemId::Instance(t)) if kind == LinkKind::Identity => {
                self.identity_adj.entry(f).or_default().insert(t);
                self.identity_adj.entry(t).or_default().insert(f);
            }
            _ => unreachable!("link kind/endpoint mismatch"),
        }
    }

    pub fn vi_links_out(&self, id: ViId) -> &[(LinkKind, ViId, f64)] {
        self.vi_out.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn vi_links_in(&self, id: ViId) -> &[(LinkKind, ViId, f64)] {
        self.vi_in.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Transitive closure over identity links, both directions, including `i`.
    pub fn identity_closure(&self, i: InstanceId) -> BTreeSet<InstanceId> {
        let mut seen = BTreeSet::from([i]);
        let mut stack = vec![i];
        while let Some(cur) = stack.pop() {
            if let Some(nexts) = self.identity_adj.get(&cur) {
                for n in nexts {
                    if seen.insert(*n) {
                        stack.push(*n);
                    }
                }
            }
        }
        seen
    }

    pub fn salience(&self, id: ItemId) -> Option<f64> {
        self.salience.get(&id).copied()
    }

    pub fn add_salience(&mut self, id: ItemId, amount: f64) {
        *self.salience.entry(id).or_insert(0.0) += amount;
    }
}

/// Weighted working set of recent instances and VIs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Focus {
    pub instance_strengths: BTreeMap<InstanceId, f64>,
    pub vi_strengths: BTreeMap<ViId, f64>,
    tombstones: BTreeSet<ItemId>,
    pub tick: u64,
}

/// Items expired during a decay step.
pub struct ExpiredItems {
    pub instances: Vec<InstanceId>,
    pub vis: Vec<ViId>,
}

impl Focus {
    pub fn new() -> Focus {
        Focus {
            instance_strengths: BTreeMap::new(),
            vi_strengths: BTreeMap::new(),
            tombstones: BTreeSet::new(),
            tick: 0,
        }
    }

    pub fn contains(&self, id: ItemId) -> bool {
        match id {
            ItemId::Instance(i) => self.instance_strengths.contains_key(&i),
            ItemId::Vi(v) => self.vi_strengths.contains_key(&v),
        }
    }

    pub fn strength(&self, id: ItemId) -> f64 {
        match id {
            ItemId::Instance(i) => self.instance_strengths.get(&i).copied().unwrap_or(0.0),
            ItemId::Vi(v) => self.vi_strengths.get(&v).copied().unwrap_or(0.0),
        }
    }

    pub fn is_expired(&self, id: ItemId) -> bool {
        self.tombstones.contains(&id)
    }

    /// Insert or reinforce an item at full strength.
    ///
    /// Panics on re-insertion of an expired id: once out, never back — any
    /// such call is an engine bug, not a recoverable condition.
    pub fn insert(&mut self, id: ItemId) {
        assert!(
            !self.tombstones.contains(&id),
            "focus re-insertion of expired item {id:?}"
        );
        match id {
            ItemId::Instance(i) => {
                self.instance_strengths.insert(i, 1.0);
            }
            ItemId::Vi(v) => {
                self.vi_strengths.insert(v, 1.0);
            }
        }
    }

    /// Multiply an item's strength (push-out and change expiry).
    pub fn scale(&mut self, id: ItemId, factor: f64) {
        match id {
            ItemId::Instance(i) => {
                if let Some(s) = self.instance_strengths.get_mut(&i) {
                    *s *= factor;
                }
            }
            ItemId::Vi(v) => {
                if let Some(s) = self.vi_strengths.get_mut(&v) {
                    *s *= factor;
                }
            }
        }
    }

    pub fn set_strength(&mut self, id: ItemId, value: f64) {
        match id {
            ItemId::Instance(i) => {
                if let Some(s) = self.instance_strengths.get_mut(&i) {
                    *s = value;
                }
            }
            ItemId::Vi(v) => {
                if let Some(s) = self.vi_strengths.get_mut(&v) {
                    *s = value;
                }
            }
        }
    }

    /// One decay interval: exponential decay for instances and action-like
    /// VIs, participant-min subordination for relation VIs, salience
    /// accumulation, and expiry below the threshold.
    pub fn decay_step(&mut self, dt: f64, config: &Config, memory: &mut Memory) -> ExpiredItems {
        let mut expired = ExpiredItems { instances: Vec::new(), vis: Vec::new() };
        if dt < 0.0 {
            return expired;
        }
        // salience accrues at the pre-decay strength
        for (id, s) in &self.instance_strengths {
            memory.add_salience((*id).into(), s * dt);
        }
        for (id, s) in &self.vi_strengths {
            memory.add_salience((*id).into(), s * dt);
        }
        if dt == 0.0 {
            return expired;
        }
        let inst_factor = (-config.focus_lambda * dt).exp();
        let vi_factor = (-config.focus_vi_lambda * dt).exp();
        for s in self.instance_strengths.values_mut() {
            *s *= inst_factor;
        }
        let relation_vis: Vec<ViId> = self
            .vi_strengths
            .keys()
            .filter(|v| memory.vis[v].relation_kind.is_some())
            .copied()
            .collect();
        for (id, s) in self.vi_strengths.iter_mut() {
            if memory.vis[id].relation_kind.is_none() {
                *s *= vi_factor;
            }
        }
        // relation VIs stay exactly as strong as their weakest participant
        for id in relation_vis {
            let strength = memory.vis[&id]
                .participants()
                .iter()
                .map(|p| self.instance_strengths.get(p).copied().unwrap_or(0.0))
                .fold(f64::INFINITY, f64::min);
            self.vi_strengths.insert(id, strength.min(1.0));
        }
        let expiry = config.focus_expiry;
        self.instance_strengths.retain(|id, s| {
            if *s < expiry {
                expired.instances.push(*id);
                false
            } else {
                true
            }
        });
        self.vi_strengths.retain(|id, s| {
            if *s < expiry {
                expired.vis.push(*id);
                false
            } else {
                true
            }
        });
        for i in &expired.instances {
            self.tombstones.insert((*i).into());
        }
        for v in &expired.vis {
            self.tombstones.insert((*v).into());
        }
        expired
    }
}

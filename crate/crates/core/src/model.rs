//! Instances, scenes, verb instances and inter-VI links.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::knowledge::{ConceptOverlay, VerbOverlay};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ViId(pub u64);

/// Scenes are instances flagged `is_scene`.
pub type SceneId = InstanceId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ItemId {
    Instance(InstanceId),
    Vi(ViId),
}

// Serialized as "i<N>" / "v<N>" so it can key JSON maps (salience table).
impl Serialize for ItemId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ItemId::Instance(i) => s.serialize_str(&format!("i{}", i.0)),
            ItemId::Vi(v) => s.serialize_str(&format!("v{}", v.0)),
        }
    }
}

impl<'de> Deserialize<'de> for ItemId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<ItemId, D::Error> {
        let text = String::deserialize(d)?;
        let (tag, digits) = text.split_at(1);
        let n: u64 = digits.parse().map_err(serde::de::Error::custom)?;
        match tag {
            "i" => Ok(ItemId::Instance(InstanceId(n))),
            "v" => Ok(ItemId::Vi(ViId(n))),
            _ => Err(serde::de::Error::custom(format!("bad item id `{text}`"))),
        }
    }
}

impl From<InstanceId> for ItemId {
    fn from(id: InstanceId) -> ItemId {
        ItemId::Instance(id)
    }
}

impl From<ViId> for ItemId {
    fn from(id: ViId) -> ItemId {
        ItemId::Vi(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViForm {
    SV,
    SVO,
    SVAdj,
    Quote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub id: InstanceId,
    pub attributes: ConceptOverlay,
    pub scene: SceneId,
    pub created_at: u64,
    pub is_scene: bool,
    pub is_group: bool,
    pub group_members: BTreeSet<InstanceId>,
}

/// Object slot of a recorded VI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ViObject {
    None,
    Instance(InstanceId),
    Adjective(ConceptOverlay),
    Inquit(ViId),
}

/// Immutable once recorded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerbInstance {
    pub id: ViId,
    pub form: ViForm,
    pub verbs: VerbOverlay,
    pub subject: InstanceId,
    pub object: ViObject,
    pub scene: SceneId,
    pub created_at: u64,
    pub is_question: bool,
    /// Set for persistent relation VIs; holds the relation kind.
    pub relation_kind: Option<String>,
    /// Set for action-side-effect VIs (succession sources).
    pub is_action: bool,
    /// Set for `in-summary`-marked VIs.
    pub is_summary: bool,
}

impl VerbInstance {
    /// Instance participants: subject plus an instance object.
    pub fn participants(&self) -> Vec<InstanceId> {
        let mut out = vec![self.subject];
        if let ViObject::Instance(o) = self.object {
            out.push(o);
        }
        out
    }

    pub fn object_instance(&self) -> Option<InstanceId> {
        match self.object {
            ViObject::Instance(o) => Some(o),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkKind {
    Succession,
    Coincidence,
    Context,
    Summarization,
    QuestionAnswer,
    Identity,
}

/// Directed permanent link. IDENTITY connects instances, all other kinds
/// connect VIs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Link {
    pub kind: LinkKind,
    pub from: ItemId,
    pub to: ItemId,
    pub weight: f64,
}

//! Line-delimited JSON trace with stable key order; records are totally
//! ordered by (tick, sequence).

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Narrated,
    InternalInferred,
    InternalRecalled,
}

impl Origin {
    pub fn name(self) -> &'static str {
        match self {
            Origin::Narrated => "narrated",
            Origin::InternalInferred => "internal-inferred",
            Origin::InternalRecalled => "internal-recalled",
        }
    }

    pub fn is_internal(self) -> bool {
        !matches!(self, Origin::Narrated)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<Value>,
    seq: u64,
}

impl Trace {
    pub fn new() -> Trace {
        Trace::default()
    }

    /// Emit a record; `fields` are appended after the tick/seq prefix in the
    /// given order.
    pub fn emit(&mut self, tick: u64, kind: &str, fields: Vec<(&str, Value)>) {
        let mut map = Map::new();
        map.insert("tick".into(), tick.into());
        map.insert("seq".into(), self.seq.into());
        map.insert("kind".into(), kind.into());
        for (k, v) in fields {
            map.insert(k.to_string(), v);
        }
        self.seq += 1;
        self.records.push(Value::Object(map));
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    /// Count of records of one kind.
    pub fn count(&self, kind: &str) -> usize {
        self.records
            .iter()
            .filter(|r| r.get("kind").and_then(Value::as_str) == Some(kind))
            .count()
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Value> + 'a {
        self.records
            .iter()
            .filter(move |r| r.get("kind").and_then(Value::as_str) == Some(kind))
    }
}

//! A narrative-reasoning engine for a pidgin story language: stories are
//! parsed into verb instances, held in a decaying focus, accumulated into
//! an autobiographical memory, and shadowed by weighted bodies of past
//! items. Headless shadows aggregated from the shadow field drive
//! expectation tracking, missing-event inference, summarization, recall
//! and confabulation.

pub mod config;
pub mod engine;
pub mod error;
pub mod hls;
pub mod knowledge;
pub mod model;
pub mod parser;
pub mod reasoning;
pub mod render;
pub mod shadow;
pub mod state;
pub mod trace;

pub use config::Config;
pub use engine::Agent;
pub use error::{Result, XapagyError};
pub use hls::{Hls, Purpose};
pub use knowledge::KnowledgeBase;
pub use model::{InstanceId, ItemId, ViForm, ViId};
pub use reasoning::Mood;
pub use trace::Origin;

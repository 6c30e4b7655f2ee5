//! Flat engine configuration: every tunable constant, with documented
//! defaults, settable from a config file or `--set k=v` overrides.

use serde::{Deserialize, Serialize};

use crate::error::{Result, XapagyError};

macro_rules! config_keys {
    ($( $field:ident : $key:literal = $default:expr ),* $(,)?) => {
        #[derive(Debug, Clone, Serialize, Deserialize)]
        pub struct Config {
            $(pub $field: f64,)*
        }

        impl Default for Config {
            fn default() -> Config {
                Config { $($field: $default,)* }
            }
        }

        impl Config {
            /// Set one key; unknown keys and unparseable values are errors.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let parsed: f64 = value
                    .parse()
                    .map_err(|_| XapagyError::Config(format!("bad value `{value}` for `{key}`")))?;
                match key {
                    $($key => self.$field = parsed,)*
                    _ => return Err(XapagyError::Config(format!("unknown key `{key}`"))),
                }
                Ok(())
            }

            /// All keys with current values, in declaration order.
            pub fn pairs(&self) -> Vec<(&'static str, f64)> {
                vec![$(($key, self.$field),)*]
            }
        }
    };
}

config_keys! {
    // focus dynamics
    focus_lambda: "focus.lambda" = 0.2,
    focus_vi_lambda: "focus.vi_lambda" = 0.2,
    focus_expiry: "focus.expiry" = 0.05,
    focus_push_out: "focus.push_out" = 0.5,
    focus_qa_window: "focus.qa_window" = 3.0,
    // shadow diffusion
    shadow_mu: "shadow.mu" = 0.1,
    shadow_rate_head_match: "shadow.rate_head_match" = 0.05,
    shadow_rate_body_match: "shadow.rate_body_match" = 0.05,
    shadow_rate_verb_match: "shadow.rate_verb_match" = 0.05,
    shadow_rate_identity: "shadow.rate_identity" = 0.05,
    shadow_rate_link: "shadow.rate_link" = 0.05,
    shadow_beta: "shadow.beta" = 0.5,
    shadow_gamma: "shadow.gamma" = 0.2,
    shadow_delta: "shadow.delta" = 0.1,
    shadow_cap: "shadow.cap" = 1.0,
    shadow_floor: "shadow.floor" = 0.001,
    shadow_salience_floor: "shadow.salience_floor" = 0.1,
    // HLS pipeline
    hls_theta_compat: "hls.theta_compat" = 0.8,
    hls_epsilon_svr: "hls.epsilon_svr" = 0.001,
    hls_new_floor: "hls.new_floor" = 0.1,
    // per-purpose evidence sign matrices
    support_continuation_successor: "support.continuation.successor" = 1.0,
    support_continuation_context_implication: "support.continuation.context_implication" = 0.5,
    support_continuation_elaboration: "support.continuation.elaboration" = 0.3,
    support_continuation_predecessor: "support.continuation.predecessor" = -1.0,
    support_continuation_in_shadow: "support.continuation.in_shadow" = -1.0,
    support_missing_action_predecessor: "support.missing_action.predecessor" = 1.0,
    support_missing_action_context_implication: "support.missing_action.context_implication" = 0.3,
    support_missing_action_in_shadow: "support.missing_action.in_shadow" = -1.0,
    support_missing_action_successor: "support.missing_action.successor" = -0.5,
    support_missing_relation_context: "support.missing_relation.context" = 1.0,
    support_missing_relation_in_shadow: "support.missing_relation.in_shadow" = -1.0,
    support_summarization_summary: "support.summarization.summary" = 1.0,
    support_summarization_in_shadow: "support.summarization.in_shadow" = -1.0,
    // mood presets
    mood_budget: "mood.budget" = 10.0,
    mood_threshold_continuation: "mood.threshold.continuation" = 0.02,
    mood_threshold_missing_action: "mood.threshold.missing_action" = 0.05,
    mood_threshold_missing_relation: "mood.threshold.missing_relation" = 0.05,
    mood_threshold_summarization: "mood.threshold.summarization" = 0.05,
    mood_confabulation_relaxation: "mood.confabulation.relaxation" = 1.5,
    // reasoning
    recall_top_k: "recall.top_k" = 3.0,
    summary_window: "summary.window" = 3.0,
    // RNG
    seed: "seed" = 0.0,
}

impl Config {
    /// Parse a `key = value` config file (`#` comments, blank lines ignored).
    pub fn load(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, text: &str) -> Result<()> {
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| XapagyError::Config(format!("missing `=` in `{line}`")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_and_reject() {
        let mut c = Config::default();
        c.set("focus.lambda", "0.3").unwrap();
        assert_eq!(c.focus_lambda, 0.3);
        assert!(c.set("focus.lambda", "abc").is_err());
        assert!(c.set("no.such.key", "1").is_err());
    }
}

//! Recursive-descent parser for the Xapi pidgin.
//!
//! One statement per call. Sentence parts are separated by `/`, statements
//! terminate with `.` or `?`, quotes carry an inquit after `//`, relation
//! references use `--word--` infixes (with or without spaces), groups join
//! members with `+`, and `$`-statements are macros.

use serde::{Deserialize, Serialize};

use crate::error::{Result, XapagyError};
use crate::knowledge::{ConceptOverlay, KnowledgeBase, SideEffect, VerbOverlay, overlay_add};
use crate::model::ViForm;

pub const MAX_CHAIN_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Article {
    None,
    Indefinite,
    Definite,
}

/// A reference expression: attribute words, an optional relation chain,
/// or a `+`-joined group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefExpr {
    pub article: Article,
    pub attributes: Vec<String>,
    /// (relation word, tail reference) pairs, outermost first.
    pub chain: Vec<(String, RefExpr)>,
    pub group: Vec<RefExpr>,
}

impl RefExpr {
    pub fn attr(article: Article, attributes: Vec<String>) -> RefExpr {
        RefExpr { article, attributes, chain: Vec::new(), group: Vec::new() }
    }

    pub fn is_group(&self) -> bool {
        !self.group.is_empty()
    }

    /// Surface rendering for error messages and traces.
    pub fn describe(&self) -> String {
        if self.is_group() {
            return self
                .group
                .iter()
                .map(|g| g.describe())
                .collect::<Vec<_>>()
                .join(" + ");
        }
        let mut s = match self.article {
            Article::None => String::new(),
            Article::Indefinite => "a ".to_string(),
            Article::Definite => "the ".to_string(),
        };
        s.push_str(&self.attributes.join(" "));
        for (rel, tail) in &self.chain {
            s.push_str(&format!(" --{}-- {}", rel, tail.describe()));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ObjectReq {
    None,
    Ref(RefExpr),
    Adjective(ConceptOverlay),
    Inquit(Box<ViRequest>),
}

/// A parsed request for VI creation; references are still unresolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViRequest {
    pub form: ViForm,
    pub subject: RefExpr,
    pub verbs: VerbOverlay,
    pub object: ObjectReq,
    /// Scene reference of a QUOTE.
    pub scene_ref: Option<RefExpr>,
    pub is_question: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSpec {
    pub attributes: Vec<String>,
    pub label: String,
    /// Reference resolved in the previously current scene.
    pub identity_target: Option<RefExpr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MacroRequest {
    NewSceneCurrent {
        name: String,
        relation: String,
        members: Vec<MemberSpec>,
    },
    /// `$.//` — reuse the most recent quote prefix with a new inquit.
    QuoteContinuation { inquit: Box<ViRequest> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Request {
    Vi(ViRequest),
    Macro(MacroRequest),
}

/// Split on a separator, ignoring separators inside quoted strings.
fn split_top(text: &str, sep: char) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_quote = false;
    for c in text.chars() {
        if c == '"' {
            in_quote = !in_quote;
        }
        if c == sep && !in_quote {
            out.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    out.push(cur);
    out
}

/// Find a top-level occurrence of a two-character separator.
fn find_top(text: &str, pat: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let pat = pat.as_bytes();
    let mut in_quote = false;
    let mut i = 0;
    while i + pat.len() <= bytes.len() {
        if bytes[i] == b'"' {
            in_quote = !in_quote;
        }
        if !in_quote && &bytes[i..i + pat.len()] == pat {
            return Some(i);
        }
        i += 1;
    }
    None
}

fn tokenize(text: &str, position: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            let mut tok = String::from('"');
            chars.next();
            loop {
                match chars.next() {
                    Some('"') => {
                        tok.push('"');
                        break;
                    }
                    Some(ch) => tok.push(ch),
                    None => {
                        return Err(XapagyError::Syntax {
                            position: position.to_string(),
                            message: "unterminated quoted name".into(),
                        })
                    }
                }
            }
            out.push(tok);
        } else {
            let mut tok = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || ch == '"' {
                    break;
                }
                tok.push(ch);
                chars.next();
            }
            out.push(tok);
        }
    }
    Ok(out)
}

fn parse_atomic(tokens: &[String], position: &str) -> Result<RefExpr> {
    if tokens.is_empty() {
        return Err(XapagyError::Syntax {
            position: position.to_string(),
            message: "empty reference".into(),
        });
    }
    let (article, rest) = match tokens[0].to_ascii_lowercase().as_str() {
        "a" | "an" => (Article::Indefinite, &tokens[1..]),
        "the" => (Article::Definite, &tokens[1..]),
        _ => (Article::None, &tokens[..]),
    };
    if rest.is_empty() {
        return Err(XapagyError::Syntax {
            position: position.to_string(),
            message: "reference has article but no attributes".into(),
        });
    }
    Ok(RefExpr::attr(article, rest.to_vec()))
}

fn parse_group_or_atomic(text: &str, position: &str) -> Result<RefExpr> {
    let members = split_top(text, '+');
    if members.len() >= 2 {
        let group = members
            .iter()
            .map(|m| parse_atomic(&tokenize(m, position)?, position))
            .collect::<Result<Vec<_>>>()?;
        return Ok(RefExpr {
            article: Article::None,
            attributes: Vec::new(),
            chain: Vec::new(),
            group,
        });
    }
    parse_atomic(&tokenize(text, position)?, position)
}

/// Part → reference expression with `--rel--` chains and `+` groups.
pub fn parse_ref(text: &str, position: &str) -> Result<RefExpr> {
    let segments: Vec<&str> = text.split("--").collect();
    if segments.len() % 2 == 0 {
        return Err(XapagyError::Syntax {
            position: position.to_string(),
            message: "unbalanced `--` relation infix".into(),
        });
    }
    let mut head = parse_group_or_atomic(segments[0], position)?;
    let mut chain = Vec::new();
    let mut i = 1;
    while i < segments.len() {
        let rel = segments[i].trim().to_string();
        if rel.is_empty() || rel.split_whitespace().count() != 1 {
            return Err(XapagyError::Syntax {
                position: position.to_string(),
                message: format!("relation infix must be one word, got `{}`", segments[i].trim()),
            });
        }
        let tail = parse_group_or_atomic(segments[i + 1], position)?;
        chain.push((rel, tail));
        i += 2;
    }
    if chain.len() > MAX_CHAIN_DEPTH {
        return Err(XapagyError::Syntax {
            position: position.to_string(),
            message: format!("relation chain deeper than {MAX_CHAIN_DEPTH}"),
        });
    }
    if !chain.is_empty() && head.article == Article::Indefinite {
        return Err(XapagyError::Syntax {
            position: position.to_string(),
            message: "`a/an` reference cannot carry a relation chain".into(),
        });
    }
    head.chain = chain;
    Ok(head)
}

fn merge_verb_words(
    tokens: &[String],
    kb: &KnowledgeBase,
    position: &str,
) -> Result<VerbOverlay> {
    if tokens.is_empty() {
        return Err(XapagyError::Syntax {
            position: position.to_string(),
            message: "empty verb part".into(),
        });
    }
    let mut verbs = VerbOverlay::new();
    for word in tokens {
        let tpl = kb.lookup_verb_word(word, position)?;
        overlay_add(&mut verbs, &tpl, 1.0, kb)?;
    }
    Ok(verbs)
}

fn merge_concept_words(
    tokens: &[String],
    kb: &mut KnowledgeBase,
    position: &str,
) -> Result<ConceptOverlay> {
    let mut attrs = ConceptOverlay::new();
    for word in tokens {
        let tpl = kb.lookup_concept_word(word, position)?;
        overlay_add(&mut attrs, &tpl, 1.0, kb)?;
    }
    Ok(attrs)
}

fn parse_simple(
    text: &str,
    is_question: bool,
    kb: &mut KnowledgeBase,
    position: &str,
) -> Result<ViRequest> {
    let parts = split_top(text, '/');
    if parts.len() < 2 || parts.len() > 3 {
        return Err(XapagyError::Syntax {
            position: position.to_string(),
            message: format!("expected 2 or 3 parts, found {}", parts.len()),
        });
    }
    let subject = parse_ref(&parts[0], position)?;
    let verb_tokens = tokenize(&parts[1], position)?;
    let verbs = merge_verb_words(&verb_tokens, kb, position)?;
    if parts.len() == 2 {
        return Ok(ViRequest {
            form: ViForm::SV,
            subject,
            verbs,
            object: ObjectReq::None,
            scene_ref: None,
            is_question,
        });
    }
    let adjectival = kb.has_effect(&verbs, |e| matches!(e, SideEffect::IsA | SideEffect::Changes));
    if adjectival {
        let words = tokenize(&parts[2], position)?;
        let overlay = merge_concept_words(&words, kb, position)?;
        if overlay.is_empty() {
            return Err(XapagyError::Syntax {
                position: position.to_string(),
                message: "empty adjective part".into(),
            });
        }
        Ok(ViRequest {
            form: ViForm::SVAdj,
            subject,
            verbs,
            object: ObjectReq::Adjective(overlay),
            scene_ref: None,
            is_question,
        })
    } else {
        Ok(ViRequest {
            form: ViForm::SVO,
            subject,
            verbs,
            object: ObjectReq::Ref(parse_ref(&parts[2], position)?),
            scene_ref: None,
            is_question,
        })
    }
}

fn parse_quote(
    prefix: &str,
    inquit_text: &str,
    is_question: bool,
    kb: &mut KnowledgeBase,
    position: &str,
) -> Result<ViRequest> {
    let parts = split_top(prefix, '/');
    if parts.len() != 2 {
        return Err(XapagyError::Syntax {
            position: position.to_string(),
            message: "quote prefix needs exactly `subject / verb in scene`".into(),
        });
    }
    let subject = parse_ref(&parts[0], position)?;
    let tokens = tokenize(&parts[1], position)?;
    let in_pos = tokens.iter().position(|t| t == "in").ok_or_else(|| XapagyError::Syntax {
        position: position.to_string(),
        message: "quote verb part must contain `in <scene>`".into(),
    })?;
    let verbs = merge_verb_words(&tokens[..in_pos], kb, position)?;
    let scene_ref = parse_atomic(&tokens[in_pos + 1..], position)?;
    let inquit = parse_simple(inquit_text, is_question, kb, position)?;
    Ok(ViRequest {
        form: ViForm::Quote,
        subject,
        verbs,
        object: ObjectReq::Inquit(Box::new(inquit)),
        scene_ref: Some(scene_ref),
        is_question,
    })
}

fn parse_macro(text: &str, kb: &mut KnowledgeBase, position: &str) -> Result<MacroRequest> {
    if let Some(rest) = text.strip_prefix("$.//") {
        let body = rest.trim();
        let (body, is_question) = strip_terminator(body, position)?;
        let inquit = parse_simple(body, is_question, kb, position)?;
        return Ok(MacroRequest::QuoteContinuation { inquit: Box::new(inquit) });
    }
    if let Some(rest) = text.strip_prefix("$NewSceneCurrent") {
        let fields = split_top(rest.trim().trim_end_matches('.'), ',');
        if fields.len() < 2 {
            return Err(XapagyError::Syntax {
                position: position.to_string(),
                message: "$NewSceneCurrent needs `<name>, <relation>[, members...]`".into(),
            });
        }
        let name_tok = tokenize(&fields[0], position)?;
        let name = match name_tok.as_slice() {
            [n] if n.starts_with('"') => n[1..n.len() - 1].to_string(),
            _ => {
                return Err(XapagyError::Syntax {
                    position: position.to_string(),
                    message: "scene name must be a single quoted name".into(),
                })
            }
        };
        let relation = fields[1].trim().to_string();
        let mut members = Vec::new();
        for field in &fields[2..] {
            let (left, target) = match find_top(field, "->") {
                Some(i) => (&field[..i], Some(parse_ref(&field[i + 2..], position)?)),
                None => (&field[..], None),
            };
            let tokens = tokenize(left, position)?;
            let label_pos = tokens.iter().rposition(|t| t.starts_with('"')).ok_or_else(|| {
                XapagyError::Syntax {
                    position: position.to_string(),
                    message: format!("member spec `{}` has no quoted label", field.trim()),
                }
            })?;
            let label = tokens[label_pos][1..tokens[label_pos].len() - 1].to_string();
            let attributes: Vec<String> = tokens
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != label_pos)
                .map(|(_, t)| t.clone())
                .collect();
            members.push(MemberSpec { attributes, label, identity_target: target });
        }
        return Ok(MacroRequest::NewSceneCurrent { name, relation, members });
    }
    let name = text.split_whitespace().next().unwrap_or(text).to_string();
    Err(XapagyError::UnknownMacro { name })
}

fn strip_terminator<'a>(text: &'a str, position: &str) -> Result<(&'a str, bool)> {
    let trimmed = text.trim_end();
    if let Some(body) = trimmed.strip_suffix('.') {
        Ok((body, false))
    } else if let Some(body) = trimmed.strip_suffix('?') {
        Ok((body, true))
    } else {
        Err(XapagyError::Syntax {
            position: position.to_string(),
            message: "statement must end with `.` or `?`".into(),
        })
    }
}

/// Concept words are resolved against the dictionary lazily (quoted words
/// mint proper names), but unknown plain words are a parse error.
fn validate_ref(r: &RefExpr, kb: &KnowledgeBase, position: &str) -> Result<()> {
    for word in &r.attributes {
        if !word.starts_with('"') && !kb.concept_word_entries().any(|(w, _)| w == word) {
            return Err(XapagyError::UnknownWord {
                word: word.clone(),
                position: position.to_string(),
            });
        }
    }
    for (rel, tail) in &r.chain {
        if rel != "in" {
            kb.lookup_verb_word(rel, position)?;
        }
        validate_ref(tail, kb, position)?;
    }
    for member in &r.group {
        validate_ref(member, kb, position)?;
    }
    Ok(())
}

fn validate_request(req: &ViRequest, kb: &KnowledgeBase, position: &str) -> Result<()> {
    validate_ref(&req.subject, kb, position)?;
    match &req.object {
        ObjectReq::Ref(r) => validate_ref(r, kb, position)?,
        ObjectReq::Inquit(inner) => validate_request(inner, kb, position)?,
        _ => {}
    }
    if let Some(scene_ref) = &req.scene_ref {
        validate_ref(scene_ref, kb, position)?;
    }
    Ok(())
}

/// Parse one Xapi statement.
pub fn parse(text: &str, kb: &mut KnowledgeBase, position: &str) -> Result<Request> {
    let text = text.trim();
    if text.starts_with('$') {
        return Ok(Request::Macro(parse_macro(text, kb, position)?));
    }
    let (body, is_question) = strip_terminator(text, position)?;
    let vi = if let Some(split) = find_top(body, "//") {
        parse_quote(&body[..split], &body[split + 2..], is_question, kb, position)?
    } else {
        parse_simple(body, is_question, kb, position)?
    };
    validate_request(&vi, kb, position)?;
    Ok(Request::Vi(vi))
}

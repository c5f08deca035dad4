//! Agent behavior: profile synthesis, comment-or-ignore prediction and
//! purchase-inclination self-assessment behind one policy interface.

mod llm;
pub mod text;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{InteractionEvent, UserRecord};
use crate::ids::{ContentId, UserId};
use crate::rng;

pub use llm::{LlmConfig, LlmPolicy, Templates, API_KEY_ENV};

pub const MAX_INCLINATION: u8 = 5;
pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 0.1;
const PROFILE_TAGS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("text to assess is empty")]
    EmptyText,
    #[error("no visible content to react to")]
    NoVisibleContent,
    #[error("behavior backend unavailable after {attempts} attempts: {message}")]
    BackendUnavailable { attempts: u32, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub user_id: UserId,
    pub interest_tags: Vec<String>,
    pub activity_level: f64,
    pub persona_summary: String,
}

impl AgentProfile {
    pub fn tag_set(&self) -> BTreeSet<String> {
        self.interest_tags.iter().cloned().collect()
    }
}

/// Deterministic profile: top tokens over the user's posts and history,
/// activity from the event count.
pub fn build_profile<'a>(
    user: &UserRecord,
    history: impl IntoIterator<Item = &'a InteractionEvent>,
) -> AgentProfile {
    let history: Vec<&InteractionEvent> = history.into_iter().collect();
    let texts = user
        .post_texts
        .iter()
        .map(String::as_str)
        .chain(history.iter().map(|e| e.text.as_str()));
    let interest_tags = text::top_tokens(texts, PROFILE_TAGS);
    let activity_level = (history.len() as f64 / 100.0).min(1.0);
    let persona_summary = if interest_tags.is_empty() {
        format!("{} has no stated interests.", user.user_id)
    } else {
        format!(
            "{} is interested in {} (activity {:.2}).",
            user.user_id,
            interest_tags.join(", "),
            activity_level
        )
    };
    AgentProfile {
        user_id: user.user_id.clone(),
        interest_tags,
        activity_level,
        persona_summary,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryItem {
    pub text: String,
    pub timestamp_min: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleContent {
    pub content_id: ContentId,
    pub text: String,
    pub author: UserId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorContext {
    pub profile: AgentProfile,
    pub influencer_profile: AgentProfile,
    pub history: Vec<HistoryItem>,
    pub visible_contents: Vec<VisibleContent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Comment,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reaction {
    pub action: Action,
    pub text: String,
    pub target_content: ContentId,
    pub inclination: Option<u8>,
}

impl Reaction {
    pub fn ignore(target: ContentId) -> Self {
        Self {
            action: Action::Ignore,
            text: String::new(),
            target_content: target,
            inclination: None,
        }
    }

    pub fn comment(target: ContentId, text: String, inclination: u8) -> Self {
        Self {
            action: Action::Comment,
            text,
            target_content: target,
            inclination: Some(inclination.min(MAX_INCLINATION)),
        }
    }

    pub fn is_comment(&self) -> bool {
        self.action == Action::Comment
    }
}

/// A backend deciding how one agent reacts to what it sees.
pub trait BehaviorPolicy: Send + Sync {
    fn name(&self) -> &'static str;

    fn build_profile(&self, user: &UserRecord, history: &[&InteractionEvent]) -> AgentProfile {
        build_profile(user, history.iter().copied())
    }

    /// At most one reaction per visible content, in visible order.
    fn predict_reaction(&self, ctx: &BehaviorContext, seed: u64) -> Result<Vec<Reaction>, AgentError>;

    fn assess_inclination(&self, text: &str) -> Result<u8, AgentError>;

    /// Replies that could not be parsed and were downgraded to ignore.
    fn parse_failures(&self) -> u64 {
        0
    }
}

/// Jaccard overlap between the agent's interests and a content's tokens,
/// plus the best shared tag to mention.
fn overlap(profile_tags: &BTreeSet<String>, content: &str) -> (f64, Option<String>) {
    let tokens = text::token_set(content);
    let shared = profile_tags.intersection(&tokens).next().cloned();
    (text::jaccard(profile_tags, &tokens), shared)
}

pub fn inclination_from_overlap(overlap: f64) -> u8 {
    (5.0 * (2.0 * overlap).min(1.0)).round() as u8
}

/// Comment wording for each inclination level; `assess_inclination` maps each
/// back to its level.
pub fn comment_text(inclination: u8, tag: &str) -> String {
    match inclination {
        5.. => format!("I will definitely buy this, perfect for my {tag} routine!"),
        4 => format!("Going to order one, looks good for {tag}."),
        3 => format!("Love this {tag} pick!"),
        2 => format!("Does it work well for {tag}?"),
        1 => format!("A bit pricey for {tag}, any discounts?"),
        0 => "Interesting post.".to_string(),
    }
}

const PURCHASE: &[&str] = &["buy", "buying", "order", "ordered", "ordering", "purchase", "purchased", "cart"];
const COMMITMENT: &[&str] = &["definitely", "will", "must", "already", "certainly", "ordered", "purchased"];
const NEGATION: &[&str] = &["not", "never", "won't", "wont", "don't", "dont", "no"];
const OBJECTION: &[&str] = &[
    "pricey", "expensive", "discount", "discounts", "price", "doubt", "scam", "overpriced", "fake",
];
const POSITIVE: &[&str] = &[
    "love", "great", "beautiful", "support", "amazing", "nice", "awesome", "wonderful", "good",
];

/// Keyword-valence lexicon: purchase commitment 5, purchase intent 4,
/// positive sentiment 3, questions 2, objections 1, anything else 0.
pub fn lexicon_inclination(text: &str) -> Result<u8, AgentError> {
    if text.trim().is_empty() {
        return Err(AgentError::EmptyText);
    }
    let lower = text.to_lowercase();
    let words: Vec<&str> = lower
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .collect();
    let has = |list: &[&str]| words.iter().any(|w| list.contains(w));
    if has(PURCHASE) {
        if has(NEGATION) {
            return Ok(1);
        }
        return Ok(if has(COMMITMENT) { 5 } else { 4 });
    }
    if has(OBJECTION) {
        return Ok(1);
    }
    if lower.contains('?') {
        return Ok(2);
    }
    if has(POSITIVE) {
        return Ok(3);
    }
    Ok(0)
}

/// Deterministic policy: comment iff interest overlap reaches the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleBasedPolicy {
    pub overlap_threshold: f64,
}

impl Default for RuleBasedPolicy {
    fn default() -> Self {
        Self {
            overlap_threshold: DEFAULT_OVERLAP_THRESHOLD,
        }
    }
}

impl RuleBasedPolicy {
    pub fn decide(&self, overlap: f64) -> bool {
        overlap > 0.0 && overlap >= self.overlap_threshold
    }
}

impl BehaviorPolicy for RuleBasedPolicy {
    fn name(&self) -> &'static str {
        "rule"
    }

    fn predict_reaction(&self, ctx: &BehaviorContext, _seed: u64) -> Result<Vec<Reaction>, AgentError> {
        if ctx.visible_contents.is_empty() {
            return Err(AgentError::NoVisibleContent);
        }
        let tags = ctx.profile.tag_set();
        Ok(ctx
            .visible_contents
            .iter()
            .map(|c| {
                let (ov, shared) = overlap(&tags, &c.text);
                if self.decide(ov) {
                    let inc = inclination_from_overlap(ov);
                    let tag = shared.unwrap_or_default();
                    Reaction::comment(c.content_id.clone(), comment_text(inc, &tag), inc)
                } else {
                    Reaction::ignore(c.content_id.clone())
                }
            })
            .collect())
    }

    fn assess_inclination(&self, text: &str) -> Result<u8, AgentError> {
        lexicon_inclination(text)
    }
}

/// Seeded policy: comments with probability min(1, 2 * overlap) and jitters
/// the overlap-derived inclination by at most one level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StochasticPolicy;

impl BehaviorPolicy for StochasticPolicy {
    fn name(&self) -> &'static str {
        "stochastic"
    }

    fn predict_reaction(&self, ctx: &BehaviorContext, seed: u64) -> Result<Vec<Reaction>, AgentError> {
        if ctx.visible_contents.is_empty() {
            return Err(AgentError::NoVisibleContent);
        }
        let tags = ctx.profile.tag_set();
        let user = rng::hash_str(ctx.profile.user_id.as_str());
        Ok(ctx
            .visible_contents
            .iter()
            .map(|c| {
                let (ov, shared) = overlap(&tags, &c.text);
                let key = [user, rng::hash_str(c.content_id.as_str())];
                let u = rng::unit_from(seed, &[key[0], key[1], 0]);
                if ov > 0.0 && u < (2.0 * ov).min(1.0) {
                    let jitter = (rng::unit_from(seed, &[key[0], key[1], 1]) * 3.0).floor() as i32 - 1;
                    let inc = (i32::from(inclination_from_overlap(ov)) + jitter).clamp(0, 5) as u8;
                    let tag = shared.unwrap_or_default();
                    Reaction::comment(c.content_id.clone(), comment_text(inc, &tag), inc)
                } else {
                    Reaction::ignore(c.content_id.clone())
                }
            })
            .collect())
    }

    fn assess_inclination(&self, text: &str) -> Result<u8, AgentError> {
        lexicon_inclination(text)
    }
}

//! Period-by-period campaign simulation, influence scoring and ranking.
//!
//! Each period draws the active users UT(t), keeps the influencer's
//! followers plus everyone who already commented, filters content through
//! the lifecycle model CL(t), asks the behavior policy how each active user
//! reacts to what they can see, and appends the resulting comments to the
//! interaction graph.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, AgentProfile, BehaviorContext, BehaviorPolicy, HistoryItem, Reaction, VisibleContent};
use crate::dataset::{Dataset, DatasetError, InteractionEvent};
use crate::graph::{CommentEdge, GraphError, InteractionGraph};
use crate::ids::{ContentId, UserId};
use crate::lifecycle::{
    expiration_period, extract_covariates, fit_coxph, observations_from_dataset, ContentLifecycleModel, ContentRecord,
    CoxConfig, LifecycleError,
};
use crate::metrics::{ndcg_at_k, MetricsError};
use crate::rng;
use crate::timeline::{fit_global, sample_active_users, EmConfig, PeriodClock, TimelineError, UserTimelineModel};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("timeline model: {0}")]
    Timeline(#[from] TimelineError),
    #[error("lifecycle model: {0}")]
    Lifecycle(#[from] LifecycleError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no candidate influencers to simulate")]
    NoCandidates,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    #[default]
    Rule,
    Stochastic,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    #[serde(rename = "periods_T", alias = "periods_t")]
    pub periods_t: u32,
    pub period_minutes: u32,
    pub alpha: f64,
    pub theta: u32,
    pub survival_threshold: f64,
    pub seed: u64,
    pub policy: PolicyKind,
    /// Mixture components of the activity model.
    pub k: usize,
    /// Minute of day at which period 1 starts; defaults to the activity peak.
    pub start_minute: Option<f64>,
    /// Draw active users proportionally to their event counts.
    pub activity_weighted: bool,
    /// Sliding window Δ for the minimum-interaction covariate.
    pub covariate_window: u32,
    /// Consecutive zero periods that mark content as expired.
    pub expiry_run: u32,
    /// Periods between refreshes of simulated content covariates.
    pub refresh_every: u32,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            periods_t: 100,
            period_minutes: 1,
            alpha: 0.02,
            theta: 15,
            survival_threshold: 0.5,
            seed: 0,
            policy: PolicyKind::Rule,
            k: 2,
            start_minute: None,
            activity_weighted: false,
            covariate_window: 1,
            expiry_run: 10,
            refresh_every: 10,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: &str| Err(SimulationError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if self.theta < 1 {
            return bad("theta must be at least 1");
        }
        if self.periods_t < 1 {
            return bad("periods_T must be at least 1");
        }
        if self.period_minutes < 1 {
            return bad("period_minutes must be at least 1");
        }
        if !(self.survival_threshold > 0.0 && self.survival_threshold < 1.0) {
            return bad("survival_threshold must lie in (0, 1)");
        }
        if self.k < 1 || self.covariate_window < 1 || self.expiry_run < 1 || self.refresh_every < 1 {
            return bad("k, covariate_window, expiry_run and refresh_every must be positive");
        }
        Ok(())
    }
}

/// Fitted activity and lifecycle models shared by every campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModels {
    pub timeline: UserTimelineModel,
    pub lifecycle: ContentLifecycleModel,
}

pub fn fit_timeline(data: &Dataset, config: &SimulationConfig, seed: u64) -> Result<UserTimelineModel, SimulationError> {
    Ok(fit_global(data, config.k, &EmConfig::default(), seed)?)
}

pub fn fit_lifecycle(data: &Dataset, config: &SimulationConfig) -> Result<ContentLifecycleModel, SimulationError> {
    let obs: Vec<_> = observations_from_dataset(data, config.period_minutes, config.covariate_window, config.expiry_run)
        .into_iter()
        .map(|(_, o)| o)
        .collect();
    let cox = CoxConfig {
        survival_threshold: config.survival_threshold,
        ..Default::default()
    };
    Ok(fit_coxph(&obs, &cox)?)
}

pub fn fit_models(data: &Dataset, config: &SimulationConfig, seed: u64) -> Result<FittedModels, SimulationError> {
    config.validate()?;
    Ok(FittedModels {
        timeline: fit_timeline(data, config, seed)?,
        lifecycle: fit_lifecycle(data, config)?,
    })
}

/// Source of the per-period active user set UT(t).
pub trait ActivitySource: Sync {
    fn active_users(&self, t: u32, users: &[UserId]) -> BTreeSet<UserId>;
}

/// UT(t) drawn from a fitted activity model.
#[derive(Debug, Clone)]
pub struct TimelineActivity<'a> {
    pub model: &'a UserTimelineModel,
    pub clock: PeriodClock,
    pub seed: u64,
    pub weights: Option<Vec<f64>>,
}

impl<'a> TimelineActivity<'a> {
    pub fn new(data: &Dataset, model: &'a UserTimelineModel, config: &SimulationConfig) -> Self {
        Self {
            model,
            clock: PeriodClock {
                start_minute: config.start_minute.unwrap_or_else(|| model.peak_minute()),
                period_minutes: config.period_minutes,
            },
            seed: config.seed,
            weights: config
                .activity_weighted
                .then(|| data.event_counts().into_iter().map(|c| c as f64).collect()),
        }
    }
}

impl ActivitySource for TimelineActivity<'_> {
    fn active_users(&self, t: u32, users: &[UserId]) -> BTreeSet<UserId> {
        sample_active_users(self.model, &self.clock, t, users, self.seed, self.weights.as_deref()).user_ids
    }
}

/// A fixed UT(t) per period; periods not listed have no active users.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptedActivity(pub BTreeMap<u32, BTreeSet<UserId>>);

impl ActivitySource for ScriptedActivity {
    fn active_users(&self, t: u32, _users: &[UserId]) -> BTreeSet<UserId> {
        self.0.get(&t).cloned().unwrap_or_default()
    }
}

/// Unnormalized campaign outcome: S_N, mean inclination P̄ and population σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScore {
    pub influencer_id: UserId,
    pub interaction_count: u64,
    pub mean_inclination: f64,
    pub std: f64,
}

impl RawScore {
    pub fn from_edges<'a>(influencer: &UserId, edges: impl IntoIterator<Item = &'a CommentEdge>) -> Self {
        let incs: Vec<f64> = edges
            .into_iter()
            .filter_map(|e| e.inclination)
            .map(f64::from)
            .collect();
        let n = incs.len();
        let (mean, std) = if n == 0 {
            (0.0, 0.0)
        } else {
            let mean = incs.iter().sum::<f64>() / n as f64;
            let var = incs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            (mean, var.sqrt())
        };
        Self {
            influencer_id: influencer.clone(),
            interaction_count: n as u64,
            mean_inclination: mean,
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignScore {
    pub influencer_id: UserId,
    pub interaction_count: u64,
    pub mean_inclination: f64,
    pub std: f64,
    /// S_σ; absent below the interaction threshold θ.
    pub consistency: Option<f64>,
    pub score: f64,
}

/// Applies the piecewise influence score with σ_max taken over candidates
/// reaching θ interactions.
pub fn score_campaign(raw: &[RawScore], config: &SimulationConfig) -> Vec<CampaignScore> {
    let theta = u64::from(config.theta);
    let sigma_max = raw
        .iter()
        .filter(|r| r.interaction_count >= theta)
        .map(|r| r.std)
        .fold(0.0, f64::max);
    raw.iter()
        .map(|r| {
            let (consistency, score) = if r.interaction_count < theta {
                (None, r.interaction_count as f64)
            } else {
                let s_sigma = if sigma_max > 0.0 { 1.0 - r.std / sigma_max } else { 1.0 };
                (
                    Some(s_sigma),
                    config.alpha * r.interaction_count as f64 + (1.0 - config.alpha) * s_sigma,
                )
            };
            CampaignScore {
                influencer_id: r.influencer_id.clone(),
                interaction_count: r.interaction_count,
                mean_inclination: r.mean_inclination,
                std: r.std,
                consistency,
                score,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedInfluencer {
    pub rank: usize,
    pub influencer_id: UserId,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<CampaignScore>,
}

/// Ranking file shared by the simulator and the baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluencerRanking {
    pub method: String,
    pub entries: Vec<RankedInfluencer>,
}

impl InfluencerRanking {
    pub fn ids(&self) -> Vec<UserId> {
        self.entries.iter().map(|e| e.influencer_id.clone()).collect()
    }
}

/// Descending by S, then by S_N, then by id.
pub fn rank_influencers(scores: &[CampaignScore]) -> InfluencerRanking {
    let mut sorted: Vec<&CampaignScore> = scores.iter().collect();
    sorted.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.interaction_count.cmp(&a.interaction_count))
            .then_with(|| a.influencer_id.cmp(&b.influencer_id))
    });
    InfluencerRanking {
        method: "tis".into(),
        entries: sorted
            .into_iter()
            .enumerate()
            .map(|(i, s)| RankedInfluencer {
                rank: i + 1,
                influencer_id: s.influencer_id.clone(),
                score: s.score,
                detail: Some(s.clone()),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodStats {
    pub period: u32,
    pub active_users: usize,
    pub active_contents: usize,
    pub reactions: usize,
    pub comments: usize,
}

#[derive(Debug, Clone)]
pub struct CampaignRun {
    pub influencer_id: UserId,
    pub graph: InteractionGraph,
    pub raw: RawScore,
    pub periods: Vec<PeriodStats>,
    pub parse_failures: u64,
}

impl CampaignRun {
    /// Raw score from the edges present by period `t`.
    pub fn raw_at(&self, t: u32) -> RawScore {
        let edges = self.graph.edges_at(t.min(self.graph.last_period())).unwrap_or_default();
        RawScore::from_edges(&self.influencer_id, edges)
    }

    pub fn comments_per_commenter(&self) -> f64 {
        let n = self.graph.commenters().len();
        if n == 0 {
            0.0
        } else {
            self.graph.comments().len() as f64 / n as f64
        }
    }
}

pub fn ad_content_id(influencer: &UserId) -> ContentId {
    ContentId::new(format!("ad:{influencer}"))
}

/// Simulated content and its interaction series since creation.
struct ContentState {
    author: usize,
    created: u32,
    series: Vec<u32>,
    features: Option<Vec<f64>>,
    /// Age at which the content hard-expired.
    expired_at: Option<f64>,
}

/// Past replies exchanged between `v` and `u` in the dataset.
fn pair_history(data: &Dataset, by_user: &[Vec<&InteractionEvent>], v: usize, u: usize) -> Vec<HistoryItem> {
    let contents = data.contents();
    let mut items: Vec<HistoryItem> = [(v, u), (u, v)]
        .iter()
        .flat_map(|&(from, to)| {
            let to_id = &data.user(to).user_id;
            by_user[from].iter().filter(move |e| {
                e.parent_content_id
                    .as_ref()
                    .and_then(|p| contents.get(p))
                    .is_some_and(|c| &c.author == to_id)
            })
        })
        .map(|e| HistoryItem {
            text: e.text.clone(),
            timestamp_min: e.timestamp_min,
        })
        .collect();
    items.sort_by(|a, b| a.timestamp_min.cmp(&b.timestamp_min).then_with(|| a.text.cmp(&b.text)));
    items
}

/// Runs one campaign with activity drawn from the fitted timeline model.
pub fn run_campaign(
    data: &Dataset,
    models: &FittedModels,
    influencer: &str,
    ad_text: &str,
    policy: &dyn BehaviorPolicy,
    config: &SimulationConfig,
) -> Result<CampaignRun, SimulationError> {
    let activity = TimelineActivity::new(data, &models.timeline, config);
    run_campaign_with(data, &activity, &models.lifecycle, influencer, ad_text, policy, config)
}

/// Runs one campaign against any activity source.
pub fn run_campaign_with(
    data: &Dataset,
    activity: &dyn ActivitySource,
    lifecycle: &ContentLifecycleModel,
    influencer: &str,
    ad_text: &str,
    policy: &dyn BehaviorPolicy,
    config: &SimulationConfig,
) -> Result<CampaignRun, SimulationError> {
    config.validate()?;
    let u = data.require_user(influencer)?;
    let influencer_id = data.user(u).user_id.clone();
    let all_users: Vec<UserId> = data.users().iter().map(|r| r.user_id.clone()).collect();
    let followers: HashSet<usize> = data.followers_of(u).iter().copied().collect();
    let by_user = data.events_by_user();
    let failures_before = policy.parse_failures();

    let ad_id = ad_content_id(&influencer_id);
    let mut graph = InteractionGraph::init(influencer_id.clone(), ad_id.clone(), ad_text);
    let mut contents: BTreeMap<ContentId, ContentState> = BTreeMap::new();
    contents.insert(
        ad_id,
        ContentState {
            author: u,
            created: 0,
            series: Vec::new(),
            features: None,
            expired_at: None,
        },
    );
    let mut profiles: HashMap<usize, AgentProfile> = HashMap::new();
    let influencer_profile = policy.build_profile(data.user(u), &by_user[u]);
    let mut seen: HashSet<(usize, ContentId)> = HashSet::new();
    let mut commenters: BTreeSet<usize> = BTreeSet::new();
    let mut periods = Vec::with_capacity(config.periods_t as usize);
    let influencer_hash = rng::hash_str(influencer_id.as_str());

    for t in 1..=config.periods_t {
        let active_content: Vec<(&ContentId, &ContentState)> = contents
            .iter()
            .filter(|(id, c)| {
                let record = ContentRecord {
                    content_id: (*id).clone(),
                    features: c.features.clone(),
                    expired_at: c.expired_at,
                };
                lifecycle.is_active(&record, f64::from(t - c.created), config.survival_threshold)
            })
            .collect();
        let active_content_count = active_content.len();

        let mut active: BTreeSet<usize> = activity
            .active_users(t, &all_users)
            .iter()
            .filter_map(|id| data.user_index(id.as_str()))
            .filter(|i| followers.contains(i))
            .collect();
        active.extend(commenters.iter().copied());
        active.remove(&u);

        // visible content per active user, in user-id order
        let mut jobs: Vec<(usize, Vec<VisibleContent>)> = Vec::new();
        for &v in &active {
            let visible: Vec<VisibleContent> = active_content
                .iter()
                .filter(|(id, c)| {
                    c.author != v
                        && (c.author == u || data.follows_user(v, c.author))
                        && !seen.contains(&(v, (*id).clone()))
                })
                .map(|(id, c)| VisibleContent {
                    content_id: (*id).clone(),
                    text: graph.content(id).map(|(_, text)| text.to_string()).unwrap_or_default(),
                    author: data.user(c.author).user_id.clone(),
                })
                .collect();
            if !visible.is_empty() {
                jobs.push((v, visible));
            }
        }
        for (v, _) in &jobs {
            profiles
                .entry(*v)
                .or_insert_with(|| policy.build_profile(data.user(*v), &by_user[*v]));
        }
        let outcomes: Vec<Result<Vec<Reaction>, AgentError>> = jobs
            .par_iter()
            .map(|(v, visible)| {
                let ctx = BehaviorContext {
                    profile: profiles[v].clone(),
                    influencer_profile: influencer_profile.clone(),
                    history: pair_history(data, &by_user, *v, u),
                    visible_contents: visible.clone(),
                };
                let seed = rng::derive_seed(
                    config.seed,
                    &[influencer_hash, u64::from(t), rng::hash_str(data.user(*v).user_id.as_str())],
                );
                policy.predict_reaction(&ctx, seed)
            })
            .collect();

        let mut reactions: Vec<(UserId, Reaction)> = Vec::new();
        for ((v, visible), outcome) in jobs.iter().zip(outcomes) {
            let visible_ids: HashSet<&ContentId> = visible.iter().map(|c| &c.content_id).collect();
            for c in visible {
                seen.insert((*v, c.content_id.clone()));
            }
            for r in outcome? {
                if visible_ids.contains(&r.target_content) {
                    reactions.push((data.user(*v).user_id.clone(), r));
                }
            }
        }
        let before = graph.edges().len();
        graph.append_period(t, &reactions)?;

        // extend every series to the current age, then record this period's comments
        for c in contents.values_mut() {
            let age = (t - c.created) as usize;
            c.series.resize(age, 0);
        }
        let new_edges: Vec<CommentEdge> = graph.edges()[before..].to_vec();
        for e in &new_edges {
            let v = data.user_index(e.commenter.as_str()).expect("commenter is a dataset user");
            commenters.insert(v);
            if let Some(target) = contents.get_mut(&e.content_id) {
                if let Some(last) = target.series.last_mut() {
                    *last += 1;
                }
            }
            contents.insert(
                e.comment_id.clone(),
                ContentState {
                    author: v,
                    created: t,
                    series: Vec::new(),
                    features: None,
                    expired_at: None,
                },
            );
        }
        for c in contents.values_mut() {
            if c.expired_at.is_none() {
                if let Some(tau) = expiration_period(&c.series, config.expiry_run) {
                    c.expired_at = Some(f64::from(tau + 1));
                }
            }
            if t % config.refresh_every == 0 && !c.series.is_empty() {
                if let Ok(cov) = extract_covariates(&c.series, config.covariate_window) {
                    c.features = Some(cov.features());
                }
            }
        }
        periods.push(PeriodStats {
            period: t,
            active_users: active.len(),
            active_contents: active_content_count,
            reactions: reactions.len(),
            comments: new_edges.len(),
        });
    }

    let raw = RawScore::from_edges(&influencer_id, graph.comments());
    Ok(CampaignRun {
        influencer_id,
        graph,
        raw,
        periods,
        parse_failures: policy.parse_failures() - failures_before,
    })
}

#[derive(Debug, Clone)]
pub struct AllCandidatesRun {
    pub runs: Vec<CampaignRun>,
    pub scores: Vec<CampaignScore>,
    pub ranking: InfluencerRanking,
}

/// Simulates every campaign candidate in parallel and ranks them.
pub fn run_all_candidates(
    data: &Dataset,
    models: &FittedModels,
    policy: &dyn BehaviorPolicy,
    config: &SimulationConfig,
) -> Result<AllCandidatesRun, SimulationError> {
    let activity = TimelineActivity::new(data, &models.timeline, config);
    run_candidates_with(
        data,
        &activity,
        &models.lifecycle,
        &data.campaign().candidate_influencer_ids,
        policy,
        config,
    )
}

pub fn run_candidates_with(
    data: &Dataset,
    activity: &dyn ActivitySource,
    lifecycle: &ContentLifecycleModel,
    candidates: &[UserId],
    policy: &dyn BehaviorPolicy,
    config: &SimulationConfig,
) -> Result<AllCandidatesRun, SimulationError> {
    if candidates.is_empty() {
        return Err(SimulationError::NoCandidates);
    }
    let ad_text = &data.campaign().ad_text;
    let runs = candidates
        .par_iter()
        .map(|c| run_campaign_with(data, activity, lifecycle, c.as_str(), ad_text, policy, config))
        .collect::<Result<Vec<_>, _>>()?;
    let raw: Vec<RawScore> = runs.iter().map(|r| r.raw.clone()).collect();
    let scores = score_campaign(&raw, config);
    let ranking = rank_influencers(&scores);
    Ok(AllCandidatesRun { runs, scores, ranking })
}

/// NDCG@k of the ranking obtained by stopping every campaign at period t.
pub fn ndcg_over_time(
    runs: &[CampaignRun],
    gold: &[UserId],
    k: usize,
    config: &SimulationConfig,
) -> Result<Vec<(u32, f64)>, SimulationError> {
    let last = runs.iter().map(|r| r.graph.last_period()).max().unwrap_or(0);
    (1..=last)
        .map(|t| {
            let raw: Vec<RawScore> = runs.iter().map(|r| r.raw_at(t)).collect();
            let ranking = rank_influencers(&score_campaign(&raw, config));
            Ok((t, ndcg_at_k(&ranking.ids(), gold, k)?))
        })
        .collect()
}

//! Seeded synthetic datasets with planted ground truth.
//!
//! The social generator plants one topic-matched influencer among the
//! candidates: its followers are drawn from users who post about the
//! product's domain, while every other candidate is followed by users from an
//! unrelated domain. Post times follow the configured activity mixture and
//! each post's reply stream stops at a lifetime drawn from a proportional
//! hazards law over latent content features.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CampaignSpec, Dataset, DatasetError, FollowEdge, InteractionEvent, UserRecord};
use crate::ids::{ContentId, UserId};
use crate::lifecycle::SurvivalObservation;
use crate::rng;

/// Topic vocabularies. The first entry is the product domain.
pub const DOMAINS: &[(&str, &[&str])] = &[
    (
        "beauty",
        &[
            "skincare", "cream", "moisturizer", "serum", "makeup", "lipstick", "hydrating", "skin",
            "glow", "lotion", "cosmetic", "beauty",
        ],
    ),
    (
        "tech",
        &[
            "laptop", "phone", "gadget", "processor", "keyboard", "battery", "screen", "software",
            "camera", "charger", "tablet", "smartwatch",
        ],
    ),
    (
        "parenting",
        &[
            "baby", "toddler", "parenting", "stroller", "diaper", "nursery", "kid", "toy",
            "education", "reading", "family", "homework",
        ],
    ),
    (
        "home",
        &[
            "kitchen", "cleaning", "vacuum", "floor", "sofa", "decor", "laundry", "furniture",
            "shower", "towel", "storage", "garden",
        ],
    ),
    (
        "food",
        &[
            "recipe", "baking", "dinner", "spicy", "noodle", "dessert", "coffee", "restaurant",
            "snack", "chocolate", "bread", "tea",
        ],
    ),
    (
        "sports",
        &[
            "running", "football", "gym", "workout", "yoga", "cycling", "marathon", "basketball",
            "training", "protein", "sneaker", "swim",
        ],
    ),
    (
        "travel",
        &[
            "flight", "hotel", "beach", "hiking", "passport", "luggage", "island", "museum",
            "backpack", "roadtrip", "camping", "sunset",
        ],
    ),
    (
        "fashion",
        &[
            "dress", "jacket", "handbag", "denim", "jewelry", "scarf", "boot", "outfit", "runway",
            "silk", "stylist", "wardrobe",
        ],
    ),
];

const FILLERS: &[&str] = &[
    "today", "really", "my", "new", "so", "just", "the", "this", "with", "and", "about", "some",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityPeak {
    /// Minute of day.
    pub mean: f64,
    /// Minutes squared.
    pub variance: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalLaw {
    /// True coefficient per latent content feature (features are N(0, 1)).
    pub beta: Vec<f64>,
    /// Constant baseline hazard per period.
    pub baseline_hazard: f64,
    /// Mean replies per period while a post is alive.
    pub mean_reply_rate: f64,
    /// Log-scale coupling between the first latent feature and the reply rate.
    pub popularity_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_users: usize,
    pub peaks: Vec<ActivityPeak>,
    pub days: u32,
    /// Mean root posts per regular user over the whole window.
    pub mean_posts_per_user: f64,
    /// Gamma shape of the per-user activity rate multiplier (mean 1).
    pub activity_shape: f64,
    pub survival: SurvivalLaw,
    pub n_candidates: usize,
    pub followers_per_candidate: usize,
    /// Extra followers per candidate drawn from outside the product domain.
    pub cross_followers: usize,
    /// Same-domain accounts each regular user follows.
    pub peer_follows: usize,
    pub product_domain_share: f64,
    pub n_gold: usize,
    pub product_name: String,
    /// Overrides the generated advertisement text.
    pub ad_text: Option<String>,
    pub periods_t: u32,
    pub period_minutes: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_users: 1000,
            peaks: vec![
                ActivityPeak {
                    mean: 780.0,
                    variance: 60.0 * 60.0,
                    weight: 0.6,
                },
                ActivityPeak {
                    mean: 1260.0,
                    variance: 90.0 * 90.0,
                    weight: 0.4,
                },
            ],
            days: 3,
            mean_posts_per_user: 1.0,
            activity_shape: 2.0,
            survival: SurvivalLaw {
                beta: vec![-0.6, 0.4],
                baseline_hazard: 0.08,
                mean_reply_rate: 0.8,
                popularity_spread: 0.5,
            },
            n_candidates: 10,
            followers_per_candidate: 120,
            cross_followers: 10,
            peer_follows: 3,
            product_domain_share: 0.2,
            n_gold: 1,
            product_name: "Ruby Face Cream".into(),
            ad_text: None,
            periods_t: 100,
            period_minutes: 1,
        }
    }
}

// NaN fails both checks
fn positive(x: f64) -> bool {
    x > 0.0
}

fn non_negative(x: f64) -> bool {
    x >= 0.0
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidSpec(m));
        if self.peaks.is_empty() {
            return bad("at least one activity peak is required".into());
        }
        let total: f64 = self.peaks.iter().map(|p| p.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("peak weights sum to {total}, expected 1"));
        }
        for p in &self.peaks {
            if !positive(p.variance) {
                return bad(format!("peak variance {} is not positive", p.variance));
            }
            if !positive(p.weight) {
                return bad(format!("peak weight {} is not positive", p.weight));
            }
            if !(0.0..1440.0).contains(&p.mean) {
                return bad(format!("peak mean {} is outside the day", p.mean));
            }
        }
        if self.n_candidates == 0 || self.n_users <= self.n_candidates {
            return bad("need at least one candidate and more users than candidates".into());
        }
        if self.n_gold == 0 || self.n_gold > self.n_candidates {
            return bad("gold set size must be within 1..=n_candidates".into());
        }
        if !(self.product_domain_share > 0.0 && self.product_domain_share < 1.0) {
            return bad("product_domain_share must lie in (0, 1)".into());
        }
        if self.days == 0 || self.periods_t == 0 || self.period_minutes == 0 {
            return bad("days, periods_t and period_minutes must be positive".into());
        }
        if !positive(self.activity_shape) || !non_negative(self.mean_posts_per_user) {
            return bad("activity parameters must be positive".into());
        }
        let s = &self.survival;
        if !positive(s.baseline_hazard) || !non_negative(s.mean_reply_rate) {
            return bad("survival law needs a positive baseline hazard".into());
        }
        Ok(())
    }

    fn ad_text(&self) -> String {
        self.ad_text.clone().unwrap_or_else(|| {
            format!(
                "{}: a hydrating skincare cream and serum, the moisturizer your skin needs for a lasting glow",
                self.product_name
            )
        })
    }
}

struct Person {
    id: UserId,
    domain: usize,
    rate_scale: f64,
}

fn words(rng: &mut ChaCha8Rng, domain: usize, n: usize) -> Vec<&'static str> {
    let vocab = DOMAINS[domain].1;
    (0..n).map(|_| *vocab.choose(rng).unwrap()).collect()
}

fn post_text(rng: &mut ChaCha8Rng, domain: usize) -> String {
    let w = words(rng, domain, 3);
    let f1 = FILLERS.choose(rng).unwrap();
    let f2 = FILLERS.choose(rng).unwrap();
    format!("{f1} {} {} {f2} {}", w[0], w[1], w[2])
}

fn sample_minute(rng: &mut ChaCha8Rng, peaks: &[ActivityPeak]) -> u64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut peak = &peaks[peaks.len() - 1];
    for p in peaks {
        acc += p.weight;
        if u < acc {
            peak = p;
            break;
        }
    }
    let normal = Normal::new(peak.mean, peak.variance.sqrt()).expect("validated variance");
    for _ in 0..100 {
        let m = normal.sample(rng).round();
        if (0.0..1440.0).contains(&m) {
            return m as u64;
        }
    }
    peak.mean.clamp(0.0, 1439.0) as u64
}

/// Generates a dataset with one planted topic-matched influencer.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<Dataset, DatasetError> {
    spec.validate()?;
    let mut rng = rng::stream(seed, &[0x5157_4e54]);
    let n_domains = DOMAINS.len();
    let activity = Gamma::new(spec.activity_shape, 1.0 / spec.activity_shape)
        .map_err(|e| DatasetError::InvalidSpec(e.to_string()))?;

    let planted = rng.random_range(0..spec.n_candidates);
    let mut people = Vec::with_capacity(spec.n_users);
    for c in 0..spec.n_candidates {
        let domain = if c == planted {
            0
        } else {
            1 + (c + planted) % (n_domains - 1)
        };
        people.push(Person {
            id: UserId::new(format!("kol_{c:02}")),
            domain,
            rate_scale: 3.0,
        });
    }
    for u in 0..spec.n_users - spec.n_candidates {
        let domain = if rng.random::<f64>() < spec.product_domain_share {
            0
        } else {
            rng.random_range(1..n_domains)
        };
        people.push(Person {
            id: UserId::new(format!("user_{u:04}")),
            domain,
            rate_scale: activity.sample(&mut rng),
        });
    }
    let regular: Vec<usize> = (spec.n_candidates..people.len()).collect();
    let mut by_domain = vec![Vec::new(); n_domains];
    for &i in &regular {
        by_domain[people[i].domain].push(i);
    }
    let off_topic: Vec<usize> = regular.iter().copied().filter(|&i| people[i].domain != 0).collect();

    let mut follow_pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for c in 0..spec.n_candidates {
        let mut pool = by_domain[people[c].domain].clone();
        pool.shuffle(&mut rng);
        for &f in pool.iter().take(spec.followers_per_candidate) {
            follow_pairs.insert((f, c));
        }
        for &f in off_topic.choose_multiple(&mut rng, spec.cross_followers) {
            follow_pairs.insert((f, c));
        }
    }
    for &u in &regular {
        let peers = &by_domain[people[u].domain];
        for &p in peers.choose_multiple(&mut rng, spec.peer_follows + 1) {
            if p != u {
                follow_pairs.insert((u, p));
            }
        }
    }
    let mut followers_of = vec![Vec::new(); people.len()];
    for &(f, i) in &follow_pairs {
        followers_of[i].push(f);
    }

    let users: Vec<UserRecord> = people
        .iter()
        .enumerate()
        .map(|(i, p)| UserRecord {
            user_id: p.id.clone(),
            follower_count: followers_of[i].len() as u64,
            post_texts: (0..4).map(|_| post_text(&mut rng, p.domain)).collect(),
            domain_tags: vec![DOMAINS[p.domain].0.to_string()],
        })
        .collect();
    let follows: Vec<FollowEdge> = follow_pairs
        .iter()
        .map(|&(f, i)| FollowEdge {
            follower_id: people[f].id.clone(),
            influencer_id: people[i].id.clone(),
        })
        .collect();

    let window_end = u64::from(spec.days) * 1440 - 1;
    let pm = u64::from(spec.period_minutes);
    let law = &spec.survival;
    let mut events = Vec::new();
    let mut next_post = 0usize;
    let push = |events: &mut Vec<InteractionEvent>,
                    user: &UserId,
                    content: ContentId,
                    parent: Option<ContentId>,
                    ts: u64,
                    text: String| {
        events.push(InteractionEvent {
            event_id: format!("e{:07}", events.len()),
            user_id: user.clone(),
            content_id: content,
            parent_content_id: parent,
            timestamp_min: ts,
            text,
        });
    };

    for (i, person) in people.iter().enumerate() {
        let rate = spec.mean_posts_per_user * person.rate_scale;
        let n_posts = if rate > 0.0 {
            Poisson::new(rate).unwrap().sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..n_posts {
            let day = rng.random_range(0..u64::from(spec.days));
            let ts = day * 1440 + sample_minute(&mut rng, &spec.peaks);
            let post = ContentId::new(format!("p{next_post:06}"));
            next_post += 1;
            let text = post_text(&mut rng, person.domain);
            push(&mut events, &person.id, post.clone(), None, ts, text);

            let z: Vec<f64> = law.beta.iter().map(|_| rng.sample(StandardNormal)).collect();
            let lp: f64 = law.beta.iter().zip(&z).map(|(b, x)| b * x).sum();
            let lifetime = Exp::new(law.baseline_hazard * lp.exp())
                .unwrap()
                .sample(&mut rng)
                .ceil() as u64;
            let reply_rate =
                law.mean_reply_rate * (law.popularity_spread * z.first().copied().unwrap_or(0.0)).exp();
            if reply_rate <= 0.0 {
                continue;
            }
            let replies = Poisson::new(reply_rate).unwrap();
            let audience: &[usize] = if followers_of[i].is_empty() {
                &regular
            } else {
                &followers_of[i]
            };
            for period in 0..lifetime {
                let count = replies.sample(&mut rng) as usize;
                for _ in 0..count {
                    let ts_reply = ts + period * pm + rng.random_range(0..pm);
                    let replier = &people[*audience.choose(&mut rng).unwrap()];
                    if ts_reply > window_end {
                        continue;
                    }
                    let w = words(&mut rng, replier.domain, 2);
                    let reply = ContentId::new(format!("r{:07}", events.len()));
                    push(
                        &mut events,
                        &replier.id,
                        reply,
                        Some(post.clone()),
                        ts_reply,
                        format!("{} {}!", w[0], w[1]),
                    );
                }
            }
        }
    }

    let mut candidates: Vec<UserId> = people[..spec.n_candidates].iter().map(|p| p.id.clone()).collect();
    let mut others: Vec<&UserId> = candidates.iter().filter(|c| **c != people[planted].id).collect();
    others.shuffle(&mut rng);
    let mut gold: Vec<UserId> = std::iter::once(people[planted].id.clone())
        .chain(others.into_iter().take(spec.n_gold - 1).cloned())
        .collect();
    gold.sort();
    candidates.sort();

    let campaign = CampaignSpec {
        product_name: spec.product_name.clone(),
        ad_text: spec.ad_text(),
        candidate_influencer_ids: candidates,
        gold_promoter_ids: gold,
        periods_t: spec.periods_t,
        period_minutes: spec.period_minutes,
    };
    Dataset::new(users, follows, events, campaign)
}

/// Survival observations with standard-normal covariates, exponential event
/// times under `h0 * exp(beta . x)` and independent exponential censoring
/// (`censor_rate = 0` disables censoring).
pub fn cox_observations(
    n: usize,
    beta: &[f64],
    baseline_hazard: f64,
    censor_rate: f64,
    seed: u64,
) -> Vec<SurvivalObservation> {
    let mut rng = rng::stream(seed, &[0xC0C5]);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = beta.iter().map(|_| rng.sample(StandardNormal)).collect();
            let lp: f64 = beta.iter().zip(&x).map(|(b, v)| b * v).sum();
            let t = Exp::new(baseline_hazard * lp.exp()).unwrap().sample(&mut rng);
            let c = if censor_rate > 0.0 {
                Exp::new(censor_rate).unwrap().sample(&mut rng)
            } else {
                f64::INFINITY
            };
            SurvivalObservation {
                features: x,
                event_time: t.min(c),
                censored: c < t,
            }
        })
        .collect()
}

/// Shape of a content population where most items die young.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub n: usize,
    /// Fraction of items whose observed expiration falls at or before `horizon`.
    pub short_fraction: f64,
    pub horizon: u32,
    /// Fraction of long-lived items still alive at the end of observation.
    pub long_censored_fraction: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            n: 200,
            short_fraction: 0.75,
            horizon: 10,
            long_censored_fraction: 0.3,
        }
    }
}

/// Builds a content population in which exactly `round(n * short_fraction)`
/// items (listed first) expire within `horizon` periods and carry a high-risk
/// feature, while the rest live far past it with a low-risk feature.
pub fn survival_population(spec: &PopulationSpec, seed: u64) -> Vec<SurvivalObservation> {
    let mut rng = rng::stream(seed, &[0xF163B]);
    let n_short = (spec.n as f64 * spec.short_fraction).round() as usize;
    let horizon = spec.horizon.max(1);
    let mut out = Vec::with_capacity(spec.n);
    for _ in 0..n_short {
        out.push(SurvivalObservation {
            features: vec![rng.random_range(1.0..2.0)],
            event_time: f64::from(rng.random_range(1..=horizon)),
            censored: false,
        });
    }
    for _ in n_short..spec.n {
        let life = f64::from(rng.random_range(4 * horizon..40 * horizon));
        out.push(SurvivalObservation {
            features: vec![rng.random_range(-2.0..-1.0)],
            event_time: life,
            censored: rng.random::<f64>() < spec.long_censored_fraction,
        });
    }
    out
}

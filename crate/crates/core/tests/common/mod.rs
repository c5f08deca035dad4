#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use kolsim::dataset::{CampaignSpec, Dataset, FollowEdge, UserRecord};
use kolsim::lifecycle::ContentLifecycleModel;
use kolsim::simulator::ScriptedActivity;
use kolsim::UserId;

pub const AD_TEXT: &str = "skincare cream for a lasting glow";

fn user(id: &str, posts: &[&str]) -> UserRecord {
    UserRecord {
        user_id: id.into(),
        follower_count: 0,
        post_texts: posts.iter().map(|p| p.to_string()).collect(),
        domain_tags: Vec::new(),
    }
}

fn follow(follower: &str, influencer: &str) -> FollowEdge {
    FollowEdge {
        follower_id: follower.into(),
        influencer_id: influencer.into(),
    }
}

/// Influencer `u` with followers a, b, c; d follows only a and b follows a
/// too. a, b and d write about skincare, c about football.
pub fn five_users() -> Dataset {
    let users = vec![
        user("u", &["skincare cream glow"]),
        user("a", &["skincare cream", "cream skincare glow"]),
        user("b", &["skincare cream routine", "skincare glow"]),
        user("c", &["football match", "football goal"]),
        user("d", &["skincare cream"]),
    ];
    let follows = vec![
        follow("a", "u"),
        follow("b", "u"),
        follow("c", "u"),
        follow("d", "a"),
        follow("b", "a"),
    ];
    let campaign = CampaignSpec {
        product_name: "Glow Cream".into(),
        ad_text: AD_TEXT.into(),
        candidate_influencer_ids: vec!["u".into()],
        gold_promoter_ids: vec!["u".into()],
        periods_t: 4,
        period_minutes: 1,
    };
    Dataset::new(users, follows, Vec::new(), campaign).unwrap()
}

/// UT(t) for the four fixture periods.
pub fn script() -> ScriptedActivity {
    let sets: [&[&str]; 4] = [&["a", "d"], &["b", "c"], &["a", "b"], &["c", "d"]];
    ScriptedActivity(
        sets.iter()
            .enumerate()
            .map(|(i, s)| (i as u32 + 1, s.iter().map(|x| UserId::from(*x)).collect::<BTreeSet<_>>()))
            .collect::<BTreeMap<_, _>>(),
    )
}

/// Zero coefficients and an empty baseline: survival is 1 everywhere, so
/// only hard expiration can retire content.
pub fn immortal_lifecycle() -> ContentLifecycleModel {
    ContentLifecycleModel::from_baseline(Vec::new(), 5, 0.5)
}

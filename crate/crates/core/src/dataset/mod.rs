//! Canonical data model, JSON Lines loading/writing, and the seeded synthetic
//! generator.
//!
//! A dataset directory holds four files:
//!
//! | file                 | one record per line                                                   |
//! |----------------------|-----------------------------------------------------------------------|
//! | `users.jsonl`        | `user_id`, `follower_count`, `post_texts`, `domain_tags`              |
//! | `follows.jsonl`      | `follower_id`, `influencer_id`                                        |
//! | `interactions.jsonl` | `event_id`, `user_id`, `content_id`, `parent_content_id`, `timestamp_min`, `text` |
//! | `campaign.json`      | a single [`CampaignSpec`] object                                      |
//!
//! An interaction event authors the content item `content_id`; when
//! `parent_content_id` is present the item is a reply to that parent. The
//! interaction series of a content item is the per-period count of its
//! replies. Timestamps are minutes since a midnight-aligned epoch.

mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ContentId, UserId};

pub use synth::{
    cox_observations, generate_synthetic, survival_population, ActivityPeak, PopulationSpec,
    SurvivalLaw, SynthSpec, DOMAINS,
};

pub const MINUTES_PER_DAY: u64 = 1440;

pub const USERS_FILE: &str = "users.jsonl";
pub const FOLLOWS_FILE: &str = "follows.jsonl";
pub const INTERACTIONS_FILE: &str = "interactions.jsonl";
pub const CAMPAIGN_FILE: &str = "campaign.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing dataset file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{file}:{line}: malformed record: {message}")]
    MalformedRecord {
        file: String,
        line: usize,
        message: String,
    },
    #[error("dangling reference to unknown id {0:?}")]
    DanglingReference(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: UserId,
    pub follower_count: u64,
    #[serde(default)]
    pub post_texts: Vec<String>,
    #[serde(default)]
    pub domain_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FollowEdge {
    pub follower_id: UserId,
    pub influencer_id: UserId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub event_id: String,
    pub user_id: UserId,
    pub content_id: ContentId,
    #[serde(default)]
    pub parent_content_id: Option<ContentId>,
    pub timestamp_min: u64,
    #[serde(default)]
    pub text: String,
}

impl InteractionEvent {
    pub fn minute_of_day(&self) -> u32 {
        (self.timestamp_min % MINUTES_PER_DAY) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub product_name: String,
    pub ad_text: String,
    pub candidate_influencer_ids: Vec<UserId>,
    pub gold_promoter_ids: Vec<UserId>,
    #[serde(rename = "periods_T", alias = "periods_t")]
    pub periods_t: u32,
    pub period_minutes: u32,
}

impl CampaignSpec {
    fn validate(&self) -> Result<(), DatasetError> {
        if self.candidate_influencer_ids.is_empty() {
            return Err(DatasetError::Invalid("campaign has no candidate influencers".into()));
        }
        if self.periods_t == 0 {
            return Err(DatasetError::Invalid("periods_T must be at least 1".into()));
        }
        if self.period_minutes == 0 {
            return Err(DatasetError::Invalid("period_minutes must be positive".into()));
        }
        let candidates: HashSet<&UserId> = self.candidate_influencer_ids.iter().collect();
        if let Some(g) = self.gold_promoter_ids.iter().find(|g| !candidates.contains(g)) {
            return Err(DatasetError::Invalid(format!(
                "gold promoter {g} is not among the candidate influencers"
            )));
        }
        Ok(())
    }
}

/// Authoring information for one content item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentInfo {
    pub author: UserId,
    pub published_min: u64,
    pub parent: Option<ContentId>,
}

/// A validated, immutable dataset with lookup indexes.
///
/// Records are held in canonical order: users by id, follows by
/// (influencer, follower), events by (timestamp, event id).
#[derive(Debug, Clone)]
pub struct Dataset {
    users: Vec<UserRecord>,
    follows: Vec<FollowEdge>,
    events: Vec<InteractionEvent>,
    campaign: CampaignSpec,
    user_index: HashMap<UserId, usize>,
    followers: Vec<Vec<usize>>,
    following: Vec<Vec<usize>>,
    contents: BTreeMap<ContentId, ContentInfo>,
}

impl Dataset {
    pub fn new(
        mut users: Vec<UserRecord>,
        mut follows: Vec<FollowEdge>,
        mut events: Vec<InteractionEvent>,
        campaign: CampaignSpec,
    ) -> Result<Self, DatasetError> {
        users.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        follows.sort_by(|a, b| {
            (&a.influencer_id, &a.follower_id).cmp(&(&b.influencer_id, &b.follower_id))
        });
        follows.dedup();
        events.sort_by(|a, b| {
            (a.timestamp_min, &a.event_id).cmp(&(b.timestamp_min, &b.event_id))
        });

        let mut user_index = HashMap::with_capacity(users.len());
        for (i, u) in users.iter().enumerate() {
            if user_index.insert(u.user_id.clone(), i).is_some() {
                return Err(DatasetError::Invalid(format!("duplicate user_id {}", u.user_id)));
            }
        }
        let lookup = |id: &UserId| -> Result<usize, DatasetError> {
            user_index
                .get(id)
                .copied()
                .ok_or_else(|| DatasetError::DanglingReference(id.to_string()))
        };

        let mut followers = vec![Vec::new(); users.len()];
        let mut following = vec![Vec::new(); users.len()];
        for f in &follows {
            let a = lookup(&f.follower_id)?;
            let b = lookup(&f.influencer_id)?;
            if a == b {
                return Err(DatasetError::Invalid(format!("user {} follows itself", f.follower_id)));
            }
            followers[b].push(a);
            following[a].push(b);
        }
        for list in followers.iter_mut().chain(following.iter_mut()) {
            list.sort_unstable();
        }

        let mut event_ids = HashSet::with_capacity(events.len());
        let mut contents: BTreeMap<ContentId, ContentInfo> = BTreeMap::new();
        for e in &events {
            lookup(&e.user_id)?;
            if !event_ids.insert(e.event_id.as_str()) {
                return Err(DatasetError::Invalid(format!("duplicate event_id {}", e.event_id)));
            }
            match contents.get_mut(&e.content_id) {
                // events are time-ordered, so the first one seen authors the item
                None => {
                    contents.insert(
                        e.content_id.clone(),
                        ContentInfo {
                            author: e.user_id.clone(),
                            published_min: e.timestamp_min,
                            parent: e.parent_content_id.clone(),
                        },
                    );
                }
                Some(info) => {
                    if info.parent != e.parent_content_id {
                        return Err(DatasetError::Invalid(format!(
                            "content {} has conflicting parents",
                            e.content_id
                        )));
                    }
                }
            }
        }
        for (id, info) in &contents {
            if let Some(p) = &info.parent {
                if !contents.contains_key(p) {
                    return Err(DatasetError::DanglingReference(p.to_string()));
                }
                if p == id {
                    return Err(DatasetError::Invalid(format!("content {id} replies to itself")));
                }
            }
        }
        check_acyclic(&contents)?;

        for id in campaign
            .candidate_influencer_ids
            .iter()
            .chain(&campaign.gold_promoter_ids)
        {
            lookup(id)?;
        }
        campaign.validate()?;

        Ok(Self {
            users,
            follows,
            events,
            campaign,
            user_index,
            followers,
            following,
            contents,
        })
    }

    pub fn users(&self) -> &[UserRecord] {
        &self.users
    }

    pub fn follows(&self) -> &[FollowEdge] {
        &self.follows
    }

    pub fn events(&self) -> &[InteractionEvent] {
        &self.events
    }

    pub fn campaign(&self) -> &CampaignSpec {
        &self.campaign
    }

    pub fn contents(&self) -> &BTreeMap<ContentId, ContentInfo> {
        &self.contents
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn user(&self, idx: usize) -> &UserRecord {
        &self.users[idx]
    }

    pub fn require_user(&self, id: &str) -> Result<usize, DatasetError> {
        self.user_index(id)
            .ok_or_else(|| DatasetError::DanglingReference(id.to_string()))
    }

    /// Indices of the users following `idx`, ascending.
    pub fn followers_of(&self, idx: usize) -> &[usize] {
        &self.followers[idx]
    }

    /// Indices of the users `idx` follows, ascending.
    pub fn following_of(&self, idx: usize) -> &[usize] {
        &self.following[idx]
    }

    pub fn follows_user(&self, follower: usize, influencer: usize) -> bool {
        self.following[follower].binary_search(&influencer).is_ok()
    }

    /// Last timestamp in the data window (0 for an empty event log).
    pub fn window_end_min(&self) -> u64 {
        self.events.last().map_or(0, |e| e.timestamp_min)
    }

    /// Pooled minute-of-day samples of every event.
    pub fn minute_of_day_samples(&self) -> Vec<f64> {
        self.events.iter().map(|e| f64::from(e.minute_of_day())).collect()
    }

    /// Events per user, indexed like [`Dataset::users`].
    pub fn event_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.users.len()];
        for e in &self.events {
            counts[self.user_index[&e.user_id]] += 1;
        }
        counts
    }

    /// Events authored by each user, indexed like [`Dataset::users`].
    pub fn events_by_user(&self) -> Vec<Vec<&InteractionEvent>> {
        let mut by_user = vec![Vec::new(); self.users.len()];
        for e in &self.events {
            by_user[self.user_index[&e.user_id]].push(e);
        }
        by_user
    }
}

fn check_acyclic(contents: &BTreeMap<ContentId, ContentInfo>) -> Result<(), DatasetError> {
    // 0 = unvisited, 1 = on current chain, 2 = known acyclic
    let mut state: HashMap<&ContentId, u8> = HashMap::with_capacity(contents.len());
    for start in contents.keys() {
        let mut chain = Vec::new();
        let mut cur = Some(start);
        while let Some(id) = cur {
            match state.get(id).copied().unwrap_or(0) {
                2 => break,
                1 => {
                    return Err(DatasetError::Invalid(format!("reply chain through {id} is cyclic")))
                }
                _ => {
                    state.insert(id, 1);
                    chain.push(id);
                    cur = contents[id].parent.as_ref();
                }
            }
        }
        for id in chain {
            state.insert(id, 2);
        }
    }
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DatasetError::MissingFile(path.to_path_buf()),
        _ => DatasetError::Io(e),
    })?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| DatasetError::MalformedRecord {
            file: name.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Loads and cross-validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let dir = dir.as_ref();
    let users = read_jsonl(&dir.join(USERS_FILE))?;
    let follows = read_jsonl(&dir.join(FOLLOWS_FILE))?;
    let events = read_jsonl(&dir.join(INTERACTIONS_FILE))?;
    let campaign_path = dir.join(CAMPAIGN_FILE);
    let raw = std::fs::read_to_string(&campaign_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DatasetError::MissingFile(campaign_path.clone()),
        _ => DatasetError::Io(e),
    })?;
    let campaign = serde_json::from_str(&raw).map_err(|e| DatasetError::MalformedRecord {
        file: CAMPAIGN_FILE.into(),
        line: e.line(),
        message: e.to_string(),
    })?;
    Dataset::new(users, follows, events, campaign)
}

/// Writes a dataset directory in canonical record order.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<(), DatasetError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_jsonl(&dir.join(USERS_FILE), &dataset.users)?;
    write_jsonl(&dir.join(FOLLOWS_FILE), &dataset.follows)?;
    write_jsonl(&dir.join(INTERACTIONS_FILE), &dataset.events)?;
    let mut campaign = serde_json::to_string_pretty(&dataset.campaign).map_err(std::io::Error::from)?;
    campaign.push('\n');
    std::fs::write(dir.join(CAMPAIGN_FILE), campaign)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user(id: &str) -> UserRecord {
        UserRecord {
            user_id: id.into(),
            follower_count: 0,
            post_texts: vec![],
            domain_tags: vec![],
        }
    }

    fn follow(a: &str, b: &str) -> FollowEdge {
        FollowEdge {
            follower_id: a.into(),
            influencer_id: b.into(),
        }
    }

    fn event(id: &str, user: &str, content: &str, parent: Option<&str>, ts: u64) -> InteractionEvent {
        InteractionEvent {
            event_id: id.into(),
            user_id: user.into(),
            content_id: content.into(),
            parent_content_id: parent.map(ContentId::from),
            timestamp_min: ts,
            text: format!("text {id}"),
        }
    }

    fn campaign(candidates: &[&str], gold: &[&str]) -> CampaignSpec {
        CampaignSpec {
            product_name: "Cream".into(),
            ad_text: "buy the cream".into(),
            candidate_influencer_ids: candidates.iter().map(|c| UserId::from(*c)).collect(),
            gold_promoter_ids: gold.iter().map(|c| UserId::from(*c)).collect(),
            periods_t: 100,
            period_minutes: 1,
        }
    }

    fn small() -> Dataset {
        Dataset::new(
            vec![user("u1"), user("u2"), user("u3")],
            vec![follow("u2", "u1"), follow("u3", "u1")],
            vec![
                event("e1", "u1", "p1", None, 10),
                event("e2", "u2", "c1", Some("p1"), 12),
                event("e3", "u3", "c2", Some("p1"), 1450),
                event("e4", "u1", "c3", Some("c1"), 1500),
                event("e5", "u2", "p2", None, 2000),
            ],
            campaign(&["u1", "u2"], &["u1"]),
        )
        .unwrap()
    }

    #[test]
    fn write_then_load_preserves_counts_and_records() {
        let d = small();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&d, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.users().len(), 3);
        assert_eq!(back.events().len(), 5);
        assert_eq!(back.users(), d.users());
        assert_eq!(back.follows(), d.follows());
        assert_eq!(back.events(), d.events());
        assert_eq!(back.campaign(), d.campaign());
    }

    #[test]
    fn minute_of_day_folds_multi_day_timestamps() {
        let d = small();
        let e3 = d.events().iter().find(|e| e.event_id == "e3").unwrap();
        assert_eq!(e3.minute_of_day(), 10);
        assert!(d.events().iter().all(|e| u64::from(e.minute_of_day()) == e.timestamp_min % 1440));
    }

    #[test]
    fn follower_indexes_are_consistent() {
        let d = small();
        let u1 = d.user_index("u1").unwrap();
        let followers: Vec<&str> = d
            .followers_of(u1)
            .iter()
            .map(|&i| d.user(i).user_id.as_str())
            .collect();
        assert_eq!(followers, ["u2", "u3"]);
        assert!(d.follows_user(d.user_index("u2").unwrap(), u1));
        assert!(!d.follows_user(u1, d.user_index("u2").unwrap()));
    }

    #[test]
    fn unknown_follow_endpoint_is_a_dangling_reference() {
        let err = Dataset::new(
            vec![user("u1"), user("u2")],
            vec![follow("u99", "u1")],
            vec![],
            campaign(&["u1"], &[]),
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::DanglingReference(ref id) if id == "u99"));
    }

    #[test]
    fn empty_interaction_log_is_loadable() {
        let d = Dataset::new(vec![user("u1")], vec![], vec![], campaign(&["u1"], &[])).unwrap();
        assert!(d.events().is_empty());
        assert_eq!(d.window_end_min(), 0);
    }

    #[test]
    fn invariant_violations_are_rejected() {
        let self_follow = Dataset::new(
            vec![user("u1")],
            vec![follow("u1", "u1")],
            vec![],
            campaign(&["u1"], &[]),
        );
        assert!(matches!(self_follow, Err(DatasetError::Invalid(_))));

        let dup = Dataset::new(vec![user("u1"), user("u1")], vec![], vec![], campaign(&["u1"], &[]));
        assert!(matches!(dup, Err(DatasetError::Invalid(_))));

        let gold_outside = Dataset::new(
            vec![user("u1"), user("u2")],
            vec![],
            vec![],
            campaign(&["u1"], &["u2"]),
        );
        assert!(matches!(gold_outside, Err(DatasetError::Invalid(_))));

        let missing_parent = Dataset::new(
            vec![user("u1")],
            vec![],
            vec![event("e1", "u1", "c1", Some("nope"), 0)],
            campaign(&["u1"], &[]),
        );
        assert!(matches!(missing_parent, Err(DatasetError::DanglingReference(ref id)) if id == "nope"));
    }

    #[test]
    fn cyclic_reply_chains_are_rejected() {
        let err = Dataset::new(
            vec![user("u1")],
            vec![],
            vec![
                event("e1", "u1", "a", Some("b"), 0),
                event("e2", "u1", "b", Some("a"), 1),
            ],
            campaign(&["u1"], &[]),
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::Invalid(_)));
    }

    #[test]
    fn missing_and_malformed_files_are_diagnosed() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(matches!(err, DatasetError::MissingFile(ref p) if p.ends_with(USERS_FILE)));

        write_dataset(&small(), dir.path()).unwrap();
        let path = dir.path().join(FOLLOWS_FILE);
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"follower_id\": 3}\n");
        std::fs::write(&path, text).unwrap();
        match load_dataset(dir.path()).unwrap_err() {
            DatasetError::MalformedRecord { file, line, .. } => {
                assert_eq!(file, FOLLOWS_FILE);
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn campaign_periods_key_is_verbatim() {
        let json = serde_json::to_value(campaign(&["u1"], &[])).unwrap();
        assert_eq!(json["periods_T"], 100);
    }
}

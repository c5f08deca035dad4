//! Period-indexed interaction graph of one campaign. Each period appends a
//! delta of new vertices and comment edges; cumulative views are prefixes.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::Reaction;
use crate::ids::{ContentId, UserId};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("period {got} appended out of order (expected {expected})")]
    PeriodOutOfOrder { expected: u32, got: u32 },
    #[error("no snapshot for period {0}")]
    NoSuchPeriod(u32),
    #[error("reaction targets unknown content {0}")]
    UnknownContent(ContentId),
}

/// A `(v, text, u)` tuple. The root edge carries the advertisement with no
/// target and no inclination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentEdge {
    pub commenter: UserId,
    pub text: String,
    pub target: Option<UserId>,
    /// Content commented on (for the root edge, the ad itself).
    pub content_id: ContentId,
    /// Identifier of the content this edge created.
    pub comment_id: ContentId,
    pub period: u32,
    pub inclination: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub period: u32,
    pub vertex_count: usize,
    pub edge_count: usize,
    pub new_vertices: usize,
    pub new_edges: usize,
    pub duplicates_dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    influencer: UserId,
    ad_id: ContentId,
    vertices: Vec<UserId>,
    vertex_set: HashSet<UserId>,
    edges: Vec<CommentEdge>,
    snapshots: Vec<Snapshot>,
    /// Author and text of every content created in the campaign.
    contents: BTreeMap<ContentId, (UserId, String)>,
    seen: HashSet<(UserId, ContentId, u32)>,
    duplicates_dropped: usize,
}

impl InteractionGraph {
    /// V_0 = {influencer}, E_0 = {(influencer, ad, none)}.
    pub fn init(influencer: UserId, ad_id: ContentId, ad_text: &str) -> Self {
        let root = CommentEdge {
            commenter: influencer.clone(),
            text: ad_text.to_string(),
            target: None,
            content_id: ad_id.clone(),
            comment_id: ad_id.clone(),
            period: 0,
            inclination: None,
        };
        Self {
            vertices: vec![influencer.clone()],
            vertex_set: HashSet::from([influencer.clone()]),
            edges: vec![root],
            snapshots: vec![Snapshot {
                period: 0,
                vertex_count: 1,
                edge_count: 1,
                new_vertices: 1,
                new_edges: 1,
                duplicates_dropped: 0,
            }],
            contents: BTreeMap::from([(ad_id.clone(), (influencer.clone(), ad_text.to_string()))]),
            seen: HashSet::new(),
            duplicates_dropped: 0,
            influencer,
            ad_id,
        }
    }

    pub fn influencer(&self) -> &UserId {
        &self.influencer
    }

    pub fn ad_id(&self) -> &ContentId {
        &self.ad_id
    }

    pub fn last_period(&self) -> u32 {
        self.snapshots.last().map_or(0, |s| s.period)
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn snapshot(&self, t: u32) -> Result<&Snapshot, GraphError> {
        self.snapshots.get(t as usize).ok_or(GraphError::NoSuchPeriod(t))
    }

    /// V_t in insertion order.
    pub fn vertices_at(&self, t: u32) -> Result<&[UserId], GraphError> {
        Ok(&self.vertices[..self.snapshot(t)?.vertex_count])
    }

    /// E_t in insertion order.
    pub fn edges_at(&self, t: u32) -> Result<&[CommentEdge], GraphError> {
        Ok(&self.edges[..self.snapshot(t)?.edge_count])
    }

    pub fn vertices(&self) -> &[UserId] {
        &self.vertices
    }

    pub fn edges(&self) -> &[CommentEdge] {
        &self.edges
    }

    pub fn contains_vertex(&self, u: &UserId) -> bool {
        self.vertex_set.contains(u)
    }

    /// Comment edges only (the root edge excluded).
    pub fn comments(&self) -> &[CommentEdge] {
        &self.edges[1..]
    }

    pub fn content(&self, id: &ContentId) -> Option<(&UserId, &str)> {
        self.contents.get(id).map(|(a, t)| (a, t.as_str()))
    }

    pub fn content_ids(&self) -> impl Iterator<Item = &ContentId> {
        self.contents.keys()
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    /// Applies one period of reactions. Ignores add nothing; repeated
    /// `(user, content, period)` comments are dropped and counted.
    pub fn append_period(&mut self, t: u32, reactions: &[(UserId, Reaction)]) -> Result<&Snapshot, GraphError> {
        let expected = self.last_period() + 1;
        if t != expected {
            return Err(GraphError::PeriodOutOfOrder { expected, got: t });
        }
        if let Some((_, r)) = reactions
            .iter()
            .find(|(_, r)| r.is_comment() && !self.contents.contains_key(&r.target_content))
        {
            return Err(GraphError::UnknownContent(r.target_content.clone()));
        }
        let (v0, e0, d0) = (self.vertices.len(), self.edges.len(), self.duplicates_dropped);
        for (user, r) in reactions.iter().filter(|(_, r)| r.is_comment()) {
            if !self.seen.insert((user.clone(), r.target_content.clone(), t)) {
                self.duplicates_dropped += 1;
                continue;
            }
            let target = self.contents[&r.target_content].0.clone();
            let comment_id = ContentId::new(format!("{}/c{}", self.ad_id, self.edges.len()));
            self.contents
                .insert(comment_id.clone(), (user.clone(), r.text.clone()));
            if self.vertex_set.insert(user.clone()) {
                self.vertices.push(user.clone());
            }
            self.edges.push(CommentEdge {
                commenter: user.clone(),
                text: r.text.clone(),
                target: Some(target),
                content_id: r.target_content.clone(),
                comment_id,
                period: t,
                inclination: r.inclination,
            });
        }
        self.snapshots.push(Snapshot {
            period: t,
            vertex_count: self.vertices.len(),
            edge_count: self.edges.len(),
            new_vertices: self.vertices.len() - v0,
            new_edges: self.edges.len() - e0,
            duplicates_dropped: self.duplicates_dropped - d0,
        });
        Ok(self.snapshots.last().expect("just pushed"))
    }

    /// Distinct commenters (vertices other than the influencer).
    pub fn commenters(&self) -> BTreeSet<&UserId> {
        self.comments().iter().map(|e| &e.commenter).collect()
    }

    /// One JSON object per edge, root first.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&serde_json::to_string(e).expect("edge serializes"));
            out.push('\n');
        }
        out
    }

    pub fn periods_json(&self) -> String {
        serde_json::to_string_pretty(&self.snapshots).expect("snapshots serialize")
    }

    /// `commenter target period inclination` per line; `-` marks absent fields.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let target = e.target.as_ref().map_or("-", |t| t.as_str());
            let inc = e.inclination.map_or("-".to_string(), |i| i.to_string());
            let _ = writeln!(out, "{} {} {} {}", e.commenter, target, e.period, inc);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn comment(user: &str, content: &str, inc: u8) -> (UserId, Reaction) {
        (user.into(), Reaction::comment(content.into(), format!("hi from {user}"), inc))
    }

    #[test]
    fn initialization_holds_influencer_and_root_edge() {
        let g = InteractionGraph::init("kol_1".into(), "ad_1".into(), "buy it");
        assert_eq!(g.vertices_at(0).unwrap().len(), 1);
        assert_eq!(g.edges_at(0).unwrap().len(), 1);
        assert_eq!(g.edges()[0].target, None);
        assert_eq!(g.snapshot(1), Err(GraphError::NoSuchPeriod(1)));
        assert_eq!(g, InteractionGraph::init("kol_1".into(), "ad_1".into(), "buy it"));
    }

    #[test]
    fn three_new_commenters_add_three_vertices_and_edges() {
        let mut g = InteractionGraph::init("u".into(), "ad".into(), "ad");
        let s = g
            .append_period(1, &[comment("a", "ad", 3), comment("b", "ad", 4), comment("c", "ad", 5)])
            .unwrap()
            .clone();
        assert_eq!((s.vertex_count, s.edge_count, s.new_vertices, s.new_edges), (4, 4, 3, 3));
        assert!(g.comments().iter().all(|e| e.target.as_ref().unwrap().as_str() == "u"));
    }

    #[test]
    fn duplicates_in_one_period_are_dropped() {
        let mut g = InteractionGraph::init("u".into(), "ad".into(), "ad");
        let s = g.append_period(1, &[comment("a", "ad", 3), comment("a", "ad", 2)]).unwrap();
        assert_eq!(s.new_edges, 1);
        assert_eq!(s.duplicates_dropped, 1);
        assert_eq!(g.duplicates_dropped(), 1);
        // the same pair in a later period is a new edge
        assert_eq!(g.append_period(2, &[comment("a", "ad", 3)]).unwrap().new_edges, 1);
    }

    #[test]
    fn ignores_leave_the_snapshot_unchanged() {
        let mut g = InteractionGraph::init("u".into(), "ad".into(), "ad");
        g.append_period(1, &[comment("a", "ad", 3)]).unwrap();
        let s = g.append_period(2, &[("b".into(), Reaction::ignore("ad".into()))]).unwrap();
        assert_eq!((s.vertex_count, s.edge_count), (2, 2));
        assert_eq!(g.edges_at(1).unwrap(), g.edges_at(2).unwrap());
    }

    #[test]
    fn replies_target_the_comment_author() {
        let mut g = InteractionGraph::init("u".into(), "ad".into(), "ad");
        g.append_period(1, &[comment("a", "ad", 3)]).unwrap();
        let cid = g.comments()[0].comment_id.clone();
        assert_eq!(g.content(&cid).unwrap().0.as_str(), "a");
        g.append_period(2, &[comment("b", cid.as_str(), 2)]).unwrap();
        assert_eq!(g.comments()[1].target.as_ref().unwrap().as_str(), "a");
        assert_eq!(
            g.append_period(3, &[comment("b", "nope", 2)]),
            Err(GraphError::UnknownContent("nope".into()))
        );
    }

    #[test]
    fn out_of_order_periods_are_rejected() {
        let mut g = InteractionGraph::init("u".into(), "ad".into(), "ad");
        assert_eq!(
            g.append_period(2, &[]),
            Err(GraphError::PeriodOutOfOrder { expected: 1, got: 2 })
        );
    }

    #[test]
    fn exports_cover_every_edge() {
        let mut g = InteractionGraph::init("u".into(), "ad".into(), "ad text");
        g.append_period(1, &[comment("a", "ad", 4)]).unwrap();
        assert_eq!(g.to_jsonl().lines().count(), 2);
        assert_eq!(g.to_edge_list(), "u - 0 -\na u 1 4\n");
        let periods: Vec<Snapshot> = serde_json::from_str(&g.periods_json()).unwrap();
        assert_eq!(periods.len(), 2);
    }

    proptest! {
        #[test]
        fn growth_is_monotone_and_edges_unique(
            steps in proptest::collection::vec(
                proptest::collection::vec((0usize..6, any::<bool>(), 0u8..6), 0..8),
                1..10,
            )
        ) {
            let mut g = InteractionGraph::init("u".into(), "ad".into(), "ad");
            for (i, step) in steps.iter().enumerate() {
                let t = i as u32 + 1;
                let reactions: Vec<(UserId, Reaction)> = step
                    .iter()
                    .map(|&(u, c, inc)| {
                        let user = UserId::new(format!("v{u}"));
                        let r = if c {
                            Reaction::comment("ad".into(), "x".into(), inc)
                        } else {
                            Reaction::ignore("ad".into())
                        };
                        (user, r)
                    })
                    .collect();
                g.append_period(t, &reactions).unwrap();
            }
            for t in 1..=g.last_period() {
                let (pv, pe) = (g.vertices_at(t - 1).unwrap(), g.edges_at(t - 1).unwrap());
                let (v, e) = (g.vertices_at(t).unwrap(), g.edges_at(t).unwrap());
                prop_assert!(v.starts_with(pv));
                prop_assert!(e.starts_with(pe));
                for edge in e {
                    prop_assert!(v.contains(&edge.commenter));
                    prop_assert!(edge.period <= t);
                }
            }
            let keys: HashSet<_> = g.comments().iter().map(|e| (&e.commenter, &e.content_id, e.period)).collect();
            prop_assert_eq!(keys.len(), g.comments().len());
        }
    }
}

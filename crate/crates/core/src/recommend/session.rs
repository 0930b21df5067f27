use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RecommendError;

/// What one user specified during a configuration session: feature values
/// and the order (rank, starting at 1) in which features were specified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLog {
    pub session_id: String,
    pub user_id: String,
    pub values: BTreeMap<String, bool>,
    pub ranks: BTreeMap<String, u32>,
    pub completed: bool,
}

impl SessionLog {
    pub fn new(session_id: impl Into<String>, user_id: impl Into<String>) -> Self {
        SessionLog {
            session_id: session_id.into(),
            user_id: user_id.into(),
            values: BTreeMap::new(),
            ranks: BTreeMap::new(),
            completed: false,
        }
    }

    /// Records a value. A feature's rank is fixed the first time it is specified.
    pub fn specify(&mut self, feature: impl Into<String>, value: bool) -> &mut Self {
        let feature = feature.into();
        if !self.ranks.contains_key(&feature) {
            let next = self.ranks.values().copied().max().unwrap_or(0) + 1;
            self.ranks.insert(feature.clone(), next);
        }
        self.values.insert(feature, value);
        self
    }

    pub fn complete(mut self) -> Self {
        self.completed = true;
        self
    }

    pub fn is_specified(&self, feature: &str) -> bool {
        self.values.contains_key(feature) || self.ranks.contains_key(feature)
    }
}

/// Share of commonly specified features on which two sessions agree; 0 when
/// they have no specified feature in common.
pub fn user_similarity(a: &SessionLog, b: &SessionLog) -> f64 {
    let mut common = 0usize;
    let mut agree = 0usize;
    for (f, va) in &a.values {
        if let Some(vb) = b.values.get(f) {
            common += 1;
            if va == vb {
                agree += 1;
            }
        }
    }
    if common == 0 {
        0.0
    } else {
        agree as f64 / common as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRecommendation {
    pub feature: String,
    pub value: bool,
    /// Session ids of the neighbors that voted, most similar first.
    pub neighbors: Vec<String>,
    /// Neighbors supporting `value`, divided by the number of neighbors.
    pub vote_fraction: f64,
}

/// Descending similarity, then ascending session id.
fn by_similarity(a: &(f64, &str), b: &(f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Recommends a value for `target` by majority vote of the `k` completed
/// sessions most similar to `current`. Vote ties go to 0. When fewer than `k`
/// sessions qualify, all of them vote.
pub fn recommend_value(
    logs: &[SessionLog],
    current: &SessionLog,
    target: &str,
    k: usize,
) -> Result<ValueRecommendation, RecommendError> {
    if k == 0 {
        return Err(RecommendError::InvalidNeighborCount);
    }
    if current.values.contains_key(target) {
        return Err(RecommendError::AlreadySpecified(target.to_string()));
    }
    let mut scored: Vec<(f64, &SessionLog)> = logs
        .iter()
        .filter(|l| l.completed && l.session_id != current.session_id && l.values.contains_key(target))
        .map(|l| (user_similarity(current, l), l))
        .collect();
    if scored.is_empty() {
        return Err(RecommendError::NoEvidence(target.to_string()));
    }
    scored.sort_by(|a, b| by_similarity(&(a.0, &a.1.session_id), &(b.0, &b.1.session_id)));
    scored.truncate(k);

    let ones = scored.iter().filter(|(_, l)| l.values[target]).count();
    let zeros = scored.len() - ones;
    let value = ones > zeros;
    let support = if value { ones } else { zeros };
    Ok(ValueRecommendation {
        feature: target.to_string(),
        value,
        neighbors: scored.iter().map(|(_, l)| l.session_id.clone()).collect(),
        vote_fraction: support as f64 / scored.len() as f64,
    })
}

/// Similarity of two specification orderings over the items both ranked:
/// `(m - dist) / m`, where `dist` is the summed rank difference and `m` the
/// largest possible sum, reached by pairing one side's ranks ascending with
/// the other's descending. No common item gives 0; `m = 0` gives 1.
pub fn rank_similarity<K: Ord>(a: &BTreeMap<K, u32>, b: &BTreeMap<K, u32>) -> f64 {
    let mut ra = Vec::new();
    let mut rb = Vec::new();
    let mut dist: u64 = 0;
    for (item, &x) in a {
        if let Some(&y) = b.get(item) {
            ra.push(x);
            rb.push(y);
            dist += u64::from(x.abs_diff(y));
        }
    }
    if ra.is_empty() {
        return 0.0;
    }
    ra.sort_unstable();
    rb.sort_unstable_by(|x, y| y.cmp(x));
    let max: u64 = ra.iter().zip(&rb).map(|(x, y)| u64::from(x.abs_diff(*y))).sum();
    if max == 0 {
        return if dist == 0 { 1.0 } else { 0.0 };
    }
    max.saturating_sub(dist) as f64 / max as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextItem {
    pub item: String,
    /// Session whose ordering supplied the item.
    pub neighbor: String,
    pub similarity: f64,
    /// The item's rank in the neighbor's ordering.
    pub rank: u32,
}

/// Walks sessions from most to least similar ordering and returns the
/// lowest-ranked item of the first one that still has an unspecified item.
fn next_item<'a>(
    sessions: impl Iterator<Item = (&'a str, &'a BTreeMap<String, u32>)>,
    current: &BTreeMap<String, u32>,
    specified: impl Fn(&str) -> bool,
) -> Result<NextItem, RecommendError> {
    if current.is_empty() {
        return Err(RecommendError::NothingRanked);
    }
    let mut scored: Vec<(f64, &str, &BTreeMap<String, u32>)> =
        sessions.map(|(id, ranks)| (rank_similarity(current, ranks), id, ranks)).collect();
    scored.sort_by(|a, b| by_similarity(&(a.0, a.1), &(b.0, b.1)));
    for (similarity, id, ranks) in scored {
        let best =
            ranks.iter().filter(|(item, _)| !specified(item)).min_by(|x, y| x.1.cmp(y.1).then_with(|| x.0.cmp(y.0)));
        if let Some((item, &rank)) = best {
            return Ok(NextItem { item: item.clone(), neighbor: id.to_string(), similarity, rank });
        }
    }
    Err(RecommendError::NoCandidate)
}

/// Suggests the feature the current user should specify next, using other
/// sessions (completed or not) with similar specification orderings.
pub fn recommend_next_feature(logs: &[SessionLog], current: &SessionLog) -> Result<NextItem, RecommendError> {
    next_item(
        logs.iter().filter(|l| l.session_id != current.session_id).map(|l| (l.session_id.as_str(), &l.ranks)),
        &current.ranks,
        |f| current.is_specified(f),
    )
}

/// Order in which a knowledge engineer visited or edited constraints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditLog {
    pub session_id: String,
    pub ranks: BTreeMap<String, u32>,
}

impl EditLog {
    pub fn new<S: Into<String>>(session_id: impl Into<String>, ranks: impl IntoIterator<Item = (S, u32)>) -> Self {
        EditLog { session_id: session_id.into(), ranks: ranks.into_iter().map(|(c, r)| (c.into(), r)).collect() }
    }
}

/// Suggests the constraint to look at next; same procedure as
/// [`recommend_next_feature`].
pub fn recommend_next_constraint(edits: &[EditLog], current: &EditLog) -> Result<NextItem, RecommendError> {
    next_item(
        edits.iter().filter(|e| e.session_id != current.session_id).map(|e| (e.session_id.as_str(), &e.ranks)),
        &current.ranks,
        |c| current.ranks.contains_key(c),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log(id: &str, values: &[(&str, bool)], completed: bool) -> SessionLog {
        let mut l = SessionLog::new(id, id);
        for (f, v) in values {
            l.specify(*f, *v);
        }
        l.completed = completed;
        l
    }

    fn ranks(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn specify_assigns_increasing_ranks_once() {
        let mut l = SessionLog::new("s", "u");
        l.specify("a", true).specify("b", false).specify("a", false);
        assert_eq!(l.ranks, ranks(&[("a", 1), ("b", 2)]));
        assert!(!l.values["a"]);
    }

    #[test]
    fn disjoint_sessions_have_zero_similarity() {
        let a = log("a", &[("x", true)], true);
        let b = log("b", &[("y", true)], true);
        assert_eq!(user_similarity(&a, &b), 0.0);
    }

    #[test]
    fn single_log_votes() {
        let current = log("c", &[("x", true)], false);
        let rec = recommend_value(&[log("a", &[("t", true)], true)], &current, "t", 1).unwrap();
        assert!(rec.value);
        assert_eq!(rec.vote_fraction, 1.0);
    }

    #[test]
    fn value_recommendation_errors() {
        let current = log("c", &[("x", true)], false);
        let logs = [log("a", &[("t", true)], false)];
        assert_eq!(recommend_value(&logs, &current, "t", 1), Err(RecommendError::NoEvidence("t".into())));
        assert_eq!(recommend_value(&logs, &current, "t", 0), Err(RecommendError::InvalidNeighborCount));
        assert_eq!(recommend_value(&logs, &current, "x", 1), Err(RecommendError::AlreadySpecified("x".into())));
    }

    #[test]
    fn vote_ties_go_to_zero() {
        let current = log("c", &[], false);
        let logs = [log("a", &[("t", true)], true), log("b", &[("t", false)], true)];
        let rec = recommend_value(&logs, &current, "t", 2).unwrap();
        assert!(!rec.value);
        assert_eq!(rec.vote_fraction, 0.5);
    }

    #[test]
    fn rank_similarity_degenerate_cases() {
        assert_eq!(rank_similarity(&ranks(&[("a", 3)]), &ranks(&[("a", 3)])), 1.0);
        assert_eq!(rank_similarity(&ranks(&[("a", 1)]), &ranks(&[("b", 1)])), 0.0);
        // two items swapped: dist = m
        assert_eq!(rank_similarity(&ranks(&[("a", 1), ("b", 2)]), &ranks(&[("a", 2), ("b", 1)])), 0.0);
    }

    #[test]
    fn next_item_falls_through_exhausted_neighbors() {
        let current = EditLog::new("cur", [("c1", 1), ("c2", 2)]);
        let edits =
            [EditLog::new("near", [("c1", 1), ("c2", 2)]), EditLog::new("far", [("c2", 1), ("c1", 2), ("c9", 3)])];
        let next = recommend_next_constraint(&edits, &current).unwrap();
        assert_eq!(next.item, "c9");
        assert_eq!(next.neighbor, "far");
    }

    #[test]
    fn single_session_single_item() {
        let current = EditLog::new("cur", [("c1", 1)]);
        let next = recommend_next_constraint(&[EditLog::new("s", [("c1", 1), ("c2", 2)])], &current).unwrap();
        assert_eq!(next.item, "c2");
    }

    #[test]
    fn next_item_errors() {
        let empty = SessionLog::new("c", "u");
        let logs = [log("a", &[("x", true)], true)];
        assert_eq!(recommend_next_feature(&logs, &empty), Err(RecommendError::NothingRanked));
        let current = log("c", &[("x", true)], false);
        assert_eq!(recommend_next_feature(&logs, &current), Err(RecommendError::NoCandidate));
    }

    fn arb_ranks() -> impl Strategy<Value = BTreeMap<String, u32>> {
        prop::collection::vec(1u32..20, 0..6).prop_map(|rs| {
            let mut seen = std::collections::BTreeSet::new();
            rs.into_iter().enumerate().filter(|(_, r)| seen.insert(*r)).map(|(i, r)| (format!("f{i}"), r)).collect()
        })
    }

    fn arb_log(id: &'static str) -> impl Strategy<Value = SessionLog> {
        prop::collection::btree_map(0usize..6, any::<bool>(), 0..6).prop_map(move |vals| {
            let mut l = SessionLog::new(id, id);
            for (f, v) in vals {
                l.specify(format!("f{f}"), v);
            }
            l
        })
    }

    proptest! {
        #[test]
        fn rank_similarity_symmetric_and_bounded(a in arb_ranks(), b in arb_ranks()) {
            let s = rank_similarity(&a, &b);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, rank_similarity(&b, &a));
            if !a.is_empty() {
                prop_assert_eq!(rank_similarity(&a, &a), 1.0);
            }
        }

        #[test]
        fn user_similarity_symmetric_and_bounded(a in arb_log("a"), b in arb_log("b")) {
            let s = user_similarity(&a, &b);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, user_similarity(&b, &a));
            if !a.values.is_empty() {
                prop_assert_eq!(user_similarity(&a, &a), 1.0);
            }
        }

        #[test]
        fn all_neighbors_is_global_majority(votes in prop::collection::vec(any::<bool>(), 1..12)) {
            let logs: Vec<SessionLog> = votes.iter().enumerate().map(|(i, &v)| {
                let mut l = SessionLog::new(format!("s{i:02}"), "u");
                l.specify("t", v).specify("other", i % 2 == 0);
                l.complete()
            }).collect();
            let mut current = SessionLog::new("cur", "u");
            current.specify("other", true);
            let rec = recommend_value(&logs, &current, "t", logs.len()).unwrap();
            let ones = votes.iter().filter(|&&v| v).count();
            prop_assert_eq!(rec.value, ones * 2 > votes.len());
        }
    }
}

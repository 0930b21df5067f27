//! Test support: random feature models and a brute-force oracle that checks
//! configurations directly against feature-model semantics, without going
//! through `translate` or the solver.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::model::{
    ChildKind, CrossTreeConstraint, CrossTreeKind, Decomposition, Feature, FeatureId, FeatureModel, GroupKind,
};

/// A random valid model with between 1 and `max_features` features.
///
/// Feature ids follow depth-first declaration order, like parsed models.
pub fn random_model(rng: &mut impl Rng, max_features: usize) -> FeatureModel {
    let target = rng.random_range(1..=max_features.max(1));
    let mut m = FeatureModel::new("f0");
    let mut budget = target - 1;
    expand(rng, &mut m, FeatureId(0), 0, &mut budget);

    let n = m.features.len();
    if n >= 2 {
        for _ in 0..rng.random_range(0..=3) {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                let kind = if rng.random_bool(0.5) { CrossTreeKind::Requires } else { CrossTreeKind::Excludes };
                m.cross_tree.push(CrossTreeConstraint { kind, a: FeatureId(a), b: FeatureId(b) });
            }
        }
    }
    renumber(&m)
}

/// Same model with ids and names reassigned in depth-first declaration order.
fn renumber(m: &FeatureModel) -> FeatureModel {
    let order = m.depth_first();
    let new_id: BTreeMap<FeatureId, FeatureId> =
        order.iter().enumerate().map(|(i, &old)| (old, FeatureId(i))).collect();
    let map = |id: &FeatureId| new_id[id];
    let mut out = FeatureModel::new("f0");
    out.features = (0..order.len()).map(|i| Feature { id: FeatureId(i), name: format!("f{i}") }).collect();
    out.children = m
        .children
        .iter()
        .map(|(p, items)| {
            let items = items
                .iter()
                .map(|d| match d {
                    Decomposition::Child { feature, kind } => {
                        Decomposition::Child { feature: map(feature), kind: *kind }
                    }
                    Decomposition::Group { kind, members } => {
                        Decomposition::Group { kind: *kind, members: members.iter().map(map).collect() }
                    }
                })
                .collect();
            (map(p), items)
        })
        .collect();
    out.cross_tree =
        m.cross_tree.iter().map(|c| CrossTreeConstraint { kind: c.kind, a: map(&c.a), b: map(&c.b) }).collect();
    out
}

fn new_feature(m: &mut FeatureModel) -> FeatureId {
    let id = FeatureId(m.features.len());
    m.features.push(Feature { id, name: format!("f{}", id.0) });
    id
}

fn expand(rng: &mut impl Rng, m: &mut FeatureModel, parent: FeatureId, depth: usize, budget: &mut usize) {
    let slots = if depth == 0 { 4 } else { rng.random_range(0..=3) };
    for _ in 0..slots {
        if *budget == 0 {
            return;
        }
        let recurse_p = if depth < 3 { 0.4 } else { 0.0 };
        if *budget >= 2 && rng.random_bool(0.35) {
            let kind = if rng.random_bool(0.5) { GroupKind::Alternative } else { GroupKind::Or };
            let size = rng.random_range(2..=(*budget).min(3));
            let items = m.children.entry(parent).or_default();
            items.push(Decomposition::Group { kind, members: Vec::new() });
            let slot = items.len() - 1;
            let mut created = Vec::new();
            for _ in 0..size {
                let id = new_feature(m);
                *budget -= 1;
                if let Some(Decomposition::Group { members, .. }) =
                    m.children.get_mut(&parent).and_then(|items| items.get_mut(slot))
                {
                    members.push(id);
                }
                created.push(id);
            }
            for id in created {
                if rng.random_bool(recurse_p) {
                    expand(rng, m, id, depth + 1, budget);
                }
            }
        } else {
            let kind = if rng.random_bool(0.4) { ChildKind::Mandatory } else { ChildKind::Optional };
            let id = new_feature(m);
            *budget -= 1;
            m.children.entry(parent).or_default().push(Decomposition::Child { feature: id, kind });
            if rng.random_bool(recurse_p) {
                expand(rng, m, id, depth + 1, budget);
            }
        }
    }
}

/// Checks a selection against the feature-model semantics.
pub fn satisfies_model(model: &FeatureModel, selected: &impl Fn(FeatureId) -> bool) -> bool {
    if !selected(model.root) {
        return false;
    }
    for (&p, items) in &model.children {
        let on = selected(p);
        for item in items {
            let ok = match item {
                Decomposition::Child { feature, kind: ChildKind::Mandatory } => selected(*feature) == on,
                Decomposition::Child { feature, kind: ChildKind::Optional } => !selected(*feature) || on,
                Decomposition::Group { kind, members } => {
                    let count = members.iter().filter(|&&c| selected(c)).count();
                    match (on, kind) {
                        (false, _) => count == 0,
                        (true, GroupKind::Alternative) => count == 1,
                        (true, GroupKind::Or) => count >= 1,
                    }
                }
            };
            if !ok {
                return false;
            }
        }
    }
    model.cross_tree.iter().all(|c| match c.kind {
        CrossTreeKind::Requires => !selected(c.a) || selected(c.b),
        CrossTreeKind::Excludes => !(selected(c.a) && selected(c.b)),
    })
}

/// Same check over a name → value map; unknown or missing names fail.
pub fn satisfies_named(model: &FeatureModel, values: &BTreeMap<String, bool>) -> bool {
    if model.features.iter().any(|f| !values.contains_key(&f.name)) {
        return false;
    }
    let by_id: BTreeMap<FeatureId, bool> = model.features.iter().map(|f| (f.id, values[&f.name])).collect();
    satisfies_model(model, &|id| by_id.get(&id).copied().unwrap_or(false))
}

/// Every valid configuration, by exhaustive enumeration of all 2^n selections.
pub fn brute_force_solutions(model: &FeatureModel) -> BTreeSet<BTreeMap<String, bool>> {
    let n = model.features.len();
    assert!(n <= 20, "brute force is limited to 20 features");
    let mut out = BTreeSet::new();
    for bits in 0u64..(1 << n) {
        let row: BTreeMap<FeatureId, bool> =
            model.features.iter().enumerate().map(|(i, f)| (f.id, (bits >> i) & 1 == 1)).collect();
        if satisfies_model(model, &|id| row[&id]) {
            out.insert(model.features.iter().map(|f| (f.name.clone(), row[&f.id])).collect());
        }
    }
    out
}

/// Whether some valid configuration agrees with every entry of `partial`.
pub fn brute_force_consistent(model: &FeatureModel, partial: &BTreeMap<String, bool>) -> bool {
    brute_force_solutions(model).iter().any(|sol| partial.iter().all(|(k, v)| sol.get(k) == Some(v)))
}

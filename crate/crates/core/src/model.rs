//! Feature models: a rooted tree of features with mandatory/optional children,
//! alternative/or groups, and cross-tree `requires`/`excludes` constraints.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureId(pub usize);

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub id: FeatureId,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChildKind {
    Mandatory,
    Optional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupKind {
    /// Exactly one member is selected when the parent is.
    Alternative,
    /// At least one member is selected when the parent is.
    Or,
}

/// One entry of a feature's decomposition, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decomposition {
    Child { feature: FeatureId, kind: ChildKind },
    Group { kind: GroupKind, members: Vec<FeatureId> },
}

impl Decomposition {
    pub fn features(&self) -> Vec<FeatureId> {
        match self {
            Decomposition::Child { feature, .. } => vec![*feature],
            Decomposition::Group { members, .. } => members.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossTreeKind {
    Requires,
    Excludes,
}

impl CrossTreeKind {
    pub fn keyword(self) -> &'static str {
        match self {
            CrossTreeKind::Requires => "requires",
            CrossTreeKind::Excludes => "excludes",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossTreeConstraint {
    pub kind: CrossTreeKind,
    pub a: FeatureId,
    pub b: FeatureId,
}

/// A feature model.
///
/// The fields are plain data so that models can be assembled by hand or by a
/// generator; [`FeatureModel::validate`] reports structural problems. Models
/// produced by the DSL parser are always valid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureModel {
    /// All features, in declaration order.
    pub features: Vec<Feature>,
    pub root: FeatureId,
    /// Decomposition of each feature that has children.
    pub children: BTreeMap<FeatureId, Vec<Decomposition>>,
    pub cross_tree: Vec<CrossTreeConstraint>,
}

/// A structural problem found by [`FeatureModel::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelFinding {
    MissingRoot(FeatureId),
    DuplicateId(FeatureId),
    DuplicateName(String),
    InvalidName(String),
    /// A feature that is not reachable from the root.
    OrphanFeature(FeatureId),
    /// A feature that appears more than once in the tree (or is a descendant of itself).
    DuplicateReference(FeatureId),
    UnknownFeature(FeatureId),
    DegenerateGroup {
        parent: FeatureId,
        kind: GroupKind,
        size: usize,
    },
    SelfConstraint {
        kind: CrossTreeKind,
        feature: FeatureId,
    },
}

impl fmt::Display for ModelFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelFinding::MissingRoot(id) => write!(f, "root feature {id} is not declared"),
            ModelFinding::DuplicateId(id) => write!(f, "feature id {id} is declared more than once"),
            ModelFinding::DuplicateName(name) => write!(f, "feature name `{name}` is used more than once"),
            ModelFinding::InvalidName(name) => write!(f, "`{name}` is not a valid feature name"),
            ModelFinding::OrphanFeature(id) => write!(f, "feature {id} is not reachable from the root"),
            ModelFinding::DuplicateReference(id) => {
                write!(f, "feature {id} is referenced more than once in the tree")
            }
            ModelFinding::UnknownFeature(id) => write!(f, "reference to undeclared feature {id}"),
            ModelFinding::DegenerateGroup { parent, kind, size } => {
                write!(f, "{kind:?} group under {parent} has {size} member(s), needs at least 2")
            }
            ModelFinding::SelfConstraint { kind, feature } => {
                write!(f, "{} constraint relates {feature} to itself", kind.keyword())
            }
        }
    }
}

pub const KEYWORDS: &[&str] =
    &["model", "feature", "mandatory", "optional", "alternative", "or", "constraints", "requires", "excludes"];

/// `[A-Za-z][A-Za-z0-9_]*`, excluding DSL keywords.
pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !KEYWORDS.contains(&name)
}

/// How a non-root feature hangs off its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Mandatory,
    Optional,
    Alternative,
    Or,
}

impl FeatureModel {
    /// A model consisting of a single root feature.
    pub fn new(root_name: impl Into<String>) -> Self {
        FeatureModel {
            features: vec![Feature { id: FeatureId(0), name: root_name.into() }],
            root: FeatureId(0),
            children: BTreeMap::new(),
            cross_tree: Vec::new(),
        }
    }

    fn next_id(&self) -> FeatureId {
        FeatureId(self.features.iter().map(|f| f.id.0 + 1).max().unwrap_or(0))
    }

    /// Appends a child feature under `parent` and returns its id.
    pub fn add_child(&mut self, parent: FeatureId, name: impl Into<String>, kind: ChildKind) -> FeatureId {
        let id = self.next_id();
        self.features.push(Feature { id, name: name.into() });
        self.children.entry(parent).or_default().push(Decomposition::Child { feature: id, kind });
        id
    }

    /// Appends a group under `parent`; returns the member ids in order.
    pub fn add_group<S: Into<String>>(
        &mut self,
        parent: FeatureId,
        kind: GroupKind,
        names: impl IntoIterator<Item = S>,
    ) -> Vec<FeatureId> {
        let mut members = Vec::new();
        for name in names {
            let id = self.next_id();
            self.features.push(Feature { id, name: name.into() });
            members.push(id);
        }
        self.children.entry(parent).or_default().push(Decomposition::Group { kind, members: members.clone() });
        members
    }

    pub fn add_constraint(&mut self, kind: CrossTreeKind, a: FeatureId, b: FeatureId) {
        self.cross_tree.push(CrossTreeConstraint { kind, a, b });
    }

    pub fn name(&self) -> &str {
        self.feature(self.root).map(|f| f.name.as_str()).unwrap_or("")
    }

    pub fn feature(&self, id: FeatureId) -> Option<&Feature> {
        self.features.iter().find(|f| f.id == id)
    }

    pub fn feature_by_name(&self, name: &str) -> Option<&Feature> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn decomposition(&self, id: FeatureId) -> &[Decomposition] {
        self.children.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Features in depth-first declaration order starting at the root.
    ///
    /// Each feature is visited at most once, so this terminates on malformed
    /// (cyclic) models too.
    pub fn depth_first(&self) -> Vec<FeatureId> {
        let mut order = Vec::new();
        let mut seen = BTreeSet::new();
        self.visit(self.root, &mut seen, &mut order);
        order
    }

    fn visit(&self, id: FeatureId, seen: &mut BTreeSet<FeatureId>, order: &mut Vec<FeatureId>) {
        if !seen.insert(id) {
            return;
        }
        order.push(id);
        for item in self.decomposition(id) {
            for child in item.features() {
                self.visit(child, seen, order);
            }
        }
    }

    /// Parent and relation of every non-root feature in the tree.
    pub fn parents(&self) -> HashMap<FeatureId, (FeatureId, Relation)> {
        let mut parents = HashMap::new();
        for (&parent, items) in &self.children {
            for item in items {
                match item {
                    Decomposition::Child { feature, kind } => {
                        let rel = match kind {
                            ChildKind::Mandatory => Relation::Mandatory,
                            ChildKind::Optional => Relation::Optional,
                        };
                        parents.entry(*feature).or_insert((parent, rel));
                    }
                    Decomposition::Group { kind, members } => {
                        let rel = match kind {
                            GroupKind::Alternative => Relation::Alternative,
                            GroupKind::Or => Relation::Or,
                        };
                        for m in members {
                            parents.entry(*m).or_insert((parent, rel));
                        }
                    }
                }
            }
        }
        parents
    }

    /// Structural findings; empty iff the model is valid.
    pub fn validate(&self) -> Vec<ModelFinding> {
        let mut findings = Vec::new();

        let mut ids = BTreeSet::new();
        let mut names = BTreeSet::new();
        for f in &self.features {
            if !ids.insert(f.id) {
                findings.push(ModelFinding::DuplicateId(f.id));
            }
            if !is_valid_name(&f.name) {
                findings.push(ModelFinding::InvalidName(f.name.clone()));
            }
            if !names.insert(f.name.as_str()) {
                findings.push(ModelFinding::DuplicateName(f.name.clone()));
            }
        }
        if !ids.contains(&self.root) {
            findings.push(ModelFinding::MissingRoot(self.root));
        }

        let mut references: BTreeMap<FeatureId, usize> = BTreeMap::new();
        references.insert(self.root, 1);
        for (&parent, items) in &self.children {
            if !ids.contains(&parent) {
                findings.push(ModelFinding::UnknownFeature(parent));
            }
            for item in items {
                if let Decomposition::Group { kind, members } = item {
                    if members.len() < 2 {
                        findings.push(ModelFinding::DegenerateGroup { parent, kind: *kind, size: members.len() });
                    }
                }
                for child in item.features() {
                    if !ids.contains(&child) {
                        findings.push(ModelFinding::UnknownFeature(child));
                    }
                    *references.entry(child).or_default() += 1;
                }
            }
        }
        for (&id, &count) in &references {
            if count > 1 && ids.contains(&id) {
                findings.push(ModelFinding::DuplicateReference(id));
            }
        }

        let reachable: BTreeSet<FeatureId> = self.depth_first().into_iter().collect();
        for f in &self.features {
            // Also covers features referenced only from a detached subtree.
            if !reachable.contains(&f.id) {
                findings.push(ModelFinding::OrphanFeature(f.id));
            }
        }

        for c in &self.cross_tree {
            for id in [c.a, c.b] {
                if !ids.contains(&id) {
                    findings.push(ModelFinding::UnknownFeature(id));
                }
            }
            if c.a == c.b {
                findings.push(ModelFinding::SelfConstraint { kind: c.kind, feature: c.a });
            }
        }

        findings.dedup();
        findings
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FeatureModel {
        let mut m = FeatureModel::new("car");
        let engine = m.add_child(m.root, "engine", ChildKind::Mandatory);
        m.add_group(engine, GroupKind::Alternative, ["petrol", "electric"]);
        let radio = m.add_child(m.root, "radio", ChildKind::Optional);
        let electric = m.feature_by_name("electric").unwrap().id;
        m.add_constraint(CrossTreeKind::Requires, radio, electric);
        m
    }

    #[test]
    fn valid_model_has_no_findings() {
        assert!(small().validate().is_empty());
    }

    #[test]
    fn depth_first_follows_declaration() {
        let m = small();
        let names: Vec<_> = m.depth_first().iter().map(|&id| m.feature(id).unwrap().name.clone()).collect();
        assert_eq!(names, ["car", "engine", "petrol", "electric", "radio"]);
    }

    #[test]
    fn single_member_group_is_degenerate() {
        let mut m = FeatureModel::new("r");
        m.add_group(m.root, GroupKind::Alternative, ["only"]);
        assert_eq!(
            m.validate(),
            vec![ModelFinding::DegenerateGroup { parent: m.root, kind: GroupKind::Alternative, size: 1 }]
        );
    }

    #[test]
    fn feature_referenced_twice_is_duplicate() {
        let mut m = FeatureModel::new("r");
        let a = m.add_child(m.root, "a", ChildKind::Optional);
        m.children.get_mut(&m.root).unwrap().push(Decomposition::Child { feature: a, kind: ChildKind::Mandatory });
        assert!(m.validate().contains(&ModelFinding::DuplicateReference(a)));
    }

    #[test]
    fn detached_feature_is_orphan() {
        let mut m = FeatureModel::new("r");
        m.features.push(Feature { id: FeatureId(7), name: "lost".into() });
        assert_eq!(m.validate(), vec![ModelFinding::OrphanFeature(FeatureId(7))]);
    }

    #[test]
    fn duplicate_ids_and_bad_names() {
        let mut m = FeatureModel::new("r");
        m.features.push(Feature { id: FeatureId(0), name: "9lives".into() });
        let findings = m.validate();
        assert!(findings.contains(&ModelFinding::DuplicateId(FeatureId(0))));
        assert!(findings.contains(&ModelFinding::InvalidName("9lives".into())));
    }

    #[test]
    fn cross_tree_checks() {
        let mut m = FeatureModel::new("r");
        let a = m.add_child(m.root, "a", ChildKind::Optional);
        m.add_constraint(CrossTreeKind::Excludes, a, a);
        m.add_constraint(CrossTreeKind::Requires, a, FeatureId(99));
        let findings = m.validate();
        assert!(findings.contains(&ModelFinding::SelfConstraint { kind: CrossTreeKind::Excludes, feature: a }));
        assert!(findings.contains(&ModelFinding::UnknownFeature(FeatureId(99))));
    }

    #[test]
    fn keywords_are_not_names() {
        assert!(!is_valid_name("or"));
        assert!(is_valid_name("orange"));
        assert!(is_valid_name("QA_2"));
        assert!(!is_valid_name("_x"));
        assert!(!is_valid_name(""));
    }
}

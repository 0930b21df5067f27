//! Configuration tasks: Boolean variables (one per feature), the constraints
//! derived from the feature model, and the user's requirements.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Formula, Var};
use crate::model::{ChildKind, CrossTreeKind, Decomposition, FeatureId, FeatureModel, GroupKind, ModelFinding};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("model is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidModel(Vec<ModelFinding>),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(Var),
    #[error("malformed requirement `{0}`, expected feature=0 or feature=1")]
    MalformedRequirement(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub feature: FeatureId,
}

/// Where a model constraint comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Root,
    Mandatory,
    Optional,
    Alternative,
    Or,
    Requires,
    Excludes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub label: String,
    pub origin: Origin,
    pub formula: Formula,
}

/// A preferred inclusion (`value = true`) or exclusion of a feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Requirement {
    pub var: Var,
    pub value: bool,
    /// Session or user the requirement came from, if known.
    pub provenance: Option<String>,
}

impl Requirement {
    pub fn new(var: Var, value: bool) -> Self {
        Requirement { var, value, provenance: None }
    }

    pub fn formula(&self) -> Formula {
        Formula::Lit(self.var, self.value)
    }
}

/// Boolean configuration task: variables `V` with domain {0,1}, model
/// constraints `C_F` and requirements `C_R`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigurationTask {
    variables: Vec<Variable>,
    names: Vec<String>,
    model_constraints: Vec<Constraint>,
    requirements: Vec<Requirement>,
}

impl ConfigurationTask {
    /// Builds a task from raw parts. Every variable referenced by a constraint
    /// or requirement must be below `variables.len()`.
    pub fn new(
        variables: Vec<Variable>,
        model_constraints: Vec<Constraint>,
        requirements: Vec<Requirement>,
    ) -> Result<Self, TaskError> {
        let n = variables.len();
        for c in &model_constraints {
            if let Some(v) = c.formula.vars().into_iter().find(|v| v.0 >= n) {
                return Err(TaskError::UnknownVariable(v));
            }
        }
        if let Some(r) = requirements.iter().find(|r| r.var.0 >= n) {
            return Err(TaskError::UnknownVariable(r.var));
        }
        let names = variables.iter().map(|v| v.name.clone()).collect();
        Ok(ConfigurationTask { variables, names, model_constraints, requirements })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    /// Variable names, indexed by `Var`.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn name(&self, var: Var) -> &str {
        &self.names[var.0]
    }

    pub fn var(&self, name: &str) -> Option<Var> {
        self.names.iter().position(|n| n == name).map(Var)
    }

    pub fn model_constraints(&self) -> &[Constraint] {
        &self.model_constraints
    }

    pub fn requirements(&self) -> &[Requirement] {
        &self.requirements
    }

    /// `C_F` formulas followed by `C_R` literals.
    pub fn formulas(&self) -> Vec<Formula> {
        self.model_constraints
            .iter()
            .map(|c| c.formula.clone())
            .chain(self.requirements.iter().map(Requirement::formula))
            .collect()
    }

    pub fn require(&self, name: &str, value: bool) -> Result<Requirement, TaskError> {
        let var = self.var(name).ok_or_else(|| TaskError::UnknownFeature(name.to_string()))?;
        Ok(Requirement::new(var, value))
    }

    /// Parses `feature=0` / `feature=1`.
    pub fn parse_requirement(&self, text: &str) -> Result<Requirement, TaskError> {
        let (name, value) = text.split_once('=').ok_or_else(|| TaskError::MalformedRequirement(text.to_string()))?;
        let value = match value.trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(TaskError::MalformedRequirement(text.to_string())),
        };
        self.require(name.trim(), value)
    }

    /// Same task with `C_R` replaced.
    pub fn with_requirements(&self, requirements: Vec<Requirement>) -> Result<Self, TaskError> {
        if let Some(r) = requirements.iter().find(|r| r.var.0 >= self.len()) {
            return Err(TaskError::UnknownVariable(r.var));
        }
        Ok(ConfigurationTask { requirements, ..self.clone() })
    }

    pub fn describe(&self, r: &Requirement) -> String {
        format!("{}={}", self.name(r.var), u8::from(r.value))
    }
}

impl fmt::Display for ConfigurationTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.model_constraints {
            writeln!(f, "{}: {}", c.label, c.formula.display(&self.names))?;
        }
        for r in &self.requirements {
            writeln!(f, "req: {}", self.describe(r))?;
        }
        Ok(())
    }
}

/// Translates a valid feature model into a configuration task with empty `C_R`.
///
/// Variables follow depth-first declaration order. Encoding, with `p` the parent:
/// root `r = 1`; mandatory `p <-> c`; optional `c -> p`; alternative group
/// `c_i <-> (p & !c_j for all j != i)`; or group `p <-> (c_1 | ... | c_n)`;
/// `requires(a, b)` as `a -> b`; `excludes(a, b)` as `!(a & b)`.
pub fn translate(model: &FeatureModel) -> Result<ConfigurationTask, TaskError> {
    let findings = model.validate();
    if !findings.is_empty() {
        return Err(TaskError::InvalidModel(findings));
    }

    let order = model.depth_first();
    let variables: Vec<Variable> = order
        .iter()
        .map(|&id| Variable { name: model.feature(id).expect("validated").name.clone(), feature: id })
        .collect();
    let var_of = |id: FeatureId| Var(order.iter().position(|&o| o == id).expect("validated"));
    let lit = |id: FeatureId| Formula::var(var_of(id));

    let mut constraints = Vec::new();
    let mut push = |origin: Origin, formula: Formula| {
        let label = format!("c{}", constraints.len());
        constraints.push(Constraint { label, origin, formula });
    };

    push(Origin::Root, Formula::Lit(var_of(model.root), true));
    for &parent in &order {
        for item in model.decomposition(parent) {
            match item {
                Decomposition::Child { feature, kind: ChildKind::Mandatory } => {
                    push(Origin::Mandatory, Formula::iff(lit(parent), lit(*feature)));
                }
                Decomposition::Child { feature, kind: ChildKind::Optional } => {
                    push(Origin::Optional, Formula::implies(lit(*feature), lit(parent)));
                }
                Decomposition::Group { kind: GroupKind::Alternative, members } => {
                    for &m in members {
                        let mut conj = vec![lit(parent)];
                        conj.extend(members.iter().filter(|&&o| o != m).map(|&o| Formula::negation(lit(o))));
                        push(Origin::Alternative, Formula::iff(lit(m), Formula::And(conj)));
                    }
                }
                Decomposition::Group { kind: GroupKind::Or, members } => {
                    let any = Formula::Or(members.iter().map(|&m| lit(m)).collect());
                    push(Origin::Or, Formula::iff(lit(parent), any));
                }
            }
        }
    }
    for c in &model.cross_tree {
        match c.kind {
            CrossTreeKind::Requires => push(Origin::Requires, Formula::implies(lit(c.a), lit(c.b))),
            CrossTreeKind::Excludes => {
                push(Origin::Excludes, Formula::negation(Formula::And(vec![lit(c.a), lit(c.b)])))
            }
        }
    }

    ConfigurationTask::new(variables, constraints, Vec::new())
}

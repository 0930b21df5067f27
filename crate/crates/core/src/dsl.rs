//! Text format for feature models (`.fm` files).
//!
//! ```text
//! model      := "model" IDENT "{" (item | group)* "}" constraints?
//! item       := relkw? "feature" IDENT ("{" (item | group)* "}")?
//! relkw      := "mandatory" | "optional"          (default: optional)
//! group      := ("alternative" | "or") "{" item+ "}"
//! constraints:= "constraints" "{" cline* "}"
//! cline      := ("requires" | "excludes") IDENT IDENT
//! ```
//!
//! `#` starts a comment that runs to the end of the line.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{
    ChildKind, CrossTreeConstraint, CrossTreeKind, Decomposition, Feature, FeatureId, FeatureModel, GroupKind, KEYWORDS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{line}:{column}: duplicate feature `{name}`")]
    DuplicateFeature { line: usize, column: usize, name: String },
    #[error("{line}:{column}: unknown feature `{name}` in constraints")]
    UnknownFeature { line: usize, column: usize, name: String },
    #[error("{line}:{column}: {kind} group has {size} member(s), at least 2 are required")]
    DegenerateGroup { line: usize, column: usize, kind: &'static str, size: usize },
    #[error("{line}:{column}: constraint relates `{name}` to itself")]
    SelfConstraint { line: usize, column: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Open,
    Close,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        let text = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            if c.is_whitespace() {
                i += 1;
            } else if c == '{' || c == '}' {
                let tok = if c == '{' { Tok::Open } else { Tok::Close };
                tokens.push(Token { tok, line, column });
                i += 1;
            } else if c.is_ascii_alphabetic() {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                tokens.push(Token { tok: Tok::Word(word), line, column });
            } else {
                return Err(ParseError::Syntax { line, column, message: format!("unexpected character `{c}`") });
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    /// Line/column just past the input, for end-of-input errors.
    end: (usize, usize),
    model: FeatureModel,
    by_name: HashMap<String, FeatureId>,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_word(&self) -> Option<&str> {
        match self.peek() {
            Some(Token { tok: Tok::Word(w), .. }) => Some(w.as_str()),
            _ => None,
        }
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map(|t| (t.line, t.column)).unwrap_or(self.end)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let (line, column) = self.here();
        Err(ParseError::Syntax { line, column, message: message.into() })
    }

    fn describe_next(&self) -> String {
        match self.peek() {
            None => "end of input".to_string(),
            Some(Token { tok: Tok::Open, .. }) => "`{`".to_string(),
            Some(Token { tok: Tok::Close, .. }) => "`}`".to_string(),
            Some(Token { tok: Tok::Word(w), .. }) => format!("`{w}`"),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.peek().map(|t| &t.tok) == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            let want = match tok {
                Tok::Open => "`{`".to_string(),
                Tok::Close => "`}`".to_string(),
                Tok::Word(w) => format!("`{w}`"),
            };
            self.error(format!("expected {want}, found {}", self.describe_next()))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        self.expect(Tok::Word(kw.to_string()))
    }

    fn ident(&mut self) -> Result<(String, usize, usize), ParseError> {
        match self.peek().cloned() {
            Some(Token { tok: Tok::Word(w), line, column }) => {
                if KEYWORDS.contains(&w.as_str()) {
                    return Err(ParseError::Syntax {
                        line,
                        column,
                        message: format!("`{w}` is a reserved word and cannot name a feature"),
                    });
                }
                self.pos += 1;
                Ok((w, line, column))
            }
            _ => self.error(format!("expected a feature name, found {}", self.describe_next())),
        }
    }

    fn declare(&mut self, name: String, line: usize, column: usize) -> Result<FeatureId, ParseError> {
        if self.by_name.contains_key(&name) {
            return Err(ParseError::DuplicateFeature { line, column, name });
        }
        let id = FeatureId(self.model.features.len());
        self.by_name.insert(name.clone(), id);
        self.model.features.push(Feature { id, name });
        Ok(id)
    }

    /// `(item | group)*` up to and including the closing brace.
    fn body(&mut self, parent: FeatureId) -> Result<(), ParseError> {
        loop {
            match self.peek_word() {
                None => {
                    if matches!(self.peek(), Some(Token { tok: Tok::Close, .. })) {
                        self.pos += 1;
                        return Ok(());
                    }
                    return self.error(format!("expected a feature, group or `}}`, found {}", self.describe_next()));
                }
                Some("alternative") | Some("or") => self.group(parent)?,
                Some("mandatory") | Some("optional") | Some("feature") => {
                    let (id, kind) = self.item(false)?;
                    self.model.children.entry(parent).or_default().push(Decomposition::Child { feature: id, kind });
                }
                Some(_) => {
                    return self.error(format!("expected a feature, group or `}}`, found {}", self.describe_next()))
                }
            }
        }
    }

    fn item(&mut self, in_group: bool) -> Result<(FeatureId, ChildKind), ParseError> {
        let kind = match self.peek_word() {
            Some("mandatory") => {
                if in_group {
                    return self.error("group members cannot be mandatory");
                }
                self.pos += 1;
                ChildKind::Mandatory
            }
            Some("optional") => {
                self.pos += 1;
                ChildKind::Optional
            }
            _ => ChildKind::Optional,
        };
        self.keyword("feature")?;
        let (name, line, column) = self.ident()?;
        let id = self.declare(name, line, column)?;
        if matches!(self.peek(), Some(Token { tok: Tok::Open, .. })) {
            self.pos += 1;
            self.body(id)?;
        }
        Ok((id, kind))
    }

    fn group(&mut self, parent: FeatureId) -> Result<(), ParseError> {
        let (line, column) = self.here();
        let kind = match self.peek_word() {
            Some("alternative") => GroupKind::Alternative,
            _ => GroupKind::Or,
        };
        self.pos += 1;
        self.expect(Tok::Open)?;
        let mut members = Vec::new();
        loop {
            match self.peek() {
                Some(Token { tok: Tok::Close, .. }) => {
                    self.pos += 1;
                    break;
                }
                Some(_) => members.push(self.item(true)?.0),
                None => return self.error("unterminated group"),
            }
        }
        if members.len() < 2 {
            let kind = match kind {
                GroupKind::Alternative => "alternative",
                GroupKind::Or => "or",
            };
            return Err(ParseError::DegenerateGroup { line, column, kind, size: members.len() });
        }
        self.model.children.entry(parent).or_default().push(Decomposition::Group { kind, members });
        Ok(())
    }

    fn constraints(&mut self) -> Result<(), ParseError> {
        self.keyword("constraints")?;
        self.expect(Tok::Open)?;
        loop {
            let kind = match self.peek_word() {
                Some("requires") => CrossTreeKind::Requires,
                Some("excludes") => CrossTreeKind::Excludes,
                _ => {
                    if matches!(self.peek(), Some(Token { tok: Tok::Close, .. })) {
                        self.pos += 1;
                        return Ok(());
                    }
                    return self
                        .error(format!("expected `requires`, `excludes` or `}}`, found {}", self.describe_next()));
                }
            };
            self.pos += 1;
            let a = self.resolve()?;
            let (line, column) = self.here();
            let b = self.resolve()?;
            if a == b {
                let name = self.model.features[a.0].name.clone();
                return Err(ParseError::SelfConstraint { line, column, name });
            }
            self.model.cross_tree.push(CrossTreeConstraint { kind, a, b });
        }
    }

    fn resolve(&mut self) -> Result<FeatureId, ParseError> {
        let (name, line, column) = self.ident()?;
        self.by_name.get(&name).copied().ok_or(ParseError::UnknownFeature { line, column, name })
    }
}

/// Parses DSL source into a valid [`FeatureModel`].
///
/// Feature ids are assigned in depth-first declaration order, starting with
/// the root at 0.
pub fn parse_model(src: &str) -> Result<FeatureModel, ParseError> {
    let tokens = tokenize(src)?;
    let end_line = src.lines().count().max(1);
    let end_col = src.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
    let mut p = Parser {
        tokens,
        pos: 0,
        end: (end_line, end_col),
        model: FeatureModel {
            features: Vec::new(),
            root: FeatureId(0),
            children: Default::default(),
            cross_tree: Vec::new(),
        },
        by_name: HashMap::new(),
    };
    p.keyword("model")?;
    let (name, line, column) = p.ident()?;
    let root = p.declare(name, line, column)?;
    p.model.root = root;
    p.expect(Tok::Open)?;
    p.body(root)?;
    if p.peek().is_some() {
        p.constraints()?;
    }
    if p.peek().is_some() {
        return p.error(format!("unexpected {} after end of model", p.describe_next()));
    }
    Ok(p.model)
}

/// Renders a model as DSL source. `parse_model` of the result is structurally
/// equal to a valid input model.
pub fn serialize_model(model: &FeatureModel) -> String {
    let mut out = String::new();
    let items = model.decomposition(model.root);
    if items.is_empty() {
        let _ = writeln!(out, "model {} {{ }}", model.name());
    } else {
        let _ = writeln!(out, "model {} {{", model.name());
        write_items(model, items, 1, &mut out);
        out.push_str("}\n");
    }
    if !model.cross_tree.is_empty() {
        out.push_str("constraints {\n");
        for c in &model.cross_tree {
            let name = |id| model.feature(id).map(|f| f.name.as_str()).unwrap_or("?");
            let _ = writeln!(out, "  {} {} {}", c.kind.keyword(), name(c.a), name(c.b));
        }
        out.push_str("}\n");
    }
    out
}

fn write_items(model: &FeatureModel, items: &[Decomposition], depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for item in items {
        match item {
            Decomposition::Child { feature, kind } => {
                let kw = match kind {
                    ChildKind::Mandatory => "mandatory ",
                    ChildKind::Optional => "optional ",
                };
                write_feature(model, *feature, kw, depth, out);
            }
            Decomposition::Group { kind, members } => {
                let kw = match kind {
                    GroupKind::Alternative => "alternative",
                    GroupKind::Or => "or",
                };
                let _ = writeln!(out, "{pad}{kw} {{");
                for m in members {
                    write_feature(model, *m, "", depth + 1, out);
                }
                let _ = writeln!(out, "{pad}}}");
            }
        }
    }
}

fn write_feature(model: &FeatureModel, id: FeatureId, kw: &str, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    let name = model.feature(id).map(|f| f.name.as_str()).unwrap_or("?");
    let items = model.decomposition(id);
    if items.is_empty() {
        let _ = writeln!(out, "{pad}{kw}feature {name}");
    } else {
        let _ = writeln!(out, "{pad}{kw}feature {name} {{");
        write_items(model, items, depth + 1, out);
        let _ = writeln!(out, "{pad}}}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SURVEY_MODEL;

    #[test]
    fn parses_survey() {
        let m = parse_model(SURVEY_MODEL).unwrap();
        let names: Vec<_> = m.features.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "survey",
                "license",
                "advancedlicense",
                "basiclicense",
                "ABtesting",
                "statistics",
                "QA",
                "basicQA",
                "multimediaQA"
            ]
        );
        assert_eq!(m.cross_tree.len(), 3);
        assert!(m.validate().is_empty());
    }

    #[test]
    fn minimal_model() {
        let m = parse_model("model m { }").unwrap();
        assert_eq!(m.features.len(), 1);
        assert_eq!(m.name(), "m");
        assert!(m.cross_tree.is_empty());
        assert_eq!(serialize_model(&m), "model m { }\n");
    }

    #[test]
    fn unknown_feature_in_constraints() {
        let src =
            "model survey {\n  optional feature ABtesting\n}\nconstraints {\n  requires ABtesting nosuchfeature\n}\n";
        assert_eq!(
            parse_model(src),
            Err(ParseError::UnknownFeature { line: 5, column: 22, name: "nosuchfeature".into() })
        );
    }

    #[test]
    fn duplicate_feature() {
        let err = parse_model("model m {\n feature a\n feature a\n}").unwrap_err();
        assert_eq!(err, ParseError::DuplicateFeature { line: 3, column: 10, name: "a".into() });
        assert!(matches!(parse_model("model m { feature m }"), Err(ParseError::DuplicateFeature { .. })));
    }

    #[test]
    fn degenerate_group() {
        let err = parse_model("model m {\n  feature a {\n    or { feature b }\n  }\n}").unwrap_err();
        assert_eq!(err, ParseError::DegenerateGroup { line: 3, column: 5, kind: "or", size: 1 });
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_model("model m {\n  feature\n}") {
            Err(ParseError::Syntax { line, column, .. }) => assert_eq!((line, column), (3, 1)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_model("model m { feature a $ }"), Err(ParseError::Syntax { line: 1, column: 21, .. })));
        assert!(matches!(parse_model("model m {"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_model("model m { } trailing"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_model("model or { }"), Err(ParseError::Syntax { .. })));
        assert!(matches!(
            parse_model("model m { alternative { mandatory feature a feature b } }"),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn self_constraint_rejected() {
        let err = parse_model("model m { feature a } constraints { excludes a a }").unwrap_err();
        assert!(matches!(err, ParseError::SelfConstraint { .. }));
    }

    #[test]
    fn comments_and_default_kind() {
        let m = parse_model("# header\nmodel m { # trailing\n feature a # optional by default\n}").unwrap();
        assert_eq!(
            m.decomposition(m.root),
            &[Decomposition::Child { feature: FeatureId(1), kind: ChildKind::Optional }]
        );
    }

    #[test]
    fn survey_round_trip() {
        let m = parse_model(SURVEY_MODEL).unwrap();
        let text = serialize_model(&m);
        assert_eq!(parse_model(&text).unwrap(), m);
    }
}

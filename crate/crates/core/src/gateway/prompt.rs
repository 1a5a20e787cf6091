//! Named prompt templates with `{{placeholder}}` markers.
//!
//! Templates ship with the crate and can be overridden by a directory of
//! `<template_id>.toml` files read at startup. The reserved `{{few_shot}}`
//! marker expands to the template's few-shot examples.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Stage;

pub const FEW_SHOT_MARKER: &str = "few_shot";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("unknown template: {0}")]
    UnknownTemplate(String),
    #[error("missing placeholder: {0}")]
    MissingPlaceholder(String),
    #[error("template {file}: {message}")]
    Parse { file: String, message: String },
    #[error("duplicate template id {0}")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: Stage,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
    pub few_shot_examples: Vec<FewShotExample>,
}

#[derive(Deserialize)]
struct TemplateFile {
    id: String,
    body: String,
    #[serde(default)]
    required_placeholders: Vec<String>,
    #[serde(default)]
    few_shot_examples: Vec<FewShotExample>,
}

/// Placeholder names appearing as `{{name}}` in `body`, in order of first use.
pub fn markers(body: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) if is_marker_name(&after[..end]) => {
                let name = after[..end].to_owned();
                if !out.contains(&name) {
                    out.push(name);
                }
                rest = &after[end + 2..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_marker_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl PromptTemplate {
    pub fn new(id: Stage, body: impl Into<String>, few_shot_examples: Vec<FewShotExample>) -> Self {
        let body = body.into();
        let required_placeholders = markers(&body).into_iter().filter(|m| m != FEW_SHOT_MARKER).collect();
        Self {
            id,
            body,
            required_placeholders,
            few_shot_examples,
        }
    }

    pub fn from_toml(text: &str, file: &str) -> Result<Self, PromptError> {
        let parsed: TemplateFile = toml::from_str(text).map_err(|e| PromptError::Parse {
            file: file.to_owned(),
            message: e.to_string(),
        })?;
        let id = Stage::parse(&parsed.id).ok_or_else(|| PromptError::UnknownTemplate(parsed.id.clone()))?;
        let mut template = Self::new(id, parsed.body, parsed.few_shot_examples);
        for name in parsed.required_placeholders {
            if !is_marker_name(&name) {
                return Err(PromptError::Parse {
                    file: file.to_owned(),
                    message: format!("invalid placeholder name {name:?}"),
                });
            }
            template.required_placeholders.insert(name);
        }
        Ok(template)
    }

    fn few_shot_block(&self) -> String {
        self.few_shot_examples
            .iter()
            .enumerate()
            .map(|(i, ex)| {
                format!(
                    "Example {}\nInput:\n{}\nOutput:\n{}\n",
                    i + 1,
                    ex.input.trim(),
                    ex.output.trim()
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Single-pass substitution; text inside bound values is not re-scanned.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, PromptError> {
        let in_body = markers(&self.body);
        let missing = in_body
            .iter()
            .filter(|m| *m != FEW_SHOT_MARKER)
            .chain(self.required_placeholders.iter())
            .find(|k| !bindings.contains_key(*k));
        if let Some(missing) = missing {
            return Err(PromptError::MissingPlaceholder(missing.clone()));
        }
        let few_shot = self.few_shot_block();
        let mut out = String::with_capacity(self.body.len() + 256);
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            match after.find("}}") {
                Some(end) if is_marker_name(&after[..end]) => {
                    let name = &after[..end];
                    let value = if name == FEW_SHOT_MARKER {
                        few_shot.as_str()
                    } else {
                        bindings
                            .get(name)
                            .ok_or_else(|| PromptError::MissingPlaceholder(name.to_owned()))?
                    };
                    out.push_str(value);
                    rest = &after[end + 2..];
                }
                _ => {
                    out.push_str("{{");
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

const BUILTIN: [(&str, &str); 6] = [
    ("cq_agent.toml", include_str!("../../prompts/cq_agent.toml")),
    ("intent_agent.toml", include_str!("../../prompts/intent_agent.toml")),
    ("rec_baseline.toml", include_str!("../../prompts/rec_baseline.toml")),
    (
        "rec_sustainable.toml",
        include_str!("../../prompts/rec_sustainable.toml"),
    ),
    ("explain_agent.toml", include_str!("../../prompts/explain_agent.toml")),
    ("guardrail.toml", include_str!("../../prompts/guardrail.toml")),
];

#[derive(Debug, Clone)]
pub struct PromptRegistry {
    templates: HashMap<Stage, PromptTemplate>,
}

impl Default for PromptRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptRegistry {
    pub fn builtin() -> Self {
        let mut templates = HashMap::new();
        for (file, text) in BUILTIN {
            let t = PromptTemplate::from_toml(text, file).expect("builtin template parses");
            templates.insert(t.id, t);
        }
        assert_eq!(templates.len(), Stage::ALL.len());
        Self { templates }
    }

    /// Built-in templates overridden by every `*.toml` file in `dir`.
    pub fn with_overrides(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let mut registry = Self::builtin();
        let entries = std::fs::read_dir(dir).map_err(|e| PromptError::Parse {
            file: dir.display().to_string(),
            message: e.to_string(),
        })?;
        let mut seen = BTreeSet::new();
        let mut paths: Vec<_> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        for path in paths {
            let file = path.display().to_string();
            let text = std::fs::read_to_string(&path).map_err(|e| PromptError::Parse {
                file: file.clone(),
                message: e.to_string(),
            })?;
            let t = PromptTemplate::from_toml(&text, &file)?;
            if !seen.insert(t.id) {
                return Err(PromptError::Duplicate(t.id.as_str().to_owned()));
            }
            registry.templates.insert(t.id, t);
        }
        Ok(registry)
    }

    pub fn get(&self, id: Stage) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.id, template);
    }

    pub fn render(&self, id: Stage, bindings: &BTreeMap<String, String>) -> Result<String, PromptError> {
        self.get(id).render(bindings)
    }
}

/// Renders a built-in template by id string.
pub fn render_prompt(template_id: &str, bindings: &BTreeMap<String, String>) -> Result<String, PromptError> {
    let id = Stage::parse(template_id).ok_or_else(|| PromptError::UnknownTemplate(template_id.to_owned()))?;
    PromptRegistry::builtin().render(id, bindings)
}

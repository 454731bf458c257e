//! Prompt templates and chat-message rendering.
//!
//! A template's `instruction_text` becomes the system message. It may refer
//! to `{context}`, `{question}` and `{schema}`; anything else in braces that
//! looks like a placeholder is rejected when the template is loaded.

use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::extract::QueryModel;

pub const PLACEHOLDERS: [&str; 3] = ["context", "question", "schema"];
pub const DEFAULT_CHARS_PER_TOKEN: f64 = 4.0;
pub const DEFAULT_CONTEXT_TOKENS: usize = 8192;

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap());

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("template '{template}' uses unknown placeholder {{{name}}}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("structured-query template '{0}' needs a {{schema}} placeholder and output_schema_text")]
    MissingSchema(String),
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("context needs about {estimated} tokens, over the budget of {budget}")]
    ContextBudgetExceeded { estimated: usize, budget: usize },
    #[error("few-shot example {index} is not a valid query model: {message}")]
    InvalidExample { index: usize, message: String },
    #[error("invalid render options: {0}")]
    InvalidOptions(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptMode {
    StructuredQuery,
    SchemaAnswer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetailLevel {
    Concise,
    Detailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub mode: PromptMode,
    pub detail_level: DetailLevel,
    pub instruction_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_schema_text: Option<String>,
}

impl PromptTemplate {
    pub fn from_json(text: &str) -> Result<Self, PromptError> {
        let template: Self = serde_json::from_str(text)?;
        template.validate()?;
        Ok(template)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn placeholders(&self) -> Vec<String> {
        PLACEHOLDER
            .captures_iter(&self.instruction_text)
            .map(|c| c[1].to_string())
            .collect()
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let used = self.placeholders();
        if let Some(name) = used.iter().find(|n| !PLACEHOLDERS.contains(&n.as_str())) {
            return Err(PromptError::UnknownPlaceholder {
                template: self.id.clone(),
                name: name.clone(),
            });
        }
        if self.mode == PromptMode::StructuredQuery
            && (!used.iter().any(|n| n == "schema") || self.output_schema_text.is_none())
        {
            return Err(PromptError::MissingSchema(self.id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub question: String,
    pub ideal_answer: String,
}

/// Loads a JSON list of examples; in structured-query mode every answer must
/// parse as a query model.
pub fn load_examples(path: impl AsRef<Path>, mode: PromptMode) -> Result<Vec<FewShotExample>, PromptError> {
    let examples: Vec<FewShotExample> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    check_examples(&examples, mode)?;
    Ok(examples)
}

pub fn check_examples(examples: &[FewShotExample], mode: PromptMode) -> Result<(), PromptError> {
    if mode == PromptMode::StructuredQuery {
        for (index, ex) in examples.iter().enumerate() {
            serde_json::from_str::<QueryModel>(&ex.ideal_answer).map_err(|e| PromptError::InvalidExample {
                index,
                message: e.to_string(),
            })?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub messages: Vec<Message>,
}

impl RenderedPrompt {
    pub fn system(&self) -> &str {
        &self.messages[0].content
    }

    /// The last user message, i.e. the question being asked.
    pub fn final_user_message(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextPlacement {
    #[default]
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    pub context_placement: ContextPlacement,
    pub max_context_tokens: usize,
    pub chars_per_token: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            context_placement: ContextPlacement::System,
            max_context_tokens: DEFAULT_CONTEXT_TOKENS,
            chars_per_token: DEFAULT_CHARS_PER_TOKEN,
        }
    }
}

impl RenderOptions {
    pub fn estimate_tokens(&self, text: &str) -> usize {
        (text.chars().count() as f64 / self.chars_per_token).ceil() as usize
    }
}

/// [`render_with`] using the default options.
pub fn render(
    template: &PromptTemplate,
    context_text: &str,
    question: &str,
    examples: &[FewShotExample],
) -> Result<RenderedPrompt, PromptError> {
    render_with(template, context_text, question, examples, &RenderOptions::default())
}

/// Builds `system, (user, assistant) x n, user`. The context is never
/// truncated; over-budget context is an error.
pub fn render_with(
    template: &PromptTemplate,
    context_text: &str,
    question: &str,
    examples: &[FewShotExample],
    options: &RenderOptions,
) -> Result<RenderedPrompt, PromptError> {
    if question.trim().is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    if options.chars_per_token.is_nan() || options.chars_per_token <= 0.0 {
        return Err(PromptError::InvalidOptions("chars_per_token must be positive".into()));
    }
    let estimated = options.estimate_tokens(context_text);
    if estimated > options.max_context_tokens {
        return Err(PromptError::ContextBudgetExceeded {
            estimated,
            budget: options.max_context_tokens,
        });
    }

    let system_context = match options.context_placement {
        ContextPlacement::System => context_text,
        ContextPlacement::User => "(provided with the question)",
    };
    let schema = template.output_schema_text.as_deref().unwrap_or("");
    let system = PLACEHOLDER
        .replace_all(&template.instruction_text, |c: &regex::Captures| match &c[1] {
            "context" => system_context.to_string(),
            "schema" => schema.to_string(),
            "question" => question.to_string(),
            _ => c[0].to_string(),
        })
        .into_owned();

    let mut messages = Vec::with_capacity(2 + 2 * examples.len());
    messages.push(Message::new(Role::System, system));
    for ex in examples {
        messages.push(Message::new(Role::User, ex.question.clone()));
        messages.push(Message::new(Role::Assistant, ex.ideal_answer.clone()));
    }
    let last = match options.context_placement {
        ContextPlacement::System => question.to_string(),
        ContextPlacement::User => format!("Context:\n{context_text}\n\nQuestion: {question}"),
    };
    messages.push(Message::new(Role::User, last));
    Ok(RenderedPrompt { messages })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn template() -> PromptTemplate {
        PromptTemplate::from_json(
            r#"{
              "id": "t",
              "mode": "structured-query",
              "detail_level": "concise",
              "instruction_text": "Answer as JSON:\n{schema}\nContext:\n{context}",
              "output_schema_text": "{\"entities\": [], \"properties\": [], \"filters\": []}"
            }"#,
        )
        .unwrap()
    }

    fn examples(n: usize) -> Vec<FewShotExample> {
        (0..n)
            .map(|i| FewShotExample {
                question: format!("q{i}"),
                ideal_answer: r#"{"entities":[],"properties":[],"filters":[]}"#.into(),
            })
            .collect()
    }

    #[test]
    fn zero_shot_shape() {
        let p = render(&template(), "ctx", "How much rain?", &[]).unwrap();
        assert_eq!(p.messages.len(), 2);
        assert_eq!(p.messages[0].role, Role::System);
        assert!(p.system().contains("ctx"));
        assert!(p.system().contains("\"filters\": []"));
        assert_eq!(p.final_user_message(), "How much rain?");
    }

    #[test]
    fn few_shot_shape() {
        let p = render(&template(), "ctx", "q", &examples(3)).unwrap();
        let roles: Vec<Role> = p.messages.iter().map(|m| m.role).collect();
        use Role::*;
        assert_eq!(roles, [System, User, Assistant, User, Assistant, User, Assistant, User]);
    }

    #[test]
    fn unknown_placeholder_rejected_at_load() {
        let err = PromptTemplate::from_json(
            r#"{"id":"x","mode":"schema-answer","detail_level":"concise","instruction_text":"{context} {nope}"}"#,
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::UnknownPlaceholder { name, .. } if name == "nope"));
    }

    #[test]
    fn structured_query_requires_schema() {
        let err = PromptTemplate::from_json(
            r#"{"id":"x","mode":"structured-query","detail_level":"concise","instruction_text":"{context}"}"#,
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::MissingSchema(_)));
    }

    #[test]
    fn budget_is_enforced_not_truncated() {
        let opts = RenderOptions {
            max_context_tokens: 2,
            ..RenderOptions::default()
        };
        assert!(render_with(&template(), "12345678", "q", &[], &opts).is_ok());
        let err = render_with(&template(), "123456789", "q", &[], &opts).unwrap_err();
        assert!(matches!(
            err,
            PromptError::ContextBudgetExceeded {
                estimated: 3,
                budget: 2
            }
        ));
    }

    #[test]
    fn empty_question_rejected() {
        assert!(matches!(
            render(&template(), "", "  ", &[]),
            Err(PromptError::EmptyQuestion)
        ));
    }

    #[test]
    fn user_placement_moves_context() {
        let opts = RenderOptions {
            context_placement: ContextPlacement::User,
            ..RenderOptions::default()
        };
        let p = render_with(&template(), "ex:A ex:b ex:C", "q", &[], &opts).unwrap();
        assert!(!p.system().contains("ex:A"));
        assert!(p.final_user_message().contains("ex:A ex:b ex:C"));
        assert!(p.final_user_message().ends_with("Question: q"));
    }

    #[test]
    fn invalid_example_rejected() {
        let bad = vec![FewShotExample {
            question: "q".into(),
            ideal_answer: "not json".into(),
        }];
        assert!(check_examples(&bad, PromptMode::StructuredQuery).is_err());
        assert!(check_examples(&bad, PromptMode::SchemaAnswer).is_ok());
    }

    #[test]
    fn render_is_deterministic() {
        let a = render(&template(), "c", "q", &examples(2)).unwrap();
        let b = render(&template(), "c", "q", &examples(2)).unwrap();
        assert_eq!(a, b);
    }
}

//! Declarative query specs and prompt templates.
//!
//! A [`QuerySpec`] is what the UI sends: weighted "more of this" / "less of
//! this" terms, an optional semantic-filter template, context items and a
//! quality-demotion toggle. The [`Engine`](crate::Engine) compiles it into
//! one query vector.

use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::MetadataFilter;

pub const QUERY_PLACEHOLDER: &str = "<QUERY>";

/// Text appended with a negative weight when quality demotion is enabled.
pub const DEMOTE_TEXT: &str = "low quality, low res, burry, jpeg artefacts";
pub const DEFAULT_DEMOTE_WEIGHT: f64 = -1.1;
pub const DEFAULT_CONTEXT_ALPHA: f64 = 0.7;
pub const DEFAULT_EXPANSION_WEIGHT: f64 = 0.4;
pub const DEFAULT_K: usize = 20;
pub const MAX_K: usize = 200;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[default]
    More,
    Less,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub text: String,
    pub weight: f64,
    #[serde(default)]
    pub polarity: Polarity,
}

impl Term {
    pub fn more(text: impl Into<String>, weight: f64) -> Self {
        Term { text: text.into(), weight, polarity: Polarity::More }
    }

    pub fn less(text: impl Into<String>, weight: f64) -> Self {
        Term { text: text.into(), weight, polarity: Polarity::Less }
    }

    /// `+|w|` for "more", `-|w|` for "less".
    pub fn signed_weight(&self) -> f64 {
        match self.polarity {
            Polarity::More => self.weight.abs(),
            Polarity::Less => -self.weight.abs(),
        }
    }
}

/// A document or an image blended into the query. Exactly one of `doc_id`
/// and `image` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ContextItem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub weight: f64,
}

impl ContextItem {
    pub fn doc(id: impl Into<String>, weight: f64) -> Self {
        ContextItem { doc_id: Some(id.into()), image: None, weight }
    }

    pub fn image(reference: impl Into<String>, weight: f64) -> Self {
        ContextItem { doc_id: None, image: Some(reference.into()), weight }
    }
}

fn default_k() -> usize {
    DEFAULT_K
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub terms: Vec<Term>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context_items: Vec<ContextItem>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub demote_quality: bool,
    /// Overrides the configured demotion weight for this request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demote_weight: Option<f64>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<MetadataFilter>,
}

impl QuerySpec {
    pub fn new(terms: Vec<Term>) -> Self {
        QuerySpec {
            terms,
            template: None,
            context_items: Vec::new(),
            demote_quality: false,
            demote_weight: None,
            k: DEFAULT_K,
            filter: None,
        }
    }

    pub fn single(text: impl Into<String>) -> Self {
        Self::new(vec![Term::more(text, 1.0)])
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    /// Text of the first "more" term.
    pub fn primary_text(&self) -> Option<&str> {
        self.terms
            .iter()
            .find(|t| t.polarity == Polarity::More)
            .map(|t| t.text.as_str())
    }

    /// Structural checks that need no registry or index.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidQuery(msg));
        if self.terms.is_empty() {
            return bad("at least one term is required".into());
        }
        if !self.terms.iter().any(|t| t.polarity == Polarity::More) {
            return bad("at least one term must have polarity `more`".into());
        }
        for (i, t) in self.terms.iter().enumerate() {
            if !t.weight.is_finite() {
                return bad(format!("term {i} weight {} is not finite", t.weight));
            }
        }
        for (i, c) in self.context_items.iter().enumerate() {
            if c.doc_id.is_some() == c.image.is_some() {
                return bad(format!("context item {i} needs exactly one of doc_id or image"));
            }
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return bad(format!("context item {i} weight {} must be positive and finite", c.weight));
            }
        }
        if let Some(w) = self.demote_weight {
            if !w.is_finite() {
                return bad(format!("demote weight {w} is not finite"));
            }
        }
        if !(1..=MAX_K).contains(&self.k) {
            return bad(format!("k must be in [1, {MAX_K}], got {}", self.k));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub id: String,
    pub pattern: String,
    #[serde(default)]
    pub description: String,
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, pattern: impl Into<String>, description: impl Into<String>) -> Result<Self> {
        let tpl = PromptTemplate { id: id.into(), pattern: pattern.into(), description: description.into() };
        tpl.validate()?;
        Ok(tpl)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::Config("template id is empty".into()));
        }
        let n = self.pattern.matches(QUERY_PLACEHOLDER).count();
        if n != 1 {
            return Err(Error::Config(format!(
                "template `{}` must contain {QUERY_PLACEHOLDER} exactly once, found {n}",
                self.id
            )));
        }
        Ok(())
    }
}

/// Substitutes `query_text` for the placeholder. Nothing else changes.
pub fn render_template(tpl: &PromptTemplate, query_text: &str) -> String {
    tpl.pattern.replacen(QUERY_PLACEHOLDER, query_text, 1)
}

/// Ordered set of prompt templates keyed by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRegistry {
    templates: Vec<PromptTemplate>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        let t = |id: &str, pattern: &str, description: &str| PromptTemplate {
            id: id.into(),
            pattern: pattern.into(),
            description: description.into(),
        };
        TemplateRegistry {
            templates: vec![
                t("monochrome", "A black and white, monochromatic image of a <QUERY>", "Black and white photography"),
                t(
                    "boho",
                    "A bohemian (boho) style image of a <QUERY>, rich in patterns, colors, and textures",
                    "Bohemian style",
                ),
                t("photo", "a photo of a <QUERY>", "Plain photo caption"),
                t("image", "an image of a <QUERY>", "Plain image caption"),
            ],
        }
    }
}

impl TemplateRegistry {
    pub fn new(templates: Vec<PromptTemplate>) -> Result<Self> {
        for (i, t) in templates.iter().enumerate() {
            t.validate()?;
            if templates[..i].iter().any(|o| o.id == t.id) {
                return Err(Error::Config(format!("duplicate template id `{}`", t.id)));
            }
        }
        Ok(TemplateRegistry { templates })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let templates: Vec<PromptTemplate> =
            serde_json::from_str(json).map_err(|e| Error::Config(format!("template registry: {e}")))?;
        Self::new(templates)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)
            .map_err(|source| Error::FileUnreadable { path: path.to_owned(), source })?;
        Self::from_json(&json)
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate> {
        self.templates
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::UnknownTemplate(id.to_owned()))
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }
}

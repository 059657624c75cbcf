//! Ties the index, the embedder, the template registry and the expansion
//! provider together and compiles [`QuerySpec`]s into query vectors.

use std::path::PathBuf;
use std::sync::RwLock;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::embedder::{EmbedRequest, Embedder, ExpansionProvider, StubExpansion};
use crate::error::{Error, Result};
use crate::index::{Document, Index, NeighbourSearch, SearchHit};
use crate::query::{
    render_template, Polarity, PromptTemplate, QuerySpec, TemplateRegistry, Term, DEFAULT_CONTEXT_ALPHA,
    DEFAULT_DEMOTE_WEIGHT, DEFAULT_EXPANSION_WEIGHT, DEMOTE_TEXT,
};
use crate::recommender::{self, RecTree, WalkParams, WalkStart};
use crate::vecmath::{lerp_combine, UnitVector, WeightedVector};

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Share of the combined mass kept by the term query when context items
    /// are blended in. Must lie in (0.5, 1].
    pub context_alpha: f64,
    pub demote_weight: f64,
    pub expansion_weight: f64,
    pub walk_defaults: WalkParams,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            context_alpha: DEFAULT_CONTEXT_ALPHA,
            demote_weight: DEFAULT_DEMOTE_WEIGHT,
            expansion_weight: DEFAULT_EXPANSION_WEIGHT,
            walk_defaults: WalkParams::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.context_alpha > 0.5 && self.context_alpha <= 1.0) {
            return Err(Error::Config(format!(
                "context alpha {} must keep the majority of the weight (0.5, 1]",
                self.context_alpha
            )));
        }
        if !self.demote_weight.is_finite() || !self.expansion_weight.is_finite() {
            return Err(Error::Config("weights must be finite".into()));
        }
        self.walk_defaults.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TracedTerm {
    /// Text actually embedded (after template rendering).
    pub text: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TracedContext {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    /// Weight after rescaling into the context share.
    pub weight: f64,
}

/// What was actually searched, for display next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct QueryTrace {
    pub terms: Vec<TracedTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context: Vec<TracedContext>,
    /// Weight of the term query when context is present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledQuery {
    pub vector: UnitVector,
    pub trace: QueryTrace,
}

pub struct Engine {
    index: Index,
    embedder: Embedder,
    templates: RwLock<TemplateRegistry>,
    template_path: Option<PathBuf>,
    expansion: Box<dyn ExpansionProvider>,
    config: EngineConfig,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("dimension", &self.index.dimension())
            .field("documents", &self.index.count())
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Engine {
    /// Engine with the default template registry and the stub expansion provider.
    pub fn new(embedder: Embedder, config: EngineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Engine {
            index: Index::new(embedder.dimension()),
            embedder,
            templates: RwLock::new(TemplateRegistry::default()),
            template_path: None,
            expansion: Box::new(StubExpansion),
            config,
        })
    }

    pub fn with_expansion(mut self, provider: Box<dyn ExpansionProvider>) -> Self {
        self.expansion = provider;
        self
    }

    pub fn with_templates(self, registry: TemplateRegistry) -> Self {
        *self.templates.write().unwrap_or_else(|e| e.into_inner()) = registry;
        self
    }

    /// Loads the registry from `path` now and on every [`Engine::reload_templates`].
    pub fn with_template_file(mut self, path: PathBuf) -> Result<Self> {
        let registry = TemplateRegistry::load(&path)?;
        self.template_path = Some(path);
        Ok(self.with_templates(registry))
    }

    pub fn reload_templates(&self) -> Result<usize> {
        let registry = match &self.template_path {
            Some(path) => TemplateRegistry::load(path)?,
            None => TemplateRegistry::default(),
        };
        let n = registry.templates().len();
        *self.templates.write().unwrap_or_else(|e| e.into_inner()) = registry;
        Ok(n)
    }

    pub fn templates(&self) -> Vec<PromptTemplate> {
        self.templates.read().unwrap_or_else(|e| e.into_inner()).templates().to_vec()
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.index.dimension()
    }

    /// Compiles a spec into one query vector:
    ///
    /// 1. "more" terms are rendered through the template, if any;
    /// 2. with `demote_quality`, the demotion text joins with a negative weight;
    /// 3. all texts are embedded and lerp-combined with signed weights;
    /// 4. context items are blended in, sharing `1 - alpha` of the mass in
    ///    proportion to their weights.
    pub fn compile_query(&self, spec: &QuerySpec) -> Result<CompiledQuery> {
        spec.validate()?;
        let template = match &spec.template {
            Some(id) => Some(self.templates.read().unwrap_or_else(|e| e.into_inner()).get(id)?.clone()),
            None => None,
        };

        let mut traced: Vec<TracedTerm> = spec
            .terms
            .iter()
            .map(|t| TracedTerm {
                text: match (&template, t.polarity) {
                    (Some(tpl), Polarity::More) => render_template(tpl, &t.text),
                    _ => t.text.clone(),
                },
                weight: t.signed_weight(),
            })
            .collect();
        if spec.demote_quality {
            let w = spec.demote_weight.unwrap_or(self.config.demote_weight);
            traced.push(TracedTerm { text: DEMOTE_TEXT.to_owned(), weight: -w.abs() });
        }

        let requests: Vec<EmbedRequest> = traced.iter().map(|t| EmbedRequest::text(t.text.clone())).collect();
        let vectors = self.embedder.embed_batch(&requests).map_err(unwrap_batch)?;
        let weighted: Vec<WeightedVector> = vectors
            .into_iter()
            .zip(&traced)
            .map(|(v, t)| WeightedVector::new(v, t.weight))
            .collect();
        let query = lerp_combine(&weighted)?;

        let mut trace = QueryTrace {
            terms: traced,
            template: template.map(|t| t.id),
            context: Vec::new(),
            query_weight: None,
        };
        if spec.context_items.is_empty() {
            return Ok(CompiledQuery { vector: query, trace });
        }

        let alpha = self.config.context_alpha;
        let total: f64 = spec.context_items.iter().map(|c| c.weight).sum();
        let mut blend = vec![WeightedVector::new(query, alpha)];
        {
            let view = self.index.read();
            for item in &spec.context_items {
                let vector = match (&item.doc_id, &item.image) {
                    (Some(id), _) => view.document(id)?.vector.clone(),
                    (None, Some(image)) => self.embedder.embed(&EmbedRequest::image(image.clone()))?,
                    (None, None) => unreachable!("validated"),
                };
                let weight = (1.0 - alpha) * item.weight / total;
                blend.push(WeightedVector::new(vector, weight));
                trace.context.push(TracedContext {
                    doc_id: item.doc_id.clone(),
                    image: item.image.clone(),
                    weight,
                });
            }
        }
        trace.query_weight = Some(alpha);
        Ok(CompiledQuery { vector: lerp_combine(&blend)?, trace })
    }

    pub fn search(&self, spec: &QuerySpec) -> Result<Vec<SearchHit>> {
        Ok(self.search_traced(spec)?.1)
    }

    pub fn search_traced(&self, spec: &QuerySpec) -> Result<(CompiledQuery, Vec<SearchHit>)> {
        let compiled = self.compile_query(spec)?;
        let hits = self.index.nn_search(&compiled.vector, spec.k, spec.filter.as_ref(), None)?;
        Ok((compiled, hits))
    }

    /// Expansion terms suggested by the provider for the liked documents.
    /// No likes means no terms; the provider is not consulted.
    pub fn expansion_terms(&self, query: &str, liked_ids: &[String]) -> Result<Vec<String>> {
        if query.trim().is_empty() {
            return Err(Error::InvalidQuery("expansion needs a nonempty query".into()));
        }
        let docs: Vec<Document> = {
            let view = self.index.read();
            liked_ids.iter().map(|id| view.document(id).cloned()).collect::<Result<_>>()?
        };
        if docs.is_empty() {
            return Ok(Vec::new());
        }
        self.expansion.expansion_terms(query, &docs)
    }

    /// Returns a copy of `spec` with each suggested term appended as a
    /// "more" term at the configured expansion weight.
    pub fn expand_with_feedback(&self, spec: &QuerySpec, liked_ids: &[String]) -> Result<QuerySpec> {
        spec.validate()?;
        let query = spec.primary_text().expect("validated spec has a `more` term");
        let terms = self.expansion_terms(query, liked_ids)?;
        let mut expanded = spec.clone();
        expanded
            .terms
            .extend(terms.into_iter().map(|t| Term::more(t, self.config.expansion_weight)));
        Ok(expanded)
    }

    pub fn ensemble(&self, item_ids: &[String]) -> Result<UnitVector> {
        recommender::ensemble(&self.index.read(), item_ids)
    }

    pub fn recommend(&self, seed_ids: &[String], k: usize) -> Result<Vec<SearchHit>> {
        recommender::recommend(&self.index.read(), seed_ids, k)
    }

    pub fn walk(&self, start: &WalkStart, params: &WalkParams) -> Result<RecTree> {
        recommender::walk(&self.index.read(), start, params)
    }
}

fn unwrap_batch(e: Error) -> Error {
    match e {
        Error::BatchItem { source, .. } => *source,
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::{EmbedderConfig, TAGS_KEY};
    use crate::query::ContextItem;
    use crate::vecmath::normalize;

    fn engine(dim: usize) -> Engine {
        Engine::new(Embedder::new(EmbedderConfig::mock(dim, 7)).unwrap(), EngineConfig::default()).unwrap()
    }

    fn embed(e: &Engine, text: &str) -> UnitVector {
        e.embedder().embed(&EmbedRequest::text(text)).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn refined_query_matches_hand_composition() {
        let e = engine(64);
        let spec = QuerySpec::new(vec![
            Term::more("dining chair", 1.0),
            Term::more("scandinavian design", 0.6),
            Term::less("upholstery", 1.1),
        ]);
        let compiled = e.compile_query(&spec).unwrap();
        let oracle = lerp_combine(&[
            WeightedVector::new(embed(&e, "dining chair"), 1.0),
            WeightedVector::new(embed(&e, "scandinavian design"), 0.6),
            WeightedVector::new(embed(&e, "upholstery"), -1.1),
        ])
        .unwrap();
        assert!(close(&compiled.vector, &oracle, 1e-12));
        let weights: Vec<f64> = compiled.trace.terms.iter().map(|t| t.weight).collect();
        assert_eq!(weights, [1.0, 0.6, -1.1]);
    }

    #[test]
    fn single_term_is_its_embedding() {
        let e = engine(32);
        let v = e.compile_query(&QuerySpec::single("chair")).unwrap().vector;
        assert!(close(&v, &embed(&e, "chair"), 1e-12));
    }

    #[test]
    fn context_takes_minority_share() {
        let e = engine(2);
        e.index().upsert(Document::new("x", "X", UnitVector::basis(2, 1))).unwrap();
        let mut spec = QuerySpec::single("fixture:1,0");
        spec.context_items.push(ContextItem::doc("x", 1.0));
        let c = e.compile_query(&spec).unwrap();
        // (0.7, 0.3) / sqrt(0.58), evaluated independently
        assert!(close(&c.vector, &[0.919_145_030_018_057_9, 0.393_919_298_579_167_7], 1e-12));
        assert_eq!(c.trace.query_weight, Some(0.7));

        // two context items split the 0.3 share by weight
        e.index().upsert(Document::new("y", "Y", UnitVector::basis(2, 1))).unwrap();
        spec.context_items = vec![ContextItem::doc("x", 1.0), ContextItem::doc("y", 3.0)];
        let c2 = e.compile_query(&spec).unwrap();
        assert!(close(&c2.vector, &c.vector, 1e-12));
        let ws: Vec<f64> = c2.trace.context.iter().map(|t| t.weight).collect();
        assert!(close(&ws, &[0.075, 0.225], 1e-12));

        spec.context_items = vec![ContextItem::doc("missing", 1.0)];
        assert!(matches!(e.compile_query(&spec), Err(Error::NotFound(_))));
    }

    #[test]
    fn image_context_is_embedded() {
        let e = engine(16);
        let mut spec = QuerySpec::single("backpack");
        spec.context_items.push(ContextItem::image("https://example.com/forest.jpg", 1.0));
        let c = e.compile_query(&spec).unwrap();
        let forest = e.embedder().embed(&EmbedRequest::image("https://example.com/forest.jpg")).unwrap();
        let oracle = lerp_combine(&[
            WeightedVector::new(embed(&e, "backpack"), 0.7),
            WeightedVector::new(forest, 0.3),
        ])
        .unwrap();
        assert!(close(&c.vector, &oracle, 1e-12));
    }

    #[test]
    fn templates_style_positive_terms_only() {
        let e = engine(16);
        let mut spec = QuerySpec::new(vec![Term::more("chair", 1.0), Term::less("wood", 0.5)]);
        spec.template = Some("monochrome".into());
        let c = e.compile_query(&spec).unwrap();
        assert_eq!(c.trace.terms[0].text, "A black and white, monochromatic image of a chair");
        assert_eq!(c.trace.terms[1].text, "wood");
        spec.template = Some("nope".into());
        assert!(matches!(e.compile_query(&spec), Err(Error::UnknownTemplate(_))));
    }

    #[test]
    fn demotion_appends_quality_term() {
        let e = engine(16);
        let mut spec = QuerySpec::single("sofa");
        spec.demote_quality = true;
        let c = e.compile_query(&spec).unwrap();
        assert_eq!(c.trace.terms.last().unwrap(), &TracedTerm { text: DEMOTE_TEXT.into(), weight: -1.1 });
        spec.demote_weight = Some(0.5);
        let c = e.compile_query(&spec).unwrap();
        assert_eq!(c.trace.terms.last().unwrap().weight, -0.5);
    }

    #[test]
    fn cancelling_terms_are_degenerate() {
        let e = engine(8);
        let spec = QuerySpec::new(vec![Term::more("chair", 1.0), Term::less("chair", 1.0)]);
        assert!(matches!(e.compile_query(&spec), Err(Error::DegenerateVector { .. })));
    }

    #[test]
    fn search_through_pipeline() {
        let e = engine(2);
        e.index().upsert(Document::new("e1", "chair", UnitVector::basis(2, 0))).unwrap();
        e.index().upsert(Document::new("e2", "lamp", UnitVector::basis(2, 1))).unwrap();
        let hits = e.search(&QuerySpec::single("fixture:1,0")).unwrap();
        assert_eq!((hits[0].id.as_str(), hits[0].score), ("e1", 1.0));
        let spec = QuerySpec::new(vec![
            Term::more("fixture:1,0", 1.0),
            Term::less("fixture:1,0", 1.1),
            Term::more("fixture:0,1", 1.0),
        ]);
        // resultant direction (-0.1, 1) / |.|
        assert_eq!(e.search(&spec).unwrap()[0].id, "e2");

        let empty = engine(2);
        assert!(empty.search(&QuerySpec::single("chair")).unwrap().is_empty());
    }

    #[test]
    fn negative_terms_never_raise_their_own_document() {
        let e = engine(8);
        for t in ["alpha", "beta", "gamma", "delta"] {
            e.index().upsert(Document::new(t, t, embed(&e, t))).unwrap();
        }
        let base = QuerySpec::new(vec![Term::more("alpha", 1.0), Term::more("beta", 0.5)]).with_k(4);
        let score = |spec: &QuerySpec, id: &str| {
            e.search(spec).unwrap().into_iter().find(|h| h.id == id).unwrap().score
        };
        for w in [0.1, 0.5, 1.0, 3.0] {
            let mut demoted = base.clone();
            demoted.terms.push(Term::less("gamma", w));
            assert!(score(&demoted, "gamma") <= score(&base, "gamma") + 1e-9);
        }
    }

    #[test]
    fn feedback_expansion() {
        let e = engine(4);
        let v = normalize(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        e.index().upsert(Document::new("a", "A", v.clone()).with_metadata(TAGS_KEY, "rustic")).unwrap();
        e.index().upsert(Document::new("b", "B", v.clone()).with_metadata(TAGS_KEY, "rustic,modern")).unwrap();
        let spec = QuerySpec::single("table");
        let out = e.expand_with_feedback(&spec, &["a".into(), "b".into()]).unwrap();
        assert_eq!(out.terms[0], spec.terms[0]);
        assert_eq!(out.terms[1], Term::more("rustic", 0.4));
        assert_eq!(out.terms[2], Term::more("modern", 0.4));
        assert_eq!(e.expand_with_feedback(&spec, &[]).unwrap(), spec);
        assert!(matches!(e.expand_with_feedback(&spec, &["zz".into()]), Err(Error::NotFound(_))));
    }

    #[test]
    fn config_rejects_minority_alpha() {
        let cfg = EngineConfig { context_alpha: 0.4, ..Default::default() };
        assert!(Engine::new(Embedder::new(EmbedderConfig::mock(4, 0)).unwrap(), cfg).is_err());
    }
}

//! The `vl` command-line tool.
//!
//! By default every command is a thin client of a running service
//! (`--endpoint`, or `VL_ENDPOINT`). With `--local SNAPSHOT` the engine runs
//! in-process against a snapshot file, and commands that change the corpus
//! write the snapshot back. `--json` prints response bodies exactly as the
//! service sends them.
//!
//! Exit codes: 0 success, 1 API or connection error, 2 usage error.

use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::api::{
    self, ApiError, DeleteResponse, HealthResponse, HitsResponse, RecommendRequest, RestoreResponse,
    SearchResponse, WalkRequest, WalkResponse, WalkStartSpec,
};
use crate::config::Settings;
use crate::engine::Engine;
use crate::error::ErrorCode;
use crate::index::{Document, IngestReport, MetadataFilter};
use crate::query::{ContextItem, PromptTemplate, QuerySpec, Term};
use crate::recommender::{TreeNode, WalkParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_API: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "vl", version, about = "Multimodal vector search and recommendation engine")]
pub struct Cli {
    /// Service address.
    #[arg(long, global = true, env = "VL_ENDPOINT", default_value = "http://127.0.0.1:8080")]
    pub endpoint: String,

    /// Run in-process against this snapshot file instead of a service.
    #[arg(long, global = true, value_name = "SNAPSHOT")]
    pub local: Option<PathBuf>,

    /// Settings file (TOML); `VL_*` environment variables override it.
    #[arg(long, global = true, env = "VL_CONFIG")]
    pub config: Option<PathBuf>,

    /// Print raw JSON response bodies.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TreeFormat {
    Tree,
    Flat,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve,
    /// Ingest a JSONL corpus.
    Ingest {
        file: PathBuf,
        /// Embed records that carry no vector.
        #[arg(long)]
        embed_missing: bool,
    },
    /// Search with weighted terms: `--term "text:weight"`.
    Search {
        /// "More of this" term, `text:weight` (the last colon separates the weight).
        #[arg(long = "term", required = true, value_name = "TEXT:WEIGHT")]
        terms: Vec<String>,
        /// "Less of this" term, `text:weight`.
        #[arg(long = "less", value_name = "TEXT:WEIGHT")]
        less: Vec<String>,
        /// Prompt template id.
        #[arg(long)]
        template: Option<String>,
        /// Context document, `DOC:WEIGHT`.
        #[arg(long = "context", value_name = "DOC:WEIGHT")]
        context: Vec<String>,
        /// Demote low-quality items.
        #[arg(long)]
        demote_quality: bool,
        /// Metadata equality filter, `KEY=VALUE`.
        #[arg(long = "filter", value_name = "KEY=VALUE")]
        filter: Vec<String>,
        #[arg(short, default_value_t = crate::query::DEFAULT_K)]
        k: usize,
        /// Include the compiled-query trace.
        #[arg(long)]
        debug: bool,
    },
    /// Random recommendation walk from a document or a text query.
    Walk {
        #[arg(long, conflicts_with = "query", required_unless_present = "query")]
        start: Option<String>,
        #[arg(long)]
        query: Option<String>,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        children: Option<usize>,
        #[arg(long)]
        neighbours: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = TreeFormat::Tree)]
        format: TreeFormat,
    },
    /// Recommend documents similar to the ensemble of the seeds.
    Recommend {
        #[arg(required = true)]
        seeds: Vec<String>,
        #[arg(short, default_value_t = crate::query::DEFAULT_K)]
        k: usize,
    },
    /// Show one document.
    Get { id: String },
    /// Delete one document.
    Delete { id: String },
    /// List prompt templates.
    Templates,
    /// Service health.
    Health,
    /// Write the index snapshot to a file.
    Snapshot { out: PathBuf },
    /// Replace the index with a snapshot file.
    Restore { input: PathBuf },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Api(ApiError),
    Transport(String),
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        Failure::Api(e)
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::Api(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Transport(e.to_string())
    }
}

/// Splits `text:weight` at the last colon.
pub fn parse_weighted(arg: &str) -> Result<(String, f64), String> {
    let usage = || format!("malformed `{arg}`: expected TEXT:WEIGHT, e.g. --term \"dining chair:1.0\"");
    let (text, weight) = arg.rsplit_once(':').ok_or_else(usage)?;
    let weight: f64 = weight.trim().parse().map_err(|_| usage())?;
    if text.trim().is_empty() || !weight.is_finite() {
        return Err(usage());
    }
    Ok((text.to_owned(), weight))
}

enum Backend {
    Remote { base: String, agent: ureq::Agent },
    Local { engine: Box<Engine>, snapshot: PathBuf },
}

enum Body<'a> {
    None,
    Json(Vec<u8>),
    Raw(&'a [u8], &'static str),
}

impl Backend {
    fn request(&self, method: &str, path: &str, body: Body<'_>) -> Result<Vec<u8>, Failure> {
        let Backend::Remote { base, agent } = self else {
            unreachable!("remote only")
        };
        let url = format!("{}{path}", base.trim_end_matches('/'));
        let sent = match (method, body) {
            ("GET", _) => agent.get(&url).call(),
            ("DELETE", _) => agent.delete(&url).call(),
            (_, Body::None) => agent.post(&url).send_empty(),
            (_, Body::Json(bytes)) => agent.post(&url).content_type("application/json").send(&bytes[..]),
            (_, Body::Raw(bytes, ct)) => agent.post(&url).content_type(ct).send(bytes),
        };
        let mut resp = sent.map_err(|e| Failure::Transport(format!("cannot reach {base}: {e}")))?;
        let status = resp.status().as_u16();
        let bytes = resp
            .body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_vec()
            .map_err(|e| Failure::Transport(format!("{url}: {e}")))?;
        if status == 200 {
            Ok(bytes)
        } else {
            Err(Failure::Api(serde_json::from_slice(&bytes).unwrap_or_else(|_| {
                ApiError::new(ErrorCode::Internal, format!("HTTP {status}: {}", String::from_utf8_lossy(&bytes)))
            })))
        }
    }

    /// Runs `local` in-process, or issues the HTTP request; either way
    /// returns the response bytes and the decoded value.
    fn call<T, F>(&self, method: &str, path: &str, body: Body<'_>, local: F) -> Result<(Vec<u8>, T), Failure>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce(&Engine) -> Result<T, ApiError>,
    {
        match self {
            Backend::Local { engine, .. } => {
                let value = local(engine)?;
                Ok((api::to_json(&value), value))
            }
            Backend::Remote { .. } => {
                let bytes = self.request(method, path, body)?;
                let value = serde_json::from_slice(&bytes)
                    .map_err(|e| Failure::Transport(format!("unexpected response from {path}: {e}")))?;
                Ok((bytes, value))
            }
        }
    }

    fn persist(&self) -> Result<(), Failure> {
        if let Backend::Local { engine, snapshot } = self {
            engine.index().save_snapshot(snapshot)?;
        }
        Ok(())
    }
}

fn render_tree(node: &TreeNode, out: &mut dyn Write) -> std::io::Result<()> {
    fn label(n: &TreeNode) -> String {
        n.doc_id.clone().unwrap_or_else(|| "(query)".to_owned())
    }
    fn children(nodes: &[TreeNode], prefix: &str, out: &mut dyn Write) -> std::io::Result<()> {
        for (i, child) in nodes.iter().enumerate() {
            let last = i + 1 == nodes.len();
            writeln!(out, "{prefix}{}{}", if last { "└── " } else { "├── " }, label(child))?;
            let next = format!("{prefix}{}", if last { "    " } else { "│   " });
            children(&child.children, &next, out)?;
        }
        Ok(())
    }
    writeln!(out, "{}", label(node))?;
    children(&node.children, "", out)
}

fn print_hits(hits: &[crate::index::SearchHit], out: &mut dyn Write) -> std::io::Result<()> {
    if hits.is_empty() {
        return writeln!(out, "no results");
    }
    writeln!(out, "{:>4}  {:>9}  id", "rank", "score")?;
    for h in hits {
        writeln!(out, "{:>4}  {:>9.6}  {}", h.rank, h.score, h.id)?;
    }
    Ok(())
}

fn emit(json: bool, bytes: &[u8], out: &mut dyn Write, human: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), Failure> {
    if json {
        out.write_all(bytes)?;
        out.write_all(b"\n")?;
    } else {
        human(out)?;
    }
    Ok(())
}

fn path_segment(id: &str) -> String {
    url::form_urlencoded::byte_serialize(id.as_bytes()).collect::<String>().replace('+', "%20")
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let settings = Settings::resolve(cli.config.as_deref())?;
    if let Command::Serve = cli.command {
        let runtime = tokio::runtime::Runtime::new()?;
        return runtime.block_on(crate::service::serve(settings)).map_err(Failure::from);
    }
    let backend = match &cli.local {
        Some(path) => {
            let engine = settings.build_engine()?;
            if path.exists() {
                engine.index().restore_snapshot(path)?;
            }
            Backend::Local { engine: Box::new(engine), snapshot: path.clone() }
        }
        None => Backend::Remote {
            base: cli.endpoint.clone(),
            agent: ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(60)))
                .http_status_as_error(false)
                .build()
                .into(),
        },
    };
    let json = cli.json;

    match cli.command {
        Command::Serve => unreachable!(),
        Command::Ingest { file, embed_missing } => {
            let data = std::fs::read(&file)
                .map_err(|e| Failure::Transport(format!("cannot read {}: {e}", file.display())))?;
            let path = format!("/v1/documents?embed_missing={embed_missing}");
            let (bytes, report): (_, IngestReport) = backend.call("POST", &path, Body::Raw(&data, crate::service::NDJSON), |e| {
                api::ingest_ndjson(e, &data, embed_missing)
            })?;
            backend.persist()?;
            emit(json, &bytes, out, |o| {
                writeln!(o, "ingested {}, skipped {}", report.ingested, report.skipped)?;
                for err in &report.errors {
                    writeln!(o, "  line {}: {}", err.line, err.message)?;
                }
                Ok(())
            })
        }
        Command::Search { terms, less, template, context, demote_quality, filter, k, debug } => {
            let mut parsed = Vec::new();
            for t in &terms {
                let (text, w) = parse_weighted(t).map_err(Failure::Usage)?;
                parsed.push(Term::more(text, w));
            }
            for t in &less {
                let (text, w) = parse_weighted(t).map_err(Failure::Usage)?;
                parsed.push(Term::less(text, w));
            }
            let mut spec = QuerySpec::new(parsed).with_k(k);
            spec.template = template;
            spec.demote_quality = demote_quality;
            for c in &context {
                let (doc, w) = parse_weighted(c).map_err(Failure::Usage)?;
                spec.context_items.push(ContextItem::doc(doc, w));
            }
            if !filter.is_empty() {
                let mut f = MetadataFilter::new();
                for kv in &filter {
                    let (key, value) = kv
                        .split_once('=')
                        .ok_or_else(|| Failure::Usage(format!("malformed filter `{kv}`: expected KEY=VALUE")))?;
                    f = f.eq(key, value);
                }
                spec.filter = Some(f);
            }
            let path = if debug { "/v1/search?debug=1" } else { "/v1/search" };
            let (bytes, resp): (_, SearchResponse) =
                backend.call("POST", path, Body::Json(api::to_json(&spec)), |e| api::search(e, &spec, debug))?;
            emit(json, &bytes, out, |o| {
                if let Some(trace) = &resp.trace {
                    for t in &trace.terms {
                        writeln!(o, "  {:+.3}  {}", t.weight, t.text)?;
                    }
                    for c in &trace.context {
                        let what = c.doc_id.as_deref().or(c.image.as_deref()).unwrap_or_default();
                        writeln!(o, "  {:+.3}  [context] {what}", c.weight)?;
                    }
                }
                print_hits(&resp.hits, o)
            })
        }
        Command::Walk { start, query, layers, children, neighbours, seed, format } => {
            let start = match (start, query) {
                (Some(doc_id), _) => WalkStartSpec { doc_id: Some(doc_id), ..Default::default() },
                (None, Some(q)) => WalkStartSpec { query_spec: Some(QuerySpec::single(q)), ..Default::default() },
                (None, None) => return Err(Failure::Usage("walk needs --start or --query".into())),
            };
            let params = if layers.is_some() || children.is_some() || neighbours.is_some() || seed.is_some() {
                let d: WalkParams = settings.engine_config()?.walk_defaults;
                Some(WalkParams {
                    layers: layers.unwrap_or(d.layers),
                    children: children.unwrap_or(d.children),
                    neighbours: neighbours.unwrap_or(d.neighbours),
                    seed: seed.unwrap_or(d.seed),
                    literal_filtering: false,
                })
            } else {
                None
            };
            let req = WalkRequest { start, params };
            let (bytes, resp): (_, WalkResponse) =
                backend.call("POST", "/v1/walk", Body::Json(api::to_json(&req)), |e| api::walk(e, &req))?;
            emit(json || format == TreeFormat::Json, &bytes, out, |o| match format {
                TreeFormat::Flat => resp.tree.flatten().iter().try_for_each(|id| writeln!(o, "{id}")),
                _ => render_tree(&resp.tree, o),
            })
        }
        Command::Recommend { seeds, k } => {
            let req = RecommendRequest { seed_ids: seeds, k };
            let (bytes, resp): (_, HitsResponse) =
                backend.call("POST", "/v1/recommend", Body::Json(api::to_json(&req)), |e| api::recommend(e, &req))?;
            emit(json, &bytes, out, |o| print_hits(&resp.hits, o))
        }
        Command::Get { id } => {
            let (bytes, doc): (_, Document) = backend.call(
                "GET",
                &format!("/v1/documents/{}", path_segment(&id)),
                Body::None,
                |e| api::get_document(e, &id),
            )?;
            emit(json, &bytes, out, |o| {
                writeln!(o, "{}  {}", doc.id, doc.title)?;
                if let Some(m) = &doc.media_ref {
                    writeln!(o, "  media: {m}")?;
                }
                for (k, v) in &doc.metadata {
                    writeln!(o, "  {k}: {v}")?;
                }
                Ok(())
            })
        }
        Command::Delete { id } => {
            let (bytes, resp): (_, DeleteResponse) = backend.call(
                "DELETE",
                &format!("/v1/documents/{}", path_segment(&id)),
                Body::None,
                |e| Ok(api::delete_document(e, &id)),
            )?;
            backend.persist()?;
            emit(json, &bytes, out, |o| {
                writeln!(o, "{} {}", if resp.deleted { "deleted" } else { "absent" }, resp.id)
            })
        }
        Command::Templates => {
            let (bytes, list): (_, Vec<PromptTemplate>) =
                backend.call("GET", "/v1/templates", Body::None, |e| Ok(api::templates(e)))?;
            emit(json, &bytes, out, |o| {
                list.iter().try_for_each(|t| writeln!(o, "{:<12} {}", t.id, t.pattern))
            })
        }
        Command::Health => {
            let (bytes, h): (_, HealthResponse) =
                backend.call("GET", "/v1/healthz", Body::None, |e| Ok(api::health(e)))?;
            emit(json, &bytes, out, |o| {
                writeln!(o, "{} dimension={} documents={}", h.status, h.dimension, h.doc_count)
            })
        }
        Command::Snapshot { out: path } => {
            let bytes = match &backend {
                Backend::Local { engine, .. } => api::snapshot(engine),
                Backend::Remote { .. } => backend.request("GET", "/v1/admin/snapshot", Body::None)?,
            };
            std::fs::write(&path, &bytes)?;
            let lines = bytes.iter().filter(|b| **b == b'\n').count();
            writeln!(out, "wrote {lines} documents to {}", path.display())?;
            Ok(())
        }
        Command::Restore { input } => {
            let data = std::fs::read(&input)
                .map_err(|e| Failure::Transport(format!("cannot read {}: {e}", input.display())))?;
            let (bytes, resp): (_, RestoreResponse) =
                backend.call("POST", "/v1/admin/restore", Body::Raw(&data, crate::service::NDJSON), |e| {
                    api::restore(e, &data)
                })?;
            backend.persist()?;
            emit(json, &bytes, out, |o| writeln!(o, "restored {} documents", resp.doc_count))
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render().ansi());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Api(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_API
        }
        Err(Failure::Transport(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_API
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_syntax_uses_last_colon() {
        assert_eq!(parse_weighted("dining chair:1.0").unwrap(), ("dining chair".into(), 1.0));
        assert_eq!(parse_weighted("fixture:1,0:1.0").unwrap(), ("fixture:1,0".into(), 1.0));
        assert_eq!(parse_weighted("a:b:c:-0.5").unwrap(), ("a:b:c".into(), -0.5));
        assert!(parse_weighted("no weight").is_err());
        assert!(parse_weighted("chair:heavy").is_err());
        assert!(parse_weighted(":1.0").is_err());
    }

    #[test]
    fn tree_rendering() {
        let leaf = |id: &str| TreeNode { vector: None, doc_id: Some(id.into()), children: vec![] };
        let tree = TreeNode {
            vector: Some(vec![1.0]),
            doc_id: None,
            children: vec![
                TreeNode { children: vec![leaf("c"), leaf("d")], ..leaf("a") },
                leaf("b"),
            ],
        };
        let mut buf = Vec::new();
        render_tree(&tree, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "(query)\n├── a\n│   ├── c\n│   └── d\n└── b\n"
        );
    }

    #[test]
    fn usage_errors_exit_two() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(["vl", "search"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run(["vl", "--local", "/nonexistent/x.jsonl", "search", "--term", "chair"], &mut o, &mut e), EXIT_USAGE);
        assert!(String::from_utf8_lossy(&e).contains("--term \"dining chair:1.0\""));
    }

    #[test]
    fn connection_failure_names_endpoint() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(["vl", "--endpoint", "http://127.0.0.1:9", "health"], &mut o, &mut e);
        assert_eq!(code, EXIT_API);
        assert!(String::from_utf8_lossy(&e).contains("http://127.0.0.1:9"));
    }
}

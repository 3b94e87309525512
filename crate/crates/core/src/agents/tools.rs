//! Tool registry and dispatch. Every registered tool carries a binding that says
//! how it executes; preview and SQL tools are registered with stub bindings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::observation::Observation;
use crate::runtime::{Session, SessionError};
use crate::sim::WORKSPACE_ROOT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    #[serde(default)]
    pub args: serde_json::Value,
}

impl ToolCall {
    pub fn new(name: impl Into<String>, args: serde_json::Value) -> Self {
        Self {
            name: name.into(),
            args,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolParam {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub required: bool,
    pub description: String,
}

/// What the model is told about a tool: name plus parameter descriptors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub params: Vec<ToolParam>,
}

impl ToolSchema {
    pub fn new(name: &str, description: &str) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            params: Vec::new(),
        }
    }

    pub fn param(mut self, name: &str, kind: &str, required: bool, description: &str) -> Self {
        self.params.push(ToolParam {
            name: name.into(),
            kind: kind.into(),
            required,
            description: description.into(),
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
}

impl ToolResult {
    fn text(output: impl Into<String>) -> Self {
        Self {
            output: output.into(),
            observation: None,
            exit_code: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail", rename_all = "snake_case")]
pub enum ToolError {
    #[error("unknown tool: {0}")]
    UnknownTool(String),
    #[error("{path}: expected exactly one occurrence, found {matches}")]
    AmbiguousReplace { path: String, matches: usize },
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("bad arguments: {0}")]
    BadArguments(String),
    #[error("{0} is not available in this backend")]
    NotAvailableInBackend(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

impl From<BackendError> for ToolError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::FileNotFound(p) => ToolError::FileNotFound(p),
            BackendError::OutsideWorkspace(p) => {
                ToolError::BadArguments(format!("path outside workspace: {p}"))
            }
            other => ToolError::Session(other.into()),
        }
    }
}

/// How a registered tool executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Binding {
    Bash,
    FileRead,
    StringReplace,
    Screenshot,
    SearchRepository,
    FileNameSearch,
    ViewStructure,
    /// Registered but needs a renderer or database the backend lacks.
    Stub,
}

#[derive(Debug, Clone)]
struct Entry {
    schema: ToolSchema,
    binding: Binding,
}

#[derive(Debug, Clone)]
pub struct ToolRegistry {
    tools: BTreeMap<String, Entry>,
}

const SWEBENCH_FAMILY: [&str; 3] = ["swebench", "swebench-multilingual", "swebench-mm"];

impl ToolRegistry {
    /// bash, file_read, string_replace, screenshot.
    pub fn base() -> Self {
        let mut r = Self {
            tools: BTreeMap::new(),
        };
        r.add(
            ToolSchema::new("bash", "Run a shell command in the workspace.").param(
                "cmd",
                "string",
                true,
                "Command line",
            ),
            Binding::Bash,
        );
        r.add(
            ToolSchema::new(
                "file_read",
                "Read a file, optionally a 1-based inclusive line range.",
            )
            .param("path", "string", true, "File path")
            .param("start_line", "integer", false, "First line")
            .param("end_line", "integer", false, "Last line"),
            Binding::FileRead,
        );
        r.add(
            ToolSchema::new(
                "string_replace",
                "Replace the single occurrence of `old` with `new` in a file.",
            )
            .param("path", "string", true, "File path")
            .param(
                "old",
                "string",
                true,
                "Text to replace; must occur exactly once",
            )
            .param("new", "string", true, "Replacement"),
            Binding::StringReplace,
        );
        r.add(
            ToolSchema::new("screenshot", "Capture the current screen."),
            Binding::Screenshot,
        );
        r
    }

    /// Base set plus the assisted tools for `dataset`.
    pub fn for_dataset(dataset: Option<&str>) -> Self {
        let mut r = Self::base();
        let Some(dataset) = dataset else { return r };
        if SWEBENCH_FAMILY.contains(&dataset) {
            r.add(
                ToolSchema::new("search_repository", "Search every file for a string.").param(
                    "query",
                    "string",
                    true,
                    "Text to find",
                ),
                Binding::SearchRepository,
            );
            r.add(
                ToolSchema::new(
                    "file_name_search",
                    "Find files whose name contains a string.",
                )
                .param("name", "string", true, "File name fragment"),
                Binding::FileNameSearch,
            );
            r.add(
                ToolSchema::new("view_structure", "Show the directory tree.").param(
                    "path",
                    "string",
                    false,
                    "Directory, default the workspace root",
                ),
                Binding::ViewStructure,
            );
        }
        let stubs: &[(&str, &str)] = match dataset {
            "design2code" => &[
                (
                    "view_html_preview",
                    "Render index.html and return a screenshot.",
                ),
                ("view_original_image", "Return the reference image."),
                ("zoom_in", "Zoom in on the rendered page."),
                ("zoom_out", "Zoom out on the rendered page."),
            ],
            "chartmimic" => &[
                (
                    "view_python_preview",
                    "Render the chart script and return the image.",
                ),
                ("view_original_image", "Return the reference image."),
            ],
            "bird" => &[
                ("test_sql", "Run a query against the task database."),
                (
                    "get_relevant_schemas",
                    "Describe the tables relevant to the question.",
                ),
            ],
            _ => &[],
        };
        for (name, desc) in stubs {
            let mut schema = ToolSchema::new(name, desc);
            if *name == "test_sql" {
                schema = schema.param("query", "string", true, "SQL text");
            }
            r.add(schema, Binding::Stub);
        }
        r
    }

    fn add(&mut self, schema: ToolSchema, binding: Binding) {
        let prev = self
            .tools
            .insert(schema.name.clone(), Entry { schema, binding });
        debug_assert!(prev.is_none(), "tool names are unique");
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.tools.keys().map(String::as_str).collect()
    }

    pub fn schema(&self, name: &str) -> Option<&ToolSchema> {
        self.tools.get(name).map(|e| &e.schema)
    }

    /// Schemas in name order.
    pub fn schemas(&self) -> Vec<ToolSchema> {
        self.tools.values().map(|e| e.schema.clone()).collect()
    }
}

fn str_arg<'a>(call: &'a ToolCall, key: &str) -> Result<&'a str, ToolError> {
    call.args
        .get(key)
        .and_then(|v| v.as_str())
        .ok_or_else(|| ToolError::BadArguments(format!("{}: missing string `{key}`", call.name)))
}

fn opt_line_arg(call: &ToolCall, key: &str) -> Result<Option<usize>, ToolError> {
    match call.args.get(key) {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .filter(|n| *n >= 1)
            .map(|n| Some(n as usize))
            .ok_or_else(|| ToolError::BadArguments(format!("{key} must be a positive integer"))),
    }
}

/// Workspace-relative form of a user-supplied path.
fn relative(path: &str) -> String {
    let p = path.trim();
    let p = p
        .strip_prefix(WORKSPACE_ROOT)
        .map(|r| r.trim_start_matches('/'))
        .unwrap_or(p);
    p.trim_start_matches("./").trim_end_matches('/').to_string()
}

/// Start offsets of every occurrence of `needle`, overlapping ones included.
pub fn occurrences(haystack: &str, needle: &str) -> Vec<usize> {
    if needle.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(i) = haystack[from..].find(needle) {
        out.push(from + i);
        // advance one character so overlapping matches are seen
        let step = haystack[from + i..]
            .chars()
            .next()
            .map_or(1, char::len_utf8);
        from += i + step;
    }
    out
}

/// One search hit: workspace-relative path, 1-based line number, line text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchHit {
    pub path: String,
    pub line: usize,
    pub text: String,
}

/// Every line of every file containing `query`, in path then line order.
pub fn search_repository(files: &BTreeMap<String, Vec<u8>>, query: &str) -> Vec<SearchHit> {
    let mut hits = Vec::new();
    if query.is_empty() {
        return hits;
    }
    for (path, bytes) in files {
        let Ok(text) = std::str::from_utf8(bytes) else {
            continue;
        };
        for (i, line) in text.lines().enumerate() {
            if line.contains(query) {
                hits.push(SearchHit {
                    path: path.clone(),
                    line: i + 1,
                    text: line.to_string(),
                });
            }
        }
    }
    hits
}

fn file_name_search(files: &BTreeMap<String, Vec<u8>>, name: &str) -> Vec<String> {
    files
        .keys()
        .filter(|p| p.rsplit('/').next().unwrap_or(p).contains(name))
        .cloned()
        .collect()
}

fn view_structure(files: &BTreeMap<String, Vec<u8>>, root: &str) -> Result<String, ToolError> {
    let prefix = if root.is_empty() {
        String::new()
    } else {
        format!("{root}/")
    };
    let under: Vec<&str> = files
        .keys()
        .filter_map(|p| p.strip_prefix(&prefix))
        .collect();
    if under.is_empty() && !root.is_empty() {
        return Err(ToolError::FileNotFound(root.to_string()));
    }
    let mut out = format!("{}/\n", if root.is_empty() { "." } else { root });
    let mut printed: Vec<Vec<&str>> = Vec::new();
    for p in under {
        let parts: Vec<&str> = p.split('/').collect();
        for depth in 0..parts.len() {
            let key = parts[..=depth].to_vec();
            if printed.contains(&key) {
                continue;
            }
            let is_dir = depth + 1 < parts.len();
            out.push_str(&"  ".repeat(depth + 1));
            out.push_str(parts[depth]);
            if is_dir {
                out.push('/');
            }
            out.push('\n');
            printed.push(key);
        }
    }
    Ok(out)
}

/// Executes `call` against `session`. Every tool except `screenshot` counts as a
/// step; `screenshot` only captures.
pub fn dispatch_tool(
    registry: &ToolRegistry,
    call: &ToolCall,
    session: &mut Session,
) -> Result<ToolResult, ToolError> {
    let entry = registry
        .tools
        .get(&call.name)
        .ok_or_else(|| ToolError::UnknownTool(call.name.clone()))?;
    if entry.binding == Binding::Screenshot {
        let obs = session.observe(false, false)?;
        return Ok(ToolResult {
            output: format!("screenshot captured ({})", obs.screenshot.digest),
            observation: Some(obs),
            exit_code: None,
        });
    }
    session.consume_step()?;
    let backend = session.backend_mut();
    match entry.binding {
        Binding::Bash => {
            let cmd = str_arg(call, "cmd")?;
            let out = backend.exec(cmd)?;
            let mut output = out.output;
            if out.exit_code != 0 {
                if !output.is_empty() && !output.ends_with('\n') {
                    output.push('\n');
                }
                output.push_str(&format!("[exit code {}]", out.exit_code));
            }
            Ok(ToolResult {
                output,
                observation: None,
                exit_code: Some(out.exit_code),
            })
        }
        Binding::FileRead => {
            let path = relative(str_arg(call, "path")?);
            let start = opt_line_arg(call, "start_line")?;
            let end = opt_line_arg(call, "end_line")?;
            let bytes = backend.read_file(&path)?;
            let text = String::from_utf8_lossy(&bytes);
            if start.is_none() && end.is_none() {
                return Ok(ToolResult::text(text));
            }
            let lines: Vec<&str> = text.lines().collect();
            let s = start.unwrap_or(1);
            let e = end.unwrap_or(lines.len()).min(lines.len());
            if s > e.max(1) || s > lines.len().max(1) {
                return Err(ToolError::BadArguments(format!(
                    "line range {s}..{e} outside 1..{}",
                    lines.len()
                )));
            }
            let mut out = lines[s - 1..e].join("\n");
            if e > s - 1 {
                out.push('\n');
            }
            Ok(ToolResult::text(out))
        }
        Binding::StringReplace => {
            let path = relative(str_arg(call, "path")?);
            let old = str_arg(call, "old")?;
            let new = str_arg(call, "new")?;
            if old.is_empty() {
                return Err(ToolError::BadArguments("`old` must not be empty".into()));
            }
            let bytes = backend.read_file(&path)?;
            let text = String::from_utf8(bytes)
                .map_err(|_| ToolError::BadArguments(format!("{path} is not UTF-8 text")))?;
            let hits = occurrences(&text, old);
            if hits.len() != 1 {
                return Err(ToolError::AmbiguousReplace {
                    path,
                    matches: hits.len(),
                });
            }
            let at = hits[0];
            let updated = format!("{}{}{}", &text[..at], new, &text[at + old.len()..]);
            backend.write_file(&path, updated.as_bytes())?;
            Ok(ToolResult::text(format!("replaced 1 occurrence in {path}")))
        }
        Binding::SearchRepository => {
            let query = str_arg(call, "query")?;
            let files = backend.export_files()?;
            let hits = search_repository(&files, query);
            if hits.is_empty() {
                return Ok(ToolResult::text("no matches\n"));
            }
            let mut out = String::new();
            for h in hits {
                out.push_str(&format!("{}:{}:{}\n", h.path, h.line, h.text));
            }
            Ok(ToolResult::text(out))
        }
        Binding::FileNameSearch => {
            let name = str_arg(call, "name")?;
            let files = backend.export_files()?;
            let found = file_name_search(&files, name);
            if found.is_empty() {
                return Ok(ToolResult::text("no matches\n"));
            }
            Ok(ToolResult::text(found.join("\n") + "\n"))
        }
        Binding::ViewStructure => {
            let root = match call.args.get("path").and_then(|v| v.as_str()) {
                Some(p) => relative(p),
                None => String::new(),
            };
            let files = backend.export_files()?;
            Ok(ToolResult::text(view_structure(&files, &root)?))
        }
        Binding::Stub => Err(ToolError::NotAvailableInBackend(call.name.clone())),
        Binding::Screenshot => unreachable!("handled above"),
    }
}

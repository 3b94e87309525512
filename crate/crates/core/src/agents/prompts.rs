//! Versioned prompt templates. Replay tapes pin prompt digests, so any edit to a
//! template must bump [`TEMPLATE_VERSION`] and re-record the tapes.

use crate::observation::ElementRegistry;

pub const TEMPLATE_VERSION: &str = "idegym-prompts/1";

const PURE_CUA: &str = include_str!("../../prompts/pure_cua.txt");
const PURE_CUA_MARKS: &str = include_str!("../../prompts/pure_cua_marks.txt");
const TOOLS_CUA: &str = include_str!("../../prompts/tools_cua.txt");
const TEXT_SWE: &str = include_str!("../../prompts/text_swe.txt");

pub fn pure_cua_system(som: bool) -> String {
    PURE_CUA.replace("{{marks_help}}", if som { PURE_CUA_MARKS } else { "" })
}

pub fn tools_cua_system() -> &'static str {
    TOOLS_CUA
}

pub fn text_swe_system() -> &'static str {
    TEXT_SWE
}

/// One line per element: `[id] role "name"`.
pub fn render_registry(registry: &ElementRegistry) -> String {
    let mut out = String::new();
    for (id, e) in registry.iter() {
        out.push_str(&format!("[{id}] {} {:?}\n", e.role.as_str(), e.name));
    }
    out
}

/// The per-turn user message body shared by all designs.
pub fn turn_text(
    turn: u32,
    max_steps: u32,
    instruction: &str,
    last_result: Option<&str>,
    extra: Option<&str>,
) -> String {
    let mut out = String::new();
    if turn == 0 {
        out.push_str("Task:\n");
        out.push_str(instruction.trim_end());
        out.push_str("\n\n");
    }
    out.push_str(&format!(
        "Step {} of {max_steps} ({} remaining after this one).\n",
        turn + 1,
        max_steps.saturating_sub(turn + 1)
    ));
    if let Some(r) = last_result {
        out.push_str("\nResult of the previous action:\n");
        out.push_str(r.trim_end());
        out.push('\n');
    }
    if let Some(e) = extra {
        out.push('\n');
        out.push_str(e.trim_end());
        out.push('\n');
    }
    out
}

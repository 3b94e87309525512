//! The keyboard/mouse action space: xdotool-style command strings.
//!
//! A command is one or more `xdotool` clauses joined by `&&`; each clause holds one
//! or more subcommands from a closed set (`mousemove`, `click`, `type`, `key`,
//! `mousedown`, `mouseup`, `sleep`). Parsing is total: every input yields either an
//! [`ActionSequence`] or a structured [`ParseError`].

mod keys;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::ScreenGeometry;
use crate::observation::ElementRegistry;

pub use keys::{is_known_key, NAMED_KEYS};
pub use parse::{parse_command, parse_element_action};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MouseButton {
    Left,
    Middle,
    Right,
    ScrollUp,
    ScrollDown,
}

impl MouseButton {
    pub const ALL: [MouseButton; 5] = [
        MouseButton::Left,
        MouseButton::Middle,
        MouseButton::Right,
        MouseButton::ScrollUp,
        MouseButton::ScrollDown,
    ];

    /// xdotool button number.
    pub fn code(self) -> u8 {
        match self {
            MouseButton::Left => 1,
            MouseButton::Middle => 2,
            MouseButton::Right => 3,
            MouseButton::ScrollUp => 4,
            MouseButton::ScrollDown => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code.checked_sub(1)? as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modifier {
    Ctrl,
    Alt,
    Shift,
    Super,
}

impl Modifier {
    pub const ALL: [Modifier; 4] = [
        Modifier::Ctrl,
        Modifier::Alt,
        Modifier::Shift,
        Modifier::Super,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modifier::Ctrl => "ctrl",
            Modifier::Alt => "alt",
            Modifier::Shift => "shift",
            Modifier::Super => "super",
        }
    }
}

/// `modifier* + keyname`, e.g. `ctrl+s` or `Return`.
///
/// The key name is not checked against the key table here; that is
/// [`validate`]'s job, so that an unknown key surfaces as a violation rather than a
/// parse failure.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct KeyChord {
    pub modifiers: Vec<Modifier>,
    pub key: String,
}

impl KeyChord {
    pub fn new(modifiers: Vec<Modifier>, key: impl Into<String>) -> Self {
        Self {
            modifiers,
            key: key.into(),
        }
    }

    pub fn plain(key: impl Into<String>) -> Self {
        Self::new(Vec::new(), key)
    }

    /// Strips leading `ctrl+`/`alt+`/`shift+`/`super+` prefixes; whatever remains is
    /// the key name. Returns `None` when no key name remains or it contains whitespace.
    pub fn parse(text: &str) -> Option<KeyChord> {
        let mut rest = text;
        let mut modifiers = Vec::new();
        'strip: loop {
            for m in Modifier::ALL {
                let prefix = m.as_str();
                if rest.len() > prefix.len() + 1
                    && rest.starts_with(prefix)
                    && rest.as_bytes()[prefix.len()] == b'+'
                {
                    modifiers.push(m);
                    rest = &rest[prefix.len() + 1..];
                    continue 'strip;
                }
            }
            break;
        }
        if rest.is_empty() || rest.chars().any(char::is_whitespace) {
            return None;
        }
        // A bare `'` would open a quoted string in command text, so it travels by name.
        let key = if rest == "apostrophe" { "'" } else { rest };
        Some(KeyChord::new(modifiers, key))
    }

    pub fn has(&self, m: Modifier) -> bool {
        self.modifiers.contains(&m)
    }

    pub fn is_known(&self) -> bool {
        is_known_key(&self.key)
    }
}

impl fmt::Display for KeyChord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.modifiers {
            write!(f, "{}+", m.as_str())?;
        }
        if self.key == "'" {
            f.write_str("apostrophe")
        } else {
            f.write_str(&self.key)
        }
    }
}

impl TryFrom<String> for KeyChord {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        KeyChord::parse(&value).ok_or_else(|| format!("invalid key chord {value:?}"))
    }
}

impl From<KeyChord> for String {
    fn from(c: KeyChord) -> Self {
        c.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AtomicAction {
    MouseMove {
        x: u32,
        y: u32,
    },
    Click {
        button: MouseButton,
    },
    Type {
        text: String,
    },
    Key {
        chord: KeyChord,
    },
    MouseDown {
        button: MouseButton,
    },
    MouseUp {
        button: MouseButton,
    },
    /// Sleep duration at millisecond resolution.
    Sleep {
        millis: u64,
    },
}

impl AtomicAction {
    pub fn mouse_move(x: u32, y: u32) -> Self {
        AtomicAction::MouseMove { x, y }
    }

    pub fn click(button: MouseButton) -> Self {
        AtomicAction::Click { button }
    }

    pub fn type_text(text: impl Into<String>) -> Self {
        AtomicAction::Type { text: text.into() }
    }

    pub fn key(chord: &str) -> Self {
        AtomicAction::Key {
            chord: KeyChord::parse(chord).unwrap_or_else(|| KeyChord::plain(chord)),
        }
    }

    fn render_subcommand(&self, out: &mut String) {
        use std::fmt::Write as _;
        match self {
            AtomicAction::MouseMove { x, y } => {
                let _ = write!(out, "mousemove {x} {y}");
            }
            AtomicAction::Click { button } => {
                let _ = write!(out, "click {}", button.code());
            }
            AtomicAction::Type { text } => {
                out.push_str("type '");
                for c in text.chars() {
                    if c == '\'' || c == '\\' {
                        out.push('\\');
                    }
                    out.push(c);
                }
                out.push('\'');
            }
            AtomicAction::Key { chord } => {
                let _ = write!(out, "key {chord}");
            }
            AtomicAction::MouseDown { button } => {
                let _ = write!(out, "mousedown {}", button.code());
            }
            AtomicAction::MouseUp { button } => {
                let _ = write!(out, "mouseup {}", button.code());
            }
            AtomicAction::Sleep { millis } => {
                let secs = millis / 1000;
                let frac = millis % 1000;
                if frac == 0 {
                    let _ = write!(out, "sleep {secs}");
                } else {
                    let digits = format!("{frac:03}");
                    let _ = write!(out, "sleep {secs}.{}", digits.trim_end_matches('0'));
                }
            }
        }
    }
}

/// Parsed form of a command string. Non-empty after a successful parse.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionSequence {
    pub actions: Vec<AtomicAction>,
}

impl ActionSequence {
    pub fn new(actions: Vec<AtomicAction>) -> Self {
        Self { actions }
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, AtomicAction> {
        self.actions.iter()
    }
}

impl From<Vec<AtomicAction>> for ActionSequence {
    fn from(actions: Vec<AtomicAction>) -> Self {
        Self { actions }
    }
}

impl fmt::Display for ActionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_command(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ParseError {
    #[error("empty command")]
    EmptyCommand,
    #[error("syntax error at byte {position}: expected {expected}")]
    SyntaxError { position: usize, expected: String },
    #[error("unknown subcommand {name:?} at byte {position}")]
    UnknownSubcommand { position: usize, name: String },
}

/// Canonical text form: one subcommand per `xdotool` clause, clauses joined by ` && `.
pub fn render_command(seq: &ActionSequence) -> String {
    let mut out = String::new();
    for (i, action) in seq.actions.iter().enumerate() {
        if i > 0 {
            out.push_str(" && ");
        }
        out.push_str("xdotool ");
        action.render_subcommand(&mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    OutOfBounds { index: usize, x: u32, y: u32 },
    UnknownKeyName { index: usize, chord: String },
    EmptyText { index: usize },
}

/// Checks coordinates against `[0, width) x [0, height)` and key chords against the
/// key table. An empty result means the sequence is valid for `geom`.
pub fn validate(seq: &ActionSequence, geom: ScreenGeometry) -> Vec<Violation> {
    let mut out = Vec::new();
    for (index, action) in seq.actions.iter().enumerate() {
        match action {
            AtomicAction::MouseMove { x, y } => {
                if !geom.contains(*x as i64, *y as i64) {
                    out.push(Violation::OutOfBounds {
                        index,
                        x: *x,
                        y: *y,
                    });
                }
            }
            AtomicAction::Key { chord } => {
                if !chord.is_known() {
                    out.push(Violation::UnknownKeyName {
                        index,
                        chord: chord.to_string(),
                    });
                }
            }
            AtomicAction::Type { text } if text.is_empty() => {
                out.push(Violation::EmptyText { index });
            }
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementVerb {
    Click,
    TypeInto,
    KeyInto,
}

impl ElementVerb {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementVerb::Click => "click",
            ElementVerb::TypeInto => "type_into",
            ElementVerb::KeyInto => "key_into",
        }
    }
}

/// An action addressed to a Set-of-Marks element id instead of pixel coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementAction {
    pub verb: ElementVerb,
    pub element_id: u32,
    pub payload: Option<String>,
}

impl ElementAction {
    pub fn click(element_id: u32) -> Self {
        Self {
            verb: ElementVerb::Click,
            element_id,
            payload: None,
        }
    }

    pub fn type_into(element_id: u32, text: impl Into<String>) -> Self {
        Self {
            verb: ElementVerb::TypeInto,
            element_id,
            payload: Some(text.into()),
        }
    }

    pub fn key_into(element_id: u32, chord: impl Into<String>) -> Self {
        Self {
            verb: ElementVerb::KeyInto,
            element_id,
            payload: Some(chord.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unknown element id {0}")]
    UnknownElementId(u32),
    #[error("{0} requires a payload")]
    MissingPayload(&'static str),
    #[error("click takes no payload")]
    UnexpectedPayload,
    #[error("invalid key chord {0:?}")]
    BadChord(String),
}

/// Translates an element-id action into pixel actions aimed at the element's center.
pub fn resolve_element_action(
    ea: &ElementAction,
    registry: &ElementRegistry,
) -> Result<ActionSequence, ResolveError> {
    let entry = registry
        .get(ea.element_id)
        .ok_or(ResolveError::UnknownElementId(ea.element_id))?;
    let (cx, cy) = entry.bbox.center();
    let mut actions = vec![
        AtomicAction::mouse_move(cx.max(0) as u32, cy.max(0) as u32),
        AtomicAction::click(MouseButton::Left),
    ];
    match (ea.verb, ea.payload.as_deref()) {
        (ElementVerb::Click, None) => {}
        (ElementVerb::Click, Some(_)) => return Err(ResolveError::UnexpectedPayload),
        (ElementVerb::TypeInto, Some(text)) if !text.is_empty() => {
            actions.push(AtomicAction::type_text(text));
        }
        (ElementVerb::KeyInto, Some(chord)) if !chord.is_empty() => {
            for part in chord.split_whitespace() {
                let chord =
                    KeyChord::parse(part).ok_or_else(|| ResolveError::BadChord(part.into()))?;
                actions.push(AtomicAction::Key { chord });
            }
        }
        (verb, _) => return Err(ResolveError::MissingPayload(verb.as_str())),
    }
    Ok(ActionSequence::new(actions))
}

/// Named (non-printable) keys accepted in chords.
pub const NAMED_KEYS: &[&str] = &[
    "Return",
    "Tab",
    "Escape",
    "BackSpace",
    "Delete",
    "Up",
    "Down",
    "Left",
    "Right",
    "Home",
    "End",
    "Page_Up",
    "Page_Down",
    "F1",
    "F2",
    "F3",
    "F4",
    "F5",
    "F6",
    "F7",
    "F8",
    "F9",
    "F10",
    "F11",
    "F12",
    "space",
];

/// A key name is known if it is a single printable ASCII character or a named key.
pub fn is_known_key(name: &str) -> bool {
    let mut chars = name.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => c.is_ascii_graphic(),
        _ => NAMED_KEYS.contains(&name),
    }
}

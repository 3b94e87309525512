//! Action semantics for the simulated IDE.

use crate::action::{AtomicAction, KeyChord, Modifier, MouseButton};

use super::layout::{Layout, Target, CELL_HEIGHT, CELL_WIDTH};
use super::{paths, CursorPos, EditorTab, Focus, SimState};

const SCROLL_LINES: usize = 3;
const PAGE_LINES: usize = 10;
const TAB_SPACES: &str = "    ";

pub(super) fn apply_one(s: &mut SimState, action: &AtomicAction) {
    let handled = match action {
        AtomicAction::MouseMove { x, y } => {
            s.pointer = (*x, *y);
            true
        }
        AtomicAction::Click { button } => click(s, *button),
        AtomicAction::MouseDown { button } => {
            s.buttons_down |= bit(*button);
            if *button == MouseButton::Left {
                s.press_origin = Some(s.pointer);
            }
            true
        }
        AtomicAction::MouseUp { button } => mouse_up(s, *button),
        AtomicAction::Type { text } => type_text(s, text),
        AtomicAction::Key { chord } => key(s, chord),
        AtomicAction::Sleep { millis } => {
            s.virtual_clock_ms = s.virtual_clock_ms.saturating_add(*millis);
            true
        }
    };
    if !handled {
        s.last_action_ignored = true;
    }
}

fn bit(b: MouseButton) -> u8 {
    1 << (b.code() - 1)
}

fn click(s: &mut SimState, button: MouseButton) -> bool {
    match button {
        MouseButton::Left => {
            let (x, y) = s.pointer;
            match Layout::of(s).hit(s, x, y) {
                Some(t) => activate(s, t),
                None => false,
            }
        }
        MouseButton::ScrollUp | MouseButton::ScrollDown => scroll(s, button),
        MouseButton::Middle | MouseButton::Right => false,
    }
}

fn mouse_up(s: &mut SimState, button: MouseButton) -> bool {
    if s.buttons_down & bit(button) == 0 {
        return false;
    }
    s.buttons_down &= !bit(button);
    if button != MouseButton::Left {
        return true;
    }
    let Some((ox, oy)) = s.press_origin.take() else {
        return false;
    };
    let layout = Layout::of(s);
    let (x, y) = s.pointer;
    match (layout.hit(s, ox, oy), layout.hit(s, x, y)) {
        // A press and release on the same element is a click; drags are not modeled.
        (Some(a), Some(b)) if a == b => activate(s, b),
        _ => false,
    }
}

fn activate(s: &mut SimState, target: Target) -> bool {
    match target {
        Target::SettingsField => s.focus = Focus::SettingsSearch,
        Target::ExplorerItem(rel) => {
            s.selection = Some(rel.clone());
            if s.open_editor(&rel) {
                s.focus = Focus::Editor;
            } else {
                s.focus = Focus::Explorer;
            }
        }
        Target::Tab(i) => {
            s.active_editor = Some(i);
            s.focus = Focus::Editor;
        }
        Target::Editor => {
            let layout = Layout::of(s);
            let (px, py) = s.pointer;
            s.focus = Focus::Editor;
            let Some(tab) = s.active_mut() else {
                return false;
            };
            let row = (py as i32 - layout.buffer.y) / CELL_HEIGHT;
            let col = (px as i32 - layout.buffer.x) / CELL_WIDTH;
            let line = (tab.scroll + row.max(0) as usize).min(tab.lines.len() - 1);
            let col = (col.max(0) as usize).min(line_len(tab, line));
            tab.cursor = CursorPos { line, col };
        }
        Target::TerminalPane | Target::TerminalInput => s.focus = Focus::Terminal,
    }
    true
}

fn scroll(s: &mut SimState, button: MouseButton) -> bool {
    let layout = Layout::of(s);
    let (x, y) = s.pointer;
    if layout.hit(s, x, y) != Some(Target::Editor) {
        return false;
    }
    let Some(tab) = s.active_mut() else {
        return false;
    };
    let max = tab.lines.len() - 1;
    tab.scroll = if button == MouseButton::ScrollUp {
        tab.scroll.saturating_sub(SCROLL_LINES)
    } else {
        (tab.scroll + SCROLL_LINES).min(max)
    };
    true
}

fn type_text(s: &mut SimState, text: &str) -> bool {
    match s.focus {
        Focus::Editor => {
            let rows = Layout::of(s).buffer_rows();
            let Some(tab) = s.active_mut() else {
                return false;
            };
            for ch in text.chars() {
                match ch {
                    '\n' => split_line(tab),
                    '\r' => {}
                    c => insert(tab, &c.to_string()),
                }
            }
            reveal_cursor(tab, rows);
            true
        }
        Focus::Terminal => {
            for ch in text.chars() {
                match ch {
                    '\n' => submit(s),
                    '\r' => {}
                    c => s.terminal.input.push(c),
                }
            }
            true
        }
        Focus::SettingsSearch => {
            s.settings_query
                .extend(text.chars().filter(|c| !c.is_control()));
            true
        }
        Focus::Explorer => false,
    }
}

/// Character a chord produces when typed into a text field, if any.
fn chord_char(chord: &KeyChord) -> Option<char> {
    if chord.has(Modifier::Ctrl) || chord.has(Modifier::Alt) || chord.has(Modifier::Super) {
        return None;
    }
    let c = match chord.key.as_str() {
        "space" => ' ',
        k => {
            let mut it = k.chars();
            let c = it.next()?;
            if it.next().is_some() || !c.is_ascii_graphic() {
                return None;
            }
            c
        }
    };
    Some(if chord.has(Modifier::Shift) {
        c.to_ascii_uppercase()
    } else {
        c
    })
}

fn key(s: &mut SimState, chord: &KeyChord) -> bool {
    let ctrl_only = chord.modifiers == [Modifier::Ctrl];
    if ctrl_only && chord.key == "s" {
        return save(s);
    }
    if ctrl_only && chord.key == "w" {
        return close_active(s);
    }
    match s.focus {
        Focus::Editor => editor_key(s, chord),
        Focus::Terminal => {
            if ctrl_only && chord.key == "c" {
                let line = format!("$ {}^C", std::mem::take(&mut s.terminal.input));
                s.push_history(line);
                return true;
            }
            if !chord.modifiers.is_empty() && chord_char(chord).is_none() {
                return false;
            }
            match chord.key.as_str() {
                "Return" => submit(s),
                "BackSpace" => {
                    s.terminal.input.pop();
                }
                _ => match chord_char(chord) {
                    Some(c) => s.terminal.input.push(c),
                    None => return false,
                },
            }
            true
        }
        Focus::SettingsSearch => {
            match chord.key.as_str() {
                "BackSpace" if chord.modifiers.is_empty() => {
                    s.settings_query.pop();
                }
                "Escape" if chord.modifiers.is_empty() => s.settings_query.clear(),
                "Return" if chord.modifiers.is_empty() => {}
                _ => match chord_char(chord) {
                    Some(c) => s.settings_query.push(c),
                    None => return false,
                },
            }
            true
        }
        Focus::Explorer => explorer_key(s, chord),
    }
}

fn explorer_key(s: &mut SimState, chord: &KeyChord) -> bool {
    if !chord.modifiers.is_empty() {
        return false;
    }
    let items = s.explorer_items();
    if items.is_empty() {
        return false;
    }
    let current = s
        .selection
        .as_ref()
        .and_then(|sel| items.iter().position(|i| i == sel));
    match chord.key.as_str() {
        "Down" => {
            let next = current.map_or(0, |i| (i + 1).min(items.len() - 1));
            s.selection = Some(items[next].clone());
        }
        "Up" => {
            let next = current.map_or(0, |i| i.saturating_sub(1));
            s.selection = Some(items[next].clone());
        }
        "Return" => {
            let Some(i) = current else {
                return false;
            };
            if s.open_editor(&items[i]) {
                s.focus = Focus::Editor;
            }
        }
        _ => return false,
    }
    true
}

fn editor_key(s: &mut SimState, chord: &KeyChord) -> bool {
    let rows = Layout::of(s).buffer_rows();
    let Some(tab) = s.active_mut() else {
        return false;
    };
    let handled = if chord.modifiers.is_empty() {
        match chord.key.as_str() {
            "Return" => {
                split_line(tab);
                true
            }
            "BackSpace" => {
                backspace(tab);
                true
            }
            "Delete" => {
                delete(tab);
                true
            }
            "Tab" => {
                insert(tab, TAB_SPACES);
                true
            }
            "Escape" => true,
            k => {
                move_cursor(tab, k, rows).is_some() || {
                    match chord_char(chord) {
                        Some(c) => {
                            insert(tab, &c.to_string());
                            true
                        }
                        None => false,
                    }
                }
            }
        }
    } else {
        match chord_char(chord) {
            Some(c) => {
                insert(tab, &c.to_string());
                true
            }
            None => false,
        }
    };
    if handled {
        reveal_cursor(tab, rows);
    }
    handled
}

fn move_cursor(tab: &mut EditorTab, key: &str, rows: usize) -> Option<()> {
    let last = tab.lines.len() - 1;
    let CursorPos { line, col } = tab.cursor;
    let (line, col) = match key {
        "Left" if col > 0 => (line, col - 1),
        "Left" if line > 0 => (line - 1, line_len(tab, line - 1)),
        "Left" => (line, col),
        "Right" if col < line_len(tab, line) => (line, col + 1),
        "Right" if line < last => (line + 1, 0),
        "Right" => (line, col),
        "Up" => (line.saturating_sub(1), col),
        "Down" => ((line + 1).min(last), col),
        "Home" => (line, 0),
        "End" => (line, line_len(tab, line)),
        "Page_Up" => (line.saturating_sub(PAGE_LINES.min(rows.max(1))), col),
        "Page_Down" => ((line + PAGE_LINES.min(rows.max(1))).min(last), col),
        _ => return None,
    };
    tab.cursor = CursorPos {
        line,
        col: col.min(line_len(tab, line)),
    };
    Some(())
}

fn line_len(tab: &EditorTab, line: usize) -> usize {
    tab.lines[line].chars().count()
}

fn byte_index(text: &str, col: usize) -> usize {
    text.char_indices().nth(col).map_or(text.len(), |(i, _)| i)
}

fn insert(tab: &mut EditorTab, text: &str) {
    let CursorPos { line, col } = tab.cursor;
    let at = byte_index(&tab.lines[line], col);
    tab.lines[line].insert_str(at, text);
    tab.cursor.col += text.chars().count();
    tab.dirty = true;
}

fn split_line(tab: &mut EditorTab) {
    let CursorPos { line, col } = tab.cursor;
    let at = byte_index(&tab.lines[line], col);
    let rest = tab.lines[line].split_off(at);
    tab.lines.insert(line + 1, rest);
    tab.cursor = CursorPos {
        line: line + 1,
        col: 0,
    };
    tab.dirty = true;
}

fn backspace(tab: &mut EditorTab) {
    let CursorPos { line, col } = tab.cursor;
    if col > 0 {
        let at = byte_index(&tab.lines[line], col - 1);
        tab.lines[line].remove(at);
        tab.cursor.col -= 1;
    } else if line > 0 {
        let cur = tab.lines.remove(line);
        let prev_len = line_len(tab, line - 1);
        tab.lines[line - 1].push_str(&cur);
        tab.cursor = CursorPos {
            line: line - 1,
            col: prev_len,
        };
    } else {
        return;
    }
    tab.dirty = true;
}

fn delete(tab: &mut EditorTab) {
    let CursorPos { line, col } = tab.cursor;
    if col < line_len(tab, line) {
        let at = byte_index(&tab.lines[line], col);
        tab.lines[line].remove(at);
    } else if line + 1 < tab.lines.len() {
        let next = tab.lines.remove(line + 1);
        tab.lines[line].push_str(&next);
    } else {
        return;
    }
    tab.dirty = true;
}

fn reveal_cursor(tab: &mut EditorTab, rows: usize) {
    let line = tab.cursor.line;
    if line < tab.scroll {
        tab.scroll = line;
    } else if line >= tab.scroll + rows {
        tab.scroll = line + 1 - rows;
    }
}

fn save(s: &mut SimState) -> bool {
    let Some(tab) = s.active() else {
        return false;
    };
    let Some(abs) = paths::workspace_path(&tab.path) else {
        return false;
    };
    if s.is_read_only(&abs) || s.is_dir(&abs) {
        return false;
    }
    let content = tab.content();
    s.put_file(&abs, content);
    if let Some(tab) = s.active_mut() {
        tab.dirty = false;
    }
    s.sync_editors();
    true
}

fn close_active(s: &mut SimState) -> bool {
    let Some(i) = s.active_editor else {
        return false;
    };
    s.editors.remove(i);
    if s.editors.is_empty() {
        s.active_editor = None;
        if s.focus == Focus::Editor {
            s.focus = Focus::Explorer;
        }
    } else {
        s.active_editor = Some(i.min(s.editors.len() - 1));
    }
    true
}

fn submit(s: &mut SimState) {
    let cmd = std::mem::take(&mut s.terminal.input);
    s.exec(&cmd);
}

#[cfg(test)]
mod tests {
    use super::super::tests::config;
    use super::super::{sim_apply, sim_create};
    use super::*;
    use crate::action::parse_command;

    fn editor_state(content: &str) -> SimState {
        let mut s = sim_create(&config(&[("f.txt", content)], Some("f.txt"))).unwrap();
        s.focus = Focus::Editor;
        s
    }

    fn run(s: &SimState, cmd: &str) -> SimState {
        sim_apply(s, &parse_command(cmd).unwrap())
    }

    #[test]
    fn backspace_joins_lines() {
        let s = editor_state("ab\ncd");
        let s = run(&s, "xdotool key Down key BackSpace");
        let tab = s.active().unwrap();
        assert_eq!(tab.lines, vec!["abcd"]);
        assert_eq!(tab.cursor, CursorPos { line: 0, col: 2 });
    }

    #[test]
    fn delete_and_navigation() {
        let s = editor_state("abc\nd");
        let s = run(&s, "xdotool key End key Delete key Home key Delete");
        assert_eq!(s.active().unwrap().lines, vec!["bcd"]);
        let s = run(&s, "xdotool key Left key Right key Right key shift+x");
        assert_eq!(s.active().unwrap().lines, vec!["bcXd"]);
    }

    #[test]
    fn no_auto_indent() {
        let s = editor_state("");
        let s = run(&s, "xdotool type '    if x:' key Return type 'y'");
        assert_eq!(s.active().unwrap().lines, vec!["    if x:", "y"]);
    }

    #[test]
    fn click_places_cursor() {
        let s = editor_state("hello\nworld");
        // buffer starts at x=248, y=16; row 1, col 3
        let s = run(&s, "xdotool mousemove 276 40 click 1");
        assert_eq!(s.active().unwrap().cursor, CursorPos { line: 1, col: 3 });
        // past end of line clamps
        let s = run(&s, "xdotool mousemove 1000 20 click 1");
        assert_eq!(s.active().unwrap().cursor, CursorPos { line: 0, col: 5 });
    }

    #[test]
    fn press_release_is_a_click() {
        let s = sim_create(&config(&[], None)).unwrap();
        let s = run(&s, "xdotool mousemove 600 700 mousedown 1 mouseup 1");
        assert_eq!(s.focus, Focus::Terminal);
        assert!(!s.last_action_ignored);
        let s = run(&s, "xdotool mouseup 1");
        assert!(s.last_action_ignored);
    }

    #[test]
    fn explorer_keyboard_navigation() {
        let s = sim_create(&config(&[("a", "1"), ("b", "2")], None)).unwrap();
        let s = run(&s, "xdotool key Down key Down key Return");
        assert_eq!(s.selection.as_deref(), Some("b"));
        assert_eq!(s.active().unwrap().path, "b");
        assert_eq!(s.focus, Focus::Editor);
    }

    #[test]
    fn scrolling_clamps() {
        let body: Vec<String> = (0..100).map(|i| i.to_string()).collect();
        let s = editor_state(&body.join("\n"));
        let s = run(&s, "xdotool mousemove 600 200 click 5 click 5");
        assert_eq!(s.active().unwrap().scroll, 6);
        let s = run(&s, "xdotool click 4 click 4 click 4");
        assert_eq!(s.active().unwrap().scroll, 0);
    }

    #[test]
    fn sleep_advances_virtual_clock() {
        let s = sim_create(&config(&[], None)).unwrap();
        let s = run(&s, "xdotool sleep 1.5");
        assert_eq!(s.virtual_clock_ms, 1500);
    }
}

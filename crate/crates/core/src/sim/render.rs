//! Deterministic rasterizer for the simulated IDE.

use crate::geometry::BBox;
use crate::raster::{Canvas, Rgb};

use super::layout::{tab_label, Layout, CELL_HEIGHT, CELL_WIDTH};
use super::{Focus, SimState};

const BACKGROUND: Rgb = [30, 30, 30];
const ACTIVITY: Rgb = [51, 51, 51];
const SIDEBAR: Rgb = [37, 37, 38];
const HEADER_INK: Rgb = [187, 187, 187];
const FIELD: Rgb = [60, 60, 60];
const SELECTED: Rgb = [55, 55, 61];
const TAB: Rgb = [45, 45, 45];
const TAB_ACTIVE: Rgb = [30, 30, 30];
const TERMINAL: Rgb = [24, 24, 24];
const INK: Rgb = [212, 212, 212];
const DIM_INK: Rgb = [140, 140, 140];
const FOCUS_RING: Rgb = [0, 122, 204];
const CURSOR: Rgb = [174, 175, 173];
const POINTER: Rgb = [255, 255, 255];

/// Glyphs sit 4 px below the top of their 16 px cell.
const GLYPH_OFFSET: i64 = 4;

pub(super) fn render(s: &SimState) -> Canvas {
    let layout = Layout::of(s);
    let mut c = Canvas::new(s.geometry, BACKGROUND);

    c.fill_rect(layout.activity, ACTIVITY);
    c.fill_rect(layout.explorer, SIDEBAR);
    text_in(&mut c, layout.explorer_header, "EXPLORER", HEADER_INK);

    c.fill_rect(layout.settings, FIELD);
    if s.settings_query.is_empty() {
        text_in(&mut c, layout.settings, "Search settings", DIM_INK);
    } else {
        text_in(&mut c, layout.settings, &s.settings_query, INK);
    }
    if s.focus == Focus::SettingsSearch {
        c.outline(layout.settings, FOCUS_RING);
    }

    for (rel, b) in &layout.items {
        if s.selection.as_deref() == Some(rel.as_str()) {
            c.fill_rect(*b, SELECTED);
        }
        text_in(&mut c, *b, rel, INK);
    }
    if s.focus == Focus::Explorer {
        c.outline(layout.explorer, FOCUS_RING);
    }

    for (i, (tab, b)) in s.editors.iter().zip(&layout.tabs).enumerate() {
        let active = s.active_editor == Some(i);
        c.fill_rect(*b, if active { TAB_ACTIVE } else { TAB });
        let ink = if active { INK } else { DIM_INK };
        text_in(
            &mut c,
            BBox::new(b.x + 4, b.y, b.w - 8, b.h),
            &tab_label(tab),
            ink,
        );
    }

    if let Some(tab) = s.active() {
        let buf = layout.buffer;
        let rows = layout.buffer_rows();
        let cols = (buf.w / CELL_WIDTH).max(0) as usize;
        for (row, line) in tab.lines.iter().skip(tab.scroll).take(rows).enumerate() {
            let y = buf.y as i64 + row as i64 * CELL_HEIGHT as i64 + GLYPH_OFFSET;
            c.text(buf.x as i64, y, line, INK, cols);
        }
        let cur = tab.cursor;
        if cur.line >= tab.scroll && cur.line < tab.scroll + rows {
            let x = buf.x + cur.col as i32 * CELL_WIDTH;
            let y = buf.y + (cur.line - tab.scroll) as i32 * CELL_HEIGHT;
            let color = if s.focus == Focus::Editor {
                CURSOR
            } else {
                DIM_INK
            };
            c.fill_rect(BBox::new(x, y, 2, CELL_HEIGHT), color);
        }
        if s.focus == Focus::Editor {
            c.outline(buf, FOCUS_RING);
        }
    }

    let term = layout.terminal;
    c.fill_rect(term, TERMINAL);
    c.fill_rect(BBox::new(term.x, term.y, term.w, 1), FIELD);
    let history_rows = ((term.h - CELL_HEIGHT) / CELL_HEIGHT).max(0) as usize;
    let cols = (term.w / CELL_WIDTH).max(0) as usize;
    let hist = &s.terminal.history;
    let shown = &hist[hist.len().saturating_sub(history_rows)..];
    for (row, line) in shown.iter().enumerate() {
        let y = term.y as i64 + row as i64 * CELL_HEIGHT as i64 + GLYPH_OFFSET;
        c.text(term.x as i64, y, line, INK, cols);
    }
    let prompt = format!("{}$ {}", prompt_dir(&s.terminal.cwd), s.terminal.input);
    let input = layout.terminal_input;
    c.text(
        input.x as i64,
        input.y as i64 + GLYPH_OFFSET,
        &prompt,
        INK,
        cols,
    );
    if s.focus == Focus::Terminal {
        let x = input.x + prompt.chars().count() as i32 * CELL_WIDTH;
        c.fill_rect(
            BBox::new(x, input.y + 2, CELL_WIDTH, CELL_HEIGHT - 4),
            CURSOR,
        );
        c.outline(term, FOCUS_RING);
    }

    draw_pointer(&mut c, s.pointer);
    c
}

fn prompt_dir(cwd: &str) -> &str {
    super::paths::basename(cwd)
}

fn text_in(c: &mut Canvas, b: BBox, text: &str, ink: Rgb) {
    if b.is_empty() {
        return;
    }
    let cols = ((b.w - 4) / CELL_WIDTH).max(0) as usize;
    c.text(b.x as i64 + 4, b.y as i64 + GLYPH_OFFSET, text, ink, cols);
}

fn draw_pointer(c: &mut Canvas, (x, y): (u32, u32)) {
    let (x, y) = (x as i64, y as i64);
    for d in -3..=3 {
        c.set(x + d, y, POINTER);
        c.set(x, y + d, POINTER);
    }
}

//! Layout boxes shared by the renderer, the DOM and hit-testing.

use crate::geometry::BBox;
use crate::observation::{DomNode, DomTree, Role};

use super::{paths, EditorTab, SimState};

pub const ACTIVITY_WIDTH: i32 = 48;
pub const EXPLORER_WIDTH: i32 = 200;
pub const CELL_WIDTH: i32 = 8;
pub const CELL_HEIGHT: i32 = 16;
pub const TAB_BAR_HEIGHT: i32 = 16;

/// What a click can land on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    SettingsField,
    ExplorerItem(String),
    Tab(usize),
    Editor,
    TerminalPane,
    TerminalInput,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub screen: BBox,
    pub activity: BBox,
    pub explorer: BBox,
    pub explorer_header: BBox,
    pub settings: BBox,
    /// One row per explorer item, in explorer order.
    pub items: Vec<(String, BBox)>,
    pub editor_area: BBox,
    pub tabs: Vec<BBox>,
    /// Text area of the active editor.
    pub buffer: BBox,
    pub terminal: BBox,
    pub terminal_input: BBox,
}

pub fn tab_label(tab: &EditorTab) -> String {
    let name = paths::basename(&tab.path);
    if tab.dirty {
        format!("{name} *")
    } else {
        name.to_string()
    }
}

impl Layout {
    pub fn of(state: &SimState) -> Self {
        let w = state.geometry.width as i32;
        let h = state.geometry.height as i32;
        let side = ACTIVITY_WIDTH + EXPLORER_WIDTH;
        let main_w = (w - side).max(0);
        let term_h = h / 4;
        let editor_h = h - term_h;

        let explorer = BBox::new(ACTIVITY_WIDTH, 0, EXPLORER_WIDTH, h);
        let items = state
            .explorer_items()
            .into_iter()
            .enumerate()
            .map(|(i, rel)| {
                let y = 2 * CELL_HEIGHT + i as i32 * CELL_HEIGHT;
                (
                    rel,
                    BBox::new(ACTIVITY_WIDTH, y, EXPLORER_WIDTH, CELL_HEIGHT),
                )
            })
            .collect();

        let mut x = side;
        let tabs = state
            .editors
            .iter()
            .map(|tab| {
                let width = (tab_label(tab).chars().count() as i32 + 2) * CELL_WIDTH;
                let b = BBox::new(x, 0, width, TAB_BAR_HEIGHT);
                x += width;
                b
            })
            .collect();

        Layout {
            screen: state.geometry.bounds(),
            activity: BBox::new(0, 0, ACTIVITY_WIDTH, h),
            explorer,
            explorer_header: BBox::new(ACTIVITY_WIDTH, 0, EXPLORER_WIDTH, CELL_HEIGHT),
            settings: BBox::new(ACTIVITY_WIDTH, CELL_HEIGHT, EXPLORER_WIDTH, CELL_HEIGHT),
            items,
            editor_area: BBox::new(side, 0, main_w, editor_h),
            tabs,
            buffer: BBox::new(
                side,
                TAB_BAR_HEIGHT,
                main_w,
                (editor_h - TAB_BAR_HEIGHT).max(0),
            ),
            terminal: BBox::new(side, editor_h, main_w, term_h),
            terminal_input: BBox::new(side, h - CELL_HEIGHT, main_w, CELL_HEIGHT.min(term_h)),
        }
    }

    /// Number of text rows visible in the editor buffer (at least one).
    pub fn buffer_rows(&self) -> usize {
        (self.buffer.h / CELL_HEIGHT).max(1) as usize
    }

    /// Interactable targets in DOM pre-order.
    pub fn targets(&self, state: &SimState) -> Vec<(Target, BBox)> {
        let mut out = vec![(Target::SettingsField, self.settings)];
        for (rel, b) in &self.items {
            out.push((Target::ExplorerItem(rel.clone()), *b));
        }
        for (i, b) in self.tabs.iter().enumerate() {
            out.push((Target::Tab(i), *b));
        }
        if state.active().is_some() {
            out.push((Target::Editor, self.buffer));
        }
        out.push((Target::TerminalPane, self.terminal));
        out.push((Target::TerminalInput, self.terminal_input));
        out
    }

    /// Deepest interactable containing the point. Siblings never overlap, so the
    /// last pre-order match is the deepest one.
    pub fn hit(&self, state: &SimState, x: u32, y: u32) -> Option<Target> {
        let (x, y) = (x as i64, y as i64);
        if !self.screen.contains(x, y) {
            return None;
        }
        self.targets(state)
            .into_iter()
            .rev()
            .find(|(_, b)| b.contains(x, y))
            .map(|(t, _)| t)
    }

    pub fn dom(&self, state: &SimState) -> DomTree {
        let mut explorer = vec![DomNode::new(
            Role::Textfield,
            "settings search",
            self.settings,
            true,
        )];
        for (rel, b) in &self.items {
            explorer.push(DomNode::new(Role::Listitem, rel.clone(), *b, true));
        }

        let mut editor_area: Vec<DomNode> = state
            .editors
            .iter()
            .zip(&self.tabs)
            .map(|(tab, b)| DomNode::new(Role::Tab, tab_label(tab), *b, true))
            .collect();
        if let Some(tab) = state.active() {
            editor_area.push(DomNode::new(
                Role::Editor,
                tab.path.clone(),
                self.buffer,
                true,
            ));
        }

        let root = DomNode::new(Role::Pane, "workbench", self.screen, false).with_children(vec![
            DomNode::new(Role::Pane, "activity bar", self.activity, false),
            DomNode::new(Role::Pane, "explorer", self.explorer, false).with_children(explorer),
            DomNode::new(Role::Pane, "editor area", self.editor_area, false)
                .with_children(editor_area),
            DomNode::new(Role::Pane, "terminal", self.terminal, true).with_children(vec![
                DomNode::new(Role::Textfield, "terminal input", self.terminal_input, true),
            ]),
        ]);
        let mut tree = DomTree::new(root);
        tree.clip_to(state.geometry);
        tree
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::config;
    use super::super::{sim_create, sim_dom};
    use super::*;
    use crate::observation::extract_interactables;

    #[test]
    fn dom_lists_files_tabs_and_editor() {
        let s = sim_create(&config(&[("a.py", ""), ("b.py", "")], Some("a.py"))).unwrap();
        let dom = sim_dom(&s);
        let nodes = dom.nodes_pre_order();
        let count = |r: Role| nodes.iter().filter(|n| n.role == r).count();
        assert_eq!(count(Role::Listitem), 2);
        assert_eq!(count(Role::Tab), 1);
        assert_eq!(count(Role::Editor), 1);
        for n in extract_interactables(&dom) {
            assert!(s.geometry.bounds().contains_box(&n.bbox));
        }
    }

    #[test]
    fn hit_matches_dom_boxes() {
        let s = sim_create(&config(&[("a.py", "")], Some("a.py"))).unwrap();
        let l = Layout::of(&s);
        let (cx, cy) = l.items[0].1.center();
        assert_eq!(
            l.hit(&s, cx as u32, cy as u32),
            Some(Target::ExplorerItem("a.py".into()))
        );
        let (cx, cy) = l.terminal_input.center();
        assert_eq!(l.hit(&s, cx as u32, cy as u32), Some(Target::TerminalInput));
        assert_eq!(l.hit(&s, 10, 10), None);
    }

    #[test]
    fn tiny_screen_still_yields_a_valid_tree() {
        let mut c = config(&[("a", "")], Some("a"));
        c.geometry = crate::geometry::ScreenGeometry::new(10, 10);
        let s = sim_create(&c).unwrap();
        for n in sim_dom(&s).nodes_pre_order() {
            assert!(s.geometry.bounds().contains_box(&n.bbox) || n.bbox.is_empty());
        }
    }
}

//! Observations: screenshots, DOM trees, interactable extraction and Set-of-Marks
//! annotation with a stable element registry.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError};
use crate::digest::sha256_hex;
use crate::geometry::{BBox, ScreenGeometry};
use crate::raster::{Canvas, Rgb};

/// Closed role vocabulary for DOM nodes. Unrecognized roles decode as `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Button,
    Textfield,
    Editor,
    Tab,
    Listitem,
    Pane,
    Menu,
    Statusbar,
    #[serde(other)]
    Other,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Button => "button",
            Role::Textfield => "textfield",
            Role::Editor => "editor",
            Role::Tab => "tab",
            Role::Listitem => "listitem",
            Role::Pane => "pane",
            Role::Menu => "menu",
            Role::Statusbar => "statusbar",
            Role::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomNode {
    pub role: Role,
    pub name: String,
    pub bbox: BBox,
    pub interactable: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<DomNode>,
}

impl DomNode {
    pub fn new(role: Role, name: impl Into<String>, bbox: BBox, interactable: bool) -> Self {
        Self {
            role,
            name: name.into(),
            bbox,
            interactable,
            children: Vec::new(),
        }
    }

    pub fn with_children(mut self, children: Vec<DomNode>) -> Self {
        self.children = children;
        self
    }

    fn visit_pre_order<'a>(&'a self, f: &mut impl FnMut(&'a DomNode)) {
        f(self);
        for c in &self.children {
            c.visit_pre_order(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomTree {
    pub root: DomNode,
}

impl DomTree {
    pub fn new(root: DomNode) -> Self {
        Self { root }
    }

    pub fn nodes_pre_order(&self) -> Vec<&DomNode> {
        let mut out = Vec::new();
        self.root.visit_pre_order(&mut |n| out.push(n));
        out
    }

    /// Clips every bbox to the screen.
    pub fn clip_to(&mut self, geom: ScreenGeometry) {
        fn walk(n: &mut DomNode, geom: ScreenGeometry) {
            n.bbox = n.bbox.clip_to(geom);
            for c in &mut n.children {
                walk(c, geom);
            }
        }
        walk(&mut self.root, geom);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("DOM trees always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Interactable nodes in pre-order. Non-interactable containers are skipped but
/// their descendants are still visited.
pub fn extract_interactables(dom: &DomTree) -> Vec<&DomNode> {
    let mut out = Vec::new();
    dom.root.visit_pre_order(&mut |n| {
        if n.interactable {
            out.push(n)
        }
    });
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub bbox: BBox,
    pub role: Role,
    pub name: String,
}

/// Element ids `1..=n` in pre-order over on-screen interactable nodes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<RegistryRow>", into = "Vec<RegistryRow>")]
pub struct ElementRegistry {
    entries: BTreeMap<u32, RegistryEntry>,
}

#[derive(Serialize, Deserialize)]
struct RegistryRow {
    id: u32,
    #[serde(flatten)]
    entry: RegistryEntry,
}

impl From<Vec<RegistryRow>> for ElementRegistry {
    fn from(rows: Vec<RegistryRow>) -> Self {
        Self {
            entries: rows.into_iter().map(|r| (r.id, r.entry)).collect(),
        }
    }
}

impl From<ElementRegistry> for Vec<RegistryRow> {
    fn from(r: ElementRegistry) -> Self {
        r.entries
            .into_iter()
            .map(|(id, entry)| RegistryRow { id, entry })
            .collect()
    }
}

impl ElementRegistry {
    pub fn from_entries(entries: Vec<(u32, RegistryEntry)>) -> Self {
        Self {
            entries: entries.into_iter().collect(),
        }
    }

    /// Registry for `dom` on a screen of `geom`: boxes are clipped, and elements
    /// that end up with zero area are dropped before ids are assigned.
    pub fn build(dom: &DomTree, geom: ScreenGeometry) -> Self {
        let entries = extract_interactables(dom)
            .into_iter()
            .filter_map(|n| {
                let bbox = n.bbox.clip_to(geom);
                (!bbox.is_empty()).then(|| RegistryEntry {
                    bbox,
                    role: n.role,
                    name: n.name.clone(),
                })
            })
            .enumerate()
            .map(|(i, e)| (i as u32 + 1, e))
            .collect();
        Self { entries }
    }

    pub fn get(&self, id: u32) -> Option<&RegistryEntry> {
        self.entries.get(&id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &RegistryEntry)> {
        self.entries.iter().map(|(id, e)| (*id, e))
    }
}

/// PNG screenshot with its geometry and a digest of the PNG bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screenshot {
    #[serde(with = "crate::serde_b64")]
    pub png: Vec<u8>,
    pub geometry: ScreenGeometry,
    pub digest: String,
}

impl Screenshot {
    pub fn from_png(png: Vec<u8>, geometry: ScreenGeometry) -> Self {
        let digest = sha256_hex(&png);
        Self {
            png,
            geometry,
            digest,
        }
    }

    pub fn from_canvas(canvas: &Canvas) -> Self {
        Self::from_png(canvas.to_png(), canvas.geometry())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SomAnnotation {
    pub marked: Screenshot,
    pub registry: ElementRegistry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub screenshot: Screenshot,
    pub dom: Option<DomTree>,
    pub som: Option<SomAnnotation>,
    pub captured_at_step: u32,
}

impl Observation {
    /// Digest over the screenshot and, when present, the DOM and marks.
    pub fn digest(&self) -> String {
        let mut b = crate::digest::DigestBuilder::new().str(&self.screenshot.digest);
        if let Some(dom) = &self.dom {
            b = b.str(&dom.to_json());
        }
        if let Some(som) = &self.som {
            b = b.str(&som.marked.digest);
        }
        b.finish()
    }
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("capture failed: {0}")]
    CaptureFailed(String),
}

impl From<BackendError> for CaptureError {
    fn from(e: BackendError) -> Self {
        CaptureError::CaptureFailed(e.to_string())
    }
}

/// Screenshot always; DOM when `want_dom` or `want_som`; marks when `want_som`.
pub fn capture(
    backend: &mut dyn Backend,
    step: u32,
    want_dom: bool,
    want_som: bool,
) -> Result<Observation, CaptureError> {
    let screenshot = backend.screenshot()?;
    let dom = if want_dom || want_som {
        let mut dom = backend.dom()?;
        dom.clip_to(screenshot.geometry);
        Some(dom)
    } else {
        None
    };
    let som = match (&dom, want_som) {
        (Some(dom), true) => {
            let (marked, registry) = annotate_som(&screenshot, dom)
                .map_err(|e| CaptureError::CaptureFailed(e.to_string()))?;
            Some(SomAnnotation { marked, registry })
        }
        _ => None,
    };
    Ok(Observation {
        screenshot,
        dom,
        som,
        captured_at_step: step,
    })
}

const LABEL_HEIGHT: i32 = 10;

/// Deterministic mark color derived from the element id.
pub fn mark_color(id: u32) -> Rgb {
    // FNV-1a over the id bytes, folded into the mid-intensity band.
    let mut h: u32 = 0x811c_9dc5;
    for b in id.to_le_bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    let band = |v: u32| 40 + (v % 176) as u8;
    [band(h), band(h >> 8), band(h >> 16)]
}

fn label_box(id: u32, bbox: BBox) -> BBox {
    let digits = id.to_string().len() as i32;
    BBox::new(bbox.x, bbox.y, digits * 8 + 2, LABEL_HEIGHT)
}

/// Every pixel a mark for `(id, bbox)` may touch: the outline plus the label tab.
pub fn mark_region(id: u32, bbox: BBox, geom: ScreenGeometry) -> BBox {
    bbox.union(&label_box(id, bbox)).clip_to(geom)
}

/// Draws a numbered mark per interactable element and returns the marked image
/// together with the element registry. The input screenshot is not modified; with
/// no interactables the marked image is byte-identical to the input.
pub fn annotate_som(
    screenshot: &Screenshot,
    dom: &DomTree,
) -> Result<(Screenshot, ElementRegistry), crate::raster::CodecError> {
    let registry = ElementRegistry::build(dom, screenshot.geometry);
    if registry.is_empty() {
        return Ok((screenshot.clone(), registry));
    }
    let mut canvas = Canvas::from_png(&screenshot.png)?;
    for (id, entry) in registry.iter() {
        let color = mark_color(id);
        canvas.outline(entry.bbox, color);
        let label = label_box(id, entry.bbox);
        canvas.fill_rect(label, color);
        let ink = if color.iter().map(|c| *c as u32).sum::<u32>() > 380 {
            [0, 0, 0]
        } else {
            [255, 255, 255]
        };
        canvas.text(
            label.x as i64 + 1,
            label.y as i64 + 1,
            &id.to_string(),
            ink,
            usize::MAX,
        );
    }
    Ok((Screenshot::from_canvas(&canvas), registry))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(name: &str, bbox: BBox, interactable: bool) -> DomNode {
        DomNode::new(Role::Button, name, bbox, interactable)
    }

    fn blank(geom: ScreenGeometry) -> Screenshot {
        Screenshot::from_canvas(&Canvas::new(geom, [30, 30, 30]))
    }

    #[test]
    fn container_excluded() {
        let dom = DomTree::new(
            DomNode::new(Role::Pane, "root", BBox::new(0, 0, 100, 100), false).with_children(vec![
                leaf("a", BBox::new(0, 0, 10, 10), true),
                leaf("b", BBox::new(20, 0, 10, 10), true),
            ]),
        );
        let names: Vec<_> = extract_interactables(&dom)
            .iter()
            .map(|n| n.name.as_str())
            .collect();
        assert_eq!(names, ["a", "b"]);
    }

    #[test]
    fn nothing_interactable() {
        let dom = DomTree::new(DomNode::new(Role::Pane, "r", BBox::new(0, 0, 5, 5), false));
        assert!(extract_interactables(&dom).is_empty());
    }

    #[test]
    fn nested_parent_first() {
        let dom = DomTree::new(
            DomNode::new(Role::Pane, "outer", BBox::new(0, 0, 50, 50), true)
                .with_children(vec![leaf("inner", BBox::new(5, 5, 10, 10), true)]),
        );
        let names: Vec<_> = extract_interactables(&dom)
            .iter()
            .map(|n| n.name.as_str())
            .collect();
        assert_eq!(names, ["outer", "inner"]);
    }

    #[test]
    fn annotate_two_elements() {
        let geom = ScreenGeometry::new(120, 80);
        let raw = blank(geom);
        let dom = DomTree::new(
            DomNode::new(Role::Pane, "root", geom.bounds(), false).with_children(vec![
                leaf("a", BBox::new(10, 10, 30, 20), true),
                leaf("b", BBox::new(60, 30, 40, 30), true),
            ]),
        );
        let (marked, reg) = annotate_som(&raw, &dom).unwrap();
        assert_eq!(reg.iter().map(|(id, _)| id).collect::<Vec<_>>(), [1, 2]);
        assert_ne!(marked.digest, raw.digest);
        assert_eq!(marked.geometry, raw.geometry);
        let (again, reg2) = annotate_som(&raw, &dom).unwrap();
        assert_eq!(again.digest, marked.digest);
        assert_eq!(reg2, reg);
    }

    #[test]
    fn annotate_identity_without_interactables() {
        let geom = ScreenGeometry::new(64, 32);
        let raw = blank(geom);
        let dom = DomTree::new(DomNode::new(Role::Pane, "root", geom.bounds(), false));
        let (marked, reg) = annotate_som(&raw, &dom).unwrap();
        assert!(reg.is_empty());
        assert_eq!(marked, raw);
    }

    #[test]
    fn offscreen_elements_dropped() {
        let geom = ScreenGeometry::new(100, 100);
        let dom = DomTree::new(
            DomNode::new(Role::Pane, "root", geom.bounds(), false).with_children(vec![
                leaf("gone", BBox::new(500, 500, 10, 10), true),
                leaf("kept", BBox::new(90, 90, 50, 50), true),
            ]),
        );
        let reg = ElementRegistry::build(&dom, geom);
        assert_eq!(reg.len(), 1);
        let e = reg.get(1).unwrap();
        assert_eq!(e.name, "kept");
        assert_eq!(e.bbox, BBox::new(90, 90, 10, 10));
    }

    #[test]
    fn dom_wire_encoding() {
        let dom = DomTree::new(
            DomNode::new(Role::Pane, "root", BBox::new(0, 0, 10, 10), false)
                .with_children(vec![leaf("ok", BBox::new(1, 2, 3, 4), true)]),
        );
        let json = dom.to_json();
        assert!(json.contains(r#""bbox":[1,2,3,4]"#), "{json}");
        assert!(json.contains(r#""role":"button""#));
        assert_eq!(DomTree::from_json(&json).unwrap(), dom);
        let odd: DomNode = serde_json::from_str(
            r#"{"role":"slider","name":"s","bbox":[0,0,1,1],"interactable":true}"#,
        )
        .unwrap();
        assert_eq!(odd.role, Role::Other);
    }

    #[test]
    fn registry_serializes_as_rows() {
        let reg = ElementRegistry::from_entries(vec![(
            1,
            RegistryEntry {
                bbox: BBox::new(1, 2, 3, 4),
                role: Role::Tab,
                name: "x".into(),
            },
        )]);
        let json = serde_json::to_string(&reg).unwrap();
        assert_eq!(
            json,
            r#"[{"id":1,"bbox":[1,2,3,4],"role":"tab","name":"x"}]"#
        );
        let back: ElementRegistry = serde_json::from_str(&json).unwrap();
        assert_eq!(back, reg);
    }
}

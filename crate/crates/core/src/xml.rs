//! `.bt.xml` reading and canonical writing.
//!
//! Elements: `Root`, `Sequence`, `Fallback`, `Retry`, `Condition`, `Action`.
//! `Root` is a transparent wrapper around exactly one node and is dropped on
//! parse. Everything but `Root` and `Retry` must carry `name`; `Retry` must
//! carry `num_attempts`. Unknown attributes are kept as-is.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

use crate::bt::{BehaviorTree, BtNode, NodeKind, NodePath, TreeSource, DEFAULT_RETRY_NAME, NUM_ATTEMPTS};

pub const ROOT_ELEMENT: &str = "Root";
const DEFAULT_TREE_ID: &str = "bt";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum XmlError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("unknown node kind <{element}> at {path}")]
    UnknownNodeKind { element: String, path: NodePath },
    #[error("arity violation at {path}: {message}")]
    ArityViolation { path: NodePath, message: String },
    #[error("<{element}> at {path} is missing attribute `{attribute}`")]
    MissingAttribute {
        element: String,
        path: NodePath,
        attribute: String,
    },
    #[error("invalid attribute at {path}: {message}")]
    InvalidAttribute { path: NodePath, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Fill in `num_attempts` on Retry elements that omit it instead of
    /// rejecting the document.
    pub default_retry_attempts: Option<u32>,
}

pub fn parse_bt_xml(text: &str) -> Result<BehaviorTree, XmlError> {
    parse_bt_xml_with(text, ParseOptions::default())
}

pub fn parse_bt_xml_with(text: &str, opts: ParseOptions) -> Result<BehaviorTree, XmlError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| XmlError::MalformedXml(e.to_string()))?;
    let top = doc.root_element();
    let mut tree_id = String::from(DEFAULT_TREE_ID);

    let node_el = if top.tag_name().name() == ROOT_ELEMENT {
        if let Some(id) = top.attribute("id") {
            tree_id = id.to_string();
        }
        let mut kids = top.children().filter(|c| c.is_element());
        let first = kids.next().ok_or_else(|| XmlError::ArityViolation {
            path: NodePath::root(),
            message: "<Root> must contain exactly one node".into(),
        })?;
        if kids.next().is_some() {
            return Err(XmlError::ArityViolation {
                path: NodePath::root(),
                message: "<Root> must contain exactly one node".into(),
            });
        }
        first
    } else {
        top
    };

    let root = convert(node_el, &mut NodePath::root(), opts)?;
    Ok(BehaviorTree::new(tree_id, root, TreeSource::Loaded))
}

fn convert(el: roxmltree::Node<'_, '_>, path: &mut NodePath, opts: ParseOptions) -> Result<BtNode, XmlError> {
    let element = el.tag_name().name();
    let kind = NodeKind::from_element(element).ok_or_else(|| XmlError::UnknownNodeKind {
        element: element.to_string(),
        path: path.clone(),
    })?;

    let mut name = None;
    let mut attributes = BTreeMap::new();
    for attr in el.attributes() {
        if attr.name() == "name" {
            name = Some(attr.value().to_string());
        } else {
            attributes.insert(attr.name().to_string(), attr.value().to_string());
        }
    }

    let missing = |attribute: &str| XmlError::MissingAttribute {
        element: element.to_string(),
        path: path.clone(),
        attribute: attribute.to_string(),
    };
    let name = match (kind, name) {
        (_, Some(n)) if !n.trim().is_empty() => n,
        (NodeKind::Retry, None) => DEFAULT_RETRY_NAME.to_string(),
        (_, Some(_)) => {
            return Err(XmlError::InvalidAttribute {
                path: path.clone(),
                message: "name must not be empty".into(),
            })
        }
        (_, None) => return Err(missing("name")),
    };

    if kind == NodeKind::Retry {
        match attributes.get(NUM_ATTEMPTS) {
            None => match opts.default_retry_attempts {
                Some(n) => {
                    attributes.insert(NUM_ATTEMPTS.to_string(), n.to_string());
                }
                None => return Err(missing(NUM_ATTEMPTS)),
            },
            Some(raw) => match raw.trim().parse::<u32>() {
                Ok(n) if n >= 1 => {}
                _ => {
                    return Err(XmlError::InvalidAttribute {
                        path: path.clone(),
                        message: alloc::format!("num_attempts must be an integer ≥ 1, got {raw:?}"),
                    })
                }
            },
        }
    }

    let mut children = Vec::new();
    for (i, child) in el.children().filter(|c| c.is_element()).enumerate() {
        path.push(i);
        children.push(convert(child, path, opts)?);
        path.pop();
    }

    let arity = |message: &str| {
        Err(XmlError::ArityViolation {
            path: path.clone(),
            message: alloc::format!("<{element}> {message}, found {}", children.len()),
        })
    };
    match kind {
        NodeKind::Condition | NodeKind::Action if !children.is_empty() => arity("must not have children")?,
        NodeKind::Sequence | NodeKind::Fallback if children.is_empty() => arity("needs at least one child")?,
        NodeKind::Retry if children.len() != 1 => arity("needs exactly one child")?,
        _ => {}
    }

    Ok(BtNode {
        kind,
        name,
        attributes,
        children,
    })
}

/// Canonical document: two-space indentation, `name` first, then the other
/// attributes sorted by key, self-closing leaves, trailing newline. A
/// non-default tree id is kept as the `id` of `Root`.
pub fn serialize_bt(tree: &BehaviorTree) -> String {
    let id = (tree.tree_id != DEFAULT_TREE_ID).then_some(tree.tree_id.as_str());
    document(&tree.root, id)
}

/// The canonical document for a node with no tree id.
pub fn serialize_node(root: &BtNode) -> String {
    document(root, None)
}

fn document(root: &BtNode, id: Option<&str>) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<Root");
    if let Some(id) = id {
        write_attr(&mut out, "id", id);
    }
    out.push_str(">\n");
    write_node(root, 1, &mut out);
    out.push_str("</Root>\n");
    out
}

fn write_node(node: &BtNode, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    out.push('<');
    out.push_str(node.kind.as_str());
    let skip_name = node.kind == NodeKind::Retry && node.name == DEFAULT_RETRY_NAME;
    if !skip_name {
        write_attr(out, "name", &node.name);
    }
    for (k, v) in &node.attributes {
        if k != "name" {
            write_attr(out, k, v);
        }
    }
    if node.children.is_empty() {
        out.push_str("/>\n");
        return;
    }
    out.push_str(">\n");
    for child in &node.children {
        write_node(child, depth + 1, out);
    }
    for _ in 0..depth {
        out.push_str("  ");
    }
    let _ = writeln!(out, "</{}>", node.kind.as_str());
}

fn write_attr(out: &mut String, key: &str, value: &str) {
    out.push(' ');
    out.push_str(key);
    out.push_str("=\"");
    for c in value.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            // attribute-value normalization would fold these to spaces
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out.push('"');
}

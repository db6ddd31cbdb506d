//! Random behavior trees for property tests.

#![allow(dead_code)]

use moaplan_core::bt::{BehaviorTree, BtNode, NodeKind, TreeSource};
use proptest::collection::{btree_map, vec};
use proptest::prelude::*;

/// Names that exercise escaping: markup characters, quotes, whitespace
/// that attribute normalization would otherwise fold, and non-ASCII.
pub fn arb_name() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => "[a-z][a-z_]{0,10}",
        1 => "[ -~]{1,12}".prop_filter("non-blank", |s| !s.trim().is_empty()),
        1 => "[a-z&<>\"' \t\n\r]{1,8}".prop_filter("non-blank", |s| !s.trim().is_empty()),
        1 => "[a-zäöü日本 ]{1,6}".prop_filter("non-blank", |s| !s.trim().is_empty()),
    ]
}

fn arb_attrs() -> impl Strategy<Value = std::collections::BTreeMap<String, String>> {
    btree_map("[a-mo-z][a-z0-9_]{0,6}", "[ -~\t\n]{0,10}", 0..3)
        .prop_map(|m| m.into_iter().filter(|(k, _)| k != "num_attempts").collect())
}

pub fn arb_leaf() -> impl Strategy<Value = BtNode> {
    (prop::bool::ANY, arb_name(), arb_attrs()).prop_map(|(is_action, name, attributes)| {
        let kind = if is_action {
            NodeKind::Action
        } else {
            NodeKind::Condition
        };
        BtNode {
            kind,
            name,
            attributes,
            children: vec![],
        }
    })
}

/// Valid trees of bounded depth and fan-out.
pub fn arb_node() -> impl Strategy<Value = BtNode> {
    arb_leaf().prop_recursive(4, 24, 4, |inner| {
        prop_oneof![
            (arb_name(), vec(inner.clone(), 1..4), arb_attrs())
                .prop_map(|(n, kids, a)| BtNode::sequence(n, kids).with_children_attrs(a)),
            (arb_name(), vec(inner.clone(), 1..4), arb_attrs())
                .prop_map(|(n, kids, a)| BtNode::fallback(n, kids).with_children_attrs(a)),
            (1u32..6, inner, prop::option::of(arb_name())).prop_map(|(k, kid, name)| {
                let mut r = BtNode::retry(k, kid);
                if let Some(n) = name {
                    r.name = n;
                }
                r
            }),
        ]
    })
}

pub fn arb_tree() -> impl Strategy<Value = BehaviorTree> {
    (arb_node(), prop::option::of("[a-z][a-z0-9-]{0,8}"))
        .prop_map(|(root, id)| BehaviorTree::new(id.unwrap_or_else(|| "bt".into()), root, TreeSource::Loaded))
}

trait WithAttrs {
    fn with_children_attrs(self, a: std::collections::BTreeMap<String, String>) -> Self;
}

impl WithAttrs for BtNode {
    fn with_children_attrs(mut self, a: std::collections::BTreeMap<String, String>) -> Self {
        self.attributes.extend(a);
        self
    }
}

//! Behavior tree data model, validation and traversal.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Attribute key that carries a Retry decorator's attempt budget.
pub const NUM_ATTEMPTS: &str = "num_attempts";

/// Name given to Retry nodes whose document omits one.
pub const DEFAULT_RETRY_NAME: &str = "retry";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Sequence,
    Fallback,
    Retry,
    Condition,
    Action,
}

impl NodeKind {
    pub const ALL: [NodeKind; 5] = [
        NodeKind::Sequence,
        NodeKind::Fallback,
        NodeKind::Retry,
        NodeKind::Condition,
        NodeKind::Action,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Sequence => "Sequence",
            NodeKind::Fallback => "Fallback",
            NodeKind::Retry => "Retry",
            NodeKind::Condition => "Condition",
            NodeKind::Action => "Action",
        }
    }

    pub fn from_element(name: &str) -> Option<Self> {
        NodeKind::ALL.into_iter().find(|k| k.as_str() == name)
    }

    pub fn is_leaf(self) -> bool {
        matches!(self, NodeKind::Condition | NodeKind::Action)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single node of a behavior tree.
///
/// `attributes` never holds `name`; it is kept in its own field so that the
/// canonical attribute order (name first, then sorted keys) falls out of the
/// `BTreeMap` ordering.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BtNode {
    pub kind: NodeKind,
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<BtNode>,
}

impl BtNode {
    pub fn new(kind: NodeKind, name: impl Into<String>) -> Self {
        BtNode {
            kind,
            name: name.into(),
            attributes: BTreeMap::new(),
            children: Vec::new(),
        }
    }

    pub fn action(name: impl Into<String>) -> Self {
        Self::new(NodeKind::Action, name)
    }

    pub fn condition(name: impl Into<String>) -> Self {
        Self::new(NodeKind::Condition, name)
    }

    pub fn sequence(name: impl Into<String>, children: Vec<BtNode>) -> Self {
        Self::new(NodeKind::Sequence, name).with_children(children)
    }

    pub fn fallback(name: impl Into<String>, children: Vec<BtNode>) -> Self {
        Self::new(NodeKind::Fallback, name).with_children(children)
    }

    pub fn retry(num_attempts: u32, child: BtNode) -> Self {
        Self::new(NodeKind::Retry, DEFAULT_RETRY_NAME)
            .with_attr(NUM_ATTEMPTS, num_attempts.to_string())
            .with_children(alloc::vec![child])
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }

    pub fn with_children(mut self, children: Vec<BtNode>) -> Self {
        self.children = children;
        self
    }

    pub fn label(&self) -> NodeLabel<'_> {
        NodeLabel {
            kind: self.kind,
            name: &self.name,
        }
    }

    /// Parsed `num_attempts` of a Retry node. `None` when absent or not a
    /// positive integer.
    pub fn retry_attempts(&self) -> Option<u32> {
        self.attributes
            .get(NUM_ATTEMPTS)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .filter(|&n| n >= 1)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(BtNode::node_count).sum::<usize>()
    }

    /// Preorder walk, yielding each node with its index path from the root.
    pub fn walk<'a>(&'a self, visit: &mut dyn FnMut(&NodePath, &'a BtNode)) {
        fn rec<'a>(node: &'a BtNode, path: &mut NodePath, visit: &mut dyn FnMut(&NodePath, &'a BtNode)) {
            visit(path, node);
            for (i, child) in node.children.iter().enumerate() {
                path.push(i);
                rec(child, path, visit);
                path.pop();
            }
        }
        rec(self, &mut NodePath::root(), visit);
    }

    pub fn get(&self, path: &NodePath) -> Option<&BtNode> {
        path.indices().iter().try_fold(self, |node, &i| node.children.get(i))
    }
}

/// Label used for equality in tree metrics: kind and name, attributes ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeLabel<'a> {
    pub kind: NodeKind,
    pub name: &'a str,
}

impl fmt::Display for NodeLabel<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind, self.name)
    }
}

/// Child-index path from the root; the root itself is the empty path.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct NodePath(Vec<usize>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn push(&mut self, index: usize) {
        self.0.push(index);
    }

    pub fn pop(&mut self) -> Option<usize> {
        self.0.pop()
    }

    pub fn child(&self, index: usize) -> Self {
        let mut p = self.clone();
        p.push(index);
        p
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("/");
        }
        for i in &self.0 {
            write!(f, "/{i}")?;
        }
        Ok(())
    }
}

impl From<NodePath> for String {
    fn from(p: NodePath) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for NodePath {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let rest = s
            .strip_prefix('/')
            .ok_or_else(|| format!("node path must start with '/': {s:?}"))?;
        if rest.is_empty() {
            return Ok(NodePath::root());
        }
        rest.split('/')
            .map(|seg| seg.parse::<usize>().map_err(|_| format!("bad path segment {seg:?}")))
            .collect::<Result<Vec<_>, _>>()
            .map(NodePath)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TreeSource {
    Drafted,
    Final,
    Loaded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorTree {
    pub root: BtNode,
    pub tree_id: String,
    pub source: TreeSource,
}

impl BehaviorTree {
    pub fn new(tree_id: impl Into<String>, root: BtNode, source: TreeSource) -> Self {
        BehaviorTree {
            root,
            tree_id: tree_id.into(),
            source,
        }
    }

    /// Equality of the node structure, ignoring id and provenance.
    pub fn structurally_eq(&self, other: &BehaviorTree) -> bool {
        self.root == other.root
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }

    /// Left-to-right postorder of every node together with its label.
    pub fn postorder(&self) -> Vec<(&BtNode, NodeLabel<'_>)> {
        fn rec<'a>(node: &'a BtNode, out: &mut Vec<(&'a BtNode, NodeLabel<'a>)>) {
            for child in &node.children {
                rec(child, out);
            }
            out.push((node, node.label()));
        }
        let mut out = Vec::with_capacity(self.node_count());
        rec(&self.root, &mut out);
        out
    }

    /// One natural-language rendering per node, in postorder.
    pub fn node_sentences(&self) -> Vec<String> {
        self.postorder()
            .into_iter()
            .map(|(node, _)| node_sentence(node))
            .collect()
    }

    /// Names of every Action leaf, in preorder, duplicates included.
    pub fn action_names(&self) -> Vec<&str> {
        let mut names = Vec::new();
        self.root.walk(&mut |_, n| {
            if n.kind == NodeKind::Action {
                names.push(n.name.as_str());
            }
        });
        names
    }
}

/// `"<kind> node: <name>; <k1>=<v1>; ..."` with attributes in canonical order.
pub fn node_sentence(node: &BtNode) -> String {
    let mut s = format!("{} node: {}", node.kind, node.name);
    for (k, v) in &node.attributes {
        s.push_str("; ");
        s.push_str(k);
        s.push('=');
        s.push_str(v);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub path: NodePath,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }
}

/// Enumerates every invariant violation in the tree. Never fails.
pub fn validate(tree: &BehaviorTree) -> ValidationReport {
    let mut issues = Vec::new();
    tree.root.walk(&mut |path, node| check_node(path, node, &mut issues));
    let ok = !issues.iter().any(|i| i.severity == Severity::Error);
    ValidationReport { ok, issues }
}

fn check_node(path: &NodePath, node: &BtNode, issues: &mut Vec<ValidationIssue>) {
    let mut report = |severity, message: String| {
        issues.push(ValidationIssue {
            path: path.clone(),
            severity,
            message,
        })
    };

    if node.name.trim().is_empty() {
        report(Severity::Error, format!("{} node has an empty name", node.kind));
    }
    if node.attributes.contains_key("name") {
        report(
            Severity::Warning,
            "attribute map shadows the reserved key `name`".to_string(),
        );
    }

    let n = node.children.len();
    match node.kind {
        NodeKind::Condition | NodeKind::Action if n > 0 => report(
            Severity::Error,
            format!("{} node must be a leaf but has {n} children", node.kind),
        ),
        NodeKind::Sequence | NodeKind::Fallback if n == 0 => report(
            Severity::Error,
            format!("{} node must have at least one child", node.kind),
        ),
        NodeKind::Retry => {
            if n != 1 {
                report(
                    Severity::Error,
                    format!("Retry node must have exactly one child but has {n}"),
                );
            }
            match node.attributes.get(NUM_ATTEMPTS) {
                None => report(Severity::Error, "Retry node is missing num_attempts".to_string()),
                Some(raw) => match raw.trim().parse::<i64>() {
                    Ok(v) if v >= 1 && v <= i64::from(u32::MAX) => {}
                    Ok(_) => report(Severity::Error, "num_attempts must be ≥ 1".to_string()),
                    Err(_) => report(Severity::Error, format!("num_attempts {raw:?} is not an integer")),
                },
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample() -> BehaviorTree {
        BehaviorTree::new(
            "t",
            BtNode::retry(3, BtNode::sequence("s", vec![BtNode::action("A"), BtNode::action("B")])),
            TreeSource::Loaded,
        )
    }

    #[test]
    fn postorder_visits_children_before_parent() {
        let tree = sample();
        let labels: Vec<_> = tree.postorder().into_iter().map(|(_, l)| l.name).collect();
        assert_eq!(labels, ["A", "B", "s", "retry"]);
    }

    #[test]
    fn single_leaf_counts_one() {
        let tree = BehaviorTree::new("t", BtNode::action("wait"), TreeSource::Loaded);
        assert_eq!(tree.node_count(), 1);
        assert_eq!(tree.postorder().len(), 1);
    }

    #[test]
    fn sequence_of_two_counts_three() {
        let tree = BehaviorTree::new(
            "t",
            BtNode::sequence("root", vec![BtNode::action("A"), BtNode::action("B")]),
            TreeSource::Loaded,
        );
        assert_eq!(tree.node_count(), 3);
    }

    #[test]
    fn sentence_template() {
        let n = BtNode::action("insert strawberry").with_attr("count", "2");
        assert_eq!(node_sentence(&n), "Action node: insert strawberry; count=2");
        let s = BtNode::sequence("prepare", vec![BtNode::action("x")]);
        assert_eq!(node_sentence(&s), "Sequence node: prepare");
        assert_eq!(sample().node_sentences().len(), sample().node_count());
    }

    #[test]
    fn valid_tree_has_no_issues() {
        let report = sample().validate();
        assert!(report.ok);
        assert!(report.issues.is_empty());
    }

    #[test]
    fn empty_sequence_is_flagged_at_its_path() {
        let tree = BehaviorTree::new(
            "t",
            BtNode::sequence("root", vec![BtNode::action("a"), BtNode::sequence("empty", vec![])]),
            TreeSource::Loaded,
        );
        let report = tree.validate();
        assert!(!report.ok);
        let issue = report.errors().next().unwrap();
        assert_eq!(issue.path.to_string(), "/1");
    }

    #[test]
    fn zero_attempts_is_an_error() {
        let mut root = BtNode::retry(1, BtNode::action("a"));
        root.attributes.insert(NUM_ATTEMPTS.into(), "0".into());
        let report = BehaviorTree::new("t", root, TreeSource::Loaded).validate();
        assert!(!report.ok);
        assert_eq!(report.issues[0].message, "num_attempts must be ≥ 1");
    }

    #[test]
    fn leaf_with_children_and_bad_retry_arity() {
        let root = BtNode::sequence(
            "root",
            vec![
                BtNode::action("a").with_children(vec![BtNode::action("b")]),
                BtNode::new(NodeKind::Retry, "r").with_attr(NUM_ATTEMPTS, "2"),
            ],
        );
        let report = BehaviorTree::new("t", root, TreeSource::Loaded).validate();
        let paths: Vec<_> = report.errors().map(|i| i.path.to_string()).collect();
        assert_eq!(paths, ["/0", "/1"]);
    }

    #[test]
    fn node_path_round_trips_through_text() {
        let p = NodePath::root().child(0).child(12);
        assert_eq!(p.to_string(), "/0/12");
        assert_eq!(NodePath::try_from(p.to_string()).unwrap(), p);
        assert_eq!(NodePath::try_from("/".to_string()).unwrap(), NodePath::root());
        assert!(NodePath::try_from("0/1".to_string()).is_err());
    }

    #[test]
    fn get_follows_paths() {
        let tree = sample();
        let p = NodePath::root().child(0).child(1);
        assert_eq!(tree.root.get(&p).unwrap().name, "B");
        assert!(tree.root.get(&p.child(0)).is_none());
    }
}

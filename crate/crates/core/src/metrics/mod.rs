//! Tree comparison metrics: normalized tree edit distance and mean-max node
//! similarity over sentence embeddings.

mod similarity;
mod ted;

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::{BehaviorTree, BtNode, NodeLabel};
use crate::provider::ProviderError;

pub use similarity::{cosine, mean_max, semantic_similarity, NodeMatch, SimilarityResult};
pub use ted::{normalize, normalized_ted, tree_edit_distance, TedResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("edit costs must be finite and non-negative with a positive maximum: {0}")]
    InvalidCosts(String),
    #[error("cosine of a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedder returned {got} vectors for {expected} texts")]
    EmbeddingCount { expected: usize, got: usize },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Ordered, labeled tree view consumed by the edit-distance routines.
pub trait OrderedTree: Sized {
    type Label<'a>: PartialEq
    where
        Self: 'a;

    fn label(&self) -> Self::Label<'_>;
    fn children(&self) -> &[Self];

    fn size(&self) -> usize {
        1 + self.children().iter().map(OrderedTree::size).sum::<usize>()
    }
}

impl OrderedTree for BtNode {
    type Label<'a> = NodeLabel<'a>;

    fn label(&self) -> NodeLabel<'_> {
        BtNode::label(self)
    }

    fn children(&self) -> &[BtNode] {
        &self.children
    }
}

/// Per-operation edit costs. Relabel is only charged when labels differ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditCosts {
    pub insert: f64,
    pub delete: f64,
    pub relabel: f64,
}

impl EditCosts {
    pub fn new(insert: f64, delete: f64, relabel: f64) -> Result<Self, MetricError> {
        let c = EditCosts {
            insert,
            delete,
            relabel,
        };
        let all = [insert, delete, relabel];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) || c.alpha() <= 0.0 {
            return Err(MetricError::InvalidCosts(alloc::format!(
                "insert={insert}, delete={delete}, relabel={relabel}"
            )));
        }
        Ok(c)
    }

    pub fn unit() -> Self {
        EditCosts {
            insert: 1.0,
            delete: 1.0,
            relabel: 1.0,
        }
    }

    /// Largest single operation cost; the α of the normalization.
    pub fn alpha(&self) -> f64 {
        self.insert.max(self.delete).max(self.relabel)
    }
}

impl Default for EditCosts {
    fn default() -> Self {
        Self::unit()
    }
}

pub fn tree_distance(t1: &BehaviorTree, t2: &BehaviorTree, costs: &EditCosts) -> f64 {
    tree_edit_distance(&t1.root, &t2.root, costs)
}

pub fn normalized_tree_distance(t1: &BehaviorTree, t2: &BehaviorTree, costs: &EditCosts) -> TedResult {
    normalized_ted(&t1.root, &t2.root, costs)
}

/// A plain string-labeled ordered tree, written compactly as `A(B,C(D))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelTree {
    pub label: String,
    pub children: Vec<LabelTree>,
}

impl LabelTree {
    pub fn leaf(label: impl Into<String>) -> Self {
        LabelTree {
            label: label.into(),
            children: Vec::new(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<LabelTree>) -> Self {
        LabelTree {
            label: label.into(),
            children,
        }
    }

    /// Parses the compact form. Labels are runs of anything but `(),` and
    /// whitespace.
    pub fn parse(text: &str) -> Option<Self> {
        fn tree(s: &[u8], pos: &mut usize) -> Option<LabelTree> {
            skip_ws(s, pos);
            let start = *pos;
            while *pos < s.len() && !matches!(s[*pos], b'(' | b')' | b',') && !s[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if start == *pos {
                return None;
            }
            let label = core::str::from_utf8(&s[start..*pos]).ok()?.to_string();
            let mut children = Vec::new();
            skip_ws(s, pos);
            if s.get(*pos) == Some(&b'(') {
                *pos += 1;
                loop {
                    children.push(tree(s, pos)?);
                    skip_ws(s, pos);
                    match s.get(*pos)? {
                        b',' => *pos += 1,
                        b')' => {
                            *pos += 1;
                            break;
                        }
                        _ => return None,
                    }
                }
            }
            Some(LabelTree { label, children })
        }
        fn skip_ws(s: &[u8], pos: &mut usize) {
            while *pos < s.len() && s[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
        }

        let bytes = text.as_bytes();
        let mut pos = 0;
        let t = tree(bytes, &mut pos)?;
        skip_ws(bytes, &mut pos);
        (pos == bytes.len()).then_some(t)
    }
}

impl fmt::Display for LabelTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)?;
        if !self.children.is_empty() {
            f.write_str("(")?;
            for (i, c) in self.children.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl OrderedTree for LabelTree {
    type Label<'a> = &'a str;

    fn label(&self) -> &str {
        &self.label
    }

    fn children(&self) -> &[LabelTree] {
        &self.children
    }
}

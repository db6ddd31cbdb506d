//! Metric reports shared by the CLI and the service.

use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context};
use moaplan_core::bt::BehaviorTree;
use moaplan_core::embed::HashedBagOfWords;
use moaplan_core::metrics::{normalized_tree_distance, semantic_similarity, EditCosts, SimilarityResult, TedResult};
use moaplan_core::provider::EmbeddingProvider;
use moaplan_core::xml::parse_bt_xml;
use serde::{Deserialize, Serialize};

use crate::providers::SharedEmbed;

pub fn load_tree(path: &Path) -> anyhow::Result<BehaviorTree> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_tree(&text).with_context(|| format!("in {}", path.display()))
}

/// Strict parse plus validation.
pub fn parse_tree(text: &str) -> anyhow::Result<BehaviorTree> {
    let tree = parse_bt_xml(text)?;
    let report = tree.validate();
    if !report.ok {
        let msgs: Vec<String> = report.errors().map(|i| format!("{}: {}", i.path, i.message)).collect();
        bail!("invalid tree: {}", msgs.join("; "));
    }
    Ok(tree)
}

/// `insert,delete,relabel`.
pub fn parse_costs(s: &str) -> anyhow::Result<EditCosts> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("costs {s:?} must be three numbers"))?;
    let [i, d, r] = parts[..] else {
        bail!("costs {s:?} must be insert,delete,relabel");
    };
    Ok(EditCosts::new(i, d, r)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TedReport {
    pub a: String,
    pub b: String,
    pub costs: EditCosts,
    #[serde(flatten)]
    pub result: TedResult,
}

pub fn ted_report(a: &BehaviorTree, b: &BehaviorTree, costs: &EditCosts) -> TedReport {
    TedReport {
        a: a.tree_id.clone(),
        b: b.tree_id.clone(),
        costs: *costs,
        result: normalized_tree_distance(a, b, costs),
    }
}

/// Which embedder scores node sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderName {
    /// The deterministic offline embedder.
    #[default]
    Hashed,
    /// Whatever `--provider` selects.
    Provider,
}

impl FromStr for EmbedderName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hashed" => Ok(EmbedderName::Hashed),
            "provider" => Ok(EmbedderName::Provider),
            _ => Err(format!("unknown embedder {s:?}; use hashed or provider")),
        }
    }
}

pub enum Embedder {
    Hashed(HashedBagOfWords),
    Provider(SharedEmbed),
}

impl Embedder {
    pub fn name(&self) -> EmbedderName {
        match self {
            Embedder::Hashed(_) => EmbedderName::Hashed,
            Embedder::Provider(_) => EmbedderName::Provider,
        }
    }

    fn as_dyn(&self) -> &dyn EmbeddingProvider {
        match self {
            Embedder::Hashed(h) => h,
            Embedder::Provider(p) => &**p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub embedder: EmbedderName,
    #[serde(flatten)]
    pub result: SimilarityResult,
}

pub fn similarity_report(
    source: &BehaviorTree,
    target: &BehaviorTree,
    embedder: &Embedder,
) -> anyhow::Result<SimilarityReport> {
    Ok(SimilarityReport {
        embedder: embedder.name(),
        result: semantic_similarity(source, target, embedder.as_dyn())?,
    })
}

/// Both metrics, with similarity in each direction since it is asymmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub ted: TedReport,
    pub similarity_a_to_b: SimilarityReport,
    pub similarity_b_to_a: SimilarityReport,
}

pub fn compare_report(
    a: &BehaviorTree,
    b: &BehaviorTree,
    costs: &EditCosts,
    embedder: &Embedder,
) -> anyhow::Result<CompareReport> {
    Ok(CompareReport {
        ted: ted_report(a, b, costs),
        similarity_a_to_b: similarity_report(a, b, embedder)?,
        similarity_b_to_a: similarity_report(b, a, embedder)?,
    })
}

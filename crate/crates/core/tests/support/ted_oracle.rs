//! Exhaustive ordered-forest edit distance, independent of the library's
//! tree types and of its Zhang–Shasha decomposition. Memoizes forest pairs
//! only, so it is exact but exponential; callers keep trees small.

#![allow(dead_code)]

use std::collections::HashMap;

pub const MAX_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tree {
    pub label: String,
    pub kids: Vec<Tree>,
}

impl Tree {
    pub fn size(&self) -> usize {
        1 + self.kids.iter().map(Tree::size).sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Costs {
    pub insert: f64,
    pub delete: f64,
    pub relabel: f64,
}

type Forest = Vec<Tree>;

struct Oracle {
    costs: Costs,
    memo: HashMap<(Forest, Forest), f64>,
}

/// Replaces the rightmost root of a forest by its children.
fn strip(f: &[Tree]) -> Forest {
    let (last, rest) = f.split_last().unwrap();
    let mut out = rest.to_vec();
    out.extend(last.kids.iter().cloned());
    out
}

impl Oracle {
    fn dist(&mut self, f: &[Tree], g: &[Tree]) -> f64 {
        if f.is_empty() && g.is_empty() {
            return 0.0;
        }
        let key = (f.to_vec(), g.to_vec());
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let c = self.costs;
        let v = match (f.last(), g.last()) {
            (Some(_), None) => self.dist(&strip(f), g) + c.delete,
            (None, Some(_)) => self.dist(f, &strip(g)) + c.insert,
            (Some(v), Some(w)) => {
                let del = self.dist(&strip(f), g) + c.delete;
                let ins = self.dist(f, &strip(g)) + c.insert;
                let rel = if v.label == w.label { 0.0 } else { c.relabel };
                let m = self.dist(&f[..f.len() - 1], &g[..g.len() - 1]) + self.dist(&v.kids, &w.kids) + rel;
                del.min(ins).min(m)
            }
            (None, None) => unreachable!(),
        };
        self.memo.insert(key, v);
        v
    }
}

/// Exact edit distance. Panics above [`MAX_NODES`] nodes per tree.
pub fn ted(a: &Tree, b: &Tree, costs: Costs) -> f64 {
    assert!(
        a.size() <= MAX_NODES && b.size() <= MAX_NODES,
        "oracle limited to {MAX_NODES} nodes"
    );
    Oracle {
        costs,
        memo: HashMap::new(),
    }
    .dist(std::slice::from_ref(a), std::slice::from_ref(b))
}

/// The normalization written out directly: 2·d / (α·(n1 + n2) + d).
pub fn normalized(a: &Tree, b: &Tree, costs: Costs) -> f64 {
    let d = ted(a, b, costs);
    if d == 0.0 {
        return 0.0;
    }
    let alpha = costs.insert.max(costs.delete).max(costs.relabel);
    2.0 * d / (alpha * (a.size() + b.size()) as f64 + d)
}

/// Every ordered tree with at most `max_nodes` nodes over `alphabet`.
pub fn all_trees(max_nodes: usize, alphabet: &[&str]) -> Vec<Tree> {
    // forests[n] = all ordered forests with exactly n nodes
    let mut forests: Vec<Vec<Forest>> = vec![vec![vec![]]];
    let mut trees_of: Vec<Vec<Tree>> = vec![vec![]];
    for n in 1..=max_nodes {
        let mut trees = Vec::new();
        for kids in &forests[n - 1] {
            for l in alphabet {
                trees.push(Tree {
                    label: l.to_string(),
                    kids: kids.clone(),
                });
            }
        }
        trees_of.push(trees);
        let mut fs = Vec::new();
        for first in 1..=n {
            for t in &trees_of[first] {
                for rest in &forests[n - first] {
                    let mut f = vec![t.clone()];
                    f.extend(rest.iter().cloned());
                    fs.push(f);
                }
            }
        }
        forests.push(fs);
    }
    trees_of.into_iter().flatten().collect()
}

#[cfg(test)]
mod self_check {
    use super::*;

    fn leaf(l: &str) -> Tree {
        Tree {
            label: l.into(),
            kids: vec![],
        }
    }

    #[test]
    fn counts_match_catalan_times_labels() {
        // ordered trees with n nodes: Catalan(n-1); each node takes 3 labels
        let all = all_trees(4, &["a", "b", "c"]);
        assert_eq!(all.len(), 3 + 9 + 2 * 27 + 5 * 81);
    }

    #[test]
    fn hand_cases() {
        let u = Costs {
            insert: 1.0,
            delete: 1.0,
            relabel: 1.0,
        };
        let ab = Tree {
            label: "a".into(),
            kids: vec![leaf("b")],
        };
        assert_eq!(ted(&leaf("a"), &leaf("a"), u), 0.0);
        assert_eq!(ted(&leaf("a"), &ab, u), 1.0);
        assert_eq!(ted(&leaf("c"), &ab, u), 2.0);
    }
}

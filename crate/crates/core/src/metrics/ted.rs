//! Zhang–Shasha tree edit distance.
//!
//! Runs in O(n1·n2·min(depth1, leaves1)·min(depth2, leaves2)) time and
//! O(n1·n2) space over left-to-right postorder numberings.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{EditCosts, OrderedTree};

/// Postorder flattening of a tree: labels, leftmost-leaf indices, keyroots.
struct Flat<L> {
    labels: Vec<L>,
    leftmost: Vec<usize>,
    keyroots: Vec<usize>,
}

fn flatten<T: OrderedTree>(root: &T) -> Flat<T::Label<'_>> {
    fn rec<'a, T: OrderedTree>(node: &'a T, labels: &mut Vec<T::Label<'a>>, leftmost: &mut Vec<usize>) -> usize {
        let mut first_leaf = None;
        for child in node.children() {
            let lm = rec(child, labels, leftmost);
            first_leaf.get_or_insert(lm);
        }
        let idx = labels.len();
        labels.push(node.label());
        let lm = first_leaf.unwrap_or(idx);
        leftmost.push(lm);
        lm
    }

    let mut labels = Vec::new();
    let mut leftmost = Vec::new();
    rec(root, &mut labels, &mut leftmost);

    // A keyroot is the highest node for its leftmost leaf: the root, or
    // any node that is not the first child of its parent.
    let n = labels.len();
    let mut last_with = vec![usize::MAX; n];
    for (i, &lm) in leftmost.iter().enumerate() {
        last_with[lm] = i;
    }
    let mut keyroots: Vec<usize> = last_with.into_iter().filter(|&i| i != usize::MAX).collect();
    keyroots.sort_unstable();

    Flat {
        labels,
        leftmost,
        keyroots,
    }
}

pub fn tree_edit_distance<T: OrderedTree>(t1: &T, t2: &T, costs: &EditCosts) -> f64 {
    let a = flatten(t1);
    let b = flatten(t2);
    let (n, m) = (a.labels.len(), b.labels.len());

    let mut treedist = vec![0.0f64; n * m];
    let mut forest = vec![0.0f64; (n + 1) * (m + 1)];

    for &i in &a.keyroots {
        for &j in &b.keyroots {
            let li = a.leftmost[i];
            let lj = b.leftmost[j];
            let rows = i - li + 2;
            let cols = j - lj + 2;
            let at = |x: usize, y: usize| x * cols + y;

            forest[at(0, 0)] = 0.0;
            for x in 1..rows {
                forest[at(x, 0)] = forest[at(x - 1, 0)] + costs.delete;
            }
            for y in 1..cols {
                forest[at(0, y)] = forest[at(0, y - 1)] + costs.insert;
            }

            for x in 1..rows {
                let di = li + x - 1;
                for y in 1..cols {
                    let dj = lj + y - 1;
                    let del = forest[at(x - 1, y)] + costs.delete;
                    let ins = forest[at(x, y - 1)] + costs.insert;
                    if a.leftmost[di] == li && b.leftmost[dj] == lj {
                        let rel = if a.labels[di] == b.labels[dj] {
                            0.0
                        } else {
                            costs.relabel
                        };
                        let v = del.min(ins).min(forest[at(x - 1, y - 1)] + rel);
                        forest[at(x, y)] = v;
                        treedist[di * m + dj] = v;
                    } else {
                        let px = a.leftmost[di] - li;
                        let py = b.leftmost[dj] - lj;
                        let v = del.min(ins).min(forest[at(px, py)] + treedist[di * m + dj]);
                        forest[at(x, y)] = v;
                    }
                }
            }
        }
    }

    treedist[(n - 1) * m + (m - 1)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TedResult {
    pub raw: f64,
    pub normalized: f64,
    pub n1: usize,
    pub n2: usize,
    pub alpha: f64,
}

/// `2·TED / (α·(|T1| + |T2|) + TED)` with α the largest single edit cost.
pub fn normalize(raw: f64, n1: usize, n2: usize, alpha: f64) -> f64 {
    if raw == 0.0 {
        return 0.0;
    }
    let v = 2.0 * raw / (alpha * (n1 + n2) as f64 + raw);
    v.clamp(0.0, 1.0)
}

pub fn normalized_ted<T: OrderedTree>(t1: &T, t2: &T, costs: &EditCosts) -> TedResult {
    let raw = tree_edit_distance(t1, t2, costs);
    let n1 = t1.size();
    let n2 = t2.size();
    let alpha = costs.alpha();
    TedResult {
        raw,
        normalized: normalize(raw, n1, n2, alpha),
        n1,
        n2,
        alpha,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::testing::t;

    #[test]
    fn identical_trees_are_zero() {
        let a = t("A(B(C,D),E)");
        assert_eq!(tree_edit_distance(&a, &a, &EditCosts::unit()), 0.0);
    }

    #[test]
    fn hand_cases() {
        let u = EditCosts::unit();
        assert_eq!(tree_edit_distance(&t("A(B,C)"), &t("A(B,D)"), &u), 1.0);
        assert_eq!(tree_edit_distance(&t("A"), &t("A(B)"), &u), 1.0);
        // classic Zhang–Shasha example: f(d(a,c(b)),e) vs f(c(d(a,b)),e)
        assert_eq!(tree_edit_distance(&t("f(d(a,c(b)),e)"), &t("f(c(d(a,b)),e)"), &u), 2.0);
    }

    #[test]
    fn normalized_hand_cases() {
        let u = EditCosts::unit();
        let r = normalized_ted(&t("A(B,C)"), &t("A(B,D)"), &u);
        assert_eq!((r.raw, r.n1, r.n2, r.alpha), (1.0, 3, 3, 1.0));
        assert!((r.normalized - 2.0 / 7.0).abs() < 1e-12);
        let r = normalized_ted(&t("A"), &t("A(B)"), &u);
        assert!((r.normalized - 0.5).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_costs() {
        let c = EditCosts::new(2.0, 0.5, 4.0).unwrap();
        // deleting B costs 0.5, inserting it costs 2
        assert_eq!(tree_edit_distance(&t("A(B)"), &t("A"), &c), 0.5);
        assert_eq!(tree_edit_distance(&t("A"), &t("A(B)"), &c), 2.0);
        // relabel (4) is dearer than delete+insert (2.5)
        assert_eq!(tree_edit_distance(&t("A"), &t("B"), &c), 2.5);
    }
}

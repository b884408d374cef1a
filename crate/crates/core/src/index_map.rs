//! Index maps `I : {1..T} → 2^{1..N}` assigning to each output component the
//! examples it is evaluated on.
//!
//! Indices are zero-based throughout the crate: component `t ∈ 0..T`, example
//! `i ∈ 0..N`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    /// One-vs-all multi-category: every component sees every example.
    MultiCategory,
    /// Multi-task: disjoint contiguous blocks of `n` examples.
    MultiTask,
    /// One-vs-one voting over class pairs.
    OneVsOne,
    Custom,
}

impl IndexKind {
    pub fn label(self) -> &'static str {
        match self {
            IndexKind::MultiCategory => "mc",
            IndexKind::MultiTask => "mt",
            IndexKind::OneVsOne => "1v1",
            IndexKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexMap {
    kind: IndexKind,
    n_examples: usize,
    subsets: Vec<Vec<usize>>,
    labels: Option<Vec<usize>>,
}

impl IndexMap {
    /// Validates a user-supplied map. Subsets are kept in the given order
    /// after sorting and deduplication.
    pub fn custom(n_examples: usize, subsets: Vec<Vec<usize>>) -> Result<Self> {
        let mut subsets = subsets;
        for s in &mut subsets {
            s.sort_unstable();
            s.dedup();
        }
        Self::validated(IndexKind::Custom, n_examples, subsets, None)
    }

    fn validated(
        kind: IndexKind,
        n_examples: usize,
        subsets: Vec<Vec<usize>>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if n_examples == 0 {
            return Err(invalid("N", "must be at least 1"));
        }
        if subsets.is_empty() {
            return Err(invalid("T", "must be at least 1"));
        }
        for s in &subsets {
            if s.is_empty() {
                return Err(Error::EmptySubset);
            }
            if let Some(&bad) = s.iter().find(|&&i| i >= n_examples) {
                return Err(Error::IndexOutOfRange {
                    index: bad,
                    n: n_examples,
                });
            }
        }
        Ok(IndexMap {
            kind,
            n_examples,
            subsets,
            labels,
        })
    }

    pub fn kind(&self) -> IndexKind {
        self.kind
    }

    /// Number of output components `T`.
    pub fn t(&self) -> usize {
        self.subsets.len()
    }

    /// Number of examples `N`.
    pub fn n_examples(&self) -> usize {
        self.n_examples
    }

    /// `n = N / T`, the per-task sample size of the multi-task and
    /// multi-category settings.
    pub fn per_task_n(&self) -> f64 {
        self.n_examples as f64 / self.t() as f64
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn subset(&self, t: usize) -> &[usize] {
        &self.subsets[t]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Total sign support `M = Σ_t |I_t|`.
    pub fn support(&self) -> usize {
        self.subsets.iter().map(Vec::len).sum()
    }

    /// `c_i = #{t : i ∈ I_t}` for every example.
    pub fn multiplicities(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.n_examples];
        for s in &self.subsets {
            for &i in s {
                c[i] += 1;
            }
        }
        c
    }

    /// Smallest `θ` with `Σ_t Σ_{i∈I_t} a_i ≤ θ² Σ_i a_i` for all `a ≥ 0`:
    /// the square root of the largest multiplicity.
    pub fn theta(&self) -> f64 {
        let max = self.multiplicities().into_iter().max().unwrap_or(0);
        (max as f64).sqrt()
    }
}

/// `I_t = {0..N}` for every `t`.
pub fn make_mc(t: usize, n_examples: usize) -> Result<IndexMap> {
    if t == 0 {
        return Err(invalid("T", "must be at least 1"));
    }
    if n_examples == 0 {
        return Err(invalid("N", "must be at least 1"));
    }
    let all: Vec<usize> = (0..n_examples).collect();
    IndexMap::validated(IndexKind::MultiCategory, n_examples, vec![all; t], None)
}

/// Contiguous blocks `I_t = {t·n, …, (t+1)·n − 1}`, `N = nT`.
pub fn make_mt(t: usize, n: usize) -> Result<IndexMap> {
    if t == 0 {
        return Err(invalid("T", "must be at least 1"));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let subsets = (0..t).map(|k| (k * n..(k + 1) * n).collect()).collect();
    IndexMap::validated(IndexKind::MultiTask, n * t, subsets, None)
}

/// One component per unordered class pair `(c1, c2)`, `c1 < c2`, holding the
/// examples labelled `c1` or `c2`. Labels are `1..=C`.
pub fn make_one_vs_one(labels: &[usize]) -> Result<IndexMap> {
    if labels.is_empty() {
        return Err(Error::EmptySample);
    }
    if labels.contains(&0) {
        return Err(invalid("labels", "class labels start at 1"));
    }
    let classes = *labels.iter().max().expect("nonempty");
    if classes < 2 {
        return Err(invalid("labels", "need at least two classes"));
    }
    let mut members = vec![Vec::new(); classes + 1];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    if let Some(empty) = (1..=classes).find(|&c| members[c].is_empty()) {
        return Err(Error::EmptyClass { class: empty });
    }
    let mut subsets = Vec::with_capacity(classes * (classes - 1) / 2);
    for c1 in 1..=classes {
        for c2 in (c1 + 1)..=classes {
            let mut s: Vec<usize> = members[c1].iter().chain(&members[c2]).copied().collect();
            s.sort_unstable();
            subsets.push(s);
        }
    }
    IndexMap::validated(
        IndexKind::OneVsOne,
        labels.len(),
        subsets,
        Some(labels.to_vec()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mc_examples() {
        let m = make_mc(2, 3).unwrap();
        assert_eq!(m.subsets(), &[vec![0, 1, 2], vec![0, 1, 2]]);
        assert_eq!(make_mc(1, 1).unwrap().subsets(), &[vec![0]]);
        assert_eq!(make_mc(4, 2).unwrap().support(), 8);
        assert!(make_mc(0, 2).is_err());
        assert!(make_mc(2, 0).is_err());
    }

    #[test]
    fn mt_examples() {
        assert_eq!(make_mt(2, 2).unwrap().subsets(), &[vec![0, 1], vec![2, 3]]);
        assert_eq!(make_mt(1, 4).unwrap().subsets(), &[vec![0, 1, 2, 3]]);
        let m = make_mt(3, 1).unwrap();
        assert_eq!(m.subsets(), &[vec![0], vec![1], vec![2]]);
        assert_eq!(m.n_examples(), 3);
        assert!(make_mt(0, 1).is_err());
    }

    #[test]
    fn one_vs_one_examples() {
        let m = make_one_vs_one(&[1, 2]).unwrap();
        assert_eq!(m.t(), 1);
        assert_eq!(m.subsets(), &[vec![0, 1]]);

        let m = make_one_vs_one(&[1, 2, 3]).unwrap();
        assert_eq!(m.t(), 3);
        assert!(m.subsets().iter().all(|s| s.len() == 2));
        assert!((m.theta() - 2f64.sqrt()).abs() < 1e-15);
        assert!(m.multiplicities().iter().all(|&c| c == 2));

        assert_eq!(
            make_one_vs_one(&[1, 3]),
            Err(Error::EmptyClass { class: 2 })
        );
        assert!(make_one_vs_one(&[1, 1]).is_err());
    }

    #[test]
    fn theta_examples() {
        assert_eq!(make_mc(4, 5).unwrap().theta(), 2.0);
        assert_eq!(make_mt(7, 3).unwrap().theta(), 1.0);
        let m = make_one_vs_one(&[1, 2, 3, 4, 4, 1]).unwrap();
        assert!((m.theta() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn custom_validation() {
        assert_eq!(
            IndexMap::custom(3, vec![vec![0], vec![]]),
            Err(Error::EmptySubset)
        );
        assert!(matches!(
            IndexMap::custom(3, vec![vec![5]]),
            Err(Error::IndexOutOfRange { index: 5, n: 3 })
        ));
        let m = IndexMap::custom(3, vec![vec![2, 0, 0], vec![1]]).unwrap();
        assert_eq!(m.subset(0), &[0, 2]);
        assert_eq!(m.theta(), 1.0);
    }
}

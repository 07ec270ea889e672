use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the number of sources for exhaustive permutation search.
pub const MAX_SOURCES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermutationScope {
    Frame,
    Utterance,
}

/// Output-to-target pairing: output `s` is scored against target `mapping[s]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationAssignment {
    pub mapping: Vec<usize>,
    pub scope: PermutationScope,
}

impl PermutationAssignment {
    pub fn new(mapping: Vec<usize>, scope: PermutationScope) -> Result<Self> {
        let p = Self { mapping, scope };
        p.validate(p.mapping.len())?;
        Ok(p)
    }

    pub fn identity(n: usize, scope: PermutationScope) -> Self {
        Self {
            mapping: (0..n).collect(),
            scope,
        }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.mapping.len() != n {
            return Err(Error::InvalidPermutation(format!(
                "expected {n} entries, got {}",
                self.mapping.len()
            )));
        }
        let mut seen = vec![false; n];
        for &t in &self.mapping {
            if t >= n || std::mem::replace(&mut seen[t], true) {
                return Err(Error::InvalidPermutation(format!(
                    "{:?} is not a bijection on 0..{n}",
                    self.mapping
                )));
            }
        }
        Ok(())
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..n).collect();
    let mut out = vec![current.clone()];
    while next_permutation(&mut current) {
        out.push(current.clone());
    }
    out
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

pub(crate) fn check_source_count(n: usize) -> Result<()> {
    if n == 0 || n > MAX_SOURCES {
        return Err(Error::TooManySources(n));
    }
    Ok(())
}

/// Permutation minimising `sum_s cost[s][mapping[s]]`; first (lexicographically
/// smallest) minimiser wins ties.
pub(crate) fn argmin_assignment(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let mut best = (f64::INFINITY, Vec::new());
    for perm in permutations(cost.len()) {
        let total: f64 = perm.iter().enumerate().map(|(s, &t)| cost[s][t]).sum();
        if total < best.0 || best.1.is_empty() {
            best = (total, perm);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_enumeration() {
        assert_eq!(
            permutations(3),
            vec![
                vec![0, 1, 2],
                vec![0, 2, 1],
                vec![1, 0, 2],
                vec![1, 2, 0],
                vec![2, 0, 1],
                vec![2, 1, 0]
            ]
        );
        assert_eq!(permutations(1), vec![vec![0]]);
        assert_eq!(permutations(4).len(), 24);
    }

    #[test]
    fn rejects_non_bijections() {
        assert!(PermutationAssignment::new(vec![0, 0], PermutationScope::Frame).is_err());
        assert!(PermutationAssignment::new(vec![0, 2], PermutationScope::Frame).is_err());
        assert!(PermutationAssignment::new(vec![1, 0], PermutationScope::Frame).is_ok());
    }

    #[test]
    fn ties_prefer_identity() {
        let cost = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(argmin_assignment(&cost).1, vec![0, 1]);
    }
}

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A random partition of `0..n` into `V` folds of near-equal size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
}

/// Splits `0..n` into `v` folds completely at random; sizes differ by at most one.
pub fn make_folds(n: usize, v: usize, rng: &RngStream) -> Result<FoldPlan> {
    if v < 2 {
        return Err(Error::InvalidConfig(format!("fold count must be >= 2, got {v}")));
    }
    if n < v {
        return Err(Error::InvalidConfig(format!("cannot split {n} units into {v} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng.rng());
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % v;
    }
    Ok(FoldPlan::from_assignment(assignment, v))
}

impl FoldPlan {
    fn from_assignment(assignment: Vec<usize>, v: usize) -> Self {
        let mut members = vec![Vec::new(); v];
        for (i, &f) in assignment.iter().enumerate() {
            members[f].push(i);
        }
        Self { assignment, members }
    }

    /// Builds a plan from explicit fold labels in `0..v`.
    pub fn from_labels(labels: Vec<usize>, v: usize) -> Result<Self> {
        if v < 2 || labels.iter().any(|&f| f >= v) {
            return Err(Error::InvalidConfig("fold labels out of range".into()));
        }
        let plan = Self::from_assignment(labels, v);
        if plan.members.iter().any(Vec::is_empty) {
            return Err(Error::InvalidConfig("every fold needs at least one unit".into()));
        }
        Ok(plan)
    }

    pub fn n_folds(&self) -> usize {
        self.members.len()
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    /// In-fold indices, ascending.
    pub fn indices(&self, v: usize) -> &[usize] {
        &self.members[v]
    }

    /// Out-of-fold indices, ascending.
    pub fn complement(&self, v: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] != v).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;
    use proptest::prelude::*;

    #[test]
    fn small_examples() {
        let r = RngStream::new(1, Purpose::Folds, 0);
        assert_eq!(make_folds(4, 2, &r).unwrap().sizes(), vec![2, 2]);
        let mut s = make_folds(5, 2, &r).unwrap().sizes();
        s.sort();
        assert_eq!(s, vec![2, 3]);
        assert!(matches!(make_folds(1, 2, &r), Err(Error::InvalidConfig(_))));
        assert!(make_folds(10, 1, &r).is_err());
    }

    #[test]
    fn deterministic() {
        let r = RngStream::new(7, Purpose::Folds, 0);
        assert_eq!(make_folds(1000, 2, &r).unwrap(), make_folds(1000, 2, &r).unwrap());
    }

    proptest! {
        #[test]
        fn partition(n in 2usize..300, v in 2usize..7, seed in any::<u64>()) {
            prop_assume!(n >= v);
            let plan = make_folds(n, v, &RngStream::new(seed, Purpose::Folds, 0)).unwrap();
            let mut seen = vec![0u8; n];
            for f in 0..v {
                for &i in plan.indices(f) {
                    seen[i] += 1;
                    prop_assert_eq!(plan.fold_of(i), f);
                }
                prop_assert_eq!(plan.complement(f).len() + plan.indices(f).len(), n);
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes = plan.sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Upper bound on the number of groups a k-attribute partition uses.
pub const MAX_GROUPS: usize = 5;

/// A random split of the queried vocabulary into disjoint groups, each
/// of which becomes one multi-attribute prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub instance_id: String,
    pub groups: Vec<Vec<String>>,
    pub q: usize,
    pub seed: u64,
}

impl PartitionPlan {
    /// Disjoint, covering, nonempty groups and `1 <= q <= 5`.
    pub fn check(&self, names: &[String]) -> Result<()> {
        if self.q == 0 || self.q > MAX_GROUPS || self.q != self.groups.len() {
            return Err(Error::invalid(format!("bad group count {}", self.q)));
        }
        let mut seen = BTreeSet::new();
        for group in &self.groups {
            if group.is_empty() {
                return Err(Error::invalid("empty group"));
            }
            for name in group {
                if !seen.insert(name.as_str()) {
                    return Err(Error::invalid(format!("`{name}` in two groups")));
                }
            }
        }
        let all: BTreeSet<&str> = names.iter().map(String::as_str).collect();
        if seen != all {
            return Err(Error::invalid("groups do not cover the vocabulary"));
        }
        Ok(())
    }
}

fn check_names(names: &[String]) -> Result<()> {
    if names.is_empty() {
        return Err(Error::invalid("cannot partition an empty vocabulary"));
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(Error::invalid(format!("attribute `{dup}` listed twice")));
    }
    Ok(())
}

/// Draws `q` uniformly from `1..=5` (capped at the vocabulary size),
/// shuffles the names and deals them into `q` contiguous groups whose sizes
/// differ by at most one.
pub fn make_partition(instance_id: &str, names: &[String], seed: u64) -> Result<PartitionPlan> {
    check_names(names)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = rng.gen_range(1..=MAX_GROUPS).min(names.len());
    let mut shuffled = names.to_vec();
    shuffled.shuffle(&mut rng);

    let base = shuffled.len() / q;
    let extra = shuffled.len() % q;
    let mut groups = Vec::with_capacity(q);
    let mut rest = shuffled.as_slice();
    for i in 0..q {
        let size = base + usize::from(i < extra);
        let (head, tail) = rest.split_at(size);
        groups.push(head.to_vec());
        rest = tail;
    }
    Ok(PartitionPlan {
        instance_id: instance_id.to_string(),
        groups,
        q,
        seed,
    })
}

/// Groups of at most `k` attributes, `ceil(n / k)` of them.
///
/// When one group suffices the original order is kept, so the request is
/// identical to the all-attribute prompt.
pub fn make_k_groups(names: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    check_names(names)?;
    if k >= names.len() {
        return Ok(vec![names.to_vec()]);
    }
    let mut shuffled = names.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(shuffled.chunks(k).map(<[String]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("attr{i:02}")).collect()
    }

    #[test]
    fn single_group_when_q_is_one() {
        let names = vocab(51);
        let seed = (0..1000u64)
            .find(|s| make_partition("x", &names, *s).unwrap().q == 1)
            .expect("some seed draws q=1");
        let plan = make_partition("x", &names, seed).unwrap();
        assert_eq!(plan.groups.len(), 1);
        assert_eq!(plan.groups[0].len(), 51);
    }

    #[test]
    fn five_singletons_when_q_equals_n() {
        let names = vocab(5);
        let seed = (0..1000u64)
            .find(|s| make_partition("x", &names, *s).unwrap().q == 5)
            .unwrap();
        let plan = make_partition("x", &names, seed).unwrap();
        assert!(plan.groups.iter().all(|g| g.len() == 1));
        plan.check(&names).unwrap();
    }

    #[test]
    fn fixed_seed_is_byte_identical() {
        let names = vocab(51);
        let a = serde_json::to_string(&make_partition("x", &names, 42).unwrap()).unwrap();
        let b = serde_json::to_string(&make_partition("x", &names, 42).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_and_duplicate_vocab_rejected() {
        assert!(make_partition("x", &[], 1).is_err());
        assert!(make_partition("x", &["a".into(), "a".into()], 1).is_err());
    }

    #[test]
    fn k_groups_shapes() {
        let names = vocab(51);
        let g = make_k_groups(&names, 10, 3).unwrap();
        assert_eq!(g.len(), 6);
        assert!(g.iter().all(|g| g.len() <= 10));
        assert_eq!(make_k_groups(&names, 51, 3).unwrap(), vec![names.clone()]);
        assert_eq!(make_k_groups(&names, 1, 3).unwrap().len(), 51);
        assert!(make_k_groups(&names, 0, 3).is_err());
    }

    proptest! {
        #[test]
        fn always_a_partition(n in 1usize..=51, seed in any::<u64>()) {
            let names = vocab(n);
            let plan = make_partition("x", &names, seed).unwrap();
            prop_assert!(plan.check(&names).is_ok());
            let sizes: Vec<usize> = plan.groups.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn k_groups_cover(n in 1usize..=51, k in 1usize..=60, seed in any::<u64>()) {
            let names = vocab(n);
            let groups = make_k_groups(&names, k, seed).unwrap();
            prop_assert_eq!(groups.len(), n.div_ceil(k));
            let mut all: Vec<String> = groups.concat();
            all.sort();
            prop_assert_eq!(all, names);
        }
    }
}

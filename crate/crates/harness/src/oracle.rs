//! Exact 0/1 knapsack solvers used as the reference for greedy eviction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest instance the exhaustive solver accepts.
pub const EXHAUSTIVE_MAX_ITEMS: usize = 20;
/// Largest capacity the dynamic-programming fallback accepts.
pub const DP_MAX_CAPACITY: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub utility: f64,
    pub cost: u64,
}

impl Item {
    pub fn new(utility: f64, cost: u64) -> Self {
        Self { utility, cost }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// Ascending item indices.
    pub subset: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error(
        "{0} items exceed the exhaustive limit of {EXHAUSTIVE_MAX_ITEMS}; use the DP fallback"
    )]
    TooManyItems(usize),
    #[error("capacity {0} exceeds the DP limit of {DP_MAX_CAPACITY}")]
    CapacityTooLarge(u64),
    #[error("item {0} has a non-finite or negative utility")]
    BadUtility(usize),
}

fn check(items: &[Item]) -> Result<(), OracleError> {
    match items
        .iter()
        .position(|i| !i.utility.is_finite() || i.utility < 0.0)
    {
        Some(i) => Err(OracleError::BadUtility(i)),
        None => Ok(()),
    }
}

fn value_of(items: &[Item], subset: &[usize]) -> f64 {
    subset.iter().map(|&i| items[i].utility).sum()
}

/// Enumerates all subsets. Ties in value go to the lexicographically
/// smallest ascending index list.
pub fn exhaustive(items: &[Item], capacity: u64) -> Result<Solution, OracleError> {
    check(items)?;
    let n = items.len();
    if n > EXHAUSTIVE_MAX_ITEMS {
        return Err(OracleError::TooManyItems(n));
    }
    let mut best = Solution {
        subset: Vec::new(),
        value: 0.0,
    };
    for mask in 1u32..(1u32 << n) {
        let subset: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let cost: u64 = subset.iter().map(|&i| items[i].cost).sum();
        if cost > capacity {
            continue;
        }
        let value = value_of(items, &subset);
        if value > best.value || (value == best.value && subset < best.subset) {
            best = Solution { subset, value };
        }
    }
    Ok(best)
}

/// Classic capacity-indexed DP for integer costs.
pub fn dp(items: &[Item], capacity: u64) -> Result<Solution, OracleError> {
    check(items)?;
    let total: u64 = items.iter().map(|i| i.cost).sum();
    let cap = capacity.min(total);
    if cap > DP_MAX_CAPACITY {
        return Err(OracleError::CapacityTooLarge(capacity));
    }
    let cap = cap as usize;
    let n = items.len();
    let mut best = vec![0.0f64; cap + 1];
    let mut take = vec![false; n * (cap + 1)];
    for (i, item) in items.iter().enumerate() {
        let c = item.cost as usize;
        if c > cap {
            continue;
        }
        for w in (c..=cap).rev() {
            let with = best[w - c] + item.utility;
            if with > best[w] {
                best[w] = with;
                take[i * (cap + 1) + w] = true;
            }
        }
    }
    let mut subset = Vec::new();
    let mut w = cap;
    for i in (0..n).rev() {
        if take[i * (cap + 1) + w] {
            subset.push(i);
            w -= items[i].cost as usize;
        }
    }
    subset.reverse();
    let value = value_of(items, &subset);
    Ok(Solution { subset, value })
}

/// Exhaustive search for small instances, DP otherwise.
pub fn solve(items: &[Item], capacity: u64) -> Result<Solution, OracleError> {
    if items.len() <= EXHAUSTIVE_MAX_ITEMS {
        exhaustive(items, capacity)
    } else {
        dp(items, capacity)
    }
}

// SPDX-License-Identifier: Apache-2.0
//! Quine-McCluskey prime generation and exact cover selection.

use super::{TruthFunction, Value};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeSet;

/// A product term. Bit `i` of both masks refers to minterm bit `i`
/// (bit 0 is the last variable). An implicant covers minterm `m` iff
/// `m & fixed_mask == value_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Implicant {
    pub fixed_mask: u32,
    pub value_bits: u32,
}

impl Implicant {
    pub fn minterm(m: usize, num_vars: usize) -> Self {
        Self { fixed_mask: (1u32 << num_vars) - 1, value_bits: m as u32 }
    }

    pub fn covers(&self, m: usize) -> bool {
        (m as u32) & self.fixed_mask == self.value_bits
    }

    pub fn literal_count(&self) -> u32 {
        self.fixed_mask.count_ones()
    }

    /// Covered minterms in ascending order.
    pub fn covered(&self, num_vars: usize) -> Vec<usize> {
        (0..1usize << num_vars).filter(|&m| self.covers(m)).collect()
    }

    /// Canonical order: lexicographic over the ascending covered-minterm lists.
    pub fn canonical_cmp(&self, other: &Self, num_vars: usize) -> Ordering {
        self.covered(num_vars).cmp(&other.covered(num_vars))
    }

    /// Literals as `(variable index, positive)` in variable order.
    pub fn literals(&self, num_vars: usize) -> Vec<(usize, bool)> {
        (0..num_vars)
            .filter_map(|var| {
                let bit = 1u32 << (num_vars - 1 - var);
                (self.fixed_mask & bit != 0).then_some((var, self.value_bits & bit != 0))
            })
            .collect()
    }

    /// Cube notation in variable order, e.g. `1-0`.
    pub fn pattern(&self, num_vars: usize) -> String {
        (0..num_vars)
            .map(|var| {
                let bit = 1u32 << (num_vars - 1 - var);
                match (self.fixed_mask & bit != 0, self.value_bits & bit != 0) {
                    (false, _) => '-',
                    (true, false) => '0',
                    (true, true) => '1',
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constant {
    Zero,
    One,
}

/// A sum of products. `constant` is set exactly when `terms` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SopExpression {
    pub num_vars: usize,
    pub terms: Vec<Implicant>,
    pub constant: Option<Constant>,
}

impl SopExpression {
    pub fn eval(&self, m: usize) -> bool {
        match self.constant {
            Some(Constant::One) => true,
            Some(Constant::Zero) => false,
            None => self.terms.iter().any(|t| t.covers(m)),
        }
    }

    pub fn literal_count(&self) -> u32 {
        self.terms.iter().map(Implicant::literal_count).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QmOptions {
    /// Above this many uncovered minterms after essential-prime extraction,
    /// cover selection falls back to greedy set cover.
    pub exact_residue_limit: usize,
}

impl Default for QmOptions {
    fn default() -> Self {
        Self { exact_residue_limit: 22 }
    }
}

/// All prime implicants of the function formed by its ones and don't-cares,
/// restricted to primes that cover at least one `One` minterm. Sorted
/// canonically.
pub fn prime_implicants(tf: &TruthFunction) -> Vec<Implicant> {
    let n = tf.num_vars();
    let mut current: BTreeSet<(u32, u32)> = tf
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != Value::Zero)
        .map(|(m, _)| {
            let i = Implicant::minterm(m, n);
            (i.fixed_mask, i.value_bits)
        })
        .collect();
    let mut primes = BTreeSet::new();
    while !current.is_empty() {
        let items: Vec<(u32, u32)> = current.iter().copied().collect();
        let mut combined = vec![false; items.len()];
        let mut next = BTreeSet::new();
        for i in 0..items.len() {
            for j in i + 1..items.len() {
                let (ma, va) = items[i];
                let (mb, vb) = items[j];
                if ma != mb {
                    continue;
                }
                let diff = va ^ vb;
                if diff.count_ones() == 1 {
                    next.insert((ma & !diff, va & !diff));
                    combined[i] = true;
                    combined[j] = true;
                }
            }
        }
        for (k, item) in items.iter().enumerate() {
            if !combined[k] {
                primes.insert(*item);
            }
        }
        current = next;
    }
    let ones = tf.ones();
    let mut out: Vec<Implicant> = primes
        .into_iter()
        .map(|(fixed_mask, value_bits)| Implicant { fixed_mask, value_bits })
        .filter(|p| ones.iter().any(|&m| p.covers(m)))
        .collect();
    out.sort_by(|a, b| a.canonical_cmp(b, n));
    out
}

pub fn quine_mccluskey(tf: &TruthFunction) -> SopExpression {
    quine_mccluskey_with(tf, QmOptions::default())
}

/// Minimal-cardinality prime cover of the `One` minterms; ties go to fewer
/// literals, then to the lexicographically smallest canonical term list.
pub fn quine_mccluskey_with(tf: &TruthFunction, opts: QmOptions) -> SopExpression {
    let n = tf.num_vars();
    let ones = tf.ones();
    if ones.is_empty() {
        return SopExpression { num_vars: n, terms: vec![], constant: Some(Constant::Zero) };
    }
    let primes = prime_implicants(tf);
    if primes.iter().any(|p| p.fixed_mask == 0) {
        return SopExpression { num_vars: n, terms: vec![], constant: Some(Constant::One) };
    }

    // essential primes
    let mut chosen: Vec<usize> = Vec::new();
    for &m in &ones {
        let covering: Vec<usize> = (0..primes.len()).filter(|&i| primes[i].covers(m)).collect();
        if covering.len() == 1 && !chosen.contains(&covering[0]) {
            chosen.push(covering[0]);
        }
    }
    let residue: Vec<usize> = ones
        .iter()
        .copied()
        .filter(|&m| !chosen.iter().any(|&i| primes[i].covers(m)))
        .collect();
    let candidates: Vec<usize> = (0..primes.len())
        .filter(|i| !chosen.contains(i) && residue.iter().any(|&m| primes[*i].covers(m)))
        .collect();

    let extra = if residue.is_empty() {
        vec![]
    } else if residue.len() <= opts.exact_residue_limit {
        let mut search = CoverSearch { primes: &primes, n, fixed: &chosen, best: None };
        search.run(&residue, &candidates, &mut Vec::new());
        search.best.map(|b| b.extra).unwrap_or_default()
    } else {
        greedy_cover(&primes, n, &residue, &candidates)
    };
    chosen.extend(extra);
    let mut terms: Vec<Implicant> = chosen.into_iter().map(|i| primes[i]).collect();
    terms.sort_by(|a, b| a.canonical_cmp(b, n));
    SopExpression { num_vars: n, terms, constant: None }
}

struct Best {
    count: usize,
    literals: u32,
    key: Vec<Vec<usize>>,
    extra: Vec<usize>,
}

/// Exhaustive branch-and-bound over the residual covering problem. Every
/// cover must contain some prime covering the most constrained minterm, so
/// branching over those primes enumerates all covers; only strictly worse
/// branches are pruned, so ties reach the lexicographic comparison.
struct CoverSearch<'a> {
    primes: &'a [Implicant],
    n: usize,
    fixed: &'a [usize],
    best: Option<Best>,
}

impl CoverSearch<'_> {
    fn cost(&self, extra: &[usize]) -> (usize, u32) {
        let lits = self
            .fixed
            .iter()
            .chain(extra)
            .map(|&i| self.primes[i].literal_count())
            .sum();
        (self.fixed.len() + extra.len(), lits)
    }

    fn run(&mut self, uncovered: &[usize], candidates: &[usize], picked: &mut Vec<usize>) {
        let (count, lits) = self.cost(picked);
        if let Some(b) = &self.best {
            // any further pick adds a term and at least one literal
            let more = usize::from(!uncovered.is_empty());
            if (count + more, lits + more as u32) > (b.count, b.literals) {
                return;
            }
        }
        if uncovered.is_empty() {
            let mut all: Vec<usize> = self.fixed.iter().chain(picked.iter()).copied().collect();
            all.sort_by(|a, b| self.primes[*a].canonical_cmp(&self.primes[*b], self.n));
            let key: Vec<Vec<usize>> = all.iter().map(|&i| self.primes[i].covered(self.n)).collect();
            let better = match &self.best {
                None => true,
                Some(b) => (count, lits, &key) < (b.count, b.literals, &b.key),
            };
            if better {
                self.best = Some(Best { count, literals: lits, key, extra: picked.clone() });
            }
            return;
        }
        // branch on the minterm with the fewest covering candidates
        let (_, options) = uncovered
            .iter()
            .map(|&m| {
                let opts: Vec<usize> = candidates
                    .iter()
                    .copied()
                    .filter(|&i| self.primes[i].covers(m) && !picked.contains(&i))
                    .collect();
                (m, opts)
            })
            .min_by_key(|(m, opts)| (opts.len(), *m))
            .expect("uncovered is non-empty");
        for p in options {
            picked.push(p);
            let rest: Vec<usize> = uncovered.iter().copied().filter(|&m| !self.primes[p].covers(m)).collect();
            self.run(&rest, candidates, picked);
            picked.pop();
        }
    }
}

fn greedy_cover(primes: &[Implicant], n: usize, residue: &[usize], candidates: &[usize]) -> Vec<usize> {
    let mut uncovered: BTreeSet<usize> = residue.iter().copied().collect();
    let mut picked = Vec::new();
    while !uncovered.is_empty() {
        let best = candidates
            .iter()
            .copied()
            .filter(|i| !picked.contains(i))
            .max_by(|&a, &b| {
                let ca = uncovered.iter().filter(|&&m| primes[a].covers(m)).count();
                let cb = uncovered.iter().filter(|&&m| primes[b].covers(m)).count();
                ca.cmp(&cb)
                    .then(primes[b].literal_count().cmp(&primes[a].literal_count()))
                    .then(primes[b].canonical_cmp(&primes[a], n))
            })
            .expect("residue minterms are coverable by some prime");
        uncovered.retain(|&m| !primes[best].covers(m));
        picked.push(best);
    }
    picked
}

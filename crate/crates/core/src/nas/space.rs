use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Candidate hop widths `{2^0, …, 2^n} ∪ {C_i}`, sorted and unique.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    n: u32,
    c_in: usize,
    values: Vec<usize>,
}

impl SearchSpace {
    pub fn new(n: u32, c_in: usize) -> Result<Self> {
        if c_in == 0 {
            return Err(Error::input("input dimension must be at least 1"));
        }
        if n >= usize::BITS - 1 {
            return Err(Error::input(format!("2^{n} does not fit a hop width")));
        }
        let mut values: Vec<usize> = (0..=n).map(|p| 1usize << p).collect();
        values.push(c_in);
        values.sort_unstable();
        values.dedup();
        Ok(SearchSpace { n, c_in, values })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, width: usize) -> Option<usize> {
        self.values.binary_search(&width).ok()
    }

    /// `|values|^k`, or `None` when it does not fit in 64 bits.
    pub fn count(&self, k: usize) -> Option<u64> {
        let k = u32::try_from(k).ok()?;
        (self.values.len() as u64).checked_pow(k)
    }

    pub fn contains(&self, arch: &CandidateArch) -> bool {
        arch.dims.iter().all(|&d| self.index_of(d).is_some())
    }

    pub(crate) fn arch_from_actions(&self, actions: &[usize]) -> CandidateArch {
        CandidateArch {
            dims: actions.iter().map(|&a| self.values[a]).collect(),
        }
    }

    pub(crate) fn actions_of(&self, arch: &CandidateArch) -> Option<Vec<usize>> {
        arch.dims.iter().map(|&d| self.index_of(d)).collect()
    }
}

/// One width per hop, hop 1 first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateArch {
    pub dims: Vec<usize>,
}

impl CandidateArch {
    pub fn new(dims: Vec<usize>) -> Self {
        CandidateArch { dims }
    }

    pub fn k(&self) -> usize {
        self.dims.len()
    }

    pub fn extended(&self, width: usize) -> CandidateArch {
        let mut dims = self.dims.clone();
        dims.push(width);
        CandidateArch { dims }
    }
}

impl fmt::Display for CandidateArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(ToString::to_string).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Lazy odometer over every `k`-hop architecture, last hop varying fastest.
#[derive(Clone, Debug)]
pub struct ArchIter<'a> {
    space: &'a SearchSpace,
    next: Option<Vec<usize>>,
}

impl Iterator for ArchIter<'_> {
    type Item = CandidateArch;

    fn next(&mut self) -> Option<CandidateArch> {
        let current = self.next.take()?;
        let arch = self.space.arch_from_actions(&current);
        let mut idx = current;
        let mut pos = idx.len();
        while pos > 0 {
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < self.space.len() {
                self.next = Some(idx);
                break;
            }
            idx[pos] = 0;
        }
        Some(arch)
    }
}

/// Size of the `k`-hop space (`None` if it overflows 64 bits) and a lazy iterator over it.
pub fn enumerate_space(space: &SearchSpace, k: usize) -> Result<(Option<u64>, ArchIter<'_>)> {
    if k == 0 {
        return Err(Error::input("K must be at least 1"));
    }
    Ok((
        space.count(k),
        ArchIter {
            space,
            next: Some(vec![0; k]),
        },
    ))
}

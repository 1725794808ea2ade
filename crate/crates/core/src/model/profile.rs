use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the geometric hop-dimension rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimRule {
    /// Number of leading hops kept at the input width.
    pub l: usize,
    /// Per-hop compression ratio applied beyond hop `l`.
    pub d: f64,
}

/// Output width assigned to each hop, `dims[k-1]` for hop `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopDimProfile {
    c_in: usize,
    dims: Vec<usize>,
    rule: Option<DimRule>,
}

// Wider than any model that fits in memory; guards the float-to-int cast.
const MAX_DIM: f64 = 1e9;

/// Profile with `dims[k] = max(1, round(d^max(k-L, 0) · C_i))`, rounding half away from zero.
pub fn make_profile(c_in: usize, k: usize, l: usize, d: f64) -> Result<HopDimProfile> {
    if c_in == 0 {
        return Err(Error::input("input dimension must be at least 1"));
    }
    if k == 0 {
        return Err(Error::input("furthest hop K must be at least 1"));
    }
    if l > k {
        return Err(Error::input(format!("L = {l} exceeds K = {k}")));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::input(format!("compression ratio d = {d} must be positive")));
    }
    let dims = (1..=k)
        .map(|hop| {
            let exponent = hop.saturating_sub(l) as i32;
            let width = (d.powi(exponent) * c_in as f64).round();
            if width > MAX_DIM {
                return Err(Error::input(format!("hop {hop} width {width} is too large")));
            }
            Ok((width as usize).max(1))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HopDimProfile {
        c_in,
        dims,
        rule: Some(DimRule { l, d }),
    })
}

impl HopDimProfile {
    /// Profile with hand-picked widths, e.g. a searched architecture.
    pub fn explicit(c_in: usize, dims: Vec<usize>) -> Result<Self> {
        if c_in == 0 {
            return Err(Error::input("input dimension must be at least 1"));
        }
        if dims.is_empty() {
            return Err(Error::input("profile needs at least one hop"));
        }
        if dims.contains(&0) {
            return Err(Error::input("hop widths must be positive"));
        }
        Ok(HopDimProfile {
            c_in,
            dims,
            rule: None,
        })
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    /// Furthest hop.
    pub fn k(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rule(&self) -> Option<DimRule> {
        self.rule
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn max_dim(&self) -> usize {
        self.dims.iter().copied().max().unwrap_or(0)
    }

    /// Column offset of each hop's block inside the concatenated representation.
    pub fn offsets(&self) -> Vec<usize> {
        self.dims
            .iter()
            .scan(0, |acc, &d| {
                let start = *acc;
                *acc += d;
                Some(start)
            })
            .collect()
    }

    /// Number of scalar weights in the hop projections.
    pub fn hop_parameter_count(&self) -> usize {
        self.c_in * self.total_dim()
    }
}

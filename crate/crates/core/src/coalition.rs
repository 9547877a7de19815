//! Coalitions of features as bitmasks, power-set enumeration and the Shapley
//! kernel weights.
//!
//! Feature indices are zero-based in code (bit `j` is feature `j + 1` in
//! user-facing output).

use std::fmt;

use crate::error::{Error, Result};

/// Largest feature count for which exact enumeration is allowed.
pub const MAX_FEATURES: usize = 20;

/// A subset of `{0, .., n_features - 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition {
    mask: u32,
    size: u8,
    n_features: u8,
}

fn check_capacity(n_features: usize) -> Result<()> {
    if n_features == 0 || n_features > MAX_FEATURES {
        return Err(Error::Capacity(n_features));
    }
    Ok(())
}

impl Coalition {
    pub fn new(mask: u32, n_features: usize) -> Result<Self> {
        check_capacity(n_features)?;
        if mask >> n_features != 0 {
            return Err(Error::Domain(format!(
                "mask {mask:#b} has bits above feature count {n_features}"
            )));
        }
        Ok(Self {
            mask,
            size: mask.count_ones() as u8,
            n_features: n_features as u8,
        })
    }

    pub fn empty(n_features: usize) -> Result<Self> {
        Self::new(0, n_features)
    }

    pub fn grand(n_features: usize) -> Result<Self> {
        check_capacity(n_features)?;
        Self::new(full_mask(n_features), n_features)
    }

    /// Builds a coalition from zero-based feature indices.
    pub fn from_indices(indices: &[usize], n_features: usize) -> Result<Self> {
        check_capacity(n_features)?;
        let mut mask = 0u32;
        for &j in indices {
            if j >= n_features {
                return Err(Error::Domain(format!(
                    "feature index {j} out of range for {n_features} features"
                )));
            }
            mask |= 1 << j;
        }
        Self::new(mask, n_features)
    }

    #[inline]
    pub fn mask(&self) -> u32 {
        self.mask
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size as usize
    }

    #[inline]
    pub fn n_features(&self) -> usize {
        self.n_features as usize
    }

    #[inline]
    pub fn contains(&self, j: usize) -> bool {
        j < self.n_features() && self.mask & (1 << j) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn is_grand(&self) -> bool {
        self.size() == self.n_features()
    }

    pub fn complement(&self) -> Self {
        let mask = !self.mask & full_mask(self.n_features());
        Self {
            mask,
            size: mask.count_ones() as u8,
            n_features: self.n_features,
        }
    }

    /// `S ∪ {j}`.
    pub fn with(&self, j: usize) -> Self {
        debug_assert!(j < self.n_features());
        let mask = self.mask | (1 << j);
        Self {
            mask,
            size: mask.count_ones() as u8,
            n_features: self.n_features,
        }
    }

    /// Zero-based member indices in ascending order.
    pub fn members(&self) -> Vec<usize> {
        (0..self.n_features())
            .filter(|&j| self.contains(j))
            .collect()
    }

    /// Zero-based indices of the features outside the coalition, ascending.
    pub fn non_members(&self) -> Vec<usize> {
        (0..self.n_features())
            .filter(|&j| !self.contains(j))
            .collect()
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, j) in self.members().into_iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", j + 1)?;
        }
        write!(f, "}}")
    }
}

#[inline]
pub(crate) fn full_mask(n_features: usize) -> u32 {
    if n_features >= 32 {
        u32::MAX
    } else {
        (1u32 << n_features) - 1
    }
}

/// All `2^M` coalitions in ascending mask order: `∅` first, the grand
/// coalition last.
pub fn enumerate_coalitions(n_features: usize) -> Result<Vec<Coalition>> {
    check_capacity(n_features)?;
    Ok((0..=full_mask(n_features))
        .map(|mask| Coalition {
            mask,
            size: mask.count_ones() as u8,
            n_features: n_features as u8,
        })
        .collect())
}

/// `s! (M - s - 1)! / M!`, evaluated as `(1/M) * prod_{i=1..s} i / (M - 1 - s + i)`
/// so no factorial is ever formed.
pub fn shapley_weight(size: usize, n_features: usize) -> Result<f64> {
    check_capacity(n_features)?;
    if size >= n_features {
        return Err(Error::Domain(format!(
            "coalition size {size} must be below feature count {n_features}"
        )));
    }
    let m = n_features as f64;
    let tail = (n_features - 1 - size) as f64;
    let w = (1..=size).fold(1.0 / m, |acc, i| {
        let i = i as f64;
        acc * i / (tail + i)
    });
    Ok(w)
}

/// Weights for every coalition size `0..M`.
pub fn shapley_weights(n_features: usize) -> Result<Vec<f64>> {
    (0..n_features)
        .map(|s| shapley_weight(s, n_features))
        .collect()
}

/// Takes coordinate `j` from `foreground` when `j ∈ S`, else from `background`.
pub fn masked_merge(
    foreground: &[f64],
    background: &[f64],
    coalition: Coalition,
) -> Result<Vec<f64>> {
    let m = coalition.n_features();
    if foreground.len() != m {
        return Err(Error::shape("masked_merge foreground", m, foreground.len()));
    }
    if background.len() != m {
        return Err(Error::shape("masked_merge background", m, background.len()));
    }
    Ok(foreground
        .iter()
        .zip(background)
        .enumerate()
        .map(|(j, (&fg, &bg))| if coalition.contains(j) { fg } else { bg })
        .collect())
}

/// Writes `x_star` into the coalition's coordinates of `out` and the packed
/// completion (one value per non-member, ascending) into the rest.
#[inline]
pub(crate) fn merge_completion(
    out: &mut [f64],
    x_star: &[f64],
    completion: &[f64],
    coalition: Coalition,
) {
    let mut c = 0;
    for (j, slot) in out.iter_mut().enumerate() {
        if coalition.contains(j) {
            *slot = x_star[j];
        } else {
            *slot = completion[c];
            c += 1;
        }
    }
}

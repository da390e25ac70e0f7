//! Labelled finite ground sets and subset bitmasks.
//!
//! Elements are identified by position in the label list; a subset is the
//! `u64` with those bits set. The 62-element cap keeps every subset
//! representable (and leaves headroom so `1 << n` never overflows).

use crate::{Error, Result, GROUND_CAP};

/// A subset of a ground set, one bit per element.
pub type Mask = u64;

/// An ordered, uniquely labelled finite ground set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ground {
    labels: Vec<String>,
}

impl Ground {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() > GROUND_CAP {
            return Err(Error::GroundTooLarge { size: labels.len(), cap: GROUND_CAP });
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        Ok(Ground { labels })
    }

    /// Ground set labelled `"0", "1", ..., "n-1"`.
    pub fn indexed(n: usize) -> Result<Self> {
        Ground::new((0..n).map(|i| i.to_string()))
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn full_mask(&self) -> Mask {
        if self.labels.is_empty() {
            0
        } else {
            (1u64 << self.labels.len()) - 1
        }
    }

    pub fn mask_of_labels<'a, I>(&self, labels: I) -> Result<Mask>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut mask = 0;
        for l in labels {
            mask |= 1 << self.index_of(l)?;
        }
        Ok(mask)
    }

    pub fn labels_of_mask(&self, mask: Mask) -> Vec<String> {
        bits(mask).map(|i| self.labels[i].clone()).collect()
    }

    /// The sub-ground-set of elements in `mask`, in ground order.
    pub fn restrict(&self, mask: Mask) -> Ground {
        Ground { labels: bits(mask).map(|i| self.labels[i].clone()).collect() }
    }

    pub fn same_as(&self, other: &Ground, context: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GroundMismatch(context.to_string()))
        }
    }
}

/// Iterate over the set bits of `mask`, ascending.
pub fn bits(mask: Mask) -> impl Iterator<Item = usize> {
    let mut rest = mask;
    std::iter::from_fn(move || {
        if rest == 0 {
            None
        } else {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(i)
        }
    })
}

/// Pack the bits of `mask` that lie inside `support` into a dense index.
///
/// Bit `k` of the result is bit `support[k]` of `mask` (ascending order).
pub fn compress(mask: Mask, support: Mask) -> usize {
    let mut out = 0usize;
    for (k, i) in bits(support).enumerate() {
        if mask & (1 << i) != 0 {
            out |= 1 << k;
        }
    }
    out
}

/// Reindex `mask` after deleting the elements of `removed` from the ground
/// set: each surviving bit shifts down by the number of removed elements
/// below it. Requires `mask` and `removed` disjoint.
pub fn shrink(mask: Mask, removed: Mask) -> Mask {
    debug_assert_eq!(mask & removed, 0);
    let mut out = 0u64;
    for i in bits(mask) {
        let below = (removed & ((1u64 << i) - 1)).count_ones() as usize;
        out |= 1 << (i - below);
    }
    out
}

/// Inverse of [`compress`]: spread a dense index back onto `support`.
pub fn expand(index: usize, support: Mask) -> Mask {
    let mut out = 0u64;
    for (k, i) in bits(support).enumerate() {
        if index & (1 << k) != 0 {
            out |= 1 << i;
        }
    }
    out
}

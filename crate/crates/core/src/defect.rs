//! Deficiency-index bookkeeping over the extended naturals.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::Add;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A natural number or `∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtNat {
    Finite(u64),
    Infinite,
}

impl ExtNat {
    pub const ZERO: ExtNat = ExtNat::Finite(0);

    pub fn is_zero(self) -> bool {
        self == ExtNat::ZERO
    }

    pub fn is_infinite(self) -> bool {
        self == ExtNat::Infinite
    }

    pub fn finite(self) -> Option<u64> {
        match self {
            ExtNat::Finite(k) => Some(k),
            ExtNat::Infinite => None,
        }
    }

    /// `self - m`, with `∞ - m = ∞`. `None` when the result would be negative.
    pub fn checked_sub(self, m: u64) -> Option<ExtNat> {
        match self {
            ExtNat::Finite(k) => k.checked_sub(m).map(ExtNat::Finite),
            ExtNat::Infinite => Some(ExtNat::Infinite),
        }
    }
}

impl Default for ExtNat {
    fn default() -> Self {
        ExtNat::ZERO
    }
}

impl From<u64> for ExtNat {
    fn from(k: u64) -> Self {
        ExtNat::Finite(k)
    }
}

impl Add for ExtNat {
    type Output = ExtNat;

    /// Saturates to `∞` on overflow; a finite index that large is meaningless
    /// anyway.
    fn add(self, rhs: ExtNat) -> ExtNat {
        match (self, rhs) {
            (ExtNat::Finite(a), ExtNat::Finite(b)) => {
                a.checked_add(b).map_or(ExtNat::Infinite, ExtNat::Finite)
            }
            _ => ExtNat::Infinite,
        }
    }
}

impl Sum for ExtNat {
    fn sum<I: Iterator<Item = ExtNat>>(iter: I) -> ExtNat {
        iter.fold(ExtNat::ZERO, Add::add)
    }
}

impl PartialOrd for ExtNat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtNat {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtNat::Finite(a), ExtNat::Finite(b)) => a.cmp(b),
            (ExtNat::Finite(_), ExtNat::Infinite) => Ordering::Less,
            (ExtNat::Infinite, ExtNat::Finite(_)) => Ordering::Greater,
            (ExtNat::Infinite, ExtNat::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for ExtNat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtNat::Finite(k) => write!(f, "{k}"),
            ExtNat::Infinite => f.write_str("inf"),
        }
    }
}

/// The defect `(n₊ + n₋)/2`, which may be a half-integer for asymmetric pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DefectValue {
    /// Stored doubled so half-integers stay exact.
    Finite { twice: u64 },
    Infinite,
}

impl DefectValue {
    pub fn is_zero(self) -> bool {
        self == DefectValue::Finite { twice: 0 }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            DefectValue::Finite { twice } => twice as f64 / 2.0,
            DefectValue::Infinite => f64::INFINITY,
        }
    }

    /// The integer value when the defect is a whole number.
    pub fn as_integer(self) -> Option<u64> {
        match self {
            DefectValue::Finite { twice } if twice % 2 == 0 => Some(twice / 2),
            _ => None,
        }
    }
}

impl fmt::Display for DefectValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DefectValue::Finite { twice } if twice % 2 == 0 => write!(f, "{}", twice / 2),
            DefectValue::Finite { twice } => write!(f, "{}.5", twice / 2),
            DefectValue::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DefectError {
    #[error("no isometry of dimension {m} exists between deficiency spaces of dimensions ({n_plus}, {n_minus})")]
    DimensionTooLarge {
        m: u64,
        n_plus: ExtNat,
        n_minus: ExtNat,
    },
}

/// The pair of deficiency indices `(n₊, n₋)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct DefectRecord {
    pub n_plus: ExtNat,
    pub n_minus: ExtNat,
}

impl DefectRecord {
    pub const ZERO: DefectRecord = DefectRecord {
        n_plus: ExtNat::ZERO,
        n_minus: ExtNat::ZERO,
    };

    pub const INFINITE: DefectRecord = DefectRecord {
        n_plus: ExtNat::Infinite,
        n_minus: ExtNat::Infinite,
    };

    pub fn new(n_plus: impl Into<ExtNat>, n_minus: impl Into<ExtNat>) -> Self {
        DefectRecord {
            n_plus: n_plus.into(),
            n_minus: n_minus.into(),
        }
    }

    /// Equal indices, as produced by operators commuting with a conjugation.
    pub fn symmetric(k: impl Into<ExtNat>) -> Self {
        let k = k.into();
        DefectRecord {
            n_plus: k,
            n_minus: k,
        }
    }

    pub fn def(&self) -> DefectValue {
        match (self.n_plus, self.n_minus) {
            (ExtNat::Finite(a), ExtNat::Finite(b)) => match a.checked_add(b) {
                Some(twice) => DefectValue::Finite { twice },
                None => DefectValue::Infinite,
            },
            _ => DefectValue::Infinite,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.n_plus.is_zero() && self.n_minus.is_zero()
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_plus == self.n_minus
    }

    /// Indices left after extending by a partial isometry between the
    /// deficiency spaces of dimension `m`.
    pub fn restrict_extension(&self, m: u64) -> Result<DefectRecord, DefectError> {
        let err = || DefectError::DimensionTooLarge {
            m,
            n_plus: self.n_plus,
            n_minus: self.n_minus,
        };
        Ok(DefectRecord {
            n_plus: self.n_plus.checked_sub(m).ok_or_else(err)?,
            n_minus: self.n_minus.checked_sub(m).ok_or_else(err)?,
        })
    }
}

impl Add for DefectRecord {
    type Output = DefectRecord;

    fn add(self, rhs: DefectRecord) -> DefectRecord {
        DefectRecord {
            n_plus: self.n_plus + rhs.n_plus,
            n_minus: self.n_minus + rhs.n_minus,
        }
    }
}

impl Sum for DefectRecord {
    fn sum<I: Iterator<Item = DefectRecord>>(iter: I) -> DefectRecord {
        iter.fold(DefectRecord::ZERO, Add::add)
    }
}

impl fmt::Display for DefectRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.n_plus, self.n_minus)
    }
}

pub fn make_defect(n_plus: ExtNat, n_minus: ExtNat) -> DefectRecord {
    DefectRecord { n_plus, n_minus }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn def_is_half_sum() {
        assert_eq!(DefectRecord::new(1, 1).def().as_integer(), Some(1));
        assert!(DefectRecord::new(0, 0).def().is_zero());
        let r = make_defect(ExtNat::Infinite, ExtNat::Finite(3));
        assert_eq!(r.def(), DefectValue::Infinite);
        assert_eq!(DefectRecord::new(1, 2).def().to_string(), "1.5");
    }

    #[test]
    fn restrict_extension_cases() {
        assert_eq!(
            DefectRecord::new(2, 2).restrict_extension(1).unwrap(),
            DefectRecord::new(1, 1)
        );
        assert_eq!(
            DefectRecord::new(7, 7).restrict_extension(0).unwrap(),
            DefectRecord::new(7, 7)
        );
        assert_eq!(
            DefectRecord::INFINITE.restrict_extension(5).unwrap(),
            DefectRecord::INFINITE
        );
        assert!(matches!(
            DefectRecord::new(3, 1).restrict_extension(2),
            Err(DefectError::DimensionTooLarge { m: 2, .. })
        ));
    }

    fn ext() -> impl Strategy<Value = ExtNat> {
        prop_oneof![
            9 => (0u64..1000).prop_map(ExtNat::Finite),
            1 => Just(ExtNat::Infinite),
        ]
    }

    proptest! {
        #[test]
        fn sum_is_order_independent(mut xs in proptest::collection::vec((ext(), ext()), 0..20), seed in any::<u64>()) {
            let recs: Vec<_> = xs.iter().map(|&(a, b)| make_defect(a, b)).collect();
            let forward: DefectRecord = recs.iter().copied().sum();
            let backward: DefectRecord = recs.iter().rev().copied().sum();
            // deterministic shuffle
            let mut s = seed;
            for i in (1..xs.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                xs.swap(i, (s >> 33) as usize % (i + 1));
            }
            let shuffled: DefectRecord = xs.iter().map(|&(a, b)| make_defect(a, b)).sum();
            prop_assert_eq!(forward, backward);
            prop_assert_eq!(forward, shuffled);
        }

        #[test]
        fn addition_is_associative(a in ext(), b in ext(), c in ext()) {
            prop_assert_eq!((a + b) + c, a + (b + c));
            prop_assert_eq!(a + b, b + a);
        }
    }
}

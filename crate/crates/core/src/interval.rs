//! Half-open time intervals in seconds and normalized interval sets.
//!
//! An [`IntervalSet`] is always sorted, pairwise disjoint and free of touching
//! pairs: `[0,5)` and `[5,9)` are stored as the single interval `[0,9)`.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntervalError {
    #[error("interval bound {0} is not a finite non-negative number of seconds")]
    InvalidBound(f64),
    #[error("interval [{start}, {end}) is empty or inverted")]
    Empty { start: f64, end: f64 },
}

/// `[start, end)` in seconds of original-video time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T = f64> {
    start: T,
    end: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(start: T, end: T) -> Result<Self, IntervalError> {
        for bound in [start, end] {
            if !bound.is_finite() || bound < T::zero() {
                return Err(IntervalError::InvalidBound(bound.as_f64()));
            }
        }
        if start >= end {
            return Err(IntervalError::Empty {
                start: start.as_f64(),
                end: end.as_f64(),
            });
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> T {
        self.start
    }

    pub fn end(&self) -> T {
        self.end
    }

    pub fn length(&self) -> T {
        self.end - self.start
    }

    pub fn contains(&self, t: T) -> bool {
        self.start <= t && t < self.end
    }

    /// Overlapping part of two intervals, `None` when it has zero measure.
    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start < end).then_some(Self { start, end })
    }
}

impl<T: Scalar> fmt::Display for Interval<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Sorted, disjoint, merged union of intervals. May be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet<T = f64> {
    intervals: Vec<Interval<T>>,
}

impl<T: Scalar> Default for IntervalSet<T> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<T: Scalar> IntervalSet<T> {
    pub fn empty() -> Self {
        Self {
            intervals: Vec::new(),
        }
    }

    /// Sorts and merges overlapping or touching intervals.
    pub fn normalize<I>(intervals: I) -> Self
    where
        I: IntoIterator<Item = Interval<T>>,
    {
        let mut sorted: Vec<Interval<T>> = intervals.into_iter().collect();
        sorted.sort_by(|a, b| {
            a.start
                .partial_cmp(&b.start)
                .expect("interval bounds are finite")
                .then(a.end.partial_cmp(&b.end).expect("interval bounds are finite"))
        });
        let mut merged: Vec<Interval<T>> = Vec::with_capacity(sorted.len());
        for next in sorted {
            match merged.last_mut() {
                Some(last) if next.start <= last.end => {
                    if next.end > last.end {
                        last.end = next.end;
                    }
                }
                _ => merged.push(next),
            }
        }
        Self { intervals: merged }
    }

    /// Builds a set from raw `(start, end)` pairs, validating each one.
    pub fn from_pairs(pairs: &[(T, T)]) -> Result<Self, IntervalError> {
        let intervals = pairs
            .iter()
            .map(|&(s, e)| Interval::new(s, e))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::normalize(intervals))
    }

    pub fn intervals(&self) -> &[Interval<T>] {
        &self.intervals
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Interval<T>> {
        self.intervals.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    /// Total covered length in seconds.
    pub fn measure(&self) -> T {
        self.intervals
            .iter()
            .fold(T::zero(), |acc, iv| acc + iv.length())
    }

    /// Point-set intersection, computed by a two-pointer merge.
    pub fn intersection(&self, other: &Self) -> Self {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.intervals.len() && j < other.intervals.len() {
            let a = &self.intervals[i];
            let b = &other.intervals[j];
            if let Some(iv) = a.intersect(b) {
                out.push(iv);
            }
            if a.end < b.end {
                i += 1;
            } else {
                j += 1;
            }
        }
        // Pieces of two normalized sets are already sorted and non-touching.
        Self { intervals: out }
    }

    pub fn intersection_measure(&self, other: &Self) -> T {
        self.intersection(other).measure()
    }

    pub fn union_measure(&self, other: &Self) -> T {
        self.measure() + other.measure() - self.intersection_measure(other)
    }

    /// Restricts the set to `[lo, hi)`.
    pub fn clamp(&self, lo: T, hi: T) -> Self {
        match Interval::new(lo, hi) {
            Ok(window) => self.intersection(&Self {
                intervals: vec![window],
            }),
            Err(_) => Self::empty(),
        }
    }

    pub fn to_pairs(&self) -> Vec<(T, T)> {
        self.intervals.iter().map(|iv| (iv.start, iv.end)).collect()
    }
}

impl<T: Scalar> FromIterator<Interval<T>> for IntervalSet<T> {
    fn from_iter<I: IntoIterator<Item = Interval<T>>>(iter: I) -> Self {
        Self::normalize(iter)
    }
}

impl<'a, T> IntoIterator for &'a IntervalSet<T> {
    type Item = &'a Interval<T>;
    type IntoIter = std::slice::Iter<'a, Interval<T>>;

    fn into_iter(self) -> Self::IntoIter {
        self.intervals.iter()
    }
}

impl<T: Scalar> fmt::Display for IntervalSet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (n, iv) in self.intervals.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "[{},{}]", iv.start, iv.end)?;
        }
        f.write_str("]")
    }
}

/// JSON form: `[[start,end],...]`.
impl<T: Scalar> Serialize for IntervalSet<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[T; 2]> = self.intervals.iter().map(|iv| [iv.start, iv.end]).collect();
        pairs.serialize(serializer)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for IntervalSet<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs: Vec<[T; 2]> = Vec::deserialize(deserializer)?;
        let intervals = pairs
            .into_iter()
            .map(|[s, e]| Interval::new(s, e))
            .collect::<Result<Vec<_>, _>>()
            .map_err(D::Error::custom)?;
        Ok(Self::normalize(intervals))
    }
}

/// Union-based intersection over union, measured in seconds.
///
/// Two empty sets score 0: an empty prediction never counts as a hit.
pub fn interval_iou<T: Scalar>(a: &IntervalSet<T>, b: &IntervalSet<T>) -> T {
    let inter = a.intersection_measure(b);
    let union = a.measure() + b.measure() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).max(T::zero()).min(T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(f64, f64)]) -> IntervalSet {
        IntervalSet::from_pairs(pairs).unwrap()
    }

    #[test]
    fn rejects_degenerate_intervals() {
        assert!(Interval::new(3.0, 3.0).is_err());
        assert!(Interval::new(4.0, 3.0).is_err());
        assert!(Interval::new(-1.0, 3.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
        assert!(Interval::new(0.0_f32, f32::NAN).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(set(&[(0.0, 5.0), (3.0, 8.0)]).to_pairs(), vec![(0.0, 8.0)]);
        assert!(set(&[]).is_empty());
        assert_eq!(
            set(&[(5.0, 6.0), (0.0, 1.0)]).to_pairs(),
            vec![(0.0, 1.0), (5.0, 6.0)]
        );
        // touching pairs describe one moment
        assert_eq!(set(&[(0.0, 5.0), (5.0, 9.0)]).to_pairs(), vec![(0.0, 9.0)]);
        // contained interval does not shrink the outer one
        assert_eq!(set(&[(0.0, 10.0), (2.0, 3.0)]).to_pairs(), vec![(0.0, 10.0)]);
    }

    #[test]
    fn iou_examples() {
        assert_eq!(interval_iou(&set(&[(0.0, 10.0)]), &set(&[(0.0, 10.0)])), 1.0);
        assert_eq!(interval_iou(&set(&[(0.0, 5.0)]), &set(&[(5.0, 10.0)])), 0.0);
        let v = interval_iou(&set(&[(0.0, 4.0), (10.0, 14.0)]), &set(&[(2.0, 12.0)]));
        assert!((v - 4.0 / 14.0).abs() < 1e-12);
        assert_eq!(interval_iou(&set(&[]), &set(&[])), 0.0);
        assert_eq!(interval_iou(&set(&[]), &set(&[(1.0, 2.0)])), 0.0);
    }

    #[test]
    fn iou_is_generic_over_f32() {
        let a = IntervalSet::<f32>::from_pairs(&[(0.0, 4.0), (10.0, 14.0)]).unwrap();
        let b = IntervalSet::<f32>::from_pairs(&[(2.0, 12.0)]).unwrap();
        assert!((interval_iou(&a, &b) - 4.0 / 14.0).abs() < 1e-6);
    }

    #[test]
    fn clamp_and_intersection() {
        let s = set(&[(0.0, 4.0), (10.0, 14.0)]);
        assert_eq!(s.clamp(2.0, 12.0).to_pairs(), vec![(2.0, 4.0), (10.0, 12.0)]);
        assert!(s.clamp(5.0, 9.0).is_empty());
        assert!(s.clamp(9.0, 9.0).is_empty());
    }

    #[test]
    fn json_shape() {
        let s = set(&[(12.5, 30.0), (40.0, 50.0)]);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[[12.5,30.0],[40.0,50.0]]");
        let back: IntervalSet = serde_json::from_str("[[40,50],[12.5,30]]").unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<IntervalSet>("[[5,5]]").is_err());
    }
}

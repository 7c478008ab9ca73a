//! Half-open numeric intervals and per-attribute path constraints.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::{AttributeSpec, Test};

/// The set `lo < x <= hi`. Either end may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const EVERYTHING: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo < self.hi)
    }

    /// Some value inside the interval, preferring round numbers near the
    /// middle. `None` when empty.
    pub fn sample_point(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        Some(match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => {
                let mid = self.lo + (self.hi - self.lo) / 2.0;
                if mid > self.lo {
                    mid
                } else {
                    self.hi
                }
            }
            (true, false) => self.lo + 1.0,
            (false, true) => self.hi,
            (false, false) => 0.0,
        })
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (false, false) => f.write_str("(-inf, inf)"),
            (false, true) => write!(f, "(-inf, {}]", self.hi),
            (true, false) => write!(f, "({}, inf)", self.lo),
            (true, true) => write!(f, "({}, {}]", self.lo, self.hi),
        }
    }
}

/// What a root-to-node path has established about one attribute.
#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    Missing,
    Range(Interval),
    Levels(Vec<String>),
}

/// Conjunction of constraints accumulated along a path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Region {
    constraints: BTreeMap<String, Constraint>,
}

impl Region {
    pub fn get(&self, attribute: &str) -> Option<&Constraint> {
        self.constraints.get(attribute)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Constraint)> {
        self.constraints.iter()
    }

    /// Values of `spec` still admissible here, as a range for numeric
    /// attributes. `None` when the attribute is known to be missing.
    pub fn range_of(&self, attribute: &str) -> Option<Interval> {
        match self.constraints.get(attribute) {
            None => Some(Interval::EVERYTHING),
            Some(Constraint::Range(iv)) => Some(*iv),
            Some(_) => None,
        }
    }

    /// Admissible levels of a categorical attribute. `None` when missing.
    pub fn levels_of(&self, spec: &AttributeSpec) -> Option<Vec<String>> {
        match self.constraints.get(&spec.name) {
            None => Some(spec.levels.clone()),
            Some(Constraint::Levels(ls)) => Some(ls.clone()),
            Some(_) => None,
        }
    }

    /// Adds `attribute` satisfying `test`. Returns false when the region
    /// becomes empty.
    pub fn restrict(&mut self, spec: &AttributeSpec, test: &Test) -> bool {
        let current = self.constraints.get(&spec.name).cloned();
        let next = match (current, test) {
            (Some(Constraint::Missing), _) => return false,
            (None, Test::Eq(values)) => {
                let levels = if spec.levels.is_empty() {
                    values.clone()
                } else {
                    spec.levels
                        .iter()
                        .filter(|l| values.contains(l))
                        .cloned()
                        .collect()
                };
                Constraint::Levels(levels)
            }
            (Some(Constraint::Levels(ls)), Test::Eq(values)) => {
                Constraint::Levels(ls.into_iter().filter(|l| values.contains(l)).collect())
            }
            (current, numeric) => {
                let Some(iv) = numeric.interval() else {
                    return false;
                };
                let base = match current {
                    Some(Constraint::Range(r)) => r,
                    None => Interval::EVERYTHING,
                    _ => return false,
                };
                Constraint::Range(base.intersect(&iv))
            }
        };
        let empty = match &next {
            Constraint::Range(iv) => iv.is_empty(),
            Constraint::Levels(ls) => ls.is_empty(),
            Constraint::Missing => false,
        };
        self.constraints.insert(spec.name.clone(), next);
        !empty
    }

    /// Adds "attribute is missing". False when the attribute was already
    /// constrained to be present.
    pub fn restrict_missing(&mut self, attribute: &str) -> bool {
        match self.constraints.get(attribute) {
            None | Some(Constraint::Missing) => {
                self.constraints.insert(attribute.into(), Constraint::Missing);
                true
            }
            Some(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_is_left_open_right_closed() {
        let iv = Interval::new(100.0, 126.0);
        assert!(!iv.contains(100.0));
        assert!(iv.contains(126.0));
        assert!(Interval::new(5.0, 5.0).is_empty());
        assert_eq!(
            iv.intersect(&Interval::new(110.0, f64::INFINITY)),
            Interval::new(110.0, 126.0)
        );
    }

    #[test]
    fn sample_points_fall_inside() {
        for iv in [
            Interval::new(1.0, 2.0),
            Interval::new(f64::NEG_INFINITY, 3.0),
            Interval::new(3.0, f64::INFINITY),
            Interval::EVERYTHING,
        ] {
            assert!(iv.contains(iv.sample_point().unwrap()));
        }
        assert_eq!(Interval::new(2.0, 1.0).sample_point(), None);
    }
}

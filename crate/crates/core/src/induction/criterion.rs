use core::fmt;
use core::str::FromStr;

/// Split-scoring rule used by tree induction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitCriterion {
    /// Decrease in Gini impurity.
    Gini,
    /// Decrease in entropy (bits).
    InfoGain,
    /// Information gain divided by the split's own entropy.
    GainRatio,
    /// Pearson chi-square statistic of the branch-by-class table.
    ChiSquare,
}

impl SplitCriterion {
    pub const ALL: [SplitCriterion; 4] = [
        SplitCriterion::Gini,
        SplitCriterion::InfoGain,
        SplitCriterion::GainRatio,
        SplitCriterion::ChiSquare,
    ];

    pub const fn as_str(self) -> &'static str {
        match self {
            SplitCriterion::Gini => "gini",
            SplitCriterion::InfoGain => "info_gain",
            SplitCriterion::GainRatio => "gain_ratio",
            SplitCriterion::ChiSquare => "chi_square",
        }
    }
}

impl fmt::Display for SplitCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownCriterion(pub alloc::string::String);

impl fmt::Display for UnknownCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown split criterion `{}`", self.0)
    }
}

impl FromStr for SplitCriterion {
    type Err = UnknownCriterion;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SplitCriterion::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownCriterion(s.into()))
    }
}

fn total(c: &[u64; 4]) -> f64 {
    c.iter().sum::<u64>() as f64
}

pub fn gini(counts: &[u64; 4]) -> f64 {
    let n = total(counts);
    if n == 0.0 {
        return 0.0;
    }
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

/// Shannon entropy in bits.
pub fn entropy(counts: &[u64; 4]) -> f64 {
    let n = total(counts);
    if n == 0.0 {
        return 0.0;
    }
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * libm::log2(p)
        })
        .sum::<f64>()
}

fn weighted(f: fn(&[u64; 4]) -> f64, left: &[u64; 4], right: &[u64; 4]) -> f64 {
    let nl = total(left);
    let nr = total(right);
    let n = nl + nr;
    (nl / n) * f(left) + (nr / n) * f(right)
}

pub fn chi_square(left: &[u64; 4], right: &[u64; 4]) -> f64 {
    let nl = total(left);
    let nr = total(right);
    let n = nl + nr;
    let mut chi = 0.0;
    for k in 0..4 {
        let col = (left[k] + right[k]) as f64;
        if col == 0.0 {
            continue;
        }
        for (obs, nb) in [(left[k] as f64, nl), (right[k] as f64, nr)] {
            let e = nb * col / n;
            if e > 0.0 {
                let d = obs - e;
                chi += d * d / e;
            }
        }
    }
    chi
}

/// `(score, impurity decrease)` of a binary partition of `left + right`.
/// The decrease is the Gini decrease for `Gini` and `ChiSquare`, and the
/// entropy gain otherwise.
pub fn evaluate(criterion: SplitCriterion, left: &[u64; 4], right: &[u64; 4]) -> (f64, f64) {
    let mut parent = [0u64; 4];
    for k in 0..4 {
        parent[k] = left[k] + right[k];
    }
    match criterion {
        SplitCriterion::Gini => {
            let d = gini(&parent) - weighted(gini, left, right);
            (d, d)
        }
        SplitCriterion::InfoGain => {
            let g = entropy(&parent) - weighted(entropy, left, right);
            (g, g)
        }
        SplitCriterion::GainRatio => {
            let g = entropy(&parent) - weighted(entropy, left, right);
            let si = entropy(&[left.iter().sum(), right.iter().sum(), 0, 0]);
            let ratio = if si > 0.0 { g / si } else { 0.0 };
            (ratio, g)
        }
        SplitCriterion::ChiSquare => {
            let d = gini(&parent) - weighted(gini, left, right);
            (chi_square(left, right), d)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impurities_of_known_tables() {
        assert_eq!(gini(&[5, 5, 0, 0]), 0.5);
        assert_eq!(gini(&[7, 0, 0, 0]), 0.0);
        assert!((entropy(&[1, 1, 1, 1]) - 2.0).abs() < 1e-15);
        let (s, d) = evaluate(SplitCriterion::Gini, &[5, 0, 0, 0], &[0, 5, 0, 0]);
        assert!((s - 0.5).abs() < 1e-15 && s == d);
        let (s, _) = evaluate(SplitCriterion::GainRatio, &[5, 0, 0, 0], &[0, 5, 0, 0]);
        assert!((s - 1.0).abs() < 1e-15);
        // perfectly separated 5/5 table: chi-square equals n
        let (s, _) = evaluate(SplitCriterion::ChiSquare, &[5, 0, 0, 0], &[0, 5, 0, 0]);
        assert!((s - 10.0).abs() < 1e-12);
    }

    #[test]
    fn names_round_trip() {
        for c in SplitCriterion::ALL {
            assert_eq!(c.as_str().parse::<SplitCriterion>().unwrap(), c);
        }
    }
}

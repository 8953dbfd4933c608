//! Exact rational probabilities and finite distributions.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

pub type Prob = BigRational;

pub fn ratio(num: u64, den: u64) -> Prob {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn one() -> Prob {
    Prob::one()
}

pub fn zero() -> Prob {
    Prob::zero()
}

pub fn to_f64(p: &Prob) -> f64 {
    p.to_f64().unwrap_or(f64::NAN)
}

/// Finite distribution with merged, sorted, strictly positive entries.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dist<T> {
    entries: Vec<(T, Prob)>,
}

impl<T: Ord + Clone> Dist<T> {
    pub fn dirac(x: T) -> Self {
        Dist { entries: vec![(x, Prob::one())] }
    }

    /// Uniform over the distinct items. Panics on an empty input.
    pub fn uniform<I: IntoIterator<Item = T>>(items: I) -> Self {
        let mut v: Vec<T> = items.into_iter().collect();
        v.sort();
        v.dedup();
        assert!(!v.is_empty(), "uniform distribution over empty set");
        let p = ratio(1, v.len() as u64);
        Dist { entries: v.into_iter().map(|x| (x, p.clone())).collect() }
    }

    /// Builds a distribution from weighted entries, merging duplicates and dropping zeros.
    /// Weights are taken as given; callers normalise if needed.
    pub fn from_weights<I: IntoIterator<Item = (T, Prob)>>(items: I) -> Self {
        let mut v: Vec<(T, Prob)> = items.into_iter().filter(|(_, p)| !p.is_zero()).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<(T, Prob)> = Vec::with_capacity(v.len());
        for (x, p) in v {
            match out.last_mut() {
                Some((y, q)) if *y == x => *q += p,
                _ => out.push((x, p)),
            }
        }
        Dist { entries: out }
    }

    pub fn normalized(self) -> Option<Self> {
        let t = self.total();
        if t.is_zero() {
            return None;
        }
        Some(Dist { entries: self.entries.into_iter().map(|(x, p)| (x, p / &t)).collect() })
    }

    pub fn entries(&self) -> &[(T, Prob)] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<(T, Prob)> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = &T> {
        self.entries.iter().map(|(x, _)| x)
    }

    pub fn prob(&self, x: &T) -> Prob {
        match self.entries.binary_search_by(|(y, _)| y.cmp(x)) {
            Ok(i) => self.entries[i].1.clone(),
            Err(_) => Prob::zero(),
        }
    }

    pub fn total(&self) -> Prob {
        self.entries.iter().fold(Prob::zero(), |acc, (_, p)| acc + p)
    }

    pub fn as_dirac(&self) -> Option<&T> {
        match self.entries.as_slice() {
            [(x, _)] => Some(x),
            _ => None,
        }
    }

    pub fn map<U: Ord + Clone>(&self, mut f: impl FnMut(&T) -> U) -> Dist<U> {
        Dist::from_weights(self.entries.iter().map(|(x, p)| (f(x), p.clone())))
    }

    /// Restricts to entries satisfying `keep` and renormalises; `None` when no mass survives.
    pub fn condition(&self, mut keep: impl FnMut(&T) -> bool) -> Option<Self> {
        Dist { entries: self.entries.iter().filter(|(x, _)| keep(x)).cloned().collect() }.normalized()
    }

    pub fn scaled(&self, by: &Prob) -> Vec<(T, Prob)> {
        self.entries.iter().map(|(x, p)| (x.clone(), p * by)).collect()
    }

    /// Draws one outcome using a single uniform f64.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        if let [(x, _)] = self.entries.as_slice() {
            return x.clone();
        }
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (x, p) in &self.entries {
            acc += to_f64(p);
            if u < acc {
                return x.clone();
            }
        }
        self.entries.last().expect("non-empty distribution").0.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn merges_and_sorts() {
        let d = Dist::from_weights(vec![(3, ratio(1, 4)), (1, ratio(1, 4)), (3, ratio(1, 2))]);
        assert_eq!(d.entries(), &[(1, ratio(1, 4)), (3, ratio(3, 4))]);
        assert_eq!(d.total(), one());
    }

    #[test]
    fn condition_renormalises() {
        let d = Dist::uniform(vec![0, 1, 2, 3]);
        let c = d.condition(|x| *x >= 2).unwrap();
        assert_eq!(c.prob(&2), ratio(1, 2));
        assert!(d.condition(|x| *x > 9).is_none());
    }

    #[test]
    fn sampling_frequencies() {
        let d = Dist::from_weights(vec![(0u8, ratio(1, 4)), (1u8, ratio(3, 4))]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 40_000;
        let ones = (0..n).filter(|_| d.sample(&mut rng) == 1).count() as f64 / n as f64;
        assert!((ones - 0.75).abs() < 0.01);
    }
}

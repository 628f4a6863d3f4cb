//! Degree distributions, their moments, and the size-biased law of the
//! degree of a uniformly chosen neighbor.
//!
//! Three kinds are supported: the zeta (power-law) family with exponent
//! `γ > 2`, explicit finite pmfs, and empirical degree counts read off a
//! graph. Degrees start at one; isolated nodes never enter a distribution.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Zeta};

use crate::error::{Error, Result};

/// Number of series terms used for ζ when no truncation is given.
pub const DEFAULT_TRUNCATION: u64 = 1_000_000;

const MASS_TOLERANCE: f64 = 1e-9;

/// Riemann zeta `ζ(s)` for `s > 1`.
///
/// Sums the first `truncation` terms smallest-first and closes the tail with
/// the integral `∫_M^∞ x^{-s} dx` plus the first Euler–Maclaurin corrections,
/// which keeps the absolute error well below `1e-10` for `M = 10^6`.
pub fn zeta(s: f64, truncation: u64) -> f64 {
    assert!(s > 1.0, "zeta requires s > 1");
    let m = truncation.max(1);
    let mut head = 0.0;
    for j in (1..=m).rev() {
        head += (j as f64).powf(-s);
    }
    head + zeta_tail(s, m)
}

/// `Σ_{j > m} j^{-s}` by Euler–Maclaurin around the integral tail.
fn zeta_tail(s: f64, m: u64) -> f64 {
    let m = m as f64;
    let integral = m.powf(1.0 - s) / (s - 1.0);
    integral - 0.5 * m.powf(-s) + s * m.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * m.powf(-s - 3.0) / 720.0
}

/// `P(deg = k) = k^{-γ} / ζ(γ)` for the power law with exponent `gamma`.
pub fn zeta_pmf(gamma: f64, k: u32) -> Result<f64> {
    check_gamma(gamma)?;
    if k < 1 {
        return Err(Error::param("degree must be at least 1"));
    }
    Ok((k as f64).powf(-gamma) / zeta(gamma, DEFAULT_TRUNCATION))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 2.0) {
        return Err(Error::param(format!(
            "zeta exponent must exceed 2 for a finite mean degree, got {gamma}"
        )));
    }
    Ok(())
}

/// Per-class masses relative to a threshold `k*`.
///
/// Index `k - 1` holds degree `k` for `k ≤ k*`; index `k*` holds the tail
/// (`deg > k*`), i.e. the ∞ class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMasses {
    pub node: Vec<f64>,
    pub neighbor: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Repr {
    Zeta {
        gamma: f64,
        truncation: u64,
        zeta_gamma: f64,
        zeta_gamma_minus_one: f64,
    },
    Finite {
        support: Vec<u32>,
        probs: Vec<f64>,
        counts: Option<Vec<u64>>,
        isolated: u64,
    },
}

/// A degree distribution on `{1, 2, ...}`. Immutable once built.
#[derive(Clone, Debug)]
pub struct DegreeDistribution {
    repr: Repr,
}

impl DegreeDistribution {
    pub fn zeta(gamma: f64) -> Result<Self> {
        Self::zeta_with_truncation(gamma, DEFAULT_TRUNCATION)
    }

    pub fn zeta_with_truncation(gamma: f64, truncation: u64) -> Result<Self> {
        check_gamma(gamma)?;
        if truncation == 0 {
            return Err(Error::param("truncation must be positive"));
        }
        Ok(Self {
            repr: Repr::Zeta {
                gamma,
                truncation,
                zeta_gamma: zeta(gamma, truncation),
                zeta_gamma_minus_one: zeta(gamma - 1.0, truncation),
            },
        })
    }

    /// Explicit pmf; probabilities must be non-negative and sum to one.
    pub fn explicit(pmf: &BTreeMap<u32, f64>) -> Result<Self> {
        let mut support = Vec::with_capacity(pmf.len());
        let mut probs = Vec::with_capacity(pmf.len());
        let mut total = 0.0;
        for (&k, &p) in pmf {
            if k == 0 {
                return Err(Error::param("degree support starts at 1"));
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::param(format!("invalid probability {p} at degree {k}")));
            }
            total += p;
            if p > 0.0 {
                support.push(k);
                probs.push(p);
            }
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::param(format!("pmf sums to {total}, expected 1")));
        }
        Ok(Self {
            repr: Repr::Finite {
                support,
                probs,
                counts: None,
                isolated: 0,
            },
        })
    }

    pub fn point_mass(degree: u32) -> Result<Self> {
        Self::explicit(&BTreeMap::from([(degree, 1.0)]))
    }

    /// Empirical law from per-degree counts. Degree-0 counts are set aside
    /// and available through [`DegreeDistribution::isolated_count`].
    pub fn empirical(counts: &BTreeMap<u32, u64>) -> Result<Self> {
        let isolated = counts.get(&0).copied().unwrap_or(0);
        let kept: Vec<(u32, u64)> = counts
            .iter()
            .filter(|(&k, &c)| k > 0 && c > 0)
            .map(|(&k, &c)| (k, c))
            .collect();
        let total: u64 = kept.iter().map(|(_, c)| c).sum();
        if total == 0 {
            return Err(Error::ZeroMeanDegree);
        }
        Ok(Self {
            repr: Repr::Finite {
                support: kept.iter().map(|(k, _)| *k).collect(),
                probs: kept.iter().map(|(_, c)| *c as f64 / total as f64).collect(),
                counts: Some(kept.iter().map(|(_, c)| *c).collect()),
                isolated,
            },
        })
    }

    /// Empirical law of a degree sequence (isolated nodes excluded).
    pub fn from_degrees(degrees: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for d in degrees {
            *counts.entry(d).or_insert(0u64) += 1;
        }
        Self::empirical(&counts)
    }

    pub fn gamma(&self) -> Option<f64> {
        match self.repr {
            Repr::Zeta { gamma, .. } => Some(gamma),
            Repr::Finite { .. } => None,
        }
    }

    pub fn is_empirical(&self) -> bool {
        matches!(self.repr, Repr::Finite { counts: Some(_), .. })
    }

    /// Number of degree-0 nodes excluded from an empirical distribution.
    pub fn isolated_count(&self) -> u64 {
        match self.repr {
            Repr::Finite { isolated, .. } => isolated,
            Repr::Zeta { .. } => 0,
        }
    }

    /// Largest degree with positive mass, `None` for unbounded support.
    pub fn max_degree(&self) -> Option<u32> {
        match &self.repr {
            Repr::Zeta { .. } => None,
            Repr::Finite { support, .. } => support.last().copied(),
        }
    }

    pub fn pmf(&self, k: u32) -> f64 {
        match &self.repr {
            Repr::Zeta {
                gamma, zeta_gamma, ..
            } => {
                if k == 0 {
                    0.0
                } else {
                    (k as f64).powf(-gamma) / zeta_gamma
                }
            }
            Repr::Finite { support, probs, .. } => match support.binary_search(&k) {
                Ok(i) => probs[i],
                Err(_) => 0.0,
            },
        }
    }

    pub fn mean_degree(&self) -> f64 {
        match &self.repr {
            Repr::Zeta {
                zeta_gamma,
                zeta_gamma_minus_one,
                ..
            } => zeta_gamma_minus_one / zeta_gamma,
            Repr::Finite { support, probs, .. } => support
                .iter()
                .zip(probs)
                .map(|(&k, &p)| k as f64 * p)
                .sum(),
        }
    }

    /// Size-biased law `k P(deg = k) / E[deg]`.
    pub fn neighbor_degree_pmf(&self, k: u32) -> Result<f64> {
        let mean = self.mean_degree();
        if mean <= 0.0 {
            return Err(Error::ZeroMeanDegree);
        }
        Ok(match &self.repr {
            Repr::Zeta {
                gamma,
                zeta_gamma_minus_one,
                ..
            } => {
                if k == 0 {
                    0.0
                } else {
                    (k as f64).powf(1.0 - gamma) / zeta_gamma_minus_one
                }
            }
            Repr::Finite { .. } => k as f64 * self.pmf(k) / mean,
        })
    }

    /// `P(deg ≤ k)`.
    pub fn cdf(&self, k: u32) -> f64 {
        match &self.repr {
            Repr::Zeta { .. } => (1..=k).map(|h| self.pmf(h)).sum(),
            Repr::Finite { support, probs, .. } => support
                .iter()
                .zip(probs)
                .take_while(|(&h, _)| h <= k)
                .map(|(_, p)| p)
                .sum(),
        }
    }

    /// Cumulative size-biased mass over degrees `≤ k`.
    pub fn neighbor_cdf(&self, k: u32) -> Result<f64> {
        let mut acc = 0.0;
        for h in self.degrees_up_to(k) {
            acc += self.neighbor_degree_pmf(h)?;
        }
        Ok(acc)
    }

    fn degrees_up_to(&self, k: u32) -> Vec<u32> {
        match &self.repr {
            Repr::Zeta { .. } => (1..=k).collect(),
            Repr::Finite { support, .. } => {
                support.iter().copied().take_while(|&h| h <= k).collect()
            }
        }
    }

    /// Node and neighbor masses for classes `1..=k*` and the ∞ class.
    pub fn class_masses(&self, k_star: u32) -> Result<ClassMasses> {
        if k_star == 0 {
            return Err(Error::param("k_star must be at least 1"));
        }
        let mean = self.mean_degree();
        if mean <= 0.0 {
            return Err(Error::ZeroMeanDegree);
        }
        let ks = k_star as usize;
        let mut node = vec![0.0; ks + 1];
        let mut neighbor = vec![0.0; ks + 1];
        for k in 1..=k_star {
            node[k as usize - 1] = self.pmf(k);
            neighbor[k as usize - 1] = self.neighbor_degree_pmf(k)?;
        }
        match &self.repr {
            Repr::Zeta {
                gamma,
                zeta_gamma,
                zeta_gamma_minus_one,
                ..
            } => {
                let head: f64 = (1..=k_star).map(|h| (h as f64).powf(-gamma)).sum();
                let head1: f64 = (1..=k_star).map(|h| (h as f64).powf(1.0 - gamma)).sum();
                node[ks] = ((zeta_gamma - head) / zeta_gamma).max(0.0);
                neighbor[ks] = ((zeta_gamma_minus_one - head1) / zeta_gamma_minus_one).max(0.0);
            }
            Repr::Finite { support, probs, .. } => {
                for (&k, &p) in support.iter().zip(probs) {
                    if k > k_star {
                        node[ks] += p;
                        neighbor[ks] += k as f64 * p / mean;
                    }
                }
            }
        }
        Ok(ClassMasses { node, neighbor })
    }

    /// `E[deg | deg > k*]`, or `None` if the tail carries no mass.
    pub fn tail_mean(&self, k_star: u32) -> Option<f64> {
        match &self.repr {
            Repr::Zeta {
                gamma,
                zeta_gamma,
                zeta_gamma_minus_one,
                ..
            } => {
                let head: f64 = (1..=k_star).map(|h| (h as f64).powf(-gamma)).sum();
                let head1: f64 = (1..=k_star).map(|h| (h as f64).powf(1.0 - gamma)).sum();
                let mass = zeta_gamma - head;
                (mass > 0.0).then(|| (zeta_gamma_minus_one - head1) / mass)
            }
            Repr::Finite { support, probs, .. } => {
                let (mass, first) = support
                    .iter()
                    .zip(probs)
                    .filter(|(&k, _)| k > k_star)
                    .fold((0.0, 0.0), |(m, f), (&k, &p)| (m + p, f + k as f64 * p));
                (mass > 0.0).then(|| first / mass)
            }
        }
    }

    /// Total probability mass: series up to the truncation plus the
    /// analytic tail for zeta, the plain sum otherwise.
    pub fn total_mass(&self) -> f64 {
        match &self.repr {
            Repr::Zeta {
                gamma,
                truncation,
                zeta_gamma,
                ..
            } => {
                let mut head = 0.0;
                for j in (1..=*truncation).rev() {
                    head += (j as f64).powf(-gamma);
                }
                (head + zeta_tail(*gamma, *truncation)) / zeta_gamma
            }
            Repr::Finite { probs, .. } => probs.iter().sum(),
        }
    }

    /// Draws one degree.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match &self.repr {
            Repr::Zeta { gamma, .. } => {
                let law = Zeta::new(*gamma).expect("gamma > 2 checked at construction");
                let draw: f64 = law.sample(rng);
                draw.min(u32::MAX as f64) as u32
            }
            Repr::Finite { support, probs, .. } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (&k, &p) in support.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return k;
                    }
                }
                *support.last().expect("non-empty support")
            }
        }
    }

    /// Draws from the size-biased neighbor law restricted to classes:
    /// returns the class row (`k - 1` or `k*` for the tail).
    pub fn sample_neighbor_class<R: Rng + ?Sized>(
        masses: &ClassMasses,
        rng: &mut R,
    ) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in masses.neighbor.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        masses.neighbor.len() - 1
    }
}

/// Free-function form of [`DegreeDistribution::mean_degree`].
pub fn mean_degree(dist: &DegreeDistribution) -> f64 {
    dist.mean_degree()
}

/// Free-function form of [`DegreeDistribution::neighbor_degree_pmf`].
pub fn neighbor_degree_pmf(dist: &DegreeDistribution, k: u32) -> Result<f64> {
    dist.neighbor_degree_pmf(k)
}

/// Free-function form of [`DegreeDistribution::class_masses`].
pub fn class_masses(dist: &DegreeDistribution, k_star: u32) -> Result<ClassMasses> {
    dist.class_masses(k_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> DegreeDistribution {
        DegreeDistribution::explicit(&BTreeMap::from([(1, 0.5), (3, 0.5)])).unwrap()
    }

    #[test]
    fn zeta_three_at_two_matches_long_series() {
        // Independent oracle: 10^7 terms plus the integral tail 1/(2 M^2),
        // summed smallest-first.
        let m = 10_000_000u64;
        let mut s = 0.0;
        for j in (1..=m).rev() {
            let x = j as f64;
            s += 1.0 / (x * x * x);
        }
        s += 1.0 / (2.0 * (m as f64) * (m as f64));
        let expected = 0.125 / s;
        let got = zeta_pmf(3.0, 2).unwrap();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn zeta_pmf_at_one_is_inverse_zeta() {
        for gamma in [2.1, 2.5, 3.0, 4.0] {
            let z = zeta(gamma, DEFAULT_TRUNCATION);
            assert!((zeta_pmf(gamma, 1).unwrap() - 1.0 / z).abs() < 1e-15);
        }
    }

    #[test]
    fn zeta_rejects_infinite_mean_and_zero_degree() {
        assert!(zeta_pmf(2.0, 1).is_err());
        assert!(zeta_pmf(1.5, 1).is_err());
        assert!(zeta_pmf(2.5, 0).is_err());
        assert!(DegreeDistribution::zeta(2.0).is_err());
    }

    #[test]
    fn zeta_known_values() {
        // ζ(2) = π²/6, ζ(4) = π⁴/90.
        let pi = std::f64::consts::PI;
        assert!((zeta(2.0, DEFAULT_TRUNCATION) - pi * pi / 6.0).abs() < 1e-12);
        assert!((zeta(4.0, DEFAULT_TRUNCATION) - pi.powi(4) / 90.0).abs() < 1e-13);
        // Reference ζ(1.5) = 2.612375348685488...
        assert!((zeta(1.5, DEFAULT_TRUNCATION) - 2.612_375_348_685_488).abs() < 1e-10);
    }

    #[test]
    fn power_law_cumulative_facts() {
        let d = DegreeDistribution::zeta(2.5).unwrap();
        let c5 = d.cdf(5);
        assert!((0.955..=0.965).contains(&c5), "{c5}");
        let n5 = d.neighbor_cdf(5).unwrap();
        assert!(n5 < 0.68 && n5 > 0.66, "{n5}");
        let n10 = d.neighbor_cdf(10).unwrap();
        assert!((n10 - 0.76).abs() <= 0.01, "{n10}");
    }

    #[test]
    fn mean_degree_cases() {
        assert_eq!(DegreeDistribution::point_mass(4).unwrap().mean_degree(), 4.0);
        assert!((two_point().mean_degree() - 2.0).abs() < 1e-15);
        let z = DegreeDistribution::zeta(2.5).unwrap();
        let oracle = zeta(1.5, 2_000_000) / zeta(2.5, 2_000_000);
        assert!((z.mean_degree() - oracle).abs() < 1e-9);
    }

    #[test]
    fn neighbor_law_examples() {
        let d = two_point();
        assert!((d.neighbor_degree_pmf(1).unwrap() - 0.25).abs() < 1e-15);
        assert!((d.neighbor_degree_pmf(3).unwrap() - 0.75).abs() < 1e-15);
        let p = DegreeDistribution::point_mass(6).unwrap();
        assert_eq!(p.neighbor_degree_pmf(6).unwrap(), 1.0);
        assert_eq!(p.neighbor_degree_pmf(5).unwrap(), 0.0);
    }

    #[test]
    fn class_mass_examples() {
        let m = DegreeDistribution::point_mass(1).unwrap().class_masses(1).unwrap();
        assert_eq!(m.node, vec![1.0, 0.0]);
        assert_eq!(m.neighbor, vec![1.0, 0.0]);

        let m = two_point().class_masses(2).unwrap();
        assert_eq!(m.node, vec![0.5, 0.0, 0.5]);
        assert!((m.neighbor[0] - 0.25).abs() < 1e-15);
        assert_eq!(m.neighbor[1], 0.0);
        assert!((m.neighbor[2] - 0.75).abs() < 1e-15);

        let z = DegreeDistribution::zeta(2.5).unwrap().class_masses(10).unwrap();
        let low: f64 = z.neighbor[..10].iter().sum();
        assert!((low - 0.76).abs() < 0.01);
    }

    #[test]
    fn class_masses_sum_to_one() {
        let z = DegreeDistribution::zeta(2.5).unwrap();
        for k_star in 1..=50 {
            let m = z.class_masses(k_star).unwrap();
            assert!((m.node.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((m.neighbor.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(z.class_masses(0).is_err());
    }

    #[test]
    fn total_mass_is_one() {
        for gamma in [2.2, 2.5, 3.5] {
            let z = DegreeDistribution::zeta(gamma).unwrap();
            assert!((z.total_mass() - 1.0).abs() < 1e-9);
        }
        assert!((two_point().total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn size_bias_ratio_identity() {
        let z = DegreeDistribution::zeta(2.7).unwrap();
        for (a, b) in [(1u32, 2u32), (3, 17), (5, 400)] {
            let lhs = z.neighbor_degree_pmf(b).unwrap() / z.neighbor_degree_pmf(a).unwrap();
            let rhs = (b as f64 / a as f64) * z.pmf(b) / z.pmf(a);
            assert!((lhs / rhs - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zeta_pmf_strictly_decreasing() {
        let z = DegreeDistribution::zeta(2.5).unwrap();
        for k in 1..200 {
            assert!(z.pmf(k) > z.pmf(k + 1));
        }
    }

    #[test]
    fn empirical_excludes_isolated() {
        let d = DegreeDistribution::from_degrees([0, 0, 1, 2, 2, 3]).unwrap();
        assert_eq!(d.isolated_count(), 2);
        assert!((d.pmf(2) - 0.5).abs() < 1e-15);
        assert!((d.mean_degree() - 2.0).abs() < 1e-15);
        assert!(d.is_empirical());
        assert!(DegreeDistribution::from_degrees([0, 0]).is_err());
    }

    #[test]
    fn explicit_rejects_bad_input() {
        assert!(DegreeDistribution::explicit(&BTreeMap::from([(1, 0.4)])).is_err());
        assert!(DegreeDistribution::explicit(&BTreeMap::from([(0, 1.0)])).is_err());
        assert!(DegreeDistribution::explicit(&BTreeMap::from([(1, 1.5), (2, -0.5)])).is_err());
    }

    #[test]
    fn tail_mean_of_finite_law() {
        let d = DegreeDistribution::explicit(&BTreeMap::from([(1, 0.5), (4, 0.25), (6, 0.25)]))
            .unwrap();
        assert_eq!(d.tail_mean(3), Some(5.0));
        assert_eq!(d.tail_mean(6), None);
        let z = DegreeDistribution::zeta(2.5).unwrap();
        let t = z.tail_mean(10).unwrap();
        assert!(t > 11.0 && t.is_finite());
    }
}

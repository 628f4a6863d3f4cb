//! Stars-and-bars enumeration and multinomial helpers shared by the
//! two-systems and extensive approximations.

use crate::error::{Error, Result};

/// Default cap on the number of enumerated compositions.
pub const DEFAULT_ENUMERATION_CAP: u128 = 100_000;

/// `C(n, k)` in exact integer arithmetic, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) after the multiplication.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Number of compositions of `total` into `parts` non-negative parts.
pub fn composition_count(total: u32, parts: usize) -> u128 {
    if parts == 0 {
        return u128::from(total == 0);
    }
    binomial(total as u64 + parts as u64 - 1, parts as u64 - 1)
}

/// All compositions of `total` into `parts` non-negative parts, in
/// lexicographically decreasing order: `(total, 0, ..)` first.
pub fn compositions(total: u32, parts: usize, cap: u128) -> Result<Vec<Vec<u32>>> {
    let size = composition_count(total, parts);
    if size > cap {
        return Err(Error::Capacity {
            what: "composition enumeration",
            size,
            cap,
            hint: "switch to sampled mode or lower k*",
        });
    }
    let mut out = Vec::with_capacity(size as usize);
    if parts == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return Ok(out);
    }
    let mut current = vec![0u32; parts];
    fill(&mut out, &mut current, 0, total);
    Ok(out)
}

fn fill(out: &mut Vec<Vec<u32>>, current: &mut [u32], pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.to_vec());
        return;
    }
    for v in (0..=remaining).rev() {
        current[pos] = v;
        fill(out, current, pos + 1, remaining - v);
    }
    current[pos] = 0;
}

/// Compositions of `total` restricted to the parts flagged in `allowed`;
/// the other parts stay zero. Order as in [`compositions`].
pub fn compositions_on_support(total: u32, allowed: &[bool], cap: u128) -> Result<Vec<Vec<u32>>> {
    let idx: Vec<usize> = allowed
        .iter()
        .enumerate()
        .filter_map(|(i, &a)| a.then_some(i))
        .collect();
    let inner = compositions(total, idx.len(), cap)?;
    Ok(inner
        .into_iter()
        .map(|c| {
            let mut full = vec![0u32; allowed.len()];
            for (&i, v) in idx.iter().zip(c) {
                full[i] = v;
            }
            full
        })
        .collect())
}

/// `ln n!` from a small table or the log-gamma identity.
pub fn ln_factorial(n: u32) -> f64 {
    const TABLE: usize = 64;
    thread_local! {
        static LN_FACT: [f64; TABLE] = {
            let mut t = [0.0; TABLE];
            for i in 1..TABLE {
                t[i] = t[i - 1] + (i as f64).ln();
            }
            t
        };
    }
    if (n as usize) < TABLE {
        LN_FACT.with(|t| t[n as usize])
    } else {
        (1..=n).map(|i| (i as f64).ln()).sum()
    }
}

/// Multinomial coefficient `(Σ counts)! / Π counts!` as a float.
pub fn multinomial_coefficient(counts: &[u32]) -> f64 {
    let total: u32 = counts.iter().sum();
    let mut ln = ln_factorial(total);
    for &c in counts {
        ln -= ln_factorial(c);
    }
    ln.exp().round().max(1.0)
}

/// Multinomial pmf `n!/Π c_i! Π p_i^{c_i}` with `n = Σ c_i`.
///
/// Zero-probability categories with zero count contribute a factor of one.
pub fn multinomial_pmf(p: &[f64], counts: &[u32]) -> f64 {
    debug_assert_eq!(p.len(), counts.len());
    let mut prob = multinomial_coefficient(counts);
    for (&pi, &c) in p.iter().zip(counts) {
        if c > 0 {
            if pi <= 0.0 {
                return 0.0;
            }
            prob *= pi.powi(c as i32);
        }
    }
    prob
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_binomials() {
        assert_eq!(binomial(14, 4), 1001);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(60, 30), 118_264_581_564_861_424);
    }

    #[test]
    fn compositions_order_and_size() {
        let c = compositions(2, 2, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(c, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        let c = compositions(1, 2, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(c, vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(compositions(10, 5, DEFAULT_ENUMERATION_CAP).unwrap().len(), 1001);
        assert!(matches!(compositions(30, 8, 1000), Err(Error::Capacity { .. })));
    }

    #[test]
    fn support_restricted_compositions() {
        let c = compositions_on_support(2, &[true, false, true], 100).unwrap();
        assert_eq!(c, vec![vec![2, 0, 0], vec![1, 0, 1], vec![0, 0, 2]]);
    }

    #[test]
    fn multinomial_values() {
        assert_eq!(multinomial_coefficient(&[1, 2]), 3.0);
        assert_eq!(multinomial_coefficient(&[2, 2, 2]), 90.0);
        assert!((multinomial_pmf(&[0.2, 0.8], &[1, 2]) - 0.384).abs() < 1e-15);
        assert_eq!(multinomial_pmf(&[0.0, 1.0], &[0, 3]), 1.0);
        assert_eq!(multinomial_pmf(&[0.0, 1.0], &[1, 2]), 0.0);
    }
}

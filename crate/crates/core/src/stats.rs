//! Paired t statistic and Cohen's d for comparing runs across seeds.

use crate::error::{contract, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedT {
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub mean_difference: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StatReport {
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub cohens_d: f64,
    pub mean_difference: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (`n − 1` denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

// Variance indistinguishable from rounding noise on values of this magnitude.
fn is_degenerate(var: f64, xs: &[f64]) -> bool {
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    var <= (f64::EPSILON * scale) * (f64::EPSILON * scale)
}

/// `t = mean(d) / (sd(d)/√n)` with `d = a − b`, `n − 1` degrees of freedom.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedT> {
    if a.len() != b.len() {
        return Err(contract!("paired samples of length {} and {}", a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(contract!("a paired t-test needs at least two pairs"));
    }
    let d: alloc::vec::Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let var = sample_variance(&d);
    if is_degenerate(var, &d) {
        return Err(Error::Degenerate("differences have zero variance"));
    }
    let n = d.len() as f64;
    let m = mean(&d);
    Ok(PairedT {
        t_statistic: m / (libm::sqrt(var) / libm::sqrt(n)),
        degrees_of_freedom: d.len() - 1,
        mean_difference: m,
    })
}

/// `(mean(a) − mean(b))` over the pooled standard deviation with an
/// `n_a + n_b − 2` denominator.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(contract!("Cohen's d needs at least two values per group"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = ((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b)) / (na + nb - 2.0);
    let scale: alloc::vec::Vec<f64> = a.iter().chain(b).copied().collect();
    if is_degenerate(pooled, &scale) {
        return Err(Error::Degenerate("pooled variance is zero"));
    }
    Ok((mean(a) - mean(b)) / libm::sqrt(pooled))
}

/// Paired t and Cohen's d together.
pub fn compare_samples(a: &[f64], b: &[f64]) -> Result<StatReport> {
    let t = paired_t_test(a, b)?;
    Ok(StatReport {
        t_statistic: t.t_statistic,
        degrees_of_freedom: t.degrees_of_freedom,
        cohens_d: cohens_d(a, b)?,
        mean_difference: t.mean_difference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_samples_are_degenerate() {
        let a = [0.9, 0.8, 0.7];
        assert!(matches!(paired_t_test(&a, &a), Err(Error::Degenerate(_))));
    }

    #[test]
    fn constant_shift_is_degenerate() {
        assert!(matches!(
            paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn hand_computed_t() {
        let r = paired_t_test(&[1.0, 2.0, 4.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!((r.t_statistic - 4.0).abs() < 1e-12);
        assert_eq!(r.degrees_of_freedom, 2);
        assert!((r.mean_difference - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn t_input_errors() {
        assert!(matches!(paired_t_test(&[1.0], &[2.0]), Err(Error::Contract(_))));
        assert!(matches!(paired_t_test(&[1.0, 2.0], &[2.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn hand_computed_d() {
        let d = cohens_d(&[2.0, 4.0], &[0.0, 2.0]).unwrap();
        assert!((d - core::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((cohens_d(&[0.0, 2.0], &[2.0, 4.0]).unwrap() + d).abs() < 1e-15);
        assert_eq!(cohens_d(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(cohens_d(&[1.0, 1.0], &[1.0, 1.0]), Err(Error::Degenerate(_))));
    }

    proptest! {
        #[test]
        fn t_is_antisymmetric(
            pairs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..12)
        ) {
            let a: alloc::vec::Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: alloc::vec::Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let (Ok(ab), Ok(ba)) = (paired_t_test(&a, &b), paired_t_test(&b, &a)) {
                prop_assert!((ab.t_statistic + ba.t_statistic).abs() <= 1e-9 * ab.t_statistic.abs().max(1.0));
            }
        }
    }
}

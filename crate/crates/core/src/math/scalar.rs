/// Logistic function `1 / (1 + e^-x)`, evaluated without overflow for any finite `x`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)`. Large positive inputs use `x + log(1 + e^-x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_fixed_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        let s = sigmoid(100.0);
        // 1 - 1e-20 rounds to 1.0 in f64
        assert_eq!(s, 1.0);
        assert!(sigmoid(-700.0) > 0.0);
        assert!(sigmoid(700.0).is_finite());
    }

    #[test]
    fn softplus_fixed_points() {
        assert!((softplus(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-12);
        // ln(1 + 1/e), evaluated to 16 digits offline
        assert!((softplus(-1.0) - 0.313_261_687_518_222_8).abs() < 1e-15);
        assert!(softplus(-1000.0) >= 0.0);
    }

    proptest! {
        #[test]
        fn sigmoid_is_antisymmetric(x in -700.0f64..700.0) {
            prop_assert!((sigmoid(-x) - (1.0 - sigmoid(x))).abs() < 1e-15);
        }

        #[test]
        fn sigmoid_is_monotone(x in -50.0f64..50.0, dx in 1e-6f64..10.0) {
            prop_assert!(sigmoid(x + dx) >= sigmoid(x));
        }

        #[test]
        fn softplus_difference_is_identity(x in -50.0f64..50.0) {
            prop_assert!((softplus(x) - softplus(-x) - x).abs() < 1e-12);
        }

        #[test]
        fn softplus_bounds_relu(x in -700.0f64..700.0) {
            prop_assert!(softplus(x) >= x.max(0.0));
        }
    }
}

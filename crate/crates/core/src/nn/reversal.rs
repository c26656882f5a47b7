//! Gradient reversal junction: identity on the way forward, multiplies the
//! upstream gradient by `−λ` on the way back.

use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReversal {
    lambda: f64,
}

impl GradientReversal {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("reversal coefficient must be >= 0, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        x.clone()
    }

    pub fn backward(&self, upstream: &Matrix) -> Matrix {
        upstream.map(|g| -self.lambda * g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn forward_is_identity() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(GradientReversal::new(0.3).unwrap().forward(&x), x);
    }

    #[test]
    fn backward_scales_by_minus_lambda() {
        let g = Matrix::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let out = GradientReversal::new(0.3).unwrap().backward(&g);
        assert_eq!(out.as_slice(), &[-0.3, 0.6, -0.15]);
        let zero = GradientReversal::new(0.0).unwrap().backward(&g);
        assert!(zero.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_negative() {
        assert!(GradientReversal::new(-1.0).is_err());
        assert!(GradientReversal::new(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn forward_bit_identical(v in proptest::collection::vec(any::<f64>(), 1..12)) {
            let x = Matrix::from_vec(1, v.len(), v.clone()).unwrap();
            let y = GradientReversal::new(1.0).unwrap().forward(&x);
            let same = y.as_slice().iter().zip(&v).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }

        #[test]
        fn ratio_of_coefficients(v in proptest::collection::vec(-10.0f64..10.0, 1..12), a in 0.01f64..10.0, b in 0.01f64..10.0) {
            let g = Matrix::from_vec(1, v.len(), v).unwrap();
            let ga = GradientReversal::new(a).unwrap().backward(&g);
            let gb = GradientReversal::new(b).unwrap().backward(&g);
            for (x, y) in ga.as_slice().iter().zip(gb.as_slice()) {
                prop_assert!((x - a / b * y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DispatchError, Result};
use crate::scalar::Scalar;

/// ENS beta used when none is configured.
pub const DEFAULT_ENS_BETA: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightingScheme {
    /// Inverse number of samples.
    #[serde(rename = "INS")]
    Ins,
    /// Inverse square root of the number of samples.
    #[serde(rename = "ISNS")]
    Isns,
    /// Effective number of samples, `(1 - beta) / (1 - beta^n)`.
    #[serde(rename = "ENS")]
    Ens,
}

impl WeightingScheme {
    pub const ALL: [WeightingScheme; 3] = [
        WeightingScheme::Ins,
        WeightingScheme::Isns,
        WeightingScheme::Ens,
    ];

    pub fn index(self) -> usize {
        match self {
            WeightingScheme::Ins => 0,
            WeightingScheme::Isns => 1,
            WeightingScheme::Ens => 2,
        }
    }
}

impl fmt::Display for WeightingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightingScheme::Ins => "INS",
            WeightingScheme::Isns => "ISNS",
            WeightingScheme::Ens => "ENS",
        })
    }
}

impl FromStr for WeightingScheme {
    type Err = DispatchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "INS" => Ok(WeightingScheme::Ins),
            "ISNS" => Ok(WeightingScheme::Isns),
            "ENS" => Ok(WeightingScheme::Ens),
            _ => Err(DispatchError::Config(format!(
                "unknown weighting scheme {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct WeightingSpec<T: Scalar = f64> {
    pub scheme: WeightingScheme,
    /// Only read by ENS; must lie in (0, 1) there.
    pub beta: T,
}

impl<T: Scalar> WeightingSpec<T> {
    pub fn new(scheme: WeightingScheme) -> Self {
        Self {
            scheme,
            beta: T::of(DEFAULT_ENS_BETA),
        }
    }

    pub fn ens(beta: T) -> Self {
        Self {
            scheme: WeightingScheme::Ens,
            beta,
        }
    }
}

/// Per-class weights for the given class counts, rescaled to mean 1.
pub fn class_weights<T: Scalar>(counts: &[usize], spec: &WeightingSpec<T>) -> Result<Vec<T>> {
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(DispatchError::ZeroClassCount(k));
    }
    if spec.scheme == WeightingScheme::Ens && !(spec.beta > T::zero() && spec.beta < T::one()) {
        return Err(DispatchError::Config(format!(
            "ENS beta must lie in (0,1), found {}",
            spec.beta
        )));
    }
    let raw: Vec<T> = counts
        .iter()
        .map(|&c| {
            let n = T::of_usize(c);
            match spec.scheme {
                WeightingScheme::Ins => n.recip(),
                WeightingScheme::Isns => n.sqrt().recip(),
                // 1 - beta^n evaluated as -expm1(n ln beta) to avoid cancellation near beta = 1
                WeightingScheme::Ens => {
                    let one_minus_beta = T::one() - spec.beta;
                    one_minus_beta / -(n * spec.beta.ln()).exp_m1()
                }
            }
        })
        .collect();
    let mean = raw.iter().copied().sum::<T>() / T::of_usize(raw.len().max(1));
    Ok(raw.into_iter().map(|w| w / mean).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ins_and_isns_hand_cases() {
        let ins = class_weights(&[2, 1], &WeightingSpec::<f64>::new(WeightingScheme::Ins)).unwrap();
        assert!((ins[0] - 2.0 / 3.0).abs() < 1e-12 && (ins[1] - 4.0 / 3.0).abs() < 1e-12);
        let isns =
            class_weights(&[4, 1], &WeightingSpec::<f64>::new(WeightingScheme::Isns)).unwrap();
        assert!((isns[0] - 2.0 / 3.0).abs() < 1e-12 && (isns[1] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ens_matches_direct_formula() {
        let beta = 0.99f64;
        let w = class_weights(&[100, 1], &WeightingSpec::ens(beta)).unwrap();
        let raw = [(1.0 - beta) / (1.0 - beta.powi(100)), 1.0];
        let mean = (raw[0] + raw[1]) / 2.0;
        assert!((w[0] - raw[0] / mean).abs() < 1e-12);
        assert!((w[1] - raw[1] / mean).abs() < 1e-12);
    }

    #[test]
    fn ens_degenerates_to_uniform_for_tiny_beta() {
        let w = class_weights(&[5000, 30, 2], &WeightingSpec::ens(1e-6f64)).unwrap();
        for x in w {
            assert!((x - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_count_and_bad_beta_are_errors() {
        let ins = WeightingSpec::<f64>::new(WeightingScheme::Ins);
        assert!(matches!(
            class_weights(&[3, 0], &ins),
            Err(DispatchError::ZeroClassCount(1))
        ));
        assert!(class_weights(&[3, 1], &WeightingSpec::ens(1.0f64)).is_err());
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!(
            "isns".parse::<WeightingScheme>().unwrap(),
            WeightingScheme::Isns
        );
        assert!("focal".parse::<WeightingScheme>().is_err());
    }

    proptest! {
        #[test]
        fn weights_have_unit_mean_and_permute_with_counts(
            counts in prop::collection::vec(1usize..5000, 2..6),
            scheme in 0usize..3,
            rot in 0usize..6,
        ) {
            let spec = WeightingSpec::<f64>::new(WeightingScheme::ALL[scheme]);
            let w = class_weights(&counts, &spec).unwrap();
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            prop_assert!((mean - 1.0).abs() < 1e-9);

            let r = rot % counts.len();
            let mut rotated = counts.clone();
            rotated.rotate_left(r);
            let mut expected = w.clone();
            expected.rotate_left(r);
            let got = class_weights(&rotated, &spec).unwrap();
            for (a, b) in got.iter().zip(&expected) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

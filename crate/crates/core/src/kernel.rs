//! Distance-decay kernels and per-location weight vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::DistanceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Gaussian,
    Bisquare,
}

impl KernelFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Bisquare => "bisquare",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(KernelFamily::Gaussian),
            "bisquare" => Ok(KernelFamily::Bisquare),
            other => Err(Error::Config(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Kernel family with a fixed bandwidth in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(Self { family, bandwidth })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    #[inline]
    pub fn weight(&self, d: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => gaussian(d, self.bandwidth),
            KernelFamily::Bisquare => bisquare(d, self.bandwidth),
        }
    }
}

fn check_bandwidth(b: f64) -> Result<()> {
    if b.is_finite() && b > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth(b))
    }
}

#[inline]
fn gaussian(d: f64, b: f64) -> f64 {
    let r = d / b;
    (-r * r).exp()
}

#[inline]
fn bisquare(d: f64, b: f64) -> f64 {
    if d < b {
        let r = d / b;
        let t = 1.0 - r * r;
        t * t
    } else {
        0.0
    }
}

/// `exp(-(d/b)^2)`.
pub fn gaussian_weight(d: f64, b: f64) -> Result<f64> {
    check_bandwidth(b)?;
    Ok(gaussian(d, b))
}

/// `(1 - (d/b)^2)^2` inside the bandwidth, zero at and beyond it.
pub fn bisquare_weight(d: f64, b: f64) -> Result<f64> {
    check_bandwidth(b)?;
    Ok(bisquare(d, b))
}

/// Kernel weights of every observation relative to one calibration station.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub station: usize,
    pub weights: Vec<f64>,
}

impl WeightVector {
    /// Elementwise square roots, i.e. the diagonal of `W^{1/2}`.
    pub fn sqrt(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.sqrt()).collect()
    }

    pub fn positive_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }
}

/// Weights for calibration station `station`. With `leave_one_out` the
/// station's own weight is forced to zero.
pub fn weight_vector(
    dm: &DistanceMatrix,
    station: usize,
    kernel: &KernelSpec,
    leave_one_out: bool,
) -> WeightVector {
    let mut weights: Vec<f64> = dm.row(station).iter().map(|&d| kernel.weight(d)).collect();
    if leave_one_out {
        weights[station] = 0.0;
    }
    WeightVector { station, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Metric;
    use proptest::prelude::*;

    #[test]
    fn gaussian_examples() {
        assert_eq!(gaussian_weight(0.0, 2.0).unwrap(), 1.0);
        assert!((gaussian_weight(2.0, 2.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((gaussian_weight(4.0, 2.0).unwrap() - 0.018315638888734179).abs() < 1e-15);
        assert!(gaussian_weight(1e3, 1.0).unwrap() >= 0.0);
        assert!(matches!(gaussian_weight(1.0, 0.0), Err(Error::InvalidBandwidth(_))));
        assert!(gaussian_weight(1.0, -1.0).is_err());
    }

    #[test]
    fn bisquare_examples() {
        assert_eq!(bisquare_weight(0.0, 3.0).unwrap(), 1.0);
        assert_eq!(bisquare_weight(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(bisquare_weight(7.0, 3.0).unwrap(), 0.0);
        assert_eq!(bisquare_weight(1.5, 3.0).unwrap(), 0.5625);
        assert!(bisquare_weight(1.0, f64::NAN).is_err());
    }

    #[test]
    fn weight_vector_examples() {
        let zeros = DistanceMatrix::from_rows(3, vec![0.0; 9], Metric::Euclidean).unwrap();
        let k = KernelSpec::new(KernelFamily::Gaussian, 1.0).unwrap();
        assert_eq!(weight_vector(&zeros, 1, &k, false).weights, vec![1.0; 3]);
        assert_eq!(weight_vector(&zeros, 1, &k, true).weights, vec![1.0, 0.0, 1.0]);

        let dm = DistanceMatrix::from_rows(
            3,
            vec![0.0, 2.0, 5.0, 2.0, 0.0, 3.0, 5.0, 3.0, 0.0],
            Metric::Network,
        )
        .unwrap();
        let narrow = KernelSpec::new(KernelFamily::Bisquare, 1.5).unwrap();
        let wv = weight_vector(&dm, 0, &narrow, true);
        assert_eq!(wv.weights, vec![0.0; 3]);
        assert_eq!(wv.positive_count(), 0);
    }

    proptest! {
        #[test]
        fn monotone_in_distance(d1 in 0.0f64..50.0, d2 in 0.0f64..50.0, b in 0.01f64..30.0) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            for fam in [KernelFamily::Gaussian, KernelFamily::Bisquare] {
                let k = KernelSpec::new(fam, b).unwrap();
                prop_assert!(k.weight(lo) >= k.weight(hi));
                prop_assert!((0.0..=1.0).contains(&k.weight(lo)));
            }
        }

        #[test]
        fn gaussian_depends_only_on_ratio(d in 0.0f64..20.0, b in 0.1f64..10.0, c in 0.1f64..10.0) {
            let w1 = gaussian_weight(d, b).unwrap();
            let w2 = gaussian_weight(c * d, c * b).unwrap();
            prop_assert!((w1 - w2).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_ignore_metric_tag() {
        let data = vec![0.0, 1.5, 1.5, 0.0];
        let a = DistanceMatrix::from_rows(2, data.clone(), Metric::Euclidean).unwrap();
        let b = DistanceMatrix::from_rows(2, data, Metric::Network).unwrap();
        let k = KernelSpec::new(KernelFamily::Gaussian, 2.0).unwrap();
        assert_eq!(weight_vector(&a, 0, &k, false), weight_vector(&b, 0, &k, false));
    }
}

//! NMSE and MSLL scoring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{mean, variance};
use crate::error::{Error, Result};

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Normalised mean squared error in percent: 100·Σ(y−ŷ)² / (N·var(y)),
/// with the population variance of the true targets.
pub fn nmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!("{} targets but {} predictions", y_true.len(), y_pred.len())));
    }
    if y_true.len() < 2 {
        return Err(Error::invalid("NMSE needs at least two points"));
    }
    if y_true.iter().chain(y_pred).any(|v| !v.is_finite()) {
        return Err(Error::invalid("NMSE inputs must be finite"));
    }
    let var = variance(y_true);
    if !(var > 0.0) {
        return Err(Error::data("NMSE undefined for constant targets"));
    }
    let sse: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(100.0 * sse / (y_true.len() as f64 * var))
}

fn neg_log_density(y: f64, mu: f64, var: f64) -> f64 {
    0.5 * (LOG_2PI + var.ln() + (y - mu) * (y - mu) / var)
}

/// Mean standardised log loss: the mean over points of
/// −log N(y; μ, v) + log N(y; ȳ_train, s²_train). Zero for the trivial
/// predictor, negative when the model beats it.
pub fn msll(y_true: &[f64], pred_mean: &[f64], pred_var: &[f64], train_mean: f64, train_var: f64) -> Result<f64> {
    let n = y_true.len();
    if n == 0 || pred_mean.len() != n || pred_var.len() != n {
        return Err(Error::invalid("MSLL inputs must be non-empty and equally long"));
    }
    if !(train_var > 0.0) || pred_var.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("MSLL needs strictly positive variances"));
    }
    let total: f64 = (0..n)
        .map(|i| {
            neg_log_density(y_true[i], pred_mean[i], pred_var[i]) - neg_log_density(y_true[i], train_mean, train_var)
        })
        .sum();
    Ok(total / n as f64)
}

/// Scores for one named subset of the test points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionScore {
    pub n: usize,
    pub nmse: f64,
    pub msll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n: usize,
    pub nmse: f64,
    pub msll: f64,
    /// Regional NMSE is normalised by the region's own target variance.
    pub regions: BTreeMap<String, RegionScore>,
}

/// Score predictions overall and inside each named index mask.
pub fn score(
    y_true: &[f64],
    pred_mean: &[f64],
    pred_var: &[f64],
    train_mean: f64,
    train_var: f64,
    regions: &BTreeMap<String, Vec<usize>>,
) -> Result<ScoreReport> {
    let mut out = ScoreReport {
        n: y_true.len(),
        nmse: nmse(y_true, pred_mean)?,
        msll: msll(y_true, pred_mean, pred_var, train_mean, train_var)?,
        regions: BTreeMap::new(),
    };
    for (name, idx) in regions {
        if let Some(&bad) = idx.iter().find(|&&i| i >= y_true.len()) {
            return Err(Error::invalid(format!("region '{name}' index {bad} out of range")));
        }
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let (yt, pm, pv) = (pick(y_true), pick(pred_mean), pick(pred_var));
        out.regions.insert(
            name.clone(),
            RegionScore {
                n: idx.len(),
                nmse: nmse(&yt, &pm)?,
                msll: msll(&yt, &pm, &pv, train_mean, train_var)?,
            },
        );
    }
    Ok(out)
}

/// Training-target moments used as the MSLL reference.
pub fn trivial_moments(train_targets: &[f64]) -> (f64, f64) {
    (mean(train_targets), variance(train_targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nmse_anchors() {
        let y = [1.0, 2.0, 4.0, 7.0];
        assert_eq!(nmse(&y, &y).unwrap(), 0.0);
        let m = mean(&y);
        assert!((nmse(&y, &[m; 4]).unwrap() - 100.0).abs() < 1e-9);
        let anti: Vec<f64> = y.iter().map(|v| 2.0 * m - v).collect();
        assert!((nmse(&y, &anti).unwrap() - 400.0).abs() < 1e-9);
    }

    #[test]
    fn nmse_errors() {
        assert!(matches!(nmse(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::Data(_))));
        assert!(nmse(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn msll_trivial_predictor_is_exactly_zero() {
        let y = [0.3, -1.2, 2.2, 0.9];
        let (m, v) = trivial_moments(&y);
        let s = msll(&y, &[m; 4], &[v; 4], m, v).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn msll_single_point_by_hand() {
        // −log N(0;0,1) + log N(0;0,e) = ½log2π − ½log2π − ½ = −½
        let s = msll(&[0.0], &[0.0], &[1.0], 0.0, std::f64::consts::E).unwrap();
        assert!((s + 0.5).abs() < 1e-15);
    }

    #[test]
    fn sharper_correct_forecast_scores_lower() {
        let y = [1.0, -1.0, 0.5, -0.5];
        let mu = [0.8, -0.9, 0.4, -0.6];
        let resid: f64 = y.iter().zip(&mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 4.0;
        let wide = msll(&y, &mu, &[4.0 * resid; 4], 0.0, 1.0).unwrap();
        let half = msll(&y, &mu, &[2.0 * resid; 4], 0.0, 1.0).unwrap();
        let right = msll(&y, &mu, &[resid; 4], 0.0, 1.0).unwrap();
        assert!(right < half && half < wide);
    }

    #[test]
    fn msll_rejects_non_positive_variance() {
        assert!(matches!(msll(&[0.0], &[0.0], &[0.0], 0.0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(msll(&[0.0], &[0.0], &[1.0], 0.0, -1.0).is_err());
    }

    #[test]
    fn regions_use_their_own_variance() {
        let y = [0.0, 1.0, 10.0, 12.0];
        let p = [0.5, 0.5, 11.0, 11.0];
        let mut regions = BTreeMap::new();
        regions.insert("hi".to_string(), vec![2, 3]);
        let r = score(&y, &p, &[1.0; 4], 5.0, 30.0, &regions).unwrap();
        assert!((r.regions["hi"].nmse - 100.0).abs() < 1e-12);
        regions.insert("bad".to_string(), vec![9]);
        assert!(score(&y, &p, &[1.0; 4], 5.0, 30.0, &regions).is_err());
    }

    proptest! {
        #[test]
        fn affine_invariance(
            ys in prop::collection::vec(-10.0f64..10.0, 3..30),
            noise in prop::collection::vec(-1.0f64..1.0, 30),
            vars in prop::collection::vec(0.05f64..3.0, 30),
            alpha in prop_oneof![-5.0f64..-0.2, 0.2f64..5.0],
            beta in -20.0f64..20.0,
        ) {
            let n = ys.len();
            prop_assume!(variance(&ys) > 1e-3);
            let mu: Vec<f64> = ys.iter().zip(&noise).map(|(y, e)| y + e).collect();
            let v = &vars[..n];
            let (tm, tv) = (0.7, 2.3);
            let a_nmse = nmse(&ys, &mu).unwrap();
            let a_msll = msll(&ys, &mu, v, tm, tv).unwrap();
            let t = |x: &f64| alpha * x + beta;
            let ys2: Vec<f64> = ys.iter().map(t).collect();
            let mu2: Vec<f64> = mu.iter().map(t).collect();
            let v2: Vec<f64> = v.iter().map(|x| alpha * alpha * x).collect();
            let b_nmse = nmse(&ys2, &mu2).unwrap();
            let b_msll = msll(&ys2, &mu2, &v2, t(&tm), alpha * alpha * tv).unwrap();
            prop_assert!((a_nmse - b_nmse).abs() <= 1e-9 * a_nmse.max(1.0));
            prop_assert!((a_msll - b_msll).abs() <= 1e-10);
        }
    }
}

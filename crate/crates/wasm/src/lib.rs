//! Browser bindings for three demo operations: a distortion curve with its
//! Choquet value, the lognormal premium as a function of the interest rate,
//! and RVaR recovery error against the number of environment states.

use wasm_bindgen::prelude::*;

use envrisk_core::classical::rvar_recovery_check;
use envrisk_core::gbm::{closed_form_rho, GbmSpec};
use envrisk_core::{choquet_distorted, DiscreteDistribution, DistortionFn, Error, Result};

fn parse_distortion(json: &str) -> Result<DistortionFn> {
    serde_json::from_str(json).map_err(|e| Error::InvalidDistortion(e.to_string()))
}

/// `g` sampled at `points` equally spaced levels in `[0, 1]`.
pub fn distortion_samples(json: &str, points: usize) -> Result<Vec<f64>> {
    let g = parse_distortion(json)?;
    if points < 2 {
        return Err(Error::Domain("need at least two sample points".into()));
    }
    (0..points).map(|i| g.eval(i as f64 / (points - 1) as f64)).collect()
}

/// Choquet integral of the law `{values, weights}` under `g ∘ P`.
pub fn distorted_value(json: &str, values: &[f64], weights: &[f64]) -> Result<f64> {
    let g = parse_distortion(json)?;
    Ok(choquet_distorted(&DiscreteDistribution::new(values, weights)?, &g))
}

/// Closed-form premium at each of `points` rates spread over `[r_min, r_max]`.
pub fn premium_by_rate(sigma: f64, sigma2: f64, a: f64, b: f64, r_min: f64, r_max: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || r_min.partial_cmp(&r_max) != Some(std::cmp::Ordering::Less) {
        return Err(Error::Domain("need r_min < r_max and at least two points".into()));
    }
    (0..points)
        .map(|i| {
            let r = r_min + (r_max - r_min) * i as f64 / (points - 1) as f64;
            closed_form_rho(&GbmSpec::new(r, sigma, sigma2, a, b)?)
        })
        .collect()
}

/// `|env_risk - RVaR|` for each state count in `sizes`.
pub fn rvar_errors(values: &[f64], weights: &[f64], a1: f64, a2: f64, sizes: &[u32]) -> Result<Vec<f64>> {
    let x = DiscreteDistribution::new(values, weights)?;
    sizes
        .iter()
        .map(|&n| Ok(rvar_recovery_check(&x, a1, a2, n as usize)?.abs_diff))
        .collect()
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = distortionSamples)]
pub fn distortion_samples_js(json: &str, points: usize) -> std::result::Result<Vec<f64>, JsError> {
    distortion_samples(json, points).map_err(js)
}

#[wasm_bindgen(js_name = distortedValue)]
pub fn distorted_value_js(json: &str, values: &[f64], weights: &[f64]) -> std::result::Result<f64, JsError> {
    distorted_value(json, values, weights).map_err(js)
}

#[wasm_bindgen(js_name = premiumByRate)]
#[allow(clippy::too_many_arguments)]
pub fn premium_by_rate_js(
    sigma: f64,
    sigma2: f64,
    a: f64,
    b: f64,
    r_min: f64,
    r_max: f64,
    points: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    premium_by_rate(sigma, sigma2, a, b, r_min, r_max, points).map_err(js)
}

#[wasm_bindgen(js_name = rvarErrors)]
pub fn rvar_errors_js(values: &[f64], weights: &[f64], a1: f64, a2: f64, sizes: &[u32]) -> std::result::Result<Vec<f64>, JsError> {
    rvar_errors(values, weights, a1, a2, sizes).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_and_value() {
        let s = distortion_samples(r#"{"family":"avar","level":0.5}"#, 5).unwrap();
        assert_eq!(s, vec![0.0, 0.5, 1.0, 1.0, 1.0]);
        let v = distorted_value(r#"{"family":"identity"}"#, &[0.0, 10.0], &[1.0, 1.0]).unwrap();
        assert!((v - 5.0).abs() < 1e-12);
        assert!(distortion_samples("{}", 5).is_err());
    }

    #[test]
    fn premium_decreases_with_rate() {
        let p = premium_by_rate(0.2, 0.3, 0.95, 0.95, -0.05, 0.1, 4).unwrap();
        assert!(p.windows(2).all(|w| w[1] < w[0]));
        assert!(premium_by_rate(0.2, 0.3, 1.5, 0.95, 0.0, 0.1, 4).is_err());
    }

    #[test]
    fn rvar_error_shrinks() {
        let e = rvar_errors(&[0.0, 1.0, 5.0], &[0.3, 0.5, 0.2], 0.1, 0.9, &[10, 100, 1000]).unwrap();
        assert!(e[2] <= e[0]);
        assert!(e[2] < 1e-2);
    }
}

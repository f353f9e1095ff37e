//! Ordinary Kriging with an unknown constant mean.
//!
//! Predictions solve the bordered system
//!
//! ```text
//! [ C + tau2 I   1 ] [ w  ]   [ c0 ]
//! [ 1t           0 ] [ mu ] = [ 1  ]
//! ```
//!
//! reduced through the Cholesky factor `K = C + tau2 I`: with `z = K^-1 y`
//! and `v = K^-1 1`, the prediction at a target with training covariances
//! `c0` is `c0t z - mu (vt y)` where `mu = (c0t v - 1) / (1t v)`. The nugget
//! is never added to `c0`, so predictions target the noiseless signal.

use super::{cov_matrix, fit_matern_ml, matern_cov, GpError, MaternParams};
use crate::basis::Location;
use crate::numerics::{cholesky, LowerTriangularFactor, JITTER_SCHEDULE};

#[derive(Debug)]
pub struct KrigingModel {
    locations: Vec<Location>,
    observations: Vec<f64>,
    params: MaternParams,
    factor: LowerTriangularFactor,
    /// `K^-1 y`
    weights_obs: Vec<f64>,
    /// `K^-1 1`
    weights_one: Vec<f64>,
    /// `1t K^-1 1`
    one_dot_v: f64,
    /// `yt K^-1 1`
    y_dot_v: f64,
}

impl KrigingModel {
    /// Builds the model with the supplied covariance parameters.
    pub fn with_params(
        locations: Vec<Location>,
        observations: Vec<f64>,
        params: MaternParams,
    ) -> Result<Self, GpError> {
        params.validate()?;
        if locations.is_empty() {
            return Err(GpError::TooFewObservations { needed: 1, got: 0 });
        }
        if locations.len() != observations.len() {
            return Err(GpError::DimensionMismatch {
                expected: locations.len(),
                got: observations.len(),
            });
        }
        let k = cov_matrix(&locations, &params, true);
        let factor = cholesky(&k, &JITTER_SCHEDULE)?;
        let weights_obs = factor.solve(&observations)?;
        let ones = vec![1.0; locations.len()];
        let weights_one = factor.solve(&ones)?;
        let one_dot_v = weights_one.iter().sum();
        let y_dot_v = observations
            .iter()
            .zip(weights_one.iter())
            .map(|(y, v)| y * v)
            .sum();
        Ok(Self {
            locations,
            observations,
            params,
            factor,
            weights_obs,
            weights_one,
            one_dot_v,
            y_dot_v,
        })
    }

    /// Fits the covariance by maximum likelihood on the training data, then
    /// builds the model.
    pub fn fit(locations: Vec<Location>, observations: Vec<f64>) -> Result<Self, GpError> {
        let params = fit_matern_ml(&locations, &observations)?;
        Self::with_params(locations, observations, params)
    }

    pub fn params(&self) -> &MaternParams {
        &self.params
    }

    pub fn training_size(&self) -> usize {
        self.locations.len()
    }

    /// Jitter the covariance factorization required, for diagnostics.
    pub fn factor_jitter(&self) -> f64 {
        self.factor.jitter()
    }

    fn target_covariances(&self, target: &Location) -> Vec<f64> {
        self.locations
            .iter()
            .map(|loc| matern_cov(target.distance(loc), &self.params))
            .collect()
    }

    /// Ordinary-Kriging prediction of the noiseless signal at each target.
    pub fn predict(&self, targets: &[Location]) -> Vec<f64> {
        targets
            .iter()
            .map(|t| {
                let c0 = self.target_covariances(t);
                let c0_dot_z: f64 = c0
                    .iter()
                    .zip(self.weights_obs.iter())
                    .map(|(a, b)| a * b)
                    .sum();
                let c0_dot_v: f64 = c0
                    .iter()
                    .zip(self.weights_one.iter())
                    .map(|(a, b)| a * b)
                    .sum();
                let mu = (c0_dot_v - 1.0) / self.one_dot_v;
                c0_dot_z - mu * self.y_dot_v
            })
            .collect()
    }

    /// The explicit weight vector solving the bordered system for one
    /// target; `wt y` reproduces `predict` and the weights sum to one.
    pub fn kriging_weights(&self, target: &Location) -> Result<Vec<f64>, GpError> {
        let c0 = self.target_covariances(target);
        let u = self.factor.solve(&c0)?;
        let c0_dot_v: f64 = c0
            .iter()
            .zip(self.weights_one.iter())
            .map(|(a, b)| a * b)
            .sum();
        let mu = (c0_dot_v - 1.0) / self.one_dot_v;
        Ok(u.iter()
            .zip(self.weights_one.iter())
            .map(|(ui, vi)| ui - mu * vi)
            .collect())
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_point_model(tau2: f64) -> KrigingModel {
        let locs = vec![
            Location::new(0.2, 0.3),
            Location::new(0.7, 0.6),
            Location::new(0.4, 0.8),
        ];
        let obs = vec![1.0, -0.5, 0.25];
        KrigingModel::with_params(locs, obs, MaternParams::new(1.0, 0.3, tau2)).unwrap()
    }

    #[test]
    fn exact_interpolation_at_training_points_without_nugget() {
        let model = three_point_model(0.0);
        let preds = model.predict(&[
            Location::new(0.2, 0.3),
            Location::new(0.7, 0.6),
            Location::new(0.4, 0.8),
        ]);
        for (p, y) in preds.iter().zip(model.observations()) {
            assert!((p - y).abs() < 1e-6, "prediction {p} vs observation {y}");
        }
    }

    #[test]
    fn single_training_point_predicts_its_observation_everywhere() {
        let model = KrigingModel::with_params(
            vec![Location::new(0.5, 0.5)],
            vec![2.75],
            MaternParams::new(1.0, 0.2, 0.01),
        )
        .unwrap();
        for loc in [
            Location::new(0.0, 0.0),
            Location::new(0.9, 0.1),
            Location::new(0.5, 0.5),
        ] {
            let p = model.predict(&[loc])[0];
            assert!((p - 2.75).abs() < 1e-10, "prediction at {loc:?} was {p}");
        }
    }

    #[test]
    fn weights_sum_to_one() {
        let model = three_point_model(0.01);
        for t in [Location::new(0.1, 0.1), Location::new(0.8, 0.9)] {
            let w = model.kriging_weights(&t).unwrap();
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() < 1e-10, "weight sum {sum}");
        }
    }

    #[test]
    fn shifting_observations_shifts_predictions() {
        let locs = vec![
            Location::new(0.2, 0.3),
            Location::new(0.7, 0.6),
            Location::new(0.4, 0.8),
        ];
        let obs = vec![1.0, -0.5, 0.25];
        let shifted: Vec<f64> = obs.iter().map(|y| y + 10.0).collect();
        let p = MaternParams::new(1.0, 0.3, 0.01);
        let m1 = KrigingModel::with_params(locs.clone(), obs, p).unwrap();
        let m2 = KrigingModel::with_params(locs, shifted, p).unwrap();
        let t = Location::new(0.55, 0.15);
        let p1 = m1.predict(&[t])[0];
        let p2 = m2.predict(&[t])[0];
        assert!((p2 - p1 - 10.0).abs() < 1e-9, "shift was {}", p2 - p1);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let err = KrigingModel::with_params(
            vec![Location::new(0.0, 0.0)],
            vec![1.0, 2.0],
            MaternParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, GpError::DimensionMismatch { .. }));
    }
}

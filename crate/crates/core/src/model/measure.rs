use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{DistanceMeasurement, Realization, SensorIndex};

/// Lower bound on `σ_q` (m²) so weights stay finite for noiseless data.
pub const SIGMA_Q_FLOOR: f64 = 1e-6;

/// Builds the quadratic measurement for a raw range `d_tilde` taken with
/// noise level `sigma`.
pub fn quadratic_measurement(
    a: SensorIndex,
    b: SensorIndex,
    d_tilde: f64,
    sigma: f64,
) -> DistanceMeasurement {
    let s2 = sigma * sigma;
    let two_sd = 2.0 * sigma * d_tilde;
    let sigma_q = (two_sd * two_sd + 2.0 * s2 * s2).sqrt().max(SIGMA_Q_FLOOR);
    DistanceMeasurement {
        a,
        b,
        q_tilde: d_tilde * d_tilde - s2,
        sigma_q,
        d_tilde,
    }
}

/// Simulates one noisy range per pair, drawing the noise from `rng` in pair
/// order.
pub fn simulate_measurements<R: Rng + ?Sized>(
    true_p: &Realization,
    sigma: f64,
    pairs: &[(SensorIndex, SensorIndex)],
    rng: &mut R,
) -> Vec<DistanceMeasurement> {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    pairs
        .iter()
        .map(|&(a, b)| {
            let d = (true_p.sensor(a) - true_p.sensor(b)).norm();
            let eps = if sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            quadratic_measurement(a, b, d + eps, sigma)
        })
        .collect()
}

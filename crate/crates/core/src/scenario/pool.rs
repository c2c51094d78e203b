use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::reliability::{fit_hazard, RobotId, RobotSpec};

use super::config::ScenarioConfig;

/// Heterogeneous pool with ids `1..=pool_size`.
///
/// Lifespans are normal, redrawn below a fifth of the mean. Cost and sensing
/// area scale linearly with lifespan, topping out at the configured maxima.
pub fn generate_pool<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Vec<RobotSpec> {
    let mean = config.lifespan_mean;
    let std = config.lifespan_std_fraction * mean;
    let floor = 0.2 * mean;
    let lifespans: Vec<f64> = match Normal::new(mean, std) {
        Ok(normal) if std > 0.0 => (0..config.pool_size)
            .map(|_| loop {
                let l = normal.sample(rng);
                if l >= floor {
                    break l;
                }
            })
            .collect(),
        _ => vec![mean; config.pool_size],
    };
    let lmax = lifespans.iter().copied().fold(f64::MIN, f64::max);
    lifespans
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let (base, quad) = fit_hazard(l);
            RobotSpec::with_area(
                RobotId(i as u32 + 1),
                config.max_cost * l / lmax,
                config.max_area * l / lmax,
                config.decay,
                base * config.hazard_scale,
                quad * config.hazard_scale,
                l,
            )
        })
        .collect()
}

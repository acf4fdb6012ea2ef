use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ActuatorConfig, BodyParams};
use crate::error::{Error, Result};
use crate::terrain::ContactParams;

/// Relative half-ranges of the per-instance property jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbConfig {
    pub mass: f64,
    pub inertia: f64,
    pub r_end: f64,
    pub contact_stiffness: f64,
    pub delay: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self { mass: 0.1, inertia: 0.1, r_end: 0.1, contact_stiffness: 0.1, delay: 0.1 }
    }
}

impl PerturbConfig {
    pub fn none() -> Self {
        Self { mass: 0.0, inertia: 0.0, r_end: 0.0, contact_stiffness: 0.0, delay: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let v = [self.mass, self.inertia, self.r_end, self.contact_stiffness, self.delay];
        if v.iter().all(|&x| (0.0..1.0).contains(&x)) {
            Ok(())
        } else {
            Err(Error::InvalidParams("perturbation ranges must lie in [0, 1)".into()))
        }
    }
}

/// Physical properties of one simulation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceParams {
    pub body: BodyParams,
    pub contact: ContactParams,
    pub actuator: ActuatorConfig,
}

fn jitter<R: Rng>(rng: &mut R, range: f64) -> f64 {
    if range == 0.0 {
        1.0
    } else {
        1.0 + rng.gen_range(-range..=range)
    }
}

/// Scales each property by an independent factor in `1 ± range`.
pub fn perturb_instance<R: Rng>(nominal: &InstanceParams, cfg: &PerturbConfig, rng: &mut R) -> InstanceParams {
    let mut out = nominal.clone();
    out.body.mass *= jitter(rng, cfg.mass);
    for i in 0..3 {
        out.body.inertia[(i, i)] *= jitter(rng, cfg.inertia);
    }
    out.body.r_end *= jitter(rng, cfg.r_end);
    out.contact.k_n *= jitter(rng, cfg.contact_stiffness);
    out.actuator.delay_steps = (nominal.actuator.delay_steps as f64 * jitter(rng, cfg.delay)).round() as usize;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nominal() -> InstanceParams {
        InstanceParams { body: BodyParams::default(), contact: ContactParams::default(), actuator: ActuatorConfig::default() }
    }

    #[test]
    fn zero_ranges_are_identity() {
        let n = nominal();
        assert_eq!(perturb_instance(&n, &PerturbConfig::none(), &mut ChaCha8Rng::seed_from_u64(1)), n);
    }

    #[test]
    fn mass_within_ten_percent() {
        let n = nominal();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let p = perturb_instance(&n, &PerturbConfig::default(), &mut rng);
            assert!(p.body.mass >= 4.05 - 1e-12 && p.body.mass <= 4.95 + 1e-12);
            assert!((7..=9).contains(&p.actuator.delay_steps));
            p.body.validate().unwrap();
        }
    }

    #[test]
    fn seeded() {
        let n = nominal();
        let a = perturb_instance(&n, &PerturbConfig::default(), &mut ChaCha8Rng::seed_from_u64(3));
        let b = perturb_instance(&n, &PerturbConfig::default(), &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }
}

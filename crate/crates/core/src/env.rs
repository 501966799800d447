//! I.i.d. uniformly elliptic environment laws and lazily sampled realizations.
//!
//! Directions are indexed `+e1, -e1, +e2, -e2, ...`; index `2i` is `+e_{i+1}`
//! and `2i + 1` is `-e_{i+1}`.

use std::sync::Arc;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{absorb, mix64, unit_f64, SiteStream};

/// Largest supported dimension.
pub const MAX_DIM: usize = 8;

const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("dimension {0} outside 2..={MAX_DIM}")]
    BadDimension(usize),
    #[error("kappa {kappa} outside (0, 1/(2d)] for d = {d}")]
    BadKappa { kappa: f64, d: usize },
    #[error("transition vector has {got} entries, expected {expected}")]
    WrongLength { got: usize, expected: usize },
    #[error("transition vector entry {value} at direction {index} is below kappa {kappa}")]
    BelowFloor { index: usize, value: f64, kappa: f64 },
    #[error("transition vector sums to {0}, not 1")]
    BadSum(f64),
    #[error("mixing weight {0} outside [0, 1]")]
    BadWeight(f64),
    #[error("Dirichlet concentration {0} must be finite and positive")]
    BadConcentration(f64),
    #[error("site has {got} coordinates, environment has dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Probabilities of the `2d` nearest-neighbour steps at one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionVector {
    pub probs: Vec<f64>,
}

impl TransitionVector {
    pub fn new(probs: Vec<f64>) -> Self {
        TransitionVector { probs }
    }

    /// Check length, floor `kappa` and normalization.
    pub fn validate(&self, d: usize, kappa: f64) -> Result<(), EnvError> {
        check_vector(&self.probs, d, kappa)
    }

    /// Step `+e_i` / `-e_i` probability (`i` zero-based).
    pub fn plus(&self, i: usize) -> f64 {
        self.probs[2 * i]
    }

    pub fn minus(&self, i: usize) -> f64 {
        self.probs[2 * i + 1]
    }
}

fn check_vector(p: &[f64], d: usize, kappa: f64) -> Result<(), EnvError> {
    if p.len() != 2 * d {
        return Err(EnvError::WrongLength {
            got: p.len(),
            expected: 2 * d,
        });
    }
    for (index, &value) in p.iter().enumerate() {
        // allow the floor itself up to rounding of the affine map
        if !(value >= kappa * (1.0 - 1e-12)) {
            return Err(EnvError::BelowFloor { index, value, kappa });
        }
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOLERANCE {
        return Err(EnvError::BadSum(s));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Every site carries the same vector.
    Homogeneous { probs: Vec<f64> },
    /// `plus` with probability `w`, otherwise `minus`.
    TwoPoint {
        plus: Vec<f64>,
        minus: Vec<f64>,
        w: f64,
    },
    /// `kappa + (1 - 2 d kappa) * Dirichlet(concentration)`.
    DirichletFloor { concentration: Vec<f64> },
}

/// Law of an i.i.d. environment on `Z^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentLaw {
    pub d: usize,
    pub kappa: f64,
    pub family: Family,
    /// Master seed; realizations mix it with their own seed.
    #[serde(default)]
    pub seed: u64,
}

impl EnvironmentLaw {
    pub fn homogeneous(d: usize, kappa: f64, probs: Vec<f64>) -> Result<Self, EnvError> {
        let law = EnvironmentLaw {
            d,
            kappa,
            family: Family::Homogeneous { probs },
            seed: 0,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn two_point(
        d: usize,
        kappa: f64,
        plus: Vec<f64>,
        minus: Vec<f64>,
        w: f64,
    ) -> Result<Self, EnvError> {
        let law = EnvironmentLaw {
            d,
            kappa,
            family: Family::TwoPoint { plus, minus, w },
            seed: 0,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn dirichlet_floor(
        d: usize,
        kappa: f64,
        concentration: Vec<f64>,
    ) -> Result<Self, EnvError> {
        let law = EnvironmentLaw {
            d,
            kappa,
            family: Family::DirichletFloor { concentration },
            seed: 0,
        };
        law.validate()?;
        Ok(law)
    }

    /// The simple symmetric walk law, `1/(2d)` in every direction.
    pub fn symmetric(d: usize) -> Result<Self, EnvError> {
        let p = 1.0 / (2 * d) as f64;
        Self::homogeneous(d, p, vec![p; 2 * d])
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let d = self.d;
        if !(2..=MAX_DIM).contains(&d) {
            return Err(EnvError::BadDimension(d));
        }
        let kmax = 1.0 / (2 * d) as f64;
        if !(self.kappa > 0.0 && self.kappa <= kmax) {
            return Err(EnvError::BadKappa {
                kappa: self.kappa,
                d,
            });
        }
        match &self.family {
            Family::Homogeneous { probs } => check_vector(probs, d, self.kappa),
            Family::TwoPoint { plus, minus, w } => {
                if !(0.0..=1.0).contains(w) {
                    return Err(EnvError::BadWeight(*w));
                }
                check_vector(plus, d, self.kappa)?;
                check_vector(minus, d, self.kappa)
            }
            Family::DirichletFloor { concentration } => {
                if concentration.len() != 2 * d {
                    return Err(EnvError::WrongLength {
                        got: concentration.len(),
                        expected: 2 * d,
                    });
                }
                match concentration.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
                    Some(a) => Err(EnvError::BadConcentration(*a)),
                    None => Ok(()),
                }
            }
        }
    }

    /// True when every site carries the same vector.
    pub fn is_deterministic(&self) -> bool {
        match &self.family {
            Family::Homogeneous { .. } => true,
            Family::TwoPoint { plus, minus, w } => *w == 0.0 || *w == 1.0 || plus == minus,
            Family::DirichletFloor { .. } => false,
        }
    }

    /// Compile the law once; realizations then share the compiled sampler.
    pub fn compile(&self) -> Result<CompiledLaw, EnvError> {
        self.validate()?;
        let sampler = match &self.family {
            Family::Homogeneous { probs } => Sampler::Fixed(probs.clone()),
            Family::TwoPoint { plus, minus, w } => Sampler::TwoPoint {
                plus: plus.clone(),
                minus: minus.clone(),
                w: *w,
            },
            Family::DirichletFloor { concentration } => Sampler::Dirichlet {
                gammas: concentration
                    .iter()
                    .map(|&a| Gamma::new(a, 1.0).map_err(|_| EnvError::BadConcentration(a)))
                    .collect::<Result<_, _>>()?,
                scale: 1.0 - 2.0 * self.d as f64 * self.kappa,
                kappa: self.kappa,
            },
        };
        Ok(CompiledLaw {
            law: self.clone(),
            sampler,
        })
    }
}

#[derive(Debug)]
enum Sampler {
    Fixed(Vec<f64>),
    TwoPoint {
        plus: Vec<f64>,
        minus: Vec<f64>,
        w: f64,
    },
    Dirichlet {
        gammas: Vec<Gamma<f64>>,
        scale: f64,
        kappa: f64,
    },
}

/// A validated law ready for sampling.
#[derive(Debug)]
pub struct CompiledLaw {
    law: EnvironmentLaw,
    sampler: Sampler,
}

impl CompiledLaw {
    pub fn law(&self) -> &EnvironmentLaw {
        &self.law
    }

    fn draw(&self, key: u64, out: &mut [f64]) {
        match &self.sampler {
            Sampler::Fixed(p) => out.copy_from_slice(p),
            Sampler::TwoPoint { plus, minus, w } => {
                let u = unit_f64(mix64(key));
                out.copy_from_slice(if u < *w { plus } else { minus });
            }
            Sampler::Dirichlet {
                gammas,
                scale,
                kappa,
            } => {
                let mut rng = SiteStream::new(key);
                let mut total = 0.0;
                for (o, g) in out.iter_mut().zip(gammas) {
                    let v = g.sample(&mut rng);
                    *o = v;
                    total += v;
                }
                if total == 0.0 {
                    // tiny shapes can underflow every draw
                    out.fill(1.0);
                    total = out.len() as f64;
                }
                for o in out.iter_mut() {
                    *o = kappa + scale * (*o / total);
                }
            }
        }
    }
}

/// One realization `omega` of a law: a pure function of `(law, seed, x)`.
#[derive(Debug, Clone)]
pub struct Environment {
    law: Arc<CompiledLaw>,
    realization_seed: u64,
    key: u64,
    offset: [i64; MAX_DIM],
}

impl Environment {
    pub fn new(law: &EnvironmentLaw, realization_seed: u64) -> Result<Self, EnvError> {
        Ok(Self::from_compiled(Arc::new(law.compile()?), realization_seed))
    }

    pub fn from_compiled(law: Arc<CompiledLaw>, realization_seed: u64) -> Self {
        let key = absorb(mix64(law.law.seed), realization_seed);
        Environment {
            law,
            realization_seed,
            key,
            offset: [0; MAX_DIM],
        }
    }

    /// Another realization of the same law.
    pub fn realization(&self, realization_seed: u64) -> Self {
        Self::from_compiled(self.law.clone(), realization_seed)
    }

    pub fn law(&self) -> &EnvironmentLaw {
        &self.law.law
    }

    pub fn dim(&self) -> usize {
        self.law.law.d
    }

    pub fn realization_seed(&self) -> u64 {
        self.realization_seed
    }

    /// Transition vector at `x`.
    pub fn sample_site(&self, x: &[i64]) -> Result<TransitionVector, EnvError> {
        if x.len() != self.dim() {
            return Err(EnvError::DimensionMismatch {
                got: x.len(),
                expected: self.dim(),
            });
        }
        let mut probs = vec![0.0; 2 * self.dim()];
        self.sample_into(x, &mut probs);
        Ok(TransitionVector { probs })
    }

    /// Allocation-free form of [`Environment::sample_site`]; `x` must have
    /// `d` coordinates and `out` `2d` slots.
    #[inline]
    pub fn sample_into(&self, x: &[i64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        if let Sampler::Fixed(p) = &self.law.sampler {
            out.copy_from_slice(p);
            return;
        }
        let mut key = self.key;
        for (c, o) in x.iter().zip(&self.offset) {
            key = absorb(key, c.wrapping_add(*o) as u64);
        }
        self.law.draw(key, out);
    }

    /// The shifted environment `y -> omega(x + y)`.
    pub fn translate(&self, x: &[i64]) -> Self {
        let mut e = self.clone();
        for (o, c) in e.offset.iter_mut().zip(x) {
            *o = o.wrapping_add(*c);
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn biased() -> EnvironmentLaw {
        EnvironmentLaw::homogeneous(2, 0.1, vec![0.4, 0.1, 0.25, 0.25]).unwrap()
    }

    #[test]
    fn homogeneous_ignores_site() {
        let env = Environment::new(&biased(), 3).unwrap();
        for x in [[0, 0], [5, -7], [1 << 40, 3]] {
            assert_eq!(env.sample_site(&x).unwrap().probs, vec![0.4, 0.1, 0.25, 0.25]);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_translation_consistent() {
        let law = EnvironmentLaw::dirichlet_floor(2, 0.05, vec![1.0, 0.5, 2.0, 1.5])
            .unwrap()
            .with_seed(99);
        let env = Environment::new(&law, 17).unwrap();
        let x = [3, -4];
        let a = env.sample_site(&x).unwrap();
        assert_eq!(a, env.sample_site(&x).unwrap());
        assert_eq!(a, Environment::new(&law, 17).unwrap().sample_site(&x).unwrap());
        assert_ne!(a, env.sample_site(&[3, -3]).unwrap());
        assert_ne!(a, env.realization(18).sample_site(&x).unwrap());

        let shifted = env.translate(&[1, 2]);
        assert_eq!(shifted.sample_site(&[2, -6]).unwrap(), a);
        let back = shifted.translate(&[-1, -2]);
        assert_eq!(back.sample_site(&x).unwrap(), a);
        assert_eq!(env.translate(&[0, 0]).sample_site(&x).unwrap(), a);
    }

    #[test]
    fn rejects_bad_laws() {
        assert!(matches!(
            EnvironmentLaw::homogeneous(2, 0.25, vec![0.4, 0.1, 0.25, 0.25]),
            Err(EnvError::BelowFloor { index: 1, .. })
        ));
        assert!(matches!(
            EnvironmentLaw::homogeneous(2, 0.3, vec![0.25; 4]),
            Err(EnvError::BadKappa { .. })
        ));
        assert!(matches!(
            EnvironmentLaw::homogeneous(2, 0.1, vec![0.4, 0.1, 0.25, 0.2]),
            Err(EnvError::BadSum(_))
        ));
        assert!(EnvironmentLaw::homogeneous(1, 0.1, vec![0.5, 0.5]).is_err());
        assert!(EnvironmentLaw::two_point(2, 0.1, vec![0.25; 4], vec![0.25; 4], 1.5).is_err());
        assert!(EnvironmentLaw::dirichlet_floor(2, 0.1, vec![1.0, 0.0, 1.0, 1.0]).is_err());
        let env = Environment::new(&biased(), 0).unwrap();
        assert!(matches!(
            env.sample_site(&[1, 2, 3]),
            Err(EnvError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn law_json_round_trip() {
        let js = r#"{"d":2,"kappa":0.1,"family":{"homogeneous":{"probs":[0.4,0.1,0.25,0.25]}},"seed":12345}"#;
        let law: EnvironmentLaw = serde_json::from_str(js).unwrap();
        law.validate().unwrap();
        assert_eq!(law.seed, 12345);
        let back: EnvironmentLaw =
            serde_json::from_str(&serde_json::to_string(&law).unwrap()).unwrap();
        assert_eq!(back, law);
        let tp = r#"{"d":2,"kappa":0.1,"family":{"two_point":{"plus":[0.4,0.1,0.25,0.25],"minus":[0.25,0.25,0.25,0.25],"w":0.5}}}"#;
        let law: EnvironmentLaw = serde_json::from_str(tp).unwrap();
        law.validate().unwrap();
    }
}

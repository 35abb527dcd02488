//! Bayesian inference for individual-level stochastic transmission models of
//! hospital pathogens.
//!
//! Patients on a ward are susceptible or colonized, and colonized patients are
//! either in or out of isolation. Susceptibles acquire the pathogen as the first
//! point of a non-homogeneous Poisson process whose rate depends on the number
//! (or mere presence) of colonized patients. Screening tests have imperfect
//! sensitivity and perfect specificity, so colonization times are latent and
//! are imputed alongside the parameters by a Metropolis-within-Gibbs sampler.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration and
//! the command-line front end live in the companion `nosocomial` crate.
//!
//! Module map:
//!
//! * [`types`]: episodes, ward data, parameters, augmentation.
//! * [`timeline`]: piecewise-constant ward state S(t), C(t), Q(t) and exact hazard integrals.
//! * [`likelihood`]: augmented likelihood, priors, sufficient statistics.
//! * [`mcmc`]: the sampler over parameters and colonization times.
//! * [`simulate`]: forward simulation, synthetic wards, detected-colonization series.
//! * [`assess`]: DIC₆, posterior predictive checks, unobserved carriage, efficacy pooling.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod assess;
pub mod error;
pub mod incremental;
pub mod likelihood;
pub mod math;
pub mod mcmc;
pub mod simulate;
pub mod timeline;
pub mod types;

pub use error::{Error, Result};
pub use likelihood::{log_augmented_likelihood, log_prior, PriorConfig};
pub use mcmc::{run_chain, PosteriorSamples, SamplerConfig};
pub use types::{
    AdmissionClass, Augmentation, Colonization, CountsSummary, ModelKind, PatientEpisode, TestResult,
    Theta, WardData, WardSummary,
};

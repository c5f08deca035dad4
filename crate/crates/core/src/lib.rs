//! Time-aware agent simulation of advertising campaigns.
//!
//! Given a social graph with interaction history, the crate fits an activity
//! model of *when* users are online ([`timeline`]), a survival model of *how
//! long* content keeps attracting interactions ([`lifecycle`]), and then plays
//! an influencer's advertisement forward period by period under a pluggable
//! agent behavior policy ([`agents`], [`simulator`]). The resulting interaction
//! graph ([`graph`]) is scored per influencer, ranked, and compared against the
//! real promoter set with top-k ranking metrics ([`metrics`]). Greedy influence
//! maximization baselines live in [`baselines`].
//!
//! ```no_run
//! use kolsim::dataset::{generate_synthetic, SynthSpec};
//! use kolsim::simulator::{fit_models, run_all_candidates, SimulationConfig};
//! use kolsim::agents::RuleBasedPolicy;
//!
//! let data = generate_synthetic(&SynthSpec::default(), 7).unwrap();
//! let config = SimulationConfig { seed: 7, ..Default::default() };
//! let models = fit_models(&data, &config, 7).unwrap();
//! let policy = RuleBasedPolicy::default();
//! let ranking = run_all_candidates(&data, &models, &policy, &config).unwrap().ranking;
//! println!("top influencer: {}", ranking.entries[0].influencer_id);
//! ```

pub mod agents;
pub mod baselines;
pub mod dataset;
pub mod graph;
pub mod ids;
pub mod lifecycle;
pub mod metrics;
pub mod rng;
pub mod simulator;
pub mod timeline;

pub use ids::{ContentId, UserId};

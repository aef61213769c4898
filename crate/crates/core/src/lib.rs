//! Reward engineering, task similarity, a kinematic block world, a soft
//! actor-critic learner and staged curriculum training for block stacking.

pub mod curriculum;
pub mod experiment;
pub mod env;
pub mod reward;
pub mod sac;
pub mod similarity;

//! Environment implementations.

pub mod cartpole;
pub mod generative;
pub mod supervised;
pub mod toy;

pub use cartpole::{cartpole_step, CartpoleEnv, CartpoleParams};
pub use generative::{GenerativeConfig, GenerativeEnv};
pub use supervised::{
    gen_sinusoid, gen_two_moons, sinusoid_env, supervised_epoch_stream, two_moons_env, LabelledSet, SinusoidConfig,
    SupervisedEnv, TwoMoonsConfig,
};
pub use toy::{BitQueryEnv, CoinEnv, SequenceEnv, TickEnv};

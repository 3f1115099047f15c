//! Learner implementations.

pub mod bayes;
pub mod dqn;
pub mod flow;
pub mod mlp;
pub mod supervised;
pub mod thought;

use crate::error::{Error, Result};
use crate::process::{Observation, Target};

/// Inputs and previous targets of a supervised observation.
pub(crate) fn supervised_parts(obs: &Observation) -> Result<(&[Vec<f64>], Option<&[Target]>)> {
    match obs {
        Observation::SupervisedPair { inputs, prev_targets } => Ok((inputs, prev_targets.as_deref())),
        other => Err(Error::Interface(format!("expected a supervised observation, got {other:?}"))),
    }
}

/// Pair the pending inputs with the targets that just arrived.
pub(crate) fn resolve_pending(
    pending: &[Vec<f64>],
    targets: Option<&[Target]>,
) -> Result<Option<Vec<(Vec<f64>, Target)>>> {
    match targets {
        Some(ts) if !pending.is_empty() => {
            if ts.len() != pending.len() {
                return Err(Error::Precondition(format!("{} targets for {} pending inputs", ts.len(), pending.len())));
            }
            Ok(Some(pending.iter().cloned().zip(ts.iter().cloned()).collect()))
        }
        _ => Ok(None),
    }
}

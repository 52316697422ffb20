//! Common/private information under the supported sharing patterns, and
//! suffix compression of the common information.

use serde::{Deserialize, Serialize};

use super::{Layout, Sharing};
use crate::belief::Memory;
use crate::error::{Error, Result};

/// One piece of newly shared information.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Increment {
    /// `o_1`, shared immediately under full sharing.
    Start(usize),
    /// Full sharing: `(a_h, o_{h+1})`; one-step delay: `(o_h, a_h)`.
    Step { action: usize, obs: usize },
}

/// Common information as its sequence of increments (possibly a suffix).
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CommonInfo(pub Vec<Increment>);

impl CommonInfo {
    /// Increment count of the uncompressed common information at step `h`.
    pub fn full_len(sharing: Sharing, h: usize) -> usize {
        match sharing {
            Sharing::Full => h,
            Sharing::OneStepDelay => h - 1,
        }
    }

    pub fn covers_start(&self, sharing: Sharing, h: usize) -> bool {
        self.0.len() == Self::full_len(sharing, h)
    }

    /// `c_{h+1}` from `c_h` and the new increment, keeping the last `len`.
    pub fn extend(&self, inc: Increment, len: usize) -> CommonInfo {
        let mut v = self.0.clone();
        v.push(inc);
        compress_common(&CommonInfo(v), len)
    }

    /// Full-sharing common information as a memory key over joint indices.
    pub fn to_memory(&self) -> Memory {
        let mut key = Memory { actions: Vec::new(), observations: Vec::new() };
        for inc in &self.0 {
            match *inc {
                Increment::Start(o) => key.observations.push(o),
                Increment::Step { action, obs } => {
                    key.actions.push(action);
                    key.observations.push(obs);
                }
            }
        }
        key
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InfoState {
    pub common: CommonInfo,
    /// `p_{i,h}`; `None` when nothing is private.
    pub private: Vec<Option<usize>>,
    /// The increment that produced `c_h` from `c_{h-1}` (none at `h = 1` with delayed sharing).
    pub last: Option<Increment>,
}

impl InfoState {
    /// Type index of each agent in the stage game.
    pub fn types(&self) -> Vec<usize> {
        self.private.iter().map(|p| p.unwrap_or(0)).collect()
    }
}

/// Splits a joint history `(o_1..o_h, a_1..a_{h-1})` into common and private parts.
pub fn info_split(layout: &Layout, history: &Memory) -> Result<InfoState> {
    let h = history.observations.len();
    if h == 0 || history.actions.len() + 1 != h {
        return Err(Error::InvalidArgument("history must hold o_1..o_h and a_1..a_(h-1)".into()));
    }
    let obs = &history.observations;
    let acts = &history.actions;
    Ok(match layout.sharing {
        Sharing::Full => {
            let mut c = vec![Increment::Start(obs[0])];
            c.extend((1..h).map(|t| Increment::Step { action: acts[t - 1], obs: obs[t] }));
            let last = c.last().copied();
            InfoState { common: CommonInfo(c), private: vec![None; layout.agents()], last }
        }
        Sharing::OneStepDelay => {
            let c: Vec<Increment> = (0..h - 1).map(|t| Increment::Step { action: acts[t], obs: obs[t] }).collect();
            let last = c.last().copied();
            let private = layout.split_obs(obs[h - 1]).into_iter().map(Some).collect();
            InfoState { common: CommonInfo(c), private, last }
        }
    })
}

/// Keeps the last `len` increments.
pub fn compress_common(c: &CommonInfo, len: usize) -> CommonInfo {
    let skip = c.0.len().saturating_sub(len);
    CommonInfo(c.0[skip..].to_vec())
}

/// Increment revealed between steps `h` and `h + 1`, from the joint private
/// information at `h`, the joint action and the next joint observation.
pub fn next_increment(sharing: Sharing, private_joint: usize, action: usize, next_obs: usize) -> Increment {
    match sharing {
        Sharing::Full => Increment::Step { action, obs: next_obs },
        Sharing::OneStepDelay => Increment::Step { action, obs: private_joint },
    }
}

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeedbackMode {
    /// No cross-step connections: every step is the plain feedforward network.
    None,
    /// Deep RDB outputs of step t-1 refine the inputs of the shallowest RDBs.
    Feedback,
    /// Reversed routing: shallow RDB outputs of step t-1 refine deep RDB inputs.
    AntiFeedback,
}

impl fmt::Display for FeedbackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedbackMode::None => "none",
            FeedbackMode::Feedback => "feedback",
            FeedbackMode::AntiFeedback => "anti_feedback",
        })
    }
}

impl FromStr for FeedbackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FeedbackMode::None),
            "feedback" => Ok(FeedbackMode::Feedback),
            "anti_feedback" => Ok(FeedbackMode::AntiFeedback),
            other => Err(Error::Config(format!("unknown feedback mode `{other}`"))),
        }
    }
}

/// Which RDB inputs get a gated feedback module and which step t-1 RDB
/// outputs each module reads.
///
/// In feedback mode `m` and `n` are M and N: GFMs sit before RDBs
/// `S_M = {1..M}` and GFM `b` reads `{max(b, N)..B}`. In anti-feedback mode
/// they are M̄ and N̄: GFMs sit before RDBs `{N̄..B}` and each reads the
/// shallow outputs `{1..M̄}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FeedbackTopology {
    pub mode: FeedbackMode,
    pub blocks: usize,
    pub m: usize,
    pub n: usize,
}

impl FeedbackTopology {
    pub fn new(blocks: usize, m: usize, n: usize, mode: FeedbackMode) -> Result<Self> {
        if blocks == 0 {
            return Err(Error::Topology("B must be at least 1".into()));
        }
        if mode != FeedbackMode::None {
            let (mn, nn) = if mode == FeedbackMode::Feedback { ("M", "N") } else { ("M̄", "N̄") };
            if !(1..=blocks).contains(&m) {
                return Err(Error::Topology(format!("{mn} = {m} outside [1, {blocks}]")));
            }
            if !(1..=blocks).contains(&n) {
                return Err(Error::Topology(format!("{nn} = {n} outside [1, {blocks}]")));
            }
        }
        Ok(FeedbackTopology { mode, blocks, m, n })
    }

    pub fn none(blocks: usize) -> Self {
        FeedbackTopology { mode: FeedbackMode::None, blocks, m: 0, n: 0 }
    }

    /// S_M: indices of the shallow RDBs whose input is refined (feedback mode).
    pub fn shallow_set(&self) -> Vec<usize> {
        (1..=self.m.min(self.blocks)).collect()
    }

    /// D_N: indices of the deep RDBs whose outputs are rerouted (feedback mode).
    pub fn deep_set(&self) -> Vec<usize> {
        if self.n == 0 {
            return vec![];
        }
        (self.n..=self.blocks).collect()
    }

    /// RDBs preceded by a GFM at steps t > 1, ascending.
    pub fn refined_blocks(&self) -> Vec<usize> {
        match self.mode {
            FeedbackMode::None => vec![],
            FeedbackMode::Feedback => self.shallow_set(),
            FeedbackMode::AntiFeedback => (self.n..=self.blocks).collect(),
        }
    }

    pub fn refines(&self, b: usize) -> bool {
        match self.mode {
            FeedbackMode::None => false,
            FeedbackMode::Feedback => (1..=self.m).contains(&b),
            FeedbackMode::AntiFeedback => (self.n..=self.blocks).contains(&b),
        }
    }

    /// Step t-1 RDB outputs read by the GFM before RDB `b`, ascending.
    pub fn sources_for(&self, b: usize) -> Vec<usize> {
        match self.mode {
            FeedbackMode::None => vec![],
            FeedbackMode::Feedback => (b.max(self.n)..=self.blocks).collect(),
            FeedbackMode::AntiFeedback => (1..=self.m).collect(),
        }
    }

    /// Channel-group size of the gate unit input for GFM `b`:
    /// `B - max(b, N) + 1` in feedback mode.
    pub fn group_size(&self, b: usize) -> usize {
        self.sources_for(b).len()
    }

    /// RDB outputs that must be carried to the next step.
    pub fn buffer_sources(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.refined_blocks().into_iter().flat_map(|b| self.sources_for(b)).collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_configuration_sets() {
        let t = FeedbackTopology::new(7, 1, 4, FeedbackMode::Feedback).unwrap();
        assert_eq!(t.shallow_set(), vec![1]);
        assert_eq!(t.deep_set(), vec![4, 5, 6, 7]);
        assert_eq!(t.group_size(1), 4);
        assert_eq!(t.buffer_sources(), vec![4, 5, 6, 7]);
    }

    #[test]
    fn single_to_single() {
        let t = FeedbackTopology::new(7, 1, 7, FeedbackMode::Feedback).unwrap();
        assert_eq!(t.group_size(1), 1);
        assert_eq!(t.sources_for(1), vec![7]);
    }

    #[test]
    fn bounds_are_checked() {
        assert!(FeedbackTopology::new(7, 8, 4, FeedbackMode::Feedback).is_err());
        assert!(FeedbackTopology::new(7, 1, 0, FeedbackMode::Feedback).is_err());
        assert!(FeedbackTopology::new(7, 0, 7, FeedbackMode::AntiFeedback).is_err());
        assert!(FeedbackTopology::new(7, 9, 9, FeedbackMode::None).is_ok());
    }

    #[test]
    fn group_size_formula() {
        for m in 1..=7 {
            for n in 1..=7 {
                let t = FeedbackTopology::new(7, m, n, FeedbackMode::Feedback).unwrap();
                for b in t.refined_blocks() {
                    assert_eq!(t.group_size(b), 7 - b.max(n) + 1);
                }
            }
        }
    }

    #[test]
    fn anti_feedback_routes_shallow_to_deep() {
        let t = FeedbackTopology::new(7, 3, 7, FeedbackMode::AntiFeedback).unwrap();
        assert_eq!(t.refined_blocks(), vec![7]);
        assert_eq!(t.sources_for(7), vec![1, 2, 3]);
        assert_eq!(t.buffer_sources(), vec![1, 2, 3]);
    }

    #[test]
    fn none_has_no_modules() {
        let t = FeedbackTopology::none(7);
        assert!(t.refined_blocks().is_empty());
        assert!(t.buffer_sources().is_empty());
        assert_eq!("anti_feedback".parse::<FeedbackMode>().unwrap(), FeedbackMode::AntiFeedback);
    }
}

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tree::{BlockId, BlockTree, UNCLE_DEPTH};
use super::{ForkLabel, Party};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Bitcoin,
    Ethereum,
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bitcoin" | "btc" => Ok(Protocol::Bitcoin),
            "ethereum" | "eth" => Ok(Protocol::Ethereum),
            other => Err(Error::Config(format!("unknown protocol `{other}`"))),
        }
    }
}

/// What one miner sees: the shared tree, its own tip, the public tip and the last fork event.
#[derive(Debug, Clone, Copy)]
pub struct ChainView<'a> {
    pub tree: &'a BlockTree,
    pub own_tip: BlockId,
    pub public_tip: BlockId,
    pub fork: ForkLabel,
}

/// Score features, then reward features, then the fork / action feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub score: Vec<f64>,
    pub reward_feat: Vec<f64>,
    pub action_feat: Vec<f64>,
}

impl FeatureVector {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.score.clone();
        v.extend(&self.reward_feat);
        v.extend(&self.action_feat);
        v
    }
}

pub fn extract_features(protocol: &str, view: &ChainView<'_>) -> Result<FeatureVector, Error> {
    let protocol: Protocol = protocol.parse()?;
    let t = view.tree;
    let base = t.lca(view.own_tip, view.public_tip);
    let a = t.height(view.own_tip) - t.height(base);
    let h = t.height(view.public_tip) - t.height(base);
    let reward_feat = match protocol {
        Protocol::Bitcoin => Vec::new(),
        Protocol::Ethereum => uncle_vector(t, base).iter().map(|u| *u as f64).collect(),
    };
    Ok(FeatureVector {
        score: vec![a as f64, h as f64],
        reward_feat,
        action_feat: vec![view.fork.code() as f64],
    })
}

/// Tags of the referenceable uncles hanging `1..=6` blocks below `base`:
/// 0 none, 1 strategic miner, 2 honest miner.
pub fn uncle_vector(t: &BlockTree, base: BlockId) -> [u8; UNCLE_DEPTH] {
    let mut u = [0u8; UNCLE_DEPTH];
    let top = t.height(base);
    for (i, slot) in u.iter_mut().enumerate() {
        let depth = i as u64 + 1;
        if depth > top {
            break;
        }
        let hang = t.ancestor_at(base, top - depth);
        let main_child = t.ancestor_at(base, top - depth + 1);
        let uncle = t.children(hang).find(|&c| {
            c != main_child && t.block(c).published && !t.block(c).referenced
        });
        if let Some(c) = uncle {
            *slot = match t.block(c).miner {
                Party::Agent(_) => 1,
                Party::Honest => 2,
            };
        }
    }
    u
}

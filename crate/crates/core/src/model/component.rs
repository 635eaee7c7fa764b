// SPDX-License-Identifier: Apache-2.0

//! Identity of the additive contributors to the residual stream.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// One computational unit: the embedding, a single attention head, or an MLP block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComponentId {
    Emb,
    AttnHead { layer: usize, head: usize },
    Mlp { layer: usize },
}

impl ComponentId {
    /// Computation-order stage: 0 for the embedding, `2l+1` for heads of layer
    /// `l`, `2l+2` for the MLP of layer `l`. Heads of one layer share a stage.
    pub fn stage(&self) -> usize {
        match *self {
            ComponentId::Emb => 0,
            ComponentId::AttnHead { layer, .. } => 2 * layer + 1,
            ComponentId::Mlp { layer } => 2 * layer + 2,
        }
    }

    /// Transformer layer, with the embedding placed before layer 0.
    pub fn layer(&self) -> Option<usize> {
        match *self {
            ComponentId::Emb => None,
            ComponentId::AttnHead { layer, .. } | ComponentId::Mlp { layer } => Some(layer),
        }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Dense index into the list returned by [`enumerate_components`].
    pub fn index(&self, config: &ModelConfig) -> usize {
        match *self {
            ComponentId::Emb => 0,
            ComponentId::AttnHead { layer, head } => 1 + layer * (config.n_heads + 1) + head,
            ComponentId::Mlp { layer } => 1 + layer * (config.n_heads + 1) + config.n_heads,
        }
    }

    pub fn check(&self, config: &ModelConfig) -> Result<()> {
        let ok = match *self {
            ComponentId::Emb => true,
            ComponentId::AttnHead { layer, head } => layer < config.n_layers && head < config.n_heads,
            ComponentId::Mlp { layer } => layer < config.n_layers,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Index(format!("component {self} not in model")))
        }
    }
}

/// Computation order: by stage, then by head within a layer.
impl Ord for ComponentId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let head = |c: &ComponentId| match *c {
            ComponentId::AttnHead { head, .. } => head,
            _ => 0,
        };
        (self.stage(), head(self)).cmp(&(other.stage(), head(other)))
    }
}

impl PartialOrd for ComponentId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ComponentId::Emb => f.write_str("emb"),
            ComponentId::AttnHead { layer, head } => write!(f, "attn.z.{layer}.{head}"),
            ComponentId::Mlp { layer } => write!(f, "mlp_{layer}"),
        }
    }
}

impl FromStr for ComponentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Input(format!("unknown component name {s:?}"));
        let num = |t: &str| -> Result<usize> {
            // reject "+1", "01" and friends so names stay bijective
            if t.is_empty() || (t.len() > 1 && t.starts_with('0')) || !t.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            t.parse().map_err(|_| bad())
        };
        if s == "emb" {
            return Ok(ComponentId::Emb);
        }
        if let Some(rest) = s.strip_prefix("mlp_") {
            return Ok(ComponentId::Mlp { layer: num(rest)? });
        }
        if let Some(rest) = s.strip_prefix("attn.z.") {
            let (l, h) = rest.split_once('.').ok_or_else(bad)?;
            return Ok(ComponentId::AttnHead {
                layer: num(l)?,
                head: num(h)?,
            });
        }
        Err(bad())
    }
}

/// All components of a model, sorted by stage with ties broken by head.
pub fn enumerate_components(config: &ModelConfig) -> Vec<ComponentId> {
    let mut out = Vec::with_capacity(config.num_components());
    out.push(ComponentId::Emb);
    for layer in 0..config.n_layers {
        out.extend((0..config.n_heads).map(|head| ComponentId::AttnHead { layer, head }));
        out.push(ComponentId::Mlp { layer });
    }
    out
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latencies (cycles) and capacities of the processing element model. Keys
/// missing from a JSON file keep their default values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub add: u32,
    pub mul: u32,
    pub div: u32,
    pub sqrt: u32,
    pub dot4: u32,
    pub fused_macro: u32,
    pub reg_access: u32,
    pub lm_access: u32,
    pub gm_access: u32,
    pub noc_hop: u32,
    /// FPS instructions issued per cycle.
    pub issue_width: u32,
    pub register_file: u32,
    /// Local memory capacity per tile, in words.
    pub lm_words: u64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            add: 4,
            mul: 4,
            div: 12,
            sqrt: 16,
            dot4: 8,
            fused_macro: 9,
            reg_access: 1,
            lm_access: 2,
            gm_access: 40,
            noc_hop: 4,
            issue_width: 1,
            register_file: 256,
            lm_words: 65_536,
        }
    }
}

/// Flops delivered by one DOT4 pass, the unit of peak throughput.
pub const DOT4_FLOPS: u64 = 8;

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        let latencies = [
            ("add", self.add),
            ("mul", self.mul),
            ("div", self.div),
            ("sqrt", self.sqrt),
            ("dot4", self.dot4),
            ("fused_macro", self.fused_macro),
            ("reg_access", self.reg_access),
            ("lm_access", self.lm_access),
            ("gm_access", self.gm_access),
            ("noc_hop", self.noc_hop),
            ("issue_width", self.issue_width),
        ];
        if let Some((name, _)) = latencies.iter().find(|(_, v)| *v < 1) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.register_file < 8 {
            return Err(Error::Config(format!(
                "register_file must be at least 8, got {}",
                self.register_file
            )));
        }
        if self.lm_words == 0 {
            return Err(Error::Config("lm_words must be positive".into()));
        }
        Ok(())
    }

    /// Peak flops per cycle of one tile.
    pub fn peak_flops_per_cycle(&self) -> u64 {
        DOT4_FLOPS * self.issue_width as u64
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: CostConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid cost config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

//! Machine-level instruction graphs and their cost table.

use super::config::{CostConfig, DOT4_FLOPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Op {
    /// Four products summed into an accumulator.
    Dot4,
    /// Four lanes of `a - 2 v d` on the reconfigured DOT4 datapath.
    Macro4,
    VMul4,
    VAdd4,
    VSub4,
    /// Running max-abs over four lanes.
    Max4,
    Add,
    Sub,
    Mul,
    Div,
    Sqrt,
    /// GM to LM transfer.
    Load,
    /// LM to GM transfer.
    Store,
    /// Tile-to-tile transfer over the NoC.
    Send,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Unit {
    Dot = 0,
    Add = 1,
    Mul = 2,
    Div = 3,
    Sqrt = 4,
    LoadStore = 5,
    Noc = 6,
}

pub(crate) const UNIT_COUNT: usize = 7;

impl Op {
    pub(crate) fn unit(self) -> Unit {
        match self {
            Op::Dot4 | Op::Macro4 => Unit::Dot,
            Op::VAdd4 | Op::VSub4 | Op::Max4 | Op::Add | Op::Sub => Unit::Add,
            Op::VMul4 | Op::Mul => Unit::Mul,
            Op::Div => Unit::Div,
            Op::Sqrt => Unit::Sqrt,
            Op::Load | Op::Store => Unit::LoadStore,
            Op::Send => Unit::Noc,
        }
    }

    /// Whether the instruction takes an FPS issue slot.
    pub(crate) fn is_fps(self) -> bool {
        !matches!(self, Op::Load | Op::Store | Op::Send)
    }

    pub(crate) fn flops(self) -> u64 {
        match self {
            Op::Dot4 | Op::Macro4 => DOT4_FLOPS,
            Op::VMul4 | Op::VAdd4 | Op::VSub4 => 4,
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Sqrt => 1,
            Op::Max4 | Op::Load | Op::Store | Op::Send => 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Instr {
    pub op: Op,
    pub tile: u16,
    pub hops: u16,
    pub words: u32,
}

impl Instr {
    /// `(latency, occupancy)` in cycles under `cfg`.
    pub(crate) fn timing(&self, cfg: &CostConfig) -> (u32, u32) {
        let reg = cfg.reg_access;
        let hop = self.hops as u32 * cfg.noc_hop;
        match self.op {
            Op::Dot4 => (cfg.dot4 + reg, 1),
            Op::Macro4 => (cfg.fused_macro + reg, 1),
            Op::VMul4 | Op::Mul => (cfg.mul + reg, 1),
            Op::VAdd4 | Op::VSub4 | Op::Max4 | Op::Add | Op::Sub => (cfg.add + reg, 1),
            Op::Div => (cfg.div + reg, cfg.div),
            Op::Sqrt => (cfg.sqrt + reg, cfg.sqrt),
            Op::Load | Op::Store => (self.words + cfg.lm_access + cfg.gm_access + hop, self.words.max(1)),
            Op::Send => {
                let beats = self.words.div_ceil(4).max(1);
                (hop + beats, beats)
            }
        }
    }
}

/// Instructions in topological order with CSR predecessor lists.
#[derive(Debug, Clone)]
pub(crate) struct Program {
    pub instrs: Vec<Instr>,
    pred_offsets: Vec<u32>,
    preds: Vec<u32>,
    pub tiles: usize,
    scratch: Vec<u32>,
}

impl Program {
    pub(crate) fn new(tiles: usize) -> Self {
        Self {
            instrs: Vec::new(),
            pred_offsets: vec![0],
            preds: Vec::new(),
            tiles,
            scratch: Vec::new(),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.instrs.len()
    }

    pub(crate) fn push(&mut self, instr: Instr, preds: &[u32]) -> u32 {
        let id = self.instrs.len() as u32;
        debug_assert!((instr.tile as usize) < self.tiles);
        self.scratch.clear();
        self.scratch.extend(preds.iter().copied().filter(|&p| p != u32::MAX));
        self.scratch.sort_unstable();
        self.scratch.dedup();
        assert!(
            self.scratch.last().is_none_or(|&p| p < id),
            "predecessor must precede its consumer"
        );
        self.preds.extend_from_slice(&self.scratch);
        self.pred_offsets.push(self.preds.len() as u32);
        self.instrs.push(instr);
        id
    }

    pub(crate) fn preds(&self, id: usize) -> &[u32] {
        &self.preds[self.pred_offsets[id] as usize..self.pred_offsets[id + 1] as usize]
    }

    pub(crate) fn flops(&self) -> u64 {
        self.instrs.iter().map(|i| i.op.flops()).sum()
    }

    /// Successor lists in CSR form.
    pub(crate) fn successors(&self) -> (Vec<u32>, Vec<u32>) {
        let n = self.len();
        let mut counts = vec![0u32; n + 1];
        for &p in &self.preds {
            counts[p as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut succ = vec![0u32; self.preds.len()];
        for i in 0..n {
            for &p in self.preds(i) {
                succ[fill[p as usize] as usize] = i as u32;
                fill[p as usize] += 1;
            }
        }
        (offsets, succ)
    }
}

//! Cycle-cost model of a DOT4-based processing element and of square tile
//! arrays built from it.
//!
//! Routines are lowered to four-lane machine instructions (DOT4 passes, the
//! fused `a - 2 v d` macro on the reconfigured DOT4, vector and scalar ops,
//! loads, stores and NoC sends) and list-scheduled against per-tile
//! functional units. Results are deterministic for a given configuration.

mod config;
mod lower;
mod program;
mod schedule;

use serde::{Deserialize, Serialize};

pub use config::{CostConfig, DOT4_FLOPS};

use crate::error::{Error, Result};
use crate::modified::fused_macro_op;
use crate::routine::{Routine, DEFAULT_BLOCK_SIZE};
use lower::{gemm_program, Grid, Lowerer};
use program::Program;
use schedule::{list_schedule, validate, Schedule};

/// Four-element inner product summed as `(p1 + p2) + (p3 + p4)`.
pub fn dot4(pairs: &[(f64, f64); 4]) -> f64 {
    let p: [f64; 4] = pairs.map(|(v, a)| v * a);
    (p[0] + p[1]) + (p[2] + p[3])
}

/// The fused update on the reconfigured DOT4: `a - 2 v_i dot4(pairs)`.
pub fn dot4_macro(a: f64, v_i: f64, pairs: &[(f64, f64); 4]) -> f64 {
    fused_macro_op(a, v_i, dot4(pairs))
}

/// Cycle summary of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    /// Routine name, or `gemm`.
    pub routine: String,
    pub m: usize,
    pub n: usize,
    pub total_cycles: u64,
    /// Cycles the datapath needs at peak rate for the routine's arithmetic.
    pub fp_busy_cycles: f64,
    pub utilization: f64,
    /// Nominal operation count of the computation (same for every QR routine
    /// of a given shape), the basis of the utilization figures.
    pub flops: u64,
    /// Flops actually pushed through the datapath, padding and redundant work
    /// included.
    pub issued_flops: u64,
    pub flops_per_cycle: f64,
    pub instructions: u64,
}

/// Per-tile share of a tile-array run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileSummary {
    pub row: usize,
    pub col: usize,
    pub issued_flops: u64,
    pub fp_busy_cycles: f64,
    pub utilization: f64,
}

/// Result of a tile-array run, compared against the single-tile run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelReport {
    pub routine: Routine,
    pub k: usize,
    pub n: usize,
    pub block_size: Option<usize>,
    pub total_cycles: u64,
    pub baseline_cycles: u64,
    /// Nominal operation count.
    pub flops: u64,
    pub issued_flops: u64,
    /// Nominal flops over `cycles * peak * k^2`.
    pub utilization: f64,
    pub speedup: f64,
    /// `speedup / k^2`.
    pub efficiency: f64,
    pub tiles: Vec<TileSummary>,
}

/// Model analogues of the headline performance ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n: usize,
    pub config: CostConfig,
    pub block_size: usize,
    pub utilization_mht_over_gemm: f64,
    pub speedup_mht_over_ht: f64,
    pub speedup_mht_over_blocked_ht: f64,
    pub reports: Vec<CycleReport>,
}

/// Standard operation count of Householder QR of an `m x n` matrix.
pub fn qr_flops(m: usize, n: usize) -> u64 {
    let (m, n) = (m as f64, n as f64);
    (2.0 * m * n * n - 2.0 * n * n * n / 3.0).round() as u64
}

/// Operation count of an `n x n` matrix product.
pub fn gemm_flops(n: usize) -> u64 {
    2 * (n as u64).pow(3)
}

fn report(name: &str, m: usize, n: usize, flops: u64, prog: &Program, sched: &Schedule, cfg: &CostConfig) -> CycleReport {
    let peak = cfg.peak_flops_per_cycle() as f64;
    let cycles = sched.makespan.max(1);
    let fp_busy = flops as f64 / peak;
    CycleReport {
        routine: name.to_string(),
        m,
        n,
        total_cycles: cycles,
        fp_busy_cycles: fp_busy,
        utilization: fp_busy / cycles as f64,
        flops,
        issued_flops: prog.flops(),
        flops_per_cycle: flops as f64 / cycles as f64,
        instructions: prog.len() as u64,
    }
}

fn check_shape(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::dim(format!("empty shape {m}x{n}")));
    }
    if m < n {
        return Err(Error::WideMatrix { rows: m, cols: n });
    }
    Ok(())
}

fn resolve_block(routine: Routine, block_size: Option<usize>, n: usize) -> Result<usize> {
    if !routine.is_blocked() {
        return Ok(1);
    }
    match block_size.unwrap_or(DEFAULT_BLOCK_SIZE) {
        0 => Err(Error::BlockSize { block_size: 0, cols: n }),
        bs => Ok(bs.min(n)),
    }
}

fn build(routine: Routine, m: usize, n: usize, grid: Grid, block: usize) -> Program {
    let mut low = Lowerer::new(m, n, grid);
    low.load_matrix();
    match routine {
        Routine::Ht => low.unblocked(false),
        Routine::Mht => low.unblocked(true),
        Routine::BlockedHt => low.blocked(block, false),
        Routine::BlockedMht => low.blocked(block, true),
    }
    low.store_matrix();
    low.finish()
}

fn check_local_memory(cfg: &CostConfig, rows: usize, block: usize) -> Result<()> {
    let need = (rows * block) as u64;
    if need > cfg.lm_words {
        return Err(Error::Config(format!(
            "local memory of {} words cannot hold a {rows}x{block} block column",
            cfg.lm_words
        )));
    }
    Ok(())
}

struct Run {
    prog: Program,
    sched: Schedule,
}

fn run_pe(routine: Routine, m: usize, n: usize, cfg: &CostConfig, block_size: Option<usize>) -> Result<Run> {
    cfg.validate()?;
    check_shape(m, n)?;
    let block = resolve_block(routine, block_size, n)?;
    check_local_memory(cfg, m, block)?;
    let prog = build(routine, m, n, Grid { k: 1, rb: m, cb: n }, block);
    let sched = list_schedule(&prog, cfg);
    Ok(Run { prog, sched })
}

/// Single-PE run of `routine` on an `m x n` matrix with the default block size.
pub fn simulate_pe(routine: Routine, m: usize, n: usize, cfg: &CostConfig) -> Result<CycleReport> {
    simulate_pe_with_block(routine, m, n, cfg, None)
}

pub fn simulate_pe_with_block(
    routine: Routine,
    m: usize,
    n: usize,
    cfg: &CostConfig,
    block_size: Option<usize>,
) -> Result<CycleReport> {
    let run = run_pe(routine, m, n, cfg, block_size)?;
    Ok(report(routine.name(), m, n, qr_flops(m, n), &run.prog, &run.sched, cfg))
}

/// Runs the single-PE simulation and checks its issue trace with the
/// independent validator.
pub fn simulate_pe_checked(
    routine: Routine,
    m: usize,
    n: usize,
    cfg: &CostConfig,
    block_size: Option<usize>,
) -> Result<CycleReport> {
    let run = run_pe(routine, m, n, cfg, block_size)?;
    validate(&run.prog, cfg, &run.sched).map_err(|e| Error::Config(format!("invalid schedule: {e}")))?;
    Ok(report(routine.name(), m, n, qr_flops(m, n), &run.prog, &run.sched, cfg))
}

/// Longest latency-weighted dependency chain of the single-PE program.
pub fn critical_path_cycles(routine: Routine, m: usize, n: usize, cfg: &CostConfig) -> Result<u64> {
    cfg.validate()?;
    check_shape(m, n)?;
    let block = resolve_block(routine, None, n)?;
    let prog = build(routine, m, n, Grid { k: 1, rb: m, cb: n }, block);
    let mut finish = vec![0u64; prog.len()];
    let mut longest = 0;
    for i in 0..prog.len() {
        let start = prog.preds(i).iter().map(|&p| finish[p as usize]).max().unwrap_or(0);
        finish[i] = start + prog.instrs[i].timing(cfg).0 as u64;
        longest = longest.max(finish[i]);
    }
    Ok(longest)
}

/// DOT4-tiled `n x n` matrix multiply on one PE.
pub fn simulate_gemm(n: usize, cfg: &CostConfig) -> Result<CycleReport> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::dim("empty gemm"));
    }
    let prog = gemm_program(n);
    let sched = list_schedule(&prog, cfg);
    Ok(report("gemm", n, n, gemm_flops(n), &prog, &sched, cfg))
}

/// `routine` on an `n x n` matrix spread over a `k x k` tile array.
pub fn simulate_tile_array(routine: Routine, n: usize, k: usize, cfg: &CostConfig) -> Result<ParallelReport> {
    let mut all = tile_array_sweep(routine, n, &[k], cfg, None)?;
    Ok(all.remove(0))
}

/// Tile-array runs for several `k`, sharing one single-tile baseline.
pub fn tile_array_sweep(
    routine: Routine,
    n: usize,
    ks: &[usize],
    cfg: &CostConfig,
    block_size: Option<usize>,
) -> Result<Vec<ParallelReport>> {
    cfg.validate()?;
    check_shape(n, n)?;
    for &k in ks {
        if !(1..=4).contains(&k) {
            return Err(Error::Config(format!("tile array dimension {k} outside 1..=4")));
        }
        if !n.is_multiple_of(k) {
            return Err(Error::Config(format!("matrix size {n} is not divisible by {k}")));
        }
    }
    let block = resolve_block(routine, block_size, n)?;
    let peak = cfg.peak_flops_per_cycle() as f64;
    let run = |k: usize| -> Result<(u64, u64, Vec<TileSummary>)> {
        let b = n / k;
        check_local_memory(cfg, b, block)?;
        let prog = build(routine, n, n, Grid { k, rb: b, cb: b }, block);
        let sched = list_schedule(&prog, cfg);
        let cycles = sched.makespan.max(1);
        let mut per_tile = vec![0u64; k * k];
        for ins in &prog.instrs {
            per_tile[ins.tile as usize] += ins.op.flops();
        }
        let tiles = per_tile
            .iter()
            .enumerate()
            .map(|(t, &f)| TileSummary {
                row: t / k,
                col: t % k,
                issued_flops: f,
                fp_busy_cycles: f as f64 / peak,
                utilization: f as f64 / peak / cycles as f64,
            })
            .collect();
        Ok((cycles, prog.flops(), tiles))
    };
    let base = run(1)?;
    let baseline = base.0;
    let flops = qr_flops(n, n);
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let (cycles, issued_flops, tiles) = if k == 1 { base.clone() } else { run(k)? };
        let speedup = baseline as f64 / cycles as f64;
        out.push(ParallelReport {
            routine,
            k,
            n,
            block_size: routine.is_blocked().then_some(block),
            total_cycles: cycles,
            baseline_cycles: baseline,
            flops,
            issued_flops,
            utilization: flops as f64 / (cycles as f64 * peak * (k * k) as f64),
            speedup,
            efficiency: speedup / (k * k) as f64,
            tiles,
        });
    }
    Ok(out)
}

/// Headline ratios of the model at size `n` with the default block size.
pub fn calibrate_report(cfg: &CostConfig, n: usize) -> Result<CalibrationReport> {
    let ht = simulate_pe(Routine::Ht, n, n, cfg)?;
    let mht = simulate_pe(Routine::Mht, n, n, cfg)?;
    let bht = simulate_pe(Routine::BlockedHt, n, n, cfg)?;
    let gemm = simulate_gemm(n, cfg)?;
    Ok(CalibrationReport {
        n,
        config: *cfg,
        block_size: DEFAULT_BLOCK_SIZE,
        utilization_mht_over_gemm: mht.utilization / gemm.utilization,
        speedup_mht_over_ht: ht.total_cycles as f64 / mht.total_cycles as f64,
        speedup_mht_over_blocked_ht: bht.total_cycles as f64 / mht.total_cycles as f64,
        reports: vec![ht, mht, bht, gemm],
    })
}

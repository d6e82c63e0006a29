//! Latency-weighted list scheduling of a [`Program`] onto its tiles, plus an
//! independent checker for the produced issue trace.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::config::CostConfig;
use super::program::{Program, Unit, UNIT_COUNT};

/// Issue and completion cycle of every instruction.
#[derive(Debug, Clone)]
pub(crate) struct Schedule {
    pub issue: Vec<u32>,
    pub finish: Vec<u32>,
    pub makespan: u64,
}

const FPS_UNITS: [Unit; 5] = [Unit::Dot, Unit::Add, Unit::Mul, Unit::Div, Unit::Sqrt];

/// Critical-path length from each instruction to the end of the program.
fn bottom_levels(prog: &Program, cfg: &CostConfig) -> Vec<u32> {
    let mut level: Vec<u32> = prog.instrs.iter().map(|i| i.timing(cfg).0).collect();
    for id in (0..prog.len()).rev() {
        let below = level[id];
        for &p in prog.preds(id) {
            let lat = prog.instrs[p as usize].timing(cfg).0;
            let cand = lat + below;
            if cand > level[p as usize] {
                level[p as usize] = cand;
            }
        }
    }
    level
}

type ReadyHeap = BinaryHeap<(u32, Reverse<u32>)>;

/// Greedy cycle-by-cycle list scheduler. Among ready instructions the one with
/// the longest remaining critical path issues first, ties to the lower id.
pub(crate) fn list_schedule(prog: &Program, cfg: &CostConfig) -> Schedule {
    let n = prog.len();
    let priority = bottom_levels(prog, cfg);
    let (succ_off, succ) = prog.successors();
    let timing: Vec<(u32, u32)> = prog.instrs.iter().map(|i| i.timing(cfg)).collect();

    let mut waiting: Vec<u32> = (0..n).map(|i| prog.preds(i).len() as u32).collect();
    let mut ready_at = vec![0u32; n];
    let mut issue = vec![0u32; n];
    let mut finish = vec![0u32; n];

    let tiles = prog.tiles;
    let mut heaps: Vec<ReadyHeap> = (0..tiles * UNIT_COUNT).map(|_| BinaryHeap::new()).collect();
    let mut unit_free = vec![0u32; tiles * UNIT_COUNT];
    let mut queued_on_tile = vec![0usize; tiles];

    // Instructions whose operands arrive later, bucketed by arrival cycle.
    // Arrivals are never more than one maximal latency ahead of `now`.
    let horizon = timing.iter().map(|t| t.0 as usize).max().unwrap_or(1) + 2;
    let ring = horizon.next_power_of_two();
    let mask = ring - 1;
    let mut wheel: Vec<Vec<u32>> = vec![Vec::new(); ring];
    let mut in_wheel = 0usize;
    for (id, &w) in waiting.iter().enumerate() {
        if w == 0 {
            wheel[0].push(id as u32);
            in_wheel += 1;
        }
    }

    let width = cfg.issue_width as usize;
    let mut done = 0usize;
    let mut now = 0u32;
    let mut makespan = 0u64;
    let mut issued = Vec::new();
    while done < n {
        let bucket = std::mem::take(&mut wheel[now as usize & mask]);
        in_wheel -= bucket.len();
        for &id in &bucket {
            let ins = &prog.instrs[id as usize];
            let slot = ins.tile as usize * UNIT_COUNT + ins.op.unit() as usize;
            heaps[slot].push((priority[id as usize], Reverse(id)));
            queued_on_tile[ins.tile as usize] += 1;
        }
        let mut bucket = bucket;
        bucket.clear();
        wheel[now as usize & mask] = bucket;

        for tile in (0..tiles).filter(|&t| queued_on_tile[t] > 0) {
            let base = tile * UNIT_COUNT;
            for _ in 0..width {
                let best = FPS_UNITS
                    .iter()
                    .map(|&u| base + u as usize)
                    .filter(|&s| unit_free[s] <= now)
                    .filter_map(|s| heaps[s].peek().map(|&top| (top, s)))
                    .max();
                let Some((_, s)) = best else { break };
                let (_, Reverse(id)) = heaps[s].pop().expect("peeked");
                unit_free[s] = now + timing[id as usize].1;
                issued.push(id);
            }
            for u in [Unit::LoadStore, Unit::Noc] {
                let s = base + u as usize;
                if unit_free[s] <= now {
                    if let Some((_, Reverse(id))) = heaps[s].pop() {
                        unit_free[s] = now + timing[id as usize].1;
                        issued.push(id);
                    }
                }
            }
        }

        for id in issued.drain(..) {
            let i = id as usize;
            queued_on_tile[prog.instrs[i].tile as usize] -= 1;
            issue[i] = now;
            let end = now + timing[i].0;
            finish[i] = end;
            makespan = makespan.max(end as u64);
            done += 1;
            for &s in &succ[succ_off[i] as usize..succ_off[i + 1] as usize] {
                let s = s as usize;
                ready_at[s] = ready_at[s].max(end);
                waiting[s] -= 1;
                if waiting[s] == 0 {
                    wheel[ready_at[s] as usize & mask].push(s as u32);
                    in_wheel += 1;
                }
            }
        }

        if done == n {
            break;
        }
        let mut next = u32::MAX;
        for tile in (0..tiles).filter(|&t| queued_on_tile[t] > 0) {
            for u in 0..UNIT_COUNT {
                let s = tile * UNIT_COUNT + u;
                if !heaps[s].is_empty() {
                    next = next.min(unit_free[s].max(now + 1));
                }
            }
        }
        if in_wheel > 0 && next > now + 1 {
            let limit = (next as u64).min(now as u64 + ring as u64) as u32;
            if let Some(t) = (now + 1..limit).find(|&t| !wheel[t as usize & mask].is_empty()) {
                next = t;
            }
        }
        now = next;
    }

    Schedule {
        issue,
        finish,
        makespan,
    }
}

/// Checks dependency order, per-tile issue width and unit occupancy of a
/// schedule without reusing any scheduler state.
pub(crate) fn validate(prog: &Program, cfg: &CostConfig, sched: &Schedule) -> Result<(), String> {
    let n = prog.len();
    if sched.issue.len() != n || sched.finish.len() != n {
        return Err("schedule length mismatch".into());
    }
    for i in 0..n {
        let (lat, _) = prog.instrs[i].timing(cfg);
        if sched.finish[i] != sched.issue[i] + lat {
            return Err(format!("instruction {i} finish does not match its latency"));
        }
        for &p in prog.preds(i) {
            if sched.issue[i] < sched.finish[p as usize] {
                return Err(format!("instruction {i} issued before predecessor {p} completed"));
            }
        }
        if sched.finish[i] as u64 > sched.makespan {
            return Err(format!("instruction {i} ends after the makespan"));
        }
    }

    let mut fps: Vec<(u16, u32)> = (0..n)
        .filter(|&i| prog.instrs[i].op.is_fps())
        .map(|i| (prog.instrs[i].tile, sched.issue[i]))
        .collect();
    fps.sort_unstable();
    for group in fps.chunk_by(|a, b| a == b) {
        if group.len() > cfg.issue_width as usize {
            return Err(format!(
                "tile {} issued {} instructions in cycle {}",
                group[0].0,
                group.len(),
                group[0].1
            ));
        }
    }

    let mut busy: Vec<(u16, u8, u32, u32)> = (0..n)
        .map(|i| {
            let ins = &prog.instrs[i];
            let (_, occ) = ins.timing(cfg);
            (ins.tile, ins.op.unit() as u8, sched.issue[i], sched.issue[i] + occ)
        })
        .collect();
    busy.sort_unstable();
    for pair in busy.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.0 == b.0 && a.1 == b.1 && b.2 < a.3 {
            return Err(format!("unit {} on tile {} double-booked at cycle {}", a.1, a.0, b.2));
        }
    }
    Ok(())
}

//! Scalar operation DAGs of the factorization routines and the level-based
//! parallelism metrics derived from them.
//!
//! Every scalar floating-point primitive becomes one node; reductions are
//! balanced binary trees in index order. Levels are ASAP with unit latency, so
//! `beta = total_ops / num_levels` is the average work available per level and
//! `theta = levels(fused) / levels(classical)`.
//!
//! The classical trace follows the two-stage update: the unit vector `v` is
//! formed by dividing the column by `2r`, `w = v^T a` is reduced, and each
//! entry is updated as outer product, scale, subtract. The fused trace keeps
//! the raw column, reduces `S = x(2:L)^T a(2:L)` concurrently with the norm,
//! normalizes `(beta * a1 + S)` by `(2r)^2` and finishes with one fused
//! `a - 2 x w` node per entry.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::routine::Routine;

/// Scalar operation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    Sqrt,
    /// Magnitude comparison inside the max-abs pass of the norm.
    Cmp,
    /// Addition inside a dot-product reduction tree.
    ReduceStep,
    /// `a - 2 v d` evaluated as multiply, double, subtract.
    FusedMacro,
}

impl OpKind {
    /// Floating-point operations represented by one node.
    pub fn flops(self) -> u64 {
        match self {
            OpKind::FusedMacro => 3,
            _ => 1,
        }
    }
}

/// What part of the algorithm a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Norm, reflector scalars and vector normalization.
    Reflector,
    /// Trailing-matrix arithmetic `a - 2 v (v^T a)`.
    Update,
    /// Aggregation of a panel's reflectors (blocked routines only).
    Aggregate,
}

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpNode {
    pub id: NodeId,
    pub kind: OpKind,
    pub phase: Phase,
    pub predecessors: Vec<NodeId>,
}

/// Explicit operation DAG with ASAP levels (sources sit at level 1).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OpDag {
    nodes: Vec<OpNode>,
    levels: Vec<u32>,
    total_ops: u64,
    num_levels: u32,
}

impl OpDag {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a node; predecessors must already exist.
    pub fn push(&mut self, kind: OpKind, predecessors: &[NodeId]) -> Result<NodeId> {
        self.push_in_phase(kind, Phase::Update, predecessors)
    }

    pub fn push_in_phase(&mut self, kind: OpKind, phase: Phase, predecessors: &[NodeId]) -> Result<NodeId> {
        let id = self.nodes.len() as NodeId;
        if let Some(&bad) = predecessors.iter().find(|&&p| p >= id) {
            return Err(Error::dim(format!("predecessor {bad} of node {id} does not exist yet")));
        }
        let level = 1 + predecessors.iter().map(|&p| self.levels[p as usize]).max().unwrap_or(0);
        self.levels.push(level);
        self.num_levels = self.num_levels.max(level);
        self.total_ops += kind.flops();
        let mut preds = predecessors.to_vec();
        preds.sort_unstable();
        preds.dedup();
        self.nodes.push(OpNode {
            id,
            kind,
            phase,
            predecessors: preds,
        });
        Ok(id)
    }

    pub fn nodes(&self) -> &[OpNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn level_of(&self, id: NodeId) -> u32 {
        self.levels[id as usize]
    }

    /// Floating-point operation count (fused nodes count three).
    pub fn total_ops(&self) -> u64 {
        self.total_ops
    }

    pub fn num_levels(&self) -> u32 {
        self.num_levels
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Operation count restricted to one phase.
    pub fn phase_ops(&self, phase: Phase) -> u64 {
        self.nodes
            .iter()
            .filter(|n| n.phase == phase)
            .map(|n| n.kind.flops())
            .sum()
    }

    /// Independent acyclicity check (Kahn's algorithm) plus level consistency
    /// on every edge.
    pub fn verify(&self) -> bool {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        for node in &self.nodes {
            for &p in &node.predecessors {
                if p as usize >= n {
                    return false;
                }
                succ[p as usize].push(node.id as usize);
                indeg[node.id as usize] += 1;
                if self.levels[p as usize] >= self.levels[node.id as usize] {
                    return false;
                }
            }
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = stack.pop() {
            seen += 1;
            for &s in &succ[i] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    stack.push(s);
                }
            }
        }
        seen == n
    }
}

/// `total_ops / num_levels`.
pub fn beta(dag: &OpDag) -> Result<f64> {
    if dag.is_empty() {
        return Err(Error::EmptyDag);
    }
    Ok(dag.total_ops() as f64 / dag.num_levels() as f64)
}

/// Summary of one traced routine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelismReport {
    pub routine: Routine,
    pub m: usize,
    pub n: usize,
    pub block_size: Option<usize>,
    pub beta: f64,
    pub num_levels: u64,
    pub total_ops: u64,
    pub node_count: u64,
    /// Operations spent on the trailing update arithmetic.
    pub update_ops: u64,
}

/// Handle to a traced value: node id (or `INPUT` for matrix entries) and level.
#[derive(Debug, Clone, Copy)]
struct Val {
    id: NodeId,
    level: u32,
}

const INPUT: NodeId = NodeId::MAX;

impl Val {
    const fn input() -> Self {
        Val { id: INPUT, level: 0 }
    }
}

trait Sink {
    fn emit(&mut self, kind: OpKind, phase: Phase, preds: &[Val]) -> Val;
}

impl Sink for OpDag {
    fn emit(&mut self, kind: OpKind, phase: Phase, preds: &[Val]) -> Val {
        let ids: Vec<NodeId> = preds.iter().filter(|v| v.id != INPUT).map(|v| v.id).collect();
        let id = self.push_in_phase(kind, phase, &ids).expect("tracer emits in topological order");
        Val {
            id,
            level: self.level_of(id),
        }
    }
}

/// Streaming sink that keeps only counts and the deepest level.
#[derive(Debug, Default)]
struct Counter {
    nodes: u64,
    ops: u64,
    update_ops: u64,
    num_levels: u32,
}

impl Sink for Counter {
    fn emit(&mut self, kind: OpKind, phase: Phase, preds: &[Val]) -> Val {
        let level = 1 + preds.iter().map(|v| v.level).max().unwrap_or(0);
        self.num_levels = self.num_levels.max(level);
        let id = self.nodes as NodeId;
        self.nodes += 1;
        self.ops += kind.flops();
        if phase == Phase::Update {
            self.update_ops += kind.flops();
        }
        Val { id, level }
    }
}

fn tree<S: Sink>(sink: &mut S, kind: OpKind, phase: Phase, xs: &[Val]) -> Val {
    match xs.len() {
        0 => unreachable!("reduction over nothing"),
        1 => xs[0],
        len => {
            let mid = len.div_ceil(2);
            let l = tree(sink, kind, phase, &xs[..mid]);
            let r = tree(sink, kind, phase, &xs[mid..]);
            sink.emit(kind, phase, &[l, r])
        }
    }
}

/// Scalars shared by both update paths.
struct ReflectorVals {
    alpha: Val,
    beta: Val,
    two_r: Val,
}

struct Tracer<'s, S: Sink> {
    sink: &'s mut S,
    m: usize,
    vals: Vec<Val>,
}

impl<'s, S: Sink> Tracer<'s, S> {
    fn new(sink: &'s mut S, m: usize, n: usize) -> Self {
        Self {
            sink,
            m,
            vals: vec![Val::input(); m * n],
        }
    }

    fn at(&self, i: usize, j: usize) -> Val {
        self.vals[j * self.m + i]
    }

    fn put(&mut self, i: usize, j: usize, v: Val) {
        self.vals[j * self.m + i] = v;
    }

    fn op(&mut self, kind: OpKind, phase: Phase, preds: &[Val]) -> Val {
        self.sink.emit(kind, phase, preds)
    }

    fn column(&self, j: usize, from: usize) -> Vec<Val> {
        (from..self.m).map(|i| self.at(i, j)).collect()
    }

    /// Scaled two-pass norm followed by the reflector scalars.
    fn reflector(&mut self, x: &[Val]) -> ReflectorVals {
        use OpKind::*;
        let ph = Phase::Reflector;
        let scale = tree(self.sink, Cmp, ph, x);
        let inv = self.op(Div, ph, &[scale]);
        let squares: Vec<Val> = x
            .iter()
            .map(|&xi| {
                let s = self.op(Mul, ph, &[xi, inv]);
                self.op(Mul, ph, &[s])
            })
            .collect();
        let sum = tree(self.sink, ReduceStep, ph, &squares);
        let root = self.op(Sqrt, ph, &[sum]);
        let norm = self.op(Mul, ph, &[root, scale]);
        let x1 = x[0];
        let alpha = self.op(Mul, ph, &[norm, x1]);
        let alpha_sq = self.op(Mul, ph, &[alpha]);
        let x1_alpha = self.op(Mul, ph, &[x1, alpha]);
        let diff = self.op(Sub, ph, &[alpha_sq, x1_alpha]);
        let half = self.op(Mul, ph, &[diff]);
        let r = self.op(Sqrt, ph, &[half]);
        let two_r = self.op(Add, ph, &[r]);
        let beta = self.op(Sub, ph, &[x1, alpha]);
        ReflectorVals { alpha, beta, two_r }
    }

    /// Unit vector `v = (beta, x2, ..., xL) / 2r`.
    fn unit_vector(&mut self, x: &[Val], rv: &ReflectorVals) -> Vec<Val> {
        let mut v = Vec::with_capacity(x.len());
        v.push(self.op(OpKind::Div, Phase::Reflector, &[rv.beta, rv.two_r]));
        for &xi in &x[1..] {
            v.push(self.op(OpKind::Div, Phase::Reflector, &[xi, rv.two_r]));
        }
        v
    }

    fn classic_column(&mut self, k: usize, cols: std::ops::Range<usize>) -> Vec<Val> {
        use OpKind::*;
        let x = self.column(k, k);
        let rv = self.reflector(&x);
        let v = self.unit_vector(&x, &rv);
        let ph = Phase::Update;
        for j in cols {
            let a = self.column(j, k);
            let prods: Vec<Val> = v.iter().zip(&a).map(|(&vi, &ai)| self.op(Mul, ph, &[vi, ai])).collect();
            let w = tree(self.sink, ReduceStep, ph, &prods);
            for (r, (&vi, &ai)) in v.iter().zip(&a).enumerate() {
                let t = self.op(Mul, ph, &[vi, w]);
                let u = self.op(Add, ph, &[t]);
                let out = self.op(Sub, ph, &[ai, u]);
                self.put(k + r, j, out);
            }
        }
        self.put(k, k, rv.alpha);
        for (r, &vi) in v.iter().enumerate().skip(1) {
            self.put(k + r, k, vi);
        }
        v
    }

    fn fused_column(&mut self, k: usize, cols: std::ops::Range<usize>, need_v: bool) -> Option<Vec<Val>> {
        use OpKind::*;
        let x = self.column(k, k);
        let rv = self.reflector(&x);
        let ph = Phase::Update;
        let scale_sq = self.op(Mul, Phase::Reflector, &[rv.two_r]);
        for j in cols {
            let a = self.column(j, k);
            let head = self.op(Mul, ph, &[rv.beta, a[0]]);
            let total = if x.len() > 1 {
                let prods: Vec<Val> = x[1..]
                    .iter()
                    .zip(&a[1..])
                    .map(|(&xi, &ai)| self.op(Mul, ph, &[xi, ai]))
                    .collect();
                let s = tree(self.sink, ReduceStep, ph, &prods);
                self.op(Add, ph, &[head, s])
            } else {
                head
            };
            let w = self.op(Div, Phase::Reflector, &[total, scale_sq]);
            for (r, &ai) in a.iter().enumerate() {
                let xr = if r == 0 { rv.beta } else { x[r] };
                let out = self.op(FusedMacro, ph, &[ai, xr, w]);
                self.put(k + r, j, out);
            }
        }
        self.put(k, k, rv.alpha);
        need_v.then(|| self.unit_vector(&x, &rv))
    }

    fn unblocked(&mut self, n: usize, fused: bool) {
        for k in 0..n {
            if fused {
                self.fused_column(k, k + 1..n, false);
            } else {
                self.classic_column(k, k + 1..n);
            }
        }
    }

    fn blocked(&mut self, n: usize, block: usize, fused: bool) {
        use OpKind::*;
        let m = self.m;
        let mut p = 0;
        while p < n {
            let jb = block.min(n - p);
            let end = p + jb;
            // vs[l][r] is the value of V(p + r, l), present for r >= l.
            let mut vs: Vec<Vec<Val>> = Vec::with_capacity(jb);
            for k in p..end {
                let v = if fused {
                    self.fused_column(k, k + 1..end, true).expect("vector requested")
                } else {
                    self.classic_column(k, k + 1..end)
                };
                vs.push(v);
            }
            if end == n {
                break;
            }
            let len = m - p;
            let ag = Phase::Aggregate;
            // ws[l][r] is W(p + r, l) over all rows r of the panel.
            let mut ws: Vec<Vec<Val>> = Vec::with_capacity(jb);
            for k in 0..jb {
                let vk = &vs[k];
                let col: Vec<Val> = if k == 0 {
                    vk.iter().map(|&v| self.op(Add, ag, &[v])).collect()
                } else {
                    let g: Vec<Val> = (0..k)
                        .map(|l| {
                            let prods: Vec<Val> = (k..len)
                                .map(|r| self.op(Mul, ag, &[vs[l][r - l], vk[r - k]]))
                                .collect();
                            tree(self.sink, ReduceStep, ag, &prods)
                        })
                        .collect();
                    (0..len)
                        .map(|r| {
                            let prods: Vec<Val> = (0..k).map(|l| self.op(Mul, ag, &[ws[l][r], g[l]])).collect();
                            let y = tree(self.sink, ReduceStep, ag, &prods);
                            let diff = if r >= k {
                                self.op(Sub, ag, &[vk[r - k], y])
                            } else {
                                self.op(Sub, ag, &[y])
                            };
                            self.op(Add, ag, &[diff])
                        })
                        .collect()
                };
                let mut full = col;
                if k == 0 {
                    full.resize(len, Val::input());
                }
                ws.push(full);
            }
            let ph = Phase::Update;
            for j in end..n {
                let a = self.column(j, p);
                let z: Vec<Val> = (0..jb)
                    .map(|l| {
                        let rows = if l == 0 { len.min(vs[0].len()) } else { len };
                        let prods: Vec<Val> = (0..rows).map(|r| self.op(Mul, ph, &[ws[l][r], a[r]])).collect();
                        tree(self.sink, ReduceStep, ph, &prods)
                    })
                    .collect();
                for (r, &ar) in a.iter().enumerate() {
                    let prods: Vec<Val> = (0..jb.min(r + 1))
                        .map(|l| self.op(Mul, ph, &[vs[l][r - l], z[l]]))
                        .collect();
                    let t = tree(self.sink, ReduceStep, ph, &prods);
                    let out = self.op(Sub, ph, &[ar, t]);
                    self.put(p + r, j, out);
                }
            }
            p = end;
        }
    }
}

fn check_shape(m: usize, n: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::dim(format!("empty shape {m}x{n}")));
    }
    if m < n {
        return Err(Error::WideMatrix { rows: m, cols: n });
    }
    Ok(())
}

fn run<S: Sink>(sink: &mut S, routine: Routine, m: usize, n: usize, block: Option<usize>) -> Result<()> {
    check_shape(m, n)?;
    let mut t = Tracer::new(sink, m, n);
    match routine {
        Routine::Ht => t.unblocked(n, false),
        Routine::Mht => t.unblocked(n, true),
        Routine::BlockedHt | Routine::BlockedMht => {
            let bs = block_size_for(block, n)?;
            t.blocked(n, bs, routine == Routine::BlockedMht);
        }
    }
    Ok(())
}

fn block_size_for(block: Option<usize>, n: usize) -> Result<usize> {
    let bs = block.unwrap_or(crate::routine::DEFAULT_BLOCK_SIZE).min(n);
    if bs == 0 {
        return Err(Error::BlockSize { block_size: 0, cols: n });
    }
    Ok(bs)
}

/// Builds the explicit DAG of `routine` on an `m x n` problem.
pub fn trace_dag(routine: Routine, m: usize, n: usize, block_size: Option<usize>) -> Result<OpDag> {
    let mut dag = OpDag::new();
    run(&mut dag, routine, m, n, block_size)?;
    Ok(dag)
}

/// Counts and levels of the routine's DAG without materializing it.
pub fn trace_report(routine: Routine, m: usize, n: usize, block_size: Option<usize>) -> Result<ParallelismReport> {
    let mut c = Counter::default();
    run(&mut c, routine, m, n, block_size)?;
    Ok(ParallelismReport {
        routine,
        m,
        n,
        block_size: routine.is_blocked().then(|| block_size_for(block_size, n)).transpose()?,
        beta: c.ops as f64 / c.num_levels as f64,
        num_levels: c.num_levels as u64,
        total_ops: c.ops,
        node_count: c.nodes,
        update_ops: c.update_ops,
    })
}

/// `levels(fused) / levels(classical)` for the unblocked routines.
pub fn theta(m: usize, n: usize) -> Result<f64> {
    Ok(theta_row_for(m, n)?.theta)
}

/// One row of a theta sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaRow {
    pub n: usize,
    pub theta: f64,
    pub beta_ht: f64,
    pub beta_mht: f64,
}

fn theta_row_for(m: usize, n: usize) -> Result<ThetaRow> {
    check_shape(m, n)?;
    let ht = trace_report(Routine::Ht, m, n, None)?;
    let mht = trace_report(Routine::Mht, m, n, None)?;
    Ok(ThetaRow {
        n,
        theta: mht.num_levels as f64 / ht.num_levels as f64,
        beta_ht: ht.beta,
        beta_mht: mht.beta,
    })
}

/// Theta and both betas for each square size, in the given order.
pub fn sweep_theta(sizes: &[usize]) -> Result<Vec<ThetaRow>> {
    if sizes.is_empty() {
        return Err(Error::Config("no sizes given".into()));
    }
    sizes.iter().map(|&n| theta_row_for(n, n)).collect()
}

/// Same as [`sweep_theta`] with sizes spread over `threads` workers.
pub fn sweep_theta_parallel(sizes: &[usize], threads: usize) -> Result<Vec<ThetaRow>> {
    if sizes.is_empty() {
        return Err(Error::Config("no sizes given".into()));
    }
    let threads = threads.max(1).min(sizes.len());
    let mut slots: Vec<Option<Result<ThetaRow>>> = (0..sizes.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (t, chunk) in slots.chunks_mut(sizes.len().div_ceil(threads)).enumerate() {
            let base = t * sizes.len().div_ceil(threads);
            scope.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    let n = sizes[base + i];
                    *slot = Some(theta_row_for(n, n));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}

pub const THETA_CSV_HEADER: [&str; 4] = ["n", "theta", "beta_ht", "beta_mht"];

/// Writes rows as CSV with header `n,theta,beta_ht,beta_mht`.
pub fn write_theta_csv<W: Write>(rows: &[ThetaRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Config(format!("csv output failed: {e}"));
    w.write_record(THETA_CSV_HEADER).map_err(to_err)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            format!("{}", r.theta),
            format!("{}", r.beta_ht),
            format!("{}", r.beta_mht),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_and_independent_betas() {
        let mut chain = OpDag::new();
        let mut prev = chain.push(OpKind::Add, &[]).unwrap();
        for _ in 0..4 {
            prev = chain.push(OpKind::Add, &[prev]).unwrap();
        }
        assert_eq!(beta(&chain).unwrap(), 1.0);

        let mut flat = OpDag::new();
        for _ in 0..8 {
            flat.push(OpKind::Mul, &[]).unwrap();
        }
        assert_eq!(beta(&flat).unwrap(), 8.0);
        assert!(matches!(beta(&OpDag::new()), Err(Error::EmptyDag)));
    }

    #[test]
    fn forward_references_rejected() {
        let mut dag = OpDag::new();
        assert!(dag.push(OpKind::Add, &[0]).is_err());
    }

    #[test]
    fn one_by_one_is_reflector_only() {
        let ht = trace_dag(Routine::Ht, 1, 1, None).unwrap();
        let mht = trace_dag(Routine::Mht, 1, 1, None).unwrap();
        assert!(ht.num_levels() >= 1);
        assert_eq!(ht.phase_ops(Phase::Update), 0);
        assert_eq!(ht.num_levels(), mht.num_levels());
        assert!(ht.verify() && mht.verify());
    }

    #[test]
    fn fused_trace_is_shallower_with_equal_update_work() {
        let ht = trace_dag(Routine::Ht, 3, 3, None).unwrap();
        let mht = trace_dag(Routine::Mht, 3, 3, None).unwrap();
        assert!(mht.num_levels() < ht.num_levels());
        assert_eq!(ht.phase_ops(Phase::Update), mht.phase_ops(Phase::Update));
        assert!(ht.total_ops() >= mht.total_ops());
    }

    #[test]
    fn counter_agrees_with_explicit_dag() {
        for routine in Routine::ALL {
            for (m, n) in [(1, 1), (5, 3), (9, 9), (12, 7)] {
                let dag = trace_dag(routine, m, n, Some(3)).unwrap();
                let rep = trace_report(routine, m, n, Some(3)).unwrap();
                assert!(dag.verify());
                assert_eq!(dag.total_ops(), rep.total_ops, "{routine} {m}x{n}");
                assert_eq!(dag.num_levels() as u64, rep.num_levels);
                assert_eq!(dag.node_count() as u64, rep.node_count);
                assert_eq!(dag.phase_ops(Phase::Update), rep.update_ops);
            }
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let rows = sweep_theta(&[2]).unwrap();
        assert_eq!(rows.len(), 1);
        let mut buf = Vec::new();
        write_theta_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,theta,beta_ht,beta_mht\n2,"));
    }

    #[test]
    fn wide_shapes_rejected() {
        assert!(trace_dag(Routine::Ht, 2, 3, None).is_err());
        assert!(theta(2, 3).is_err());
    }
}

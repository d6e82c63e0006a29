//! Lowering of the factorization routines and of GEMM to tile programs.
//!
//! The matrix is distributed in `rb x cb` blocks over a `k x k` grid, with the
//! global memory attached as an extra tile column to the right. Every
//! instruction runs on the tile that owns the data it writes. Column
//! reductions produce one partial per tile row, gathered at the tile owning
//! the pivot row and broadcast back; vectors that trailing columns need are
//! sent along tile rows.

use std::collections::HashMap;
use std::ops::Range;

use smallvec::{smallvec, SmallVec};

use super::program::{Instr, Op, Program};

type Ids = SmallVec<[u32; 16]>;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Grid {
    pub k: usize,
    pub rb: usize,
    pub cb: usize,
}

impl Grid {
    fn tile_at(&self, bi: usize, bj: usize) -> u16 {
        (bi * self.k + bj) as u16
    }

    fn tile(&self, i: usize, j: usize) -> u16 {
        self.tile_at(i / self.rb, j / self.cb)
    }

    fn pos(&self, t: u16) -> (usize, usize) {
        (t as usize / self.k, t as usize % self.k)
    }

    fn hops(&self, a: u16, b: u16) -> u16 {
        let (ai, aj) = self.pos(a);
        let (bi, bj) = self.pos(b);
        (ai.abs_diff(bi) + aj.abs_diff(bj)) as u16
    }

    fn gm_hops(&self, t: u16) -> u16 {
        (self.k - self.pos(t).1) as u16
    }
}

#[derive(Debug, Clone, Copy)]
struct Seg {
    tile: u16,
    start: usize,
    end: usize,
}

impl Seg {
    fn len(&self) -> usize {
        self.end - self.start
    }

    fn chunks(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (self.start..self.end).step_by(4).map(|s| s..(s + 4).min(self.end))
    }
}

fn unique(ids: impl IntoIterator<Item = u32>) -> Ids {
    let mut v: Ids = ids.into_iter().filter(|&i| i != NONE).collect();
    v.sort_unstable();
    v.dedup();
    v
}

pub(crate) struct Lowerer {
    prog: Program,
    grid: Grid,
    m: usize,
    n: usize,
    /// Last instruction writing element `(i, j)`, at `j * m + i`.
    last: Vec<u32>,
}

/// Per-column scalars of a reflector, all living on the pivot tile.
struct Scalars {
    beta: u32,
    inv_two_r: u32,
    inv_q: Option<u32>,
}

impl Lowerer {
    pub(crate) fn new(m: usize, n: usize, grid: Grid) -> Self {
        Self {
            prog: Program::new(grid.k * grid.k),
            grid,
            m,
            n,
            last: vec![NONE; m * n],
        }
    }

    pub(crate) fn finish(self) -> Program {
        self.prog
    }

    fn emit(&mut self, op: Op, tile: u16, preds: &[u32]) -> u32 {
        self.emit_sized(op, tile, 0, 0, preds)
    }

    fn emit_sized(&mut self, op: Op, tile: u16, hops: u16, words: usize, preds: &[u32]) -> u32 {
        self.prog.push(
            Instr {
                op,
                tile,
                hops,
                words: words as u32,
            },
            preds,
        )
    }

    /// Makes `preds` (produced on `from`) available on `to`.
    fn ship(&mut self, from: u16, to: u16, words: usize, preds: &[u32]) -> Ids {
        if from == to {
            return unique(preds.iter().copied());
        }
        let hops = self.grid.hops(from, to);
        smallvec![self.emit_sized(Op::Send, from, hops, words, preds)]
    }

    /// Gathers per-tile partial results on `dest` and folds them with `op`.
    fn combine(&mut self, op: Op, dest: u16, partials: &[(u16, u32)]) -> u32 {
        let mut acc: Option<u32> = None;
        for &(tile, id) in partials {
            let here = self.ship(tile, dest, 1, &[id]);
            acc = Some(match acc {
                None if here.len() == 1 => here[0],
                None => self.emit(op, dest, &here),
                Some(a) => {
                    let mut preds = here;
                    preds.push(a);
                    self.emit(op, dest, &preds)
                }
            });
        }
        acc.expect("at least one partial")
    }

    fn at(&self, i: usize, j: usize) -> usize {
        j * self.m + i
    }

    fn writers(&self, rows: Range<usize>, j: usize) -> Ids {
        rows.map(|i| self.last[self.at(i, j)]).collect()
    }

    fn set_last(&mut self, rows: Range<usize>, j: usize, id: u32) {
        for i in rows {
            let at = self.at(i, j);
            self.last[at] = id;
        }
    }

    /// Rows `r0..m` of column `j` split at tile-row boundaries.
    fn segments(&self, r0: usize, j: usize) -> Vec<Seg> {
        let mut out = Vec::new();
        let mut i = r0;
        while i < self.m {
            let end = ((i / self.grid.rb + 1) * self.grid.rb).min(self.m);
            out.push(Seg {
                tile: self.grid.tile(i, j),
                start: i,
                end,
            });
            i = end;
        }
        out
    }

    fn tile_cols(&self, cols: &Range<usize>) -> Range<usize> {
        if cols.is_empty() {
            0..0
        } else {
            cols.start / self.grid.cb..(cols.end - 1) / self.grid.cb + 1
        }
    }

    /// Streams every block column from global memory.
    pub(crate) fn load_matrix(&mut self) {
        for j in 0..self.n {
            for seg in self.segments(0, j) {
                let hops = self.grid.gm_hops(seg.tile);
                let id = self.emit_sized(Op::Load, seg.tile, hops, seg.len(), &[]);
                self.set_last(seg.start..seg.end, j, id);
            }
        }
    }

    /// Writes every block column back to global memory.
    pub(crate) fn store_matrix(&mut self) {
        for j in 0..self.n {
            for seg in self.segments(0, j) {
                let hops = self.grid.gm_hops(seg.tile);
                let preds = self.writers(seg.start..seg.end, j);
                self.emit_sized(Op::Store, seg.tile, hops, seg.len(), &preds);
            }
        }
    }

    /// Norm and reflector scalars of column `k`.
    fn reflector(&mut self, k: usize, segs: &[Seg], xw: &[u32], fused: bool) -> Scalars {
        let lead = self.grid.tile(k, k);
        let x = |rows: &Range<usize>| -> Ids { Ids::from_slice(&xw[rows.start - k..rows.end - k]) };

        let mut partials = Vec::new();
        for seg in segs {
            let mut prev = NONE;
            for rows in seg.chunks() {
                let mut preds = x(&rows);
                preds.push(prev);
                prev = self.emit(Op::Max4, seg.tile, &preds);
            }
            partials.push((seg.tile, prev));
        }
        let scale = self.combine(Op::Max4, lead, &partials);
        let inv_scale = self.emit(Op::Div, lead, &[scale]);

        let mut partials = Vec::new();
        for seg in segs {
            let inv = self.ship(lead, seg.tile, 1, &[inv_scale]);
            let mut prev = NONE;
            for rows in seg.chunks() {
                let mut preds = x(&rows);
                preds.extend_from_slice(&inv);
                let scaled = self.emit(Op::VMul4, seg.tile, &preds);
                prev = self.emit(Op::Dot4, seg.tile, &[scaled, prev]);
            }
            partials.push((seg.tile, prev));
        }
        let sumsq = self.combine(Op::Add, lead, &partials);
        let root = self.emit(Op::Sqrt, lead, &[sumsq]);
        let norm = self.emit(Op::Mul, lead, &[root, scale]);
        let x1 = xw[0];
        let alpha = self.emit(Op::Mul, lead, &[norm, x1]);
        let alpha_sq = self.emit(Op::Mul, lead, &[alpha]);
        let x1_alpha = self.emit(Op::Mul, lead, &[alpha, x1]);
        let diff = self.emit(Op::Sub, lead, &[alpha_sq, x1_alpha]);
        let half = self.emit(Op::Mul, lead, &[diff]);
        let r = self.emit(Op::Sqrt, lead, &[half]);
        let two_r = self.emit(Op::Add, lead, &[r]);
        let beta = self.emit(Op::Sub, lead, &[alpha, x1]);
        if fused {
            let q = self.emit(Op::Mul, lead, &[two_r]);
            let inv_q = self.emit(Op::Div, lead, &[q]);
            let inv_two_r = self.emit(Op::Mul, lead, &[inv_q, two_r]);
            Scalars {
                beta,
                inv_two_r,
                inv_q: Some(inv_q),
            }
        } else {
            let inv_two_r = self.emit(Op::Div, lead, &[two_r]);
            Scalars {
                beta,
                inv_two_r,
                inv_q: None,
            }
        }
    }

    /// Normalized vector `v` written over column `k`; returns its producer per
    /// row `k..m`.
    fn normalize(&mut self, k: usize, segs: &[Seg], xw: &[u32], sc: &Scalars) -> Vec<u32> {
        let lead = self.grid.tile(k, k);
        let mut vrow = vec![NONE; self.m - k];
        for seg in segs {
            let scal = self.ship(lead, seg.tile, 2, &[sc.inv_two_r, sc.beta]);
            for rows in seg.chunks() {
                let mut preds = Ids::from_slice(&xw[rows.start - k..rows.end - k]);
                preds.extend_from_slice(&scal);
                let id = self.emit(Op::VMul4, seg.tile, &preds);
                vrow[rows.start - k..rows.end - k].fill(id);
                self.set_last(rows, k, id);
            }
        }
        vrow
    }

    /// Sends per-segment data along tile rows to every tile column in `bjs`;
    /// returns `(segment, tile column) -> send` for remote destinations.
    fn row_broadcast(
        &mut self,
        segs: &[Seg],
        bjs: Range<usize>,
        words_per_row: usize,
        producers: impl Fn(&Seg) -> Ids,
    ) -> HashMap<(usize, usize), Ids> {
        let mut out = HashMap::new();
        for (si, seg) in segs.iter().enumerate() {
            let bi = seg.start / self.grid.rb;
            let preds = producers(seg);
            for bj in bjs.clone() {
                let dst = self.grid.tile_at(bi, bj);
                if dst != seg.tile {
                    let sent = self.ship(seg.tile, dst, seg.len() * words_per_row, &preds);
                    out.insert((si, bj), sent);
                }
            }
        }
        out
    }

    /// One column of an unblocked factorization applied to `cols`. Returns the
    /// producer of each entry of the normalized vector (rows `k..m`).
    pub(crate) fn column_step(&mut self, k: usize, cols: Range<usize>, fused: bool) -> Vec<u32> {
        let m = self.m;
        let segs = self.segments(k, k);
        let lead = self.grid.tile(k, k);
        let xw = self.writers(k..m, k);
        let bjs = self.tile_cols(&cols);

        let raw_remote = if fused {
            self.row_broadcast(&segs, bjs.clone(), 1, |s| Ids::from_slice(&xw[s.start - k..s.end - k]))
        } else {
            HashMap::new()
        };

        let sc = self.reflector(k, &segs, &xw, fused);
        let vrow = self.normalize(k, &segs, &xw, &sc);
        let v_remote = if fused {
            HashMap::new()
        } else {
            self.row_broadcast(&segs, bjs.clone(), 1, |s| unique(vrow[s.start - k..s.end - k].iter().copied()))
        };

        // Fused path: the update vector u = (beta, x2, ..) / (2r)^2, so each
        // trailing column needs only its raw dot product.
        let mut urow = vec![NONE; m - k];
        let mut u_remote = HashMap::new();
        if fused && !cols.is_empty() {
            let inv_q = sc.inv_q.expect("fused scalars");
            for seg in &segs {
                let scal = self.ship(lead, seg.tile, 2, &[inv_q, sc.beta]);
                for rows in seg.chunks() {
                    let mut preds = Ids::from_slice(&xw[rows.start - k..rows.end - k]);
                    preds.extend_from_slice(&scal);
                    let id = self.emit(Op::VMul4, seg.tile, &preds);
                    urow[rows.start - k..rows.end - k].fill(id);
                }
            }
            u_remote = self.row_broadcast(&segs, bjs.clone(), 1, |s| unique(urow[s.start - k..s.end - k].iter().copied()));
        }

        let mut beta_at: HashMap<u16, Ids> = HashMap::new();
        for j in cols {
            let bj = j / self.grid.cb;
            let lead_j = self.grid.tile(k, j);
            let jsegs = self.segments(k, j);
            let operand = |si: usize, rows: &Range<usize>| -> Ids {
                let remote = if fused { &raw_remote } else { &v_remote };
                match remote.get(&(si, bj)) {
                    Some(sent) => sent.clone(),
                    None if fused => Ids::from_slice(&xw[rows.start - k..rows.end - k]),
                    None => Ids::from_slice(&vrow[rows.start - k..rows.end - k]),
                }
            };

            if fused {
                let beta = match beta_at.get(&lead_j) {
                    Some(b) => b.clone(),
                    None => {
                        let b = self.ship(lead, lead_j, 1, &[sc.beta]);
                        beta_at.insert(lead_j, b.clone());
                        b
                    }
                };
                let mut partials = Vec::new();
                for (si, seg) in jsegs.iter().enumerate() {
                    let mut chunks: Vec<Range<usize>> = seg.chunks().collect();
                    if si == 0 {
                        chunks.rotate_left(1);
                    }
                    let mut prev = NONE;
                    for rows in chunks {
                        let mut preds = operand(si, &rows);
                        preds.extend(self.writers(rows.clone(), j));
                        if rows.start == k {
                            preds.extend_from_slice(&beta);
                        }
                        preds.push(prev);
                        prev = self.emit(Op::Dot4, seg.tile, &preds);
                    }
                    partials.push((seg.tile, prev));
                }
                let w = self.combine(Op::Add, lead_j, &partials);
                for (si, seg) in jsegs.iter().enumerate() {
                    let w_here = self.ship(lead_j, seg.tile, 1, &[w]);
                    for rows in seg.chunks() {
                        let mut preds = match u_remote.get(&(si, bj)) {
                            Some(sent) => sent.clone(),
                            None => Ids::from_slice(&urow[rows.start - k..rows.end - k]),
                        };
                        preds.extend_from_slice(&w_here);
                        preds.extend(self.writers(rows.clone(), j));
                        let id = self.emit(Op::Macro4, seg.tile, &preds);
                        self.set_last(rows, j, id);
                    }
                }
            } else {
                let mut partials = Vec::new();
                for (si, seg) in jsegs.iter().enumerate() {
                    let mut prev = NONE;
                    for rows in seg.chunks() {
                        let mut preds = operand(si, &rows);
                        preds.extend(self.writers(rows.clone(), j));
                        preds.push(prev);
                        prev = self.emit(Op::Dot4, seg.tile, &preds);
                    }
                    partials.push((seg.tile, prev));
                }
                let w = self.combine(Op::Add, lead_j, &partials);
                for (si, seg) in jsegs.iter().enumerate() {
                    let w_here = self.ship(lead_j, seg.tile, 1, &[w]);
                    for rows in seg.chunks() {
                        let mut preds = operand(si, &rows);
                        preds.extend_from_slice(&w_here);
                        let t = self.emit(Op::VMul4, seg.tile, &preds);
                        let u = self.emit(Op::VAdd4, seg.tile, &[t]);
                        let mut preds = self.writers(rows.clone(), j);
                        preds.push(u);
                        let id = self.emit(Op::VSub4, seg.tile, &preds);
                        self.set_last(rows, j, id);
                    }
                }
            }
        }
        vrow
    }

    pub(crate) fn unblocked(&mut self, fused: bool) {
        for k in 0..self.n {
            self.column_step(k, k + 1..self.n, fused);
        }
    }

    pub(crate) fn blocked(&mut self, block: usize, fused: bool) {
        let (m, n) = (self.m, self.n);
        let mut p = 0;
        while p < n {
            let jb = block.min(n - p);
            let end = p + jb;
            let vrows: Vec<Vec<u32>> = (p..end).map(|c| self.column_step(c, c + 1..end, fused)).collect();
            if end == n {
                break;
            }
            let rows = m - p;
            let psegs = self.segments(p, p);
            let lead = self.grid.tile(p, p);

            // V gathered on the panel's tile column, indexed [l][r - p].
            let mut vav = vec![vec![NONE; rows]; jb];
            for (l, vrow) in vrows.iter().enumerate() {
                let c = p + l;
                for seg in self.segments(c, c) {
                    let bi = seg.start / self.grid.rb;
                    let home = self.grid.tile_at(bi, p / self.grid.cb);
                    let producers = unique(vrow[seg.start - c..seg.end - c].iter().copied());
                    let here = self.ship(seg.tile, home, seg.len(), &producers);
                    for r in seg.start..seg.end {
                        vav[l][r - p] = if here.len() == 1 && seg.tile != home {
                            here[0]
                        } else {
                            vrow[r - c]
                        };
                    }
                }
            }

            // W with I - W V^T equal to the panel's product of reflectors.
            let mut wrow = vec![vec![NONE; rows]; jb];
            for l in 0..jb {
                if l == 0 {
                    for seg in &psegs {
                        for ch in seg.chunks() {
                            let preds: Ids = ch.clone().map(|r| vav[0][r - p]).collect();
                            let id = self.emit(Op::VAdd4, seg.tile, &preds);
                            ch.for_each(|r| wrow[0][r - p] = id);
                        }
                    }
                    continue;
                }
                let mut g = Vec::with_capacity(l);
                for i in 0..l {
                    let mut partials = Vec::new();
                    for seg in &psegs {
                        let from = seg.start.max(p + l);
                        if from >= seg.end {
                            continue;
                        }
                        let part = Seg { start: from, ..*seg };
                        let mut prev = NONE;
                        for ch in part.chunks() {
                            let mut preds: Ids = ch.clone().flat_map(|r| [vav[i][r - p], vav[l][r - p]]).collect();
                            preds.push(prev);
                            prev = self.emit(Op::Dot4, seg.tile, &preds);
                        }
                        partials.push((seg.tile, prev));
                    }
                    g.push(self.combine(Op::Add, lead, &partials));
                }
                for seg in &psegs {
                    let g_here = self.ship(lead, seg.tile, l, &g);
                    for ch in seg.chunks() {
                        let mut ys = Ids::new();
                        for r in ch.clone() {
                            let mut prev = NONE;
                            for grp in (0..l).step_by(4) {
                                let mut preds: Ids = (grp..(grp + 4).min(l)).map(|i| wrow[i][r - p]).collect();
                                preds.extend_from_slice(&g_here);
                                preds.push(prev);
                                prev = self.emit(Op::Dot4, seg.tile, &preds);
                            }
                            ys.push(prev);
                        }
                        let mut preds = ys;
                        preds.extend(ch.clone().map(|r| vav[l][r - p]));
                        let diff = self.emit(Op::VSub4, seg.tile, &preds);
                        let id = self.emit(Op::VAdd4, seg.tile, &[diff]);
                        ch.for_each(|r| wrow[l][r - p] = id);
                    }
                }
            }

            let bjs = self.tile_cols(&(end..n));
            let (vav_ref, wrow_ref) = (&vav, &wrow);
            let panel_data = |s: &Seg| -> Ids {
                unique((s.start..s.end).flat_map(|r| (0..jb).flat_map(move |l| [vav_ref[l][r - p], wrow_ref[l][r - p]])))
            };
            let vw_remote = self.row_broadcast(&psegs, bjs, 2 * jb, panel_data);

            for j in end..n {
                let bj = j / self.grid.cb;
                let lead_j = self.grid.tile(p, j);
                let jsegs = self.segments(p, j);
                let mut z = Vec::with_capacity(jb);
                for wl in wrow.iter().take(jb) {
                    let mut partials = Vec::new();
                    for (si, seg) in jsegs.iter().enumerate() {
                        let mut prev = NONE;
                        for ch in seg.chunks() {
                            let mut preds = match vw_remote.get(&(si, bj)) {
                                Some(sent) => sent.clone(),
                                None => ch.clone().map(|r| wl[r - p]).collect(),
                            };
                            preds.extend(self.writers(ch.clone(), j));
                            preds.push(prev);
                            prev = self.emit(Op::Dot4, seg.tile, &preds);
                        }
                        partials.push((seg.tile, prev));
                    }
                    z.push(self.combine(Op::Add, lead_j, &partials));
                }
                for (si, seg) in jsegs.iter().enumerate() {
                    let z_here = self.ship(lead_j, seg.tile, jb, &z);
                    let remote = vw_remote.get(&(si, bj)).cloned();
                    for ch in seg.chunks() {
                        let mut ts = Ids::new();
                        for r in ch.clone() {
                            let count = jb.min(r - p + 1);
                            let mut prev = NONE;
                            for grp in (0..count).step_by(4) {
                                let mut preds = match &remote {
                                    Some(sent) => sent.clone(),
                                    None => (grp..(grp + 4).min(count)).map(|l| vav[l][r - p]).collect(),
                                };
                                preds.extend_from_slice(&z_here);
                                preds.push(prev);
                                prev = self.emit(Op::Dot4, seg.tile, &preds);
                            }
                            ts.push(prev);
                        }
                        let mut preds = ts;
                        preds.extend(self.writers(ch.clone(), j));
                        let id = self.emit(Op::VSub4, seg.tile, &preds);
                        self.set_last(ch, j, id);
                    }
                }
            }
            p = end;
        }
    }
}

/// `C = A B` for square `n x n` operands on a single tile: every output entry
/// is a chain of DOT4 passes over four-column slices of its row of `A`.
pub(crate) fn gemm_program(n: usize) -> Program {
    let mut prog = Program::new(1);
    let load = |prog: &mut Program| {
        prog.push(
            Instr {
                op: Op::Load,
                tile: 0,
                hops: 1,
                words: n as u32,
            },
            &[],
        )
    };
    let a_cols: Vec<u32> = (0..n).map(|_| load(&mut prog)).collect();
    let b_cols: Vec<u32> = (0..n).map(|_| load(&mut prog)).collect();
    for &b in &b_cols {
        let mut ends = Vec::with_capacity(n);
        for _ in 0..n {
            let mut prev = NONE;
            for c in (0..n).step_by(4) {
                let preds = unique(a_cols[c..(c + 4).min(n)].iter().copied().chain([b, prev]));
                prev = prog.push(
                    Instr {
                        op: Op::Dot4,
                        tile: 0,
                        hops: 0,
                        words: 0,
                    },
                    &preds,
                );
            }
            ends.push(prev);
        }
        prog.push(
            Instr {
                op: Op::Store,
                tile: 0,
                hops: 1,
                words: n as u32,
            },
            &ends,
        );
    }
    prog
}

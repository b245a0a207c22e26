//! Cacheline-granular LRU simulation of an inclusive write-back hierarchy
//! driven by the kernel's access stream. Independent of `layers` and
//! `traffic`; used to cross-check them.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::kernel::{distinct_outer_layers, GridConfig, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Associativity {
    Full,
    Ways(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLevel {
    pub name: String,
    pub capacity_bytes: u64,
    pub associativity: Associativity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimCacheConfig {
    /// Innermost first.
    pub levels: Vec<SimLevel>,
    pub cacheline_bytes: u32,
    pub write_allocate: bool,
    /// `false` selects write-through: every store moves its element bytes
    /// across every boundary and lines are never dirty.
    pub write_back: bool,
    /// Run one untimed sweep before counting.
    pub warmup: bool,
}

impl SimCacheConfig {
    /// Fully associative LRU levels named `L1, L2, ...`.
    pub fn fully_associative(capacities: &[u64], cacheline_bytes: u32) -> Self {
        SimCacheConfig {
            levels: capacities
                .iter()
                .enumerate()
                .map(|(i, &c)| SimLevel {
                    name: format!("L{}", i + 1),
                    capacity_bytes: c,
                    associativity: Associativity::Full,
                })
                .collect(),
            cacheline_bytes,
            write_allocate: true,
            write_back: true,
            warmup: false,
        }
    }

    pub fn with_warmup(mut self, warmup: bool) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn with_associativity(mut self, ways: Associativity) -> Self {
        for l in &mut self.levels {
            l.associativity = ways;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSimConfig(msg));
        if self.levels.is_empty() {
            return bad("no cache levels".into());
        }
        if self.cacheline_bytes == 0 {
            return bad("cacheline size is zero".into());
        }
        let cl = self.cacheline_bytes as u64;
        for l in &self.levels {
            if l.capacity_bytes < cl {
                return bad(format!("{} is smaller than one cacheline", l.name));
            }
            if l.capacity_bytes % cl != 0 {
                return bad(format!("{} capacity is not a multiple of the cacheline size", l.name));
            }
            let lines = l.capacity_bytes / cl;
            if let Associativity::Ways(w) = l.associativity {
                if w == 0 || !lines.is_multiple_of(w as u64) {
                    return bad(format!("{} associativity {w} does not divide {lines} lines", l.name));
                }
            }
        }
        Ok(())
    }

    pub fn boundary_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.levels.iter().map(|l| l.name.clone()).collect();
        names.push("Mem".into());
        names.windows(2).map(|w| format!("{}-{}", w[0], w[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimBoundary {
    pub name: String,
    /// Lines moved inward.
    pub loads_cl: u64,
    /// Lines moved outward; fractional in write-through mode.
    pub evicts_cl: f64,
    pub bytes_per_lup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub boundaries: Vec<SimBoundary>,
    pub lups: u64,
    /// Distinct lines that must come from memory at least once.
    pub footprint_loaded_cl: u64,
    /// Distinct lines written.
    pub footprint_written_cl: u64,
}

impl SimResult {
    pub fn memory(&self) -> &SimBoundary {
        self.boundaries.last().expect("at least one boundary")
    }

    /// Lower bound on memory lines for a single write-back sweep.
    pub fn compulsory_memory_cls(&self) -> u64 {
        self.footprint_loaded_cl + self.footprint_written_cl
    }
}

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    line: u64,
    dirty: bool,
    prev: u32,
    next: u32,
}

/// One LRU set: hash index plus an intrusive list, most recent at `head`.
#[derive(Debug, Clone)]
struct LruSet {
    capacity: usize,
    index: HashMap<u64, u32>,
    nodes: Vec<Node>,
    free: Vec<u32>,
    head: u32,
    tail: u32,
}

impl LruSet {
    fn new(capacity: usize) -> Self {
        LruSet {
            capacity,
            index: HashMap::new(),
            nodes: Vec::new(),
            free: Vec::new(),
            head: NIL,
            tail: NIL,
        }
    }

    fn unlink(&mut self, i: u32) {
        let (prev, next) = (self.nodes[i as usize].prev, self.nodes[i as usize].next);
        if prev == NIL {
            self.head = next;
        } else {
            self.nodes[prev as usize].next = next;
        }
        if next == NIL {
            self.tail = prev;
        } else {
            self.nodes[next as usize].prev = prev;
        }
    }

    fn push_front(&mut self, i: u32) {
        self.nodes[i as usize].prev = NIL;
        self.nodes[i as usize].next = self.head;
        if self.head != NIL {
            self.nodes[self.head as usize].prev = i;
        }
        self.head = i;
        if self.tail == NIL {
            self.tail = i;
        }
    }

    /// Hit: refresh and optionally dirty.
    fn touch(&mut self, line: u64, dirty: bool) -> bool {
        let Some(&i) = self.index.get(&line) else {
            return false;
        };
        self.nodes[i as usize].dirty |= dirty;
        if self.head != i {
            self.unlink(i);
            self.push_front(i);
        }
        true
    }

    fn set_dirty(&mut self, line: u64) -> bool {
        match self.index.get(&line) {
            Some(&i) => {
                self.nodes[i as usize].dirty = true;
                true
            }
            None => false,
        }
    }

    /// Inserts a line known to be absent; returns the LRU victim if full.
    fn insert(&mut self, line: u64, dirty: bool) -> Option<(u64, bool)> {
        let victim = if self.index.len() >= self.capacity {
            let t = self.tail;
            self.unlink(t);
            let n = &self.nodes[t as usize];
            let v = (n.line, n.dirty);
            self.index.remove(&v.0);
            self.free.push(t);
            Some(v)
        } else {
            None
        };
        let node = Node {
            line,
            dirty,
            prev: NIL,
            next: NIL,
        };
        let i = match self.free.pop() {
            Some(i) => {
                self.nodes[i as usize] = node;
                i
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        };
        self.index.insert(line, i);
        self.push_front(i);
        victim
    }

    /// Removes a line; returns its dirty bit if it was present.
    fn remove(&mut self, line: u64) -> Option<bool> {
        let i = self.index.remove(&line)?;
        self.unlink(i);
        self.free.push(i);
        Some(self.nodes[i as usize].dirty)
    }

    fn dirty_lines(&self) -> Vec<u64> {
        self.index
            .iter()
            .filter(|(_, &i)| self.nodes[i as usize].dirty)
            .map(|(&l, _)| l)
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Level {
    sets: Vec<LruSet>,
}

impl Level {
    fn new(cfg: &SimLevel, cl: u64) -> Self {
        let lines = (cfg.capacity_bytes / cl) as usize;
        let ways = match cfg.associativity {
            Associativity::Full => lines,
            Associativity::Ways(w) => w as usize,
        };
        Level {
            sets: (0..lines / ways).map(|_| LruSet::new(ways)).collect(),
        }
    }

    fn set(&mut self, line: u64) -> &mut LruSet {
        let n = self.sets.len() as u64;
        &mut self.sets[(line % n) as usize]
    }
}

/// The hierarchy plus per-boundary counters.
struct Hierarchy {
    levels: Vec<Level>,
    loads: Vec<u64>,
    evicts: Vec<f64>,
    write_allocate: bool,
    write_back: bool,
}

impl Hierarchy {
    fn new(c: &SimCacheConfig) -> Self {
        let cl = c.cacheline_bytes as u64;
        let n = c.levels.len();
        Hierarchy {
            levels: c.levels.iter().map(|l| Level::new(l, cl)).collect(),
            loads: vec![0; n],
            evicts: vec![0.0; n],
            write_allocate: c.write_allocate,
            write_back: c.write_back,
        }
    }

    fn reset_counters(&mut self) {
        self.loads.iter_mut().for_each(|x| *x = 0);
        self.evicts.iter_mut().for_each(|x| *x = 0.0);
    }

    /// A dirty line leaves level `j` outward.
    fn write_back_from(&mut self, j: usize, line: u64) {
        self.evicts[j] += 1.0;
        if j + 1 < self.levels.len() {
            // inclusion guarantees presence
            self.levels[j + 1].set(line).set_dirty(line);
        }
    }

    /// Places `line` into level `j`, handling the victim: back-invalidate
    /// inner copies (their dirty data travels outward) and write back.
    fn fill(&mut self, j: usize, line: u64, dirty: bool) {
        let Some((victim, mut victim_dirty)) = self.levels[j].set(line).insert(line, dirty) else {
            return;
        };
        for i in 0..j {
            if let Some(inner_dirty) = self.levels[i].set(victim).remove(victim) {
                if inner_dirty {
                    // data passes boundaries i..j on its way to level j
                    for b in i..j {
                        self.evicts[b] += 1.0;
                    }
                    victim_dirty = true;
                    // only the innermost dirty copy is current
                    for k in (i + 1)..j {
                        self.levels[k].set(victim).remove(victim);
                    }
                    break;
                }
            }
        }
        if victim_dirty {
            self.evicts[j] += 1.0;
            if j + 1 < self.levels.len() {
                self.levels[j + 1].set(victim).set_dirty(victim);
            }
        }
    }

    fn access(&mut self, line: u64, write: bool, write_fraction: f64) {
        let dirty = write && self.write_back;
        if !self.write_back && write {
            for e in &mut self.evicts {
                *e += write_fraction;
            }
        }
        if self.levels[0].set(line).touch(line, dirty) {
            return;
        }
        let fetch = !write || self.write_allocate;
        // find the innermost level holding the line
        let mut hit = self.levels.len();
        for j in 1..self.levels.len() {
            if self.levels[j].set(line).touch(line, false) {
                hit = j;
                break;
            }
        }
        if fetch {
            for b in 0..hit {
                self.loads[b] += 1;
            }
        }
        for j in (0..hit).rev() {
            self.fill(j, line, dirty && j == 0);
        }
    }

    /// Writes all dirty lines back to memory.
    fn flush(&mut self) {
        for j in 0..self.levels.len() {
            let dirty: Vec<u64> = self.levels[j].sets.iter().flat_map(|s| s.dirty_lines()).collect();
            for line in dirty {
                let set = self.levels[j].set(line);
                if let Some(&i) = set.index.get(&line) {
                    set.nodes[i as usize].dirty = false;
                }
                self.write_back_from(j, line);
            }
        }
    }
}

/// One access of the per-point pattern.
#[derive(Debug, Clone, Copy)]
struct Access {
    base: u64,
    delta: i64,
    element_bytes: u64,
    write: bool,
}

struct Sweep {
    accesses: Vec<Access>,
    strides: Vec<i64>,
    lo: Vec<u64>,
    hi: Vec<u64>,
    blocks: Vec<Option<u64>>,
}

fn build_sweep(k: &KernelSpec, g: &GridConfig, cl: u64) -> Result<Sweep> {
    g.validate_for(k)?;
    let dims = k.dims;
    let mut strides = vec![1i64; dims];
    for d in (0..dims.saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * g.extents[d + 1] as i64;
    }
    let points: u64 = g.extents.iter().product();

    let mut radius = vec![0u64; dims];
    let mut accesses = Vec::new();
    let mut writes = Vec::new();
    let mut base = 0u64;
    for s in &k.streams {
        let size = points * s.element_bytes as u64;
        let array_base = base;
        base += size.div_ceil(cl) * cl;
        let delta = |o: &[i64]| o.iter().zip(&strides).map(|(a, b)| a * b).sum::<i64>();
        let mut note = |o: &[i64]| {
            for (r, v) in radius.iter_mut().zip(o) {
                *r = (*r).max(v.unsigned_abs());
            }
        };
        for o in s.read_offsets() {
            note(o);
            accesses.push(Access {
                base: array_base,
                delta: delta(o),
                element_bytes: s.element_bytes as u64,
                write: false,
            });
        }
        if let Some(o) = s.write_location(dims) {
            note(&o);
            writes.push(Access {
                base: array_base,
                delta: delta(&o),
                element_bytes: s.element_bytes as u64,
                write: true,
            });
        }
    }
    accesses.extend(writes);

    let lo = radius.clone();
    let hi: Vec<u64> = g.extents.iter().zip(&radius).map(|(n, r)| n.saturating_sub(*r)).collect();
    if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
        return Err(Error::InvalidSimConfig(format!(
            "grid {:?} has no interior points for kernel {}",
            g.extents, k.name
        )));
    }
    Ok(Sweep {
        accesses,
        strides,
        lo,
        hi,
        blocks: g.block_sizes.clone(),
    })
}

/// Calls `f` for every index tuple in `lo..hi`, last dimension fastest.
fn for_each_index(lo: &[u64], hi: &[u64], mut f: impl FnMut(&[u64])) {
    if lo.iter().zip(hi).any(|(l, h)| l >= h) {
        return;
    }
    let mut idx = lo.to_vec();
    loop {
        f(&idx);
        let mut d = idx.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < hi[d] {
                break;
            }
            idx[d] = lo[d];
        }
    }
}

impl Sweep {
    fn interior_points(&self) -> u64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    /// Blocked dimensions get an outer block loop each (in dimension
    /// order), then the point loops run over the current block.
    fn run(&self, mut visit: impl FnMut(i64)) {
        let blocked: Vec<usize> = (0..self.lo.len()).filter(|&d| self.blocks[d].is_some()).collect();
        let block_lo: Vec<u64> = vec![0; blocked.len()];
        let block_hi: Vec<u64> = blocked
            .iter()
            .map(|&d| (self.hi[d] - self.lo[d]).div_ceil(self.blocks[d].unwrap()))
            .collect();
        for_each_index(&block_lo, &block_hi, |blk| {
            let mut lo = self.lo.clone();
            let mut hi = self.hi.clone();
            for (n, &d) in blocked.iter().enumerate() {
                let b = self.blocks[d].unwrap();
                lo[d] = self.lo[d] + blk[n] * b;
                hi[d] = (lo[d] + b).min(self.hi[d]);
            }
            for_each_index(&lo, &hi, |p| {
                let linear: i64 = p.iter().zip(&self.strides).map(|(&i, s)| i as i64 * s).sum();
                visit(linear);
            });
        });
    }
}

fn line_of(a: &Access, point: i64, cl: u64) -> u64 {
    (a.base + ((point + a.delta) as u64) * a.element_bytes) / cl
}

/// Simulates one sweep of `k` over the interior of `g`.
pub fn simulate_sweep(k: &KernelSpec, g: &GridConfig, c: &SimCacheConfig) -> Result<SimResult> {
    c.validate()?;
    let cl = c.cacheline_bytes as u64;
    let sweep = build_sweep(k, g, cl)?;
    let mut h = Hierarchy::new(c);

    if c.warmup {
        sweep.run(|p| {
            for a in &sweep.accesses {
                h.access(line_of(a, p, cl), a.write, a.element_bytes as f64 / cl as f64);
            }
        });
        h.reset_counters();
    }

    let mut loaded = HashSet::new();
    let mut written = HashSet::new();
    sweep.run(|p| {
        for a in &sweep.accesses {
            let line = line_of(a, p, cl);
            if !a.write || c.write_allocate {
                loaded.insert(line);
            }
            if a.write {
                written.insert(line);
            }
            h.access(line, a.write, a.element_bytes as f64 / cl as f64);
        }
    });
    if c.write_back {
        h.flush();
    }

    let lups = sweep.interior_points();
    let boundaries = c
        .boundary_names()
        .into_iter()
        .enumerate()
        .map(|(b, name)| SimBoundary {
            name,
            loads_cl: h.loads[b],
            evicts_cl: h.evicts[b],
            bytes_per_lup: (h.loads[b] as f64 + h.evicts[b]) * cl as f64 / lups as f64,
        })
        .collect();
    let (footprint_loaded_cl, footprint_written_cl) = if c.warmup {
        (0, 0)
    } else {
        (loaded.len() as u64, if c.write_back { written.len() as u64 } else { 0 })
    };
    Ok(SimResult {
        boundaries,
        lups,
        footprint_loaded_cl,
        footprint_written_cl,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Breakpoint {
    pub extent: u64,
    pub low_balance: f64,
    pub high_balance: f64,
}

/// Bisects extent `dim` of `template` over `lo..=hi` for the point where
/// the simulated code balance across the boundary outside `level` jumps
/// between its two plateaus. Reports the smallest extent whose balance
/// exceeds the midpoint of the two plateau values.
pub fn find_lc_breakpoint(
    k: &KernelSpec,
    template: &GridConfig,
    c: &SimCacheConfig,
    level: usize,
    dim: usize,
    lo: u64,
    hi: u64,
) -> Result<Breakpoint> {
    if level >= c.levels.len() {
        return Err(Error::InvalidSimConfig(format!("level {level} out of range")));
    }
    if dim >= k.dims || lo >= hi {
        return Err(Error::InvalidSimConfig(format!("bad search range {lo}..={hi} on dimension {dim}")));
    }
    let no_transition = || Error::NoTransition(format!("{} between extents {lo} and {hi}", k.name));
    if k.layered_streams().next().is_none() {
        return Err(no_transition());
    }
    let balance = |e: u64| -> Result<f64> {
        let mut g = template.clone();
        g.extents[dim] = e;
        Ok(simulate_sweep(k, &g, c)?.boundaries[level].bytes_per_lup)
    };
    let low_balance = balance(lo)?;
    let high_balance = balance(hi)?;
    if high_balance - low_balance < 0.1 * high_balance.abs().max(low_balance.abs()) {
        return Err(no_transition());
    }
    let mid = 0.5 * (low_balance + high_balance);
    let (mut a, mut b) = (lo, hi);
    while b - a > 1 {
        let m = a + (b - a) / 2;
        if balance(m)? > mid {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(Breakpoint {
        extent: b,
        low_balance,
        high_balance,
    })
}

/// Capacity semantics for analytic breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacityRule {
    /// Layered arrays in half the cache.
    HalfRule,
    /// Everything the sweep keeps alive between reuses in the whole cache:
    /// the layers of layered arrays plus one layer per other array.
    FullLru,
}

/// Largest extent of dimension `dim` at which the layer condition still
/// holds for `capacity_bytes` under `rule`, with the other extents from
/// `g`. `None` without layered arrays.
pub fn predicted_breakpoint(
    k: &KernelSpec,
    g: &GridConfig,
    capacity_bytes: u64,
    rule: CapacityRule,
    dim: usize,
) -> Option<u64> {
    k.layered_streams().next()?;
    let per_extent: u64 = (1..k.dims).filter(|&d| d != dim).map(|d| g.effective(d)).product();
    let bytes_per_layer_element: u64 = k
        .streams
        .iter()
        .map(|s| {
            let layers = distinct_outer_layers(s) as u64;
            let counted = match rule {
                CapacityRule::HalfRule if layers < 2 => 0,
                CapacityRule::HalfRule => layers,
                CapacityRule::FullLru => layers,
            };
            counted * s.element_bytes as u64
        })
        .sum();
    let limit = match rule {
        CapacityRule::HalfRule => 0.5 * capacity_bytes as f64,
        CapacityRule::FullLru => capacity_bytes as f64,
    };
    Some(crate::layers::largest_satisfying(
        limit,
        (bytes_per_layer_element * per_extent) as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lru_order_and_victims() {
        let mut s = LruSet::new(2);
        assert_eq!(s.insert(1, false), None);
        assert_eq!(s.insert(2, true), None);
        assert!(s.touch(1, false));
        assert_eq!(s.insert(3, false), Some((2, true)));
        assert!(!s.touch(2, false));
        assert_eq!(s.remove(1), Some(false));
        assert_eq!(s.insert(4, false), None);
        assert_eq!(s.insert(5, false), Some((3, false)));
    }

    #[test]
    fn config_validation() {
        let mut c = SimCacheConfig::fully_associative(&[32, 4096], 64);
        assert!(matches!(c.validate(), Err(Error::InvalidSimConfig(_))));
        c.levels[0].capacity_bytes = 100;
        assert!(c.validate().is_err());
        c.levels[0].capacity_bytes = 4096;
        c.levels[0].associativity = Associativity::Ways(3);
        assert!(c.validate().is_err());
        c.levels[0].associativity = Associativity::Ways(8);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn index_iteration_order() {
        let mut seen = Vec::new();
        for_each_index(&[0, 1], &[2, 3], |i| seen.push((i[0], i[1])));
        assert_eq!(seen, vec![(0, 1), (0, 2), (1, 1), (1, 2)]);
        let mut none = 0;
        for_each_index(&[1], &[1], |_| none += 1);
        assert_eq!(none, 0);
    }

    #[test]
    fn inclusive_back_invalidation_writes_dirty_data_out() {
        let c = SimCacheConfig::fully_associative(&[128, 128], 64);
        let mut h = Hierarchy::new(&c);
        h.access(0, true, 0.125);
        h.access(1, false, 0.125);
        // L2 full; line 2 evicts line 0 from L2 and back-invalidates L1
        h.access(2, false, 0.125);
        assert_eq!(h.loads, vec![3, 3]);
        assert_eq!(h.evicts, vec![1.0, 1.0]);
    }
}

//! Machine model: clock, cores, cache hierarchy, memory bandwidth and
//! instruction throughput tables, plus the machine-file format.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sections::{self, Section};

/// Width tag that matches any SIMD width in a throughput lookup.
pub const ANY_WIDTH: &str = "*";

/// Level name used for main memory in `[measured_bw]` entries.
pub const MEMORY_LEVEL: &str = "MEM";

const KIB: u64 = 1024;
const MIB: u64 = 1024 * 1024;

/// One cache level, core-outward.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheLevel {
    pub name: String,
    pub capacity_bytes: u64,
    pub shared: bool,
    /// Cycles per cacheline moved between this level and the next one
    /// outward. `None` on the outermost level, whose boundary is memory.
    pub cycles_per_cl: Option<f64>,
}

/// `(instruction class, SIMD width tag)`, e.g. `LOAD.avx`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstrKey {
    pub class: String,
    pub width: String,
}

impl InstrKey {
    pub fn new(class: impl Into<String>, width: impl Into<String>) -> Self {
        InstrKey {
            class: class.into(),
            width: width.into(),
        }
    }
}

impl fmt::Display for InstrKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.class, self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineModel {
    pub name: String,
    pub clock_ghz: f64,
    pub base_clock_ghz: f64,
    pub cores: u32,
    pub cacheline_bytes: u32,
    /// Saturated streaming bandwidth `b_S`, GB/s (10^9 bytes).
    pub mem_bandwidth_gbps: f64,
    pub caches: Vec<CacheLevel>,
    /// Instructions per cycle, keyed by class and width.
    pub throughput: BTreeMap<InstrKey, f64>,
    /// Latency in cycles per instruction class.
    pub latency: BTreeMap<String, f64>,
    pub frontend_uops_per_cycle: f64,
    pub uncore_clock_factor: f64,
    /// Measured bandwidths in GB/s keyed by `(level, threads)`.
    pub measured_bandwidths: BTreeMap<(String, u32), f64>,
}

impl MachineModel {
    pub fn clock_hz(&self) -> f64 {
        self.clock_ghz * 1e9
    }

    pub fn base_clock_hz(&self) -> f64 {
        self.base_clock_ghz * 1e9
    }

    pub fn mem_bandwidth_bps(&self) -> f64 {
        self.mem_bandwidth_gbps * 1e9
    }

    /// Number of transfer boundaries: one per cache level, the last one
    /// being outermost cache to memory.
    pub fn boundary_count(&self) -> usize {
        self.caches.len()
    }

    /// Data locations core-outward, e.g. `L1, L2, L3, Mem`.
    pub fn location_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.caches.iter().map(|c| c.name.clone()).collect();
        names.push("Mem".to_string());
        names
    }

    pub fn boundary_names(&self) -> Vec<String> {
        let locs = self.location_names();
        locs.windows(2).map(|w| format!("{}-{}", w[0], w[1])).collect()
    }

    /// Cycles per cacheline across `boundary` at core frequency `f_hz`.
    /// The uncore factor applies to the boundary between the two outermost
    /// caches.
    pub fn boundary_cycles_per_cl(&self, boundary: usize, f_hz: f64) -> f64 {
        let n = self.caches.len();
        assert!(boundary < n, "boundary {boundary} out of range");
        if boundary == n - 1 {
            return mem_cycles_per_cl(self, f_hz);
        }
        let base = self.caches[boundary]
            .cycles_per_cl
            .expect("validated: inner cache levels carry cycles_per_cl");
        if n >= 2 && boundary == n - 2 {
            base * self.uncore_clock_factor
        } else {
            base
        }
    }

    /// Throughput for `class.width`, falling back to `class.*`.
    pub fn throughput_of(&self, class: &str, width: &str) -> Option<f64> {
        self.throughput
            .get(&InstrKey::new(class, width))
            .or_else(|| self.throughput.get(&InstrKey::new(class, ANY_WIDTH)))
            .copied()
    }

    pub fn cache_index(&self, name: &str) -> Option<usize> {
        self.caches.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("clock_ghz", self.clock_ghz),
            ("base_clock_ghz", self.base_clock_ghz),
            ("mem_bandwidth_GBps", self.mem_bandwidth_gbps),
            ("frontend_uops_per_cycle", self.frontend_uops_per_cycle),
            ("uncore_clock_factor", self.uncore_clock_factor),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::semantic(format!("`{key}` must be positive, got {value}")));
            }
        }
        if self.cores == 0 {
            return Err(Error::semantic("`cores` must be at least 1"));
        }
        if self.cacheline_bytes == 0 {
            return Err(Error::semantic("`cacheline_bytes` must be positive"));
        }
        if self.caches.is_empty() {
            return Err(Error::semantic("machine needs at least one [cache] section"));
        }
        let last = self.caches.len() - 1;
        for (idx, c) in self.caches.iter().enumerate() {
            if c.capacity_bytes == 0 {
                return Err(Error::semantic(format!("cache {} has zero capacity", c.name)));
            }
            if idx > 0 && c.capacity_bytes <= self.caches[idx - 1].capacity_bytes {
                return Err(Error::semantic(format!(
                    "cache sizes must increase core-outward ({} is not larger than {})",
                    c.name,
                    self.caches[idx - 1].name
                )));
            }
            match (idx == last, c.cycles_per_cl) {
                (false, None) => {
                    return Err(Error::semantic(format!(
                        "cache {} is missing mandatory key `cycles_per_cl`",
                        c.name
                    )))
                }
                (true, Some(_)) => {
                    return Err(Error::semantic(format!(
                        "outermost cache {} must not set `cycles_per_cl`; its boundary is memory",
                        c.name
                    )))
                }
                (_, Some(cy)) if !(cy.is_finite() && cy > 0.0) => {
                    return Err(Error::semantic(format!(
                        "cache {}: `cycles_per_cl` must be positive",
                        c.name
                    )))
                }
                _ => {}
            }
            if self.caches[..idx].iter().any(|p| p.name == c.name) {
                return Err(Error::semantic(format!("duplicate cache name {}", c.name)));
            }
        }
        for (key, tp) in &self.throughput {
            if !(tp.is_finite() && *tp > 0.0) {
                return Err(Error::semantic(format!("throughput of {key} must be positive")));
            }
        }
        for (class, lat) in &self.latency {
            if !(lat.is_finite() && *lat > 0.0) {
                return Err(Error::semantic(format!("latency of {class} must be positive")));
            }
        }
        for ((level, threads), bw) in &self.measured_bandwidths {
            if level != MEMORY_LEVEL && self.cache_index(level).is_none() {
                return Err(Error::semantic(format!(
                    "measured bandwidth refers to unknown level {level}"
                )));
            }
            if *threads == 0 || !(bw.is_finite() && *bw > 0.0) {
                return Err(Error::semantic(format!(
                    "measured bandwidth {level}.{threads} must have threads >= 1 and a positive value"
                )));
            }
        }
        Ok(())
    }

    /// Renders the model in the machine-file format.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

/// Cycles to move one cacheline between memory and the outermost cache at
/// core frequency `f_hz`: `cacheline_bytes * f / b_S`, unrounded.
pub fn mem_cycles_per_cl(m: &MachineModel, f_hz: f64) -> f64 {
    m.cacheline_bytes as f64 * f_hz / m.mem_bandwidth_bps()
}

pub fn parse_machine(text: &str) -> Result<MachineModel> {
    let sections = sections::lex(text)?;
    let mut machine_section: Option<&Section> = None;
    let mut caches = Vec::new();
    let mut throughput = BTreeMap::new();
    let mut latency = BTreeMap::new();
    let mut measured_bandwidths = BTreeMap::new();

    for section in &sections {
        match (section.kind.as_str(), section.arg.as_deref()) {
            ("machine", None) => {
                if machine_section.is_some() {
                    return Err(Error::syntax(section.line, "duplicate [machine] section"));
                }
                machine_section = Some(section);
            }
            ("cache", Some(name)) => caches.push(parse_cache(section, name)?),
            ("cache", None) => {
                return Err(Error::syntax(section.line, "[cache] needs a level name, e.g. [cache L1]"))
            }
            ("throughput", None) => {
                for e in &section.entries {
                    let (class, width) = sections::split_class_width(e)?;
                    if throughput
                        .insert(InstrKey::new(class, width), sections::parse_positive(e)?)
                        .is_some()
                    {
                        return Err(Error::syntax(e.line, format!("duplicate key `{}`", e.key)));
                    }
                }
            }
            ("latency", None) => {
                for e in &section.entries {
                    if latency.insert(e.key.clone(), sections::parse_positive(e)?).is_some() {
                        return Err(Error::syntax(e.line, format!("duplicate key `{}`", e.key)));
                    }
                }
            }
            ("measured_bw", None) => {
                for e in &section.entries {
                    let (level, threads) = e.key.rsplit_once('.').ok_or_else(|| {
                        Error::syntax(e.line, format!("expected `<LEVEL>.<threads>`, found `{}`", e.key))
                    })?;
                    let threads: u32 = threads.parse().map_err(|_| {
                        Error::syntax(e.line, format!("thread count in `{}` is not an integer", e.key))
                    })?;
                    let key = (level.to_string(), threads);
                    if measured_bandwidths
                        .insert(key, sections::parse_positive(e)?)
                        .is_some()
                    {
                        return Err(Error::syntax(e.line, format!("duplicate key `{}`", e.key)));
                    }
                }
            }
            _ => {
                return Err(Error::syntax(
                    section.line,
                    format!("unknown section [{}]", section.header()),
                ))
            }
        }
    }

    let ms = machine_section.ok_or_else(|| Error::semantic("missing [machine] section"))?;
    ms.check_keys(&[
        "name",
        "clock_ghz",
        "base_clock_ghz",
        "cores",
        "cacheline_bytes",
        "mem_bandwidth_GBps",
        "frontend_uops_per_cycle",
        "uncore_clock_factor",
    ])?;
    let clock_ghz = sections::parse_positive(ms.require("clock_ghz")?)?;
    let base_clock_ghz = match ms.get("base_clock_ghz") {
        Some(e) => sections::parse_positive(e)?,
        None => clock_ghz,
    };
    let cores = sections::parse_u64(ms.require("cores")?)?;
    let cores = u32::try_from(cores).map_err(|_| Error::semantic("`cores` is out of range"))?;
    let cacheline_bytes = match ms.get("cacheline_bytes") {
        Some(e) => u32::try_from(sections::parse_u64(e)?)
            .map_err(|_| Error::semantic("`cacheline_bytes` is out of range"))?,
        None => 64,
    };
    let machine = MachineModel {
        name: ms.require("name")?.value.clone(),
        clock_ghz,
        base_clock_ghz,
        cores,
        cacheline_bytes,
        mem_bandwidth_gbps: sections::parse_positive(ms.require("mem_bandwidth_GBps")?)?,
        caches,
        throughput,
        latency,
        frontend_uops_per_cycle: match ms.get("frontend_uops_per_cycle") {
            Some(e) => sections::parse_positive(e)?,
            None => 4.0,
        },
        uncore_clock_factor: match ms.get("uncore_clock_factor") {
            Some(e) => sections::parse_positive(e)?,
            None => 1.0,
        },
        measured_bandwidths,
    };
    machine.validate()?;
    Ok(machine)
}

fn parse_cache(section: &Section, name: &str) -> Result<CacheLevel> {
    section.check_keys(&["capacity", "shared", "cycles_per_cl"])?;
    let cap = section.require("capacity")?;
    Ok(CacheLevel {
        name: name.to_string(),
        capacity_bytes: parse_capacity(&cap.value)
            .ok_or_else(|| Error::syntax(cap.line, format!("bad capacity `{}`", cap.value)))?,
        shared: match section.get("shared") {
            Some(e) => sections::parse_bool(e)?,
            None => false,
        },
        cycles_per_cl: section
            .get("cycles_per_cl")
            .map(sections::parse_positive)
            .transpose()?,
    })
}

/// `32kB`, `20MB` (powers of 1024) or a plain byte count.
pub fn parse_capacity(text: &str) -> Option<u64> {
    let t = text.trim();
    let (digits, mult) = if let Some(d) = t.strip_suffix("kB") {
        (d, KIB)
    } else if let Some(d) = t.strip_suffix("MB") {
        (d, MIB)
    } else if let Some(d) = t.strip_suffix('B') {
        (d, 1)
    } else {
        (t, 1)
    };
    digits.trim().parse::<u64>().ok()?.checked_mul(mult)
}

pub fn render_capacity(bytes: u64) -> String {
    if bytes >= MIB && bytes.is_multiple_of(MIB) {
        format!("{}MB", bytes / MIB)
    } else if bytes >= KIB && bytes.is_multiple_of(KIB) {
        format!("{}kB", bytes / KIB)
    } else {
        format!("{bytes}B")
    }
}

impl FromStr for MachineModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_machine(s)
    }
}

impl fmt::Display for MachineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[machine]")?;
        writeln!(f, "name = {}", self.name)?;
        writeln!(f, "clock_ghz = {}", self.clock_ghz)?;
        writeln!(f, "base_clock_ghz = {}", self.base_clock_ghz)?;
        writeln!(f, "cores = {}", self.cores)?;
        writeln!(f, "cacheline_bytes = {}", self.cacheline_bytes)?;
        writeln!(f, "mem_bandwidth_GBps = {}", self.mem_bandwidth_gbps)?;
        writeln!(f, "frontend_uops_per_cycle = {}", self.frontend_uops_per_cycle)?;
        writeln!(f, "uncore_clock_factor = {}", self.uncore_clock_factor)?;
        for c in &self.caches {
            writeln!(f)?;
            writeln!(f, "[cache {}]", c.name)?;
            writeln!(f, "capacity = {}", render_capacity(c.capacity_bytes))?;
            writeln!(f, "shared = {}", c.shared)?;
            if let Some(cy) = c.cycles_per_cl {
                writeln!(f, "cycles_per_cl = {cy}")?;
            }
        }
        if !self.throughput.is_empty() {
            writeln!(f)?;
            writeln!(f, "[throughput]")?;
            for (key, tp) in &self.throughput {
                writeln!(f, "{key} = {tp}")?;
            }
        }
        if !self.latency.is_empty() {
            writeln!(f)?;
            writeln!(f, "[latency]")?;
            for (class, lat) in &self.latency {
                writeln!(f, "{class} = {lat}")?;
            }
        }
        if !self.measured_bandwidths.is_empty() {
            writeln!(f)?;
            writeln!(f, "[measured_bw]")?;
            for ((level, threads), bw) in &self.measured_bandwidths {
                writeln!(f, "{level}.{threads} = {bw}")?;
            }
        }
        Ok(())
    }
}

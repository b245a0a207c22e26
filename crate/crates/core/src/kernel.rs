//! Declarative loop-kernel description: work unit, instruction mix and data
//! streams with their stencil offsets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::machine::InstrKey;
use crate::sections::{self, Section};

/// Access offset, outermost dimension first.
pub type Offset = Vec<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamMode {
    Read,
    Write,
    /// Read and written back, e.g. `a[i] = a[i] + s*b[i]`.
    Update,
}

impl StreamMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamMode::Read => "read",
            StreamMode::Write => "write",
            StreamMode::Update => "update",
        }
    }
}

impl FromStr for StreamMode {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "read" => Ok(StreamMode::Read),
            "write" => Ok(StreamMode::Write),
            "update" => Ok(StreamMode::Update),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub array: String,
    pub element_bytes: u32,
    pub mode: StreamMode,
    pub write_allocate: bool,
    /// For read/update streams the read offsets; for a write stream the
    /// single write location.
    pub offsets: Vec<Offset>,
    /// Write location of an update stream; the origin when unset.
    pub write_offset: Option<Offset>,
}

impl StreamSpec {
    pub fn read_offsets(&self) -> &[Offset] {
        match self.mode {
            StreamMode::Write => &[],
            StreamMode::Read | StreamMode::Update => &self.offsets,
        }
    }

    pub fn write_location(&self, dims: usize) -> Option<Offset> {
        match self.mode {
            StreamMode::Read => None,
            StreamMode::Write => self.offsets.first().cloned(),
            StreamMode::Update => Some(self.write_offset.clone().unwrap_or_else(|| vec![0; dims])),
        }
    }

    pub fn is_written(&self) -> bool {
        self.mode != StreamMode::Read
    }

    /// A store miss needs a write-allocate load unless write-allocate is
    /// off or the stored layer is already brought in by a read of the
    /// same array.
    pub fn needs_write_allocate(&self, dims: usize) -> bool {
        let Some(target) = self.write_location(dims) else {
            return false;
        };
        if !self.write_allocate {
            return false;
        }
        let covered = self
            .read_offsets()
            .iter()
            .any(|r| dims <= 1 || r.first() == target.first());
        !covered
    }

    fn dims(&self) -> usize {
        self.offsets.first().map_or(0, Vec::len)
    }

    /// Distinct middle-dimension references (meaningful for 3D kernels).
    pub fn middle_rows(&self) -> usize {
        let dims = self.dims();
        if dims < 3 {
            return 1;
        }
        self.read_offsets()
            .iter()
            .map(|o| o[dims - 2])
            .collect::<BTreeSet<_>>()
            .len()
            .max(1)
    }
}

/// Number of layers (distinct outer-dimension references) an array
/// touches per sweep step. One for 1D kernels and pure writes.
pub fn distinct_outer_layers(s: &StreamSpec) -> usize {
    if s.mode == StreamMode::Write || s.dims() <= 1 {
        return 1;
    }
    s.read_offsets()
        .iter()
        .map(|o| o[0])
        .collect::<BTreeSet<_>>()
        .len()
        .max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepChain {
    pub class: String,
    /// Latency-bound instructions per work unit.
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub name: String,
    pub dims: usize,
    /// Default element size inherited by streams.
    pub element_bytes: u32,
    pub lups_per_workunit: u32,
    pub flops_per_lup: f64,
    /// Instruction counts per work unit.
    pub instr: BTreeMap<InstrKey, f64>,
    pub dep_chain: Option<DepChain>,
    pub t_ol_override: Option<f64>,
    pub t_nol_override: Option<f64>,
    /// Additive memory-boundary cachelines per work unit (block-boundary
    /// overheads such as eager prefetching), default 0.
    pub excess_mem_cls: f64,
    pub streams: Vec<StreamSpec>,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dims) {
            return Err(Error::semantic(format!("dims must be 1, 2 or 3, got {}", self.dims)));
        }
        if self.lups_per_workunit == 0 {
            return Err(Error::semantic("lups_per_workunit must be at least 1"));
        }
        check_element_bytes(self.element_bytes, "kernel")?;
        if !(self.flops_per_lup.is_finite() && self.flops_per_lup >= 0.0) {
            return Err(Error::semantic("flops_per_lup must be non-negative"));
        }
        for (key, count) in &self.instr {
            if !(count.is_finite() && *count >= 0.0) {
                return Err(Error::semantic(format!("instruction count of {key} must be non-negative")));
            }
        }
        if let Some(dc) = &self.dep_chain {
            if !(dc.count.is_finite() && dc.count >= 0.0) {
                return Err(Error::semantic("dep_chain count must be non-negative"));
            }
        }
        for (name, v) in [("t_ol_override", self.t_ol_override), ("t_nol_override", self.t_nol_override)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::semantic(format!("{name} must be non-negative")));
                }
            }
        }
        if !(self.excess_mem_cls.is_finite() && self.excess_mem_cls >= 0.0) {
            return Err(Error::semantic("excess_mem_cls must be non-negative"));
        }
        for (idx, s) in self.streams.iter().enumerate() {
            if self.streams[..idx].iter().any(|p| p.array == s.array) {
                return Err(Error::semantic(format!("duplicate stream {}", s.array)));
            }
            check_element_bytes(s.element_bytes, &s.array)?;
            match s.mode {
                StreamMode::Write if s.offsets.len() != 1 => {
                    return Err(Error::semantic(format!(
                        "write stream {} must have exactly one offset",
                        s.array
                    )))
                }
                StreamMode::Read | StreamMode::Update if s.offsets.is_empty() => {
                    return Err(Error::semantic(format!("stream {} has no offsets", s.array)))
                }
                _ => {}
            }
            if s.write_offset.is_some() && s.mode != StreamMode::Update {
                return Err(Error::semantic(format!(
                    "write_offset is only valid on update streams ({})",
                    s.array
                )));
            }
            for o in s.offsets.iter().chain(s.write_offset.iter()) {
                if o.len() != self.dims {
                    return Err(Error::semantic(format!(
                        "stream {}: offset {} has {} components, kernel has {} dims",
                        s.array,
                        render_offset(o),
                        o.len(),
                        self.dims
                    )));
                }
            }
        }
        Ok(())
    }

    /// Streams whose read offsets span at least two outer layers.
    pub fn layered_streams(&self) -> impl Iterator<Item = &StreamSpec> {
        self.streams.iter().filter(|s| distinct_outer_layers(s) >= 2)
    }

    /// Largest absolute outer-dimension offset over all streams.
    pub fn outer_radius(&self) -> i64 {
        self.streams
            .iter()
            .flat_map(|s| s.offsets.iter())
            .filter_map(|o| o.first())
            .map(|v| v.abs())
            .max()
            .unwrap_or(0)
    }

    pub fn total_instructions(&self) -> f64 {
        self.instr.values().sum()
    }

    pub fn render(&self) -> String {
        self.to_string()
    }
}

fn check_element_bytes(bytes: u32, what: &str) -> Result<()> {
    if matches!(bytes, 1 | 2 | 4 | 8 | 16) {
        Ok(())
    } else {
        Err(Error::semantic(format!(
            "{what}: element_bytes must be one of 1, 2, 4, 8, 16, got {bytes}"
        )))
    }
}

/// Problem extents, optional blocking and the number of threads sharing
/// shared caches. All per-dimension vectors are outermost first.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub extents: Vec<u64>,
    pub block_sizes: Vec<Option<u64>>,
    pub threads: u32,
}

impl GridConfig {
    pub fn new(extents: Vec<u64>) -> Self {
        let dims = extents.len();
        GridConfig {
            extents,
            block_sizes: vec![None; dims],
            threads: 1,
        }
    }

    /// Sets the block size of dimension `dim` (outermost = 0).
    pub fn with_block(mut self, dim: usize, size: u64) -> Self {
        self.block_sizes[dim] = Some(size);
        self
    }

    pub fn with_inner_block(self, size: u64) -> Self {
        let dim = self.extents.len() - 1;
        self.with_block(dim, size)
    }

    pub fn with_threads(mut self, threads: u32) -> Self {
        self.threads = threads;
        self
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    /// Block size where set, full extent otherwise.
    pub fn effective(&self, dim: usize) -> u64 {
        self.block_sizes[dim].unwrap_or(self.extents[dim])
    }

    pub fn validate(&self) -> Result<()> {
        if self.extents.is_empty() {
            return Err(Error::InvalidGrid("no extents".into()));
        }
        if self.block_sizes.len() != self.extents.len() {
            return Err(Error::InvalidGrid("block_sizes and extents differ in length".into()));
        }
        if self.threads == 0 {
            return Err(Error::InvalidGrid("threads must be at least 1".into()));
        }
        for (dim, (&n, b)) in self.extents.iter().zip(&self.block_sizes).enumerate() {
            if n == 0 {
                return Err(Error::InvalidGrid(format!("extent of dimension {dim} is zero")));
            }
            if let Some(b) = *b {
                if b == 0 || b > n {
                    return Err(Error::InvalidGrid(format!(
                        "block size {b} of dimension {dim} must lie in 1..={n}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, k: &KernelSpec) -> Result<()> {
        self.validate()?;
        if self.dims() != k.dims {
            return Err(Error::InvalidGrid(format!(
                "grid has {} dimensions, kernel {} has {}",
                self.dims(),
                k.name,
                k.dims
            )));
        }
        Ok(())
    }
}

pub fn parse_kernel(text: &str) -> Result<KernelSpec> {
    let sections = sections::lex(text)?;
    let mut kernel_section: Option<&Section> = None;
    let mut instr = BTreeMap::new();
    let mut dep_chain = None;
    let mut stream_sections = Vec::new();

    for section in &sections {
        match (section.kind.as_str(), section.arg.as_deref()) {
            ("kernel", None) => {
                if kernel_section.is_some() {
                    return Err(Error::syntax(section.line, "duplicate [kernel] section"));
                }
                kernel_section = Some(section);
            }
            ("instr", None) => {
                for e in &section.entries {
                    let (class, width) = sections::split_class_width(e)?;
                    let count = sections::parse_f64(e)?;
                    if instr.insert(InstrKey::new(class, width), count).is_some() {
                        return Err(Error::syntax(e.line, format!("duplicate key `{}`", e.key)));
                    }
                }
            }
            ("dep_chain", None) => {
                section.check_keys(&["class", "count"])?;
                dep_chain = Some(DepChain {
                    class: section.require("class")?.value.clone(),
                    count: sections::parse_f64(section.require("count")?)?,
                });
            }
            ("stream", Some(name)) => stream_sections.push((name, section)),
            ("stream", None) => {
                return Err(Error::syntax(section.line, "[stream] needs an array name"))
            }
            _ => {
                return Err(Error::syntax(
                    section.line,
                    format!("unknown section [{}]", section.header()),
                ))
            }
        }
    }

    let ks = kernel_section.ok_or_else(|| Error::semantic("missing [kernel] section"))?;
    ks.check_keys(&[
        "name",
        "dims",
        "element_bytes",
        "lups_per_workunit",
        "flops_per_lup",
        "t_ol_override",
        "t_nol_override",
        "excess_mem_cls",
    ])?;
    let dims = sections::parse_u64(ks.require("dims")?)? as usize;
    let element_bytes = parse_u32(ks.require("element_bytes")?)?;

    let mut streams = Vec::new();
    for (name, section) in stream_sections {
        section.check_keys(&["mode", "write_allocate", "element_bytes", "offsets", "write_offset"])?;
        let mode_entry = section.require("mode")?;
        let mode: StreamMode = mode_entry.value.parse().map_err(|_| {
            Error::syntax(
                mode_entry.line,
                format!("mode must be read, write or update, got `{}`", mode_entry.value),
            )
        })?;
        let offsets_entry = section.require("offsets")?;
        streams.push(StreamSpec {
            array: name.to_string(),
            element_bytes: match section.get("element_bytes") {
                Some(e) => parse_u32(e)?,
                None => element_bytes,
            },
            mode,
            write_allocate: match section.get("write_allocate") {
                Some(e) => sections::parse_bool(e)?,
                None => true,
            },
            offsets: parse_offsets(&offsets_entry.value)
                .map_err(|msg| Error::syntax(offsets_entry.line, msg))?,
            write_offset: match section.get("write_offset") {
                Some(e) => Some(parse_offset(&e.value).map_err(|msg| Error::syntax(e.line, msg))?),
                None => None,
            },
        });
    }

    let optional = |key: &str| -> Result<Option<f64>> {
        ks.get(key).map(sections::parse_f64).transpose()
    };
    let kernel = KernelSpec {
        name: ks.require("name")?.value.clone(),
        dims,
        element_bytes,
        lups_per_workunit: parse_u32(ks.require("lups_per_workunit")?)?,
        flops_per_lup: sections::parse_f64(ks.require("flops_per_lup")?)?,
        instr,
        dep_chain,
        t_ol_override: optional("t_ol_override")?,
        t_nol_override: optional("t_nol_override")?,
        excess_mem_cls: optional("excess_mem_cls")?.unwrap_or(0.0),
        streams,
    };
    kernel.validate()?;
    Ok(kernel)
}

fn parse_u32(e: &sections::Entry) -> Result<u32> {
    u32::try_from(sections::parse_u64(e)?)
        .map_err(|_| Error::syntax(e.line, format!("`{}` is out of range", e.key)))
}

/// Parses `(0,-1);(0,1);(-1,0)`.
pub fn parse_offsets(text: &str) -> std::result::Result<Vec<Offset>, String> {
    text.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(parse_offset)
        .collect()
}

fn parse_offset(text: &str) -> std::result::Result<Offset, String> {
    let inner = text
        .trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| format!("offset `{text}` must be a parenthesized tuple"))?;
    inner
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<i64>()
                .map_err(|_| format!("offset component `{}` is not an integer", v.trim()))
        })
        .collect()
}

pub fn render_offset(o: &[i64]) -> String {
    let parts: Vec<String> = o.iter().map(i64::to_string).collect();
    format!("({})", parts.join(","))
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_kernel(s)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[kernel]")?;
        writeln!(f, "name = {}", self.name)?;
        writeln!(f, "dims = {}", self.dims)?;
        writeln!(f, "element_bytes = {}", self.element_bytes)?;
        writeln!(f, "lups_per_workunit = {}", self.lups_per_workunit)?;
        writeln!(f, "flops_per_lup = {}", self.flops_per_lup)?;
        if let Some(v) = self.t_ol_override {
            writeln!(f, "t_ol_override = {v}")?;
        }
        if let Some(v) = self.t_nol_override {
            writeln!(f, "t_nol_override = {v}")?;
        }
        if self.excess_mem_cls != 0.0 {
            writeln!(f, "excess_mem_cls = {}", self.excess_mem_cls)?;
        }
        if !self.instr.is_empty() {
            writeln!(f)?;
            writeln!(f, "[instr]")?;
            for (key, count) in &self.instr {
                writeln!(f, "{key} = {count}")?;
            }
        }
        if let Some(dc) = &self.dep_chain {
            writeln!(f)?;
            writeln!(f, "[dep_chain]")?;
            writeln!(f, "class = {}", dc.class)?;
            writeln!(f, "count = {}", dc.count)?;
        }
        for s in &self.streams {
            writeln!(f)?;
            writeln!(f, "[stream {}]", s.array)?;
            writeln!(f, "mode = {}", s.mode.as_str())?;
            writeln!(f, "write_allocate = {}", s.write_allocate)?;
            writeln!(f, "element_bytes = {}", s.element_bytes)?;
            let offsets: Vec<String> = s.offsets.iter().map(|o| render_offset(o)).collect();
            writeln!(f, "offsets = {}", offsets.join(";"))?;
            if let Some(w) = &s.write_offset {
                writeln!(f, "write_offset = {}", render_offset(w))?;
            }
        }
        Ok(())
    }
}

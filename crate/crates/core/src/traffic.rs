//! Per-boundary cacheline traffic, transfer times and code balance.

use crate::error::{Error, Result};
use crate::kernel::{distinct_outer_layers, KernelSpec};
use crate::layers::LayerConditionReport;
use crate::machine::MachineModel;

/// Streams of one array across one hierarchy boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BoundaryStreams {
    pub reads: u32,
    pub write_allocates: u32,
    pub evicts: u32,
}

impl BoundaryStreams {
    pub fn total(&self) -> u32 {
        self.reads + self.write_allocates + self.evicts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayStreams {
    pub array: String,
    /// Cachelines each stream of this array moves per work unit.
    pub cls_per_stream: f64,
    pub per_boundary: Vec<BoundaryStreams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTraffic {
    pub name: String,
    pub cls_per_workunit: f64,
    /// Code balance `B_C` at this boundary.
    pub bytes_per_lup: f64,
    pub cycles_per_cl: f64,
    pub transfer_cycles: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficReport {
    pub boundaries: Vec<BoundaryTraffic>,
    pub arrays: Vec<ArrayStreams>,
}

impl TrafficReport {
    pub fn transfer_cycles(&self) -> Vec<f64> {
        self.boundaries.iter().map(|b| b.transfer_cycles).collect()
    }

    pub fn memory(&self) -> &BoundaryTraffic {
        self.boundaries.last().expect("at least one boundary")
    }
}

/// Stream counts per array at each of `boundaries` hierarchy boundaries.
pub fn stream_counts(k: &KernelSpec, lc: &LayerConditionReport, boundaries: usize) -> Vec<ArrayStreams> {
    k.streams
        .iter()
        .map(|s| {
            let layers = distinct_outer_layers(s) as u32;
            let per_boundary = (0..boundaries)
                .map(|b| {
                    let reads = if s.read_offsets().is_empty() {
                        0
                    } else if lc.reuse_at(b) {
                        1
                    } else {
                        layers
                    };
                    BoundaryStreams {
                        reads,
                        write_allocates: u32::from(s.needs_write_allocate(k.dims)),
                        evicts: u32::from(s.is_written()),
                    }
                })
                .collect();
            ArrayStreams {
                array: s.array.clone(),
                cls_per_stream: 0.0,
                per_boundary,
            }
        })
        .collect()
}

/// Traffic at core frequency `f_hz`.
pub fn traffic(k: &KernelSpec, lc: &LayerConditionReport, m: &MachineModel, f_hz: f64) -> TrafficReport {
    let n = m.boundary_count();
    let cl = m.cacheline_bytes as f64;
    let lups = k.lups_per_workunit as f64;
    let mut arrays = stream_counts(k, lc, n);
    for (a, s) in arrays.iter_mut().zip(&k.streams) {
        a.cls_per_stream = lups * s.element_bytes as f64 / cl;
    }
    let names = m.boundary_names();
    let boundaries = (0..n)
        .map(|b| {
            let mut cls: f64 = arrays
                .iter()
                .map(|a| a.per_boundary[b].total() as f64 * a.cls_per_stream)
                .sum();
            if b == n - 1 {
                cls += k.excess_mem_cls;
            }
            let cycles_per_cl = m.boundary_cycles_per_cl(b, f_hz);
            BoundaryTraffic {
                name: names[b].clone(),
                cls_per_workunit: cls,
                bytes_per_lup: cls * cl / lups,
                cycles_per_cl,
                transfer_cycles: cls * cycles_per_cl,
            }
        })
        .collect();
    TrafficReport { boundaries, arrays }
}

pub fn code_balance(tr: &TrafficReport, boundary: usize) -> Result<f64> {
    tr.boundaries
        .get(boundary)
        .map(|b| b.bytes_per_lup)
        .ok_or_else(|| {
            Error::Precondition(format!(
                "boundary {boundary} out of range (0..{})",
                tr.boundaries.len()
            ))
        })
}

/// Maps a level label (`L2`, `L3`, `MEM`, case-insensitive) to the boundary
/// whose outer side it is. `L1` has no boundary on its core side.
pub fn boundary_for_level(m: &MachineModel, level: &str) -> Result<usize> {
    if level.eq_ignore_ascii_case("mem") {
        return Ok(m.boundary_count() - 1);
    }
    match m.cache_index(level) {
        Some(0) => Err(Error::Precondition(format!(
            "{level} is the innermost level; it has no inbound boundary"
        ))),
        Some(idx) => Ok(idx - 1),
        None => Err(Error::Precondition(format!("unknown level {level}"))),
    }
}

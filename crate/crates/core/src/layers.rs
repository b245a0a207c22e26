//! Layer conditions: whether the outer-dimension layers a stencil keeps
//! alive fit into (a usable fraction of) each cache level.

use crate::error::{Error, Result};
use crate::kernel::{distinct_outer_layers, GridConfig, KernelSpec};
use crate::machine::MachineModel;

/// Fraction of each cache assumed available for layers.
pub const DEFAULT_USABLE_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLevelCondition {
    pub working_set_bytes: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayCondition {
    pub array: String,
    pub layers: usize,
    pub element_bytes: u32,
    /// One entry per cache level; the array on its own.
    pub per_level: Vec<ArrayLevelCondition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelCondition {
    pub name: String,
    pub capacity_bytes: u64,
    pub threads_sharing: u32,
    /// All layered arrays combined.
    pub working_set_bytes: f64,
    pub satisfied: bool,
    /// Largest extent of the blockable dimension (inner extent in 2D,
    /// middle extent in 3D) that still satisfies the combined condition.
    /// `None` when no array has two or more layers.
    pub max_extent: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerConditionReport {
    pub usable_fraction: f64,
    pub arrays: Vec<ArrayCondition>,
    pub levels: Vec<LevelCondition>,
    /// Innermost cache level whose combined condition holds. Levels further
    /// out inherit it.
    pub lc_level: Option<usize>,
    /// Row condition against L1 (3D kernels only).
    pub row_condition_ok: Option<bool>,
}

impl LayerConditionReport {
    /// Layered arrays get a single stream across `boundary` iff the layer
    /// condition holds in the cache on the core side of it.
    pub fn reuse_at(&self, boundary: usize) -> bool {
        self.lc_level.is_some_and(|lc| lc <= boundary)
    }

    pub fn has_layered_arrays(&self) -> bool {
        self.arrays.iter().any(|a| a.layers >= 2)
    }
}

/// Cross-section of one layer in elements (2D: a row, 3D: a plane). The
/// blockable dimension is always index 1.
fn layer_elements(g: &GridConfig) -> u64 {
    match g.dims() {
        2 => g.effective(1),
        3 => g.effective(1) * g.effective(2),
        _ => 1,
    }
}

/// Elements of a layer per unit extent of the blockable dimension.
fn layer_elements_per_extent(g: &GridConfig) -> u64 {
    match g.dims() {
        3 => g.effective(2),
        _ => 1,
    }
}

fn threads_sharing(m: &MachineModel, level: usize, g: &GridConfig) -> u32 {
    if m.caches[level].shared {
        g.threads
    } else {
        1
    }
}

/// Largest integer `e >= 0` with `coef * e < limit`.
pub(crate) fn largest_satisfying(limit: f64, coef: f64) -> u64 {
    if limit <= 0.0 {
        return 0;
    }
    let mut e = (limit / coef).floor();
    while e > 0.0 && e * coef >= limit {
        e -= 1.0;
    }
    while (e + 1.0) * coef < limit {
        e += 1.0;
    }
    e.max(0.0) as u64
}

pub fn evaluate_layer_conditions(
    k: &KernelSpec,
    g: &GridConfig,
    m: &MachineModel,
    usable_fraction: f64,
) -> Result<LayerConditionReport> {
    g.validate_for(k)?;
    if !(usable_fraction > 0.0 && usable_fraction <= 1.0) {
        return Err(Error::Precondition(format!(
            "usable fraction must lie in (0, 1], got {usable_fraction}"
        )));
    }

    let layer = layer_elements(g) as f64;
    let per_extent = layer_elements_per_extent(g) as f64;
    let layered_bytes_per_element: f64 = k
        .layered_streams()
        .map(|s| (distinct_outer_layers(s) as u64 * s.element_bytes as u64) as f64)
        .sum();

    let mut arrays: Vec<ArrayCondition> = k
        .streams
        .iter()
        .map(|s| ArrayCondition {
            array: s.array.clone(),
            layers: distinct_outer_layers(s),
            element_bytes: s.element_bytes,
            per_level: Vec::with_capacity(m.caches.len()),
        })
        .collect();

    let mut levels = Vec::with_capacity(m.caches.len());
    for (idx, cache) in m.caches.iter().enumerate() {
        let threads = threads_sharing(m, idx, g);
        let limit = usable_fraction * cache.capacity_bytes as f64;
        for a in &mut arrays {
            let ws = if a.layers >= 2 {
                a.layers as f64 * layer * a.element_bytes as f64 * threads as f64
            } else {
                0.0
            };
            a.per_level.push(ArrayLevelCondition {
                working_set_bytes: ws,
                satisfied: ws < limit,
            });
        }
        let ws = layered_bytes_per_element * layer * threads as f64;
        let max_extent = (layered_bytes_per_element > 0.0)
            .then(|| largest_satisfying(limit, layered_bytes_per_element * per_extent * threads as f64));
        levels.push(LevelCondition {
            name: cache.name.clone(),
            capacity_bytes: cache.capacity_bytes,
            threads_sharing: threads,
            working_set_bytes: ws,
            satisfied: ws < limit,
            max_extent,
        });
    }

    let lc_level = if layered_bytes_per_element > 0.0 {
        levels.iter().position(|l| l.satisfied)
    } else {
        Some(0)
    };
    let row_condition_ok = if k.dims == 3 {
        Some(row_condition_with(k, g, m, usable_fraction)?)
    } else {
        None
    };

    Ok(LayerConditionReport {
        usable_fraction,
        arrays,
        levels,
        lc_level,
        row_condition_ok,
    })
}

/// Bytes of the rows (middle-dimension references) that must stay in L1
/// for row reuse in a 3D sweep.
pub fn row_working_set_bytes(k: &KernelSpec, g: &GridConfig) -> Result<f64> {
    if k.dims != 3 {
        return Err(Error::Precondition(format!(
            "row condition applies to 3D kernels, {} has {} dims",
            k.name, k.dims
        )));
    }
    g.validate_for(k)?;
    let inner = g.effective(2) as f64;
    Ok(k.streams
        .iter()
        .filter(|s| s.middle_rows() >= 2)
        .map(|s| s.middle_rows() as f64 * inner * s.element_bytes as f64)
        .sum())
}

pub fn row_condition(k: &KernelSpec, g: &GridConfig, m: &MachineModel) -> Result<bool> {
    row_condition_with(k, g, m, DEFAULT_USABLE_FRACTION)
}

pub fn row_condition_with(
    k: &KernelSpec,
    g: &GridConfig,
    m: &MachineModel,
    usable_fraction: f64,
) -> Result<bool> {
    let bytes = row_working_set_bytes(k, g)?;
    Ok(bytes < usable_fraction * m.caches[0].capacity_bytes as f64)
}

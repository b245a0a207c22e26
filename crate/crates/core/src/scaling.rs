//! Multicore scaling up to the memory-bandwidth ceiling, saturation point,
//! Roofline comparison and what-if transforms.

use crate::analysis::analyze_with;
use crate::ecm::{predict, EcmModel, Metric};
use crate::error::{Error, Result};
use crate::kernel::{GridConfig, KernelSpec};
use crate::machine::{MachineModel, MEMORY_LEVEL};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPoint {
    pub n: u32,
    /// Linear extrapolation `n * P_ECM^mem`.
    pub p_ecm: f64,
    /// Bandwidth ceiling `b_S / B_C`.
    pub ceiling: f64,
    pub performance: f64,
    pub saturated: bool,
    /// Largest block extent satisfying the layer condition at `n` threads,
    /// when computed from a grid.
    pub max_block_size: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingCurve {
    pub points: Vec<ScalingPoint>,
    /// Saturation core count; may exceed the core count. `cores + 1` when
    /// there is no memory traffic at all.
    pub n_s: u32,
}

fn ceiling_for(machine: &MachineModel, m: &EcmModel, bc_mem: f64, metric: Metric) -> f64 {
    if bc_mem <= 0.0 {
        return f64::INFINITY;
    }
    let lups = machine.mem_bandwidth_bps() / bc_mem;
    match metric {
        Metric::Lups => lups,
        Metric::Flops => lups * m.flops_per_lup,
    }
}

fn single_core_mem(m: &EcmModel, metric: Metric) -> f64 {
    m.work_per_unit(metric) * m.clock_hz / predict(m).in_memory()
}

fn point(n: u32, p_mem: f64, ceiling: f64, max_block_size: Option<u64>) -> ScalingPoint {
    let p_ecm = n as f64 * p_mem;
    ScalingPoint {
        n,
        p_ecm,
        ceiling,
        performance: p_ecm.min(ceiling),
        saturated: p_ecm >= ceiling,
        max_block_size,
    }
}

/// `P(n) = min(n * P_ECM^mem, b_S / B_C)` for `n = 1..=cores`.
pub fn scale(m: &EcmModel, machine: &MachineModel, bc_mem: f64, metric: Metric) -> ScalingCurve {
    let p_mem = single_core_mem(m, metric);
    let ceiling = ceiling_for(machine, m, bc_mem, metric);
    let points: Vec<ScalingPoint> = (1..=machine.cores).map(|n| point(n, p_mem, ceiling, None)).collect();
    let n_s = if ceiling.is_finite() {
        (ceiling / p_mem).ceil().max(1.0) as u32
    } else {
        machine.cores + 1
    };
    ScalingCurve { points, n_s }
}

/// Level whose block size `scale_with_grid` annotates by default: the
/// outermost shared cache, else the outermost cache.
pub fn default_blocking_level(machine: &MachineModel) -> usize {
    machine
        .caches
        .iter()
        .rposition(|c| c.shared)
        .unwrap_or(machine.caches.len() - 1)
}

/// Scaling with the layer conditions re-evaluated at every thread count,
/// so a shared-cache condition that breaks at larger `n` shows up as a
/// higher code balance and lower ceiling.
pub fn scale_with_grid(
    machine: &MachineModel,
    k: &KernelSpec,
    g: &GridConfig,
    metric: Metric,
    annotate_level: usize,
    usable_fraction: f64,
) -> Result<ScalingCurve> {
    if annotate_level >= machine.caches.len() {
        return Err(Error::Precondition(format!("cache level {annotate_level} out of range")));
    }
    let mut points = Vec::with_capacity(machine.cores as usize);
    let mut n_s = None;
    for n in 1..=machine.cores {
        let grid = g.clone().with_threads(n);
        let a = analyze_with(machine, k, &grid, usable_fraction)?;
        let bc_mem = a.traffic.memory().bytes_per_lup;
        let p_mem = single_core_mem(&a.model, metric);
        let ceiling = ceiling_for(machine, &a.model, bc_mem, metric);
        let pt = point(n, p_mem, ceiling, a.layers.levels[annotate_level].max_extent);
        if pt.saturated && n_s.is_none() {
            n_s = Some(n);
        }
        points.push(pt);
    }
    Ok(ScalingCurve {
        points,
        n_s: n_s.unwrap_or(machine.cores + 1),
    })
}

/// `n_S = ceil(T_ECM^mem / T_L3Mem)` on unrounded cycles.
pub fn saturation_cores(m: &EcmModel) -> Result<u32> {
    let t_mem = m.t_mem();
    if t_mem <= 0.0 {
        return Err(Error::NoSaturation);
    }
    Ok((predict(m).in_memory() / t_mem).ceil() as u32)
}

/// Share of the in-memory runtime spent on the memory transfer.
pub fn memory_share(m: &EcmModel) -> f64 {
    m.t_mem() / predict(m).in_memory()
}

/// Optimal temporal blocking: the memory transfer disappears.
pub fn whatif_temporal_blocking(m: &EcmModel) -> EcmModel {
    let mut out = m.clone();
    if let Some(mem) = out.transfers.last_mut() {
        *mem = 0.0;
    }
    out
}

/// `T_data + T_nOL > T_OL`: shaving overlapping core cycles cannot help.
pub fn dominance_check(m: &EcmModel) -> bool {
    m.t_data() + m.t_nol() > m.t_ol()
}

/// How a Roofline bandwidth input was obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthSource {
    Measured,
    /// Private cache: single-thread value times `n`.
    LinearFromSingleThread,
    /// Closest measured thread count.
    Nearest(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelBalance {
    /// `L2`, `L3`, `MEM`, ...: the level the data comes from.
    pub level: String,
    pub bytes_per_lup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RooflineResult {
    pub n: u32,
    /// LUP/s.
    pub performance: f64,
    /// `core` or the limiting level.
    pub limiter: String,
    pub sources: Vec<(String, BandwidthSource)>,
}

/// Measured bandwidth in bytes/s for `level` at `n` threads.
pub fn measured_bandwidth(machine: &MachineModel, level: &str, n: u32) -> Result<(f64, BandwidthSource)> {
    let entries: Vec<(u32, f64)> = machine
        .measured_bandwidths
        .iter()
        .filter(|((l, _), _)| l.eq_ignore_ascii_case(level))
        .map(|((_, t), bw)| (*t, *bw))
        .collect();
    let missing = || Error::MissingBandwidth {
        level: level.to_string(),
        threads: n,
    };
    if let Some((_, bw)) = entries.iter().find(|(t, _)| *t == n) {
        return Ok((bw * 1e9, BandwidthSource::Measured));
    }
    let private = !level.eq_ignore_ascii_case(MEMORY_LEVEL)
        && machine.cache_index(level).is_some_and(|i| !machine.caches[i].shared);
    if private {
        if let Some((_, bw)) = entries.iter().find(|(t, _)| *t == 1) {
            return Ok((bw * 1e9 * n as f64, BandwidthSource::LinearFromSingleThread));
        }
    }
    let (t, bw) = entries
        .iter()
        .min_by_key(|(t, _)| (t.abs_diff(n), *t))
        .ok_or_else(missing)?;
    Ok((bw * 1e9, BandwidthSource::Nearest(*t)))
}

/// `P_Roof(n) = min(n * P_max^core, min_i b_S,i(n) / B_C,i)` in LUP/s.
pub fn roofline(
    machine: &MachineModel,
    p_core_max: f64,
    balances: &[LevelBalance],
    n: u32,
) -> Result<RooflineResult> {
    let mut performance = n as f64 * p_core_max;
    let mut limiter = "core".to_string();
    let mut sources = Vec::new();
    for lb in balances {
        if lb.bytes_per_lup <= 0.0 {
            continue;
        }
        let (bw, source) = measured_bandwidth(machine, &lb.level, n)?;
        let limit = bw / lb.bytes_per_lup;
        if limit < performance {
            performance = limit;
            limiter = lb.level.clone();
        }
        sources.push((lb.level.clone(), source));
    }
    Ok(RooflineResult {
        n,
        performance,
        limiter,
        sources,
    })
}

/// Roofline for `n = 1..=max_n` and the first `n` at which a bandwidth
/// term, not the core, is the limit (`None` if never).
pub fn roofline_curve(
    machine: &MachineModel,
    p_core_max: f64,
    balances: &[LevelBalance],
    max_n: u32,
) -> Result<(Vec<RooflineResult>, Option<u32>)> {
    let curve = (1..=max_n)
        .map(|n| roofline(machine, p_core_max, balances, n))
        .collect::<Result<Vec<_>>>()?;
    let saturation = curve.iter().find(|r| r.limiter != "core").map(|r| r.n);
    Ok((curve, saturation))
}

/// Level names the Roofline model uses for each boundary of `machine`
/// (the outer side of each boundary).
pub fn roofline_levels(machine: &MachineModel) -> Vec<String> {
    let mut names: Vec<String> = machine.caches.iter().skip(1).map(|c| c.name.clone()).collect();
    names.push(MEMORY_LEVEL.to_string());
    names
}

/// In-core maximum performance `W * f / T_core` in LUP/s.
pub fn p_core_max(m: &EcmModel) -> f64 {
    m.lups_per_workunit * m.clock_hz / m.core.t_core()
}

/// Peak transfer bandwidth of every boundary implied by the machine
/// model's cycles-per-line figures, bytes/s.
pub fn machine_bandwidths(machine: &MachineModel, f_hz: f64) -> Vec<f64> {
    (0..machine.boundary_count())
        .map(|b| machine.cacheline_bytes as f64 * f_hz / machine.boundary_cycles_per_cl(b, f_hz))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn saturation_of_table_rows() {
        let rows = [
            (vec![6.0, 6.0, 12.96], 3),
            (vec![10.0, 6.0, 12.96], 3),
            (vec![10.0, 10.0, 12.96], 4),
            (vec![10.0, 10.0, 21.6], 3),
        ];
        for (transfers, expected) in rows {
            let m = EcmModel::from_parts(6.0, 8.0, transfers, 8.0, 2.7e9);
            assert_eq!(saturation_cores(&m).unwrap(), expected);
        }
    }

    #[test]
    fn no_memory_traffic_never_saturates() {
        let m = EcmModel::from_parts(6.0, 8.0, vec![6.0, 6.0, 0.0], 8.0, 2.7e9);
        assert_eq!(saturation_cores(&m), Err(Error::NoSaturation));
    }

    #[test]
    fn temporal_blocking_removes_memory_term() {
        let m = EcmModel::from_parts(84.0, 38.0, vec![20.0, 20.0, 25.92], 8.0, 2.7e9);
        let tb = whatif_temporal_blocking(&m);
        assert_eq!(tb.t_mem(), 0.0);
        assert_relative_eq!(predict(&m).in_memory() / predict(&tb).in_memory(), 103.92 / 84.0);
        assert_eq!(whatif_temporal_blocking(&tb), tb);
    }

    #[test]
    fn dominance() {
        let uxx = EcmModel::from_parts(84.0, 38.0, vec![20.0, 20.0, 25.92], 8.0, 2.7e9);
        assert!(dominance_check(&uxx));
        let naive = EcmModel::from_parts(24.0, 4.0, vec![2.0, 2.0, 4.32], 8.0, 2.7e9);
        assert!(!dominance_check(&naive));
        let no_core = EcmModel::from_parts(0.0, 0.0, vec![0.0, 0.0, 1.0], 8.0, 2.7e9);
        assert!(dominance_check(&no_core));
    }
}

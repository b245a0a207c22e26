//! Property bodies shared by the property suite and the acceptance run.

use ecm_core::ecm::to_performance;
use ecm_core::layers::evaluate_layer_conditions;
use ecm_core::scaling::{
    machine_bandwidths, p_core_max, roofline, roofline_levels, scale, LevelBalance,
};
use ecm_core::{analyze, predict, GridConfig, KernelSpec, MachineModel, Metric};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

type Case = (MachineModel, KernelSpec, GridConfig);

pub fn prediction_monotone((m, k, g): &Case) -> Result<(), TestCaseError> {
    let a = analyze(m, k, g).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let p = predict(&a.model);
    prop_assert_eq!(p.cycles.len(), m.caches.len() + 1);
    for w in p.cycles.windows(2) {
        prop_assert!(w[0] <= w[1], "prediction decreases outward: {:?}", p.cycles);
    }
    prop_assert!(p.cycles[0] >= a.model.t_ol().max(a.model.t_nol()));
    Ok(())
}

pub fn scaling_monotone_and_flat((m, k, g): &Case) -> Result<(), TestCaseError> {
    let a = analyze(m, k, g).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let bc = a.traffic.memory().bytes_per_lup;
    let curve = scale(&a.model, m, bc, Metric::Lups);
    for w in curve.points.windows(2) {
        prop_assert!(w[0].performance <= w[1].performance);
    }
    for pt in &curve.points {
        prop_assert!(pt.performance <= pt.ceiling);
        if pt.n >= curve.n_s {
            prop_assert!(pt.saturated);
            prop_assert_eq!(pt.performance, pt.ceiling);
        } else {
            prop_assert!(!pt.saturated);
        }
    }
    Ok(())
}

/// Roofline fed with the bandwidths the ECM model itself implies can
/// never be slower than the ECM prediction.
pub fn roofline_not_slower_than_ecm((m, k, g): &Case) -> Result<(), TestCaseError> {
    let a = analyze(m, k, g).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let mut shared = m.clone();
    let f = m.clock_hz();
    for (level, bw) in roofline_levels(m).into_iter().zip(machine_bandwidths(m, f)) {
        shared.measured_bandwidths.insert((level, 1), bw / 1e9);
    }
    let balances: Vec<LevelBalance> = roofline_levels(m)
        .into_iter()
        .zip(&a.traffic.boundaries)
        .map(|(level, b)| LevelBalance {
            level,
            bytes_per_lup: b.bytes_per_lup,
        })
        .collect();
    let p_core = if a.model.core.t_core() > 0.0 {
        p_core_max(&a.model)
    } else {
        f64::INFINITY
    };
    let roof = roofline(&shared, p_core, &balances, 1).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let ecm = to_performance(&a.model, &predict(&a.model), Metric::Lups, f);
    let ecm_mem = *ecm.last().unwrap();
    if ecm_mem.is_finite() {
        prop_assert!(
            roof.performance >= ecm_mem * (1.0 - 1e-9),
            "roofline {} < ecm {}",
            roof.performance,
            ecm_mem
        );
    }
    Ok(())
}

pub fn traffic_monotone_outward((m, k, g): &Case) -> Result<(), TestCaseError> {
    let a = analyze(m, k, g).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for w in a.traffic.boundaries.windows(2) {
        prop_assert!(
            w[0].cls_per_workunit >= w[1].cls_per_workunit,
            "{} then {}",
            w[0].cls_per_workunit,
            w[1].cls_per_workunit
        );
    }
    Ok(())
}

/// Working sets scale linearly with the thread count on shared levels
/// and not at all on private ones.
pub fn layer_condition_linear_in_threads((m, k, g): &Case, threads: u32) -> Result<(), TestCaseError> {
    let one = evaluate_layer_conditions(k, g, m, 0.5).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let many = evaluate_layer_conditions(k, &g.clone().with_threads(threads), m, 0.5)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    for (idx, (a, b)) in one.levels.iter().zip(&many.levels).enumerate() {
        let factor = if m.caches[idx].shared { threads as f64 } else { 1.0 };
        let want = a.working_set_bytes * factor;
        prop_assert!((b.working_set_bytes - want).abs() <= 1e-9 * want.max(1.0));
        if let (Some(e1), Some(en)) = (a.max_extent, b.max_extent) {
            prop_assert!(en <= e1);
        }
    }
    Ok(())
}

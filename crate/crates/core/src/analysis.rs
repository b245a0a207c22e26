//! End-to-end construction of an ECM model from machine, kernel and grid.

use crate::ecm::EcmModel;
use crate::error::Result;
use crate::incore::{in_core_times, CoreTimes};
use crate::kernel::{GridConfig, KernelSpec};
use crate::layers::{evaluate_layer_conditions, LayerConditionReport, DEFAULT_USABLE_FRACTION};
use crate::machine::MachineModel;
use crate::traffic::{traffic, TrafficReport};

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub core: CoreTimes,
    pub layers: LayerConditionReport,
    pub traffic: TrafficReport,
    pub model: EcmModel,
}

pub fn analyze(m: &MachineModel, k: &KernelSpec, g: &GridConfig) -> Result<Analysis> {
    analyze_with(m, k, g, DEFAULT_USABLE_FRACTION)
}

/// Builds the model at the machine's nominal clock.
pub fn analyze_with(m: &MachineModel, k: &KernelSpec, g: &GridConfig, usable_fraction: f64) -> Result<Analysis> {
    let core = in_core_times(k, m)?;
    let layers = evaluate_layer_conditions(k, g, m, usable_fraction)?;
    let traffic = traffic(k, &layers, m, m.clock_hz());
    let model = EcmModel {
        core: core.clone(),
        transfers: traffic.transfer_cycles(),
        locations: m.location_names(),
        lups_per_workunit: k.lups_per_workunit as f64,
        flops_per_lup: k.flops_per_lup,
        clock_hz: m.clock_hz(),
    };
    Ok(Analysis {
        core,
        layers,
        traffic,
        model,
    })
}

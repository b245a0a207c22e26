//! In-core execution time from the instruction mix under the throughput
//! assumption: loads make up the non-overlapping part, every other unit,
//! the front end and dependency chains bound the overlapping part.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::machine::MachineModel;

pub const LOAD_CLASS: &str = "LOAD";

#[derive(Debug, Clone, PartialEq)]
pub struct CoreTimes {
    /// Cycles per work unit that overlap with data transfers.
    pub t_ol: f64,
    /// Cycles per work unit that do not (load retirement).
    pub t_nol: f64,
    /// Port class, `frontend`, `dep_chain` or `override`.
    pub bottleneck: String,
    /// Per-unit busy cycles the maximum was taken over.
    pub unit_times: BTreeMap<String, f64>,
}

impl CoreTimes {
    pub fn new(t_ol: f64, t_nol: f64) -> Self {
        CoreTimes {
            t_ol,
            t_nol,
            bottleneck: "override".to_string(),
            unit_times: BTreeMap::new(),
        }
    }

    /// `T_core = max(T_nOL, T_OL)`.
    pub fn t_core(&self) -> f64 {
        self.t_nol.max(self.t_ol)
    }
}

pub fn in_core_times(k: &KernelSpec, m: &MachineModel) -> Result<CoreTimes> {
    if let (Some(t_ol), Some(t_nol)) = (k.t_ol_override, k.t_nol_override) {
        return Ok(CoreTimes::new(t_ol, t_nol));
    }

    let mut unit_times: BTreeMap<String, f64> = BTreeMap::new();
    for (key, &count) in &k.instr {
        let tp = m
            .throughput_of(&key.class, &key.width)
            .ok_or_else(|| Error::UnknownInstruction {
                class: key.class.clone(),
                width: key.width.clone(),
            })?;
        *unit_times.entry(key.class.clone()).or_insert(0.0) += count / tp;
    }
    let frontend = k.total_instructions() / m.frontend_uops_per_cycle;
    if frontend > 0.0 {
        unit_times.insert("frontend".to_string(), frontend);
    }
    if let Some(dc) = &k.dep_chain {
        let lat = m
            .latency
            .get(&dc.class)
            .ok_or_else(|| Error::MissingLatency(dc.class.clone()))?;
        unit_times.insert("dep_chain".to_string(), dc.count * lat);
    }

    let computed_nol = unit_times.get(LOAD_CLASS).copied().unwrap_or(0.0);
    let (ol_label, computed_ol) = unit_times
        .iter()
        .filter(|(unit, _)| unit.as_str() != LOAD_CLASS)
        .fold(("none", 0.0_f64), |best, (unit, &t)| {
            if t > best.1 {
                (unit.as_str(), t)
            } else {
                best
            }
        });

    let t_nol = k.t_nol_override.unwrap_or(computed_nol);
    let t_ol = k.t_ol_override.unwrap_or(computed_ol);
    let bottleneck = if k.t_ol_override.is_some() || k.t_nol_override.is_some() {
        "override".to_string()
    } else if t_nol >= t_ol && t_nol > 0.0 {
        LOAD_CLASS.to_string()
    } else {
        ol_label.to_string()
    };
    Ok(CoreTimes {
        t_ol,
        t_nol,
        bottleneck,
        unit_times,
    })
}

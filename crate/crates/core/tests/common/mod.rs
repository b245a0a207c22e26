#![allow(dead_code)]

pub mod invariants;

use std::collections::BTreeMap;
use std::path::PathBuf;

use ecm_core::kernel::{StreamMode, StreamSpec};
use ecm_core::machine::{CacheLevel, InstrKey};
use ecm_core::{parse_kernel, parse_machine, GridConfig, KernelSpec, MachineModel};
use proptest::prelude::*;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn machine(name: &str) -> MachineModel {
    let path = data_dir().join("machines").join(format!("{name}.machine"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_machine(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn kernel(name: &str) -> KernelSpec {
    let path = data_dir().join("kernels").join(format!("{name}.kernel"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_kernel(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

const WIDTHS: [&str; 3] = ["scalar", "sse", "avx"];
const CLASSES: [&str; 4] = ["LOAD", "STORE", "ADD", "MUL"];

/// Random valid machines with 1 to 3 cache levels.
pub fn arb_machine() -> impl Strategy<Value = MachineModel> {
    (
        1usize..=3,
        prop::collection::vec(1u32..=4, 3),
        prop::collection::vec(prop::sample::select(vec![1.0, 2.0, 3.0, 4.5]), 2),
        prop::bool::ANY,
        1.0f64..4.0,
        5.0f64..100.0,
        1u32..=16,
        prop::collection::vec(prop::sample::select(vec![0.5, 1.0, 2.0]), 12),
        0.5f64..1.5,
    )
        .prop_map(|(levels, growth, cycles, shared_last, clock, bw, cores, tps, uncore)| {
            let mut capacity = 16 * 1024u64;
            let caches = (0..levels)
                .map(|i| {
                    if i > 0 {
                        capacity *= 1 << (growth[i] + 1);
                    }
                    CacheLevel {
                        name: format!("L{}", i + 1),
                        capacity_bytes: capacity,
                        shared: shared_last && i == levels - 1,
                        cycles_per_cl: (i + 1 < levels).then(|| cycles[i]),
                    }
                })
                .collect();
            let mut throughput = BTreeMap::new();
            for (ci, class) in CLASSES.iter().enumerate() {
                for (wi, width) in WIDTHS.iter().enumerate() {
                    throughput.insert(InstrKey::new(*class, *width), tps[ci * 3 + wi]);
                }
            }
            let mut latency = BTreeMap::new();
            latency.insert("ADD".to_string(), 3.0);
            let m = MachineModel {
                name: "random".into(),
                clock_ghz: clock,
                base_clock_ghz: clock,
                cores,
                cacheline_bytes: 64,
                mem_bandwidth_gbps: bw,
                caches,
                throughput,
                latency,
                frontend_uops_per_cycle: 4.0,
                uncore_clock_factor: uncore,
                measured_bandwidths: BTreeMap::new(),
            };
            m.validate().expect("generated machine is valid");
            m
        })
}

fn arb_offset(dims: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-3i64..=3, dims)
}

fn arb_stream(dims: usize, idx: usize) -> impl Strategy<Value = StreamSpec> {
    (
        prop::sample::select(vec![StreamMode::Read, StreamMode::Write, StreamMode::Update]),
        prop::sample::select(vec![4u32, 8]),
        prop::collection::vec(arb_offset(dims), 1..6),
        prop::bool::weighted(0.8),
    )
        .prop_map(move |(mode, element_bytes, mut offsets, write_allocate)| {
            if mode == StreamMode::Write {
                offsets.truncate(1);
            }
            StreamSpec {
                array: format!("s{idx}"),
                element_bytes,
                mode,
                write_allocate,
                offsets,
                write_offset: None,
            }
        })
}

/// Random valid kernels with 1 to 4 streams and an instruction mix over
/// the classes `arb_machine` provides.
pub fn arb_kernel() -> impl Strategy<Value = KernelSpec> {
    (1usize..=3)
        .prop_flat_map(|dims| {
            (
                Just(dims),
                (0..4usize).prop_flat_map(move |extra| {
                    let streams: Vec<_> = (0..=extra).map(|i| arb_stream(dims, i)).collect();
                    streams
                }),
                prop::collection::vec(0u32..=12, 12),
                prop::sample::select(vec![4u32, 8, 16]),
                prop::option::weighted(0.2, 0.0f64..100.0),
                prop::option::weighted(0.2, 0.0f64..100.0),
                0.0f64..8.0,
            )
        })
        .prop_map(|(dims, streams, counts, lups, t_ol, t_nol, flops)| {
            let mut instr = BTreeMap::new();
            for (ci, class) in CLASSES.iter().enumerate() {
                for (wi, width) in WIDTHS.iter().enumerate() {
                    let c = counts[ci * 3 + wi];
                    if c > 0 {
                        instr.insert(InstrKey::new(*class, *width), c as f64);
                    }
                }
            }
            let k = KernelSpec {
                name: "random".into(),
                dims,
                element_bytes: 8,
                lups_per_workunit: lups,
                flops_per_lup: flops,
                instr,
                dep_chain: None,
                t_ol_override: t_ol,
                t_nol_override: t_nol,
                excess_mem_cls: 0.0,
                streams,
            };
            k.validate().expect("generated kernel is valid");
            k
        })
}

/// Random grid matching `dims`, optionally blocked, one thread.
pub fn arb_grid(dims: usize) -> impl Strategy<Value = GridConfig> {
    (
        prop::collection::vec(8u64..5000, dims),
        prop::option::weighted(0.3, 8u64..5000),
    )
        .prop_map(|(extents, block)| {
            let mut g = GridConfig::new(extents);
            if let (Some(b), true) = (block, g.dims() >= 2) {
                let b = b.min(g.extents[1]);
                g = g.with_block(1, b);
            }
            g
        })
}

pub fn arb_case() -> impl Strategy<Value = (MachineModel, KernelSpec, GridConfig)> {
    (arb_machine(), arb_kernel()).prop_flat_map(|(m, k)| {
        let dims = k.dims;
        (Just(m), Just(k), arb_grid(dims))
    })
}

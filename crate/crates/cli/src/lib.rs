//! Subcommands of the `ecm` tool. Every command renders its report into a
//! string; `main` only prints it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecm_core::cachesim::{simulate_sweep, Associativity, SimCacheConfig, SimLevel};
use ecm_core::ecm::{format_cycles, render_model_with, render_prediction_with, to_performance};
use ecm_core::layers::{evaluate_layer_conditions, DEFAULT_USABLE_FRACTION};
use ecm_core::machine::render_capacity;
use ecm_core::scaling::{
    default_blocking_level, dominance_check, p_core_max, roofline, roofline_levels, saturation_cores,
    scale_with_grid, whatif_temporal_blocking, BandwidthSource, LevelBalance,
};
use ecm_core::{
    analyze_with, parse_kernel, parse_machine, predict, Analysis, GridConfig, KernelSpec, MachineModel, Metric,
    Precision,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {source}")]
    Input { path: String, source: ecm_core::Error },
    #[error(transparent)]
    Model(#[from] ecm_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("writing csv: {0}")]
    Csv(String),
}

impl CliError {
    /// 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Execution-Cache-Memory performance model for loop kernels and stencils.
///
/// Prediction shorthand uses `\` in place of the ceiling delimiter:
/// `{L1 \ L2 \ L3 \ Mem} cy`.
#[derive(Debug, Parser)]
#[command(name = "ecm", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Layer conditions, ECM model, prediction and performance for one grid.
    Predict(PredictArgs),
    /// In-memory prediction over a range of inner extents (CSV).
    Scan(ScanArgs),
    /// Multicore scaling up to the bandwidth ceiling.
    Scale(ScaleArgs),
    /// Largest block size satisfying the layer condition per thread count.
    Blocking(BlockingArgs),
    /// Roofline against ECM scaling.
    Roofline(RooflineArgs),
    /// Model traffic against the cache simulator.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub machine: PathBuf,
    #[arg(long)]
    pub kernel: PathBuf,
    /// Inner (contiguous) extent.
    #[arg(long)]
    pub ni: Option<u64>,
    #[arg(long)]
    pub nj: Option<u64>,
    /// Outer extent of 3D kernels.
    #[arg(long)]
    pub nk: Option<u64>,
    /// Block size of the inner dimension.
    #[arg(long)]
    pub bi: Option<u64>,
    /// Block size of the middle dimension (3D) or the outer one (2D).
    #[arg(long)]
    pub bj: Option<u64>,
    /// Threads sharing the shared caches.
    #[arg(long)]
    pub threads: Option<u32>,
    /// Core clock override in GHz.
    #[arg(long)]
    pub freq_ghz: Option<f64>,
    #[arg(long)]
    pub csv: bool,
    /// Share of each cache available for layers.
    #[arg(long, default_value_t = DEFAULT_USABLE_FRACTION)]
    pub usable_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WhatIf {
    TemporalBlocking,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub what_if: Option<WhatIf>,
    /// Overrides the overlapping in-core time.
    #[arg(long)]
    pub t_ol: Option<f64>,
    /// Overrides the non-overlapping in-core time.
    #[arg(long)]
    pub t_nol: Option<f64>,
    /// Print the shorthand with integer cycle counts.
    #[arg(long)]
    pub integer: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// `lo:hi:step`, `lo:hi:log` (10 points per decade) or `lo:hi:logN`.
    #[arg(long)]
    pub range: String,
}

#[derive(Debug, Clone, Args)]
pub struct ScaleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Cache level whose maximum block size is reported.
    #[arg(long)]
    pub level: Option<String>,
    #[arg(long, value_enum)]
    pub what_if: Option<WhatIf>,
}

#[derive(Debug, Clone, Args)]
pub struct BlockingArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub level: String,
}

#[derive(Debug, Clone, Args)]
pub struct RooflineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Simulated cache capacities in kB, one per level (default: the machine's).
    #[arg(long, value_delimiter = ',')]
    pub cache_kb: Option<Vec<u64>>,
    /// Set associativity of every simulated level (default: fully associative).
    #[arg(long)]
    pub ways: Option<u32>,
    /// Run one uncounted sweep first.
    #[arg(long)]
    pub warmup: bool,
}

pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Predict(a) => cmd_predict(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Scale(a) => cmd_scale(a),
        Command::Blocking(a) => cmd_blocking(a),
        Command::Roofline(a) => cmd_roofline(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| usage(e.to_string()))?;
    run(&cli)
}

struct Inputs {
    machine: MachineModel,
    kernel: KernelSpec,
    grid: GridConfig,
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn load_models(c: &CommonArgs) -> Result<(MachineModel, KernelSpec)> {
    let input = |path: &Path, source| CliError::Input {
        path: path.display().to_string(),
        source,
    };
    let mut machine = parse_machine(&read_file(&c.machine)?).map_err(|e| input(&c.machine, e))?;
    let kernel = parse_kernel(&read_file(&c.kernel)?).map_err(|e| input(&c.kernel, e))?;
    if let Some(f) = c.freq_ghz {
        if !(f.is_finite() && f > 0.0) {
            return Err(usage(format!("--freq-ghz must be positive, got {f}")));
        }
        machine.clock_ghz = f;
    }
    if !(c.usable_fraction > 0.0 && c.usable_fraction <= 1.0) {
        return Err(usage("--usable-fraction must lie in (0, 1]"));
    }
    Ok((machine, kernel))
}

fn check_threads(m: &MachineModel, threads: u32) -> Result<()> {
    if threads == 0 || threads > m.cores {
        return Err(usage(format!(
            "--threads {threads} is outside 1..={} for machine {}",
            m.cores, m.name
        )));
    }
    Ok(())
}

/// Extents outermost first from the per-dimension flags; `inner` replaces
/// `--ni` when given.
fn build_grid(c: &CommonArgs, k: &KernelSpec, inner: Option<u64>) -> Result<GridConfig> {
    let flags = [("--nk", c.nk), ("--nj", c.nj), ("--ni", inner.or(c.ni))];
    let used = &flags[3 - k.dims..];
    for (name, v) in &flags[..3 - k.dims] {
        if v.is_some() {
            return Err(usage(format!("{name} given but kernel {} is {}D", k.name, k.dims)));
        }
    }
    let extents = used
        .iter()
        .map(|(name, v)| v.ok_or_else(|| usage(format!("kernel {} is {}D; {name} is required", k.name, k.dims))))
        .collect::<Result<Vec<u64>>>()?;
    let mut g = GridConfig::new(extents);
    let inner_dim = k.dims - 1;
    if let Some(b) = c.bi {
        let extent = g.extents[inner_dim];
        g = g.with_block(inner_dim, b.min(extent));
    }
    if let Some(b) = c.bj {
        if k.dims < 2 {
            return Err(usage(format!("--bj needs a kernel with 2 or more dimensions, {} is 1D", k.name)));
        }
        g = g.with_block(inner_dim - 1, b);
    }
    if let Some(t) = c.threads {
        g = g.with_threads(t);
    }
    g.validate_for(k)?;
    Ok(g)
}

fn load(c: &CommonArgs) -> Result<Inputs> {
    let (machine, kernel) = load_models(c)?;
    if let Some(t) = c.threads {
        check_threads(&machine, t)?;
    }
    let grid = build_grid(c, &kernel, None)?;
    Ok(Inputs { machine, kernel, grid })
}

/// Six significant digits, trailing zeros trimmed.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = 5 - magnitude;
    if decimals <= 0 {
        let scale = 10f64.powi(-decimals);
        return format!("{}", (x / scale).round() * scale);
    }
    let s = format!("{:.*}", decimals as usize, x);
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Csv(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Csv(e.to_string()))
}

/// Left-aligned text table.
fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str("  ");
        out.push_str(padded.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec(), &mut out);
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

fn grid_label(g: &GridConfig) -> String {
    let extents: Vec<String> = g.extents.iter().map(u64::to_string).collect();
    let mut s = extents.join(" x ");
    let blocks: Vec<String> = g
        .block_sizes
        .iter()
        .map(|b| b.map_or("-".to_string(), |b| b.to_string()))
        .collect();
    if g.block_sizes.iter().any(Option::is_some) {
        let _ = write!(s, " (blocks {})", blocks.join(" x "));
    }
    s
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn lc_level_name(m: &MachineModel, a: &Analysis) -> String {
    match a.layers.lc_level {
        Some(i) => m.caches[i].name.clone(),
        None => "none".into(),
    }
}

fn cmd_predict(args: &PredictArgs) -> Result<String> {
    let Inputs {
        machine: m,
        mut kernel,
        grid,
    } = load(&args.common)?;
    if let Some(t) = args.t_ol {
        kernel.t_ol_override = Some(t);
    }
    if let Some(t) = args.t_nol {
        kernel.t_nol_override = Some(t);
    }
    kernel.validate()?;
    let a = analyze_with(&m, &kernel, &grid, args.common.usable_fraction)?;
    let baseline = a.model.clone();
    let model = match args.what_if {
        Some(WhatIf::TemporalBlocking) => whatif_temporal_blocking(&baseline),
        None => baseline.clone(),
    };
    let pred = predict(&model);
    let f = m.clock_hz();
    let lups = to_performance(&model, &pred, Metric::Lups, f);
    let flops = to_performance(&model, &pred, Metric::Flops, f);
    let precision = if args.integer { Precision::Integer } else { Precision::Auto };

    if args.common.csv {
        let rows: Vec<Vec<String>> = pred
            .locations
            .iter()
            .enumerate()
            .map(|(i, loc)| {
                vec![
                    loc.clone(),
                    sig6(pred.cycles[i]),
                    sig6(lups[i] / 1e6),
                    sig6(flops[i] / 1e9),
                ]
            })
            .collect();
        return csv_table(&["location", "cycles", "MLUP/s", "Gflop/s"], &rows);
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        "machine {} at {} GHz, kernel {}, grid {}, {} thread{}",
        m.name,
        m.clock_ghz,
        kernel.name,
        grid_label(&grid),
        grid.threads,
        if grid.threads == 1 { "" } else { "s" }
    );

    let _ = writeln!(out, "\nlayer conditions (usable fraction {}):", a.layers.usable_fraction);
    let rows: Vec<Vec<String>> = a
        .layers
        .levels
        .iter()
        .map(|l| {
            vec![
                l.name.clone(),
                render_capacity(l.capacity_bytes),
                l.threads_sharing.to_string(),
                format!("{}", l.working_set_bytes),
                yes_no(l.satisfied).to_string(),
                l.max_extent.map_or("-".into(), |e| e.to_string()),
            ]
        })
        .collect();
    out.push_str(&text_table(
        &["level", "capacity", "threads", "working set [B]", "holds", "max extent"],
        &rows,
    ));
    for arr in &a.layers.arrays {
        let holds: Vec<String> = a
            .layers
            .levels
            .iter()
            .zip(&arr.per_level)
            .map(|(l, c)| format!("{}:{}", l.name, yes_no(c.satisfied)))
            .collect();
        let _ = writeln!(out, "  array {}: {} layer(s), {}", arr.array, arr.layers, holds.join(" "));
    }
    let _ = writeln!(out, "  layer condition level: {}", lc_level_name(&m, &a));
    if let Some(ok) = a.layers.row_condition_ok {
        let _ = writeln!(out, "  row condition in {}: {}", m.caches[0].name, yes_no(ok));
    }

    let _ = writeln!(
        out,
        "\nin-core: T_OL = {} cy, T_nOL = {} cy, bottleneck {}",
        format_cycles(model.t_ol(), Precision::Auto),
        format_cycles(model.t_nol(), Precision::Auto),
        a.core.bottleneck
    );
    let _ = writeln!(out, "ECM model:  {}", render_model_with(&model, precision));
    let _ = writeln!(out, "prediction: {}", render_prediction_with(&pred, precision));
    if args.what_if == Some(WhatIf::TemporalBlocking) {
        let speedup = predict(&baseline).in_memory() / pred.in_memory();
        let _ = writeln!(out, "what-if temporal blocking: in-memory speedup {:.3}x", speedup);
    }

    let balances: Vec<String> = a
        .traffic
        .boundaries
        .iter()
        .map(|b| format!("{} {} B/LUP", b.name, sig6(b.bytes_per_lup)))
        .collect();
    let _ = writeln!(out, "code balance: {}", balances.join(", "));

    let _ = writeln!(out, "\nperformance:");
    let rows: Vec<Vec<String>> = pred
        .locations
        .iter()
        .enumerate()
        .map(|(i, loc)| {
            vec![
                loc.clone(),
                format!("{:.2}", pred.cycles[i]),
                format!("{:.1}", lups[i] / 1e6),
                format!("{:.3}", flops[i] / 1e9),
            ]
        })
        .collect();
    out.push_str(&text_table(&["data in", "cy/unit", "MLUP/s", "Gflop/s"], &rows));

    match saturation_cores(&model) {
        Ok(n) => {
            let _ = writeln!(out, "saturation: n_S = {n}");
        }
        Err(_) => {
            let _ = writeln!(out, "saturation: none (no memory traffic)");
        }
    }
    let _ = writeln!(
        out,
        "dominance: T_data + T_nOL > T_OL is {} ({} + {} vs {})",
        dominance_check(&model),
        format_cycles(model.t_data(), Precision::Auto),
        format_cycles(model.t_nol(), Precision::Auto),
        format_cycles(model.t_ol(), Precision::Auto)
    );

    let list = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ");
    let _ = writeln!(out, "\nunrounded:");
    let _ = writeln!(out, "  t_ol = {}", model.t_ol());
    let _ = writeln!(out, "  t_nol = {}", model.t_nol());
    let _ = writeln!(out, "  transfers = {}", list(&model.transfers));
    let _ = writeln!(out, "  prediction = {}", list(&pred.cycles));
    let _ = writeln!(
        out,
        "  bytes_per_lup = {}",
        list(&a.traffic.boundaries.iter().map(|b| b.bytes_per_lup).collect::<Vec<_>>())
    );
    Ok(out)
}

/// Points of `lo:hi:step`, `lo:hi:log` or `lo:hi:logN`.
pub fn parse_range(text: &str) -> Result<Vec<u64>> {
    let bad = || usage(format!("--range `{text}`: expected lo:hi:step or lo:hi:log"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: u64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: u64 = parts[1].trim().parse().map_err(|_| bad())?;
    if lo == 0 || lo > hi {
        return Err(usage(format!("--range `{text}` is empty")));
    }
    let step = parts[2].trim();
    let mut points = Vec::new();
    if let Some(per_decade) = step.strip_prefix("log") {
        let per_decade: u32 = if per_decade.is_empty() {
            10
        } else {
            per_decade.parse().map_err(|_| bad())?
        };
        if per_decade == 0 {
            return Err(bad());
        }
        let ratio = 10f64.powf(1.0 / per_decade as f64);
        let mut x = lo as f64;
        while x.round() as u64 <= hi {
            let v = x.round() as u64;
            if points.last() != Some(&v) {
                points.push(v);
            }
            x *= ratio;
        }
        if points.last() != Some(&hi) {
            points.push(hi);
        }
    } else {
        let step: u64 = step.parse().map_err(|_| bad())?;
        if step == 0 {
            return Err(bad());
        }
        let mut v = lo;
        while v <= hi {
            points.push(v);
            v = match v.checked_add(step) {
                Some(n) => n,
                None => break,
            };
        }
    }
    Ok(points)
}

fn cmd_scan(args: &ScanArgs) -> Result<String> {
    let (m, k) = load_models(&args.common)?;
    if let Some(t) = args.common.threads {
        check_threads(&m, t)?;
    }
    let points = parse_range(&args.range)?;
    let f = m.clock_hz();
    let mut rows = Vec::with_capacity(points.len());
    for n in points {
        let g = build_grid(&args.common, &k, Some(n))?;
        let a = analyze_with(&m, &k, &g, args.common.usable_fraction)?;
        let pred = predict(&a.model);
        let p = to_performance(&a.model, &pred, Metric::Lups, f);
        rows.push(vec![
            n.to_string(),
            lc_level_name(&m, &a),
            sig6(a.traffic.memory().bytes_per_lup),
            sig6(pred.in_memory()),
            sig6(p.last().copied().unwrap_or(0.0) / 1e6),
        ]);
    }
    csv_table(&["N_i", "lc_level", "B_C_mem", "T_ECM_mem", "P_mem_MLUPs"], &rows)
}

fn cache_level(m: &MachineModel, name: &str) -> Result<usize> {
    if name.eq_ignore_ascii_case(ecm_core::machine::MEMORY_LEVEL) {
        return Err(usage("--level MEM has no layer condition; pick a cache level"));
    }
    m.cache_index(name).ok_or_else(|| {
        let names: Vec<&str> = m.caches.iter().map(|c| c.name.as_str()).collect();
        usage(format!("--level {name} out of range; machine {} has {}", m.name, names.join(", ")))
    })
}

fn cmd_scale(args: &ScaleArgs) -> Result<String> {
    let Inputs { machine: m, kernel: k, grid } = load(&args.common)?;
    let level = match &args.level {
        Some(l) => cache_level(&m, l)?,
        None => default_blocking_level(&m),
    };
    let mut curve = scale_with_grid(&m, &k, &grid, Metric::Lups, level, args.common.usable_fraction)?;
    if args.what_if == Some(WhatIf::TemporalBlocking) {
        // no memory traffic: linear scaling
        let a = analyze_with(&m, &k, &grid, args.common.usable_fraction)?;
        let tb = whatif_temporal_blocking(&a.model);
        let single = to_performance(&tb, &predict(&tb), Metric::Lups, m.clock_hz());
        let p1 = *single.last().unwrap();
        for p in &mut curve.points {
            p.p_ecm = p1 * p.n as f64;
            p.ceiling = f64::INFINITY;
            p.performance = p.p_ecm;
            p.saturated = false;
        }
        curve.n_s = m.cores + 1;
    }
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| {
            vec![
                p.n.to_string(),
                sig6(p.p_ecm / 1e6),
                sig6(p.ceiling / 1e6),
                sig6(p.performance / 1e6),
                p.saturated.to_string(),
                p.max_block_size.map_or(String::new(), |b| b.to_string()),
            ]
        })
        .collect();
    if args.common.csv {
        return csv_table(&["n", "P_ecm", "ceiling", "P", "saturated", "max_block_size"], &rows);
    }
    let mut out = format!(
        "scaling of {} on {} ({} cores), grid {}, MLUP/s; block sizes for {}\n",
        k.name,
        m.name,
        m.cores,
        grid_label(&grid),
        m.caches[level].name
    );
    out.push_str(&text_table(
        &["n", "P_ecm", "ceiling", "P", "saturated", "max_block_size"],
        &rows,
    ));
    if curve.n_s > m.cores {
        let _ = writeln!(out, "no saturation within {} cores", m.cores);
    } else {
        let _ = writeln!(out, "saturation: n_S = {}", curve.n_s);
    }
    Ok(out)
}

fn cmd_blocking(args: &BlockingArgs) -> Result<String> {
    let Inputs { machine: m, kernel: k, grid } = load(&args.common)?;
    let level = cache_level(&m, &args.level)?;
    if k.layered_streams().next().is_none() {
        return Err(ecm_core::Error::Precondition(format!("kernel {} has no layered arrays", k.name)).into());
    }
    let threads: Vec<u32> = match args.common.threads {
        Some(t) => vec![t],
        None => (1..=m.cores).collect(),
    };
    let label = if k.dims == 3 { "b_j" } else { "b_i" };
    let mut rows = Vec::new();
    for n in threads {
        let lc = evaluate_layer_conditions(&k, &grid.clone().with_threads(n), &m, args.common.usable_fraction)?;
        let b = lc.levels[level].max_extent.unwrap_or(0);
        rows.push(vec![n.to_string(), b.to_string()]);
    }
    if args.common.csv {
        return csv_table(&["n", label], &rows);
    }
    let c = &m.caches[level];
    let mut out = format!(
        "blocking {} for {} ({}{}, usable fraction {})",
        k.name,
        c.name,
        render_capacity(c.capacity_bytes),
        if c.shared { ", shared" } else { "" },
        args.common.usable_fraction
    );
    if k.dims == 3 {
        let _ = write!(out, ", b_i = {}", grid.effective(2));
    }
    out.push('\n');
    out.push_str(&text_table(&["n", label], &rows));
    Ok(out)
}

fn cmd_roofline(args: &RooflineArgs) -> Result<String> {
    let Inputs { machine: m, kernel: k, grid } = load(&args.common)?;
    let max_n = args.common.threads.unwrap_or(m.cores);
    let frac = args.common.usable_fraction;
    let curve = scale_with_grid(&m, &k, &grid, Metric::Lups, default_blocking_level(&m), frac)?;
    let mut rows = Vec::new();
    let mut roof_sat = None;
    let mut derived = false;
    for n in 1..=max_n {
        let a = analyze_with(&m, &k, &grid.clone().with_threads(n), frac)?;
        let balances: Vec<LevelBalance> = roofline_levels(&m)
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
        let r = roofline(&m, p_core, &balances, n)?;
        if r.limiter != "core" && roof_sat.is_none() {
            roof_sat = Some(n);
        }
        let flagged = r.sources.iter().any(|(_, s)| *s != BandwidthSource::Measured);
        derived |= flagged;
        rows.push(vec![
            n.to_string(),
            sig6(r.performance / 1e6),
            format!("{}{}", r.limiter, if flagged { "*" } else { "" }),
            sig6(curve.points[n as usize - 1].performance / 1e6),
        ]);
    }
    if args.common.csv {
        return csv_table(&["n", "P_roofline", "limiter", "P_ecm"], &rows);
    }
    let mut out = format!("roofline vs ECM for {} on {}, MLUP/s\n", k.name, m.name);
    out.push_str(&text_table(&["n", "P_roofline", "limiter", "P_ecm"], &rows));
    if derived {
        out.push_str("  * some bandwidths extrapolated from other thread counts\n");
    }
    let roof = roof_sat.map_or("not within range".to_string(), |n| format!("n = {n}"));
    let ecm = if curve.n_s > m.cores {
        format!("beyond {} cores (n_S = {})", m.cores, curve.n_s)
    } else {
        format!("n_S = {}", curve.n_s)
    };
    let _ = writeln!(out, "saturation: roofline {roof}, ECM {ecm}");
    Ok(out)
}

fn cmd_validate(args: &ValidateArgs) -> Result<String> {
    let Inputs {
        machine: mut m,
        kernel: k,
        grid,
    } = load(&args.common)?;
    if let Some(kb) = &args.cache_kb {
        if kb.len() != m.caches.len() {
            return Err(usage(format!(
                "--cache-kb needs one value per cache level ({}), got {}",
                m.caches.len(),
                kb.len()
            )));
        }
        for (c, &size) in m.caches.iter_mut().zip(kb) {
            c.capacity_bytes = size * 1024;
        }
        m.validate()?;
    }
    let associativity = match args.ways {
        Some(w) => Associativity::Ways(w),
        None => Associativity::Full,
    };
    let cfg = SimCacheConfig {
        levels: m
            .caches
            .iter()
            .map(|c| SimLevel {
                name: c.name.clone(),
                capacity_bytes: c.capacity_bytes,
                associativity,
            })
            .collect(),
        cacheline_bytes: m.cacheline_bytes,
        write_allocate: k.streams.iter().filter(|s| s.mode != ecm_core::kernel::StreamMode::Read).all(|s| s.write_allocate),
        write_back: true,
        warmup: args.warmup,
    };
    let sim = simulate_sweep(&k, &grid, &cfg)?;
    let a = analyze_with(&m, &k, &grid, args.common.usable_fraction)?;
    let rows: Vec<Vec<String>> = a
        .traffic
        .boundaries
        .iter()
        .zip(&sim.boundaries)
        .map(|(model, s)| {
            let err = if model.bytes_per_lup == 0.0 {
                if s.bytes_per_lup == 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                (s.bytes_per_lup - model.bytes_per_lup) / model.bytes_per_lup
            };
            vec![
                model.name.clone(),
                sig6(model.bytes_per_lup),
                sig6(s.bytes_per_lup),
                sig6(err),
            ]
        })
        .collect();
    if args.common.csv {
        return csv_table(&["boundary", "model_B_per_LUP", "sim_B_per_LUP", "rel_err"], &rows);
    }
    let caches: Vec<String> = m.caches.iter().map(|c| render_capacity(c.capacity_bytes)).collect();
    let mut out = format!(
        "{} on {} ({}), grid {}, {} LUPs simulated{}\n",
        k.name,
        m.name,
        caches.join("/"),
        grid_label(&grid),
        sim.lups,
        if args.warmup { " after warm-up" } else { "" }
    );
    out.push_str(&text_table(&["boundary", "model B/LUP", "sim B/LUP", "rel err"], &rows));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(655.3397345), "655.34");
        assert_eq!(sig6(436906.0), "436906");
        assert_eq!(sig6(1_234_567.0), "1234570");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(24.0), "24");
        assert_eq!(sig6(-0.5), "-0.5");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(f64::INFINITY), "inf");
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1:5:2").unwrap(), vec![1, 3, 5]);
        assert_eq!(parse_range("7:7:1").unwrap(), vec![7]);
        assert_eq!(parse_range("10:100:log1").unwrap(), vec![10, 100]);
        let log = parse_range("1000:1000000:log").unwrap();
        assert_eq!(log.len(), 31);
        assert_eq!(*log.last().unwrap(), 1_000_000);
        assert!(parse_range("5:1:1").is_err());
        assert!(parse_range("1:5:0").is_err());
        assert!(parse_range("1:5").is_err());
        assert!(parse_range("a:5:1").is_err());
    }
}

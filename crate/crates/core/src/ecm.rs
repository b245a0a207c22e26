//! ECM composition: `T_ECM = max(T_nOL + T_data, T_OL)` per data location,
//! the shorthand notation, and conversion to performance.

use std::fmt;

use crate::error::{Error, Result};
use crate::incore::CoreTimes;

#[derive(Debug, Clone, PartialEq)]
pub struct EcmModel {
    pub core: CoreTimes,
    /// Transfer cycles per work unit, core-outward; the last one is memory.
    pub transfers: Vec<f64>,
    /// Data location names, one more than `transfers`.
    pub locations: Vec<String>,
    pub lups_per_workunit: f64,
    pub flops_per_lup: f64,
    pub clock_hz: f64,
}

impl EcmModel {
    /// Plain model with `L1, L2, ...` location names, mostly for tests.
    pub fn from_parts(t_ol: f64, t_nol: f64, transfers: Vec<f64>, lups_per_workunit: f64, clock_hz: f64) -> Self {
        let mut locations: Vec<String> = (1..=transfers.len()).map(|i| format!("L{i}")).collect();
        locations.push("Mem".to_string());
        EcmModel {
            core: CoreTimes::new(t_ol, t_nol),
            transfers,
            locations,
            lups_per_workunit,
            flops_per_lup: 1.0,
            clock_hz,
        }
    }

    pub fn t_ol(&self) -> f64 {
        self.core.t_ol
    }

    pub fn t_nol(&self) -> f64 {
        self.core.t_nol
    }

    /// Memory-boundary contribution `T_L3Mem`.
    pub fn t_mem(&self) -> f64 {
        self.transfers.last().copied().unwrap_or(0.0)
    }

    pub fn t_data(&self) -> f64 {
        self.transfers.iter().sum()
    }

    pub fn work_per_unit(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Lups => self.lups_per_workunit,
            Metric::Flops => self.lups_per_workunit * self.flops_per_lup,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcmPrediction {
    pub locations: Vec<String>,
    /// Cycles per work unit with the data in each location.
    pub cycles: Vec<f64>,
}

impl EcmPrediction {
    pub fn in_memory(&self) -> f64 {
        *self.cycles.last().expect("at least one location")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Lups,
    Flops,
}

/// Number formatting for the shorthand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    /// No decimals within 0.05 of an integer, one decimal otherwise.
    #[default]
    Auto,
    /// Nearest integer.
    Integer,
}

pub fn predict(m: &EcmModel) -> EcmPrediction {
    let mut acc = m.t_nol();
    let mut cycles = Vec::with_capacity(m.transfers.len() + 1);
    cycles.push(acc.max(m.t_ol()));
    for t in &m.transfers {
        acc += t;
        cycles.push(acc.max(m.t_ol()));
    }
    EcmPrediction {
        locations: m.locations.clone(),
        cycles,
    }
}

pub fn format_cycles(x: f64, precision: Precision) -> String {
    let rounded = x.round();
    let as_int = match precision {
        Precision::Integer => true,
        Precision::Auto => (x - rounded).abs() <= 0.05 + 1e-9,
    };
    if as_int {
        // avoid "-0"
        format!("{}", rounded as i64)
    } else {
        format!("{x:.1}")
    }
}

pub fn render_model(m: &EcmModel) -> String {
    render_model_with(m, Precision::Auto)
}

/// `{T_OL || T_nOL | T_L1L2 | ... } cy`
pub fn render_model_with(m: &EcmModel, precision: Precision) -> String {
    let mut out = format!(
        "{{{} || {}",
        format_cycles(m.t_ol(), precision),
        format_cycles(m.t_nol(), precision)
    );
    for t in &m.transfers {
        out.push_str(" | ");
        out.push_str(&format_cycles(*t, precision));
    }
    out.push_str("} cy");
    out
}

pub fn render_prediction(p: &EcmPrediction) -> String {
    render_prediction_with(p, Precision::Auto)
}

/// `{L1 \ L2 \ L3 \ Mem} cy`; `\` stands in for the ceiling delimiter.
pub fn render_prediction_with(p: &EcmPrediction, precision: Precision) -> String {
    let parts: Vec<String> = p.cycles.iter().map(|c| format_cycles(*c, precision)).collect();
    format!("{{{}}} cy", parts.join(" \\ "))
}

fn strip_braces(text: &str) -> Result<&str> {
    let t = text.trim();
    let t = t.strip_suffix("cy").unwrap_or(t).trim_end();
    t.strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| Error::syntax(1, format!("shorthand `{text}` must be enclosed in braces")))
}

fn parse_numbers<'a>(parts: impl Iterator<Item = &'a str>, text: &str) -> Result<Vec<f64>> {
    parts
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::syntax(1, format!("bad number `{}` in `{text}`", p.trim())))
        })
        .collect()
}

/// Parses `{A || B | C | ...} cy` (or with `‖`) into `[T_OL, T_nOL, transfers...]`.
pub fn parse_model_shorthand(text: &str) -> Result<Vec<f64>> {
    let inner = strip_braces(text)?.replace('‖', "||");
    let (ol, rest) = inner
        .split_once("||")
        .ok_or_else(|| Error::syntax(1, format!("missing `||` in `{text}`")))?;
    let mut values = parse_numbers(std::iter::once(ol), text)?;
    values.extend(parse_numbers(rest.split('|'), text)?);
    Ok(values)
}

/// Parses `{P1 \ P2 \ ...} cy` (or with `⌉`).
pub fn parse_prediction_shorthand(text: &str) -> Result<Vec<f64>> {
    let inner = strip_braces(text)?.replace('⌉', "\\");
    parse_numbers(inner.split('\\'), text)
}

/// Work per second at each location for clock `f_hz`.
pub fn to_performance(m: &EcmModel, p: &EcmPrediction, metric: Metric, f_hz: f64) -> Vec<f64> {
    let work = m.work_per_unit(metric);
    p.cycles.iter().map(|c| work * f_hz / c).collect()
}

/// Moves the model to core clock `f_new_hz`: cycles spent in the core and in
/// the caches stay put, memory cycles per line scale with the clock.
pub fn rescale_frequency(m: &EcmModel, f_new_hz: f64) -> EcmModel {
    let mut out = m.clone();
    let ratio = f_new_hz / m.clock_hz;
    if let Some(mem) = out.transfers.last_mut() {
        *mem *= ratio;
    }
    out.clock_hz = f_new_hz;
    out
}

impl fmt::Display for EcmModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_model(self))
    }
}

impl fmt::Display for EcmPrediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_prediction(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const SNB_HZ: f64 = 2.7e9;

    #[test]
    fn daxpy_prediction() {
        let m = EcmModel::from_parts(4.0, 4.0, vec![6.0, 6.0, 12.96], 8.0, SNB_HZ);
        let p = predict(&m);
        assert_eq!(p.cycles[..3], [4.0, 10.0, 16.0]);
        assert_relative_eq!(p.cycles[3], 28.96, epsilon = 1e-12);
        assert_eq!(render_model(&m), "{4 || 4 | 6 | 6 | 13} cy");
        assert_eq!(render_prediction(&p), "{4 \\ 10 \\ 16 \\ 29} cy");
    }

    #[test]
    fn core_bound_naive_sum() {
        let m = EcmModel::from_parts(24.0, 4.0, vec![2.0, 2.0, 4.32], 8.0, SNB_HZ);
        assert_eq!(predict(&m).cycles, vec![24.0; 4]);
    }

    #[test]
    fn rendering_rules() {
        assert_eq!(format_cycles(4.32, Precision::Auto), "4.3");
        assert_eq!(format_cycles(12.96, Precision::Auto), "13");
        assert_eq!(format_cycles(21.6, Precision::Auto), "21.6");
        assert_eq!(format_cycles(21.6, Precision::Integer), "22");
        assert_eq!(format_cycles(0.0, Precision::Auto), "0");
        assert_eq!(format_cycles(103.92, Precision::Integer), "104");
        let zero = EcmModel::from_parts(0.0, 0.0, vec![0.0; 3], 8.0, SNB_HZ);
        assert_eq!(render_model(&zero), "{0 || 0 | 0 | 0 | 0} cy");
    }

    #[test]
    fn shorthand_parsers_accept_both_delimiters() {
        assert_eq!(
            parse_model_shorthand("{6 ‖ 8 | 10 | 10 | 13}").unwrap(),
            vec![6.0, 8.0, 10.0, 10.0, 13.0]
        );
        assert_eq!(
            parse_prediction_shorthand("{8 ⌉ 18 ⌉ 28 ⌉ 41} cy").unwrap(),
            vec![8.0, 18.0, 28.0, 41.0]
        );
        assert!(parse_model_shorthand("6 || 8").is_err());
        assert!(parse_model_shorthand("{6 | 8}").is_err());
        assert!(parse_prediction_shorthand("{8 \\ x}").is_err());
    }

    #[test]
    fn frequency_rescaling() {
        let m = EcmModel::from_parts(8.0, 4.0, vec![2.0, 2.0, 4.32], 8.0, SNB_HZ);
        assert_eq!(rescale_frequency(&m, SNB_HZ), m);
        let slow = rescale_frequency(&m, 1.6e9);
        assert_relative_eq!(slow.t_mem(), 2.56, epsilon = 1e-12);
        assert_eq!(slow.transfers[..2], [2.0, 2.0]);
        let perf = to_performance(&slow, &predict(&slow), Metric::Lups, 1.6e9);
        assert_relative_eq!(perf[3], 8.0 * 1.6e9 / 10.56, epsilon = 1e-6);
    }

    #[test]
    fn core_bound_performance_is_linear_in_clock() {
        let m = EcmModel::from_parts(24.0, 4.0, vec![2.0, 2.0, 4.32], 8.0, SNB_HZ);
        let p1 = to_performance(&m, &predict(&m), Metric::Lups, SNB_HZ);
        let fast = rescale_frequency(&m, 2.0 * SNB_HZ);
        let p2 = to_performance(&fast, &predict(&fast), Metric::Lups, 2.0 * SNB_HZ);
        assert_relative_eq!(p2[0], 2.0 * p1[0]);
    }
}

//! DVFS processor models: ordered voltage-frequency-power levels, the cubic
//! dynamic-power special case, and per-task energy accounting.
//!
//! Units are SI throughout: frequency in Hz, time in seconds, power in watts,
//! energy in joules. The CLI converts MHz/ms-style inputs at the boundary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{approx_eq, Real};
use crate::reclaim::FrequencyAllocation;

#[derive(Debug, Error)]
pub enum PowerModelError {
    #[error("level values must be positive and finite (f={freq_hz}, v={voltage_v}, p={power_w})")]
    InvalidLevel {
        freq_hz: f64,
        voltage_v: f64,
        power_w: f64,
    },
    #[error("processor model needs at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("levels of '{name}' are not strictly ascending in frequency, voltage and power between {lo_freq_hz} Hz and {hi_freq_hz} Hz")]
    NonMonotone {
        name: String,
        lo_freq_hz: f64,
        hi_freq_hz: f64,
    },
    #[error("idle power {idle_w} W must satisfy 0 <= idle < lowest level power {min_level_w} W")]
    InvalidIdlePower { idle_w: f64, min_level_w: f64 },
    #[error("cubic coefficient lambda must be positive, got {0}")]
    InvalidLambda(f64),
    #[error("cubic frequencies must be nonempty, positive and distinct")]
    InvalidCubicFrequencies,
    #[error(
        "allocation references level {freq_hz} Hz / {power_w} W absent from processor '{name}'"
    )]
    UnknownLevel {
        name: String,
        freq_hz: f64,
        power_w: f64,
    },
    #[error("allocation segment has negative duration {0} s")]
    NegativeDuration(f64),
    #[error("allocation durations sum to {total_s} s, exceeding the window {window_s} s")]
    DurationsExceedWindow { total_s: f64, window_s: f64 },
    #[error("no builtin processor named '{0}'")]
    UnknownBuiltin(String),
}

/// One DVFS operating point: (frequency, voltage, dynamic power).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyLevel<R = f64> {
    #[serde(rename = "freq_hz")]
    pub frequency: R,
    #[serde(rename = "voltage_v")]
    pub voltage: R,
    #[serde(rename = "power_w")]
    pub power: R,
}

impl<R: Real> FrequencyLevel<R> {
    pub fn new(frequency: R, voltage: R, power: R) -> Result<Self, PowerModelError> {
        let ok = |x: R| x.is_finite() && x > R::zero();
        if !(ok(frequency) && ok(voltage) && ok(power)) {
            return Err(PowerModelError::InvalidLevel {
                freq_hz: frequency.as_f64(),
                voltage_v: voltage.as_f64(),
                power_w: power.as_f64(),
            });
        }
        Ok(Self {
            frequency,
            voltage,
            power,
        })
    }

    /// Same operating point up to the numeric check tolerance.
    pub fn matches(&self, other: &Self) -> bool {
        approx_eq(self.frequency, other.frequency) && approx_eq(self.power, other.power)
    }
}

/// A DVFS-enabled processor: levels strictly ascending in frequency, voltage
/// and power simultaneously (the monotone power contract), plus idle power.
#[derive(Debug, Clone, Serialize)]
pub struct ProcessorModel<R = f64> {
    name: String,
    #[serde(rename = "idle_power_w")]
    idle_power: R,
    levels: Vec<FrequencyLevel<R>>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "R: Deserialize<'de>"))]
struct RawProcessorModel<R> {
    name: String,
    #[serde(rename = "idle_power_w", default)]
    idle_power: Option<R>,
    levels: Vec<FrequencyLevel<R>>,
}

impl<'de, R: Real + Deserialize<'de>> Deserialize<'de> for ProcessorModel<R> {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let raw = RawProcessorModel::<R>::deserialize(deserializer)?;
        ProcessorModel::new(raw.name, raw.levels, raw.idle_power.unwrap_or_else(R::zero))
            .map_err(serde::de::Error::custom)
    }
}

impl<R: Real> ProcessorModel<R> {
    /// Validates and sorts the level list; rejects any violation of the
    /// monotone contract (frequency, voltage and power ascending together).
    pub fn new(
        name: impl Into<String>,
        mut levels: Vec<FrequencyLevel<R>>,
        idle_power: R,
    ) -> Result<Self, PowerModelError> {
        let name = name.into();
        for l in &levels {
            // Re-run the level invariant: deserialized values bypass `new`.
            FrequencyLevel::new(l.frequency, l.voltage, l.power)?;
        }
        if levels.len() < 2 {
            return Err(PowerModelError::TooFewLevels(levels.len()));
        }
        levels.sort_by(|a, b| a.frequency.partial_cmp(&b.frequency).unwrap());
        for pair in levels.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if !(a.frequency < b.frequency && a.voltage < b.voltage && a.power < b.power) {
                return Err(PowerModelError::NonMonotone {
                    name,
                    lo_freq_hz: a.frequency.as_f64(),
                    hi_freq_hz: b.frequency.as_f64(),
                });
            }
        }
        if !(idle_power >= R::zero() && idle_power < levels[0].power && idle_power.is_finite()) {
            return Err(PowerModelError::InvalidIdlePower {
                idle_w: idle_power.as_f64(),
                min_level_w: levels[0].power.as_f64(),
            });
        }
        Ok(Self {
            name,
            idle_power,
            levels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn idle_power(&self) -> R {
        self.idle_power
    }

    /// Returns a copy with a different idle power (same levels).
    pub fn with_idle_power(&self, idle_power: R) -> Result<Self, PowerModelError> {
        Self::new(self.name.clone(), self.levels.clone(), idle_power)
    }

    /// Levels, ascending by frequency.
    pub fn levels(&self) -> &[FrequencyLevel<R>] {
        &self.levels
    }

    pub fn f_min(&self) -> R {
        self.levels[0].frequency
    }

    pub fn f_max(&self) -> R {
        self.levels[self.levels.len() - 1].frequency
    }

    pub fn max_level(&self) -> &FrequencyLevel<R> {
        &self.levels[self.levels.len() - 1]
    }

    pub fn find_level(&self, level: &FrequencyLevel<R>) -> Option<&FrequencyLevel<R>> {
        self.levels.iter().find(|l| l.matches(level))
    }
}

/// Cubic dynamic-power model `P_d = lambda * f^3`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CubicPowerModel<R = f64> {
    lambda: R,
}

impl<R: Real> CubicPowerModel<R> {
    pub fn new(lambda: R) -> Result<Self, PowerModelError> {
        if !(lambda.is_finite() && lambda > R::zero()) {
            return Err(PowerModelError::InvalidLambda(lambda.as_f64()));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> R {
        self.lambda
    }

    pub fn power(&self, frequency: R) -> R {
        self.lambda * frequency * frequency * frequency
    }

    /// Recovers the cubic model behind a processor table, if every level
    /// power lies within 1e-6 relative of `lambda * f^3` fitted at the top
    /// level. Returns `None` for genuinely tabular processors.
    pub fn fit(proc: &ProcessorModel<R>) -> Option<Self> {
        let top = proc.max_level();
        let lambda = top.power / (top.frequency * top.frequency * top.frequency);
        let model = Self { lambda };
        let tol = R::lit(1e-6);
        for l in proc.levels() {
            let predicted = model.power(l.frequency);
            if ((predicted - l.power) / l.power).abs() > tol {
                return None;
            }
        }
        Some(model)
    }
}

/// Builds a processor whose level powers follow `lambda * f^3`.
///
/// The cubic model ignores voltage, so voltages are frequency-proportional
/// placeholders that keep the monotone contract satisfied.
pub fn instantiate_cubic<R: Real>(
    freqs: &[R],
    model: CubicPowerModel<R>,
    idle_power: R,
) -> Result<ProcessorModel<R>, PowerModelError> {
    if freqs.is_empty() || freqs.iter().any(|f| !(f.is_finite() && *f > R::zero())) {
        return Err(PowerModelError::InvalidCubicFrequencies);
    }
    let mut sorted: Vec<R> = freqs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(PowerModelError::InvalidCubicFrequencies);
    }
    let ghz = R::lit(1e9);
    let levels = sorted
        .iter()
        .map(|&f| FrequencyLevel::new(f, f / ghz, model.power(f)))
        .collect::<Result<Vec<_>, _>>()?;
    let name = format!("cubic-{}level", levels.len());
    ProcessorModel::new(name, levels, idle_power)
}

/// Overall energy of a task executed by `alloc` inside a window of length
/// `window` seconds: active segments at their level powers plus idle power
/// over the unused remainder.
pub fn task_energy<R: Real>(
    alloc: &FrequencyAllocation<R>,
    window: R,
    proc: &ProcessorModel<R>,
) -> Result<R, PowerModelError> {
    let mut active = R::zero();
    let mut energy = R::zero();
    for (level, duration) in alloc.segments() {
        if *duration < R::zero() {
            return Err(PowerModelError::NegativeDuration(duration.as_f64()));
        }
        let known = proc
            .find_level(level)
            .ok_or(PowerModelError::UnknownLevel {
                name: proc.name.clone(),
                freq_hz: level.frequency.as_f64(),
                power_w: level.power.as_f64(),
            })?;
        active = active + *duration;
        energy = energy + *duration * known.power;
    }
    if active > window * (R::one() + R::check_tol()) {
        return Err(PowerModelError::DurationsExceedWindow {
            total_s: active.as_f64(),
            window_s: window.as_f64(),
        });
    }
    let idle = (window - active).max(R::zero());
    Ok(energy + proc.idle_power * idle)
}

/// Reference processor tables (frequencies in MHz, voltages in V, powers
/// in W), idle power zero: two synthetic models plus two published mobile
/// processor operating-point sets.
/// (frequency MHz, voltage V, power W) rows of one model.
type LevelRows = &'static [(f64, f64, f64)];

const BUILTIN_TABLES: [(&str, LevelRows); 4] = [
    (
        "Synthetic 1",
        &[
            (500.0, 0.90, 2.03),
            (600.0, 1.00, 3.0),
            (700.0, 1.05, 3.85),
            (800.0, 1.10, 4.84),
            (900.0, 1.15, 5.95),
            (1000.0, 1.20, 7.2),
        ],
    ),
    (
        "Synthetic 2",
        &[
            (300.0, 0.90, 0.97),
            (400.0, 0.95, 1.64),
            (500.0, 1.00, 2.05),
            (900.0, 1.05, 3.29),
            (1000.0, 1.25, 5.0),
        ],
    ),
    (
        "Transmeta Crusoe",
        &[
            (300.0, 1.2, 1.3),
            (400.0, 1.225, 1.9),
            (533.0, 1.35, 3.0),
            (600.0, 1.5, 4.2),
            (667.0, 1.6, 5.3),
        ],
    ),
    (
        "Intel XScale",
        &[
            (150.0, 0.75, 0.08),
            (400.0, 1.0, 0.17),
            (600.0, 1.3, 0.4),
            (800.0, 1.6, 0.9),
            (1000.0, 1.8, 1.6),
        ],
    ),
];

/// The four builtin processors: Synthetic 1, Synthetic 2, Transmeta Crusoe
/// and Intel XScale.
pub fn builtin_catalog<R: Real>() -> Vec<ProcessorModel<R>> {
    BUILTIN_TABLES
        .iter()
        .map(|(name, rows)| {
            let levels = rows
                .iter()
                .map(|&(mhz, v, w)| {
                    FrequencyLevel::new(R::lit(mhz * 1e6), R::lit(v), R::lit(w)).unwrap()
                })
                .collect();
            ProcessorModel::new(*name, levels, R::zero()).unwrap()
        })
        .collect()
}

/// Looks up a builtin processor by name; matching ignores case, spaces and
/// vendor prefixes ("xscale", "Intel XScale" and "intel-xscale" all work).
pub fn find_builtin<R: Real>(name: &str) -> Result<ProcessorModel<R>, PowerModelError> {
    let norm = |s: &str| -> String {
        s.chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase()
    };
    let wanted = norm(name);
    builtin_catalog()
        .into_iter()
        .find(|p| {
            let full = norm(p.name());
            full == wanted || full.ends_with(&wanted)
        })
        .ok_or_else(|| PowerModelError::UnknownBuiltin(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rel_gap;
    use crate::reclaim::FrequencyAllocation;

    const LAMBDA: f64 = 1.367e-24;

    fn cubic_50_60() -> ProcessorModel<f64> {
        instantiate_cubic(&[50e6, 60e6], CubicPowerModel::new(LAMBDA).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn cubic_powers_match_direct_evaluation() {
        let proc = cubic_50_60();
        assert!(rel_gap(proc.levels()[0].power, LAMBDA * 50e6f64.powi(3)) < 1e-12);
        assert!(rel_gap(proc.levels()[1].power, LAMBDA * 60e6f64.powi(3)) < 1e-12);
        assert!((proc.levels()[0].power - 0.170875).abs() < 1e-6);
        assert!((proc.levels()[1].power - 0.295272).abs() < 1e-6);
    }

    #[test]
    fn cubic_rejects_single_frequency() {
        let model = CubicPowerModel::new(LAMBDA).unwrap();
        assert!(matches!(
            instantiate_cubic(&[1e6], model, 0.0),
            Err(PowerModelError::TooFewLevels(1))
        ));
    }

    #[test]
    fn cubic_sorts_frequencies() {
        let model = CubicPowerModel::new(LAMBDA).unwrap();
        let proc = instantiate_cubic(&[1000e6, 800e6, 600e6, 400e6, 150e6], model, 0.0).unwrap();
        assert_eq!(proc.levels().len(), 5);
        assert_eq!(proc.f_min(), 150e6);
        assert_eq!(proc.f_max(), 1000e6);
        for w in proc.levels().windows(2) {
            assert!(w[0].frequency < w[1].frequency);
            assert!(w[0].power < w[1].power);
        }
    }

    #[test]
    fn task_energy_single_segment() {
        // 60 MHz for 116.67 ms in a 130 ms window, idle power zero.
        let proc = cubic_50_60();
        let level = proc.levels()[1];
        let alloc = FrequencyAllocation::from_segments(vec![(level, 7e6 / 60e6)]);
        let e = task_energy(&alloc, 0.130, &proc).unwrap();
        assert!((e - 34.45e-3).abs() < 0.01e-3, "got {e}");
    }

    #[test]
    fn task_energy_empty_allocation_is_zero() {
        let proc = cubic_50_60();
        let alloc = FrequencyAllocation::from_segments(vec![]);
        assert_eq!(task_energy(&alloc, 0.130, &proc).unwrap(), 0.0);
    }

    #[test]
    fn task_energy_two_segments_matches_worked_example() {
        let proc = cubic_50_60();
        let alloc = FrequencyAllocation::from_segments(vec![
            (proc.levels()[0], 0.080),
            (proc.levels()[1], 0.050),
        ]);
        let e = task_energy(&alloc, 0.130, &proc).unwrap();
        assert!((e - 28.43e-3).abs() < 0.005e-3, "got {e}");
    }

    #[test]
    fn task_energy_rejects_foreign_level() {
        let proc = cubic_50_60();
        let foreign = FrequencyLevel::new(55e6, 1.0, 0.2).unwrap();
        let alloc = FrequencyAllocation::from_segments(vec![(foreign, 0.01)]);
        assert!(matches!(
            task_energy(&alloc, 0.130, &proc),
            Err(PowerModelError::UnknownLevel { .. })
        ));
    }

    #[test]
    fn task_energy_rejects_overlong_allocation() {
        let proc = cubic_50_60();
        let alloc = FrequencyAllocation::from_segments(vec![(proc.levels()[0], 0.2)]);
        assert!(matches!(
            task_energy(&alloc, 0.130, &proc),
            Err(PowerModelError::DurationsExceedWindow { .. })
        ));
    }

    #[test]
    fn task_energy_charges_idle_power() {
        let proc = cubic_50_60().with_idle_power(0.05).unwrap();
        let alloc = FrequencyAllocation::from_segments(vec![(proc.levels()[0], 0.1)]);
        let e = task_energy(&alloc, 0.130, &proc).unwrap();
        let expected = 0.1 * proc.levels()[0].power + 0.05 * 0.030;
        assert!(rel_gap(e, expected) < 1e-12);
    }

    #[test]
    fn builtin_catalog_matches_reference_table() {
        let catalog = builtin_catalog::<f64>();
        assert_eq!(catalog.len(), 4);

        let xscale = &catalog[3];
        assert_eq!(xscale.name(), "Intel XScale");
        let top = xscale.max_level();
        assert_eq!((top.frequency, top.voltage, top.power), (1000e6, 1.8, 1.6));

        let crusoe = &catalog[2];
        assert_eq!(crusoe.name(), "Transmeta Crusoe");
        let low = crusoe.levels()[0];
        assert_eq!((low.frequency, low.voltage, low.power), (300e6, 1.2, 1.3));

        assert_eq!(catalog[1].levels().len(), 5);
        assert_eq!(catalog[0].levels().len(), 6);
        for p in &catalog {
            assert_eq!(p.idle_power(), 0.0);
        }
    }

    #[test]
    fn builtin_lookup_aliases() {
        assert_eq!(
            find_builtin::<f64>("xscale").unwrap().name(),
            "Intel XScale"
        );
        assert_eq!(
            find_builtin::<f64>("Transmeta Crusoe").unwrap().name(),
            "Transmeta Crusoe"
        );
        assert_eq!(
            find_builtin::<f64>("synthetic 1").unwrap().name(),
            "Synthetic 1"
        );
        assert!(find_builtin::<f64>("pentium").is_err());
    }

    #[test]
    fn monotone_contract_rejected_on_violation() {
        let levels = vec![
            FrequencyLevel::new(100e6, 1.0, 2.0).unwrap(),
            FrequencyLevel::new(200e6, 1.1, 1.5).unwrap(),
        ];
        assert!(matches!(
            ProcessorModel::new("bad", levels, 0.0),
            Err(PowerModelError::NonMonotone { .. })
        ));
    }

    #[test]
    fn idle_power_must_stay_below_lowest_level() {
        let levels = vec![
            FrequencyLevel::new(100e6, 1.0, 1.0).unwrap(),
            FrequencyLevel::new(200e6, 1.1, 2.0).unwrap(),
        ];
        assert!(ProcessorModel::new("p", levels.clone(), 1.0).is_err());
        assert!(ProcessorModel::new("p", levels, 0.99).is_ok());
    }

    #[test]
    fn json_round_trip_revalidates() {
        let proc = cubic_50_60();
        let json = serde_json::to_string(&proc).unwrap();
        let back: ProcessorModel<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.levels().len(), 2);

        // Tampered JSON with a monotonicity violation must be rejected.
        let bad = r#"{"name":"x","idle_power_w":0.0,"levels":[
            {"freq_hz":1e8,"voltage_v":1.0,"power_w":2.0},
            {"freq_hz":2e8,"voltage_v":1.1,"power_w":1.0}]}"#;
        assert!(serde_json::from_str::<ProcessorModel<f64>>(bad).is_err());
    }

    #[test]
    fn cubic_fit_detects_tabular_models() {
        let proc = cubic_50_60();
        let fit = CubicPowerModel::fit(&proc).unwrap();
        assert!(rel_gap(fit.lambda(), LAMBDA) < 1e-9);
        let xscale = find_builtin::<f64>("xscale").unwrap();
        assert!(CubicPowerModel::fit(&xscale).is_none());
    }

    #[test]
    fn generic_scalar_f32() {
        let catalog = builtin_catalog::<f32>();
        assert_eq!(catalog[0].levels().len(), 6);
        let model = CubicPowerModel::<f32>::new(1.367e-24).unwrap();
        let proc = instantiate_cubic(&[50e6f32, 60e6], model, 0.0).unwrap();
        assert!((proc.levels()[1].power - 0.295272f32).abs() < 1e-4);
    }
}

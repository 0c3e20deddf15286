//! Project configuration: one JSON file, one section per module.
//!
//! Any leaf can be overridden from the command line by dotted path, for
//! example `--gain.ripple_budget_db 1.0`. Override values are parsed as
//! JSON when possible and taken as strings otherwise.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use paramp_core::imd::ReadoutChannel;
use paramp_core::readout::{ClassifierConfig, DispersiveSystem, InjectedLine};
use paramp_core::synthesis::{PumpFilterSpec, SynthesisSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub seed: u64,
    pub synthesis: SynthesisSpec,
    pub pump: PumpSection,
    pub pump_filter: PumpFilterSection,
    pub gain: GainSection,
    pub imd: ImdSection,
    pub readout: ReadoutSection,
    pub output: OutputSection,
}

/// Array parameters; omitted values come from the synthesized network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSection {
    #[serde(rename = "l_array_H", default)]
    pub l_array: Option<f64>,
    #[serde(rename = "c1_F", default)]
    pub c1: Option<f64>,
    #[serde(rename = "z0_ohm", default)]
    pub z0: Option<f64>,
    /// `None` derives the pump strength from the design negative resistance.
    #[serde(default)]
    pub c3_phi_p: Option<f64>,
    pub pump_freq_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpFilterSection {
    pub design: PumpFilterSpec,
    /// Re-synthesize the match around the filter's array-side inductor.
    #[serde(default)]
    pub corenormalize: bool,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Report rejection over this band.
    pub rejection_band_hz: (f64, f64),
    /// Report reflection phase over this band.
    pub phase_band_hz: (f64, f64),
}

fn default_tol() -> f64 {
    1e-9
}

fn default_max_iter() -> usize {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkChoice {
    Synthesized,
    Reference,
    Corenormalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSection {
    pub network: NetworkChoice,
    pub grid: GridSpec,
    pub ripple_budget_db: f64,
    pub gain_target_db: f64,
    pub sweep_pump_hz: Vec<f64>,
    pub compression: CompressionSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionSection {
    /// 1/W; `None` calibrates it from the target P1dB.
    #[serde(default)]
    pub stark_coeff: Option<f64>,
    pub p1db_target_dbm: f64,
    /// `None` uses the flat-top centre.
    #[serde(default)]
    pub calibration_freq_hz: Option<f64>,
    pub powers_dbm: RangeSpec,
    pub grid: GridSpec,
    pub resolution_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl RangeSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.stop >= self.start) {
            bail!("range needs step > 0 and stop >= start, got {self:?}");
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.start + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImdSection {
    pub tones_hz: Vec<f64>,
    pub power_dbm: f64,
    pub pump_freq_hz: f64,
    pub max_order: u32,
    pub band_hz: (f64, f64),
    /// Planted per-tone IIP3 that fixes the cubic coefficient.
    pub iip3_dbm: f64,
    #[serde(default)]
    pub a5: f64,
    pub sweep_dbm: RangeSpec,
    /// Signal indices of the tracked product, e.g. `[2, -1]`.
    pub product: [i32; 2],
    pub readout_channels: Vec<f64>,
    /// Half-width of the collision window around each channel.
    pub collision_window_hz: f64,
    pub collision_max_order: u32,
}

impl ImdSection {
    pub fn channels(&self) -> Vec<ReadoutChannel> {
        self.readout_channels
            .iter()
            .map(|&freq_hz| ReadoutChannel {
                freq_hz,
                acq_bw_hz: self.collision_window_hz,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    pub systems: Vec<DispersiveSystem>,
    /// Steady-state ground-state photon number per channel.
    pub photons: Vec<f64>,
    pub eta: Vec<f64>,
    pub duration_s: f64,
    pub timestep_s: f64,
    pub trajectories: usize,
    #[serde(default)]
    pub injected_lines: Vec<InjectedLine>,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    /// Trajectories per preparation and channel written as CSV.
    #[serde(default)]
    pub export_trajectories: usize,
    pub noise_budget: NoiseBudgetSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBudgetSection {
    pub g_spa_db: f64,
    pub nvr_db: f64,
    /// `None` refers the second channel's efficiency to the amplifier input.
    #[serde(default)]
    pub eta_corr: Option<f64>,
    pub circulator_loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

/// Split `--section.key value` pairs out of the argument list.
pub fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(path) = a.strip_prefix("--").filter(|p| p.contains('.')) else {
            rest.push(a);
            continue;
        };
        let (path, value) = match path.split_once('=') {
            Some((p, v)) => (p.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| anyhow!("override --{path} needs a value"))?;
                (path.to_string(), v)
            }
        };
        overrides.push((path, value));
    }
    Ok((rest, overrides))
}

fn apply_override(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, k) in keys.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            anyhow!(
                "override --{path}: '{}' is not a section",
                keys[..i].join(".")
            )
        })?;
        if i + 1 == keys.len() {
            obj.insert((*k).to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(*k)
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<ProjectConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut root: Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    for (p, v) in overrides {
        apply_override(&mut root, p, v)?;
    }
    let cfg: ProjectConfig = serde_json::from_value(root).context("validating config")?;
    cfg.validate()?;
    Ok(cfg)
}

impl ProjectConfig {
    pub fn validate(&self) -> Result<()> {
        self.synthesis.validate()?;
        let r = &self.readout;
        let n = r.systems.len();
        if r.photons.len() != n || r.eta.len() != n {
            bail!("readout: {n} systems need {n} photon numbers and efficiencies");
        }
        for (name, g) in [
            ("gain.grid", &self.gain.grid),
            ("gain.compression.grid", &self.gain.compression.grid),
        ] {
            if !(g.points >= 2 && g.start_hz > 0.0 && g.stop_hz > g.start_hz) {
                bail!("{name}: need points >= 2 and 0 < start_hz < stop_hz");
            }
        }
        if self.imd.tones_hz.is_empty() {
            bail!("imd.tones_hz must list at least one tone");
        }
        if self.imd.readout_channels.is_empty() {
            bail!("imd.readout_channels must list at least one channel");
        }
        Ok(())
    }
}

//! Run configuration files.
//!
//! ```toml
//! schema = 1
//!
//! [scenario]
//! name = "one-axis"
//!
//! [couplings]
//! kappa_tau_sq = 0.0183
//! mu_tau = 8.8e-4
//!
//! [noise]
//! epsilon = 0.0281
//! eta_tau = 1.76e-8
//!
//! [field]
//! prior_variance = 1e4
//! true_y = 1.0
//!
//! [run]
//! tau = 1e-8
//! duration = 5e-3
//! seed = 7
//! ```
//!
//! Units: seconds, picotesla, pT². Every key is optional except
//! `scenario.name`.

use std::fmt;

use gaussmag_core::{
    AbsorptionCompounding, Couplings, GasId, NoiseConfig, NoiseParams, PerAxis, PhysicalNoiseParams, ScenarioConfig,
    ScenarioName, SetupSource, TrueField,
};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: i64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub couplings: Option<CouplingsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atom_fractions: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flux_fractions: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_tau_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_tau: Option<f64>,
}

/// Either `epsilon`/`eta_tau` directly, or all six physical keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_section: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beam_area: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub photon_flux: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atom_number: Option<f64>,
    /// `"per-gas"` (default) or `"per-beam"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub absorption: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    /// Prior variance for every axis; per-axis keys override it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_variance_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_variance_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_variance_z: Option<f64>,
    /// `"fixed"` (default, uses `true_x/y/z`) or `"prior"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_z: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<u64>,
    /// Gas pairs written `"a-b"`, e.g. `["1-4"]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geof_pairs: Option<Vec<String>>,
}

/// Parsed file plus its source text, for line lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    /// All defaults filled in; serializing it gives the config echo.
    pub normalized: RawConfig,
    pub scenario: ScenarioConfig,
}

impl LoadedConfig {
    pub fn echo(&self) -> String {
        toml::to_string(&self.normalized).expect("normalized config is plain TOML")
    }
}

fn key_line(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    exact_key_line(text, section, key).or_else(|| header_line(text, section))
}

fn header_line(text: &str, section: Option<&str>) -> Option<usize> {
    let section = section?;
    text.lines()
        .position(|l| l.trim().strip_prefix('[').and_then(|r| r.split(']').next()).map(str::trim) == Some(section))
        .map(|i| i + 1)
}

fn exact_key_line(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if let Some(name) = l.strip_prefix('[').and_then(|r| r.split(']').next()) {
            current = Some(name.trim().to_string());
            continue;
        }
        if current.as_deref() == section {
            if let Some(rest) = l.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn err(text: &str, section: Option<&str>, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { line: key_line(text, section, key), message: message.into() }
}

fn parse_pair(s: &str) -> Option<(GasId, GasId)> {
    let (a, b) = s.split_once('-')?;
    Some((GasId(a.trim().parse().ok()?), GasId(b.trim().parse().ok()?)))
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<LoadedConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| text[..s.start].matches('\n').count() + 1),
        message: e.message().to_string(),
    })?;
    let normalized = normalize(raw, text)?;
    let scenario = to_scenario(&normalized, text)?;
    scenario.validate().map_err(|e| locate_core_error(text, e.to_string()))?;
    Ok(LoadedConfig { normalized, scenario })
}

fn locate_core_error(text: &str, message: String) -> ConfigError {
    let m = message.to_lowercase();
    let (section, key) = if m.contains("flux") {
        (Some("scenario"), "flux_fractions")
    } else if m.contains("atom fraction") {
        (Some("scenario"), "atom_fractions")
    } else if m.contains("tau =") || m.contains("duration") {
        (Some("run"), if m.contains("duration") { "duration" } else { "tau" })
    } else if m.contains("stride") {
        (Some("run"), "stride")
    } else if m.contains("geof") || m.contains("unknown variable gas") {
        (Some("run"), "geof_pairs")
    } else if m.contains("epsilon") || m.contains("eta_tau") || m.contains("noise") {
        (Some("noise"), "epsilon")
    } else if m.contains("coupling") {
        (Some("couplings"), "kappa_tau_sq")
    } else if m.contains("prior variance") {
        (Some("field"), "prior_variance")
    } else {
        (Some("scenario"), "name")
    };
    err(text, section, key, message)
}

fn normalize(raw: RawConfig, text: &str) -> Result<RawConfig, ConfigError> {
    let schema = raw.schema.unwrap_or(SCHEMA_VERSION);
    if schema != SCHEMA_VERSION {
        return Err(err(text, None, "schema", format!("unsupported schema {schema}, expected {SCHEMA_VERSION}")));
    }
    let scenario = raw.scenario.ok_or_else(|| ConfigError {
        line: None,
        message: "missing [scenario] section".into(),
    })?;
    let name = scenario.name.clone().ok_or_else(|| err(text, Some("scenario"), "name", "missing scenario.name"))?;
    name.parse::<ScenarioName>()
        .map_err(|_| err(text, Some("scenario"), "name", format!("unknown scenario {name:?}")))?;

    let reference = Couplings::reference();
    let c = raw.couplings.unwrap_or_default();
    let couplings = CouplingsSection {
        kappa_tau_sq: Some(c.kappa_tau_sq.unwrap_or(0.0183)),
        mu_tau: Some(c.mu_tau.unwrap_or(reference.mu_tau)),
    };
    if couplings.kappa_tau_sq.is_some_and(|k| !(k >= 0.0) || !k.is_finite()) {
        return Err(err(text, Some("couplings"), "kappa_tau_sq", "kappa_tau_sq must be finite and non-negative"));
    }

    let noise = match raw.noise {
        None => None,
        Some(n) => {
            let physical = [n.decay_rate, n.cross_section, n.beam_area, n.detuning, n.photon_flux, n.atom_number];
            let any_physical = physical.iter().any(Option::is_some);
            let any_direct = n.epsilon.is_some() || n.eta_tau.is_some();
            if any_physical && any_direct {
                return Err(err(
                    text,
                    Some("noise"),
                    "epsilon",
                    "give either epsilon/eta_tau or the physical noise parameters, not both",
                ));
            }
            if any_physical && !physical.iter().all(Option::is_some) {
                return Err(err(
                    text,
                    Some("noise"),
                    "decay_rate",
                    "physical noise needs decay_rate, cross_section, beam_area, detuning, photon_flux and atom_number",
                ));
            }
            let absorption = n.absorption.clone().unwrap_or_else(|| "per-gas".into());
            if absorption != "per-gas" && absorption != "per-beam" {
                return Err(err(
                    text,
                    Some("noise"),
                    "absorption",
                    format!("absorption must be \"per-gas\" or \"per-beam\", got {absorption:?}"),
                ));
            }
            Some(if any_physical {
                NoiseSection { absorption: Some(absorption), ..n }
            } else {
                NoiseSection {
                    epsilon: Some(n.epsilon.unwrap_or(0.0)),
                    eta_tau: Some(n.eta_tau.unwrap_or(0.0)),
                    absorption: Some(absorption),
                    ..Default::default()
                }
            })
        }
    };

    let f = raw.field.unwrap_or_default();
    let all = f.prior_variance.unwrap_or(1e4);
    let true_field = f.true_field.clone().unwrap_or_else(|| "fixed".into());
    if true_field != "fixed" && true_field != "prior" {
        return Err(err(
            text,
            Some("field"),
            "true_field",
            format!("true_field must be \"fixed\" or \"prior\", got {true_field:?}"),
        ));
    }
    let field = FieldSection {
        prior_variance: None,
        prior_variance_x: Some(f.prior_variance_x.unwrap_or(all)),
        prior_variance_y: Some(f.prior_variance_y.unwrap_or(all)),
        prior_variance_z: Some(f.prior_variance_z.unwrap_or(all)),
        true_x: Some(f.true_x.unwrap_or(0.0)),
        true_y: Some(f.true_y.unwrap_or(0.0)),
        true_z: Some(f.true_z.unwrap_or(0.0)),
        true_field: Some(true_field),
    };
    for (key, v) in [
        ("prior_variance_x", field.prior_variance_x),
        ("prior_variance_y", field.prior_variance_y),
        ("prior_variance_z", field.prior_variance_z),
    ] {
        if v.is_some_and(|v| !(v > 0.0) || !v.is_finite()) {
            let key = if f.prior_variance.is_some() && exact_key_line(text, Some("field"), key).is_none() {
                "prior_variance"
            } else {
                key
            };
            return Err(err(text, Some("field"), key, format!("{key} must be positive and finite")));
        }
    }

    let r = raw.run.unwrap_or_default();
    let seed = r.seed.unwrap_or(0);
    if seed > i64::MAX as u64 {
        return Err(err(text, Some("run"), "seed", "seed must fit in a signed 64-bit integer"));
    }
    let geof_pairs = r.geof_pairs.unwrap_or_default();
    for p in &geof_pairs {
        if parse_pair(p).is_none() {
            return Err(err(text, Some("run"), "geof_pairs", format!("gas pair {p:?} is not of the form \"a-b\"")));
        }
    }
    let run = RunSection {
        tau: Some(r.tau.unwrap_or(1e-8)),
        duration: Some(r.duration.unwrap_or(5e-3)),
        seed: Some(seed),
        stride: Some(r.stride.unwrap_or(1000)),
        geof_pairs: Some(geof_pairs),
    };

    Ok(RawConfig {
        schema: Some(schema),
        scenario: Some(ScenarioSection { name: Some(name), ..scenario }),
        couplings: Some(couplings),
        noise,
        field: Some(field),
        run: Some(run),
    })
}

fn to_scenario(n: &RawConfig, text: &str) -> Result<ScenarioConfig, ConfigError> {
    let s = n.scenario.as_ref().expect("normalized");
    let name: ScenarioName = s.name.as_deref().expect("normalized").parse().expect("checked");
    let c = n.couplings.as_ref().expect("normalized");
    let f = n.field.as_ref().expect("normalized");
    let r = n.run.as_ref().expect("normalized");
    let noise = match &n.noise {
        None => None,
        Some(ns) => {
            let params = match (ns.epsilon, ns.eta_tau) {
                (Some(epsilon), Some(eta_tau)) => NoiseParams::Direct { epsilon, eta_tau },
                _ => NoiseParams::Physical(PhysicalNoiseParams {
                    decay_rate: ns.decay_rate.expect("normalized"),
                    cross_section: ns.cross_section.expect("normalized"),
                    beam_area: ns.beam_area.expect("normalized"),
                    detuning: ns.detuning.expect("normalized"),
                    photon_flux: ns.photon_flux.expect("normalized"),
                    atom_number: ns.atom_number.expect("normalized"),
                }),
            };
            let compounding = match ns.absorption.as_deref() {
                Some("per-beam") => AbsorptionCompounding::PerBeam,
                _ => AbsorptionCompounding::PerGas,
            };
            Some(NoiseConfig { params, compounding })
        }
    };
    let true_field = match f.true_field.as_deref() {
        Some("prior") => TrueField::SampledFromPrior,
        _ => TrueField::Fixed(PerAxis { x: f.true_x.unwrap(), y: f.true_y.unwrap(), z: f.true_z.unwrap() }),
    };
    let geof_pairs = r.geof_pairs.as_ref().expect("normalized").iter().map(|p| parse_pair(p).expect("checked")).collect();
    let stride = r.stride.unwrap();
    if stride == 0 {
        return Err(err(text, Some("run"), "stride", "stride must be at least 1"));
    }
    Ok(ScenarioConfig {
        setup: SetupSource::Builtin(name),
        atom_fractions: s.atom_fractions.clone(),
        flux_fractions: s.flux_fractions.clone(),
        couplings: Couplings { kappa_tau: c.kappa_tau_sq.unwrap().sqrt(), mu_tau: c.mu_tau.unwrap() },
        tau: r.tau.unwrap(),
        duration: r.duration.unwrap(),
        prior_variance: PerAxis {
            x: f.prior_variance_x.unwrap(),
            y: f.prior_variance_y.unwrap(),
            z: f.prior_variance_z.unwrap(),
        },
        true_field,
        noise,
        seed: r.seed.unwrap(),
        stride,
        geof_pairs,
        keep_states: false,
    })
}

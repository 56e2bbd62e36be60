//! Flat `key=value` run configuration.
//!
//! Layers are merged in order: built-in defaults, then a preset, then a
//! config file, then command-line flags. Setting `L` in a layer drops any
//! per-model `L.<model>` values from the layers below it.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use perc_channel::calibration::FIT_L_BOUNDS;
use perc_channel::path_loss::{distance_grid, ChannelParams, Route};
use perc_channel::rays::RayModel;

use crate::CliError;

/// Recognised keys. `L.<model>` keys are accepted for any model tag.
pub const KEYS: &[&str] = &[
    "model",
    "route",
    "a",
    "p",
    "L",
    "pt",
    "r_start",
    "r_stop",
    "r_count",
    "r_scale",
    "seed",
    "out",
    "ref",
    "measurements",
    "select",
    "L_min",
    "L_max",
    "rays",
    "collisions",
    "n",
    "width",
    "medium",
    "loss_spread",
    "mc",
];

const DEFAULTS: &[(&str, &str)] = &[
    ("model", "all"),
    ("route", "closed"),
    ("a", "20"),
    ("p", "0.7"),
    ("L", "3"),
    ("pt", "1"),
    ("r_start", "100"),
    ("r_stop", "1000"),
    ("r_count", "20"),
    ("r_scale", "log"),
    ("seed", "1"),
    ("rays", "100000"),
    ("n", "200"),
    ("medium", "lattice"),
    ("loss_spread", "0"),
    ("mc", "false"),
];

pub const PRESETS: &[&str] = &["outdoor-prati", "indoor-60ghz"];

fn preset(name: &str) -> Option<&'static [(&'static str, &'static str)]> {
    match name {
        "outdoor-prati" => Some(&[
            ("a", "20"),
            ("p", "0.7"),
            ("L.rw", "3.5"),
            ("L.g05", "5.5"),
            ("L.g10", "7.5"),
            ("r_start", "20"),
            ("r_stop", "500"),
            ("r_count", "49"),
            ("r_scale", "log"),
        ]),
        "indoor-60ghz" => Some(&[
            ("a", "2"),
            ("p", "0.82"),
            ("L.rw", "6"),
            ("L.g05", "7"),
            ("L.g10", "8"),
            ("r_start", "2"),
            ("r_stop", "30"),
            ("r_count", "29"),
            ("r_scale", "linear"),
            ("ref", "1.5"),
        ]),
        _ => None,
    }
}

fn check_key(key: &str) -> Result<(), String> {
    if KEYS.contains(&key) || key.strip_prefix("L.").is_some_and(|m| m.parse::<RayModel>().is_ok()) {
        Ok(())
    } else {
        Err(format!("unknown key `{key}`"))
    }
}

/// Ordered `key=value` pairs from one source.
#[derive(Debug, Default, Clone)]
pub struct Layer(Vec<(String, String)>);

impl Layer {
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.push((key.to_string(), value.into()));
    }

    pub fn set_opt(&mut self, key: &str, value: Option<impl ToString>) {
        if let Some(v) = value {
            self.set(key, v.to_string());
        }
    }

    /// Parses `key=value` text; `#` starts a comment line.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut layer = Layer::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected key=value, got {line:?}", k + 1)))?;
            let key = key.trim();
            check_key(key).map_err(|m| CliError::Config(format!("{origin}:{}: {m}", k + 1)))?;
            layer.set(key, value.trim());
        }
        Ok(layer)
    }

    /// Parses `--set key=value` items.
    pub fn from_assignments(items: &[String]) -> Result<Self, CliError> {
        Layer::parse(&items.join("\n"), "--set")
    }
}

/// Merges layers, lowest precedence first.
pub fn merge(layers: &[Layer]) -> Result<BTreeMap<String, String>, CliError> {
    let mut map: BTreeMap<String, String> = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    for layer in layers {
        for (k, v) in &layer.0 {
            check_key(k).map_err(CliError::Config)?;
            if k == "L" {
                map.retain(|key, _| !key.starts_with("L."));
            }
            map.insert(k.clone(), v.clone());
        }
    }
    Ok(map)
}

pub fn preset_layer(name: &str) -> Result<Layer, CliError> {
    let pairs = preset(name)
        .ok_or_else(|| CliError::Config(format!("unknown preset `{name}` (expected {})", PRESETS.join(", "))))?;
    let mut layer = Layer::default();
    for (k, v) in pairs {
        layer.set(k, *v);
    }
    Ok(layer)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MediumKind {
    Lattice,
    Walk,
}

/// Fully resolved configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub models: Vec<RayModel>,
    pub routes: Vec<Route>,
    pub a: f64,
    pub p: f64,
    loss: f64,
    loss_per_model: Vec<(String, f64)>,
    pub pt: f64,
    pub r_start: f64,
    pub r_stop: f64,
    pub r_count: usize,
    pub log_spaced: bool,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub reference: Option<f64>,
    pub measurements: Option<PathBuf>,
    pub select: Option<String>,
    pub l_range: (f64, f64),
    pub rays: u64,
    pub collisions: Option<u32>,
    pub n: usize,
    pub width: Option<f64>,
    pub medium: MediumKind,
    pub loss_spread: f64,
    pub mc: bool,
}

fn value<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, CliError> {
    map.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| CliError::Config(format!("bad value for `{key}`: {v:?}")))
        })
        .transpose()
}

fn required<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T, CliError> {
    value(map, key)?.ok_or_else(|| CliError::Config(format!("missing `{key}`")))
}

fn models(spec: &str) -> Result<Vec<RayModel>, CliError> {
    if spec == "all" {
        return Ok(RayModel::ALL.to_vec());
    }
    spec.split(',')
        .map(|m| {
            m.trim()
                .parse::<RayModel>()
                .map_err(|e| CliError::Config(format!("`model`: {e}")))
        })
        .collect()
}

fn routes(spec: &str) -> Result<Vec<Route>, CliError> {
    if spec == "all" {
        return Ok(Route::ALL.to_vec());
    }
    spec.split(',')
        .map(|r| {
            r.trim()
                .parse::<Route>()
                .map_err(|e| CliError::Config(format!("`route`: {e}")))
        })
        .collect()
}

impl RunConfig {
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let log_spaced = match required::<String>(map, "r_scale")?.as_str() {
            "log" => true,
            "linear" => false,
            other => {
                return Err(CliError::Config(format!(
                    "bad value for `r_scale`: {other:?} (log or linear)"
                )))
            }
        };
        let medium = match required::<String>(map, "medium")?.as_str() {
            "lattice" => MediumKind::Lattice,
            "walk" => MediumKind::Walk,
            other => {
                return Err(CliError::Config(format!(
                    "bad value for `medium`: {other:?} (lattice or walk)"
                )))
            }
        };
        let mut loss_per_model = Vec::new();
        for (k, v) in map.range("L.".to_string()..) {
            let Some(tag) = k.strip_prefix("L.") else { break };
            let loss = v
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad value for `{k}`: {v:?}")))?;
            loss_per_model.push((
                tag.parse::<RayModel>()
                    .map_err(|e| CliError::Config(e.to_string()))?
                    .tag(),
                loss,
            ));
        }
        Ok(RunConfig {
            models: models(&required::<String>(map, "model")?)?,
            routes: routes(&required::<String>(map, "route")?)?,
            a: required(map, "a")?,
            p: required(map, "p")?,
            loss: required(map, "L")?,
            loss_per_model,
            pt: required(map, "pt")?,
            r_start: required(map, "r_start")?,
            r_stop: required(map, "r_stop")?,
            r_count: required(map, "r_count")?,
            log_spaced,
            seed: required(map, "seed")?,
            out: value(map, "out")?,
            reference: value(map, "ref")?,
            measurements: value(map, "measurements")?,
            select: value(map, "select")?,
            l_range: (
                value(map, "L_min")?.unwrap_or(FIT_L_BOUNDS.0),
                value(map, "L_max")?.unwrap_or(FIT_L_BOUNDS.1),
            ),
            rays: required(map, "rays")?,
            collisions: value(map, "collisions")?,
            n: required(map, "n")?,
            width: value(map, "width")?,
            medium,
            loss_spread: required(map, "loss_spread")?,
            mc: required(map, "mc")?,
        })
    }

    /// Reflection loss for `model`: its `L.<model>` value if set, else `L`.
    pub fn loss_for(&self, model: RayModel) -> f64 {
        let tag = model.tag();
        self.loss_per_model
            .iter()
            .find(|(t, _)| *t == tag)
            .map_or(self.loss, |&(_, l)| l)
    }

    /// The plain `L` value, used where no model is involved.
    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn params(&self, model: RayModel) -> perc_channel::Result<ChannelParams> {
        ChannelParams::new(self.a, self.p, self.loss_for(model))?.with_transmit_power(self.pt)
    }

    pub fn grid(&self) -> perc_channel::Result<Vec<f64>> {
        distance_grid(self.r_start, self.r_stop, self.r_count, self.log_spaced)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(layers: &[Layer]) -> RunConfig {
        RunConfig::from_map(&merge(layers).unwrap()).unwrap()
    }

    #[test]
    fn defaults_are_the_outdoor_fixture() {
        let c = resolve(&[]);
        assert_eq!((c.a, c.p, c.loss()), (20.0, 0.7, 3.0));
        assert_eq!(c.models, RayModel::ALL.to_vec());
        assert_eq!(c.routes, vec![Route::ClosedForm]);
    }

    #[test]
    fn later_layers_win() {
        let file = Layer::parse("# site\na = 10\np=0.5\n", "site.cfg").unwrap();
        let mut flags = Layer::default();
        flags.set("a", "12");
        let c = resolve(&[preset_layer("outdoor-prati").unwrap(), file, flags]);
        assert_eq!((c.a, c.p), (12.0, 0.5));
        assert_eq!(c.loss_for(RayModel::GENERIC_HALF), 5.5);
    }

    #[test]
    fn plain_loss_overrides_preset_per_model_values() {
        let mut flags = Layer::default();
        flags.set("L", "4");
        let c = resolve(&[preset_layer("indoor-60ghz").unwrap(), flags]);
        for m in RayModel::ALL {
            assert_eq!(c.loss_for(m), 4.0);
        }
        assert_eq!(c.reference, Some(1.5));
    }

    #[test]
    fn errors_name_the_key() {
        let e = Layer::parse("a=1\nbogus=2\n", "x.cfg").unwrap_err();
        assert!(e.to_string().contains("x.cfg:2") && e.to_string().contains("bogus"));
        let mut l = Layer::default();
        l.set("p", "seven");
        let e = RunConfig::from_map(&merge(&[l]).unwrap()).unwrap_err();
        assert!(e.to_string().contains("`p`"));
        assert!(preset_layer("mars").is_err());
    }
}

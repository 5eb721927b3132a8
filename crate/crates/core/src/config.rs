//! Run configuration: a flat `key=value` file with dotted section prefixes.
//!
//! ```text
//! # comment
//! params.N=3
//! params.alpha=2
//! params.beta=4
//! grid.r_max=auto
//! kernel.t=0.1,0.5
//! ```
//!
//! Command-line overrides are applied as further `key=value` pairs before
//! the file is resolved into a [`RunConfig`].

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::OperatorParams;
use crate::spectral::{Grading, RMax};
use crate::verify::{BoundId, VerifyOptions};

/// Every accepted key with its default; `None` marks a required key.
const KEYS: &[(&str, Option<&str>)] = &[
    ("params.N", None),
    ("params.alpha", None),
    ("params.beta", None),
    ("params.sanity_mode", Some("false")),
    ("grid.r_max", Some("auto")),
    ("grid.n", Some("1000")),
    ("grid.grading", Some("uniform")),
    ("spectral.modes", Some("6")),
    ("spectral.ell_max", Some("2")),
    ("spectral.tol", Some("1e-8")),
    ("kernel.t", Some("0.1")),
    ("kernel.radii", Some("0.5,1,2")),
    ("kernel.cosines", Some("1,0.5,0,-0.5,-1")),
    ("kernel.backend", Some("eigenexpansion")),
    ("kernel.ell_max", Some("32")),
    ("kernel.angular_tol", Some("1e-6")),
    ("kernel.max_modes", Some("600")),
    ("wkb.lambda", Some("0")),
    ("wkb.k", Some("default")),
    ("wkb.base_radius", Some("1")),
    ("wkb.r_lo", Some("10")),
    ("wkb.r_hi", Some("100")),
    ("wkb.samples", Some("40")),
    ("wkb.override", Some("false")),
    ("verify.checkers", Some("all")),
    ("verify.seed", Some("0")),
    ("verify.samples", Some("1000")),
    ("verify.radial_samples", Some("24")),
    ("verify.cosines", Some("8")),
    ("verify.time_points", Some("12")),
    ("verify.kernel_elements", Some("1000")),
    ("verify.ell_max", Some("32")),
    ("debug.corrupt_exponent", Some("false")),
    ("output.dir", Some("out")),
    ("output.formats", Some("csv,json")),
];

/// Envelope rate multiplier applied by `debug.corrupt_exponent`.
pub const CORRUPTION_SCALE: f64 = 1.25;

/// Raw `key=value` entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", no + 1)))?;
            let key = key.trim();
            if map.entries.contains_key(key) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", no + 1)));
            }
            map.set(key, value.trim())?;
        }
        Ok(map)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies an override of the form `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{pair}' is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    fn get(&self, key: &str) -> Result<&str> {
        if let Some(v) = self.entries.get(key) {
            return Ok(v);
        }
        match KEYS.iter().find(|(k, _)| *k == key) {
            Some((_, Some(default))) => Ok(default),
            Some((_, None)) => Err(Error::Config(format!("missing required key '{key}'"))),
            None => Err(Error::Config(format!("unknown key '{key}'"))),
        }
    }

    fn number(&self, key: &str) -> Result<f64> {
        let v = self.get(key)?;
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::Config(format!("key '{key}': '{v}' is not a finite number")))
    }

    fn integer(&self, key: &str) -> Result<usize> {
        let v = self.get(key)?;
        v.parse::<usize>()
            .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not a nonnegative integer")))
    }

    fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key)? {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(Error::Config(format!("key '{key}': '{v}' is not a boolean"))),
        }
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.get(key)?;
        let out = v
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Config(format!("key '{key}': '{s}' is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if out.is_empty() {
            return Err(Error::Config(format!("key '{key}' is empty")));
        }
        Ok(out)
    }

    /// Every key with its effective value, one `key=value` per line.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        for (k, _) in KEYS {
            let v = self.get(k).unwrap_or("<missing>");
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelBackend {
    Eigenexpansion,
    Timestep,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridConfig {
    pub r_max: RMax,
    pub n: usize,
    pub grading: Grading,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralConfig {
    pub modes: usize,
    pub ell_max: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelConfig {
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    pub cosines: Vec<f64>,
    pub backend: KernelBackend,
    pub ell_max: usize,
    pub angular_tol: f64,
    pub max_modes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct WkbConfig {
    pub lambda: f64,
    /// `None` selects the default order.
    pub k: Option<usize>,
    pub base_radius: f64,
    pub r_lo: f64,
    pub r_hi: f64,
    pub samples: usize,
    /// Accept an order with `kξ + 2 - α <= 0` silently.
    pub allow_low_order: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyConfig {
    pub checkers: Vec<BoundId>,
    pub options: VerifyOptions,
    pub corrupt_exponent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub csv: bool,
    pub json: bool,
}

/// Fully resolved and validated configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub params: OperatorParams,
    pub grid: GridConfig,
    pub spectral: SpectralConfig,
    pub kernel: KernelConfig,
    pub wkb: WkbConfig,
    pub verify: VerifyConfig,
    pub output: OutputConfig,
    /// The `key=value` echo written next to every output.
    pub resolved: String,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl RunConfig {
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let dim_raw = map.number("params.N")?;
        ensure(dim_raw.fract() == 0.0 && dim_raw >= 0.0, || {
            format!("key 'params.N': {dim_raw} is not an integer")
        })?;
        let params = OperatorParams::new(
            dim_raw as usize,
            map.number("params.alpha")?,
            map.number("params.beta")?,
            map.flag("params.sanity_mode")?,
        )?;

        let r_max = match map.get("grid.r_max")? {
            "auto" => RMax::Auto,
            _ => {
                let r = map.number("grid.r_max")?;
                ensure(r > 1.0, || format!("key 'grid.r_max': {r} must exceed 1"))?;
                RMax::Fixed(r)
            }
        };
        let n = map.integer("grid.n")?;
        ensure(n >= 64, || format!("key 'grid.n': {n} is below 64"))?;
        let grading = match map.get("grid.grading")? {
            "uniform" => Grading::Uniform,
            g => match g.strip_prefix("geometric:") {
                Some(ratio) => {
                    let q: f64 = ratio
                        .parse()
                        .map_err(|_| Error::Config(format!("key 'grid.grading': bad ratio '{ratio}'")))?;
                    ensure(q > 0.0, || format!("key 'grid.grading': ratio {q} must be positive"))?;
                    Grading::Geometric(q)
                }
                None => {
                    return Err(Error::Config(format!(
                        "key 'grid.grading': '{g}' is neither 'uniform' nor 'geometric:<ratio>'"
                    )))
                }
            },
        };

        let modes = map.integer("spectral.modes")?;
        ensure((1..=50).contains(&modes), || format!("key 'spectral.modes': {modes} outside 1..=50"))?;
        let tol = map.number("spectral.tol")?;
        ensure(tol > 0.0, || format!("key 'spectral.tol': {tol} must be positive"))?;

        let times = map.list("kernel.t")?;
        ensure(times.iter().all(|t| *t > 0.0), || "key 'kernel.t': times must be positive".into())?;
        let radii = map.list("kernel.radii")?;
        ensure(radii.iter().all(|r| *r >= 0.0), || "key 'kernel.radii': radii must be nonnegative".into())?;
        let cosines = map.list("kernel.cosines")?;
        ensure(cosines.iter().all(|c| (-1.0..=1.0).contains(c)), || {
            "key 'kernel.cosines': cosines must lie in [-1, 1]".into()
        })?;
        let backend = match map.get("kernel.backend")? {
            "eigenexpansion" => KernelBackend::Eigenexpansion,
            "timestep" => KernelBackend::Timestep,
            b => {
                return Err(Error::Config(format!(
                    "key 'kernel.backend': '{b}' is neither 'eigenexpansion' nor 'timestep'"
                )))
            }
        };
        let angular_tol = map.number("kernel.angular_tol")?;
        ensure(angular_tol > 0.0, || "key 'kernel.angular_tol' must be positive".into())?;
        let max_modes = map.integer("kernel.max_modes")?;
        ensure(max_modes >= 1, || "key 'kernel.max_modes' must be at least 1".into())?;

        let k = match map.get("wkb.k")? {
            "default" => None,
            _ => {
                let k = map.integer("wkb.k")?;
                ensure(k >= 1, || "key 'wkb.k' must be at least 1".into())?;
                Some(k)
            }
        };
        let base_radius = map.number("wkb.base_radius")?;
        ensure(base_radius >= 1.0, || "key 'wkb.base_radius' must be at least 1".into())?;
        let r_lo = map.number("wkb.r_lo")?;
        let r_hi = map.number("wkb.r_hi")?;
        ensure(r_lo >= 1.0 && r_lo < r_hi, || "keys 'wkb.r_lo', 'wkb.r_hi' need 1 <= r_lo < r_hi".into())?;
        let wkb_samples = map.integer("wkb.samples")?;
        ensure(wkb_samples >= 10, || "key 'wkb.samples' must be at least 10".into())?;

        let checkers = match map.get("verify.checkers")? {
            "all" => BoundId::ALL.to_vec(),
            list => list
                .split(',')
                .map(|s| BoundId::parse(s.trim()))
                .collect::<Result<Vec<_>>>()?,
        };
        let corrupt_exponent = map.flag("debug.corrupt_exponent")?;
        let seed_raw = map.get("verify.seed")?;
        let seed: u64 = seed_raw
            .parse()
            .map_err(|_| Error::Config(format!("key 'verify.seed': '{seed_raw}' is not an unsigned integer")))?;
        let sobolev_samples = map.integer("verify.samples")?;
        ensure(sobolev_samples >= 100, || "key 'verify.samples' must be at least 100".into())?;
        let radial_samples = map.integer("verify.radial_samples")?;
        let time_points = map.integer("verify.time_points")?;
        let cos_count = map.integer("verify.cosines")?;
        ensure(radial_samples >= 2 && time_points >= 3 && cos_count >= 1, || {
            "verify lattice needs at least 2 radii, 3 times and 1 cosine".into()
        })?;
        let kernel_elements = map.integer("verify.kernel_elements")?;
        ensure(kernel_elements >= 64, || "key 'verify.kernel_elements' is below 64".into())?;
        let options = VerifyOptions {
            radial_samples,
            cosines: cos_count,
            time_points,
            kernel_elements,
            ell_max: map.integer("verify.ell_max")?,
            sobolev_samples,
            seed,
            phase_scale: if corrupt_exponent { CORRUPTION_SCALE } else { 1.0 },
            ..VerifyOptions::default()
        };

        let formats = map.get("output.formats")?;
        let mut csv = false;
        let mut json = false;
        for f in formats.split(',') {
            match f.trim() {
                "csv" => csv = true,
                "json" => json = true,
                other => return Err(Error::Config(format!("key 'output.formats': unknown format '{other}'"))),
            }
        }

        Ok(RunConfig {
            params,
            grid: GridConfig { r_max, n, grading },
            spectral: SpectralConfig {
                modes,
                ell_max: map.integer("spectral.ell_max")?,
                tol,
            },
            kernel: KernelConfig {
                times,
                radii,
                cosines,
                backend,
                ell_max: map.integer("kernel.ell_max")?,
                angular_tol,
                max_modes,
            },
            wkb: WkbConfig {
                lambda: map.number("wkb.lambda")?,
                k,
                base_radius,
                r_lo,
                r_hi,
                samples: wkb_samples,
                allow_low_order: map.flag("wkb.override")?,
            },
            verify: VerifyConfig {
                checkers,
                options,
                corrupt_exponent,
            },
            output: OutputConfig {
                dir: PathBuf::from(map.get("output.dir")?),
                csv,
                json,
            },
            resolved: map.resolved_text(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ConfigMap {
        ConfigMap::parse("params.N=3\nparams.alpha=2\nparams.beta=4 # reference\n").unwrap()
    }

    #[test]
    fn defaults_fill_unset_keys() {
        let cfg = RunConfig::from_map(&base()).unwrap();
        assert_eq!(cfg.grid.n, 1000);
        assert_eq!(cfg.grid.r_max, RMax::Auto);
        assert_eq!(cfg.verify.checkers.len(), 8);
        assert_eq!(cfg.kernel.times, vec![0.1]);
        assert!(cfg.resolved.contains("params.beta=4\n"));
        assert!(cfg.resolved.contains("grid.r_max=auto\n"));
    }

    #[test]
    fn missing_key_is_named() {
        let map = ConfigMap::parse("params.N=3\nparams.alpha=2\n").unwrap();
        let err = RunConfig::from_map(&map).unwrap_err().to_string();
        assert!(err.contains("params.beta"), "{err}");
    }

    #[test]
    fn rejects_unknown_and_malformed_lines() {
        assert!(ConfigMap::parse("params.gamma=1").is_err());
        assert!(ConfigMap::parse("params.N 3").is_err());
        assert!(ConfigMap::parse("params.N=3\nparams.N=4").is_err());
        let mut map = base();
        map.set("grid.n", "10").unwrap();
        assert!(RunConfig::from_map(&map).is_err());
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut map = base();
        map.set_pair("grid.r_max=12.5").unwrap();
        map.set_pair("verify.checkers=lyapunov,log-psi").unwrap();
        let cfg = RunConfig::from_map(&map).unwrap();
        assert_eq!(cfg.grid.r_max, RMax::Fixed(12.5));
        assert_eq!(cfg.verify.checkers, vec![BoundId::Lyapunov, BoundId::LogPsi]);
    }

    #[test]
    fn hypothesis_violation_is_reported() {
        let mut map = base();
        map.set("params.beta", "0").unwrap();
        let err = RunConfig::from_map(&map).unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
    }

    #[test]
    fn corruption_scales_envelope_rate() {
        let mut map = base();
        map.set("debug.corrupt_exponent", "true").unwrap();
        let cfg = RunConfig::from_map(&map).unwrap();
        assert_eq!(cfg.verify.options.phase_scale, CORRUPTION_SCALE);
    }
}

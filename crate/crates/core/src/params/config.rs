//! Sectioned `key = value` config documents.
//!
//! ```text
//! # comments run to end of line
//! [robot]
//! radius_um = 2
//! ```
//!
//! Keys carry their unit as a suffix. A few keys accept an alternative unit
//! (`_mm` for lengths, `_ms` for times, `_pa_s` for viscosity) which is
//! converted on load. Missing keys keep their defaults; a repeated key
//! overrides the earlier one.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{default_params, ScenarioParams, Violation};
use crate::chemfield::GridSpec;
use crate::error::{Error, Result};

/// Numerical knobs that are not part of the physical scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    /// Time step of the path quadratures, s.
    pub path_step: f64,
    /// Monte Carlo time bin, s.
    pub mc_dt: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            path_step: 1e-4,
            mc_dt: 1e-4,
        }
    }
}

/// Everything a config document can set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Config {
    pub params: ScenarioParams,
    pub grid: GridSpec,
    pub numerics: Numerics,
}

const SECTIONS: [&str; 8] = [
    "tissue", "vessel", "fluid", "robot", "chemical", "control", "mission", "numerics",
];

const LENGTH: &[(&str, f64)] = &[("um", 1.0), ("mm", 1000.0)];
const TIME: &[(&str, f64)] = &[("s", 1.0), ("ms", 1e-3)];
const VISCOSITY: &[(&str, f64)] = &[("g_cm_s", 1.0), ("pa_s", 10.0)];
const PER_MM3: &[(&str, f64)] = &[("per_mm3", 1.0)];
const PER_UM3: &[(&str, f64)] = &[("per_um3", 1.0)];
const CM3: &[(&str, f64)] = &[("cm3", 1.0)];
const G_CM3: &[(&str, f64)] = &[("g_cm3", 1.0)];
const SPEED: &[(&str, f64)] = &[("um_s", 1.0), ("mm_s", 1000.0)];
const KELVIN: &[(&str, f64)] = &[("k", 1.0)];
const DIFFUSIVITY: &[(&str, f64)] = &[("um2_s", 1.0)];
const FLUX: &[(&str, f64)] = &[("per_s_um2", 1.0)];
const NONE: &[(&str, f64)] = &[("", 1.0)];

#[derive(Clone, Copy)]
enum Slot {
    Real(fn(&mut Config) -> &mut f64),
    Count(fn(&mut Config) -> &mut u32),
}

struct KeyDef {
    section: &'static str,
    stem: &'static str,
    /// First entry is the canonical unit written on serialization.
    units: &'static [(&'static str, f64)],
    slot: Slot,
}

macro_rules! real {
    ($section:literal, $stem:literal, $units:expr, $($path:ident).+) => {
        KeyDef { section: $section, stem: $stem, units: $units, slot: Slot::Real(|c| &mut c.$($path).+) }
    };
}

macro_rules! count {
    ($section:literal, $stem:literal, $($path:ident).+) => {
        KeyDef { section: $section, stem: $stem, units: NONE, slot: Slot::Count(|c| &mut c.$($path).+) }
    };
}

const KEYS: &[KeyDef] = &[
    real!("tissue", "vessel_density", PER_MM3, params.vessel_density),
    real!("tissue", "volume", CM3, params.tissue_volume),
    real!("vessel", "radius", LENGTH, params.vessel_radius),
    real!("vessel", "length", LENGTH, params.vessel_length),
    real!("vessel", "source_length", LENGTH, params.source_length),
    real!("fluid", "density", G_CM3, params.fluid_density),
    real!("fluid", "viscosity", VISCOSITY, params.viscosity),
    real!("fluid", "avg_velocity", SPEED, params.avg_velocity),
    real!("fluid", "temperature", KELVIN, params.temperature),
    real!("robot", "radius", LENGTH, params.robot_radius),
    real!("robot", "density", PER_MM3, params.robot_density),
    real!("robot", "diffusion", DIFFUSIVITY, params.robot_diffusion),
    real!("chemical", "source_flux", FLUX, params.source_flux),
    real!("chemical", "diffusion", DIFFUSIVITY, params.chem_diffusion),
    real!("chemical", "source_conc", PER_UM3, params.c_source),
    real!("chemical", "background_conc", PER_UM3, params.c_background),
    real!("control", "measure_time", TIME, params.measure_time),
    count!("control", "threshold", params.threshold),
    real!("mission", "task_time", TIME, params.task_time),
    count!("mission", "required_detections", params.required_detections),
    count!("mission", "false_detections", params.false_detections),
    real!("numerics", "grid_dr", LENGTH, grid.dr),
    real!("numerics", "grid_dx", LENGTH, grid.dx),
    real!("numerics", "grid_x_min", LENGTH, grid.x_min),
    real!("numerics", "grid_x_max", LENGTH, grid.x_max),
    real!("numerics", "tolerance", NONE, grid.tolerance),
    real!("numerics", "path_step", TIME, numerics.path_step),
    real!("numerics", "mc_dt", TIME, numerics.mc_dt),
];

fn full_key(stem: &str, unit: &str) -> String {
    if unit.is_empty() {
        stem.to_string()
    } else {
        format!("{stem}_{unit}")
    }
}

fn lookup(section: &str, key: &str) -> Option<(&'static KeyDef, f64)> {
    KEYS.iter().filter(|k| k.section == section).find_map(|def| {
        def.units
            .iter()
            .find(|(unit, _)| full_key(def.stem, unit) == key)
            .map(|&(_, scale)| (def, scale))
    })
}

/// Parses a config document without validating the result.
pub fn parse_config(text: &str) -> Result<Config> {
    let mut cfg = Config {
        params: default_params(),
        ..Config::default()
    };
    let mut section: Option<&str> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(format!("malformed section header `{line}`")))?
                .trim();
            section = Some(
                SECTIONS
                    .iter()
                    .copied()
                    .find(|s| *s == name)
                    .ok_or_else(|| err(format!("unknown section [{name}]")))?,
            );
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.ok_or_else(|| err(format!("key `{key}` before any section")))?;
        let (def, scale) =
            lookup(sec, key).ok_or_else(|| err(format!("unknown key `{key}` in [{sec}]")))?;
        match def.slot {
            Slot::Real(get) => {
                let v: f64 = value
                    .parse()
                    .map_err(|_| err(format!("`{key}`: `{value}` is not a number")))?;
                *get(&mut cfg) = v * scale;
            }
            Slot::Count(get) => {
                let v: u32 = value
                    .parse()
                    .map_err(|_| err(format!("`{key}`: `{value}` is not a non-negative integer")))?;
                *get(&mut cfg) = v;
            }
        }
    }
    Ok(cfg)
}

/// Parses and validates a config document.
pub fn load_config(text: &str) -> Result<Config> {
    let cfg = parse_config(text)?;
    let violations = cfg.validate();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Invalid(violations))
    }
}

impl Config {
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = self.params.validate();
        v.extend(self.grid.validate(&self.params));
        if !(self.numerics.path_step > 0.0) {
            v.push(Violation::new("path_step", "path_step > 0"));
        }
        if !(self.numerics.mc_dt > 0.0 && self.numerics.mc_dt <= self.params.measure_time / 10.0) {
            v.push(Violation::new("mc_dt", "0 < mc_dt ≤ T_measure/10"));
        }
        v
    }

    /// Canonical text form; `parse_config(&c.to_config_text()) == c`.
    pub fn to_config_text(&self) -> String {
        let mut scratch = self.clone();
        let mut out = String::new();
        for section in SECTIONS {
            let _ = writeln!(out, "[{section}]");
            for def in KEYS.iter().filter(|k| k.section == section) {
                let key = full_key(def.stem, def.units[0].0);
                match def.slot {
                    Slot::Real(get) => {
                        let _ = writeln!(out, "{key} = {:?}", *get(&mut scratch));
                    }
                    Slot::Count(get) => {
                        let _ = writeln!(out, "{key} = {}", *get(&mut scratch));
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

//! Plain-text run configuration: `[section]` headers, `key = value` lines,
//! `#` comments. Every key has a default so an empty file is a valid run;
//! unknown sections and keys are hard errors so typos surface immediately.

use crate::evolution::{Scheme, SimulationConfig};
use crate::gridw::{Grid, RateParams, SeedShape};
use crate::model::ModelParams;
use crate::profile::SolveOptions;
use crate::spectral::ProbeOptions;
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: unknown key `{key}` in section [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("missing required key: {0}")]
    MissingRequired(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSection {
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub beta0_re: f64,
    pub beta0_im: f64,
    pub beta2_re: f64,
    pub beta2_im: f64,
    pub beta4_re: f64,
    pub beta4_im: f64,
    pub r_max: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            alpha_re: 0.5,
            alpha_im: 0.0,
            beta0_re: -0.6,
            beta0_im: 0.5,
            beta2_re: 1.6,
            beta2_im: 1.0,
            beta4_re: -1.0,
            beta4_im: 1.0,
            r_max: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSection {
    pub half_width: f64,
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { half_width: 200.0, n: 4096 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileSection {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProfileSection {
    fn default() -> Self {
        ProfileSection { tol: 1e-10, max_iter: 80 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DispersionSection {
    pub nu_max: f64,
    pub n_nu: usize,
}

impl Default for DispersionSection {
    fn default() -> Self {
        DispersionSection { nu_max: 8.0, n_nu: 801 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchSection {
    pub s_max: f64,
    pub n_samples: usize,
}

impl Default for BranchSection {
    fn default() -> Self {
        BranchSection { s_max: 0.08, n_samples: 33 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumSection {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub n_re: usize,
    pub n_im: usize,
    pub residual_tol: f64,
    pub iters: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        let p = ProbeOptions::default();
        SpectrumSection {
            re_min: p.re_range.0,
            re_max: p.re_range.1,
            im_min: p.im_range.0,
            im_max: p.im_range.1,
            n_re: p.n_re,
            n_im: p.n_im,
            residual_tol: p.residual_tol,
            iters: p.iters,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolventSection {
    pub s_min: f64,
    pub s_max: f64,
    pub n_s: usize,
    pub k: f64,
    pub mu: f64,
}

impl Default for ResolventSection {
    fn default() -> Self {
        ResolventSection { s_min: 1e-3, s_max: 1e-1, n_s: 7, k: 10.0, mu: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatesSection {
    pub m: f64,
    pub k: f64,
    pub mu: f64,
}

impl Default for RatesSection {
    fn default() -> Self {
        RatesSection { m: 4.75, k: 10.0, mu: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveSection {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub output_stride: usize,
    pub amplitude: f64,
    pub k_decay: f64,
    pub shape: SeedShape,
    /// initial data family: "generic" decaying seed or "shift" of the profile
    pub kind: String,
    pub shift_delta: f64,
}

impl Default for EvolveSection {
    fn default() -> Self {
        EvolveSection {
            dt: 0.01,
            t_final: 65.0,
            scheme: Scheme::Imex2,
            output_stride: 50,
            amplitude: 1e-3,
            k_decay: 15.0,
            shape: SeedShape::Modulated,
            kind: "generic".into(),
            shift_delta: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelsSection {
    pub k: f64,
    pub q: f64,
    pub beta0: f64,
    pub resolution: usize,
}

impl Default for KernelsSection {
    fn default() -> Self {
        KernelsSection { k: 2.0, q: 1.0, beta0: 1.0, resolution: 1024 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GronwallSection {
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
    pub eps: f64,
    pub t_final: f64,
    pub dt: f64,
}

impl Default for GronwallSection {
    fn default() -> Self {
        GronwallSection { p: 2.0, c1: 1.0, c2: 1.0, eps: 1.0 / 36.0, t_final: 120.0, dt: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RemaindersSection {
    pub delta: f64,
    pub pairs: usize,
}

impl Default for RemaindersSection {
    fn default() -> Self {
        RemaindersSection { delta: 0.05, pairs: 100 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepSection {
    /// override axis, e.g. "evolve.amplitude"; values are comma-separated
    pub param: Option<String>,
    pub values: Vec<f64>,
    pub param2: Option<String>,
    pub values2: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    pub model: ModelSection,
    pub grid: GridSection,
    pub profile: ProfileSection,
    pub dispersion: DispersionSection,
    pub branch: BranchSection,
    pub spectrum: SpectrumSection,
    pub resolvent: ResolventSection,
    pub rates: RatesSection,
    pub evolve: EvolveSection,
    pub kernels: KernelsSection,
    pub gronwall: GronwallSection,
    pub remainders: RemaindersSection,
    pub sweep: SweepSection,
}

pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let mut config = Config::default();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| ConfigError::ParseError {
                line,
                message: format!("malformed section header `{content}`"),
            })?;
            section = name.trim().to_string();
            if !KNOWN_SECTIONS.contains(&section.as_str()) {
                return Err(ConfigError::ParseError {
                    line,
                    message: format!("unknown section [{section}]"),
                });
            }
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::ParseError {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if section.is_empty() {
            return Err(ConfigError::ParseError {
                line,
                message: format!("key `{key}` before any [section] header"),
            });
        }
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::ParseError {
                line,
                message: "empty key or value".into(),
            });
        }
        config.set(&section, key, value, line)?;
    }
    config.finish()?;
    Ok(config)
}

const KNOWN_SECTIONS: [&str; 13] = [
    "model",
    "grid",
    "profile",
    "dispersion",
    "branch",
    "spectrum",
    "resolvent",
    "rates",
    "evolve",
    "kernels",
    "gronwall",
    "remainders",
    "sweep",
];

fn parse_f64(value: &str, line: usize) -> Result<f64, ConfigError> {
    value.parse().map_err(|_| ConfigError::ParseError {
        line,
        message: format!("expected a number, got `{value}`"),
    })
}

fn parse_usize(value: &str, line: usize) -> Result<usize, ConfigError> {
    value.parse().map_err(|_| ConfigError::ParseError {
        line,
        message: format!("expected a nonnegative integer, got `{value}`"),
    })
}

fn parse_f64_list(value: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(|v| parse_f64(v.trim(), line)).collect()
}

fn parse_scheme(value: &str, line: usize) -> Result<Scheme, ConfigError> {
    match value {
        "imex1" => Ok(Scheme::Imex1),
        "imex2" => Ok(Scheme::Imex2),
        _ => Err(ConfigError::ParseError {
            line,
            message: format!("scheme must be imex1 or imex2, got `{value}`"),
        }),
    }
}

fn parse_shape(value: &str, line: usize) -> Result<SeedShape, ConfigError> {
    match value {
        "plain" => Ok(SeedShape::Plain),
        "modulated" => Ok(SeedShape::Modulated),
        _ => Err(ConfigError::ParseError {
            line,
            message: format!("shape must be plain or modulated, got `{value}`"),
        }),
    }
}

impl Config {
    fn set(&mut self, section: &str, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let unknown = || ConfigError::UnknownKey {
            line,
            section: section.to_string(),
            key: key.to_string(),
        };
        match section {
            "model" => {
                let slot = match key {
                    "alpha_re" => &mut self.model.alpha_re,
                    "alpha_im" => &mut self.model.alpha_im,
                    "beta0_re" => &mut self.model.beta0_re,
                    "beta0_im" => &mut self.model.beta0_im,
                    "beta2_re" => &mut self.model.beta2_re,
                    "beta2_im" => &mut self.model.beta2_im,
                    "beta4_re" => &mut self.model.beta4_re,
                    "beta4_im" => &mut self.model.beta4_im,
                    "r_max" => &mut self.model.r_max,
                    _ => return Err(unknown()),
                };
                *slot = parse_f64(value, line)?;
            }
            "grid" => match key {
                "half_width" => self.grid.half_width = parse_f64(value, line)?,
                "n" => self.grid.n = parse_usize(value, line)?,
                _ => return Err(unknown()),
            },
            "profile" => match key {
                "tol" => self.profile.tol = parse_f64(value, line)?,
                "max_iter" => self.profile.max_iter = parse_usize(value, line)?,
                _ => return Err(unknown()),
            },
            "dispersion" => match key {
                "nu_max" => self.dispersion.nu_max = parse_f64(value, line)?,
                "n_nu" => self.dispersion.n_nu = parse_usize(value, line)?,
                _ => return Err(unknown()),
            },
            "branch" => match key {
                "s_max" => self.branch.s_max = parse_f64(value, line)?,
                "n_samples" => self.branch.n_samples = parse_usize(value, line)?,
                _ => return Err(unknown()),
            },
            "spectrum" => match key {
                "re_min" => self.spectrum.re_min = parse_f64(value, line)?,
                "re_max" => self.spectrum.re_max = parse_f64(value, line)?,
                "im_min" => self.spectrum.im_min = parse_f64(value, line)?,
                "im_max" => self.spectrum.im_max = parse_f64(value, line)?,
                "n_re" => self.spectrum.n_re = parse_usize(value, line)?,
                "n_im" => self.spectrum.n_im = parse_usize(value, line)?,
                "residual_tol" => self.spectrum.residual_tol = parse_f64(value, line)?,
                "iters" => self.spectrum.iters = parse_usize(value, line)?,
                _ => return Err(unknown()),
            },
            "resolvent" => match key {
                "s_min" => self.resolvent.s_min = parse_f64(value, line)?,
                "s_max" => self.resolvent.s_max = parse_f64(value, line)?,
                "n_s" => self.resolvent.n_s = parse_usize(value, line)?,
                "k" => self.resolvent.k = parse_f64(value, line)?,
                "mu" => self.resolvent.mu = parse_f64(value, line)?,
                _ => return Err(unknown()),
            },
            "rates" => match key {
                "m" => self.rates.m = parse_f64(value, line)?,
                "k" => self.rates.k = parse_f64(value, line)?,
                "mu" => self.rates.mu = parse_f64(value, line)?,
                _ => return Err(unknown()),
            },
            "evolve" => match key {
                "dt" => self.evolve.dt = parse_f64(value, line)?,
                "t_final" => self.evolve.t_final = parse_f64(value, line)?,
                "scheme" => self.evolve.scheme = parse_scheme(value, line)?,
                "output_stride" => self.evolve.output_stride = parse_usize(value, line)?,
                "amplitude" => self.evolve.amplitude = parse_f64(value, line)?,
                "k_decay" => self.evolve.k_decay = parse_f64(value, line)?,
                "shape" => self.evolve.shape = parse_shape(value, line)?,
                "kind" => match value {
                    "generic" | "shift" => self.evolve.kind = value.to_string(),
                    _ => {
                        return Err(ConfigError::ParseError {
                            line,
                            message: format!("kind must be generic or shift, got `{value}`"),
                        })
                    }
                },
                "shift_delta" => self.evolve.shift_delta = parse_f64(value, line)?,
                _ => return Err(unknown()),
            },
            "kernels" => match key {
                "k" => self.kernels.k = parse_f64(value, line)?,
                "q" => self.kernels.q = parse_f64(value, line)?,
                "beta0" => self.kernels.beta0 = parse_f64(value, line)?,
                "resolution" => self.kernels.resolution = parse_usize(value, line)?,
                _ => return Err(unknown()),
            },
            "gronwall" => match key {
                "p" => self.gronwall.p = parse_f64(value, line)?,
                "c1" => self.gronwall.c1 = parse_f64(value, line)?,
                "c2" => self.gronwall.c2 = parse_f64(value, line)?,
                "eps" => self.gronwall.eps = parse_f64(value, line)?,
                "t_final" => self.gronwall.t_final = parse_f64(value, line)?,
                "dt" => self.gronwall.dt = parse_f64(value, line)?,
                _ => return Err(unknown()),
            },
            "remainders" => match key {
                "delta" => self.remainders.delta = parse_f64(value, line)?,
                "pairs" => self.remainders.pairs = parse_usize(value, line)?,
                _ => return Err(unknown()),
            },
            "sweep" => match key {
                "param" => self.sweep.param = Some(value.to_string()),
                "values" => self.sweep.values = parse_f64_list(value, line)?,
                "param2" => self.sweep.param2 = Some(value.to_string()),
                "values2" => self.sweep.values2 = parse_f64_list(value, line)?,
                _ => return Err(unknown()),
            },
            _ => return Err(unknown()),
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), ConfigError> {
        if self.sweep.param.is_some() && self.sweep.values.is_empty() {
            return Err(ConfigError::MissingRequired("[sweep] values".into()));
        }
        if self.sweep.param.is_none() && !self.sweep.values.is_empty() {
            return Err(ConfigError::MissingRequired("[sweep] param".into()));
        }
        if self.sweep.param2.is_some() && self.sweep.values2.is_empty() {
            return Err(ConfigError::MissingRequired("[sweep] values2".into()));
        }
        if self.sweep.param2.is_none() && !self.sweep.values2.is_empty() {
            return Err(ConfigError::MissingRequired("[sweep] param2".into()));
        }
        if self.sweep.param2.is_some() && self.sweep.param.is_none() {
            return Err(ConfigError::MissingRequired("[sweep] param".into()));
        }
        Ok(())
    }

    /// Canonical text form: every section and key in fixed order, so that
    /// parse -> serialize is a normalizing round trip.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[model]");
        let m = &self.model;
        for (k, v) in [
            ("alpha_re", m.alpha_re),
            ("alpha_im", m.alpha_im),
            ("beta0_re", m.beta0_re),
            ("beta0_im", m.beta0_im),
            ("beta2_re", m.beta2_re),
            ("beta2_im", m.beta2_im),
            ("beta4_re", m.beta4_re),
            ("beta4_im", m.beta4_im),
            ("r_max", m.r_max),
        ] {
            let _ = writeln!(out, "{k} = {v:?}");
        }
        let _ = writeln!(out, "\n[grid]");
        let _ = writeln!(out, "half_width = {:?}", self.grid.half_width);
        let _ = writeln!(out, "n = {}", self.grid.n);
        let _ = writeln!(out, "\n[profile]");
        let _ = writeln!(out, "tol = {:?}", self.profile.tol);
        let _ = writeln!(out, "max_iter = {}", self.profile.max_iter);
        let _ = writeln!(out, "\n[dispersion]");
        let _ = writeln!(out, "nu_max = {:?}", self.dispersion.nu_max);
        let _ = writeln!(out, "n_nu = {}", self.dispersion.n_nu);
        let _ = writeln!(out, "\n[branch]");
        let _ = writeln!(out, "s_max = {:?}", self.branch.s_max);
        let _ = writeln!(out, "n_samples = {}", self.branch.n_samples);
        let _ = writeln!(out, "\n[spectrum]");
        let s = &self.spectrum;
        let _ = writeln!(out, "re_min = {:?}", s.re_min);
        let _ = writeln!(out, "re_max = {:?}", s.re_max);
        let _ = writeln!(out, "im_min = {:?}", s.im_min);
        let _ = writeln!(out, "im_max = {:?}", s.im_max);
        let _ = writeln!(out, "n_re = {}", s.n_re);
        let _ = writeln!(out, "n_im = {}", s.n_im);
        let _ = writeln!(out, "residual_tol = {:?}", s.residual_tol);
        let _ = writeln!(out, "iters = {}", s.iters);
        let _ = writeln!(out, "\n[resolvent]");
        let r = &self.resolvent;
        let _ = writeln!(out, "s_min = {:?}", r.s_min);
        let _ = writeln!(out, "s_max = {:?}", r.s_max);
        let _ = writeln!(out, "n_s = {}", r.n_s);
        let _ = writeln!(out, "k = {:?}", r.k);
        let _ = writeln!(out, "mu = {:?}", r.mu);
        let _ = writeln!(out, "\n[rates]");
        let _ = writeln!(out, "m = {:?}", self.rates.m);
        let _ = writeln!(out, "k = {:?}", self.rates.k);
        let _ = writeln!(out, "mu = {:?}", self.rates.mu);
        let _ = writeln!(out, "\n[evolve]");
        let e = &self.evolve;
        let _ = writeln!(out, "dt = {:?}", e.dt);
        let _ = writeln!(out, "t_final = {:?}", e.t_final);
        let _ = writeln!(
            out,
            "scheme = {}",
            match e.scheme {
                Scheme::Imex1 => "imex1",
                Scheme::Imex2 => "imex2",
            }
        );
        let _ = writeln!(out, "output_stride = {}", e.output_stride);
        let _ = writeln!(out, "amplitude = {:?}", e.amplitude);
        let _ = writeln!(out, "k_decay = {:?}", e.k_decay);
        let _ = writeln!(
            out,
            "shape = {}",
            match e.shape {
                SeedShape::Plain => "plain",
                SeedShape::Modulated => "modulated",
            }
        );
        let _ = writeln!(out, "kind = {}", e.kind);
        let _ = writeln!(out, "shift_delta = {:?}", e.shift_delta);
        let _ = writeln!(out, "\n[kernels]");
        let _ = writeln!(out, "k = {:?}", self.kernels.k);
        let _ = writeln!(out, "q = {:?}", self.kernels.q);
        let _ = writeln!(out, "beta0 = {:?}", self.kernels.beta0);
        let _ = writeln!(out, "resolution = {}", self.kernels.resolution);
        let _ = writeln!(out, "\n[gronwall]");
        let g = &self.gronwall;
        let _ = writeln!(out, "p = {:?}", g.p);
        let _ = writeln!(out, "c1 = {:?}", g.c1);
        let _ = writeln!(out, "c2 = {:?}", g.c2);
        let _ = writeln!(out, "eps = {:?}", g.eps);
        let _ = writeln!(out, "t_final = {:?}", g.t_final);
        let _ = writeln!(out, "dt = {:?}", g.dt);
        let _ = writeln!(out, "\n[remainders]");
        let _ = writeln!(out, "delta = {:?}", self.remainders.delta);
        let _ = writeln!(out, "pairs = {}", self.remainders.pairs);
        if let Some(param) = &self.sweep.param {
            let _ = writeln!(out, "\n[sweep]");
            let _ = writeln!(out, "param = {param}");
            let values: Vec<String> = self.sweep.values.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "values = {}", values.join(", "));
            if let Some(param2) = &self.sweep.param2 {
                let _ = writeln!(out, "param2 = {param2}");
                let values2: Vec<String> =
                    self.sweep.values2.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(out, "values2 = {}", values2.join(", "));
            }
        }
        out
    }

    pub fn model_params(&self) -> ModelParams {
        let m = &self.model;
        let mut params = ModelParams::quintic(
            Complex64::new(m.alpha_re, m.alpha_im),
            Complex64::new(m.beta0_re, m.beta0_im),
            Complex64::new(m.beta2_re, m.beta2_im),
            Complex64::new(m.beta4_re, m.beta4_im),
        );
        params.r_max = m.r_max;
        params
    }

    pub fn make_grid(&self) -> Result<Grid, String> {
        Grid::new(self.grid.half_width, self.grid.n).map_err(|e| e.to_string())
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol_newton: self.profile.tol,
            max_iter: self.profile.max_iter,
            ..SolveOptions::default()
        }
    }

    pub fn rate_params(&self) -> Result<RateParams, String> {
        RateParams::new(self.rates.m, self.rates.k, self.rates.mu).map_err(|e| e.to_string())
    }

    pub fn probe_options(&self) -> ProbeOptions {
        let s = &self.spectrum;
        ProbeOptions {
            re_range: (s.re_min, s.re_max),
            im_range: (s.im_min, s.im_max),
            n_re: s.n_re,
            n_im: s.n_im,
            residual_tol: s.residual_tol,
            iters: s.iters,
            ..ProbeOptions::default()
        }
    }

    pub fn simulation_config(&self) -> Result<SimulationConfig, String> {
        let grid = self.make_grid()?;
        let rates = self.rate_params()?;
        Ok(SimulationConfig {
            grid,
            dt: self.evolve.dt,
            t_final: self.evolve.t_final,
            scheme: self.evolve.scheme,
            rates,
            output_stride: self.evolve.output_stride,
            dt_max: 0.3,
        })
    }

    /// Applies one `section.key = value` numeric override (sweep cells).
    pub fn apply_override(&mut self, dotted: &str, value: f64) -> Result<(), ConfigError> {
        let (section, key) = dotted.split_once('.').ok_or_else(|| ConfigError::ParseError {
            line: 0,
            message: format!("override `{dotted}` must look like section.key"),
        })?;
        self.set(section, key, &format!("{value:?}"), 0)
    }
}

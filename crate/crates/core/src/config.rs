//! Flat `key = value` experiment configuration with dotted section names.
//!
//! Every key is validated before anything is computed. Keys that do not
//! apply to the selected kinds are rejected like unknown keys. The effective
//! configuration, defaults included, serializes back with
//! [`RunConfig::to_text`]; parsing that text yields the same configuration.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::fmt::fmt_f64;
use crate::geometry::Vec3;
use crate::scheme::NumericalFluxKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown or inapplicable key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxKind {
    /// `h = u (c·x)`: solid-body rotation about `c`.
    Linear,
    /// `h = u²/2 (c·x)`.
    Burgers,
    /// `h = sin(u) (c·x)`.
    Trig,
    /// Linear flux with an explicitly given axis.
    CustomAxis,
    /// `u` times the tangential projection of the constant field `c`. Not a
    /// gradient flux and not divergence free; a compatibility-check fixture.
    Projected,
}

impl FluxKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FluxKind::Linear => "linear",
            FluxKind::Burgers => "burgers",
            FluxKind::Trig => "trig",
            FluxKind::CustomAxis => "custom-axis",
            FluxKind::Projected => "projected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxConfig {
    pub kind: FluxKind,
    /// As written in the file; fluxes use [`FluxConfig::unit_axis`].
    pub axis: Vec3,
}

impl FluxConfig {
    pub fn unit_axis(&self) -> Vec3 {
        let n = self.axis.norm();
        Vec3::new(self.axis.x1 / n, self.axis.x2 / n, self.axis.x3 / n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitConfig {
    Constant { value: f64 },
    GaussianBump { center_lambda: f64, center_phi: f64, kappa: f64, amplitude: f64, background: f64 },
    BandStep { phi_lo: f64, phi_hi: f64, inside: f64, outside: f64 },
    TwoBumps { center_lambda: f64, center_phi: f64, separation: f64, kappa: f64, amplitude: f64, background: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshConfig {
    pub n_bands: usize,
    pub n_lon_equator: usize,
    /// Coarsening threshold; 0 disables coarsening.
    pub merge_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeSection {
    pub numerical_flux: NumericalFluxKind,
    pub order: u8,
    pub cfl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeConfig {
    pub t_end: f64,
    pub n_outputs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub prefix: String,
    pub mesh_dump: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TorusFluxKind {
    Burgers,
    Exp,
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TorusWeightKind {
    One,
    Sine { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TorusInitKind {
    Sine { mean: f64, amplitude: f64 },
    Step { high: f64, low: f64 },
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TorusConfig {
    pub flux: TorusFluxKind,
    pub weight: TorusWeightKind,
    pub init: TorusInitKind,
    pub t_end: f64,
    pub cfl: f64,
    pub resolutions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    pub flux: FluxConfig,
    pub init: InitConfig,
    pub scheme: SchemeSection,
    pub time: TimeConfig,
    pub output: OutputConfig,
    /// `(n_bands, n_lon_equator)` pairs for `converge`.
    pub converge_resolutions: Vec<(usize, usize)>,
    pub torus: TorusConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mesh: MeshConfig { n_bands: 16, n_lon_equator: 32, merge_threshold: 0.5 },
            flux: FluxConfig { kind: FluxKind::Linear, axis: Vec3::E3 },
            init: InitConfig::GaussianBump {
                center_lambda: 0.0,
                center_phi: 0.0,
                kappa: 0.5,
                amplitude: 1.0,
                background: 0.0,
            },
            scheme: SchemeSection { numerical_flux: NumericalFluxKind::Godunov, order: 1, cfl: 0.45 },
            time: TimeConfig { t_end: PI / 2.0, n_outputs: 4 },
            output: OutputConfig { directory: PathBuf::from("out"), prefix: "run".into(), mesh_dump: false },
            converge_resolutions: vec![(8, 16), (16, 32), (32, 64), (64, 128)],
            torus: TorusConfig {
                flux: TorusFluxKind::Burgers,
                weight: TorusWeightKind::One,
                init: TorusInitKind::Sine { mean: 0.0, amplitude: 1.0 },
                t_end: 0.5,
                cfl: 0.9,
                resolutions: vec![64, 128, 256, 512],
            },
        }
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: i + 1, msg: format!("expected `key = value`, got `{line}`") });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || !k.contains('.') {
                return Err(ConfigError::Syntax { line: i + 1, msg: format!("keys are `section.name`, got `{k}`") });
            }
            if map.insert(k.to_string(), (i + 1, v.to_string())).is_some() {
                return Err(ConfigError::Syntax { line: i + 1, msg: format!("duplicate key `{k}`") });
            }
        }
        Ok(Self { map })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key).map(|(_, v)| v)
    }

    fn get<T>(&mut self, key: &str, default: T, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => parse(&v).map_err(|msg| ConfigError::Invalid { key: key.into(), msg }),
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.get(key, default, parse_f64)
    }

    fn finish(self) -> Result<(), ConfigError> {
        // Report in file order.
        match self.map.into_iter().min_by_key(|(_, (line, _))| *line) {
            Some((k, _)) => Err(ConfigError::UnknownKey(k)),
            None => Ok(()),
        }
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.parse().map_err(|_| format!("`{s}` is not a non-negative integer"))
}

fn parse_axis(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma separated components, got `{s}`"));
    }
    let c: Vec<f64> = parts.iter().map(|p| parse_f64(p)).collect::<Result<_, _>>()?;
    Ok(Vec3::new(c[0], c[1], c[2]))
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let v: Vec<T> = s.split(',').map(|p| item(p.trim())).collect::<Result<_, _>>()?;
    if v.is_empty() {
        return Err("empty list".into());
    }
    Ok(v)
}

fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('x').ok_or_else(|| format!("expected `BANDSxLON`, got `{s}`"))?;
    Ok((parse_usize(a.trim())?, parse_usize(b.trim())?))
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), msg: msg.into() }
}

impl RunConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let d = RunConfig::default();
        let mut e = Entries::parse(text)?;

        let mesh = MeshConfig {
            n_bands: e.get("mesh.n_bands", d.mesh.n_bands, parse_usize)?,
            n_lon_equator: e.get("mesh.n_lon_equator", d.mesh.n_lon_equator, parse_usize)?,
            merge_threshold: e.f64("mesh.merge_threshold", d.mesh.merge_threshold)?,
        };
        if mesh.n_bands < 2 {
            return Err(invalid("mesh.n_bands", "need at least 2 bands"));
        }
        if mesh.n_lon_equator < 4 || !mesh.n_lon_equator.is_multiple_of(2) {
            return Err(invalid("mesh.n_lon_equator", "need an even count of at least 4"));
        }
        if !(mesh.merge_threshold == 0.0 || (mesh.merge_threshold > 0.0 && mesh.merge_threshold < 1.0)) {
            return Err(invalid("mesh.merge_threshold", "must be 0 (no coarsening) or lie in (0, 1)"));
        }

        let kind = match e.take("flux.kind").as_deref() {
            None | Some("linear") => FluxKind::Linear,
            Some("burgers") => FluxKind::Burgers,
            Some("trig") => FluxKind::Trig,
            Some("custom-axis") => FluxKind::CustomAxis,
            Some("projected") => FluxKind::Projected,
            Some(other) => return Err(invalid("flux.kind", format!("unknown flux `{other}`"))),
        };
        let axis = match e.take("flux.axis") {
            Some(v) => parse_axis(&v).map_err(|m| invalid("flux.axis", m))?,
            None if kind == FluxKind::CustomAxis => return Err(invalid("flux.axis", "custom-axis requires an axis")),
            None => d.flux.axis,
        };
        if axis.norm() == 0.0 {
            return Err(invalid("flux.axis", "axis must be non-zero"));
        }
        let flux = FluxConfig { kind, axis };

        let init = match e.take("init.kind").as_deref() {
            Some("constant") => InitConfig::Constant { value: e.f64("init.value", 1.0)? },
            None | Some("gaussian_bump") => InitConfig::GaussianBump {
                center_lambda: e.f64("init.center_lambda", 0.0)?,
                center_phi: e.f64("init.center_phi", 0.0)?,
                kappa: e.f64("init.kappa", 0.5)?,
                amplitude: e.f64("init.amplitude", 1.0)?,
                background: e.f64("init.background", 0.0)?,
            },
            Some("band_step") => InitConfig::BandStep {
                phi_lo: e.f64("init.phi_lo", -PI / 6.0)?,
                phi_hi: e.f64("init.phi_hi", PI / 6.0)?,
                inside: e.f64("init.inside", 1.0)?,
                outside: e.f64("init.outside", 0.0)?,
            },
            Some("two_bumps") => InitConfig::TwoBumps {
                center_lambda: e.f64("init.center_lambda", 0.0)?,
                center_phi: e.f64("init.center_phi", 0.0)?,
                separation: e.f64("init.separation", PI / 2.0)?,
                kappa: e.f64("init.kappa", 0.5)?,
                amplitude: e.f64("init.amplitude", 1.0)?,
                background: e.f64("init.background", 0.0)?,
            },
            Some(other) => return Err(invalid("init.kind", format!("unknown initial data `{other}`"))),
        };
        match init {
            InitConfig::GaussianBump { kappa, center_phi, .. } | InitConfig::TwoBumps { kappa, center_phi, .. } => {
                if kappa <= 0.0 {
                    return Err(invalid("init.kappa", "must be positive"));
                }
                if center_phi.abs() > PI / 2.0 {
                    return Err(invalid("init.center_phi", "must lie in [-pi/2, pi/2]"));
                }
            }
            InitConfig::BandStep { phi_lo, phi_hi, .. } if phi_lo >= phi_hi => {
                return Err(invalid("init.phi_hi", "must exceed init.phi_lo"));
            }
            _ => {}
        }

        let numerical_flux = match e.take("scheme.numerical_flux").as_deref() {
            None | Some("godunov") => NumericalFluxKind::Godunov,
            Some("lax_friedrichs") => NumericalFluxKind::LaxFriedrichs,
            Some(other) => return Err(invalid("scheme.numerical_flux", format!("unknown flux `{other}`"))),
        };
        let scheme = SchemeSection {
            numerical_flux,
            order: e.get("scheme.order", d.scheme.order, |s| match s {
                "1" => Ok(1),
                "2" => Ok(2),
                _ => Err(format!("order must be 1 or 2, got `{s}`")),
            })?,
            cfl: e.f64("scheme.cfl", d.scheme.cfl)?,
        };
        if !(scheme.cfl > 0.0 && scheme.cfl <= 1.0) {
            return Err(invalid("scheme.cfl", "must lie in (0, 1]"));
        }
        if scheme.order == 2 && scheme.cfl > 0.5 {
            return Err(invalid("scheme.cfl", "second order requires cfl <= 0.5"));
        }
        if let Some(v) = e.take("scheme.limiter") {
            if v != "minmod" {
                return Err(invalid("scheme.limiter", format!("only minmod is available, got `{v}`")));
            }
        }

        let time = TimeConfig {
            t_end: e.f64("time.t_end", d.time.t_end)?,
            n_outputs: e.get("time.n_outputs", d.time.n_outputs, parse_usize)?,
        };
        if time.t_end < 0.0 {
            return Err(invalid("time.t_end", "must be non-negative"));
        }
        if time.n_outputs == 0 {
            return Err(invalid("time.n_outputs", "must be at least 1"));
        }

        let output = OutputConfig {
            directory: e.take("output.directory").map(PathBuf::from).unwrap_or(d.output.directory),
            prefix: e.take("output.prefix").unwrap_or(d.output.prefix),
            mesh_dump: e.get("output.mesh_dump", false, |s| match s {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(format!("expected true or false, got `{s}`")),
            })?,
        };
        if output.prefix.is_empty() || output.prefix.contains(['/', '\\']) {
            return Err(invalid("output.prefix", "must be a non-empty file name prefix"));
        }

        let converge_resolutions =
            e.get("converge.resolutions", d.converge_resolutions, |s| parse_list(s, parse_resolution))?;

        let torus = parse_torus(&mut e, d.torus)?;
        e.finish()?;
        Ok(Self { mesh, flux, init, scheme, time, output, converge_resolutions, torus })
    }

    /// The configuration as parseable text, every key explicit.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let f = |x: f64| fmt_f64(x);
        kv("mesh.n_bands", self.mesh.n_bands.to_string());
        kv("mesh.n_lon_equator", self.mesh.n_lon_equator.to_string());
        kv("mesh.merge_threshold", f(self.mesh.merge_threshold));
        kv("flux.kind", self.flux.kind.as_str().into());
        let a = self.flux.axis;
        kv("flux.axis", format!("{},{},{}", f(a.x1), f(a.x2), f(a.x3)));
        match self.init {
            InitConfig::Constant { value } => {
                kv("init.kind", "constant".into());
                kv("init.value", f(value));
            }
            InitConfig::GaussianBump { center_lambda, center_phi, kappa, amplitude, background } => {
                kv("init.kind", "gaussian_bump".into());
                kv("init.center_lambda", f(center_lambda));
                kv("init.center_phi", f(center_phi));
                kv("init.kappa", f(kappa));
                kv("init.amplitude", f(amplitude));
                kv("init.background", f(background));
            }
            InitConfig::BandStep { phi_lo, phi_hi, inside, outside } => {
                kv("init.kind", "band_step".into());
                kv("init.phi_lo", f(phi_lo));
                kv("init.phi_hi", f(phi_hi));
                kv("init.inside", f(inside));
                kv("init.outside", f(outside));
            }
            InitConfig::TwoBumps { center_lambda, center_phi, separation, kappa, amplitude, background } => {
                kv("init.kind", "two_bumps".into());
                kv("init.center_lambda", f(center_lambda));
                kv("init.center_phi", f(center_phi));
                kv("init.separation", f(separation));
                kv("init.kappa", f(kappa));
                kv("init.amplitude", f(amplitude));
                kv("init.background", f(background));
            }
        }
        kv("scheme.numerical_flux", self.scheme.numerical_flux.as_str().into());
        kv("scheme.order", self.scheme.order.to_string());
        kv("scheme.cfl", f(self.scheme.cfl));
        kv("scheme.limiter", "minmod".into());
        kv("time.t_end", f(self.time.t_end));
        kv("time.n_outputs", self.time.n_outputs.to_string());
        kv("output.directory", self.output.directory.display().to_string());
        kv("output.prefix", self.output.prefix.clone());
        kv("output.mesh_dump", self.output.mesh_dump.to_string());
        let res: Vec<String> = self.converge_resolutions.iter().map(|(a, b)| format!("{a}x{b}")).collect();
        kv("converge.resolutions", res.join(","));
        let t = &self.torus;
        kv(
            "torus.flux",
            match t.flux {
                TorusFluxKind::Burgers => "burgers",
                TorusFluxKind::Exp => "exp",
                TorusFluxKind::Cubic => "cubic",
            }
            .into(),
        );
        match t.weight {
            TorusWeightKind::One => kv("torus.weight", "one".into()),
            TorusWeightKind::Sine { amplitude } => {
                kv("torus.weight", "sine".into());
                kv("torus.weight_amplitude", f(amplitude));
            }
        }
        match t.init {
            TorusInitKind::Sine { mean, amplitude } => {
                kv("torus.init", "sine".into());
                kv("torus.mean", f(mean));
                kv("torus.amplitude", f(amplitude));
            }
            TorusInitKind::Step { high, low } => {
                kv("torus.init", "step".into());
                kv("torus.high", f(high));
                kv("torus.low", f(low));
            }
            TorusInitKind::Constant { value } => {
                kv("torus.init", "constant".into());
                kv("torus.value", f(value));
            }
        }
        kv("torus.t_end", f(t.t_end));
        kv("torus.cfl", f(t.cfl));
        let res: Vec<String> = t.resolutions.iter().map(|n| n.to_string()).collect();
        kv("torus.resolutions", res.join(","));
        s
    }
}

fn parse_torus(e: &mut Entries, d: TorusConfig) -> Result<TorusConfig, ConfigError> {
    let flux = match e.take("torus.flux").as_deref() {
        None | Some("burgers") => TorusFluxKind::Burgers,
        Some("exp") => TorusFluxKind::Exp,
        Some("cubic") => TorusFluxKind::Cubic,
        Some(other) => return Err(invalid("torus.flux", format!("unknown flux `{other}`"))),
    };
    let weight = match e.take("torus.weight").as_deref() {
        None | Some("one") => TorusWeightKind::One,
        Some("sine") => TorusWeightKind::Sine { amplitude: e.f64("torus.weight_amplitude", 0.5)? },
        Some(other) => return Err(invalid("torus.weight", format!("unknown weight `{other}`"))),
    };
    let init = match e.take("torus.init").as_deref() {
        None | Some("sine") => {
            TorusInitKind::Sine { mean: e.f64("torus.mean", 0.0)?, amplitude: e.f64("torus.amplitude", 1.0)? }
        }
        Some("step") => TorusInitKind::Step { high: e.f64("torus.high", 1.0)?, low: e.f64("torus.low", 0.0)? },
        Some("constant") => TorusInitKind::Constant { value: e.f64("torus.value", 1.0)? },
        Some(other) => return Err(invalid("torus.init", format!("unknown initial data `{other}`"))),
    };
    let t = TorusConfig {
        flux,
        weight,
        init,
        t_end: e.f64("torus.t_end", d.t_end)?,
        cfl: e.f64("torus.cfl", d.cfl)?,
        resolutions: e.get("torus.resolutions", d.resolutions, |s| parse_list(s, parse_usize))?,
    };
    if !(t.t_end > 0.0) {
        return Err(invalid("torus.t_end", "must be positive"));
    }
    if !(t.cfl > 0.0 && t.cfl <= 1.0) {
        return Err(invalid("torus.cfl", "must lie in (0, 1]"));
    }
    if t.resolutions.iter().any(|&n| n < 2) {
        return Err(invalid("torus.resolutions", "resolutions must be at least 2"));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn echo_is_a_fixed_point() {
        let text = "\
# comment
mesh.n_bands = 8
mesh.n_lon_equator = 16
flux.kind = custom-axis
flux.axis = 0.1, 0.2, 0.30000000000000004
init.kind = two_bumps
init.kappa = 12.5
scheme.numerical_flux = lax_friedrichs
scheme.order = 2
scheme.cfl = 0.4
time.t_end = 0.1
torus.weight = sine
torus.weight_amplitude = 0.25
torus.init = step
";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.flux.axis.x3, 0.30000000000000004);
        let echo = c.to_text();
        let c2 = RunConfig::parse(&echo).unwrap();
        assert_eq!(c, c2);
        assert_eq!(echo, c2.to_text());
    }

    #[test]
    fn rejects_unknown_and_inapplicable_keys() {
        assert_eq!(RunConfig::parse("mesh.bands = 3").unwrap_err(), ConfigError::UnknownKey("mesh.bands".into()));
        // kappa does not apply to constant data.
        let e = RunConfig::parse("init.kind = constant\ninit.kappa = 3").unwrap_err();
        assert_eq!(e, ConfigError::UnknownKey("init.kappa".into()));
        let e = RunConfig::parse("torus.weight_amplitude = 0.2").unwrap_err();
        assert_eq!(e, ConfigError::UnknownKey("torus.weight_amplitude".into()));
    }

    #[test]
    fn validates_ranges() {
        for bad in [
            "scheme.order = 2\nscheme.cfl = 0.6",
            "scheme.cfl = 0",
            "mesh.n_lon_equator = 7",
            "mesh.merge_threshold = 1",
            "flux.kind = custom-axis",
            "flux.axis = 0,0,0",
            "time.n_outputs = 0",
            "init.kind = band_step\ninit.phi_lo = 1\ninit.phi_hi = 0",
            "scheme.numerical_flux = upwind",
            "time.t_end = nan",
            "no equals sign",
            "mesh.n_bands = 4\nmesh.n_bands = 8",
        ] {
            assert!(RunConfig::parse(bad).is_err(), "accepted: {bad}");
        }
    }
}

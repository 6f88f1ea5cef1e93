//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Optional settings take the value `auto`. The manifest written by every run
//! uses the same syntax, so a manifest can be fed back as a configuration.

use std::fmt;
use std::str::FromStr;

use metastab_core::model::RawParams;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: `{value}`")]
    BadValue { key: String, value: String },
    #[error("manifest has no `command` entry")]
    MissingCommand,
}

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl FromStr for $name {
            type Err = ();
            fn from_str(s: &str) -> Result<Self, ()> {
                match s { $($text => Ok($name::$variant),)+ _ => Err(()) }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(Command {
    Validate => "validate",
    Simulate => "simulate",
    Flow => "flow",
    Control => "control",
    Lyapunov => "lyapunov",
    Action => "action",
    Costs => "costs",
    Classify => "classify",
    Invariant => "invariant",
});

keyword_enum!(MethodChoice { Integral => "integral", PathOpt => "pathopt", Both => "both" });

keyword_enum!(StartChoice { Fixed => "fixed", Alternate => "alternate" });

keyword_enum!(DirectionChoice { Reverse => "reverse", Forward => "forward" });

keyword_enum!(
    /// Input of the `control` command.
    ControlChoice { Zero => "zero", Extremal => "extremal", Constant => "constant" }
);

/// Every setting a run can read, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: RawParams,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub x0: f64,
    pub y0: f64,
    pub n_paths: usize,
    pub burn_in_fraction: f64,
    pub start: StartChoice,
    /// Band half-width; `None` picks the default for the parameters.
    pub delta: Option<f64>,
    pub radius: f64,
    /// Keep every `stride`-th node of written trajectories.
    pub stride: usize,
    pub method: MethodChoice,
    pub nodes: usize,
    pub horizon: Option<f64>,
    pub w0: f64,
    pub direction: DirectionChoice,
    pub control: ControlChoice,
    /// Multiple of the lower gain bound used by the constant control.
    pub gain_factor: f64,
    pub alpha: Option<f64>,
    pub grid: usize,
    pub half_width: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: RawParams::default(),
            dt: 1e-3,
            t_final: 10.0,
            seed: 0,
            x0: 1.0,
            y0: 0.0,
            n_paths: 1,
            burn_in_fraction: 0.1,
            start: StartChoice::Alternate,
            delta: None,
            radius: 3.0,
            stride: 1,
            method: MethodChoice::Integral,
            nodes: 400,
            horizon: None,
            w0: 0.6,
            direction: DirectionChoice::Reverse,
            control: ControlChoice::Extremal,
            gain_factor: 1.01,
            alpha: None,
            grid: 601,
            half_width: 3.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
    })
}

fn parse_auto(key: &str, value: &str) -> Result<Option<f64>, ConfigError> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".into(), |x| x.to_string())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let p = &mut self.params;
        match key {
            "lambda1" => p.lambda1 = parse(key, value)?,
            "lambda2" => p.lambda2 = parse(key, value)?,
            "lambda3" => p.lambda3 = parse(key, value)?,
            "sigma0" => p.sigma0 = parse(key, value)?,
            "sigma1" => p.sigma1 = parse(key, value)?,
            "theta" => p.theta = parse(key, value)?,
            "epsilon" => p.epsilon = parse(key, value)?,
            "epsilon0" => p.epsilon0 = parse(key, value)?,
            "dt" => self.dt = parse(key, value)?,
            "t_final" => self.t_final = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "x0" => self.x0 = parse(key, value)?,
            "y0" => self.y0 = parse(key, value)?,
            "n_paths" => self.n_paths = parse(key, value)?,
            "burn_in_fraction" => self.burn_in_fraction = parse(key, value)?,
            "start" => self.start = parse(key, value)?,
            "delta" => self.delta = parse_auto(key, value)?,
            "radius" => self.radius = parse(key, value)?,
            "stride" => self.stride = parse(key, value)?,
            "method" => self.method = parse(key, value)?,
            "nodes" => self.nodes = parse(key, value)?,
            "horizon" => self.horizon = parse_auto(key, value)?,
            "w0" => self.w0 = parse(key, value)?,
            "direction" => self.direction = parse(key, value)?,
            "control" => self.control = parse(key, value)?,
            "gain_factor" => self.gain_factor = parse(key, value)?,
            "alpha" => self.alpha = parse_auto(key, value)?,
            "grid" => self.grid = parse(key, value)?,
            "half_width" => self.half_width = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// All settings in a fixed order, values printed so they parse back exactly.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let p = &self.params;
        vec![
            ("lambda1", p.lambda1.to_string()),
            ("lambda2", p.lambda2.to_string()),
            ("lambda3", p.lambda3.to_string()),
            ("sigma0", p.sigma0.to_string()),
            ("sigma1", p.sigma1.to_string()),
            ("theta", p.theta.to_string()),
            ("epsilon", p.epsilon.to_string()),
            ("epsilon0", p.epsilon0.to_string()),
            ("dt", self.dt.to_string()),
            ("t_final", self.t_final.to_string()),
            ("seed", self.seed.to_string()),
            ("x0", self.x0.to_string()),
            ("y0", self.y0.to_string()),
            ("n_paths", self.n_paths.to_string()),
            ("burn_in_fraction", self.burn_in_fraction.to_string()),
            ("start", self.start.to_string()),
            ("delta", auto(self.delta)),
            ("radius", self.radius.to_string()),
            ("stride", self.stride.to_string()),
            ("method", self.method.to_string()),
            ("nodes", self.nodes.to_string()),
            ("horizon", auto(self.horizon)),
            ("w0", self.w0.to_string()),
            ("direction", self.direction.to_string()),
            ("control", self.control.to_string()),
            ("gain_factor", self.gain_factor.to_string()),
            ("alpha", auto(self.alpha)),
            ("grid", self.grid.to_string()),
            ("half_width", self.half_width.to_string()),
        ]
    }

    /// Applies `key=value` override strings in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for (i, o) in overrides.iter().enumerate() {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }
}

/// Splits a document into `(key, value)` entries.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: i + 1 })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Applies a configuration document on top of `base`. A `command` entry is
/// returned rather than applied.
pub fn apply_document(base: &mut RunConfig, text: &str) -> Result<Option<Command>, ConfigError> {
    let mut command = None;
    for (k, v) in parse_entries(text)? {
        if k == "command" {
            command = Some(parse(&k, &v)?);
        } else {
            base.set(&k, &v)?;
        }
    }
    Ok(command)
}

/// Manifest text: the command followed by every resolved setting.
pub fn manifest_text(command: Command, config: &RunConfig) -> String {
    let mut s = String::from("# metastab run manifest\n");
    s.push_str(&format!("command = {command}\n"));
    for (k, v) in config.pairs() {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<(Command, RunConfig), ConfigError> {
    let mut config = RunConfig::default();
    let command = apply_document(&mut config, text)?.ok_or(ConfigError::MissingCommand)?;
    Ok((command, config))
}

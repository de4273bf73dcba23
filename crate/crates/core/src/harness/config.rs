//! `key = value` configuration files.
//!
//! ```text
//! # comments start with '#'
//! dim = 1                 # 1, 2 or 3
//! fourier_cutoff = 8      # K
//! hermite_cutoff = 16     # M (≥ 2)
//! sobolev_order = 3       # N
//! dt = 0.001
//! t_end = 10
//! report_interval = 0.01  # integer multiple of dt; defaults to 10·dt
//! ic = random_smooth      # zero | single_mode | random_smooth
//! ic_amplitude = 0.01
//! ic_seed = 7
//! ic_decay = 4            # random_smooth: magnitude a(1+|k|)^-p 2^-|m|
//! ic_energy = 1e-4        # random_smooth: rescale so that Ẽ_N(0) equals this
//! ic_k = 1,0,0            # single_mode wavevector
//! ic_m = 2,0,0            # single_mode Hermite index
//! lambda0 = computed      # computed | computed_p0 | <number>
//! scheme = strang_rk4     # strang_rk4 | lawson_rk4 | imex_euler
//! rhs = full              # full | linearized
//! cfl_factor = 1
//! out_dir = out
//! checkpoint_every = 0    # reports between checkpoints, 0 = off
//! epsilon0 = 1e-3         # optional smallness threshold for E_N(0)
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dynamics::{RhsMode, Scheme};
use crate::hermite::CoercivityMode;
use crate::state::{InitialCondition, Lambda0Choice, SimConfig, Wavevector};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{msg} (line {line})")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

const KEYS: &[&str] = &[
    "dim",
    "fourier_cutoff",
    "hermite_cutoff",
    "sobolev_order",
    "dt",
    "t_end",
    "report_interval",
    "ic",
    "ic_amplitude",
    "ic_seed",
    "ic_decay",
    "ic_energy",
    "ic_k",
    "ic_m",
    "lambda0",
    "scheme",
    "rhs",
    "cfl_factor",
    "out_dir",
    "checkpoint_every",
    "epsilon0",
];

struct Entries {
    map: HashMap<String, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<(usize, T)>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(|x| Some((line, x))).map_err(|_| ConfigError::Line {
                line,
                msg: format!("cannot parse {key} = {v:?}"),
            }),
        }
    }
}

fn fail<T>(line: usize, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Line { line, msg: msg.into() })
}

fn parse_components(line: usize, key: &str, v: &str) -> Result<Vec<i64>, ConfigError> {
    v.split(',')
        .map(|p| p.trim().parse::<i64>())
        .collect::<Result<Vec<_>, _>>()
        .or_else(|_| fail(line, format!("{key} must be a comma-separated integer list (got {v:?})")))
}

/// Parses and validates a configuration; missing keys take the documented defaults.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return fail(line, format!("expected `key = value`, got {body:?}"));
        };
        let key = key.trim();
        let value = value.trim();
        if !KEYS.contains(&key) {
            return fail(line, format!("unknown key {key:?}"));
        }
        if value.is_empty() {
            return fail(line, format!("missing value for {key}"));
        }
        if let Some((first, _)) = map.insert(key.to_string(), (line, value.to_string())) {
            return fail(line, format!("duplicate key {key} (first set on line {first})"));
        }
    }
    let e = Entries { map };
    let mut c = SimConfig::default();

    if let Some((line, v)) = e.get::<usize>("dim")? {
        if !(1..=3).contains(&v) {
            return fail(line, format!("dim must be 1, 2 or 3 (got {v})"));
        }
        c.dim = v;
    }
    if let Some((line, v)) = e.get::<usize>("fourier_cutoff")? {
        if v < 1 {
            return fail(line, "fourier_cutoff must be at least 1");
        }
        c.fourier_cutoff = v;
    }
    if let Some((line, v)) = e.get::<usize>("hermite_cutoff")? {
        if v < 2 {
            return fail(
                line,
                format!("hermite_cutoff must be at least 2, the momentum residual reads level-2 moments (got {v})"),
            );
        }
        c.hermite_cutoff = v;
    }
    if let Some((line, v)) = e.get::<usize>("sobolev_order")? {
        if v < 1 {
            return fail(line, "sobolev_order must be at least 1");
        }
        c.sobolev_order = v;
    }
    if let Some((line, v)) = e.get::<f64>("dt")? {
        if !(v > 0.0 && v.is_finite()) {
            return fail(line, "dt must be positive");
        }
        c.dt = v;
    }
    c.report_interval = 10.0 * c.dt;
    if let Some((line, v)) = e.get::<f64>("t_end")? {
        if !(v >= 0.0 && v.is_finite()) {
            return fail(line, "t_end must be nonnegative");
        }
        c.t_end = v;
    }
    if let Some((line, v)) = e.get::<f64>("report_interval")? {
        if !(v > 0.0 && v.is_finite()) {
            return fail(line, "report_interval must be positive");
        }
        c.report_interval = v;
    }
    if let Some((line, v)) = e.get::<f64>("cfl_factor")? {
        if !(v > 0.0 && v.is_finite()) {
            return fail(line, "cfl_factor must be positive");
        }
        c.cfl_factor = v;
    }
    if let Some((line, v)) = e.raw("lambda0") {
        c.lambda0 = match v {
            "computed" => Lambda0Choice::Computed(CoercivityMode::ComplementP),
            "computed_p0" => Lambda0Choice::Computed(CoercivityMode::ComplementP0),
            _ => match v.parse::<f64>() {
                Ok(x) if x > 0.0 && x.is_finite() => Lambda0Choice::Manual(x),
                Ok(_) => return fail(line, "lambda0 must be positive"),
                Err(_) => return fail(line, format!("lambda0 must be computed, computed_p0 or a number (got {v:?})")),
            },
        };
    }
    if let Some((line, v)) = e.raw("scheme") {
        c.scheme = Scheme::parse(v).ok_or_else(|| ConfigError::Line {
            line,
            msg: format!("unknown scheme {v:?} (expected strang_rk4, lawson_rk4 or imex_euler)"),
        })?;
    }
    if let Some((line, v)) = e.raw("rhs") {
        c.rhs_mode = match v {
            "full" => RhsMode::Full,
            "linearized" => RhsMode::Linearized,
            _ => return fail(line, format!("rhs must be full or linearized (got {v:?})")),
        };
    }
    if let Some((_, v)) = e.raw("out_dir") {
        c.out_dir = PathBuf::from(v);
    }
    if let Some((_, v)) = e.get::<u64>("checkpoint_every")? {
        c.checkpoint_every = v;
    }
    if let Some((line, v)) = e.get::<f64>("epsilon0")? {
        if !(v > 0.0 && v.is_finite()) {
            return fail(line, "epsilon0 must be positive");
        }
        c.epsilon0 = Some(v);
    }
    c.ic = parse_ic(&e, c.dim)?;

    c.validate().map_err(|err| ConfigError::Invalid(err.to_string()))?;
    Ok(c)
}

fn parse_ic(e: &Entries, dim: usize) -> Result<InitialCondition, ConfigError> {
    let kind = e.raw("ic");
    let amplitude = match e.get::<f64>("ic_amplitude")? {
        Some((line, a)) if !a.is_finite() => return fail(line, "ic_amplitude must be finite"),
        Some((_, a)) => a,
        None => 1e-2,
    };
    let only_for = |key: &str, wanted: &str| -> Result<(), ConfigError> {
        match e.raw(key) {
            Some((line, _)) => fail(line, format!("{key} only applies to ic = {wanted}")),
            None => Ok(()),
        }
    };
    match kind.unwrap_or((0, "random_smooth")) {
        (_, "zero") => {
            for key in ["ic_amplitude", "ic_seed", "ic_decay", "ic_energy", "ic_k", "ic_m"] {
                only_for(key, "single_mode or random_smooth")?;
            }
            Ok(InitialCondition::Zero)
        }
        (_, "single_mode") => {
            for key in ["ic_seed", "ic_decay", "ic_energy"] {
                only_for(key, "random_smooth")?;
            }
            let mut k: Wavevector = [0; 3];
            k[0] = 1;
            if let Some((line, v)) = e.raw("ic_k") {
                let parts = parse_components(line, "ic_k", v)?;
                if parts.len() != dim {
                    return fail(line, format!("ic_k needs {dim} components (got {})", parts.len()));
                }
                k = [0; 3];
                for (slot, p) in k.iter_mut().zip(parts) {
                    *slot = i32::try_from(p).or_else(|_| fail(line, "ic_k component out of range"))?;
                }
            }
            let mut m = [0u32; 3];
            m[0] = 1;
            if let Some((line, v)) = e.raw("ic_m") {
                let parts = parse_components(line, "ic_m", v)?;
                if parts.len() != dim {
                    return fail(line, format!("ic_m needs {dim} components (got {})", parts.len()));
                }
                m = [0; 3];
                for (slot, p) in m.iter_mut().zip(parts) {
                    *slot = u32::try_from(p).or_else(|_| fail(line, "ic_m components must be nonnegative"))?;
                }
            }
            Ok(InitialCondition::SingleMode { k, m, amplitude })
        }
        (_, "random_smooth") => {
            for key in ["ic_k", "ic_m"] {
                only_for(key, "single_mode")?;
            }
            let seed = e.get::<u64>("ic_seed")?.map_or(7, |(_, s)| s);
            let decay_exponent = match e.get::<f64>("ic_decay")? {
                Some((line, p)) if !(p >= 0.0 && p.is_finite()) => {
                    return fail(line, "ic_decay must be nonnegative")
                }
                Some((_, p)) => p,
                None => 4.0,
            };
            let target_energy = match e.get::<f64>("ic_energy")? {
                Some((line, x)) if !(x > 0.0 && x.is_finite()) => return fail(line, "ic_energy must be positive"),
                other => other.map(|(_, x)| x),
            };
            Ok(InitialCondition::RandomSmooth {
                amplitude,
                decay_exponent,
                seed,
                target_energy,
            })
        }
        (line, other) => fail(
            line,
            format!("unknown ic {other:?} (expected zero, single_mode or random_smooth)"),
        ),
    }
}

/// Reads a config file; the literal path `default` yields the defaults.
pub fn load_config(path: &Path) -> Result<SimConfig, ConfigError> {
    if path.as_os_str() == "default" {
        return Ok(SimConfig::default());
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Renders a config in the file format; `parse_config(render_config(c)) == c`.
pub fn render_config(c: &SimConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("dim", c.dim.to_string());
    kv("fourier_cutoff", c.fourier_cutoff.to_string());
    kv("hermite_cutoff", c.hermite_cutoff.to_string());
    kv("sobolev_order", c.sobolev_order.to_string());
    kv("dt", c.dt.to_string());
    kv("t_end", c.t_end.to_string());
    kv("report_interval", c.report_interval.to_string());
    match &c.ic {
        InitialCondition::Zero => kv("ic", "zero".into()),
        InitialCondition::SingleMode { k, m, amplitude } => {
            kv("ic", "single_mode".into());
            kv("ic_amplitude", amplitude.to_string());
            kv("ic_k", join(&k[..c.dim]));
            kv("ic_m", join(&m[..c.dim]));
        }
        InitialCondition::RandomSmooth {
            amplitude,
            decay_exponent,
            seed,
            target_energy,
        } => {
            kv("ic", "random_smooth".into());
            kv("ic_amplitude", amplitude.to_string());
            kv("ic_seed", seed.to_string());
            kv("ic_decay", decay_exponent.to_string());
            if let Some(x) = target_energy {
                kv("ic_energy", x.to_string());
            }
        }
    }
    kv(
        "lambda0",
        match c.lambda0 {
            Lambda0Choice::Computed(CoercivityMode::ComplementP) => "computed".into(),
            Lambda0Choice::Computed(CoercivityMode::ComplementP0) => "computed_p0".into(),
            Lambda0Choice::Manual(x) => x.to_string(),
        },
    );
    kv("scheme", c.scheme.name().into());
    kv("rhs", c.rhs_mode.name().into());
    kv("cfl_factor", c.cfl_factor.to_string());
    kv("out_dir", c.out_dir.display().to_string());
    kv("checkpoint_every", c.checkpoint_every.to_string());
    if let Some(x) = c.epsilon0 {
        kv("epsilon0", x.to_string());
    }
    s
}

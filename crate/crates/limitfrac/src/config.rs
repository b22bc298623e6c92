//! Flat `key = value` configuration with `#` comments, validation, and the
//! effective-config echo written at the top of every run log.

use std::path::PathBuf;

use thiserror::Error;

use crate::adapt::{AdaptConfig, Driver};
use crate::mesh::{Mesh, MeshError, Slit};
use crate::model::{ModelError, ModelParams};
use crate::sim::LoadSpec;
use crate::solver::SolverConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    BadValue { line: usize, key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invariant(String),
    #[error("invalid environment override {var}: {msg}")]
    BadEnv { var: String, msg: String },
}

#[derive(Clone, Debug)]
pub struct Config {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub eps: f64,
    pub lambda_c: f64,
    pub solver: SolverConfig,
    pub adapt: AdaptConfig,
    pub load: LoadSpec,
    pub xi_cr: f64,
    pub mesh_n: usize,
    pub slit_x: f64,
    /// Slit depth in (0, 1); zero disables the slit.
    pub slit_depth: f64,
    pub driver: Driver,
    pub output_dir: PathBuf,
    /// Write a VTK snapshot every this many steps; zero disables periodic
    /// snapshots (the final state is always written).
    pub snapshot_every: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            alpha: 1.0,
            beta: 1e-4,
            kappa: 1e-6,
            eps: 0.02,
            lambda_c: 1.0,
            solver: SolverConfig::default(),
            adapt: AdaptConfig::default(),
            load: LoadSpec::default(),
            xi_cr: 1e-4,
            mesh_n: 16,
            slit_x: 0.5,
            slit_depth: 0.5,
            driver: Driver::I,
            output_dir: PathBuf::from("out"),
            snapshot_every: 24,
            seed: 0,
            threads: 1,
        }
    }
}

impl Config {
    pub fn model_params(&self) -> Result<ModelParams, ModelError> {
        ModelParams::new(self.alpha, self.beta, self.kappa, self.eps, self.lambda_c)
    }

    pub fn slit(&self) -> Option<Slit> {
        (self.slit_depth > 0.0).then_some(Slit { x: self.slit_x, depth: self.slit_depth })
    }

    pub fn build_mesh(&self) -> Result<Mesh, MeshError> {
        Mesh::build_slit_square(self.mesh_n, self.slit())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model_params().map_err(|e| ConfigError::Invariant(e.to_string()))?;
        self.solver.validate().map_err(|e| ConfigError::Invariant(e.to_string()))?;
        if !(self.adapt.theta > 0.0 && self.adapt.theta <= 1.0) {
            return Err(ConfigError::Invariant(format!(
                "theta = {} not in (0, 1]",
                self.adapt.theta
            )));
        }
        if !(self.adapt.xi_rf > 0.0) {
            return Err(ConfigError::Invariant(format!("xi_rf = {} must be > 0", self.adapt.xi_rf)));
        }
        if !(self.adapt.xi_rf_decay > 0.0 && self.adapt.xi_rf_decay < 1.0) {
            return Err(ConfigError::Invariant(format!(
                "xi_rf_decay = {} not in (0, 1)",
                self.adapt.xi_rf_decay
            )));
        }
        if !(self.xi_cr > 0.0) {
            return Err(ConfigError::Invariant(format!("xi_cr = {} must be > 0", self.xi_cr)));
        }
        if self.mesh_n < 1 {
            return Err(ConfigError::Invariant("mesh_n must be >= 1".into()));
        }
        if !(self.load.dt > 0.0) {
            return Err(ConfigError::Invariant(format!("dt = {} must be > 0", self.load.dt)));
        }
        if self.threads < 1 {
            return Err(ConfigError::Invariant("threads must be >= 1".into()));
        }
        Ok(())
    }

    /// Every effective parameter, once, in config syntax.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("alpha", self.alpha.to_string());
        kv("beta", self.beta.to_string());
        kv("kappa", self.kappa.to_string());
        kv("eps", self.eps.to_string());
        kv("lambda_c", self.lambda_c.to_string());
        kv("picard_tol", self.solver.picard_tol.to_string());
        kv("picard_max", self.solver.picard_max.to_string());
        kv("picard_energy_tol", self.solver.picard_energy_tol.to_string());
        kv("linear_tol", self.solver.linear_tol.to_string());
        kv("linear_max", self.solver.linear_max.to_string());
        kv("xi_vn", self.solver.xi_vn.to_string());
        kv("xi_v", self.solver.xi_v.to_string());
        kv("altmin_max", self.solver.altmin_max.to_string());
        kv("accept_altmin_cap", self.solver.accept_altmin_cap.to_string());
        kv("theta", self.adapt.theta.to_string());
        kv("xi_rf", self.adapt.xi_rf.to_string());
        kv("max_refine_rounds", self.adapt.max_refine_rounds.to_string());
        kv("xi_rf_decay", self.adapt.xi_rf_decay.to_string());
        kv("c", self.load.c.to_string());
        kv("dt", self.load.dt.to_string());
        kv("n_steps", self.load.n_steps.to_string());
        kv("split_x", self.load.split_x.to_string());
        kv("xi_cr", self.xi_cr.to_string());
        kv("mesh_n", self.mesh_n.to_string());
        kv("slit_x", self.slit_x.to_string());
        kv("slit_depth", self.slit_depth.to_string());
        kv("driver", self.driver.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("snapshot_every", self.snapshot_every.to_string());
        kv("seed", self.seed.to_string());
        kv("threads", self.threads.to_string());
        s
    }
}

/// Parses a flat `key = value` config file. Omitted keys keep their
/// defaults; unknown keys and invariant violations are rejected with the
/// offending line.
pub fn parse_config(path: &std::path::Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<Config, ConfigError> {
    let mut cfg = Config::default();
    // The load split follows the slit line unless set explicitly.
    let mut split_set = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(ConfigError::BadValue {
                line,
                key: stripped.to_string(),
                msg: "expected `key = value`".into(),
            });
        };
        let key = key.trim();
        let value = value.trim();
        let bad = |msg: &str| ConfigError::BadValue {
            line,
            key: key.to_string(),
            msg: msg.to_string(),
        };
        macro_rules! parse {
            ($ty:ty) => {
                value.parse::<$ty>().map_err(|e| bad(&e.to_string()))?
            };
        }
        match key {
            "alpha" => cfg.alpha = parse!(f64),
            "beta" => cfg.beta = parse!(f64),
            "kappa" => cfg.kappa = parse!(f64),
            "eps" => cfg.eps = parse!(f64),
            "lambda_c" => cfg.lambda_c = parse!(f64),
            "picard_tol" => cfg.solver.picard_tol = parse!(f64),
            "picard_max" => cfg.solver.picard_max = parse!(usize),
            "picard_energy_tol" => cfg.solver.picard_energy_tol = parse!(f64),
            "linear_tol" => cfg.solver.linear_tol = parse!(f64),
            "linear_max" => cfg.solver.linear_max = parse!(usize),
            "xi_vn" => cfg.solver.xi_vn = parse!(f64),
            "xi_v" => cfg.solver.xi_v = parse!(f64),
            "altmin_max" => cfg.solver.altmin_max = parse!(usize),
            "accept_altmin_cap" => cfg.solver.accept_altmin_cap = parse!(bool),
            "theta" => cfg.adapt.theta = parse!(f64),
            "xi_rf" => cfg.adapt.xi_rf = parse!(f64),
            "max_refine_rounds" => cfg.adapt.max_refine_rounds = parse!(usize),
            "xi_rf_decay" => cfg.adapt.xi_rf_decay = parse!(f64),
            "c" => cfg.load.c = parse!(f64),
            "dt" => cfg.load.dt = parse!(f64),
            "n_steps" => cfg.load.n_steps = parse!(usize),
            "xi_cr" => cfg.xi_cr = parse!(f64),
            "mesh_n" => cfg.mesh_n = parse!(usize),
            "slit_x" => cfg.slit_x = parse!(f64),
            "slit_depth" => cfg.slit_depth = parse!(f64),
            "split_x" => {
                cfg.load.split_x = parse!(f64);
                split_set = true;
            }
            "driver" => {
                cfg.driver = match value {
                    "I" | "i" | "1" => Driver::I,
                    "II" | "ii" | "2" => Driver::II,
                    "III" | "iii" | "3" => Driver::III,
                    other => return Err(bad(&format!("unknown driver `{other}`"))),
                }
            }
            "output_dir" => cfg.output_dir = PathBuf::from(value),
            "snapshot_every" => cfg.snapshot_every = parse!(usize),
            "seed" => cfg.seed = parse!(u64),
            "threads" => cfg.threads = parse!(usize),
            _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
        }
    }
    if !split_set {
        cfg.load.split_x = cfg.slit_x;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a config file and applies the `LIMITFRAC_THREADS` and
/// `LIMITFRAC_OUTDIR` environment overrides.
pub fn load_config(path: &std::path::Path) -> Result<Config, ConfigError> {
    let mut cfg = parse_config(path)?;
    if let Ok(threads) = std::env::var("LIMITFRAC_THREADS") {
        let n: usize = threads.parse().map_err(|_| ConfigError::BadEnv {
            var: "LIMITFRAC_THREADS".into(),
            msg: format!("`{threads}` is not a positive integer"),
        })?;
        if n < 1 {
            return Err(ConfigError::BadEnv {
                var: "LIMITFRAC_THREADS".into(),
                msg: "must be >= 1".into(),
            });
        }
        cfg.threads = n;
    }
    if let Ok(dir) = std::env::var("LIMITFRAC_OUTDIR") {
        cfg.output_dir = PathBuf::from(dir);
    }
    Ok(cfg)
}

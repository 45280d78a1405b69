//! Flat `key=value` run configuration shared by the config file and flags.

use std::path::PathBuf;

use vesselreg::grid_graph::{Connectivity, GridShape};
use vesselreg::regularizers::{Normalize, RegularizerConfig};
use vesselreg::segnet::NetworkSpec;
use vesselreg::trainer::TrainConfig;
use vesselreg::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub train: TrainConfig,
    pub network: NetworkSpec,
    pub data: Option<PathBuf>,
    pub synthetic: Option<usize>,
    pub synth_seed: u64,
    pub synth_shape: (usize, usize),
    pub out: PathBuf,
    pub fov_only: bool,
    pub threshold: f64,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            network: NetworkSpec::default(),
            data: None,
            synthetic: None,
            synth_seed: 0,
            synth_shape: (64, 64),
            out: PathBuf::from("out"),
            fov_only: true,
            threshold: 0.5,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

pub fn parse_shape(value: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("invalid shape '{value}', expected HxW"));
    let (h, w) = value.split_once(['x', 'X']).ok_or_else(bad)?;
    let dims = (h.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?);
    GridShape::new(dims.0, dims.1).map_err(|_| bad())?;
    Ok(dims)
}

impl CliConfig {
    fn reg(&mut self) -> &mut RegularizerConfig {
        &mut self.train.regularizer
    }

    /// Sets one key; keys are the long flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "objective" => self.train.objective = v.parse()?,
            "lambda" => self.reg().lambda = parse(key, v)?,
            "normalize" => self.reg().normalize = v.parse::<Normalize>()?,
            "connectivity" => {
                self.reg().connectivity = match v {
                    "4" => Connectivity::N4,
                    "8" => Connectivity::N8,
                    _ => return Err(Error::Config(format!("connectivity must be 4 or 8, got '{v}'"))),
                }
            }
            "fg-threshold" => self.reg().fg_threshold = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "lr" => self.train.base_lr = parse(key, v)?,
            "lr-decay-every" => self.train.lr_decay_every = parse(key, v)?,
            "lr-decay-factor" => self.train.lr_decay_factor = parse(key, v)?,
            "batch-size" => self.train.batch_size = parse(key, v)?,
            "patches-per-image" => self.train.patches_per_image = parse(key, v)?,
            "patch-size" => self.train.patch_size = parse(key, v)?,
            "seed" => self.train.seed = parse(key, v)?,
            "threads" => self.train.threads = parse(key, v)?,
            "depth" => self.network.depth = parse(key, v)?,
            "base-channels" => self.network.base_channels = parse(key, v)?,
            "data" => self.data = Some(PathBuf::from(v)),
            "synthetic" => self.synthetic = Some(parse(key, v)?),
            "synth-seed" => self.synth_seed = parse(key, v)?,
            "synth-shape" => self.synth_shape = parse_shape(v)?,
            "out" => self.out = PathBuf::from(v),
            "fov-only" => self.fov_only = parse(key, v)?,
            "threshold" => self.threshold = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key=value", no + 1)))?;
            self.set(key.trim(), value).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("config line {}: {m}", no + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.network.validate()?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        Ok(())
    }

    /// Every key, in a form `apply_text` reads back to the same config.
    pub fn render(&self) -> String {
        let t = &self.train;
        let r = &t.regularizer;
        let conn = match r.connectivity {
            Connectivity::N4 => 4,
            Connectivity::N8 => 8,
        };
        let mut lines = vec![
            format!("objective={}", t.objective),
            format!("lambda={:?}", r.lambda),
            format!("normalize={}", r.normalize),
            format!("connectivity={conn}"),
            format!("fg-threshold={:?}", r.fg_threshold),
            format!("epochs={}", t.epochs),
            format!("lr={:?}", t.base_lr),
            format!("lr-decay-every={}", t.lr_decay_every),
            format!("lr-decay-factor={:?}", t.lr_decay_factor),
            format!("batch-size={}", t.batch_size),
            format!("patches-per-image={}", t.patches_per_image),
            format!("patch-size={}", t.patch_size),
            format!("seed={}", t.seed),
            format!("threads={}", t.threads),
            format!("depth={}", self.network.depth),
            format!("base-channels={}", self.network.base_channels),
        ];
        if let Some(d) = &self.data {
            lines.push(format!("data={}", d.display()));
        }
        if let Some(n) = self.synthetic {
            lines.push(format!("synthetic={n}"));
        }
        lines.push(format!("synth-seed={}", self.synth_seed));
        lines.push(format!("synth-shape={}x{}", self.synth_shape.0, self.synth_shape.1));
        lines.push(format!("out={}", self.out.display()));
        lines.push(format!("fov-only={}", self.fov_only));
        lines.push(format!("threshold={:?}", self.threshold));
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vesselreg::regularizers::ObjectiveKind;

    #[test]
    fn render_round_trips() {
        let mut cfg = CliConfig::default();
        cfg.apply_text("objective = o3\nlambda=0.05\n# note\nconnectivity=8\nsynthetic=4\nthreshold=0.25\n")
            .unwrap();
        assert_eq!(cfg.train.objective, ObjectiveKind::Ec);
        let mut again = CliConfig::default();
        again.apply_text(&cfg.render()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut cfg = CliConfig::default();
        assert!(cfg.apply_text("colour=red").is_err());
        assert!(cfg.apply_text("lambda").is_err());
        assert!(cfg.set("epochs", "-1").is_err());
        assert!(cfg.set("synth-shape", "64").is_err());
        assert_eq!(parse_shape("32x48").unwrap(), (32, 48));
    }
}

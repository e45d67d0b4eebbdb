//! Flat `key = value` run configuration.
//!
//! Keys are dotted (`train.epochs = 40`), `#` starts a comment, and unknown
//! or repeated keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::Colormap;
use crate::model::{Loss, TrainConfig};
use crate::response::{ResponseFunction, ShiftForm, ShiftParams};
use crate::synth::SceneSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptConfig {
    /// Scan whose calibration the others are harmonized to; it is left
    /// uncorrupted.
    pub target: u16,
    /// Built-in curve library, as curve specs (`gamma:2.2`, `scurve:8:0.5`).
    pub curves: Vec<String>,
    /// Optional file of tabulated curves added to the library.
    pub curve_file: Option<PathBuf>,
    /// Explicit scan id → curve (spec or name from the curve file).
    pub assign: BTreeMap<u16, String>,
}

impl Default for CorruptConfig {
    fn default() -> Self {
        Self {
            target: 1,
            curves: [
                "gamma:0.5",
                "gamma:0.7",
                "gamma:1.6",
                "gamma:2.2",
                "scurve:6:0.5",
                "scurve:8:0.35",
            ]
            .map(String::from)
            .to_vec(),
            curve_file: None,
            assign: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub k: usize,
    pub radius: f64,
    pub min_overlap: usize,
    pub bins: usize,
    pub min_neighbors: usize,
    /// Target points sampled per overlapping (source, target) pair.
    pub overlap_samples: usize,
    /// Points sampled per scan outside every overlap.
    pub inscan_samples: usize,
    /// Examples per (pair, intensity bin) cell after resampling.
    pub per_bin: usize,
    pub val_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            k: 150,
            radius: 1.0,
            min_overlap: 5000,
            bins: 10,
            min_neighbors: 10,
            overlap_samples: 6000,
            inscan_samples: 2000,
            per_bin: 340,
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub tile_size: f64,
    pub k: usize,
    pub radius: f64,
    pub colormap: Colormap,
    pub cell_size: f64,
    pub hist_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tile_size: 50.0,
            k: 5,
            radius: 1.0,
            colormap: Colormap::Viridis,
            cell_size: 0.5,
            hist_bins: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub threads: usize,
    pub scene: SceneSpec,
    pub corrupt: CorruptConfig,
    pub shift: ShiftParams,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for Config {
    fn default() -> Self {
        let seed = 1;
        Self {
            seed,
            threads: 0,
            scene: SceneSpec {
                seed,
                ..SceneSpec::default()
            },
            corrupt: CorruptConfig::default(),
            shift: ShiftParams::default(),
            dataset: DatasetConfig::default(),
            train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            eval: EvalConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{value}': {e}")))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(prev) = seen.insert(key.to_string(), n + 1) {
                return Err(Error::Config(format!(
                    "line {}: key '{key}' already set on line {prev}",
                    n + 1
                )));
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip_prefix(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key. The seed propagates to the scene and the trainer.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => {
                self.seed = parse(key, v)?;
                self.scene.seed = self.seed;
                self.train.seed = self.seed;
            }
            "threads" => self.threads = parse(key, v)?,
            "scene.extent_x" => self.scene.extent.0 = parse(key, v)?,
            "scene.extent_y" => self.scene.extent.1 = parse(key, v)?,
            "scene.density" => self.scene.density = parse(key, v)?,
            "scene.n_strips" => self.scene.n_strips = parse(key, v)?,
            "scene.strip_overlap" => self.scene.strip_overlap = parse(key, v)?,
            "scene.jitter" => self.scene.jitter = parse(key, v)?,
            "scene.mix.ground" => self.scene.mix.ground = parse(key, v)?,
            "scene.mix.building" => self.scene.mix.building = parse(key, v)?,
            "scene.mix.vegetation" => self.scene.mix.vegetation = parse(key, v)?,
            "corrupt.target" => self.corrupt.target = parse(key, v)?,
            "corrupt.curves" => {
                self.corrupt.curves = v
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
            "corrupt.curve_file" => self.corrupt.curve_file = Some(PathBuf::from(v)),
            "shift.h" => self.shift.h = parse(key, v)?,
            "shift.v" => self.shift.v = parse(key, v)?,
            "shift.l" => self.shift.l = parse(key, v)?,
            "shift.s" => self.shift.s = parse(key, v)?,
            "shift.form" => self.shift.form = parse::<ShiftForm>(key, v)?,
            "dataset.k" => self.dataset.k = parse(key, v)?,
            "dataset.radius" => self.dataset.radius = parse(key, v)?,
            "dataset.min_overlap" => self.dataset.min_overlap = parse(key, v)?,
            "dataset.bins" => self.dataset.bins = parse(key, v)?,
            "dataset.min_neighbors" => self.dataset.min_neighbors = parse(key, v)?,
            "dataset.overlap_samples" => self.dataset.overlap_samples = parse(key, v)?,
            "dataset.inscan_samples" => self.dataset.inscan_samples = parse(key, v)?,
            "dataset.per_bin" => self.dataset.per_bin = parse(key, v)?,
            "dataset.val_fraction" => self.dataset.val_fraction = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.batch" => self.train.batch = parse(key, v)?,
            "train.lr_max" => self.train.lr_max = parse(key, v)?,
            "train.lr_min" => self.train.lr_min = parse(key, v)?,
            "train.peak_decay" => self.train.peak_decay = parse(key, v)?,
            "train.dropout" => self.train.dropout = parse(key, v)?,
            "train.loss" => self.train.loss = parse::<Loss>(key, v)?,
            "eval.tile_size" => self.eval.tile_size = parse(key, v)?,
            "eval.k" => self.eval.k = parse(key, v)?,
            "eval.radius" => self.eval.radius = parse(key, v)?,
            "eval.colormap" => self.eval.colormap = parse::<Colormap>(key, v)?,
            "eval.cell_size" => self.eval.cell_size = parse(key, v)?,
            "eval.hist_bins" => self.eval.hist_bins = parse(key, v)?,
            _ => match key.strip_prefix("corrupt.assign.") {
                Some(id) => {
                    let id: u16 = parse(key, id)?;
                    self.corrupt.assign.insert(id, v.to_string());
                }
                None => return Err(Error::Config(format!("unknown key '{key}'"))),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.shift.validate()?;
        self.train.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.corrupt.target as usize >= self.scene.n_strips {
            return bad(format!(
                "corrupt.target {} is not one of the {} strips",
                self.corrupt.target, self.scene.n_strips
            ));
        }
        if self.corrupt.curves.is_empty() && self.corrupt.curve_file.is_none() {
            return bad("corrupt.curves is empty and no curve file is set".into());
        }
        for c in &self.corrupt.curves {
            ResponseFunction::from_str(c)?;
        }
        for id in self.corrupt.assign.keys() {
            if *id as usize >= self.scene.n_strips {
                return bad(format!("corrupt.assign.{id}: no such strip"));
            }
        }
        let d = &self.dataset;
        if d.k == 0 || d.k > u16::MAX as usize || d.min_neighbors == 0 || d.min_neighbors > d.k {
            return bad("dataset.k must be positive and at least dataset.min_neighbors".into());
        }
        if !(d.radius > 0.0) || d.bins < 2 || d.per_bin == 0 {
            return bad(
                "dataset.radius must be positive, dataset.bins >= 2, dataset.per_bin > 0".into(),
            );
        }
        if !(0.0..1.0).contains(&d.val_fraction) {
            return bad("dataset.val_fraction must be in [0, 1)".into());
        }
        let e = &self.eval;
        if e.k == 0
            || !(e.radius > 0.0)
            || !(e.tile_size > 0.0)
            || !(e.cell_size > 0.0)
            || e.hist_bins == 0
        {
            return bad("eval.k, eval.radius, eval.tile_size, eval.cell_size and eval.hist_bins must be positive".into());
        }
        Ok(())
    }

    /// Every key with its resolved value, in a form [`Config::parse`] reads back.
    pub fn to_text(&self) -> String {
        let s = &self.scene;
        let mut kv: Vec<(String, String)> = vec![
            ("seed".into(), self.seed.to_string()),
            ("threads".into(), self.threads.to_string()),
            ("scene.extent_x".into(), s.extent.0.to_string()),
            ("scene.extent_y".into(), s.extent.1.to_string()),
            ("scene.density".into(), s.density.to_string()),
            ("scene.n_strips".into(), s.n_strips.to_string()),
            ("scene.strip_overlap".into(), s.strip_overlap.to_string()),
            ("scene.jitter".into(), s.jitter.to_string()),
            ("scene.mix.ground".into(), s.mix.ground.to_string()),
            ("scene.mix.building".into(), s.mix.building.to_string()),
            ("scene.mix.vegetation".into(), s.mix.vegetation.to_string()),
            ("corrupt.target".into(), self.corrupt.target.to_string()),
            ("corrupt.curves".into(), self.corrupt.curves.join(",")),
        ];
        if let Some(p) = &self.corrupt.curve_file {
            kv.push(("corrupt.curve_file".into(), p.display().to_string()));
        }
        for (id, c) in &self.corrupt.assign {
            kv.push((format!("corrupt.assign.{id}"), c.clone()));
        }
        let (sh, d, t, e) = (&self.shift, &self.dataset, &self.train, &self.eval);
        kv.extend([
            ("shift.h".into(), sh.h.to_string()),
            ("shift.v".into(), sh.v.to_string()),
            ("shift.l".into(), sh.l.to_string()),
            ("shift.s".into(), sh.s.to_string()),
            ("shift.form".into(), sh.form.to_string()),
            ("dataset.k".into(), d.k.to_string()),
            ("dataset.radius".into(), d.radius.to_string()),
            ("dataset.min_overlap".into(), d.min_overlap.to_string()),
            ("dataset.bins".into(), d.bins.to_string()),
            ("dataset.min_neighbors".into(), d.min_neighbors.to_string()),
            (
                "dataset.overlap_samples".into(),
                d.overlap_samples.to_string(),
            ),
            (
                "dataset.inscan_samples".into(),
                d.inscan_samples.to_string(),
            ),
            ("dataset.per_bin".into(), d.per_bin.to_string()),
            ("dataset.val_fraction".into(), d.val_fraction.to_string()),
            ("train.epochs".into(), t.epochs.to_string()),
            ("train.batch".into(), t.batch.to_string()),
            ("train.lr_max".into(), t.lr_max.to_string()),
            ("train.lr_min".into(), t.lr_min.to_string()),
            ("train.peak_decay".into(), t.peak_decay.to_string()),
            ("train.dropout".into(), t.dropout.to_string()),
            ("train.loss".into(), t.loss.to_string()),
            ("eval.tile_size".into(), e.tile_size.to_string()),
            ("eval.k".into(), e.k.to_string()),
            ("eval.radius".into(), e.radius.to_string()),
            ("eval.colormap".into(), e.colormap.to_string()),
            ("eval.cell_size".into(), e.cell_size.to_string()),
            ("eval.hist_bins".into(), e.hist_bins.to_string()),
        ]);
        kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::default();
        assert_eq!(Config::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = Config::parse(
            "# desk run\nseed = 7\ntrain.epochs = 3  # short\n\ncorrupt.assign.2 = gamma:2\nshift.form = floor\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.scene.seed, 7);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.corrupt.assign[&2], "gamma:2");
        assert_eq!(cfg.shift.form, ShiftForm::Floor);
        assert_eq!(Config::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = Config::parse("train.epochs = 3\ntrain.epoch = 4\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(
            err.to_string().contains("unknown key 'train.epoch'"),
            "{err}"
        );
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in [
            "train.epochs = many",
            "seed",
            "train.dropout = 1.5",
            "seed = 1\nseed = 2",
            "corrupt.target = 9",
            "corrupt.curves = gamma:-1",
            "train.loss = huber",
        ] {
            assert!(Config::parse(text).is_err(), "{text}");
        }
    }
}

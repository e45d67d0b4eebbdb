//! End-to-end runs that compose through files in one output directory:
//!
//! ```text
//! <out>/config.resolved
//! <out>/scene/strip_<id>.lhs
//! <out>/<variant>/corrupt_<id>.lhs   recorded intensities
//! <out>/<variant>/truth_<id>.lhs     true intensities under the target calibration
//! <out>/<variant>/corruption.json
//! <out>/<variant>/train.lhd, val.lhd
//! <out>/<variant>/model.lhm, history.csv
//! <out>/<variant>/harmonized_<id>.lhs
//! <out>/report.csv, report.txt, report.json
//! <out>/render/<variant>_<id>_{truth,corrupted,harmonized}.ppm
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::Config;
use crate::dataset::{
    build_inscan_examples, build_overlap_examples, find_overlap_pairs, load_dataset,
    sample_indices, save_dataset, split_train_val, stratified_resample, CorruptionRecord,
    DatasetManifest, Example, ExampleParams, TileRecord,
};
use crate::error::{Error, Result};
use crate::eval::{
    assert_tile_disjoint, extract_eval_tile, overlap_regions, run_benchmark, save_render,
    BenchConfig, BenchInput, BenchmarkReport, SourceTile,
};
use crate::model::{
    harmonize_scan, load_checkpoint, save_checkpoint, train, Arch, HistoryRow, ModelParams,
    TrainOutcome,
};
use crate::pointcloud::{overlap_mask, read_scan, write_scan, Scan, ScanFormat, SpatialIndex};
use crate::response::{load_curves, Corruption, ResponseFunction};
use crate::synth::{cut_strips, generate_world};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    NoShift,
    Shift,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::NoShift, Variant::Shift];

    /// Directory and flag name.
    pub fn name(self) -> &'static str {
        match self {
            Variant::NoShift => "noshift",
            Variant::Shift => "shift",
        }
    }

    /// Report column label.
    pub fn label(self) -> &'static str {
        match self {
            Variant::NoShift => "no-shift",
            Variant::Shift => "with-shift",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noshift" | "no-shift" => Ok(Variant::NoShift),
            "shift" | "with-shift" => Ok(Variant::Shift),
            _ => Err(Error::Config(format!(
                "unknown dataset '{s}', expected noshift or shift"
            ))),
        }
    }
}

/// Independent stream seed for one pipeline stage.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in tag.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// A configured run rooted at one output directory.
pub struct Pipeline {
    pub cfg: Config,
    pub out: PathBuf,
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Corrupted(format!("{}: {e}", path.display())))
}

fn index_all(scans: &[Scan]) -> Result<Vec<SpatialIndex>> {
    scans.iter().map(SpatialIndex::build).collect()
}

impl Pipeline {
    /// Creates the output directory and writes the resolved configuration
    /// into it.
    pub fn new(cfg: Config, out: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        let out = out.into();
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        write_file(&out.join("config.resolved"), cfg.to_text())?;
        Ok(Self { cfg, out })
    }

    fn dir(&self, sub: &str) -> Result<PathBuf> {
        let d = self.out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    fn n_strips(&self) -> u16 {
        self.cfg.scene.n_strips as u16
    }

    fn load_set(&self, dir: &Path, prefix: &str) -> Result<Vec<Scan>> {
        (0..self.n_strips())
            .map(|id| read_scan(&dir.join(format!("{prefix}_{id}.lhs")), ScanFormat::Binary))
            .collect()
    }

    pub fn strips(&self) -> Result<Vec<Scan>> {
        self.load_set(&self.out.join("scene"), "strip")
    }

    pub fn corrupted(&self, v: Variant) -> Result<Vec<Scan>> {
        self.load_set(&self.out.join(v.name()), "corrupt")
    }

    pub fn truth(&self, v: Variant) -> Result<Vec<Scan>> {
        self.load_set(&self.out.join(v.name()), "truth")
    }

    /// Generates the scene and writes one file per strip.
    pub fn synth(&self) -> Result<Vec<Scan>> {
        let world = generate_world(&self.cfg.scene)?;
        let strips = cut_strips(&world, &self.cfg.scene)?;
        let dir = self.dir("scene")?;
        for s in &strips {
            log::info!("strip {}: {} points", s.scan_id, s.len());
            write_scan(
                s,
                &dir.join(format!("strip_{}.lhs", s.scan_id)),
                ScanFormat::Binary,
            )?;
        }
        Ok(strips)
    }

    /// Scan id → response curve. The target keeps the identity; explicit
    /// assignments win; the rest draw from the library with a seeded RNG.
    pub fn curve_assignment(&self) -> Result<BTreeMap<u16, (String, ResponseFunction)>> {
        let c = &self.cfg.corrupt;
        let mut library: Vec<(String, ResponseFunction)> = c
            .curves
            .iter()
            .map(|s| Ok((s.clone(), s.parse::<ResponseFunction>()?)))
            .collect::<Result<_>>()?;
        let mut named = BTreeMap::new();
        if let Some(path) = &c.curve_file {
            for nc in load_curves(path)? {
                named.insert(nc.name.clone(), nc.curve.clone());
                library.push((nc.name, nc.curve));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, "corrupt"));
        let mut out = BTreeMap::new();
        for id in 0..self.n_strips() {
            let pick = rng.random_range(0..library.len());
            let entry = if id == c.target {
                ("identity".to_string(), ResponseFunction::identity())
            } else if let Some(spec) = c.assign.get(&id) {
                match named.get(spec) {
                    Some(f) => (spec.clone(), f.clone()),
                    None => (spec.clone(), spec.parse()?),
                }
            } else {
                library[pick].clone()
            };
            out.insert(id, entry);
        }
        Ok(out)
    }

    /// Writes recorded and ground-truth scans for both variants. The shift
    /// is physical, so in the shifted variant it applies to every strip,
    /// target included.
    pub fn corrupt(&self) -> Result<()> {
        let strips = self.strips()?;
        let curves = self.curve_assignment()?;
        let extent = self.cfg.scene.x_extent();
        for v in Variant::ALL {
            let dir = self.dir(v.name())?;
            let shift = (v == Variant::Shift).then_some(self.cfg.shift);
            let mut records = Vec::new();
            for s in &strips {
                let (name, f) = &curves[&s.scan_id];
                let truth = crate::response::corrupt_scan(
                    s,
                    &ResponseFunction::identity(),
                    shift.as_ref(),
                    extent,
                )?;
                let recorded = crate::response::corrupt_scan(s, f, shift.as_ref(), extent)?;
                write_scan(
                    &truth,
                    &dir.join(format!("truth_{}.lhs", s.scan_id)),
                    ScanFormat::Binary,
                )?;
                write_scan(
                    &recorded,
                    &dir.join(format!("corrupt_{}.lhs", s.scan_id)),
                    ScanFormat::Binary,
                )?;
                records.push(CorruptionRecord {
                    scan_id: s.scan_id,
                    curve: name.clone(),
                    shift: shift.is_some(),
                });
                log::info!("{v}: scan {} <- {name}", s.scan_id);
            }
            let text = serde_json::to_string_pretty(&records).expect("records serialize");
            write_file(&dir.join("corruption.json"), text)?;
        }
        Ok(())
    }

    fn corruption_records(&self, v: Variant) -> Result<Vec<CorruptionRecord>> {
        let value = read_json(&self.out.join(v.name()).join("corruption.json"))?;
        serde_json::from_value(value).map_err(|e| Error::Corrupted(format!("corruption.json: {e}")))
    }

    /// Builds `train.lhd` and `val.lhd` for one variant and returns their
    /// manifests.
    pub fn build_dataset(&self, v: Variant) -> Result<(DatasetManifest, DatasetManifest)> {
        let d = &self.cfg.dataset;
        let target_id = self.cfg.corrupt.target;
        let seed = derive_seed(self.cfg.seed, &format!("dataset/{v}"));
        let strips = self.strips()?;
        let corrupted = self.corrupted(v)?;
        let indexes = index_all(&corrupted)?;
        let records = self.corruption_records(v)?;
        let curves = self.curve_assignment()?;
        let extent = self.cfg.scene.x_extent();
        let params = ExampleParams {
            k: d.k,
            radius: d.radius,
            min_neighbors: d.min_neighbors,
        };

        let pairs = find_overlap_pairs(&corrupted, &indexes, target_id, d.min_overlap, d.radius)?;
        let mut tiles: Vec<TileRecord> = Vec::new();
        for &(s, _) in &pairs {
            let scan = &corrupted[s as usize];
            let others: Vec<&SpatialIndex> = indexes
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != s as usize)
                .map(|(_, idx)| idx)
                .collect();
            let regions = overlap_regions(scan, &others, d.radius);
            let tile = extract_eval_tile(
                scan,
                &regions,
                self.cfg.eval.tile_size,
                derive_seed(self.cfg.seed, &format!("tile/{s}")),
            )?;
            assert_tile_disjoint(&tile.record, &regions);
            log::info!(
                "{v}: evaluation tile {:?} ({} points)",
                tile.record,
                tile.indices.len()
            );
            tiles.push(tile.record);
        }
        let in_tile = |x: f64, y: f64| tiles.iter().any(|t| t.contains(x, y));

        let target = &strips[target_id as usize];
        let mut examples: Vec<Example> = Vec::new();
        let mut skipped = 0usize;
        for &(s, _) in &pairs {
            let mask = overlap_mask(target, &indexes[s as usize], d.radius);
            let candidates: Vec<usize> = (0..target.len())
                .filter(|&i| mask[i] && !in_tile(target.points[i].x, target.points[i].y))
                .collect();
            let picked = sample_indices(
                &candidates,
                d.overlap_samples,
                derive_seed(seed, &format!("overlap/{s}")),
            );
            let corruption = Corruption {
                response: curves[&s].1.clone(),
                shift: (v == Variant::Shift).then_some(self.cfg.shift),
                x_extent: extent,
            };
            let (ex, skip) = build_overlap_examples(
                target,
                &picked,
                s,
                &indexes[s as usize],
                &params,
                &corruption,
            )?;
            log::info!(
                "{v}: pair ({s}, {target_id}): {} examples, {skip} sparse",
                ex.len()
            );
            examples.extend(ex);
            skipped += skip;
        }
        for (scan, idx) in corrupted.iter().zip(&indexes) {
            let masks: Vec<Vec<bool>> = indexes
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != scan.scan_id as usize)
                .map(|(_, other)| overlap_mask(scan, other, d.radius))
                .collect();
            let candidates: Vec<usize> = (0..scan.len())
                .filter(|&i| {
                    let p = scan.points[i];
                    masks.iter().all(|m| !m[i]) && !in_tile(p.x, p.y)
                })
                .collect();
            let picked = sample_indices(
                &candidates,
                d.inscan_samples,
                derive_seed(seed, &format!("inscan/{}", scan.scan_id)),
            );
            let (ex, skip) = build_inscan_examples(scan, idx, &picked, &params, extent);
            log::info!(
                "{v}: scan {} in-scan: {} examples, {skip} sparse",
                scan.scan_id,
                ex.len()
            );
            examples.extend(ex);
            skipped += skip;
        }

        let (train_ex, val_ex) =
            split_train_val(examples, d.val_fraction, derive_seed(seed, "split"));
        let (train_ex, empty) =
            stratified_resample(&train_ex, d.bins, d.per_bin, derive_seed(seed, "resample"));
        for c in &empty {
            log::warn!(
                "{v}: no examples for pair ({}, {}) bin {}",
                c.source,
                c.target,
                c.bin
            );
        }
        let manifest = |split: &str, ex: &[Example], empty_cells| DatasetManifest {
            split: split.into(),
            k: d.k,
            radius: d.radius,
            target_scan: target_id,
            corruption: records.clone(),
            eval_tiles: tiles.clone(),
            skipped_sparse: skipped as u64,
            empty_cells,
            ..DatasetManifest::describe(ex, d.bins)
        };
        let train_m = manifest("train", &train_ex, empty);
        let val_m = manifest("val", &val_ex, Vec::new());
        let dir = self.dir(v.name())?;
        save_dataset(&dir.join("train.lhd"), &train_m, &train_ex)?;
        save_dataset(&dir.join("val.lhd"), &val_m, &val_ex)?;
        log::info!(
            "{v}: {} train, {} val examples",
            train_ex.len(),
            val_ex.len()
        );
        Ok((train_m, val_m))
    }

    pub fn load_split(&self, v: Variant, split: &str) -> Result<(DatasetManifest, Vec<Example>)> {
        load_dataset(&self.out.join(v.name()).join(format!("{split}.lhd")))
    }

    /// Trains one variant's model, writing the checkpoint and history. A
    /// diverged run still writes both, then fails.
    pub fn train(&self, v: Variant) -> Result<TrainOutcome> {
        let (_, train_ex) = self.load_split(v, "train")?;
        let (_, val_ex) = self.load_split(v, "val")?;
        let cfg = crate::model::TrainConfig {
            seed: derive_seed(self.cfg.seed, &format!("train/{v}")),
            ..self.cfg.train.clone()
        };
        let outcome = train(&train_ex, &val_ex, Arch::default(), &cfg)?;
        let dir = self.dir(v.name())?;
        save_checkpoint(&dir.join("model.lhm"), &outcome.params)?;
        write_file(
            &dir.join("history.csv"),
            HistoryRow::to_csv(&outcome.history),
        )?;
        log::info!(
            "{v}: best validation loss {:.5} at epoch {}",
            outcome.best_val,
            outcome.best_epoch
        );
        if let Some(reason) = &outcome.diverged {
            return Err(Error::Diverged(format!("{v}: {reason}")));
        }
        Ok(outcome)
    }

    pub fn model(&self, v: Variant) -> Result<ModelParams> {
        load_checkpoint(&self.out.join(v.name()).join("model.lhm"), &Arch::default())
    }

    pub fn bench_config(&self) -> BenchConfig {
        let e = &self.cfg.eval;
        BenchConfig {
            k: e.k,
            radius: e.radius,
            hist_bins: e.hist_bins,
            arch: Arch::default(),
            head: crate::model::TrainConfig {
                seed: derive_seed(self.cfg.seed, "heads"),
                ..self.cfg.train.clone()
            },
            head_val_fraction: self.cfg.dataset.val_fraction.max(0.05),
        }
    }

    /// Benchmarks the given variants and writes `report.{csv,txt,json}`.
    pub fn evaluate(&self, variants: &[Variant]) -> Result<BenchmarkReport> {
        struct Loaded {
            v: Variant,
            corrupted: Vec<Scan>,
            truth: Vec<Scan>,
            indexes: Vec<SpatialIndex>,
            model: ModelParams,
            train: Vec<Example>,
            tiles: Vec<TileRecord>,
        }
        let mut loaded = Vec::new();
        for &v in variants {
            let corrupted = self.corrupted(v)?;
            let (manifest, train) = self.load_split(v, "train")?;
            loaded.push(Loaded {
                v,
                indexes: index_all(&corrupted)?,
                corrupted,
                truth: self.truth(v)?,
                model: self.model(v)?,
                train,
                tiles: manifest.eval_tiles,
            });
        }
        let target = self.cfg.corrupt.target as usize;
        let inputs: Vec<BenchInput> = loaded
            .iter()
            .map(|l| BenchInput {
                dataset: l.v.label(),
                target: &l.corrupted[target],
                sources: l
                    .tiles
                    .iter()
                    .map(|t| SourceTile {
                        corrupted: &l.corrupted[t.scan_id as usize],
                        index: &l.indexes[t.scan_id as usize],
                        truth: &l.truth[t.scan_id as usize],
                        tile: *t,
                    })
                    .collect(),
                model: Some(&l.model),
                train: &l.train,
            })
            .collect();
        let mut report = run_benchmark(&inputs, &self.bench_config())?;
        if let serde_json::Value::Object(m) = &mut report.details {
            m.insert("seed".into(), json!(self.cfg.seed));
            m.insert("config".into(), json!(self.cfg.to_text()));
        }
        write_file(&self.out.join("report.csv"), report.to_csv())?;
        write_file(&self.out.join("report.txt"), report.to_table())?;
        let rows: Vec<_> = report
            .rows
            .iter()
            .map(|r| {
                json!({
                    "interpolation": r.interpolation,
                    "harmonization": r.harmonization,
                    "dataset": r.dataset,
                    "mae": r.mae,
                    "skipped": r.skipped,
                })
            })
            .collect();
        let doc = json!({ "rows": rows, "details": report.details });
        write_file(
            &self.out.join("report.json"),
            serde_json::to_string_pretty(&doc).expect("report serializes"),
        )?;
        Ok(report)
    }

    /// Harmonizes every non-target scan of a variant toward the target with
    /// the trained model.
    pub fn harmonize(&self, v: Variant) -> Result<Vec<Scan>> {
        let model = self.model(v)?;
        let corrupted = self.corrupted(v)?;
        let target = self.cfg.corrupt.target;
        let dir = self.dir(v.name())?;
        let mut out = Vec::new();
        for scan in corrupted.iter().filter(|s| s.scan_id != target) {
            let idx = SpatialIndex::build(scan)?;
            let (h, missing) = harmonize_scan(
                &model,
                scan,
                &idx,
                target,
                self.cfg.eval.k,
                self.cfg.eval.radius,
            )?;
            if missing > 0 {
                log::warn!(
                    "{v}: scan {}: {missing} points had no neighbors",
                    scan.scan_id
                );
            }
            write_scan(
                &h,
                &dir.join(format!("harmonized_{}.lhs", h.scan_id)),
                ScanFormat::Binary,
            )?;
            out.push(h);
        }
        Ok(out)
    }

    /// Renders truth, recorded and harmonized views of every evaluation
    /// tile of a variant.
    pub fn render(&self, v: Variant) -> Result<Vec<PathBuf>> {
        let (manifest, _) = self.load_split(v, "train")?;
        let model = self.model(v)?;
        let corrupted = self.corrupted(v)?;
        let truth = self.truth(v)?;
        let dir = self.dir("render")?;
        let e = &self.cfg.eval;
        let mut written = Vec::new();
        for t in &manifest.eval_tiles {
            let id = t.scan_id as usize;
            let crop = |s: &Scan| {
                Scan::new(
                    s.scan_id,
                    s.points
                        .iter()
                        .filter(|p| t.contains(p.x, p.y))
                        .copied()
                        .collect(),
                )
            };
            let idx = SpatialIndex::build(&corrupted[id])?;
            let (harm, _) = harmonize_scan(
                &model,
                &corrupted[id],
                &idx,
                self.cfg.corrupt.target,
                e.k,
                e.radius,
            )?;
            for (tag, scan) in [
                ("truth", &truth[id]),
                ("corrupted", &corrupted[id]),
                ("harmonized", &harm),
            ] {
                let path = dir.join(format!("{v}_{id}_{tag}.ppm"));
                save_render(&crop(scan), e.colormap, e.cell_size, &path)?;
                written.push(path);
            }
        }
        Ok(written)
    }

    /// synth, corrupt, build both datasets, train both models, evaluate.
    pub fn run_all(&self) -> Result<BenchmarkReport> {
        self.synth()?;
        self.corrupt()?;
        for v in Variant::ALL {
            self.build_dataset(v)?;
            self.train(v)?;
        }
        self.evaluate(&Variant::ALL)
    }
}

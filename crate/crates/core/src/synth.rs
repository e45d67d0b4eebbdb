//! Deterministic synthetic urban scenes and overlapping flight strips.
//!
//! The world is a rectangle `[0, x_size] x [0, y_size]` populated with ground
//! patches, box buildings and vegetation blobs. Every object draws one
//! reflectance from its class distribution; smooth spatial noise and a small
//! per-point texture are added on top and the result is clamped to the class
//! range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::pointcloud::{Point, Scan};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMix {
    pub ground: f64,
    pub building: f64,
    pub vegetation: f64,
}

impl Default for FeatureMix {
    fn default() -> Self {
        Self {
            ground: 0.5,
            building: 0.3,
            vegetation: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub extent: (f64, f64),
    /// Points per square meter.
    pub density: f64,
    pub n_strips: usize,
    /// Each strip reaches this fraction of a base strip width into each
    /// neighbor, so consecutive strips share `2 * strip_overlap` of it.
    pub strip_overlap: f64,
    pub mix: FeatureMix,
    /// Positional noise (standard deviation, meters) applied independently
    /// to every strip's copy of a world point.
    pub jitter: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            extent: (400.0, 80.0),
            density: 8.0,
            n_strips: 4,
            strip_overlap: 0.2,
            mix: FeatureMix::default(),
            jitter: 0.02,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scene(m));
        let (w, h) = self.extent;
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return bad(format!("extent must have positive area, got {w} x {h}"));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return bad(format!("density must be positive, got {}", self.density));
        }
        if !(2..=45).contains(&self.n_strips) {
            return bad(format!(
                "n_strips must be in [2, 45], got {}",
                self.n_strips
            ));
        }
        if !(self.strip_overlap > 0.0 && self.strip_overlap < 1.0) {
            return bad(format!(
                "strip_overlap must be in (0, 1), got {}",
                self.strip_overlap
            ));
        }
        let m = self.mix;
        if m.ground < 0.0 || m.building < 0.0 || m.vegetation < 0.0 {
            return bad("feature mix proportions must be non-negative".into());
        }
        if !(m.ground + m.building + m.vegetation > 0.0) {
            return bad("feature mix proportions sum to zero".into());
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return bad(format!("jitter must be non-negative, got {}", self.jitter));
        }
        Ok(())
    }

    /// x-interval covered by strip `i`.
    pub fn strip_bounds(&self, i: usize) -> (f64, f64) {
        let base = self.extent.0 / self.n_strips as f64;
        let reach = self.strip_overlap * base;
        let lo = (i as f64 * base - reach).max(0.0);
        let hi = ((i + 1) as f64 * base + reach).min(self.extent.0);
        (lo, hi)
    }

    pub fn x_extent(&self) -> (f64, f64) {
        (0.0, self.extent.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Ground,
    Building,
    Vegetation,
}

impl Class {
    pub fn range(self) -> (f64, f64) {
        match self {
            Class::Ground => (0.2, 0.6),
            Class::Building => (0.4, 0.95),
            Class::Vegetation => (0.05, 0.5),
        }
    }

    fn beta(self) -> Beta<f64> {
        let (a, b) = match self {
            Class::Ground => (2.0, 2.0),
            Class::Building => (5.0, 2.0),
            Class::Vegetation => (2.0, 5.0),
        };
        Beta::new(a, b).unwrap()
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        let (lo, hi) = self.range();
        lo + (hi - lo) * self.beta().sample(rng)
    }
}

const GROUND_CELL: f64 = 6.0;
const NOISE_AMPLITUDE: f64 = 0.06;
const TEXTURE_SIGMA: f64 = 0.01;

struct Building {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    height: f64,
    reflectance: f64,
}

struct Tree {
    cx: f64,
    cy: f64,
    r: f64,
    height: f64,
    reflectance: f64,
}

struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
}

struct Layout {
    ground: Vec<f64>,
    ground_cols: usize,
    buildings: Vec<Building>,
    trees: Vec<Tree>,
    waves: Vec<Wave>,
}

impl Layout {
    fn new(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Self {
        let (w, h) = spec.extent;
        let cols = (w / GROUND_CELL).ceil().max(1.0) as usize;
        let rows = (h / GROUND_CELL).ceil().max(1.0) as usize;
        let ground = (0..cols * rows).map(|_| Class::Ground.draw(rng)).collect();

        let total = spec.mix.ground + spec.mix.building + spec.mix.vegetation;
        let area = w * h;

        let mut buildings = Vec::new();
        let want = area * spec.mix.building / total;
        let mut covered = 0.0;
        while covered < want && buildings.len() < 100_000 {
            let bw = rng.random_range(8.0..25.0f64).min(w);
            let bh = rng.random_range(8.0..25.0f64).min(h);
            let x0 = rng.random_range(0.0..=(w - bw));
            let y0 = rng.random_range(0.0..=(h - bh));
            covered += bw * bh;
            buildings.push(Building {
                x0,
                y0,
                x1: x0 + bw,
                y1: y0 + bh,
                height: rng.random_range(4.0..20.0),
                reflectance: Class::Building.draw(rng),
            });
        }

        let mut trees = Vec::new();
        let want = area * spec.mix.vegetation / total;
        let mut covered = 0.0;
        while covered < want && trees.len() < 100_000 {
            let r = rng.random_range(2.0..8.0f64);
            covered += std::f64::consts::PI * r * r;
            trees.push(Tree {
                cx: rng.random_range(0.0..w),
                cy: rng.random_range(0.0..h),
                r,
                height: rng.random_range(3.0..12.0),
                reflectance: Class::Vegetation.draw(rng),
            });
        }

        let waves = (0..3)
            .map(|_| {
                let wavelength = rng.random_range(10.0..40.0f64);
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU / wavelength;
                Wave {
                    kx: k * angle.cos(),
                    ky: k * angle.sin(),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                }
            })
            .collect();

        Self {
            ground,
            ground_cols: cols,
            buildings,
            trees,
            waves,
        }
    }

    fn terrain(x: f64, y: f64) -> f64 {
        0.8 * (x / 37.0).sin() + 0.6 * (y / 23.0).cos()
    }

    fn noise(&self, x: f64, y: f64) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|w| (w.kx * x + w.ky * y + w.phase).sin())
            .sum();
        NOISE_AMPLITUDE * s / self.waves.len() as f64
    }

    /// Class, base reflectance and surface height at `(x, y)`.
    fn surface(&self, x: f64, y: f64, rng: &mut ChaCha8Rng) -> (Class, f64, f64) {
        let ground_z = Self::terrain(x, y);
        if let Some(b) = self
            .buildings
            .iter()
            .find(|b| x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1)
        {
            return (Class::Building, b.reflectance, ground_z + b.height);
        }
        if let Some(t) = self.trees.iter().find(|t| {
            let (dx, dy) = (x - t.cx, y - t.cy);
            dx * dx + dy * dy < t.r * t.r
        }) {
            let z = ground_z + rng.random_range(0.3..t.height);
            return (Class::Vegetation, t.reflectance, z);
        }
        let col = ((x / GROUND_CELL) as usize).min(self.ground_cols - 1);
        let row = (y / GROUND_CELL) as usize;
        let cell = (row * self.ground_cols + col).min(self.ground.len() - 1);
        (Class::Ground, self.ground[cell], ground_z)
    }
}

/// Samples the ground-truth world: Poisson point count, uniform positions,
/// class-dependent intensities. Deterministic in `spec.seed`.
pub fn generate_world(spec: &SceneSpec) -> Result<Scan> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layout = Layout::new(spec, &mut rng);
    let (w, h) = spec.extent;
    let n = Poisson::new(spec.density * w * h)
        .map_err(|e| Error::Scene(format!("point count: {e}")))?
        .sample(&mut rng) as usize;
    let texture = Normal::new(0.0, TEXTURE_SIGMA).unwrap();
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random_range(0.0..w);
        let y = rng.random_range(0.0..h);
        let (class, base, z) = layout.surface(x, y, &mut rng);
        let (lo, hi) = class.range();
        let i = (base + layout.noise(x, y) + texture.sample(&mut rng)).clamp(lo, hi);
        points.push(Point::new(x, y, z, i as f32));
    }
    Ok(Scan::new(0, points))
}

/// Cuts the world into `n_strips` overlapping flight strips along x. Every
/// strip gets its own jittered copy of the world points it covers.
pub fn cut_strips(world: &Scan, spec: &SceneSpec) -> Result<Vec<Scan>> {
    spec.validate()?;
    if spec.n_strips > 2 && spec.strip_overlap > 0.5 {
        return Err(Error::Scene(format!(
            "strip_overlap {} makes strips extend past their neighbors",
            spec.strip_overlap
        )));
    }
    let noise = Normal::new(0.0, spec.jitter.max(f64::MIN_POSITIVE)).unwrap();
    (0..spec.n_strips)
        .map(|i| {
            let (lo, hi) = spec.strip_bounds(i);
            let mut rng = ChaCha8Rng::seed_from_u64(
                spec.seed ^ 0x5851_f42d_4c95_7f2d_u64.wrapping_mul(i as u64 + 1),
            );
            let points = world
                .points
                .iter()
                .filter(|p| p.x >= lo && p.x <= hi)
                .map(|p| {
                    if spec.jitter == 0.0 {
                        *p
                    } else {
                        Point::new(
                            p.x + noise.sample(&mut rng),
                            p.y + noise.sample(&mut rng),
                            p.z + noise.sample(&mut rng),
                            p.intensity,
                        )
                    }
                })
                .collect();
            Ok(Scan::new(i as u16, points))
        })
        .collect()
}

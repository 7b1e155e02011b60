//! Synthetic shape generation, point-cloud CSV files and the stratified
//! train/test split.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::shapes::{PointCloud, ShapeClass};

pub const CSV_HEADER: [&str; 5] = ["source_id", "class", "point_index", "x", "y"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub per_class_count: usize,
    /// Inclusive range of the number of points per cloud, closing duplicate included.
    pub n_range: (usize, usize),
    /// Range of the circumradius.
    pub scale_range: (f64, f64),
    /// Standard deviation of the radial noise as a fraction of the circumradius.
    pub jitter_std: f64,
    pub seed: u64,
    pub classes: Vec<ShapeClass>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            per_class_count: 200,
            n_range: (100, 500),
            scale_range: (0.5, 1.5),
            jitter_std: 0.005,
            seed: 0,
            classes: ShapeClass::ALL.to_vec(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        let (n_min, n_max) = self.n_range;
        let (s_min, s_max) = self.scale_range;
        if n_min < 8 || n_max < n_min {
            return bad("point count range must satisfy 8 <= n_min <= n_max");
        }
        if !(s_min > 0.0 && s_max >= s_min && s_max.is_finite()) {
            return bad("scale range must satisfy 0 < min <= max");
        }
        if !(self.jitter_std >= 0.0 && self.jitter_std.is_finite()) {
            return bad("jitter must be finite and non-negative");
        }
        if self.per_class_count == 0 {
            return bad("per-class count must be positive");
        }
        if self.classes.is_empty() {
            return bad("no classes selected");
        }
        Ok(())
    }
}

/// Every random choice behind one generated shape, before noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub class: ShapeClass,
    pub radius: f64,
    /// Angle of the first vertex, in radians.
    pub rotation: f64,
    pub center: [f64; 2],
    /// Number of points including the closing duplicate.
    pub points: usize,
    /// Arc position of the first sample as a fraction of the perimeter.
    pub start: f64,
    /// Absolute standard deviation of the radial noise.
    pub jitter: f64,
}

impl ShapeSpec {
    pub fn draw<R: Rng + ?Sized>(class: ShapeClass, cfg: &GeneratorConfig, rng: &mut R) -> Self {
        let radius = rng.random_range(cfg.scale_range.0..=cfg.scale_range.1);
        ShapeSpec {
            class,
            radius,
            rotation: rng.random_range(0.0..TAU),
            center: [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
            points: rng.random_range(cfg.n_range.0..=cfg.n_range.1),
            start: rng.random_range(0.0..1.0),
            jitter: cfg.jitter_std * radius,
        }
    }

    /// Noise-free boundary point at arc fraction `t` in `[0, 1)`.
    pub fn boundary_point(&self, t: f64) -> [f64; 2] {
        let [cx, cy] = self.center;
        let r = self.radius;
        match self.class.corners() {
            None => {
                let a = self.rotation + TAU * t;
                [cx + r * a.cos(), cy + r * a.sin()]
            }
            Some(m) => {
                let m = m as usize;
                let pos = t * m as f64;
                let k = (pos.floor() as usize).min(m - 1);
                let u = pos - k as f64;
                let vertex = |i: usize| {
                    let a = self.rotation + TAU * (i % m) as f64 / m as f64;
                    [cx + r * a.cos(), cy + r * a.sin()]
                };
                let (p, q) = (vertex(k), vertex(k + 1));
                [p[0] + u * (q[0] - p[0]), p[1] + u * (q[1] - p[1])]
            }
        }
    }

    /// Samples the boundary at equal arc-length steps and adds radial noise.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PointCloud {
        let distinct = self.points - 1;
        let noise = (self.jitter > 0.0).then(|| Normal::new(0.0, self.jitter).unwrap());
        let mut points: Vec<[f64; 2]> = (0..distinct)
            .map(|i| {
                let t = (self.start + i as f64 / distinct as f64).fract();
                let p = self.boundary_point(t);
                match &noise {
                    None => p,
                    Some(n) => {
                        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
                        let f = 1.0 + n.sample(rng) / dx.hypot(dy);
                        [self.center[0] + f * dx, self.center[1] + f * dy]
                    }
                }
            })
            .collect();
        points.push(points[0]);
        PointCloud::new(points, self.class, "").expect("generated clouds are valid")
    }
}

pub fn generate_polygon<R: Rng + ?Sized>(
    corners: u8,
    cfg: &GeneratorConfig,
    rng: &mut R,
) -> Result<PointCloud> {
    let class = ShapeClass::polygon(corners)?;
    Ok(ShapeSpec::draw(class, cfg, rng).sample(rng))
}

pub fn generate_circle<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> PointCloud {
    ShapeSpec::draw(ShapeClass::Circle, cfg, rng).sample(rng)
}

pub fn generate_shape<R: Rng + ?Sized>(
    class: ShapeClass,
    cfg: &GeneratorConfig,
    rng: &mut R,
) -> PointCloud {
    ShapeSpec::draw(class, cfg, rng).sample(rng)
}

/// `per_class_count` clouds for every configured class, in canonical class
/// order. Each cloud draws from its own stream seeded by (seed, class, index).
pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<Vec<PointCloud>> {
    cfg.validate()?;
    let mut classes = cfg.classes.clone();
    classes.sort();
    classes.dedup();
    let jobs: Vec<(ShapeClass, usize)> = classes
        .iter()
        .flat_map(|&c| (0..cfg.per_class_count).map(move |i| (c, i)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(class, i)| {
            let seed = derive_seed(cfg.seed, &[class.canonical_index() as u64, i as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            generate_shape(class, cfg, &mut rng).with_source_id(format!("{class}-{i:04}"))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_fraction > 0.0 && self.train_fraction < 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "train fraction must lie strictly between 0 and 1".into(),
            ))
        }
    }
}

/// Stratified split. Each class is shuffled with its own stream and
/// `round(f c)` members (kept within `1..c`) go to training. Both halves keep
/// the input order.
pub fn split(
    clouds: &[PointCloud],
    cfg: &SplitConfig,
) -> Result<(Vec<PointCloud>, Vec<PointCloud>)> {
    cfg.validate()?;
    let mut by_class: BTreeMap<ShapeClass, Vec<usize>> = BTreeMap::new();
    for (i, c) in clouds.iter().enumerate() {
        by_class.entry(c.class_label()).or_default().push(i);
    }
    let mut in_train = vec![false; clouds.len()];
    for (class, mut members) in by_class {
        let count = members.len();
        if count < 2 {
            return Err(Error::ClassTooSmall(class));
        }
        let seed = derive_seed(cfg.seed, &[0x5917, class.canonical_index() as u64]);
        members.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((cfg.train_fraction * count as f64).round() as usize).clamp(1, count - 1);
        for &i in &members[..n_train] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) =
        clouds.iter().cloned().zip(in_train).partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(c, _)| c).collect(),
        test.into_iter().map(|(c, _)| c).collect(),
    ))
}

pub fn write_clouds<W: Write>(clouds: &[PointCloud], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for c in clouds {
        let class = c.class_label().to_string();
        for (i, [x, y]) in c.points().iter().enumerate() {
            w.write_record([
                c.source_id(),
                class.as_str(),
                &i.to_string(),
                &x.to_string(),
                &y.to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn save_clouds(clouds: &[PointCloud], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_clouds(clouds, std::io::BufWriter::new(file))
}

/// Parses point-cloud CSV. Rows of one cloud must be contiguous and numbered
/// from 0; an open cloud is closed by repeating its first point.
/// `origin` only labels error messages.
pub fn read_clouds<R: Read>(reader: R, origin: &Path) -> Result<Vec<PointCloud>> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = r.records();
    match records.next() {
        None => return Ok(Vec::new()),
        Some(header) => {
            let header = header?;
            if header.iter().ne(CSV_HEADER) {
                return Err(parse_err(
                    1,
                    format!("expected header {}", CSV_HEADER.join(",")),
                ));
            }
        }
    }

    struct Pending {
        id: String,
        class: ShapeClass,
        points: Vec<[f64; 2]>,
        line: u64,
    }
    let finish = |p: Pending| -> Result<PointCloud> {
        let (cloud, added) = PointCloud::closing(p.points, p.class, p.id.clone())
            .map_err(|e| parse_err(p.line, format!("cloud {:?}: {e}", p.id)))?;
        if added {
            log::warn!("cloud {:?} was open; appended its first point", p.id);
        }
        Ok(cloud)
    };

    let mut clouds = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut current: Option<Pending> = None;
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != CSV_HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, got {}", CSV_HEADER.len(), rec.len()),
            ));
        }
        let id = &rec[0];
        let class: ShapeClass = rec[1]
            .parse()
            .map_err(|e: Error| parse_err(line, e.to_string()))?;
        let index: usize = rec[2]
            .parse()
            .map_err(|_| parse_err(line, format!("bad point index {:?}", &rec[2])))?;
        let coord = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("bad coordinate {s:?}")))
        };
        let point = [coord(&rec[3])?, coord(&rec[4])?];

        if current.as_ref().is_some_and(|p| p.id != id) {
            clouds.push(finish(current.take().unwrap())?);
        }
        match current.as_mut() {
            None => {
                if !seen.insert(id.to_string()) {
                    return Err(parse_err(
                        line,
                        format!("rows of cloud {id:?} are not contiguous"),
                    ));
                }
                if index != 0 {
                    return Err(parse_err(
                        line,
                        format!("cloud {id:?} must start at point 0"),
                    ));
                }
                current = Some(Pending {
                    id: id.to_string(),
                    class,
                    points: vec![point],
                    line,
                });
            }
            Some(p) => {
                if class != p.class {
                    return Err(parse_err(line, format!("cloud {id:?} changes class")));
                }
                if index != p.points.len() {
                    return Err(parse_err(
                        line,
                        format!("expected point index {}, got {index}", p.points.len()),
                    ));
                }
                p.points.push(point);
            }
        }
    }
    if let Some(p) = current {
        clouds.push(finish(p)?);
    }
    Ok(clouds)
}

pub fn load_clouds(path: &Path) -> Result<Vec<PointCloud>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_clouds(std::io::BufReader::new(file), path)
}

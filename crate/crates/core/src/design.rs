//! Sampling designs over an axis-aligned rectangle: regular lattice, uniform
//! random, Bachoc perturbed lattice and lattice-plus-clusters, plus the
//! diameter rescaling that makes coordinates unitless.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let r = Self {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn unit_square() -> Self {
        Self {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.x_max > self.x_min) || !(self.y_max > self.y_min) {
            return Err(Error::InvalidDesign(format!("degenerate region {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Largest distance between two points of the rectangle.
    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains_strictly(&self, p: &Point) -> bool {
        p[0] > self.x_min && p[0] < self.x_max && p[1] > self.y_min && p[1] < self.y_max
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            x_min: self.x_min / factor,
            x_max: self.x_max / factor,
            y_min: self.y_min / factor,
            y_max: self.y_max / factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DesignKind {
    #[serde(rename = "regular")]
    Regular,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "bachoc")]
    Bachoc,
    #[serde(rename = "regular+cluster")]
    RegularCluster,
    /// Locations read from a file.
    #[serde(rename = "custom")]
    Custom,
}

impl DesignKind {
    pub fn label(self) -> &'static str {
        match self {
            DesignKind::Regular => "regular",
            DesignKind::Random => "random",
            DesignKind::Bachoc => "bachoc",
            DesignKind::RegularCluster => "regular+cluster",
            DesignKind::Custom => "custom",
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "regular" => Ok(DesignKind::Regular),
            "random" => Ok(DesignKind::Random),
            "bachoc" => Ok(DesignKind::Bachoc),
            "regular+cluster" | "regular-cluster" | "cluster" => Ok(DesignKind::RegularCluster),
            "custom" | "file" => Ok(DesignKind::Custom),
            other => Err(Error::config("type", format!("unknown design type `{other}`"))),
        }
    }
}

/// An ordered set of planar sampling locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingDesign {
    pub points: Vec<Point>,
    /// Declared region; `None` for point sets ingested without one.
    pub region: Option<Region>,
    pub label: DesignKind,
    pub seed: Option<u64>,
}

impl SamplingDesign {
    /// Wraps externally supplied locations and validates them.
    pub fn from_points(points: Vec<Point>, region: Option<Region>) -> Result<Self> {
        let d = Self {
            points,
            region,
            label: DesignKind::Custom,
            seed: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.points[i], self.points[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    /// Checks size, finiteness, containment and duplicate-free coordinates.
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidDesign("design has no points".into()));
        }
        if let Some(region) = &self.region {
            region.validate()?;
        }
        for (i, p) in self.points.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::InvalidDesign(format!("point {i} is not finite")));
            }
            if let Some(region) = &self.region {
                if !region.contains_strictly(p) {
                    return Err(Error::InvalidDesign(format!(
                        "point {i} ({}, {}) lies outside the region",
                        p[0], p[1]
                    )));
                }
            }
        }
        if let Some((first, second)) = find_duplicate(&self.points) {
            return Err(Error::DuplicatePoints { first, second });
        }
        Ok(())
    }

    /// Largest pairwise distance among the realized points.
    pub fn point_diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.points.len() {
            for j in (i + 1)..self.points.len() {
                best = best.max(self.distance(i, j));
            }
        }
        best
    }

    /// Scale used by [`rescale`]: the region diameter, or the point-set
    /// diameter when no region is declared.
    pub fn r_max(&self) -> f64 {
        match &self.region {
            Some(region) => region.diameter(),
            None => self.point_diameter(),
        }
    }

    /// Identity token for provenance records: label, size and a hash of the
    /// coordinate bits.
    pub fn fingerprint(&self) -> DesignRef {
        let mut h = DefaultHasher::new();
        for p in &self.points {
            p[0].to_bits().hash(&mut h);
            p[1].to_bits().hash(&mut h);
        }
        DesignRef {
            label: self.label,
            n: self.points.len(),
            hash: format!("{:016x}", h.finish()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignRef {
    pub label: DesignKind,
    pub n: usize,
    pub hash: String,
}

fn find_duplicate(points: &[Point]) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
    });
    order.windows(2).find_map(|w| {
        let (a, b) = (points[w[0]], points[w[1]]);
        (a[0] == b[0] && a[1] == b[1]).then(|| (w[0].min(w[1]), w[0].max(w[1])))
    })
}

fn lattice(n1: usize, n2: usize, region: &Region) -> Vec<Point> {
    let dx = region.width() / n1 as f64;
    let dy = region.height() / n2 as f64;
    let mut points = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        for j in 0..n2 {
            points.push([
                region.x_min + (i as f64 + 0.5) * dx,
                region.y_min + (j as f64 + 0.5) * dy,
            ]);
        }
    }
    points
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n1 × n1` lattice at cell centers, spacing `width / n1`.
pub fn regular_design(n1: usize, region: Region) -> Result<SamplingDesign> {
    region.validate()?;
    if n1 < 2 {
        return Err(Error::InvalidDesign(format!("lattice side count must be >= 2, got {n1}")));
    }
    Ok(SamplingDesign {
        points: lattice(n1, n1, &region),
        region: Some(region),
        label: DesignKind::Regular,
        seed: None,
    })
}

/// `n` i.i.d. uniform locations in the open region.
pub fn random_design(n: usize, region: Region, seed: u64) -> Result<SamplingDesign> {
    region.validate()?;
    if n == 0 {
        return Err(Error::InvalidDesign("random design needs n >= 1".into()));
    }
    let mut rng = rng_for(seed);
    let mut open_unit = || loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    };
    let points = (0..n)
        .map(|_| {
            let u = open_unit();
            let v = open_unit();
            [region.x_min + u * region.width(), region.y_min + v * region.height()]
        })
        .collect();
    let design = SamplingDesign {
        points,
        region: Some(region),
        label: DesignKind::Random,
        seed: Some(seed),
    };
    design.validate()?;
    Ok(design)
}

/// Lattice nodes `v_i` perturbed to `v_i + epsilon * X_i`, with `X_i` uniform
/// on `(-dx, dx) × (-dy, dy)` and `(dx, dy)` the lattice spacing.
pub fn bachoc_design(
    n1: usize,
    n2: usize,
    epsilon: f64,
    region: Region,
    seed: u64,
) -> Result<SamplingDesign> {
    region.validate()?;
    if n1 < 1 || n2 < 1 {
        return Err(Error::InvalidDesign("lattice side counts must be >= 1".into()));
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::InvalidDesign(format!(
            "perturbation epsilon must lie in [0, 0.5), got {epsilon}"
        )));
    }
    let mut points = lattice(n1, n2, &region);
    if epsilon > 0.0 {
        let dx = region.width() / n1 as f64;
        let dy = region.height() / n2 as f64;
        let mut rng = rng_for(seed);
        for p in points.iter_mut() {
            let jx: f64 = rng.gen_range(-dx..dx);
            let jy: f64 = rng.gen_range(-dy..dy);
            p[0] += epsilon * jx;
            p[1] += epsilon * jy;
        }
    }
    let design = SamplingDesign {
        points,
        region: Some(region),
        label: DesignKind::Bachoc,
        seed: Some(seed),
    };
    design.validate()?;
    Ok(design)
}

fn reflect_into(v: f64, lo: f64, hi: f64) -> f64 {
    if v < lo {
        2.0 * lo - v
    } else if v > hi {
        2.0 * hi - v
    } else {
        v
    }
}

/// `n1 × n1` lattice plus `nc` clusters: each cluster center is a lattice node
/// drawn without replacement and receives `ppc - 1` satellites uniform on
/// `center + (-epsilon, epsilon)^2`. Satellites that leave the region are
/// mirrored back across the boundary they crossed.
pub fn regular_cluster_design(
    n1: usize,
    nc: usize,
    ppc: usize,
    epsilon: f64,
    region: Region,
    seed: u64,
) -> Result<SamplingDesign> {
    region.validate()?;
    if n1 < 2 {
        return Err(Error::InvalidDesign(format!("lattice side count must be >= 2, got {n1}")));
    }
    let nodes = n1 * n1;
    if nc > nodes {
        return Err(Error::InvalidDesign(format!(
            "cluster count {nc} exceeds the {nodes} lattice nodes"
        )));
    }
    if ppc < 2 {
        return Err(Error::InvalidDesign(format!("points per cluster must be >= 2, got {ppc}")));
    }
    if !(epsilon > 0.0) || epsilon >= region.width().min(region.height()) {
        return Err(Error::InvalidDesign(format!(
            "cluster radius must be positive and smaller than the region, got {epsilon}"
        )));
    }
    let mut points = lattice(n1, n1, &region);
    let mut rng = rng_for(seed);
    let centers = index::sample(&mut rng, nodes, nc).into_vec();
    points.reserve(nc * (ppc - 1));
    for c in centers {
        let center = points[c];
        for _ in 0..(ppc - 1) {
            let wx: f64 = rng.gen_range(-epsilon..epsilon);
            let wy: f64 = rng.gen_range(-epsilon..epsilon);
            points.push([
                reflect_into(center[0] + wx, region.x_min, region.x_max),
                reflect_into(center[1] + wy, region.y_min, region.y_max),
            ]);
        }
    }
    let design = SamplingDesign {
        points,
        region: Some(region),
        label: DesignKind::RegularCluster,
        seed: Some(seed),
    };
    design.validate()?;
    Ok(design)
}

/// A design expressed in unitless coordinates `s / r_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledDesign {
    pub design: SamplingDesign,
    /// Scale that was divided out, in the original distance units.
    pub r_max: f64,
}

/// Divides every coordinate (and the region) by the region diameter, or by the
/// point-set diameter when the design carries no region.
pub fn rescale(design: &SamplingDesign) -> Result<RescaledDesign> {
    let r_max = design.r_max();
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::InvalidDesign(format!("cannot rescale by diameter {r_max}")));
    }
    Ok(RescaledDesign {
        design: scale_design(design, r_max),
        r_max,
    })
}

/// Divides all coordinates by `factor`.
pub fn scale_design(design: &SamplingDesign, factor: f64) -> SamplingDesign {
    SamplingDesign {
        points: design
            .points
            .iter()
            .map(|p| [p[0] / factor, p[1] / factor])
            .collect(),
        region: design.region.map(|r| r.scaled(factor)),
        label: design.label,
        seed: design.seed,
    }
}

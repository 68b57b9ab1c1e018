//! Parametric synthetic multi-domain point-cloud data.
//!
//! Every class is a small assembly of surface primitives (boxes, cylinders,
//! frusta, spheres) with per-instance random proportions. A domain profile
//! perturbs how an instance is "captured": half-space occlusion, non-uniform
//! density, anisotropic scaling, rotation about the vertical axis and
//! Gaussian jitter. The source dataset mixes several profiles per class; each
//! target dataset uses a single held-out profile.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::distributions::WeightedIndex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::geometry::{normalize, Point, PointCloud, RigidTransform};
use crate::{seeds, Error, Result};

pub const SYNTH_HEADER: &str = "SUGDG-SYNTH v1";

/// Object category templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    Box,
    Cylinder,
    Sphere,
    Table,
    Chair,
    Lamp,
    Bottle,
}

impl Template {
    pub fn name(self) -> &'static str {
        match self {
            Template::Box => "box",
            Template::Cylinder => "cylinder",
            Template::Sphere => "sphere",
            Template::Table => "table",
            Template::Chair => "chair",
            Template::Lamp => "lamp",
            Template::Bottle => "bottle",
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown class template '{s}'")))
    }
}

/// How a domain captures an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub name: String,
    /// Gaussian jitter standard deviation, in normalized units.
    pub jitter_sigma: f64,
    /// Fraction of the surface removed by a random half-space, in `[0, 0.9]`.
    pub occlusion_fraction: f64,
    /// Log-density slope along the vertical axis; 0 is uniform.
    pub density_skew: f64,
    /// Per-axis scale factors are drawn from `[1 - a, 1 + a]`.
    pub anisotropic_scale: f64,
    /// Maximum absolute rotation about the vertical axis, radians.
    pub rotation_range: f64,
}

impl DomainProfile {
    pub fn clean(name: &str) -> Self {
        Self {
            name: name.to_string(),
            jitter_sigma: 0.0,
            occlusion_fraction: 0.0,
            density_skew: 0.0,
            anisotropic_scale: 0.0,
            rotation_range: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.jitter_sigma >= 0.0
            && (0.0..=0.9).contains(&self.occlusion_fraction)
            && self.density_skew.is_finite()
            && (0.0..1.0).contains(&self.anisotropic_scale)
            && self.rotation_range >= 0.0
            && self.jitter_sigma.is_finite()
            && self.rotation_range.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("domain profile '{}' has out-of-range values", self.name)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedProfile {
    pub weight: f64,
    pub profile: DomainProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub profile: DomainProfile,
    pub per_class: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: Vec<Template>,
    pub points_per_cloud: usize,
    pub source_per_class: Vec<usize>,
    pub source_profiles: Vec<WeightedProfile>,
    pub targets: Vec<TargetSpec>,
    pub seed: u64,
}

impl SynthSpec {
    /// The bundled four-class, two-target benchmark.
    ///
    /// The source mixes clean CAD-like captures with lightly occluded
    /// scan-like ones; the targets are a heavily occluded, sparse-bottomed
    /// scan domain and a distorted, noisy one.
    pub fn bundled() -> Self {
        let scan_lite = DomainProfile {
            name: "scan_lite".into(),
            jitter_sigma: 0.01,
            occlusion_fraction: 0.25,
            density_skew: 0.0,
            anisotropic_scale: 0.0,
            rotation_range: PI,
        };
        let cad = DomainProfile {
            rotation_range: PI,
            ..DomainProfile::clean("cad")
        };
        Self {
            classes: vec![Template::Box, Template::Cylinder, Template::Table, Template::Chair],
            points_per_cloud: 128,
            source_per_class: vec![40, 40, 40, 40],
            source_profiles: vec![
                WeightedProfile { weight: 0.6, profile: cad },
                WeightedProfile { weight: 0.4, profile: scan_lite },
            ],
            targets: vec![
                TargetSpec {
                    name: "scan".into(),
                    profile: DomainProfile {
                        name: "scan".into(),
                        jitter_sigma: 0.02,
                        occlusion_fraction: 0.45,
                        density_skew: 1.5,
                        anisotropic_scale: 0.0,
                        rotation_range: PI,
                    },
                    per_class: vec![40, 40, 40, 40],
                },
                TargetSpec {
                    name: "distorted".into(),
                    profile: DomainProfile {
                        name: "distorted".into(),
                        jitter_sigma: 0.03,
                        occlusion_fraction: 0.1,
                        density_skew: 0.0,
                        anisotropic_scale: 0.3,
                        rotation_range: PI,
                    },
                    per_class: vec![40, 40, 40, 40],
                },
            ],
            seed: 0,
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|t| t.name().to_string()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.classes.len();
        if c < 3 {
            return Err(Error::Config(format!("need at least 3 classes, got {c}")));
        }
        if self.targets.len() < 2 {
            return Err(Error::Config(format!("need at least 2 target profiles, got {}", self.targets.len())));
        }
        if self.points_per_cloud < 3 {
            return Err(Error::Config("points_per_cloud must be >= 3".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        if !self.classes.iter().all(|t| seen.insert(*t)) {
            return Err(Error::Config("class templates must be distinct".into()));
        }
        check_counts("source", &self.source_per_class, c)?;
        if self.source_profiles.is_empty() || self.source_profiles.iter().any(|w| !(w.weight > 0.0)) {
            return Err(Error::Config("source profiles need positive weights".into()));
        }
        for w in &self.source_profiles {
            w.profile.validate()?;
        }
        for t in &self.targets {
            check_counts(&t.name, &t.per_class, c)?;
            t.profile.validate()?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (first, body) = text.split_once('\n').unwrap_or((text, ""));
        if first.trim_end() != SYNTH_HEADER {
            return Err(Error::Config(format!("synthetic spec must start with '{SYNTH_HEADER}'")));
        }
        let spec: SynthSpec =
            serde_json::from_str(body).map_err(|e| Error::Config(format!("malformed synthetic spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn render(&self) -> String {
        format!(
            "{SYNTH_HEADER}\n{}\n",
            serde_json::to_string_pretty(self).expect("spec serializes")
        )
    }
}

fn check_counts(what: &str, counts: &[usize], c: usize) -> Result<()> {
    if counts.len() != c {
        return Err(Error::Config(format!("{what}: {} per-class counts for {c} classes", counts.len())));
    }
    if let Some(i) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Config(format!("{what}: class {i} has zero samples")));
    }
    Ok(())
}

/// One source dataset and the held-out targets, sharing a label space.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub source: Dataset,
    pub targets: Vec<Dataset>,
}

/// Pure function of the spec (its seed included).
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let names = spec.class_names();
    let weights = WeightedIndex::new(spec.source_profiles.iter().map(|w| w.weight))
        .map_err(|e| Error::Config(format!("source profile weights: {e}")))?;

    let root = spec.seed;
    let mut clouds = Vec::new();
    for (c, (&template, &count)) in spec.classes.iter().zip(&spec.source_per_class).enumerate() {
        for i in 0..count {
            let mut rng = seeds::rng(seeds::child(seeds::child(root, c as u64), i as u64));
            let profile = &spec.source_profiles[weights.sample(&mut rng)].profile;
            clouds.push(capture(template, profile, spec.points_per_cloud, c, &mut rng));
        }
    }
    let source = Dataset::new("source", names.clone(), clouds)?;

    let mut targets = Vec::with_capacity(spec.targets.len());
    for (t, target) in spec.targets.iter().enumerate() {
        let tseed = seeds::child(root ^ 0x7A5C_E11A_u64, t as u64 + 1);
        let mut clouds = Vec::new();
        for (c, (&template, &count)) in spec.classes.iter().zip(&target.per_class).enumerate() {
            for i in 0..count {
                let mut rng = seeds::rng(seeds::child(seeds::child(tseed, c as u64), i as u64));
                clouds.push(capture(template, &target.profile, spec.points_per_cloud, c, &mut rng));
            }
        }
        targets.push(Dataset::new(target.name.clone(), names.clone(), clouds)?);
    }
    Ok(SynthData { source, targets })
}

/// Samples a random instance of `template` and captures it under `profile`.
fn capture(template: Template, profile: &DomainProfile, n: usize, label: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    let parts = instance(template, rng);
    let keep = 1.0 - profile.occlusion_fraction;
    let pool_size = ((n as f64 / keep).ceil() as usize).max(n) * 2;
    let mut pool = sample_surface(&parts, pool_size, rng);

    if profile.occlusion_fraction > 0.0 {
        let dir = random_unit(rng);
        let mut keyed: Vec<(f64, Point)> = pool.iter().map(|p| (dot(p, &dir), *p)).collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        let retained = ((pool.len() as f64) * keep).round().max(n as f64) as usize;
        pool = keyed.into_iter().take(retained).map(|(_, p)| p).collect();
    }

    // Weighted subset without replacement (Efraimidis-Spirakis keys).
    let (zmin, zmax) = pool
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[2]), hi.max(p[2])));
    let span = (zmax - zmin).max(1e-9);
    let mut keyed: Vec<(f64, Point)> = pool
        .into_iter()
        .map(|p| {
            let w = (profile.density_skew * (p[2] - zmin) / span).exp();
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            (u.ln() / w, p)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points: Vec<Point> = keyed.into_iter().take(n).map(|(_, p)| p).collect();

    if profile.anisotropic_scale > 0.0 {
        let a = profile.anisotropic_scale;
        let s = [rng.gen_range(1.0 - a..=1.0 + a), rng.gen_range(1.0 - a..=1.0 + a), rng.gen_range(1.0 - a..=1.0 + a)];
        for p in &mut points {
            for k in 0..3 {
                p[k] *= s[k];
            }
        }
    }
    if profile.rotation_range > 0.0 {
        let angle = rng.gen_range(-profile.rotation_range..=profile.rotation_range);
        points = RigidTransform::about_z(angle).apply_all(&points);
    }
    if profile.jitter_sigma > 0.0 {
        let noise = Normal::new(0.0, profile.jitter_sigma).expect("positive sigma");
        for p in &mut points {
            for c in p.iter_mut() {
                *c += noise.sample(rng);
            }
        }
    }
    let cloud = PointCloud::new(points, label).expect("generator yields finite non-empty clouds");
    normalize(&cloud)
}

/// Surface primitives, z up.
#[derive(Debug, Clone, Copy)]
enum Part {
    Cuboid { center: Point, half: [f64; 3] },
    /// Vertical frustum (a cylinder when both radii agree), with caps.
    Frustum { base: Point, height: f64, r0: f64, r1: f64, caps: bool },
    Sphere { center: Point, radius: f64 },
}

impl Part {
    fn area(&self) -> f64 {
        match *self {
            Part::Cuboid { half: h, .. } => 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]),
            Part::Frustum { height, r0, r1, caps, .. } => {
                let slant = (height * height + (r0 - r1) * (r0 - r1)).sqrt();
                let lateral = PI * (r0 + r1) * slant;
                if caps {
                    lateral + PI * (r0 * r0 + r1 * r1)
                } else {
                    lateral
                }
            }
            Part::Sphere { radius, .. } => 4.0 * PI * radius * radius,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Point {
        match *self {
            Part::Cuboid { center: c, half: h } => {
                let faces = [h[1] * h[2], h[1] * h[2], h[0] * h[2], h[0] * h[2], h[0] * h[1], h[0] * h[1]];
                let total: f64 = faces.iter().sum();
                let mut pick = rng.gen_range(0.0..total);
                let mut face = 5;
                for (i, a) in faces.iter().enumerate() {
                    if pick < *a {
                        face = i;
                        break;
                    }
                    pick -= a;
                }
                let u = rng.gen_range(-1.0..=1.0);
                let v = rng.gen_range(-1.0..=1.0);
                let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
                let local = match face / 2 {
                    0 => [sign * h[0], u * h[1], v * h[2]],
                    1 => [u * h[0], sign * h[1], v * h[2]],
                    _ => [u * h[0], v * h[1], sign * h[2]],
                };
                [c[0] + local[0], c[1] + local[1], c[2] + local[2]]
            }
            Part::Frustum { base, height, r0, r1, caps } => {
                let slant = (height * height + (r0 - r1) * (r0 - r1)).sqrt();
                let lateral = PI * (r0 + r1) * slant;
                let bottom = if caps { PI * r0 * r0 } else { 0.0 };
                let top = if caps { PI * r1 * r1 } else { 0.0 };
                let pick = rng.gen_range(0.0..lateral + bottom + top);
                let theta = rng.gen_range(0.0..2.0 * PI);
                let (s, c) = theta.sin_cos();
                if pick < lateral {
                    // Height fraction with density proportional to the local radius.
                    let t = loop {
                        let t: f64 = rng.gen_range(0.0..=1.0);
                        let r = r0 + (r1 - r0) * t;
                        if rng.gen_range(0.0..=r0.max(r1)) <= r {
                            break t;
                        }
                    };
                    let r = r0 + (r1 - r0) * t;
                    [base[0] + r * c, base[1] + r * s, base[2] + t * height]
                } else {
                    let (r, z) = if pick < lateral + bottom { (r0, 0.0) } else { (r1, height) };
                    let rr = r * rng.gen_range(0.0f64..=1.0).sqrt();
                    [base[0] + rr * c, base[1] + rr * s, base[2] + z]
                }
            }
            Part::Sphere { center, radius } => {
                let d = random_unit(rng);
                [center[0] + radius * d[0], center[1] + radius * d[1], center[2] + radius * d[2]]
            }
        }
    }
}

fn instance<R: Rng>(template: Template, rng: &mut R) -> Vec<Part> {
    let mut u = |lo: f64, hi: f64| rng.gen_range(lo..=hi);
    match template {
        Template::Box => {
            let half = [u(0.3, 0.5), u(0.25, 0.45), u(0.35, 0.7)];
            vec![Part::Cuboid { center: [0.0, 0.0, half[2]], half }]
        }
        Template::Cylinder => {
            let r = u(0.2, 0.35);
            vec![Part::Frustum { base: [0.0; 3], height: u(0.6, 1.2), r0: r, r1: r, caps: true }]
        }
        Template::Sphere => vec![Part::Sphere { center: [0.0, 0.0, 0.5], radius: u(0.4, 0.6) }],
        Template::Table => {
            let (w, d, h) = (u(0.45, 0.7), u(0.3, 0.5), u(0.5, 0.8));
            let leg = u(0.025, 0.045);
            let inset = u(0.03, 0.1);
            let mut parts = vec![Part::Cuboid { center: [0.0, 0.0, h], half: [w, d, 0.03] }];
            for (sx, sy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                parts.push(Part::Cuboid {
                    center: [sx * (w - inset), sy * (d - inset), h / 2.0],
                    half: [leg, leg, h / 2.0],
                });
            }
            parts
        }
        Template::Chair => {
            let (w, seat_h, back_h) = (u(0.22, 0.3), u(0.35, 0.5), u(0.35, 0.6));
            let leg = u(0.02, 0.035);
            let mut parts = vec![
                Part::Cuboid { center: [0.0, 0.0, seat_h], half: [w, w, 0.03] },
                Part::Cuboid { center: [0.0, -w + 0.02, seat_h + back_h / 2.0], half: [w, 0.02, back_h / 2.0] },
            ];
            for (sx, sy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                parts.push(Part::Cuboid {
                    center: [sx * (w - leg), sy * (w - leg), seat_h / 2.0],
                    half: [leg, leg, seat_h / 2.0],
                });
            }
            parts
        }
        Template::Lamp => {
            let pole_h = u(0.8, 1.2);
            let shade_h = u(0.2, 0.35);
            vec![
                Part::Frustum { base: [0.0; 3], height: 0.03, r0: u(0.15, 0.25), r1: 0.15, caps: true },
                Part::Frustum { base: [0.0; 3], height: pole_h, r0: 0.02, r1: 0.02, caps: false },
                Part::Frustum {
                    base: [0.0, 0.0, pole_h - shade_h * 0.5],
                    height: shade_h,
                    r0: u(0.25, 0.35),
                    r1: u(0.08, 0.15),
                    caps: false,
                },
            ]
        }
        Template::Bottle => {
            let body_h = u(0.5, 0.8);
            let r = u(0.15, 0.25);
            vec![
                Part::Frustum { base: [0.0; 3], height: body_h, r0: r, r1: r, caps: true },
                Part::Frustum { base: [0.0, 0.0, body_h], height: 0.15, r0: r, r1: 0.06, caps: false },
                Part::Frustum { base: [0.0, 0.0, body_h + 0.15], height: u(0.1, 0.25), r0: 0.06, r1: 0.06, caps: true },
            ]
        }
    }
}

fn sample_surface<R: Rng>(parts: &[Part], count: usize, rng: &mut R) -> Vec<Point> {
    let areas: Vec<f64> = parts.iter().map(Part::area).collect();
    let pick = WeightedIndex::new(&areas).expect("parts have positive area");
    (0..count).map(|_| parts[pick.sample(rng)].sample(rng)).collect()
}

fn random_unit<R: Rng>(rng: &mut R) -> Point {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = dot(&v, &v).sqrt();
        if n > 1e-3 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

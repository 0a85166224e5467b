//! Seeded synthetic instances with injected outliers.

use nalgebra::{Point2, Point3, Rotation3, Unit, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::consensus::{Correspondence, LabelVector, MatchSet};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::pose::{project_point, CameraIntrinsics, Pose};

/// Image size of the synthetic camera.
pub const FRAME_WIDTH: f64 = 640.0;
pub const FRAME_HEIGHT: f64 = 480.0;
/// Minimum pixel distance between an injected outlier and the true projection.
pub const OUTLIER_MIN_OFFSET: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    IsometricGrid,
    TemplateBend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub outlier_ratio: f64,
    /// Gaussian noise: pixels for templates, model units for grids.
    pub noise: f64,
    pub seed: u64,
    /// Cylinder radius of the template bend, in template side lengths.
    pub bend_radius: f64,
    /// Distance of the template from the camera.
    pub depth: f64,
}

impl SynthSpec {
    pub fn isometric(n: usize, outlier_ratio: f64, seed: u64) -> Self {
        SynthSpec {
            kind: SynthKind::IsometricGrid,
            n,
            outlier_ratio,
            noise: 0.0,
            seed,
            bend_radius: 2.0,
            depth: 2.5,
        }
    }

    pub fn template(n: usize, outlier_ratio: f64, seed: u64) -> Self {
        SynthSpec {
            kind: SynthKind::TemplateBend,
            ..SynthSpec::isometric(n, outlier_ratio, seed)
        }
    }

    pub fn outlier_count(&self) -> usize {
        (self.outlier_ratio * self.n as f64).round() as usize
    }

    fn validate(&self, kind: SynthKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidSpec(format!("expected kind {kind:?}, got {:?}", self.kind)));
        }
        if !(0.0..1.0).contains(&self.outlier_ratio) {
            return Err(Error::InvalidSpec(format!(
                "outlier ratio {} outside [0, 1)",
                self.outlier_ratio
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidSpec(format!("noise {} must be >= 0", self.noise)));
        }
        if kind == SynthKind::TemplateBend {
            if !(self.bend_radius > 0.0 && self.bend_radius.is_finite()) {
                return Err(Error::InvalidSpec(format!("bend radius {} must be > 0", self.bend_radius)));
            }
            if !(self.depth > 1.0 && self.depth.is_finite()) {
                return Err(Error::InvalidSpec(format!("depth {} must be > 1", self.depth)));
            }
        }
        Ok(())
    }
}

/// `rows x cols = n` with `rows` the largest divisor not above `sqrt(n)`.
pub fn grid_shape(n: usize) -> Result<(usize, usize)> {
    let rows = (1..=n.isqrt()).rev().find(|r| n.is_multiple_of(*r)).unwrap_or(1);
    if rows < 2 {
        return Err(Error::InvalidSpec(format!(
            "{n} points do not factor into a grid with at least two rows"
        )));
    }
    Ok((rows, n / rows))
}

fn random_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> Rotation3<f64> {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = rng.random_range(-max_angle..=max_angle);
    Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::from(axis)), angle)
}

/// Sorted indices of the matches to corrupt.
fn pick_outliers(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> Vec<usize> {
    let mut picked = sample(rng, spec.n, spec.outlier_count()).into_vec();
    picked.sort_unstable();
    picked
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsometricInstance {
    pub source: TriMesh,
    pub target: TriMesh,
    pub matches: MatchSet,
}

/// Unit-spacing grid mesh matched to a rigidly moved copy. Outlier matches
/// point at a uniformly drawn wrong target vertex.
pub fn synth_isometric_instance(spec: &SynthSpec) -> Result<IsometricInstance> {
    spec.validate(SynthKind::IsometricGrid)?;
    let (rows, cols) = grid_shape(spec.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let source = TriMesh::grid(rows, cols, 1.0);
    let rotation = random_rotation(&mut rng, std::f64::consts::PI);
    let shift = Vector3::new(
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
    );
    let noise = Normal::new(0.0, spec.noise).expect("noise validated");
    let target_vertices = source
        .vertices()
        .iter()
        .map(|p| {
            let jitter = Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            Point3::from(rotation * p.coords + shift + jitter)
        })
        .collect();
    let target = TriMesh::new(target_vertices, source.triangles().to_vec())?;

    let outliers = pick_outliers(&mut rng, spec);
    let mut pairs: Vec<Correspondence> = (0..spec.n).map(|i| Correspondence { source: i, target: i }).collect();
    for &i in &outliers {
        // uniform over the n - 1 wrong targets
        let mut t = rng.random_range(0..spec.n - 1);
        if t >= i {
            t += 1;
        }
        pairs[i].target = t;
    }
    let gt = LabelVector::from_outliers(spec.n, outliers);
    Ok(IsometricInstance {
        source,
        target,
        matches: MatchSet::new(pairs).with_ground_truth(gt),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateInstance {
    /// Flat template, side length 1, centered at the origin in the z = 0 plane.
    pub template: Vec<Point3<f64>>,
    pub image: Vec<Point2<f64>>,
    pub intrinsics: CameraIntrinsics,
    pub matches: MatchSet,
    pub pose: Pose,
}

/// Wraps the template around a cylinder of radius `r` whose axis is parallel
/// to y; lengths along the surface are preserved.
fn bend(p: &Point3<f64>, r: f64) -> Point3<f64> {
    let angle = p.x / r;
    Point3::new(r * angle.sin(), p.y, r * (1.0 - angle.cos()))
}

/// Planar grid template, bent and posed in front of a 640x480 camera with
/// focal length 800. Outliers replace the image point by a uniform in-frame
/// pixel at least 5 px away from the true projection.
pub fn synth_template_instance(spec: &SynthSpec) -> Result<TemplateInstance> {
    spec.validate(SynthKind::TemplateBend)?;
    let (rows, cols) = grid_shape(spec.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let spacing = 1.0 / (rows.max(cols) - 1) as f64;
    let half = Vector3::new((cols - 1) as f64 * spacing / 2.0, (rows - 1) as f64 * spacing / 2.0, 0.0);
    let template: Vec<Point3<f64>> = TriMesh::grid(rows, cols, spacing)
        .vertices()
        .iter()
        .map(|p| p - half)
        .collect();

    let intrinsics = CameraIntrinsics::new(800.0, 800.0, FRAME_WIDTH / 2.0, FRAME_HEIGHT / 2.0)?;
    let rotation = random_rotation(&mut rng, 0.3);
    let translation = Vector3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), spec.depth);
    let pose = Pose::new(*rotation.matrix(), translation)?;

    let noise = Normal::new(0.0, spec.noise).expect("noise validated");
    let truth: Vec<Point2<f64>> = template
        .iter()
        .map(|p| project_point(&intrinsics, &pose, &bend(p, spec.bend_radius)))
        .collect::<Result<_>>()?;
    let mut image: Vec<Point2<f64>> = truth
        .iter()
        .map(|p| Point2::new(p.x + noise.sample(&mut rng), p.y + noise.sample(&mut rng)))
        .collect();

    let outliers = pick_outliers(&mut rng, spec);
    for &i in &outliers {
        image[i] = loop {
            let candidate = Point2::new(rng.random_range(0.0..FRAME_WIDTH), rng.random_range(0.0..FRAME_HEIGHT));
            if (candidate - truth[i]).norm() >= OUTLIER_MIN_OFFSET {
                break candidate;
            }
        };
    }
    let gt = LabelVector::from_outliers(spec.n, outliers);
    Ok(TemplateInstance {
        template,
        image,
        intrinsics,
        matches: MatchSet::identity(spec.n).with_ground_truth(gt),
        pose,
    })
}

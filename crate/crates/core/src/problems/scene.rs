//! Synthetic pose-regression scenes.
//!
//! Camera poses follow a smooth closed trajectory. Each pose is embedded into
//! a feature vector by a fixed random map `f = A z + tanh(B z + c)` of
//! `z = (p / radius, q)`, plus isotropic Gaussian noise. Three independent
//! random streams are derived from the seed: the embedding, the trajectory
//! times, and the feature noise, so changing `noise_sigma` only rescales the
//! noise draws.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::pose::PoseSample;
use crate::error::{Error, Result};
use crate::metrics::Pose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub feature_dim: usize,
    /// Trajectory radius in meters.
    pub radius: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_train: 1024,
            n_val: 256,
            noise_sigma: 0.0,
            seed: 0,
            feature_dim: 16,
            radius: 5.0,
        }
    }
}

const POSE_CODE_DIM: usize = 7;

struct Embedding {
    linear: Vec<[f64; POSE_CODE_DIM]>,
    inner: Vec<[f64; POSE_CODE_DIM]>,
    offset: Vec<f64>,
}

impl Embedding {
    fn new(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (POSE_CODE_DIM as f64).sqrt();
        let row = |rng: &mut ChaCha8Rng| {
            let mut r = [0.0; POSE_CODE_DIM];
            for v in &mut r {
                let z: f64 = StandardNormal.sample(rng);
                *v = z * scale;
            }
            r
        };
        let linear = (0..dim).map(|_| row(rng)).collect();
        let inner = (0..dim).map(|_| row(rng)).collect();
        let offset = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        Self { linear, inner, offset }
    }

    fn apply(&self, code: &[f64; POSE_CODE_DIM]) -> Vec<f64> {
        let dot = |r: &[f64; POSE_CODE_DIM]| r.iter().zip(code).map(|(a, b)| a * b).sum::<f64>();
        self.linear
            .iter()
            .zip(&self.inner)
            .zip(&self.offset)
            .map(|((a, b), c)| dot(a) + (dot(b) + c).tanh())
            .collect()
    }
}

/// Pose at trajectory time `t ∈ [0, 1)`. Quaternions are scalar-first with
/// `w ≥ 0`.
pub fn trajectory_pose(t: f64, radius: f64) -> Pose {
    let theta = 2.0 * PI * t;
    let p = [radius * theta.cos(), 0.6 * radius * theta.sin(), 0.2 * radius * (2.0 * theta).sin()];
    // Yaw stays within ±2 rad so the w ≥ 0 hemisphere is reached continuously.
    let yaw = 2.0 * theta.sin();
    let pitch = 0.25 * (3.0 * theta).sin();
    let roll = 0.15 * theta.cos();
    let (cy, sy) = ((yaw / 2.0).cos(), (yaw / 2.0).sin());
    let (cp, sp) = ((pitch / 2.0).cos(), (pitch / 2.0).sin());
    let (cr, sr) = ((roll / 2.0).cos(), (roll / 2.0).sin());
    let mut q = [
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ];
    if q[0] < 0.0 {
        q = q.map(|v| -v);
    }
    Pose::new(p, q).expect("trajectory quaternion is unit")
}

fn pose_code(pose: &Pose, radius: f64) -> [f64; POSE_CODE_DIM] {
    [
        pose.p[0] / radius,
        pose.p[1] / radius,
        pose.p[2] / radius,
        pose.q[0],
        pose.q[1],
        pose.q[2],
        pose.q[3],
    ]
}

/// Returns `(train, val)`.
pub fn make_synthetic_scene(spec: &SceneSpec) -> Result<(Vec<PoseSample>, Vec<PoseSample>)> {
    if spec.n_train == 0 || spec.n_val == 0 {
        return Err(Error::Empty("scene sample count"));
    }
    if spec.feature_dim == 0 {
        return Err(Error::Domain("feature_dim must be positive".into()));
    }
    if !(spec.noise_sigma >= 0.0) || !(spec.radius > 0.0) {
        return Err(Error::Domain("need noise_sigma >= 0 and radius > 0".into()));
    }
    let mut embed_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut time_rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(2));
    let embedding = Embedding::new(spec.feature_dim, &mut embed_rng);
    let mut draw = |count: usize| -> Vec<PoseSample> {
        (0..count)
            .map(|_| {
                let t: f64 = time_rng.gen_range(0.0..1.0);
                let pose = trajectory_pose(t, spec.radius);
                let mut feature = embedding.apply(&pose_code(&pose, spec.radius));
                for v in &mut feature {
                    let z: f64 = StandardNormal.sample(&mut noise_rng);
                    *v += spec.noise_sigma * z;
                }
                PoseSample { feature, pose }
            })
            .collect()
    };
    let train = draw(spec.n_train);
    let val = draw(spec.n_val);
    Ok((train, val))
}

/// Copies of `samples` with extra Gaussian feature noise of scale `level`.
pub fn perturb_features(samples: &[PoseSample], level: f64, seed: u64) -> Vec<PoseSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples
        .iter()
        .map(|s| {
            let feature = s
                .feature
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + level * z
                })
                .collect();
            PoseSample { feature, pose: s.pose }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::quat_norm;

    fn spec(noise: f64) -> SceneSpec {
        SceneSpec {
            n_train: 200,
            n_val: 50,
            noise_sigma: noise,
            seed: 17,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(make_synthetic_scene(&spec(0.1)).unwrap(), make_synthetic_scene(&spec(0.1)).unwrap());
        let other = SceneSpec { seed: 18, ..spec(0.1) };
        assert_ne!(make_synthetic_scene(&spec(0.1)).unwrap(), make_synthetic_scene(&other).unwrap());
    }

    #[test]
    fn ground_truth_is_unit_and_in_upper_hemisphere() {
        let (train, val) = make_synthetic_scene(&spec(0.0)).unwrap();
        for s in train.iter().chain(&val) {
            assert!((quat_norm(&s.pose.q) - 1.0).abs() < 1e-12);
            assert!(s.pose.q[0] >= 0.0);
            assert_eq!(s.feature.len(), 16);
        }
    }

    #[test]
    fn noiseless_features_are_a_function_of_pose() {
        let (train, _) = make_synthetic_scene(&spec(0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let embedding = Embedding::new(16, &mut rng);
        for s in &train {
            assert_eq!(s.feature, embedding.apply(&pose_code(&s.pose, 5.0)));
        }
    }

    #[test]
    fn noise_scale_doubles() {
        let big = SceneSpec { n_train: 10_000, ..spec(0.0) };
        let (clean, _) = make_synthetic_scene(&big).unwrap();
        let std_of = |sigma: f64| {
            let (noisy, _) = make_synthetic_scene(&SceneSpec { noise_sigma: sigma, ..big.clone() }).unwrap();
            let diffs: Vec<f64> = noisy
                .iter()
                .zip(&clean)
                .flat_map(|(a, b)| a.feature.iter().zip(&b.feature).map(|(x, y)| x - y).collect::<Vec<_>>())
                .collect();
            let n = diffs.len() as f64;
            let mean = diffs.iter().sum::<f64>() / n;
            (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        let (s1, s2) = (std_of(0.05), std_of(0.1));
        assert!((s1 - 0.05).abs() < 0.05 * 0.02, "{s1}");
        assert!((s2 / s1 - 2.0).abs() < 0.02, "{}", s2 / s1);
    }

    #[test]
    fn trajectory_is_smooth() {
        let a = trajectory_pose(0.3, 5.0);
        let b = trajectory_pose(0.3 + 1e-6, 5.0);
        for j in 0..4 {
            assert!((a.q[j] - b.q[j]).abs() < 1e-4);
        }
        for j in 0..3 {
            assert!((a.p[j] - b.p[j]).abs() < 1e-3);
        }
    }

    #[test]
    fn perturbation_keeps_poses() {
        let (train, _) = make_synthetic_scene(&spec(0.0)).unwrap();
        let noisy = perturb_features(&train, 0.5, 3);
        assert_eq!(noisy.len(), train.len());
        assert!(noisy.iter().zip(&train).all(|(a, b)| a.pose == b.pose && a.feature != b.feature));
        assert_eq!(perturb_features(&train, 0.0, 3), train);
    }

    #[test]
    fn rejects_empty_counts() {
        assert!(make_synthetic_scene(&SceneSpec { n_val: 0, ..spec(0.0) }).is_err());
    }
}

#![allow(dead_code)]

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use ndarray::Array3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavesplat::volume::{apply_tf, ControlPoint, SampleType, ScalarVolume};
use wavesplat::{RadianceVolume, TransferFunction, VolumeMeta};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let q = Quaternion::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

/// `R diag(σ²) Rᵀ` with per-axis σ drawn from `sigma`.
pub fn random_covariance(rng: &mut impl Rng, sigma: std::ops::Range<f64>) -> Matrix3<f64> {
    let r = random_rotation(rng);
    let s = Vector3::from_fn(|_, _| rng.gen_range(sigma.clone()).powi(2));
    r * Matrix3::from_diagonal(&s) * r.transpose()
}

pub fn random_array(rng: &mut impl Rng, dims: [usize; 3]) -> Array3<f64> {
    Array3::from_shape_fn(dims, |_| rng.gen_range(-1.0..1.0))
}

/// Sampled `exp(-½ dᵀ Σ⁻¹ d)` at integer voxel positions.
pub fn sampled_gaussian(dims: [usize; 3], center: Vector3<f64>, cov: &Matrix3<f64>) -> Array3<f64> {
    let p = cov.try_inverse().expect("invertible covariance");
    Array3::from_shape_fn(dims, |(i, j, k)| {
        let d = Vector3::new(i as f64, j as f64, k as f64) - center;
        (-0.5 * d.dot(&(p * d))).exp()
    })
}

pub const SCENE_DIMS: [usize; 3] = [64, 64, 64];

/// Fixed scalar field: 20 anisotropic Gaussians, normalized to a unit peak.
pub fn scene_field() -> ScalarVolume {
    let mut rng = rng(20);
    let mut field = Array3::<f64>::zeros(SCENE_DIMS);
    for _ in 0..20 {
        let c = Vector3::from_fn(|_, _| rng.gen_range(14.0..50.0));
        let cov = random_covariance(&mut rng, 2.0..7.0);
        let amp = rng.gen_range(0.3..1.0);
        field.scaled_add(amp, &sampled_gaussian(SCENE_DIMS, c, &cov));
    }
    let peak = field.iter().copied().fold(0.0, f64::max);
    field.mapv_inplace(|v| v / peak);
    ScalarVolume::from_array(VolumeMeta::new(SCENE_DIMS, SampleType::F32Le), field).unwrap()
}

pub fn scene_tf() -> TransferFunction {
    TransferFunction::new(
        vec![
            ControlPoint::new(0.0, [0.0, 0.0, 0.0, 0.0]),
            ControlPoint::new(0.25, [0.1, 0.3, 0.8, 0.05]),
            ControlPoint::new(0.6, [0.9, 0.7, 0.2, 0.2]),
            ControlPoint::new(1.0, [1.0, 0.3, 0.1, 0.5]),
        ],
        None,
    )
    .unwrap()
}

pub fn scene_radiance() -> RadianceVolume {
    apply_tf(&scene_field(), &scene_tf())
}

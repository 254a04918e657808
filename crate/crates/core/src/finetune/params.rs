use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::construct::{cov_to_scale_rot, ConstructError, PlyVertex, Splat};

/// Probability clamp applied before taking logits of colors and opacities.
pub const PROB_EPS: f64 = 1e-4;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn logit(p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (p / (1.0 - p)).ln()
}

/// Optimization-space parameters of one splat.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplatParam {
    pub center: [f64; 3],
    pub log_scale: [f64; 3],
    /// `(w, x, y, z)`, normalized on use.
    pub rotation: [f64; 4],
    pub rgb_logit: [f64; 3],
    pub opacity_logit: f64,
}

pub const PARAM_LEN: usize = 14;

/// Parameter groups, each with its own learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Center,
    LogScale,
    Rotation,
    Rgb,
    Opacity,
}

impl Group {
    pub const ALL: [Group; 5] = [Group::Center, Group::LogScale, Group::Rotation, Group::Rgb, Group::Opacity];

    /// Slots of this group in [`SplatParam::to_array`].
    pub fn range(self) -> std::ops::Range<usize> {
        match self {
            Group::Center => 0..3,
            Group::LogScale => 3..6,
            Group::Rotation => 6..10,
            Group::Rgb => 10..13,
            Group::Opacity => 13..14,
        }
    }
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub(crate) fn quat_to_rot(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub(crate) fn normalize_quat(q: [f64; 4]) -> ([f64; 4], f64) {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    (q.map(|v| v / n), n)
}

impl SplatParam {
    pub fn to_array(&self) -> [f64; PARAM_LEN] {
        let mut a = [0.0; PARAM_LEN];
        a[0..3].copy_from_slice(&self.center);
        a[3..6].copy_from_slice(&self.log_scale);
        a[6..10].copy_from_slice(&self.rotation);
        a[10..13].copy_from_slice(&self.rgb_logit);
        a[13] = self.opacity_logit;
        a
    }

    pub fn from_array(a: &[f64; PARAM_LEN]) -> Self {
        SplatParam {
            center: [a[0], a[1], a[2]],
            log_scale: [a[3], a[4], a[5]],
            rotation: [a[6], a[7], a[8], a[9]],
            rgb_logit: [a[10], a[11], a[12]],
            opacity_logit: a[13],
        }
    }

    pub fn from_splat(s: &Splat) -> Result<Self, ConstructError> {
        let (scales, rotation) = cov_to_scale_rot(&s.covariance)?;
        Ok(SplatParam {
            center: s.center.into(),
            log_scale: scales.map(f64::ln),
            rotation,
            rgb_logit: [0, 1, 2].map(|c| logit(s.amplitude[c])),
            opacity_logit: logit(s.amplitude[3]),
        })
    }

    /// Straight from a stored vertex, without refactoring the covariance.
    pub fn from_vertex(v: &PlyVertex) -> Self {
        let s = v.to_splat();
        SplatParam {
            center: v.position.map(f64::from),
            log_scale: v.log_scale.map(f64::from),
            rotation: v.rotation.map(f64::from),
            rgb_logit: [0, 1, 2].map(|c| logit(s.amplitude[c])),
            opacity_logit: logit(s.amplitude[3]),
        }
    }

    pub fn rgb(&self) -> [f64; 3] {
        self.rgb_logit.map(sigmoid)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scales(&self) -> [f64; 3] {
        self.log_scale.map(f64::exp)
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        let r = quat_to_rot(normalize_quat(self.rotation).0);
        let s2 = Matrix3::from_diagonal(&Vector3::from(self.scales().map(|s| s * s)));
        r * s2 * r.transpose()
    }

    pub fn to_splat(&self) -> Splat {
        let rgb = self.rgb();
        Splat {
            center: Vector3::from(self.center),
            covariance: self.covariance(),
            amplitude: [rgb[0], rgb[1], rgb[2], self.opacity()],
            band: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplatParams {
    pub splats: Vec<SplatParam>,
}

impl SplatParams {
    pub fn from_splats(splats: &[Splat]) -> Result<Self, ConstructError> {
        Ok(SplatParams {
            splats: splats.iter().map(SplatParam::from_splat).collect::<Result<_, _>>()?,
        })
    }

    pub fn from_vertices(vertices: &[PlyVertex]) -> Self {
        SplatParams {
            splats: vertices.iter().map(SplatParam::from_vertex).collect(),
        }
    }

    pub fn materialize(&self) -> Vec<Splat> {
        self.splats.iter().map(SplatParam::to_splat).collect()
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn splat_round_trip() {
        let s = Splat {
            center: Vector3::new(0.1, 0.2, -0.3),
            covariance: Matrix3::new(0.04, 0.01, 0.0, 0.01, 0.02, 0.003, 0.0, 0.003, 0.01),
            amplitude: [0.2, 0.5, 0.9, 0.7],
            band: None,
        };
        let p = SplatParam::from_splat(&s).unwrap();
        let back = p.to_splat();
        assert_relative_eq!(back.covariance, s.covariance, epsilon = 1e-12);
        for c in 0..4 {
            assert_relative_eq!(back.amplitude[c], s.amplitude[c], epsilon = 1e-12);
        }
        assert_eq!(SplatParam::from_array(&p.to_array()), p);
    }

    #[test]
    fn unnormalized_quaternion_is_normalized_on_use() {
        let mut p = SplatParam {
            center: [0.0; 3],
            log_scale: [0.0, -1.0, -2.0],
            rotation: [1.0, 0.0, 0.0, 0.0],
            rgb_logit: [0.0; 3],
            opacity_logit: 0.0,
        };
        let a = p.covariance();
        p.rotation = [3.0, 0.0, 0.0, 0.0];
        assert_relative_eq!(p.covariance(), a, epsilon = 1e-15);
        assert_eq!(p.opacity(), 0.5);
    }

    #[test]
    fn groups_tile_the_parameter_vector() {
        let mut seen = vec![false; PARAM_LEN];
        for g in Group::ALL {
            for i in g.range() {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }
}

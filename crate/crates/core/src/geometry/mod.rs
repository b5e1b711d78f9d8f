//! Pinhole camera geometry, rigid motions and differentiable view synthesis.
//!
//! Pose convention: a [`Pose6`] predicted for a (target, source) pair maps
//! 3-D points expressed in the target camera frame into the source camera
//! frame, `X_s = R X_t + t`. That is the direction inverse warping needs.
//! Ground-truth camera motions (`inv(T_i) * T_j`, camera-to-world poses) are
//! the inverse of that mapping.

mod warp;

pub use warp::{
    bilinear_sample, compose_mats, euler_to_rotation, inverse_warp, mat_to_pose_vec,
    pose_vec_to_hom, pose_vec_to_mat, project_coords, Warped,
};

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuf;

/// Pinhole intrinsics for an image of `width x height` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be finite and positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::InvalidArgument(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Intrinsics of pyramid level `level` (level 0 is full resolution),
    /// where each level averages 2x2 blocks of the one above. Pixel centres
    /// sit at integer coordinates, hence the half-pixel terms.
    pub fn scaled(&self, level: u32) -> Result<Self> {
        let f = 1usize << level;
        if self.width % f != 0 || self.height % f != 0 {
            return Err(Error::InvalidArgument(format!(
                "{}x{} image is not divisible by 2^{level}",
                self.width, self.height
            )));
        }
        let s = f as f64;
        Ok(Self {
            fx: self.fx / s,
            fy: self.fy / s,
            cx: (self.cx + 0.5) / s - 0.5,
            cy: (self.cy + 0.5) / s - 0.5,
            width: self.width / f,
            height: self.height / f,
        })
    }

    /// Intrinsics after a half-pixel-aligned resize to `width x height`.
    pub fn rescaled(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
            width,
            height,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// Six-DOF relative motion: translation plus x-y-z Euler angles (radians).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose6 {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl Pose6 {
    pub const fn new(tx: f64, ty: f64, tz: f64, rx: f64, ry: f64, rz: f64) -> Self {
        Self {
            tx,
            ty,
            tz,
            rx,
            ry,
            rz,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.tx, self.ty, self.tz, self.rx, self.ry, self.rz]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.tx, self.ty, self.tz)
    }
}

/// `R = Rz(rz) * Ry(ry) * Rx(rx)`.
pub fn rotation_from_euler(rx: f64, ry: f64, rz: f64) -> Matrix3<f64> {
    let (sx, cx) = rx.sin_cos();
    let (sy, cy) = ry.sin_cos();
    let (sz, cz) = rz.sin_cos();
    Matrix3::new(
        cz * cy,
        cz * sy * sx - sz * cx,
        cz * sy * cx + sz * sx,
        sz * cy,
        sz * sy * sx + cz * cx,
        sz * sy * cx - cz * sx,
        -sy,
        cy * sx,
        cy * cx,
    )
}

/// Inverse of [`rotation_from_euler`] on the principal branch `|ry| <= pi/2`.
pub fn euler_from_rotation(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let ry = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let rx = r[(2, 1)].atan2(r[(2, 2)]);
    let rz = r[(1, 0)].atan2(r[(0, 0)]);
    (rx, ry, rz)
}

/// Homogeneous 4x4 rigid motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform(Matrix4<f64>);

impl RigidTransform {
    pub const ORTHONORMAL_TOL: f64 = 1e-6;

    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self(m)
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::from_parts(Matrix3::identity(), Vector3::new(x, y, z))
    }

    /// Validates the rigid-motion invariants before wrapping `m`.
    pub fn from_matrix(m: Matrix4<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("transform has non-finite entries".into()));
        }
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidArgument(format!(
                "bottom row must be (0, 0, 0, 1), got {bottom:?}"
            )));
        }
        let t = Self(m);
        let r = t.rotation();
        let ortho = (r * r.transpose() - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if ortho > Self::ORTHONORMAL_TOL || (det - 1.0).abs() > Self::ORTHONORMAL_TOL {
            return Err(Error::InvalidArgument(format!(
                "rotation block is not a proper rotation (|RR^T - I| = {ortho:.3e}, det = {det})"
            )));
        }
        Ok(t)
    }

    /// Row-major 3x4 `[R | t]`, as stored in KITTI pose files.
    pub fn from_row_major_3x4(v: &[f64; 12]) -> Result<Self> {
        let mut m = Matrix4::identity();
        for r in 0..3 {
            for c in 0..4 {
                m[(r, c)] = v[r * 4 + c];
            }
        }
        Self::from_matrix(m)
    }

    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..4 {
                out[r * 4 + c] = self.0[(r, c)];
            }
        }
        out
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform(self.0 * other.0)
    }

    /// Closed-form inverse `[R^T | -R^T t]`.
    pub fn invert(&self) -> RigidTransform {
        let rt = self.rotation().transpose();
        RigidTransform::from_parts(rt, -(rt * self.translation()))
    }

    pub fn to_pose6(&self) -> Pose6 {
        let (rx, ry, rz) = euler_from_rotation(&self.rotation());
        let t = self.translation();
        Pose6::new(t.x, t.y, t.z, rx, ry, rz)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// `[R(rx, ry, rz) | t; 0 0 0 1]` with `R = Rz * Ry * Rx`.
pub fn pose_vec_to_transform(p: &Pose6) -> Result<RigidTransform> {
    if !p.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite pose {p:?}")));
    }
    Ok(RigidTransform::from_parts(
        rotation_from_euler(p.rx, p.ry, p.rz),
        p.translation(),
    ))
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(a: &RigidTransform) -> RigidTransform {
    a.invert()
}

/// Single-channel depth map. Zero marks a pixel without a measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "depth buffer of {} values does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "depth must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, depth: f32) -> Result<Self> {
        Self::new(width, height, vec![depth; width * height])
    }

    /// `depth = 1 / disparity`, from a single-channel disparity image.
    pub fn from_disparity(disp: &ImageBuf) -> Result<Self> {
        if disp.channels() != 1 {
            return Err(Error::Shape("disparity must be single-channel".into()));
        }
        Self::new(
            disp.width(),
            disp.height(),
            disp.data().iter().map(|d| 1.0 / d).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn to_image(&self) -> ImageBuf {
        ImageBuf::from_vec(self.width, self.height, 1, self.data.clone())
            .expect("dimensions are consistent")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn assert_mat_close(a: &Matrix4<f64>, b: &Matrix4<f64>, tol: f64) {
        let d = (a - b).abs().max();
        assert!(d <= tol, "max diff {d}\n{a}\n{b}");
    }

    // Independent rotation oracle: explicit elementary matrices.
    fn rot_oracle(rx: f64, ry: f64, rz: f64) -> Matrix3<f64> {
        let rxm = Matrix3::new(1.0, 0.0, 0.0, 0.0, rx.cos(), -rx.sin(), 0.0, rx.sin(), rx.cos());
        let rym = Matrix3::new(ry.cos(), 0.0, ry.sin(), 0.0, 1.0, 0.0, -ry.sin(), 0.0, ry.cos());
        let rzm = Matrix3::new(rz.cos(), -rz.sin(), 0.0, rz.sin(), rz.cos(), 0.0, 0.0, 0.0, 1.0);
        rzm * rym * rxm
    }

    #[test]
    fn zero_pose_is_identity() {
        let t = pose_vec_to_transform(&Pose6::zero()).unwrap();
        assert_eq!(t, RigidTransform::identity());
    }

    #[test]
    fn pure_translation() {
        let t = pose_vec_to_transform(&Pose6::new(1.0, 2.0, 3.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(t.rotation(), Matrix3::identity());
        assert_eq!(t.translation(), Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn quarter_turn_about_z() {
        let t = pose_vec_to_transform(&Pose6::new(0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2)).unwrap();
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((t.rotation() - expected).abs().max() < 1e-12);
        assert!((t.rotation() - rot_oracle(0.0, 0.0, FRAC_PI_2)).abs().max() < 1e-12);
    }

    #[test]
    fn euler_matches_elementary_product() {
        for &(rx, ry, rz) in &[(0.1, -0.2, 0.3), (1.0, 0.5, -2.0), (-0.7, 1.2, 0.05)] {
            let r = rotation_from_euler(rx, ry, rz);
            assert!((r - rot_oracle(rx, ry, rz)).abs().max() < 1e-12);
            let (a, b, c) = euler_from_rotation(&r);
            assert!((a - rx).abs() < 1e-12 && (b - ry).abs() < 1e-12 && (c - rz).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_pose_is_rejected() {
        let p = Pose6::new(f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(pose_vec_to_transform(&p), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn composition_identities() {
        let t = pose_vec_to_transform(&Pose6::new(0.3, -1.0, 2.0, 0.1, 0.2, -0.3)).unwrap();
        assert_mat_close(compose(&t, &RigidTransform::identity()).matrix(), t.matrix(), 0.0);
        assert_mat_close(
            compose(&t, &invert(&t)).matrix(),
            &Matrix4::identity(),
            1e-6,
        );
        let qz = pose_vec_to_transform(&Pose6::new(0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2)).unwrap();
        let half = compose(&qz, &qz);
        let mut oracle = Matrix4::identity();
        oracle
            .fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&rot_oracle(0.0, 0.0, PI));
        assert_mat_close(half.matrix(), &oracle, 1e-12);
    }

    #[test]
    fn invert_matches_general_inverse() {
        let t = pose_vec_to_transform(&Pose6::new(4.0, -2.5, 0.7, 0.4, -0.9, 2.2)).unwrap();
        let general = t.matrix().try_inverse().unwrap();
        assert_mat_close(invert(&t).matrix(), &general, 1e-9);
        assert_eq!(invert(&RigidTransform::identity()), RigidTransform::identity());
        assert_eq!(
            invert(&RigidTransform::from_translation(1.0, 0.0, 0.0)),
            RigidTransform::from_translation(-1.0, 0.0, 0.0)
        );
    }

    #[test]
    fn from_matrix_rejects_non_rigid() {
        let mut m = Matrix4::identity();
        m[(0, 0)] = 2.0;
        assert!(RigidTransform::from_matrix(m).is_err());
        let mut m = Matrix4::identity();
        m[(3, 0)] = 1.0;
        assert!(RigidTransform::from_matrix(m).is_err());
    }

    #[test]
    fn intrinsics_scale_exactly() {
        let k = CameraIntrinsics::new(100.0, 120.0, 63.0, 31.0, 128, 64).unwrap();
        let k2 = k.scaled(2).unwrap();
        assert_eq!((k2.fx, k2.fy, k2.cx, k2.cy, k2.width, k2.height), (25.0, 30.0, 15.375, 7.375, 32, 16));
        assert!(CameraIntrinsics::new(100.0, 100.0, 10.0, 5.0, 20, 10).unwrap().scaled(2).is_err());
        assert!(CameraIntrinsics::new(-1.0, 100.0, 10.0, 5.0, 20, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 100.0, 20.0, 5.0, 20, 10).is_err());
    }

    #[test]
    fn depth_map_rejects_negative_values() {
        assert!(DepthMap::new(2, 1, vec![1.0, 0.0]).is_ok());
        assert!(DepthMap::new(2, 1, vec![1.0, -1.0]).is_err());
        assert!(DepthMap::new(2, 1, vec![f32::NAN, 1.0]).is_err());
        assert!(DepthMap::new(2, 1, vec![1.0]).is_err());
        let d = DepthMap::from_disparity(&ImageBuf::from_vec(2, 1, 1, vec![0.5, 4.0]).unwrap())
            .unwrap();
        assert_eq!(d.data(), &[2.0, 0.25]);
    }
}

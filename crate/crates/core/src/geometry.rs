//! Pinhole camera model and planar fiducial pose recovery.
//!
//! Poses are expressed in the camera frame: +z along the optical axis, +x to
//! the right and +y down the image. A tag is a square of known side length in
//! its own z = 0 plane; its corners are ordered counter-clockwise starting at
//! the bottom-left, i.e. at tag coordinates `(-h, +h)`, `(+h, +h)`, `(+h, -h)`
//! and `(-h, -h)` for half-side `h`.

use nalgebra::{convert, Matrix3, RealField, Rotation3, SMatrix, SVector, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("tag corner {corner} projects behind the camera (z = {depth})")]
    CornerBehindCamera { corner: usize, depth: f64 },
    #[error("degenerate observation: {0}")]
    DegenerateObservation(&'static str),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("invalid marker: {0}")]
    InvalidMarker(&'static str),
    #[error("invalid pose: {0}")]
    InvalidPose(&'static str),
}

type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub image_w: u32,
    pub image_h: u32,
}

impl<T: RealField + Copy> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, image_w: u32, image_h: u32) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, image_w, image_h };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive"));
        }
        let w: T = convert(f64::from(self.image_w));
        let h: T = convert(f64::from(self.image_h));
        if !(self.cx > T::zero() && self.cx < w && self.cy > T::zero() && self.cy < h) {
            return Err(GeometryError::InvalidIntrinsics("principal point outside the image"));
        }
        Ok(())
    }

    /// Maps a camera-frame point to pixel coordinates.
    #[inline]
    pub fn to_pixel(&self, p: &Vector3<T>) -> Vector2<T> {
        Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Inverse of the intrinsic matrix applied to a pixel: normalized image coordinates.
    #[inline]
    pub fn normalize(&self, px: &Vector2<T>) -> Vector2<T> {
        Vector2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy)
    }

    pub fn contains(&self, px: &Vector2<T>) -> bool {
        let w: T = convert(f64::from(self.image_w));
        let h: T = convert(f64::from(self.image_h));
        px.x >= T::zero() && px.x <= w && px.y >= T::zero() && px.y <= h
    }
}

impl<T: RealField + Copy> Default for CameraIntrinsics<T> {
    /// 640x480 sensor with a 600 px focal length.
    fn default() -> Self {
        Self {
            fx: convert(600.0),
            fy: convert(600.0),
            cx: convert(320.0),
            cy: convert(240.0),
            image_w: 640,
            image_h: 480,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerSpec<T> {
    pub side_len: T,
    pub id: u32,
}

impl<T: RealField + Copy> MarkerSpec<T> {
    pub fn new(side_len: T, id: u32) -> Result<Self> {
        if !(side_len > T::zero()) {
            return Err(GeometryError::InvalidMarker("side length must be positive"));
        }
        Ok(Self { side_len, id })
    }

    /// Corner positions in the tag plane, in the canonical order.
    pub fn corners(&self) -> [Vector3<T>; 4] {
        let h = self.side_len * convert(0.5);
        let z = T::zero();
        [Vector3::new(-h, h, z), Vector3::new(h, h, z), Vector3::new(h, -h, z), Vector3::new(-h, -h, z)]
    }
}

impl<T: RealField + Copy> Default for MarkerSpec<T> {
    /// Wristband-scale tag, 5 cm across.
    fn default() -> Self {
        Self { side_len: convert(0.05), id: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagObservation<T> {
    pub corners: [Vector2<T>; 4],
    pub id: u32,
    pub timestamp_ms: f64,
}

impl<T: RealField + Copy> TagObservation<T> {
    /// True when the corners form a strictly convex quadrilateral.
    pub fn is_strictly_convex(&self) -> bool {
        let mut sign = 0i8;
        for i in 0..4 {
            let a = self.corners[i];
            let b = self.corners[(i + 1) % 4];
            let c = self.corners[(i + 2) % 4];
            let cross = (b - a).perp(&(c - b));
            let s = if cross > T::zero() {
                1
            } else if cross < T::zero() {
                -1
            } else {
                return false;
            };
            if sign == 0 {
                sign = s;
            } else if sign != s {
                return false;
            }
        }
        true
    }

    pub fn within_image(&self, k: &CameraIntrinsics<T>) -> bool {
        self.corners.iter().all(|c| k.contains(c))
    }
}

/// Rigid transform taking tag-frame points into the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerPose<T: RealField + Copy> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: RealField + Copy> MarkerPose<T> {
    /// Checks the rotation is orthonormal with det +1 (to `tol`) and that the
    /// marker sits in front of the camera.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>, tol: T) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if !(ortho <= tol) || !((rotation.determinant() - T::one()).abs() <= tol) {
            return Err(GeometryError::InvalidPose("rotation is not a proper rotation"));
        }
        if !(translation.z > T::zero()) {
            return Err(GeometryError::InvalidPose("marker must be in front of the camera"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_axis_angle(axis_angle: Vector3<T>, translation: Vector3<T>) -> Self {
        Self { rotation: Rotation3::new(axis_angle).into_inner(), translation }
    }

    /// Geodesic angle between two rotations, in radians.
    ///
    /// Uses the chordal form, which stays accurate for tiny angles where
    /// `acos` of the trace loses half the digits.
    pub fn rotation_error(&self, other: &Self) -> T {
        let chord = (self.rotation - other.rotation).norm();
        let two: T = convert(2.0);
        let s = (chord / (two * two.sqrt())).min(T::one());
        two * s.asin()
    }

    pub fn translation_error(&self, other: &Self) -> T {
        (self.translation - other.translation).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcpPoint<T: RealField + Copy> {
    pub position: Vector3<T>,
    pub timestamp_ms: f64,
}

/// Projects the four tag corners through the pinhole model.
pub fn project<T: RealField + Copy>(
    pose: &MarkerPose<T>,
    spec: &MarkerSpec<T>,
    k: &CameraIntrinsics<T>,
) -> Result<TagObservation<T>> {
    let mut corners = [Vector2::zeros(); 4];
    for (i, p) in spec.corners().iter().enumerate() {
        let c = pose.rotation * p + pose.translation;
        if !(c.z > T::zero()) {
            return Err(GeometryError::CornerBehindCamera { corner: i, depth: to_f64(c.z) });
        }
        corners[i] = k.to_pixel(&c);
    }
    Ok(TagObservation { corners, id: spec.id, timestamp_ms: 0.0 })
}

/// Synthetic detector output: the projected corners with i.i.d. Gaussian
/// pixel noise of standard deviation `noise_px`.
pub fn observe<T: RealField + Copy, R: Rng + ?Sized>(
    pose: &MarkerPose<T>,
    spec: &MarkerSpec<T>,
    k: &CameraIntrinsics<T>,
    noise_px: f64,
    timestamp_ms: f64,
    rng: &mut R,
) -> Result<TagObservation<T>> {
    let mut obs = project(pose, spec, k)?;
    obs.timestamp_ms = timestamp_ms;
    for c in obs.corners.iter_mut() {
        let du: f64 = rng.sample(StandardNormal);
        let dv: f64 = rng.sample(StandardNormal);
        c.x += convert(du * noise_px);
        c.y += convert(dv * noise_px);
    }
    Ok(obs)
}

const REFINE_MAX_ITERS: usize = 50;

/// Recovers the marker pose from its four observed corners.
///
/// A DLT homography between the tag plane and normalized image coordinates
/// gives the first two rotation columns and the translation up to scale; the
/// rotation is projected onto SO(3) via SVD and the pose is then refined by
/// Levenberg-Marquardt on the pixel reprojection error. Refinement also runs
/// from the pose mirrored about the viewing ray, since a small planar tag
/// has two nearby minima; the cheaper solution facing the camera wins.
pub fn estimate_pose<T: RealField + Copy>(
    obs: &TagObservation<T>,
    spec: &MarkerSpec<T>,
    k: &CameraIntrinsics<T>,
) -> Result<MarkerPose<T>> {
    if !obs.is_strictly_convex() {
        return Err(GeometryError::DegenerateObservation("corners are not a strictly convex quadrilateral"));
    }
    let h = planar_homography(obs, spec, k)?;
    let initial = pose_from_homography(&h)?;
    let model = spec.corners();

    // Planar targets admit a second reprojection minimum with the tag normal
    // mirrored about the viewing ray; refine from both and keep the better.
    let mut best = initial;
    refine_pose(&mut best, obs, spec, k);
    let mut best_cost = reprojection_cost(&best, obs, &model, k);
    if let Some(mut alt) = mirrored_about_view_ray(&initial) {
        refine_pose(&mut alt, obs, spec, k);
        let alt_cost = reprojection_cost(&alt, obs, &model, k);
        if alt_cost < best_cost && faces_camera(&alt) {
            best = alt;
            best_cost = alt_cost;
        }
    }
    debug_assert!(best_cost.is_finite());
    Ok(best)
}

/// Tag normal in the camera frame points back along the viewing ray.
fn faces_camera<T: RealField + Copy>(pose: &MarkerPose<T>) -> bool {
    pose.rotation.column(2).dot(&pose.translation) > T::zero()
}

/// Pose with the same translation and the tag normal reflected about the
/// line of sight to the tag centre.
fn mirrored_about_view_ray<T: RealField + Copy>(pose: &MarkerPose<T>) -> Option<MarkerPose<T>> {
    let view = pose.translation.try_normalize(T::default_epsilon())?;
    let normal = pose.rotation.column(2).into_owned();
    let two: T = convert(2.0);
    let mirrored = view * (two * normal.dot(&view)) - normal;
    let q = Rotation3::rotation_between(&normal, &mirrored)?;
    Some(MarkerPose { rotation: q.into_inner() * pose.rotation, translation: pose.translation })
}

/// Homography H with h33 = 1 mapping tag-plane (X, Y, 1) to normalized image
/// coordinates.
fn planar_homography<T: RealField + Copy>(
    obs: &TagObservation<T>,
    spec: &MarkerSpec<T>,
    k: &CameraIntrinsics<T>,
) -> Result<Matrix3<T>> {
    let model = spec.corners();
    // Scale tag coordinates to unit size for conditioning.
    let s = spec.side_len * convert(0.5);
    let mut a = SMatrix::<T, 8, 8>::zeros();
    let mut b = SVector::<T, 8>::zeros();
    for i in 0..4 {
        let x = model[i].x / s;
        let y = model[i].y / s;
        let n = k.normalize(&obs.corners[i]);
        let (u, v) = (n.x, n.y);
        let r = 2 * i;
        a[(r, 0)] = x;
        a[(r, 1)] = y;
        a[(r, 2)] = T::one();
        a[(r, 6)] = -u * x;
        a[(r, 7)] = -u * y;
        b[r] = u;
        a[(r + 1, 3)] = x;
        a[(r + 1, 4)] = y;
        a[(r + 1, 5)] = T::one();
        a[(r + 1, 6)] = -v * x;
        a[(r + 1, 7)] = -v * y;
        b[r + 1] = v;
    }
    let sol = a.lu().solve(&b).ok_or(GeometryError::DegenerateObservation("homography system is rank-deficient"))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::DegenerateObservation("homography system is rank-deficient"));
    }
    // Undo the tag-coordinate scaling on the first two columns.
    Ok(Matrix3::new(sol[0] / s, sol[1] / s, sol[2], sol[3] / s, sol[4] / s, sol[5], sol[6] / s, sol[7] / s, T::one()))
}

fn pose_from_homography<T: RealField + Copy>(h: &Matrix3<T>) -> Result<MarkerPose<T>> {
    let h1 = h.column(0).into_owned();
    let h2 = h.column(1).into_owned();
    let h3 = h.column(2).into_owned();
    let norm_sum = h1.norm() + h2.norm();
    if !(norm_sum > T::default_epsilon()) {
        return Err(GeometryError::DegenerateObservation("homography has vanishing rotation columns"));
    }
    // h33 = 1 > 0 and the scale is positive, so depth comes out positive.
    let scale = convert::<f64, T>(2.0) / norm_sum;
    let r1 = h1 * scale;
    let r2 = h2 * scale;
    let r3 = r1.cross(&r2);
    let approx = Matrix3::from_columns(&[r1, r2, r3]);
    let rotation = nearest_rotation(&approx)?;
    Ok(MarkerPose { rotation, translation: h3 * scale })
}

/// Orthogonal Procrustes projection onto SO(3).
pub fn nearest_rotation<T: RealField + Copy>(m: &Matrix3<T>) -> Result<Matrix3<T>> {
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(GeometryError::DegenerateObservation("SVD did not converge")),
    };
    let mut r = u * v_t;
    if r.determinant() < T::zero() {
        let mut fix = Matrix3::identity();
        fix[(2, 2)] = -T::one();
        r = u * fix * v_t;
    }
    Ok(r)
}

/// Levenberg-Marquardt on the 8 pixel residuals over a left-multiplied
/// rotation increment and the translation.
fn refine_pose<T: RealField + Copy>(
    pose: &mut MarkerPose<T>,
    obs: &TagObservation<T>,
    spec: &MarkerSpec<T>,
    k: &CameraIntrinsics<T>,
) {
    let model = spec.corners();
    let mut cost = reprojection_cost(pose, obs, &model, k);
    let tiny: T = convert(1e-15);
    let settled: T = convert(1e-10);
    let ten: T = convert(10.0);
    let max_damping: T = convert(1e12);
    let mut damping: T = convert(1e-3);
    for _ in 0..REFINE_MAX_ITERS {
        let Some((jtj, jtr)) = normal_equations(pose, obs, &model, k) else {
            return;
        };
        loop {
            let mut lhs = jtj;
            for i in 0..6 {
                lhs[(i, i)] += damping * (jtj[(i, i)] + tiny);
            }
            let Some(ch) = lhs.cholesky() else {
                return;
            };
            let step = ch.solve(&(-jtr));
            let omega = Vector3::new(step[0], step[1], step[2]);
            let dt = Vector3::new(step[3], step[4], step[5]);
            let candidate = MarkerPose {
                rotation: renormalize(&(Rotation3::new(omega).into_inner() * pose.rotation)),
                translation: pose.translation + dt,
            };
            let new_cost = reprojection_cost(&candidate, obs, &model, k);
            if new_cost <= cost {
                let converged = step.norm() < settled || cost - new_cost <= cost * settled;
                *pose = candidate;
                cost = new_cost;
                damping = (damping / ten).max(tiny);
                if converged {
                    return;
                }
                break;
            }
            damping *= ten;
            if damping > max_damping {
                return;
            }
        }
    }
}

fn normal_equations<T: RealField + Copy>(
    pose: &MarkerPose<T>,
    obs: &TagObservation<T>,
    model: &[Vector3<T>; 4],
    k: &CameraIntrinsics<T>,
) -> Option<(SMatrix<T, 6, 6>, SVector<T, 6>)> {
    let mut jtj = SMatrix::<T, 6, 6>::zeros();
    let mut jtr = SVector::<T, 6>::zeros();
    for i in 0..4 {
        let rp = pose.rotation * model[i];
        let pc = rp + pose.translation;
        if !(pc.z > T::zero()) {
            return None;
        }
        let iz = T::one() / pc.z;
        let du = Vector3::new(k.fx * iz, T::zero(), -k.fx * pc.x * iz * iz);
        let dv = Vector3::new(T::zero(), k.fy * iz, -k.fy * pc.y * iz * iz);
        // d(pc)/d(omega) = -[rp]x, so row · (-[rp]x) = rp × row.
        let ju_w = rp.cross(&du);
        let jv_w = rp.cross(&dv);
        let px = k.to_pixel(&pc);
        let res = [px.x - obs.corners[i].x, px.y - obs.corners[i].y];
        for (row_w, row_t, r) in [(ju_w, du, res[0]), (jv_w, dv, res[1])] {
            let j = SVector::<T, 6>::new(row_w.x, row_w.y, row_w.z, row_t.x, row_t.y, row_t.z);
            jtj += j * j.transpose();
            jtr += j * r;
        }
    }
    Some((jtj, jtr))
}

fn renormalize<T: RealField + Copy>(r: &Matrix3<T>) -> Matrix3<T> {
    nearest_rotation(r).unwrap_or(*r)
}

pub fn reprojection_cost<T: RealField + Copy>(
    pose: &MarkerPose<T>,
    obs: &TagObservation<T>,
    model: &[Vector3<T>; 4],
    k: &CameraIntrinsics<T>,
) -> T {
    let mut sum = T::zero();
    for i in 0..4 {
        let pc = pose.rotation * model[i] + pose.translation;
        if !(pc.z > T::zero()) {
            return T::max_value().unwrap_or_else(T::one);
        }
        sum += (k.to_pixel(&pc) - obs.corners[i]).norm_squared();
    }
    sum
}

/// Euclidean separation between the marker origin and the robot TCP.
/// Random pose with depth in `depth_m`, tilted at most `max_tilt_rad` away
/// from facing the camera, whose corners all land inside the image.
pub fn sample_visible_pose<R: Rng + ?Sized>(
    rng: &mut R,
    depth_m: std::ops::Range<f64>,
    max_tilt_rad: f64,
    spec: &MarkerSpec<f64>,
    k: &CameraIntrinsics<f64>,
) -> MarkerPose<f64> {
    loop {
        let z = rng.random_range(depth_m.clone());
        let u = rng.random_range(0.0..f64::from(k.image_w));
        let v = rng.random_range(0.0..f64::from(k.image_h));
        let t = Vector3::new((u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z);
        let axis = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        let Some(axis) = axis.try_normalize(1e-9) else { continue };
        let pose = MarkerPose::from_axis_angle(axis * rng.random_range(0.0..max_tilt_rad), t);
        let tilt = pose.rotation.column(2).angle(&t);
        if tilt > max_tilt_rad {
            continue;
        }
        if let Ok(obs) = project(&pose, spec, k) {
            if obs.within_image(k) && obs.is_strictly_convex() {
                return pose;
            }
        }
    }
}

pub fn marker_to_tcp_distance<T: RealField + Copy>(pose: &MarkerPose<T>, tcp: &TcpPoint<T>) -> T {
    (pose.translation - tcp.position).norm()
}

fn to_f64<T: RealField + Copy>(v: T) -> f64 {
    nalgebra::try_convert::<T, f64>(v).unwrap_or(f64::NAN)
}

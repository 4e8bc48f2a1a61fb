//! Analytic circular-orbit propagation in an earth-fixed frame, elevation
//! gating of service episodes, slant range and free-space path loss.
//!
//! The earth is a sphere rotating uniformly about +z. Orbits are circular
//! Keplerian (no J2, no drag).

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};
use std::ops::{Add, Mul, Neg, Sub};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const MU_EARTH: f64 = 3.986_004_418e14;
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_9e-5;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Minimum elevation for transmission.
pub const DEFAULT_MIN_ELEVATION: f64 = FRAC_PI_6;

/// Default UE position, earth-centred earth-fixed, meters.
pub const DEFAULT_UE_ECEF_M: [f64; 3] = [5_045_270.0, 3_881_810.0, -393_280.0];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Earth-centred earth-fixed position in meters.
pub type EcefPosition = Vec3;

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn unit(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    fn rotate_z(self, angle: f64) -> Vec3 {
        let (s, c) = angle.sin_cos();
        Vec3::new(c * self.x - s * self.y, s * self.x + c * self.y, self.z)
    }

    fn rotate_x(self, angle: f64) -> Vec3 {
        let (s, c) = angle.sin_cos();
        Vec3::new(self.x, c * self.y - s * self.z, s * self.y + c * self.z)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Angle pair `(theta, phi)` in the array convention: a unit direction
/// `(sin phi cos theta, cos phi, sin phi sin theta)` in the array frame,
/// boresight along local +z.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Angles {
    pub theta: f64,
    pub phi: f64,
}

impl Angles {
    pub const fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    /// Angles of a unit direction expressed in an array frame.
    pub fn from_local(d: Vec3) -> Self {
        Self { theta: d.z.atan2(d.x), phi: d.y.clamp(-1.0, 1.0).acos() }
    }

    pub fn to_local(self) -> Vec3 {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vec3::new(sp * ct, cp, sp * st)
    }
}

/// Orthonormal array frame; `z` is the boresight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub x: Vec3,
    pub y: Vec3,
    pub z: Vec3,
}

impl Frame {
    pub fn to_local(&self, v: Vec3) -> Vec3 {
        Vec3::new(v.dot(self.x), v.dot(self.y), v.dot(self.z))
    }

    pub fn to_global(&self, v: Vec3) -> Vec3 {
        self.x * v.x + self.y * v.y + self.z * v.z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitConfig {
    pub altitude_m: f64,
    pub inclination_rad: f64,
    pub raan_rad: f64,
    pub initial_phase_rad: f64,
    pub mu: f64,
    pub earth_radius_m: f64,
    pub earth_rotation_rate: f64,
}

impl Default for OrbitConfig {
    /// 600 km, 53 degrees, phased for an overhead pass of the default UE
    /// 300 s after epoch.
    fn default() -> Self {
        OrbitConfig::overhead_pass(
            Vec3::from_array(DEFAULT_UE_ECEF_M),
            600_000.0,
            53f64.to_radians(),
            300.0,
        )
    }
}

/// Position and velocity in both inertial and earth-fixed frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitState {
    pub eci_position: Vec3,
    pub eci_velocity: Vec3,
    pub position: EcefPosition,
    pub velocity: Vec3,
}

impl OrbitConfig {
    pub fn radius(&self) -> f64 {
        self.earth_radius_m + self.altitude_m
    }

    pub fn mean_motion(&self) -> f64 {
        (self.mu / self.radius().powi(3)).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.mean_motion()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.altitude_m > 0.0) || !(self.mu > 0.0) || !(self.earth_radius_m > 0.0) {
            return Err(invalid("altitude, mu and earth radius must be positive"));
        }
        if !(0.0..=PI).contains(&self.inclination_rad) {
            return Err(invalid("inclination must lie in [0, pi]"));
        }
        if !self.raan_rad.is_finite() || !self.initial_phase_rad.is_finite() || !self.earth_rotation_rate.is_finite() {
            return Err(invalid("orbit angles must be finite"));
        }
        Ok(())
    }

    /// Orbit whose ground track passes exactly over `ue` at time `t_pass`.
    /// The ascending branch is used, so `|lat(ue)|` must not exceed the
    /// inclination.
    pub fn overhead_pass(ue: Vec3, altitude_m: f64, inclination_rad: f64, t_pass: f64) -> Self {
        let mut cfg = OrbitConfig {
            altitude_m,
            inclination_rad,
            raan_rad: 0.0,
            initial_phase_rad: 0.0,
            mu: MU_EARTH,
            earth_radius_m: EARTH_RADIUS_M,
            earth_rotation_rate: EARTH_ROTATION_RATE,
        };
        let lat = (ue.z / ue.norm()).asin();
        let lon = ue.y.atan2(ue.x);
        let u = (lat.sin() / inclination_rad.sin()).clamp(-1.0, 1.0).asin();
        let inertial_lon = lon + cfg.earth_rotation_rate * t_pass;
        let in_plane = (inclination_rad.cos() * u.sin()).atan2(u.cos());
        cfg.raan_rad = inertial_lon - in_plane;
        cfg.initial_phase_rad = u - cfg.mean_motion() * t_pass;
        cfg
    }
}

/// State at `t` seconds after epoch.
pub fn propagate(o: &OrbitConfig, t: f64) -> Result<OrbitState> {
    if !(t >= 0.0) {
        return Err(invalid("propagation time must be non-negative"));
    }
    let r = o.radius();
    let n = o.mean_motion();
    let u = o.initial_phase_rad + n * t;
    let (su, cu) = u.sin_cos();
    let pos_plane = Vec3::new(r * cu, r * su, 0.0);
    let vel_plane = Vec3::new(-r * n * su, r * n * cu, 0.0);
    let eci_position = pos_plane.rotate_x(o.inclination_rad).rotate_z(o.raan_rad);
    let eci_velocity = vel_plane.rotate_x(o.inclination_rad).rotate_z(o.raan_rad);
    let gst = o.earth_rotation_rate * t;
    let position = eci_position.rotate_z(-gst);
    let omega = Vec3::new(0.0, 0.0, o.earth_rotation_rate);
    let velocity = eci_velocity.rotate_z(-gst) - omega.cross(position);
    Ok(OrbitState { eci_position, eci_velocity, position, velocity })
}

/// Link geometry between a satellite and a ground UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySample {
    pub slant_distance: f64,
    pub elevation: f64,
    /// Satellite velocity relative to the earth-fixed UE.
    pub sat_velocity: Vec3,
    /// Line of sight (satellite to UE) in the satellite array frame.
    pub boresight_aod: Angles,
    /// Line of sight (UE to satellite) in the UE array frame.
    pub boresight_aoa: Angles,
    pub sat_frame: Frame,
    pub ue_frame: Frame,
    pub sat_position: EcefPosition,
}

impl GeometrySample {
    /// Unit vector from satellite to UE, earth-fixed.
    pub fn los_direction(&self) -> Vec3 {
        self.sat_frame.to_global(self.boresight_aod.to_local())
    }
}

/// UE array frame: x east, y north, z local up.
pub fn ue_frame(ue: Vec3) -> Frame {
    let up = ue.unit();
    let mut east = Vec3::new(0.0, 0.0, 1.0).cross(up);
    if east.norm() < 1e-12 {
        east = Vec3::new(0.0, 1.0, 0.0);
    }
    let east = east.unit();
    let north = up.cross(east);
    Frame { x: east, y: north, z: up }
}

/// Satellite array frame: z nadir, x along the velocity component
/// orthogonal to nadir, y completing a right-handed triad.
pub fn sat_frame(sat: Vec3, vel: Vec3) -> Frame {
    let nadir = (-sat).unit();
    let mut along = vel - nadir * vel.dot(nadir);
    if along.norm() < 1e-9 {
        along = nadir.cross(Vec3::new(0.0, 0.0, 1.0));
        if along.norm() < 1e-9 {
            along = Vec3::new(1.0, 0.0, 0.0);
        }
    }
    let along = along.unit();
    Frame { x: along, y: nadir.cross(along), z: nadir }
}

pub fn geometry(sat: EcefPosition, sat_vel: Vec3, ue: EcefPosition) -> Result<GeometrySample> {
    let los = sat - ue;
    let d = los.norm();
    if !(d > 0.0) || !d.is_finite() {
        return Err(invalid("satellite and UE positions coincide"));
    }
    let up = ue.unit();
    let elevation = (los.dot(up) / d).clamp(-1.0, 1.0).asin();
    let uf = ue_frame(ue);
    let sf = sat_frame(sat, sat_vel);
    let to_sat = los * (1.0 / d);
    Ok(GeometrySample {
        slant_distance: d,
        elevation,
        sat_velocity: sat_vel,
        boresight_aod: Angles::from_local(sf.to_local(-to_sat)),
        boresight_aoa: Angles::from_local(uf.to_local(to_sat)),
        sat_frame: sf,
        ue_frame: uf,
        sat_position: sat,
    })
}

/// Geometry at time `t` for a UE at `ue`.
pub fn geometry_at(o: &OrbitConfig, ue: EcefPosition, t: f64) -> Result<GeometrySample> {
    let st = propagate(o, t)?;
    geometry(st.position, st.velocity, ue)
}

/// Free-space path gain `(lambda / (4 pi d))^2`.
pub fn pathloss(distance: f64, carrier_hz: f64) -> f64 {
    let lambda = SPEED_OF_LIGHT / carrier_hz;
    (lambda / (4.0 * PI * distance)).powi(2)
}

/// Strictly above the minimum elevation.
pub fn in_service(elevation: f64, min_elevation: f64) -> bool {
    elevation > min_elevation
}

/// `[rise, set]` of the first service window at or after `t_from`, scanning
/// up to `t_to`. Boundaries are refined by bisection to 1 ms.
pub fn service_window(
    o: &OrbitConfig,
    ue: EcefPosition,
    min_elevation: f64,
    t_from: f64,
    t_to: f64,
) -> Result<Option<(f64, f64)>> {
    let step = 1.0;
    let elev = |t: f64| geometry_at(o, ue, t).map(|g| g.elevation);
    let mut t = t_from;
    let mut prev_in = in_service(elev(t)?, min_elevation);
    let mut rise = if prev_in { Some(t) } else { None };
    while t < t_to {
        let next = (t + step).min(t_to);
        let now_in = in_service(elev(next)?, min_elevation);
        if now_in != prev_in {
            let (mut lo, mut hi) = (t, next);
            while hi - lo > 1e-3 {
                let mid = 0.5 * (lo + hi);
                if in_service(elev(mid)?, min_elevation) == prev_in {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if now_in {
                rise = Some(hi);
            } else if let Some(r) = rise {
                return Ok(Some((r, lo)));
            }
        }
        prev_in = now_in;
        t = next;
    }
    Ok(rise.map(|r| (r, t_to)))
}

/// Zenith angle helper used by tests and plots.
pub fn zenith_angle(elevation: f64) -> f64 {
    FRAC_PI_2 - elevation
}

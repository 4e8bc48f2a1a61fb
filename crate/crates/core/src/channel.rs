//! UPA steering vectors and the multipath downlink channel
//! `H[n, m] = sum_l alpha_l exp(j 2 pi (n Ts v_l - m tau_l / Ts)) a_r(aoa_l) a_t(aod_l)^H`.
//!
//! Path parameters come from a simplified Rician generator: one line-of-sight
//! path at the geometric boresight angles plus `L - 1` scattered paths with
//! Laplacian angle offsets and truncated-exponential delays.

use crate::error::{invalid, Result};
use crate::numkit::{inner, kron_vec, ComplexMat, C64};
use crate::orbit::{Angles, GeometrySample, SPEED_OF_LIGHT};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Transmit (satellite) and receive (UE) uniform planar arrays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayGeometry {
    pub nt_x: usize,
    pub nt_y: usize,
    pub nr_x: usize,
    pub nr_y: usize,
    /// Inter-antenna spacings in meters.
    pub d_t: f64,
    pub d_r: f64,
    pub wavelength: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        ArrayGeometry::half_wavelength(4, 4, 2, 2, SPEED_OF_LIGHT / 4e9)
    }
}

impl ArrayGeometry {
    pub fn half_wavelength(nt_x: usize, nt_y: usize, nr_x: usize, nr_y: usize, wavelength: f64) -> Self {
        Self { nt_x, nt_y, nr_x, nr_y, d_t: wavelength / 2.0, d_r: wavelength / 2.0, wavelength }
    }

    pub fn n_t(&self) -> usize {
        self.nt_x * self.nt_y
    }

    pub fn n_r(&self) -> usize {
        self.nr_x * self.nr_y
    }

    pub fn validate(&self) -> Result<()> {
        if self.nt_x == 0 || self.nt_y == 0 || self.nr_x == 0 || self.nr_y == 0 {
            return Err(invalid("antenna counts must be at least 1"));
        }
        if !(self.d_t > 0.0 && self.d_r > 0.0 && self.wavelength > 0.0) {
            return Err(invalid("spacings and wavelength must be positive"));
        }
        Ok(())
    }
}

fn check_angle(a: f64) -> Result<()> {
    // Closed range: the open interval is enforced by beam clamping, while
    // the steering formula itself is well defined on the boundary.
    if !(0.0..=PI).contains(&a) {
        return Err(invalid(format!("steering angle {a} outside [0, pi]")));
    }
    Ok(())
}

fn steering(nx: usize, ny: usize, spacing: f64, wavelength: f64, dir: Angles) -> Result<Vec<C64>> {
    check_angle(dir.theta)?;
    check_angle(dir.phi)?;
    let k = TAU / wavelength * spacing;
    let step_x = k * dir.phi.sin() * dir.theta.cos();
    let step_y = k * dir.phi.cos();
    let ax: Vec<C64> = (0..nx).map(|p| C64::from_polar(1.0 / (nx as f64).sqrt(), p as f64 * step_x)).collect();
    let ay: Vec<C64> = (0..ny).map(|q| C64::from_polar(1.0 / (ny as f64).sqrt(), q as f64 * step_y)).collect();
    Ok(kron_vec(&ax, &ay))
}

/// Transmit steering vector, length `N_t`, unit norm.
pub fn steering_tx(g: &ArrayGeometry, dir: Angles) -> Result<Vec<C64>> {
    steering(g.nt_x, g.nt_y, g.d_t, g.wavelength, dir)
}

/// Receive steering vector, length `N_r`, unit norm.
pub fn steering_rx(g: &ArrayGeometry, dir: Angles) -> Result<Vec<C64>> {
    steering(g.nr_x, g.nr_y, g.d_r, g.wavelength, dir)
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub alpha: C64,
    pub doppler_hz: f64,
    pub delay_s: f64,
    pub aod: Angles,
    pub aoa: Angles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathProfile {
    pub paths: Vec<PathParams>,
    /// OFDM symbol duration `Ts`.
    pub symbol_duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Number of paths `L`, LOS included.
    pub paths: usize,
    /// Rician K-factor in dB; `inf` puts all power on the LOS path.
    pub rician_k_db: f64,
    /// Laplacian scale of scattered-path angle offsets, degrees.
    pub angle_spread_deg: f64,
    /// Exponential delay-profile scale and truncation point, seconds.
    pub delay_spread_s: f64,
    pub symbol_duration_s: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { paths: 4, rician_k_db: 10.0, angle_spread_deg: 5.0, delay_spread_s: 100e-9, symbol_duration_s: 66.7e-6 }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(invalid("channel needs at least one path"));
        }
        if self.rician_k_db.is_nan() || !(self.angle_spread_deg >= 0.0) || !(self.delay_spread_s >= 0.0) {
            return Err(invalid("rician factor, angle spread and delay spread must be valid"));
        }
        if !(self.symbol_duration_s > 0.0) {
            return Err(invalid("symbol duration must be positive"));
        }
        Ok(())
    }

    /// Power fraction on the LOS path.
    pub fn los_power(&self) -> f64 {
        if self.paths == 1 || self.rician_k_db == f64::INFINITY {
            return 1.0;
        }
        let k = 10f64.powf(self.rician_k_db / 10.0);
        k / (k + 1.0)
    }
}

pub(crate) const ANGLE_MARGIN: f64 = 1e-3;

fn clamp_angle(a: f64) -> f64 {
    a.clamp(ANGLE_MARGIN, PI - ANGLE_MARGIN)
}

fn laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = rng.random_range(-0.5..0.5);
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

fn doppler(geo: &GeometrySample, aod: Angles, wavelength: f64) -> f64 {
    let dir = geo.sat_frame.to_global(aod.to_local());
    geo.sat_velocity.dot(dir) / wavelength
}

/// Draws a multipath profile around the geometric line of sight.
pub fn sample_paths<R: Rng + ?Sized>(
    rng: &mut R,
    geo: &GeometrySample,
    cfg: &ChannelConfig,
    wavelength: f64,
) -> Result<MultipathProfile> {
    cfg.validate()?;
    let los_power = cfg.los_power();
    let mut paths = Vec::with_capacity(cfg.paths);
    let los_aod = Angles::new(clamp_angle(geo.boresight_aod.theta), clamp_angle(geo.boresight_aod.phi));
    let los_aoa = Angles::new(clamp_angle(geo.boresight_aoa.theta), clamp_angle(geo.boresight_aoa.phi));
    let phase: f64 = rng.random_range(0.0..TAU);
    paths.push(PathParams {
        alpha: C64::from_polar(los_power.sqrt(), phase),
        doppler_hz: doppler(geo, geo.boresight_aod, wavelength),
        delay_s: 0.0,
        aod: los_aod,
        aoa: los_aoa,
    });
    let scattered = cfg.paths - 1;
    if scattered > 0 {
        let per_path = (1.0 - los_power) / scattered as f64;
        let sigma = (per_path / 2.0).sqrt();
        let scale = cfg.angle_spread_deg.to_radians();
        for _ in 0..scattered {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let aod = Angles::new(
                clamp_angle(los_aod.theta + laplace(rng, scale)),
                clamp_angle(los_aod.phi + laplace(rng, scale)),
            );
            let aoa = Angles::new(
                clamp_angle(los_aoa.theta + laplace(rng, scale)),
                clamp_angle(los_aoa.phi + laplace(rng, scale)),
            );
            // Truncated exponential on [0, spread] by inverse CDF.
            let u: f64 = rng.random_range(0.0..1.0);
            let delay = if cfg.delay_spread_s > 0.0 {
                let tail = (-1.0f64).exp();
                -cfg.delay_spread_s * (1.0 - u * (1.0 - tail)).ln()
            } else {
                0.0
            };
            paths.push(PathParams {
                alpha: C64::new(sigma * re, sigma * im),
                doppler_hz: doppler(geo, aod, wavelength),
                delay_s: delay.min(cfg.delay_spread_s),
                aod,
                aoa,
            });
        }
    }
    Ok(MultipathProfile { paths, symbol_duration: cfg.symbol_duration_s })
}

impl MultipathProfile {
    /// Unit-modulus phase of path `l` at slot `n`, RB `m`.
    pub fn phase(&self, l: usize, n: u64, m: usize) -> C64 {
        let p = &self.paths[l];
        let ts = self.symbol_duration;
        let arg = TAU * (n as f64 * ts * p.doppler_hz - (m as f64 / ts) * p.delay_s);
        C64::from_polar(1.0, arg)
    }

    /// Shifts every path by the change between two line-of-sight geometries
    /// and recomputes Dopplers for the new satellite velocity.
    pub fn reanchored(&self, from: &GeometrySample, to: &GeometrySample, wavelength: f64) -> Self {
        let d_aod = (to.boresight_aod.theta - from.boresight_aod.theta, to.boresight_aod.phi - from.boresight_aod.phi);
        let d_aoa = (to.boresight_aoa.theta - from.boresight_aoa.theta, to.boresight_aoa.phi - from.boresight_aoa.phi);
        let paths = self
            .paths
            .iter()
            .map(|p| {
                let aod = Angles::new(clamp_angle(p.aod.theta + d_aod.0), clamp_angle(p.aod.phi + d_aod.1));
                let aoa = Angles::new(clamp_angle(p.aoa.theta + d_aoa.0), clamp_angle(p.aoa.phi + d_aoa.1));
                PathParams { aod, aoa, doppler_hz: doppler(to, aod, wavelength), ..*p }
            })
            .collect();
        Self { paths, symbol_duration: self.symbol_duration }
    }
}

/// Channel matrix `H[n, m]`, shape `N_r x N_t`.
pub fn channel_matrix(p: &MultipathProfile, g: &ArrayGeometry, n: u64, m: usize) -> Result<ComplexMat> {
    let mut h = ComplexMat::zeros(g.n_r(), g.n_t());
    for (l, path) in p.paths.iter().enumerate() {
        let a_r = steering_rx(g, path.aoa)?;
        let a_t = steering_tx(g, path.aod)?;
        h.add_scaled(path.alpha * p.phase(l, n, m), &ComplexMat::outer(&a_r, &a_t))?;
    }
    Ok(h)
}

/// A profile with its per-path steering vectors cached, so beam responses
/// reduce to `O(L)` work per `(n, m)`.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub profile: MultipathProfile,
    pub array: ArrayGeometry,
    a_r: Vec<Vec<C64>>,
    a_t: Vec<Vec<C64>>,
}

/// Projections of a beam pair onto every path.
#[derive(Debug, Clone)]
pub struct BeamProjection {
    /// `w_r^H a_r(aoa_l)`.
    pub rx: Vec<C64>,
    /// `a_t(aod_l)^H w_t`.
    pub tx: Vec<C64>,
}

impl ChannelRealization {
    pub fn new(profile: MultipathProfile, array: ArrayGeometry) -> Result<Self> {
        array.validate()?;
        let a_r = profile.paths.iter().map(|p| steering_rx(&array, p.aoa)).collect::<Result<_>>()?;
        let a_t = profile.paths.iter().map(|p| steering_tx(&array, p.aod)).collect::<Result<_>>()?;
        Ok(Self { profile, array, a_r, a_t })
    }

    pub fn matrix(&self, n: u64, m: usize) -> ComplexMat {
        let mut h = ComplexMat::zeros(self.array.n_r(), self.array.n_t());
        for l in 0..self.profile.paths.len() {
            let coef = self.profile.paths[l].alpha * self.profile.phase(l, n, m);
            h.add_scaled(coef, &ComplexMat::outer(&self.a_r[l], &self.a_t[l])).expect("congruent");
        }
        h
    }

    pub fn project_tx(&self, w_t: &[C64]) -> Vec<C64> {
        self.a_t.iter().map(|a| inner(a, w_t)).collect()
    }

    pub fn project_rx(&self, w_r: &[C64]) -> Vec<C64> {
        self.a_r.iter().map(|a| inner(w_r, a)).collect()
    }

    pub fn project(&self, w_r: &[C64], w_t: &[C64]) -> BeamProjection {
        BeamProjection { rx: self.project_rx(w_r), tx: self.project_tx(w_t) }
    }

    /// `w_r^H H[n, m] w_t` from precomputed projections.
    pub fn response(&self, proj_rx: &[C64], proj_tx: &[C64], n: u64, m: usize) -> C64 {
        (0..self.profile.paths.len())
            .map(|l| self.profile.paths[l].alpha * self.profile.phase(l, n, m) * proj_rx[l] * proj_tx[l])
            .sum()
    }

    /// `|w_r^H H[n, m] w_t|^2`.
    pub fn beam_gain(&self, proj_rx: &[C64], proj_tx: &[C64], n: u64, m: usize) -> f64 {
        self.response(proj_rx, proj_tx, n, m).norm_sqr()
    }

    /// `H[n, m] w_t` without forming `H`.
    pub fn apply_tx(&self, proj_tx: &[C64], n: u64, m: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.array.n_r()];
        for (l, (path, p)) in self.profile.paths.iter().zip(proj_tx).enumerate() {
            let coef = path.alpha * self.profile.phase(l, n, m) * p;
            for (o, a) in out.iter_mut().zip(&self.a_r[l]) {
                *o += coef * a;
            }
        }
        out
    }
}

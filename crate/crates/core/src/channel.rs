//! Frame-static Rayleigh channels with log-distance path loss and log-normal
//! shadowing, plus the thermal-noise link budget.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{C64, CVector};

/// Path gain in dB for a device `d_km` kilometers away with shadowing
/// `psi_db`: `-136.3 - 35 log10(d) - psi`.
pub fn path_gain_db(d_km: f64, psi_db: f64) -> Result<f64> {
    if !(d_km > 0.0) || !d_km.is_finite() {
        return Err(Error::Domain(format!("distance must be positive, got {d_km}")));
    }
    Ok(-136.3 - 35.0 * d_km.log10() - psi_db)
}

/// Noise power in dBm over `bandwidth_hz` for a receiver with the given
/// noise figure.
pub fn noise_variance_dbm(psd_dbm_hz: f64, bandwidth_hz: f64, noise_figure_db: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) || !bandwidth_hz.is_finite() {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth_hz}")));
    }
    Ok(psd_dbm_hz + 10.0 * bandwidth_hz.log10() + noise_figure_db)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Device placement and shadowing for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub distances_km: Vec<f64>,
    pub shadow_std_db: f64,
    /// One shadowing value per device, fixed for the whole realization.
    pub shadowing_db: Vec<f64>,
}

impl Geometry {
    /// Uniform distances in `(d_min, d_max)` km and Gaussian-in-dB shadowing.
    pub fn sample<R: Rng + ?Sized>(
        devices: usize,
        d_min_km: f64,
        d_max_km: f64,
        shadow_std_db: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(d_min_km > 0.0 && d_max_km > d_min_km) {
            return Err(Error::Config(format!(
                "distance range must satisfy 0 < min < max, got ({d_min_km}, {d_max_km})"
            )));
        }
        let distances_km = (0..devices).map(|_| rng.random_range(d_min_km..d_max_km)).collect();
        Self::with_distances(distances_km, shadow_std_db, rng)
    }

    pub fn with_distances<R: Rng + ?Sized>(
        distances_km: Vec<f64>,
        shadow_std_db: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(shadow_std_db >= 0.0) {
            return Err(Error::Config(format!("shadowing std must be >= 0, got {shadow_std_db}")));
        }
        if let Some(d) = distances_km.iter().find(|d| !(**d > 0.0)) {
            return Err(Error::Domain(format!("distance must be positive, got {d}")));
        }
        let shadow = Normal::new(0.0, shadow_std_db).expect("std checked above");
        let shadowing_db = distances_km.iter().map(|_| shadow.sample(rng)).collect();
        Ok(Self {
            distances_km,
            shadow_std_db,
            shadowing_db,
        })
    }

    pub fn devices(&self) -> usize {
        self.distances_km.len()
    }

    /// Linear path gains `G_k`.
    pub fn path_gains(&self) -> Result<Vec<f64>> {
        self.distances_km
            .iter()
            .zip(&self.shadowing_db)
            .map(|(&d, &psi)| path_gain_db(d, psi).map(db_to_linear))
            .collect()
    }
}

/// Uplink and downlink noise variances in linear watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevels {
    pub sigma2_ul: f64,
    pub sigma2_dl: f64,
}

/// The channels of all devices for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub frame_index: usize,
    /// `h[k]` is the `N`-antenna channel of device `k`.
    pub h: Vec<CVector>,
    pub sigma2_ul: f64,
    pub sigma2_dl: f64,
}

impl ChannelSet {
    pub fn new(frame_index: usize, h: Vec<CVector>, noise: NoiseLevels) -> Result<Self> {
        let antennas = h.first().map(Vec::len).unwrap_or(0);
        if h.is_empty() || antennas == 0 {
            return Err(Error::Domain("channel set needs K >= 1 devices and N >= 1 antennas".into()));
        }
        if h.iter().any(|v| v.len() != antennas || v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
            return Err(Error::Domain("every channel vector must have N finite entries".into()));
        }
        if !(noise.sigma2_ul > 0.0) || !(noise.sigma2_dl > 0.0) {
            return Err(Error::Domain("noise variances must be positive".into()));
        }
        Ok(Self {
            frame_index,
            h,
            sigma2_ul: noise.sigma2_ul,
            sigma2_dl: noise.sigma2_dl,
        })
    }

    pub fn devices(&self) -> usize {
        self.h.len()
    }

    pub fn antennas(&self) -> usize {
        self.h[0].len()
    }
}

/// One circularly-symmetric `CN(0, variance)` sample.
pub fn complex_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

/// Draw `h_k = sqrt(G_k) * hbar_k` with `hbar_k ~ CN(0, I_N)` for every
/// device. The caller supplies the frame's own substream.
pub fn sample_channels<R: Rng + ?Sized>(
    geometry: &Geometry,
    antennas: usize,
    frame: usize,
    noise: NoiseLevels,
    rng: &mut R,
) -> Result<ChannelSet> {
    if antennas == 0 || geometry.devices() == 0 {
        return Err(Error::Domain("need N >= 1 antennas and K >= 1 devices".into()));
    }
    let gains = geometry.path_gains()?;
    let h = gains
        .iter()
        .map(|&g| (0..antennas).map(|_| complex_gaussian(g, rng)).collect())
        .collect();
    ChannelSet::new(frame, h, noise)
}

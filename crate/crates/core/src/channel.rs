//! Narrowband channel model for a row-controlled RIS.
//!
//! The RIS is a `K x N` planar array lying in the `z = 0` plane; row `k`
//! runs along `x` and all angles are measured from the surface normal in the
//! `x-z` plane. Every path goes through the surface: there is no direct
//! transmitter-to-receiver link.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{invalid, shape, Error, Result};
use crate::C64;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Per-row complex vectors, indexed `[row][element]`.
pub type RowVectors = Vec<Vec<C64>>;

/// Angles, path losses and RIS dimensions for one deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioGeometry {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M_comm")]
    pub m_comm: usize,
    #[serde(rename = "M_sense")]
    pub m_sense: usize,
    /// Hz.
    pub carrier_freq: f64,
    /// Element pitch as a fraction of the wavelength.
    pub element_spacing: f64,
    /// Meters.
    pub tx_position: [f64; 3],
    /// Row-major (`k * N + n`) element centers in meters. Left empty in a
    /// configuration file, it is filled with a centered planar grid.
    #[serde(default)]
    pub ris_element_positions: Vec<[f64; 3]>,
    /// Radians from the RIS normal.
    pub theta_comm_aod: f64,
    pub theta_sense_aod: f64,
    /// Radians at the receivers' arrays.
    pub theta_comm_aoa: f64,
    pub theta_sense_aoa: f64,
    /// Linear amplitude factor per row.
    pub pathloss_comm: Vec<f64>,
    pub pathloss_sense: Vec<f64>,
    /// Watts.
    pub tx_power: f64,
    pub noise_power: f64,
}

impl ScenarioGeometry {
    /// The 8x16 deployment at 5.22 GHz with the sensing target at 50 degrees
    /// and the communication receiver at -20 degrees.
    pub fn default_scenario() -> Self {
        let carrier_freq = 5.22e9;
        let lambda = SPEED_OF_LIGHT / carrier_freq;
        let k = 8;
        let mut geometry = ScenarioGeometry {
            k,
            n: 16,
            m_comm: 3,
            m_sense: 3,
            carrier_freq,
            element_spacing: 0.5,
            tx_position: [0.0, 0.0, 1.0],
            ris_element_positions: Vec::new(),
            theta_comm_aod: (-20.0f64).to_radians(),
            theta_sense_aod: 50.0f64.to_radians(),
            theta_comm_aoa: 0.0,
            theta_sense_aoa: 20.0f64.to_radians(),
            // free-space amplitude over 3 m (comm) and 2 m (target) legs
            pathloss_comm: vec![lambda / (4.0 * PI * 3.0); k],
            pathloss_sense: vec![lambda / (4.0 * PI * 2.0); k],
            tx_power: 0.1,
            noise_power: 1e-11,
        };
        geometry.fill_grid();
        geometry
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Replace the element positions with a grid centered on the origin.
    pub fn fill_grid(&mut self) {
        let pitch = self.element_spacing * self.wavelength();
        let (k, n) = (self.k as f64, self.n as f64);
        self.ris_element_positions = (0..self.k)
            .flat_map(|row| {
                (0..self.n).map(move |col| {
                    [
                        (col as f64 - (n - 1.0) / 2.0) * pitch,
                        (row as f64 - (k - 1.0) / 2.0) * pitch,
                        0.0,
                    ]
                })
            })
            .collect();
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut geometry: ScenarioGeometry = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if geometry.ris_element_positions.is_empty() {
            geometry.fill_grid();
        }
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 || self.m_comm == 0 || self.m_sense == 0 {
            return Err(invalid("K, N, M_comm and M_sense must be at least 1"));
        }
        for (name, v) in [
            ("carrier_freq", self.carrier_freq),
            ("element_spacing", self.element_spacing),
            ("tx_power", self.tx_power),
            ("noise_power", self.noise_power),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be finite and positive, got {v}")));
            }
        }
        for (name, v) in [
            ("theta_comm_aod", self.theta_comm_aod),
            ("theta_sense_aod", self.theta_sense_aod),
            ("theta_comm_aoa", self.theta_comm_aoa),
            ("theta_sense_aoa", self.theta_sense_aoa),
        ] {
            if !(v.is_finite() && v.abs() < FRAC_PI_2) {
                return Err(invalid(format!("{name} must lie in (-pi/2, pi/2), got {v}")));
            }
        }
        if self.ris_element_positions.len() != self.k * self.n {
            return Err(shape(format!(
                "ris_element_positions has {} entries, expected K*N = {}",
                self.ris_element_positions.len(),
                self.k * self.n
            )));
        }
        for (name, v) in [("pathloss_comm", &self.pathloss_comm), ("pathloss_sense", &self.pathloss_sense)] {
            if v.len() != self.k {
                return Err(shape(format!("{name} has {} entries, expected K = {}", v.len(), self.k)));
            }
            if v.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                return Err(invalid(format!("{name} entries must be finite and positive")));
            }
        }
        Ok(())
    }
}

/// Uniform linear array response `exp(j 2 pi spacing m sin(angle))`.
pub fn steering_vector(angle: f64, count: usize, spacing: f64) -> Result<Vec<C64>> {
    if !angle.is_finite() {
        return Err(invalid(format!("steering angle must be finite, got {angle}")));
    }
    if angle.abs() >= FRAC_PI_2 {
        return Err(invalid(format!("steering angle must lie in (-pi/2, pi/2), got {angle}")));
    }
    if count == 0 {
        return Err(invalid("steering vector needs at least one element"));
    }
    let step = 2.0 * PI * spacing * angle.sin();
    Ok((0..count).map(|m| C64::from_polar(1.0, step * m as f64)).collect())
}

/// Free-space channel from the transmitter to every element:
/// amplitude `lambda / (4 pi d)`, phase `-2 pi d / lambda`.
pub fn tx_ris_channel(geometry: &ScenarioGeometry) -> Result<RowVectors> {
    if geometry.ris_element_positions.len() != geometry.k * geometry.n {
        return Err(shape("ris_element_positions must have K*N entries"));
    }
    let lambda = geometry.wavelength();
    let tx = geometry.tx_position;
    let mut rows = Vec::with_capacity(geometry.k);
    for k in 0..geometry.k {
        let mut row = Vec::with_capacity(geometry.n);
        for n in 0..geometry.n {
            let p = geometry.ris_element_positions[k * geometry.n + n];
            let d = ((p[0] - tx[0]).powi(2) + (p[1] - tx[1]).powi(2) + (p[2] - tx[2]).powi(2)).sqrt();
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::DegenerateGeometry(format!(
                    "transmitter coincides with element ({k}, {n})"
                )));
            }
            let phase = (-2.0 * PI * d / lambda).rem_euclid(2.0 * PI);
            row.push(C64::from_polar(lambda / (4.0 * PI * d), phase));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Cascaded per-row channels seen by the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct RowChannels {
    pub h_tx: RowVectors,
    /// `(a_k^C alpha^H(aod_C) Diag(h_tx_k))^H`
    pub h_comm_eff: RowVectors,
    /// `(alpha^H(aod_S) Diag(h_tx_k))^H`
    pub h_sense_eff: RowVectors,
}

impl RowChannels {
    pub fn rows(&self) -> usize {
        self.h_tx.len()
    }

    pub fn elements(&self) -> usize {
        self.h_tx.first().map_or(0, Vec::len)
    }

    pub fn check_finite(&self) -> Result<()> {
        let finite = |v: &RowVectors| v.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite());
        if finite(&self.h_tx) && finite(&self.h_comm_eff) && finite(&self.h_sense_eff) {
            Ok(())
        } else {
            Err(invalid("channel vectors contain non-finite entries"))
        }
    }

    /// Restrict to the first `rows` rows.
    pub fn truncated(&self, rows: usize) -> RowChannels {
        RowChannels {
            h_tx: self.h_tx[..rows].to_vec(),
            h_comm_eff: self.h_comm_eff[..rows].to_vec(),
            h_sense_eff: self.h_sense_eff[..rows].to_vec(),
        }
    }
}

pub fn effective_channels(geometry: &ScenarioGeometry, h_tx: &RowVectors) -> Result<RowChannels> {
    if h_tx.len() != geometry.k || h_tx.iter().any(|row| row.len() != geometry.n) {
        return Err(shape(format!("h_tx must be {} rows of {} elements", geometry.k, geometry.n)));
    }
    if geometry.pathloss_comm.len() != geometry.k {
        return Err(shape("pathloss_comm must have K entries"));
    }
    let alpha_c = steering_vector(geometry.theta_comm_aod, geometry.n, geometry.element_spacing)?;
    let alpha_s = steering_vector(geometry.theta_sense_aod, geometry.n, geometry.element_spacing)?;
    let mut h_comm_eff = Vec::with_capacity(geometry.k);
    let mut h_sense_eff = Vec::with_capacity(geometry.k);
    for (k, row) in h_tx.iter().enumerate() {
        let a = geometry.pathloss_comm[k];
        h_comm_eff.push(row.iter().zip(&alpha_c).map(|(h, al)| a * al * h.conj()).collect());
        h_sense_eff.push(row.iter().zip(&alpha_s).map(|(h, al)| al * h.conj()).collect());
    }
    Ok(RowChannels {
        h_tx: h_tx.clone(),
        h_comm_eff,
        h_sense_eff,
    })
}

/// `h^H phi` for one row.
pub fn row_response(h: &[C64], phi: &[C64]) -> C64 {
    h.iter().zip(phi).map(|(h, p)| h.conj() * p).sum()
}

/// Linear communication SNR for one beam vector per row.
pub fn comm_snr(rows: &RowChannels, selections: &[&[C64]], tx_power: f64, noise_power: f64, m_comm: usize) -> Result<f64> {
    if !(noise_power > 0.0) {
        return Err(invalid(format!("noise power must be positive, got {noise_power}")));
    }
    if selections.len() != rows.rows() {
        return Err(shape(format!("{} beam vectors for {} rows", selections.len(), rows.rows())));
    }
    let mut total = C64::new(0.0, 0.0);
    for (h, phi) in rows.h_comm_eff.iter().zip(selections) {
        if phi.len() != h.len() {
            return Err(shape("beam vector length differs from row length"));
        }
        total += row_response(h, phi);
    }
    Ok(m_comm as f64 * total.norm_sqr() * tx_power / noise_power)
}

/// Power radiated toward the sensing target by one row.
pub fn sensing_power(h_sense_row: &[C64], phi: &[C64], tx_power: f64) -> Result<f64> {
    if h_sense_row.len() != phi.len() {
        return Err(shape("beam vector length differs from row length"));
    }
    Ok(row_response(h_sense_row, phi).norm_sqr() * tx_power)
}

/// CSI at the sensing receiver's antennas:
/// `sum_k (d_k alpha(aoa_S) alpha^H(aod_S) + G_k^static) Diag(phi_k) h_tx_k`.
///
/// `static_path[k]` is `M_sense x N`.
pub fn aggregate_sensing_csi(
    geometry: &ScenarioGeometry,
    h_tx: &RowVectors,
    phis: &[&[C64]],
    dynamic_path_gain: &[C64],
    static_path: &[DMatrix<C64>],
) -> Result<Vec<C64>> {
    let (k_rows, n, m) = (geometry.k, geometry.n, geometry.m_sense);
    if h_tx.len() != k_rows || phis.len() != k_rows || dynamic_path_gain.len() != k_rows || static_path.len() != k_rows {
        return Err(shape("aggregate_sensing_csi needs one entry per row in every argument"));
    }
    let alpha_rx = steering_vector(geometry.theta_sense_aoa, m, geometry.element_spacing)?;
    let alpha_tx = steering_vector(geometry.theta_sense_aod, n, geometry.element_spacing)?;
    let mut out = vec![C64::new(0.0, 0.0); m];
    for k in 0..k_rows {
        if h_tx[k].len() != n || phis[k].len() != n || static_path[k].shape() != (m, n) {
            return Err(shape(format!("row {k} has inconsistent dimensions")));
        }
        let reflected: Vec<C64> = phis[k].iter().zip(&h_tx[k]).map(|(p, h)| p * h).collect();
        let toward_target = dynamic_path_gain[k] * row_response(&alpha_tx, &reflected);
        for (mi, o) in out.iter_mut().enumerate() {
            let static_part: C64 = (0..n).map(|ni| static_path[k][(mi, ni)] * reflected[ni]).sum();
            *o += alpha_rx[mi] * toward_target + static_part;
        }
    }
    Ok(out)
}

//! Waveform parameters, the staggered TDM transmit schedule, and the
//! closed-form resolution / ambiguity formulas derived from them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{RadarError, Result};

/// Propagation speed used throughout, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Staggered-TDM FMCW waveform description. All quantities are SI.
///
/// Even frames repeat chirps every `pri_frame_a` seconds, odd frames every
/// `pri_frame_b` seconds. The two PRIs must differ, otherwise the frame pair
/// carries no information for unfolding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarParams {
    pub carrier_frequency: f64,
    pub bandwidth: f64,
    pub chirp_duration: f64,
    pub adc_samples_per_chirp: usize,
    pub chirps_per_tx_per_frame: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub pri_frame_a: f64,
    pub pri_frame_b: f64,
    /// Default post-range-FFT SNR (dB) for a unit-amplitude target when a
    /// scene does not state its own.
    pub noise_snr_reference: f64,
}

impl Default for RadarParams {
    /// 77 GHz, 250 MHz sweep, 9 TX x 16 RX, 21.0 / 27.2 us PRIs.
    ///
    /// Reproduces 0.6 m range resolution and 5.15 / 3.97 m/s folded maximum
    /// velocities.
    fn default() -> Self {
        Self {
            carrier_frequency: 77e9,
            bandwidth: 250e6,
            chirp_duration: 20e-6,
            adc_samples_per_chirp: 512,
            chirps_per_tx_per_frame: 128,
            n_tx: 9,
            n_rx: 16,
            pri_frame_a: 21.0e-6,
            pri_frame_b: 27.2e-6,
            noise_snr_reference: 20.0,
        }
    }
}

impl RadarParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(RadarError::invalid(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("carrier_frequency", self.carrier_frequency)?;
        positive("bandwidth", self.bandwidth)?;
        positive("chirp_duration", self.chirp_duration)?;
        positive("pri_frame_a", self.pri_frame_a)?;
        positive("pri_frame_b", self.pri_frame_b)?;
        if self.pri_frame_a < self.chirp_duration || self.pri_frame_b < self.chirp_duration {
            return Err(RadarError::invalid(
                "chirp repetition intervals must be at least the chirp duration",
            ));
        }
        if self.pri_frame_a == self.pri_frame_b {
            return Err(RadarError::invalid(
                "staggered TDM needs pri_frame_a != pri_frame_b",
            ));
        }
        if self.n_tx == 0 || self.n_rx == 0 {
            return Err(RadarError::invalid("n_tx and n_rx must be at least 1"));
        }
        if !self.adc_samples_per_chirp.is_power_of_two() || self.adc_samples_per_chirp < 2 {
            return Err(RadarError::invalid(format!(
                "adc_samples_per_chirp must be a power of two >= 2, got {}",
                self.adc_samples_per_chirp
            )));
        }
        if !self.chirps_per_tx_per_frame.is_power_of_two() || self.chirps_per_tx_per_frame < 2 {
            return Err(RadarError::invalid(format!(
                "chirps_per_tx_per_frame must be a power of two >= 2, got {}",
                self.chirps_per_tx_per_frame
            )));
        }
        if !self.noise_snr_reference.is_finite() {
            return Err(RadarError::invalid("noise_snr_reference must be finite"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Chirp repetition interval of a frame: even frames use `pri_frame_a`.
    pub fn pri(&self, frame: u32) -> f64 {
        if frame.is_multiple_of(2) {
            self.pri_frame_a
        } else {
            self.pri_frame_b
        }
    }

    pub fn sample_rate(&self) -> f64 {
        self.adc_samples_per_chirp as f64 / self.chirp_duration
    }

    pub fn chirp_slope(&self) -> f64 {
        self.bandwidth / self.chirp_duration
    }

    pub fn chirps_per_frame(&self) -> usize {
        self.n_tx * self.chirps_per_tx_per_frame
    }

    pub fn frame_duration(&self, frame: u32) -> f64 {
        self.chirps_per_frame() as f64 * self.pri(frame)
    }

    /// Start time of a frame, with frame 0 starting at t = 0 and frames
    /// following back to back with alternating PRIs.
    pub fn frame_start(&self, frame: u32) -> f64 {
        let pairs = (frame / 2) as f64;
        let mut t = pairs * (self.frame_duration(0) + self.frame_duration(1));
        if frame % 2 == 1 {
            t += self.frame_duration(0);
        }
        t
    }

    /// Largest range whose beat frequency stays below half the ADC rate.
    pub fn max_unambiguous_range(&self) -> f64 {
        (self.adc_samples_per_chirp / 2) as f64 * SPEED_OF_LIGHT / (2.0 * self.bandwidth)
    }

    /// SHA-256 over the canonical JSON serialization of these parameters.
    pub fn digest(&self) -> [u8; 32] {
        let canonical = serde_json::to_vec(self).expect("params serialize");
        Sha256::digest(&canonical).into()
    }
}

/// Range resolution c / (2B), metres.
pub fn range_resolution(params: &RadarParams) -> Result<f64> {
    if !(params.bandwidth > 0.0) {
        return Err(RadarError::invalid(format!(
            "bandwidth must be positive, got {}",
            params.bandwidth
        )));
    }
    Ok(SPEED_OF_LIGHT / (2.0 * params.bandwidth))
}

/// Maximum unambiguous velocity of a TDM frame, lambda / (4 n_tx T).
pub fn folded_vmax(params: &RadarParams, frame: u32) -> Result<f64> {
    if params.n_tx == 0 {
        return Err(RadarError::invalid("n_tx must be at least 1"));
    }
    let pri = params.pri(frame);
    if !(pri > 0.0) || !(params.carrier_frequency > 0.0) {
        return Err(RadarError::invalid(
            "pri and carrier frequency must be positive",
        ));
    }
    Ok(params.wavelength() / (4.0 * params.n_tx as f64 * pri))
}

/// Beat frequency f_R + f_D for a target at `range` moving at `velocity`.
pub fn beat_frequency(range: f64, velocity: f64, params: &RadarParams) -> Result<f64> {
    if !(range >= 0.0) {
        return Err(RadarError::invalid(format!(
            "range must be non-negative, got {range}"
        )));
    }
    let f_range = 2.0 * params.bandwidth * range / (params.chirp_duration * SPEED_OF_LIGHT);
    let f_doppler = 2.0 * params.carrier_frequency * velocity / SPEED_OF_LIGHT;
    Ok(f_range + f_doppler)
}

/// 3 dB azimuth beamwidth 2 asin(1.4 lambda / (pi D)) in degrees, for an
/// aperture D given in half-wavelength units.
pub fn azimuth_resolution_3db(aperture_half_wavelengths: f64) -> Result<f64> {
    if !(aperture_half_wavelengths > 0.0) {
        return Err(RadarError::invalid("aperture must be positive"));
    }
    // D = aperture * lambda / 2, so lambda cancels.
    let arg = 2.8 / (PI * aperture_half_wavelengths);
    if arg > 1.0 {
        return Err(RadarError::invalid(format!(
            "aperture {aperture_half_wavelengths} half-wavelengths is too small for the beamwidth formula"
        )));
    }
    Ok((2.0 * arg.asin()).to_degrees())
}

/// Phase offset (4 pi / lambda) v dt accumulated between two transmit slots.
pub fn phase_migration(velocity: f64, delay: f64, wavelength: f64) -> f64 {
    4.0 * PI / wavelength * velocity * delay
}

/// Chirp schedule of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePlan {
    pub frame_index: u32,
    /// Active transmitter of each chirp slot.
    pub tx_order: Vec<usize>,
    pub slot_interval: f64,
    pub tx_revisit_interval: f64,
    pub chirp_count_total: usize,
    pub n_tx: usize,
    pub chirps_per_tx: usize,
    /// Global time of slot 0.
    pub start_time: f64,
}

impl FramePlan {
    /// Global start time of a chirp slot.
    pub fn slot_time(&self, slot: usize) -> f64 {
        self.start_time + slot as f64 * self.slot_interval
    }

    /// Offset of transmitter `tx` within one round-robin cycle.
    pub fn tx_offset(&self, tx: usize) -> f64 {
        tx as f64 * self.slot_interval
    }

    /// Mean slot time relative to the frame start.
    pub fn mid_time(&self) -> f64 {
        (self.chirp_count_total as f64 - 1.0) / 2.0 * self.slot_interval
    }
}

pub fn build_frame_plan(params: &RadarParams, frame: u32) -> Result<FramePlan> {
    if params.n_tx == 0 {
        return Err(RadarError::invalid("n_tx must be at least 1"));
    }
    if params.chirps_per_tx_per_frame < 2 {
        return Err(RadarError::invalid(format!(
            "need at least 2 chirps per TX per frame, got {}",
            params.chirps_per_tx_per_frame
        )));
    }
    let slot_interval = params.pri(frame);
    if !(slot_interval > 0.0) {
        return Err(RadarError::invalid("pri must be positive"));
    }
    let total = params.chirps_per_frame();
    Ok(FramePlan {
        frame_index: frame,
        tx_order: (0..total).map(|slot| slot % params.n_tx).collect(),
        slot_interval,
        tx_revisit_interval: params.n_tx as f64 * slot_interval,
        chirp_count_total: total,
        n_tx: params.n_tx,
        chirps_per_tx: params.chirps_per_tx_per_frame,
        start_time: params.frame_start(frame),
    })
}

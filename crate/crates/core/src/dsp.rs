//! Front half of the receive chain: TDM demultiplexing, windowed range and
//! Doppler FFTs, noncoherent integration and 2-D cell-averaging CFAR.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array2, Array3, Array4, ArrayView3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{RadarError, Result};
use crate::params::{FramePlan, RadarParams, SPEED_OF_LIGHT};
use crate::sim::DataCube;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
}

impl Window {
    /// Symmetric window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann if n <= 1 => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
                .collect(),
        }
    }
}

/// Chirps of one transmitter, indexed (rx, chirp, fast-time sample).
#[derive(Debug, Clone, PartialEq)]
pub struct TxSubCube {
    pub tx: usize,
    pub samples: Array3<Complex64>,
    /// Slot offset of this TX within a round-robin cycle, seconds.
    pub time_offset: f64,
}

/// Split a frame into per-transmitter sub-cubes, preserving chirp order.
pub fn tdm_demux(cube: &DataCube, plan: &FramePlan) -> Result<Vec<TxSubCube>> {
    if cube.n_chirps() != plan.chirp_count_total || plan.tx_order.len() != plan.chirp_count_total {
        return Err(RadarError::DimensionMismatch(format!(
            "cube has {} chirps, plan schedules {}",
            cube.n_chirps(),
            plan.chirp_count_total
        )));
    }
    (0..plan.n_tx)
        .map(|tx| {
            let slots: Vec<usize> = (0..plan.chirp_count_total)
                .filter(|&slot| plan.tx_order[slot] == tx)
                .collect();
            if slots.len() != plan.chirps_per_tx {
                return Err(RadarError::DimensionMismatch(format!(
                    "TX {tx} has {} slots, expected {}",
                    slots.len(),
                    plan.chirps_per_tx
                )));
            }
            Ok(TxSubCube {
                tx,
                samples: cube.samples.select(Axis(1), &slots),
                time_offset: plan.tx_offset(tx),
            })
        })
        .collect()
}

/// Inverse of [`tdm_demux`].
pub fn interleave(subs: &[TxSubCube], plan: &FramePlan) -> Result<Array3<Complex64>> {
    let first = subs
        .first()
        .ok_or_else(|| RadarError::DimensionMismatch("no sub-cubes".into()))?;
    let (n_rx, _, n_fast) = first.samples.dim();
    let mut out = Array3::zeros((n_rx, plan.chirp_count_total, n_fast));
    let mut next = vec![0usize; plan.n_tx];
    for (slot, &tx) in plan.tx_order.iter().enumerate() {
        let sub = subs
            .iter()
            .find(|s| s.tx == tx)
            .ok_or_else(|| RadarError::DimensionMismatch(format!("missing TX {tx}")))?;
        out.slice_mut(s![.., slot, ..])
            .assign(&sub.samples.slice(s![.., next[tx], ..]));
        next[tx] += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdConfig {
    pub window_fast: Window,
    pub window_slow: Window,
    /// Range FFT length; longer than the chirp means zero padding.
    #[serde(default)]
    pub range_fft_len: Option<usize>,
}

impl Default for RdConfig {
    fn default() -> Self {
        Self {
            window_fast: Window::Hann,
            window_slow: Window::Hann,
            range_fft_len: None,
        }
    }
}

impl RdConfig {
    pub fn rectangular() -> Self {
        Self {
            window_fast: Window::Rectangular,
            window_slow: Window::Rectangular,
            range_fft_len: None,
        }
    }
}

struct Plans {
    range: Arc<dyn Fft<f64>>,
    doppler: Arc<dyn Fft<f64>>,
    w_fast: Vec<f64>,
    w_slow: Vec<f64>,
}

impl Plans {
    fn new(n_slow: usize, n_fast: usize, n_range: usize, config: &RdConfig) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            range: planner.plan_fft_forward(n_range),
            doppler: planner.plan_fft_forward(n_slow),
            w_fast: config.window_fast.coefficients(n_fast),
            w_slow: config.window_slow.coefficients(n_slow),
        }
    }

    /// (rx, chirp, fast) -> (rx, doppler, range), Doppler FFT-shifted.
    fn transform(&self, samples: ArrayView3<Complex64>, n_range: usize) -> Array3<Complex64> {
        let (n_rx, n_slow, _) = samples.dim();
        let mut out = Array3::<Complex64>::zeros((n_rx, n_slow, n_range));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(samples.axis_iter(Axis(0)).into_par_iter())
            .for_each(|(mut plane, input)| {
                let mut profiles = Array2::<Complex64>::zeros((n_slow, n_range));
                for (mut row, chirp) in profiles
                    .axis_iter_mut(Axis(0))
                    .zip(input.axis_iter(Axis(0)))
                {
                    let buf = row.as_slice_mut().expect("contiguous row");
                    for ((b, &x), &w) in buf.iter_mut().zip(chirp.iter()).zip(&self.w_fast) {
                        *b = x * w;
                    }
                    self.range.process(buf);
                }
                let half = n_slow / 2;
                let mut column = vec![Complex64::new(0.0, 0.0); n_slow];
                for r in 0..n_range {
                    for (c, (&x, &w)) in column
                        .iter_mut()
                        .zip(profiles.column(r).iter().zip(&self.w_slow))
                    {
                        *c = x * w;
                    }
                    self.doppler.process(&mut column);
                    for (d, &value) in column.iter().enumerate() {
                        plane[[(d + half) % n_slow, r]] = value;
                    }
                }
            });
        out
    }
}

/// Windowed fast-time FFT followed by windowed slow-time FFT of one
/// transmitter's chirps. Output is indexed (rx, doppler bin, range bin) with
/// Doppler bin 0 at -v_max.
pub fn range_doppler_map(sub: &TxSubCube, config: &RdConfig) -> Array3<Complex64> {
    let (_, n_slow, n_fast) = sub.samples.dim();
    let n_range = config.range_fft_len.unwrap_or(n_fast).max(n_fast);
    Plans::new(n_slow, n_fast, n_range, config).transform(sub.samples.view(), n_range)
}

/// Range-Doppler spectra of every (tx, rx) channel of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerCube {
    /// Indexed (tx, rx, doppler bin, range bin).
    pub values: Array4<Complex64>,
    pub range_bin_width: f64,
    pub velocity_bin_width: f64,
    pub vmax: f64,
    pub slot_interval: f64,
    pub frame_index: u32,
}

impl RangeDopplerCube {
    pub fn n_tx(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_rx(&self) -> usize {
        self.values.dim().1
    }

    pub fn n_doppler(&self) -> usize {
        self.values.dim().2
    }

    pub fn n_range(&self) -> usize {
        self.values.dim().3
    }

    /// Range bins carrying positive beat frequencies.
    pub fn n_range_one_sided(&self) -> usize {
        self.n_range() / 2
    }

    /// Folded velocity at the centre of a (possibly fractional) Doppler bin.
    pub fn bin_velocity(&self, doppler_bin: f64) -> f64 {
        (doppler_bin - (self.n_doppler() / 2) as f64) * self.velocity_bin_width
    }

    pub fn bin_range(&self, range_bin: f64) -> f64 {
        range_bin * self.range_bin_width
    }

    /// Doppler bin whose centre is nearest to a folded velocity.
    pub fn velocity_bin(&self, velocity: f64) -> usize {
        let n = self.n_doppler() as i64;
        let bin = (velocity / self.velocity_bin_width).round() as i64 + n / 2;
        bin.rem_euclid(n) as usize
    }
}

/// Demultiplex a frame and transform every transmitter's chirps.
pub fn range_doppler_cube(
    cube: &DataCube,
    plan: &FramePlan,
    params: &RadarParams,
    config: &RdConfig,
) -> Result<RangeDopplerCube> {
    cube.check_plan(plan, params.n_rx, params.adc_samples_per_chirp)?;
    let subs = tdm_demux(cube, plan)?;
    let n_fast = params.adc_samples_per_chirp;
    let n_slow = plan.chirps_per_tx;
    let n_range = config.range_fft_len.unwrap_or(n_fast).max(n_fast);
    let plans = Plans::new(n_slow, n_fast, n_range, config);
    let mut values = Array4::zeros((plan.n_tx, params.n_rx, n_slow, n_range));
    for sub in &subs {
        values
            .index_axis_mut(Axis(0), sub.tx)
            .assign(&plans.transform(sub.samples.view(), n_range));
    }
    let lambda = params.wavelength();
    let vmax = lambda / (4.0 * plan.tx_revisit_interval);
    Ok(RangeDopplerCube {
        values,
        range_bin_width: SPEED_OF_LIGHT / (2.0 * params.bandwidth) * n_fast as f64 / n_range as f64,
        velocity_bin_width: lambda / (2.0 * plan.tx_revisit_interval * n_slow as f64),
        vmax,
        slot_interval: plan.slot_interval,
        frame_index: plan.frame_index,
    })
}

/// Sum of |value|^2 over all channels, indexed (doppler bin, range bin).
pub fn noncoherent_integrate(rd: &RangeDopplerCube) -> Array2<f64> {
    let (_, _, n_d, n_r) = rd.values.dim();
    let mut power = Array2::zeros((n_d, n_r));
    for channel in rd.values.outer_iter() {
        for plane in channel.outer_iter() {
            power.zip_mut_with(&plane, |p, v| *p += v.norm_sqr());
        }
    }
    power
}

/// Noncoherent integration over an arbitrary set of channel planes
/// (each indexed doppler x range).
pub fn noncoherent_integrate_planes<'a>(
    planes: impl IntoIterator<Item = ndarray::ArrayView2<'a, Complex64>>,
) -> Option<Array2<f64>> {
    let mut iter = planes.into_iter();
    let first = iter.next()?;
    let mut power = first.mapv(|v| v.norm_sqr());
    for plane in iter {
        power.zip_mut_with(&plane, |p, v| *p += v.norm_sqr());
    }
    Some(power)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarConfig {
    /// Training cells on each side, (range, doppler).
    pub training_cells: (usize, usize),
    /// Guard cells on each side, (range, doppler).
    pub guard_cells: (usize, usize),
    pub probability_of_false_alarm: f64,
    /// A hit must be the maximum of this neighbourhood, cells on each side
    /// as (range, doppler).
    #[serde(default = "default_peak_window")]
    pub peak_window: (usize, usize),
    /// Exponential-power looks summed into each cell (1 for a single
    /// channel, n_tx * n_rx after noncoherent integration).
    #[serde(default = "default_looks")]
    pub looks: usize,
}

fn default_looks() -> usize {
    1
}

fn default_peak_window() -> (usize, usize) {
    (1, 1)
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self {
            training_cells: (8, 4),
            guard_cells: (3, 2),
            probability_of_false_alarm: 1e-4,
            peak_window: default_peak_window(),
            looks: default_looks(),
        }
    }
}

impl CfarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.training_cells.0 == 0 || self.training_cells.1 == 0 {
            return Err(RadarError::invalid(
                "CFAR needs training cells in both dimensions",
            ));
        }
        let pfa = self.probability_of_false_alarm;
        if !(pfa > 0.0 && pfa < 1.0) {
            return Err(RadarError::invalid(format!(
                "pfa must lie in (0, 1), got {pfa}"
            )));
        }
        Ok(())
    }

    /// Threshold multiplier on the training mean for `n_training` cells.
    ///
    /// With K looks the cell under test is Gamma(K) and the training sum
    /// Gamma(N K), so X / (X + S) ~ Beta(K, N K) under noise alone.
    pub fn alpha(&self, n_training: usize) -> f64 {
        let n = n_training as f64;
        let pfa = self.probability_of_false_alarm;
        if self.looks <= 1 {
            return n * (pfa.powf(-1.0 / n) - 1.0);
        }
        let k = self.looks as f64;
        let beta = Beta::new(k, n * k).expect("positive shape parameters");
        let b = beta.inverse_cdf(1.0 - pfa);
        n * b / (1.0 - b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfarHit {
    pub range_bin: usize,
    pub doppler_bin: usize,
    pub power: f64,
    pub threshold: f64,
}

/// 2-D cell-averaging CFAR over a (doppler, range) power map.
///
/// The Doppler axis wraps circularly. Range windows are truncated at the map
/// edges and the multiplier is recomputed for the reduced training count.
/// A cell is reported only if it is also the maximum of its peak window.
pub fn cfar_ca2d(power: &Array2<f64>, config: &CfarConfig) -> Result<Vec<CfarHit>> {
    config.validate()?;
    let (n_d, n_r) = power.dim();
    let (tr, td) = config.training_cells;
    let (gr, gd) = config.guard_cells;
    let (hr, hd) = (tr + gr, td + gd);
    if 2 * hr + 1 > n_r || 2 * hd + 1 > n_d {
        return Err(RadarError::WindowTooLarge {
            window_range: 2 * hr + 1,
            window_doppler: 2 * hd + 1,
            map_range: n_r,
            map_doppler: n_d,
        });
    }

    // Summed-area table over the Doppler-wrapped map.
    let rows = n_d + 2 * hd;
    let mut table = Array2::<f64>::zeros((rows + 1, n_r + 1));
    for i in 0..rows {
        let d = (i + n_d - hd) % n_d;
        let mut running = 0.0;
        for r in 0..n_r {
            running += power[[d, r]];
            table[[i + 1, r + 1]] = table[[i, r + 1]] + running;
        }
    }
    let rect = |i0: usize, i1: usize, r0: usize, r1: usize| {
        table[[i1 + 1, r1 + 1]] - table[[i0, r1 + 1]] - table[[i1 + 1, r0]] + table[[i0, r0]]
    };

    let mut alphas = std::collections::HashMap::new();
    let mut hits = Vec::new();
    for d in 0..n_d {
        let centre = d + hd;
        for r in 0..n_r {
            let r0 = r.saturating_sub(hr);
            let r1 = (r + hr).min(n_r - 1);
            let g0 = r.saturating_sub(gr);
            let g1 = (r + gr).min(n_r - 1);
            let outer = rect(centre - hd, centre + hd, r0, r1);
            let inner = rect(centre - gd, centre + gd, g0, g1);
            let n_train = (2 * hd + 1) * (r1 - r0 + 1) - (2 * gd + 1) * (g1 - g0 + 1);
            let mean = (outer - inner) / n_train as f64;
            let alpha = *alphas
                .entry(n_train)
                .or_insert_with(|| config.alpha(n_train));
            let threshold = alpha * mean;
            let cut = power[[d, r]];
            if cut > threshold
                && is_local_max(power, d, r, config.peak_window.1, config.peak_window.0)
            {
                hits.push(CfarHit {
                    range_bin: r,
                    doppler_bin: d,
                    power: cut,
                    threshold,
                });
            }
        }
    }
    Ok(hits)
}

fn is_local_max(power: &Array2<f64>, d: usize, r: usize, gd: usize, gr: usize) -> bool {
    let (n_d, n_r) = power.dim();
    let cut = power[[d, r]];
    let here = d * n_r + r;
    for dd in 0..=2 * gd {
        let d2 = (d + n_d + dd - gd) % n_d;
        for r2 in r.saturating_sub(gr)..=(r + gr).min(n_r - 1) {
            if d2 == d && r2 == r {
                continue;
            }
            let other = power[[d2, r2]];
            // Ties go to the earlier cell in raster order.
            if other > cut || (other == cut && d2 * n_r + r2 < here) {
                return false;
            }
        }
    }
    true
}

/// A CFAR detection annotated with physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub range_bin: usize,
    pub doppler_bin: usize,
    pub folded_velocity: f64,
    pub power_db: f64,
    pub frame_index: u32,
}

pub type DetectionList = Vec<Detection>;

pub fn annotate(hits: &[CfarHit], rd: &RangeDopplerCube) -> DetectionList {
    hits.iter()
        .map(|h| Detection {
            range_bin: h.range_bin,
            doppler_bin: h.doppler_bin,
            folded_velocity: rd.bin_velocity(h.doppler_bin as f64),
            power_db: 10.0 * h.power.log10(),
            frame_index: rd.frame_index,
        })
        .collect()
}

//! Virtual-array snapshots, boresight calibration, angle spectra and
//! range-azimuth maps (polar and Cartesian).

use std::sync::Arc;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, VirtualArray};
use crate::dsp::{noncoherent_integrate, range_doppler_cube, RangeDopplerCube, RdConfig};
use crate::error::{RadarError, Result};
use crate::params::{FramePlan, RadarParams};
use crate::sim::DataCube;
use crate::unfold::{tx_rotations, CollapsedSnapshot, VirtualSnapshot};

/// Sentinel for empty or unmapped cells.
pub const MAP_FLOOR_DB: f64 = -120.0;
pub const DEFAULT_ANGLE_GRID: usize = 256;
pub const DEFAULT_CALIBRATION_SNR_DB: f64 = 20.0;

pub(crate) fn to_db(power: f64) -> f64 {
    if power > 0.0 {
        (10.0 * power.log10()).max(MAP_FLOOR_DB)
    } else {
        MAP_FLOOR_DB
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibrationFile", into = "CalibrationFile")]
pub struct CalibrationVector {
    gains: Vec<Complex64>,
    n_tx: usize,
    n_rx: usize,
    reference_range: f64,
    reference_azimuth: f64,
}

#[derive(Serialize, Deserialize)]
struct CalibrationFile {
    n_tx: usize,
    n_rx: usize,
    reference_range: f64,
    reference_azimuth: f64,
    /// TX-major, each entry `[re, im]`.
    gains: Vec<[f64; 2]>,
}

impl TryFrom<CalibrationFile> for CalibrationVector {
    type Error = RadarError;

    fn try_from(f: CalibrationFile) -> Result<Self> {
        let gains = f
            .gains
            .iter()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        CalibrationVector::new(
            gains,
            f.n_tx,
            f.n_rx,
            f.reference_range,
            f.reference_azimuth,
        )
    }
}

impl From<CalibrationVector> for CalibrationFile {
    fn from(c: CalibrationVector) -> Self {
        CalibrationFile {
            n_tx: c.n_tx,
            n_rx: c.n_rx,
            reference_range: c.reference_range,
            reference_azimuth: c.reference_azimuth,
            gains: c.gains.iter().map(|g| [g.re, g.im]).collect(),
        }
    }
}

impl CalibrationVector {
    /// `gains` is TX-major (`tx * n_rx + rx`); zero or non-finite entries are rejected.
    pub fn new(
        gains: Vec<Complex64>,
        n_tx: usize,
        n_rx: usize,
        reference_range: f64,
        reference_azimuth: f64,
    ) -> Result<Self> {
        if gains.len() != n_tx * n_rx || gains.is_empty() {
            return Err(RadarError::invalid(format!(
                "calibration for {n_tx} x {n_rx} channels has {} gains",
                gains.len()
            )));
        }
        if let Some(i) = gains
            .iter()
            .position(|g| !g.is_finite() || g.norm_sqr() == 0.0)
        {
            return Err(RadarError::invalid(format!(
                "calibration gain {i} is zero or not finite"
            )));
        }
        Ok(Self {
            gains,
            n_tx,
            n_rx,
            reference_range,
            reference_azimuth,
        })
    }

    pub fn ones(n_tx: usize, n_rx: usize) -> Self {
        Self {
            gains: vec![Complex64::new(1.0, 0.0); n_tx * n_rx],
            n_tx,
            n_rx,
            reference_range: 0.0,
            reference_azimuth: 0.0,
        }
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn gain(&self, tx: usize, rx: usize) -> Complex64 {
        self.gains[tx * self.n_rx + rx]
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn reference(&self) -> (f64, f64) {
        (self.reference_range, self.reference_azimuth)
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

/// Measure per-channel gains from a single static reflector at a known
/// position. Fails when the reflector's peak sits less than
/// `snr_threshold_db` above the median of the integrated map.
pub fn estimate_calibration(
    cube: &DataCube,
    plan: &FramePlan,
    truth: (f64, f64),
    params: &RadarParams,
    geometry: &ArrayGeometry,
    snr_threshold_db: f64,
) -> Result<CalibrationVector> {
    let (truth_range, truth_azimuth) = truth;
    if geometry.n_tx() != plan.n_tx || geometry.n_rx() != params.n_rx {
        return Err(RadarError::DimensionMismatch(
            "geometry does not match params".into(),
        ));
    }
    let rd = range_doppler_cube(cube, plan, params, &RdConfig::default())?;
    let power = noncoherent_integrate(&rd);
    let d0 = rd.n_doppler() / 2;
    let n_r = rd.n_range_one_sided();
    let expected = (truth_range / rd.range_bin_width).round() as isize;
    let lo = (expected - 3).clamp(0, n_r as isize - 1) as usize;
    let hi = (expected + 3).clamp(0, n_r as isize - 1) as usize;
    let r0 = (lo..=hi)
        .max_by(|&a, &b| power[[d0, a]].total_cmp(&power[[d0, b]]))
        .expect("non-empty search window");
    let peak = power[[d0, r0]];

    let mut all: Vec<f64> = power.iter().copied().collect();
    let mid = all.len() / 2;
    let median = *all.select_nth_unstable_by(mid, f64::total_cmp).1;
    let snr_db = if median > 0.0 {
        10.0 * (peak / median).log10()
    } else if peak > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    if !(snr_db >= snr_threshold_db) {
        return Err(RadarError::CalibrationFailed(format!(
            "reflector peak {snr_db:.1} dB above noise, need {snr_threshold_db:.1} dB"
        )));
    }

    let u = truth_azimuth.to_radians().sin();
    let mut gains = Vec::with_capacity(plan.n_tx * params.n_rx);
    for (tx, &pt) in geometry.tx_positions.iter().enumerate() {
        for (rx, &pr) in geometry.rx_positions.iter().enumerate() {
            let steering = Complex64::from_polar(1.0, std::f64::consts::PI * (pt + pr) as f64 * u);
            gains.push(rd.values[[tx, rx, d0, r0]] / steering);
        }
    }
    let reference = gains[0];
    if reference.norm_sqr() == 0.0 {
        return Err(RadarError::CalibrationFailed(
            "reference channel has no signal".into(),
        ));
    }
    for g in &mut gains {
        *g /= reference;
    }
    CalibrationVector::new(gains, plan.n_tx, params.n_rx, truth_range, truth_azimuth)
        .map_err(|e| RadarError::CalibrationFailed(e.to_string()))
}

/// Divide every source value by its channel's calibration gain.
pub fn apply_calibration(
    snapshot: &VirtualSnapshot,
    cal: &CalibrationVector,
) -> Result<VirtualSnapshot> {
    if snapshot.values.len() != cal.len() {
        return Err(RadarError::DimensionMismatch(format!(
            "snapshot has {} values, calibration has {}",
            snapshot.values.len(),
            cal.len()
        )));
    }
    let mut out = snapshot.clone();
    for (v, s) in out.values.iter_mut().zip(&snapshot.sources) {
        if s.tx >= cal.n_tx || s.rx >= cal.n_rx {
            return Err(RadarError::DimensionMismatch(format!(
                "source (tx {}, rx {}) outside calibration table",
                s.tx, s.rx
            )));
        }
        *v /= cal.gain(s.tx, s.rx);
    }
    Ok(out)
}

/// Complex values of one range-Doppler cell for every (tx, rx) source,
/// ordered as `varray.sources`.
pub fn assemble_snapshot(
    rd: &RangeDopplerCube,
    cell: (usize, usize),
    varray: &VirtualArray,
) -> Result<VirtualSnapshot> {
    let (range_bin, doppler_bin) = cell;
    if range_bin >= rd.n_range() || doppler_bin >= rd.n_doppler() {
        return Err(RadarError::CellOutOfBounds {
            range_bin,
            doppler_bin,
            n_range: rd.n_range(),
            n_doppler: rd.n_doppler(),
        });
    }
    if rd.n_tx() != varray.n_tx || rd.n_rx() != varray.n_rx {
        return Err(RadarError::DimensionMismatch(format!(
            "cube has {} x {} channels, array {} x {}",
            rd.n_tx(),
            rd.n_rx(),
            varray.n_tx,
            varray.n_rx
        )));
    }
    Ok(VirtualSnapshot {
        values: varray
            .sources
            .iter()
            .map(|s| rd.values[[s.tx, s.rx, doppler_bin, range_bin]])
            .collect(),
        sources: varray.sources.clone(),
        range_bin,
        doppler_bin,
        frame_index: rd.frame_index,
    })
}

/// Power versus azimuth on a grid uniform in sin(azimuth) over [-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSpectrum {
    pub sin_azimuth: Vec<f64>,
    pub azimuth_deg: Vec<f64>,
    pub power_db: Vec<f64>,
}

impl AngleSpectrum {
    pub fn peak_index(&self) -> usize {
        argmax(&self.power_db)
    }

    /// Peak azimuth refined by a parabola through the three top grid points.
    pub fn peak_azimuth(&self) -> f64 {
        self.refined_azimuth(self.peak_index())
    }

    /// Azimuth of the local maximum at grid index `k`, refined by a parabola
    /// through it and its neighbours.
    pub fn refined_azimuth(&self, k: usize) -> f64 {
        let n = self.power_db.len();
        let offset = parabolic_offset(
            self.power_db[(k + n - 1) % n],
            self.power_db[k],
            self.power_db[(k + 1) % n],
        );
        let u = (self.sin_azimuth[k] + offset * 2.0 / n as f64).clamp(-1.0, 1.0);
        u.asin().to_degrees()
    }

    /// Local maxima (strictly above both neighbours), in grid order.
    pub fn local_maxima(&self) -> Vec<usize> {
        let p = &self.power_db;
        (1..p.len().saturating_sub(1))
            .filter(|&i| p[i] > p[i - 1] && p[i] > p[i + 1])
            .collect()
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
        .0
}

/// Vertex offset in [-0.5, 0.5] of a parabola through three equally spaced
/// samples centred on a local maximum.
pub fn parabolic_offset(left: f64, centre: f64, right: f64) -> f64 {
    let denom = left - 2.0 * centre + right;
    if denom >= 0.0 || !denom.is_finite() {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// sin(azimuth) at each of `grid_size` spectrum bins.
pub fn sin_axis(grid_size: usize) -> Vec<f64> {
    (0..grid_size)
        .map(|k| -1.0 + 2.0 * k as f64 / grid_size as f64)
        .collect()
}

/// Zero-padded spatial FFT of a collapsed snapshot.
pub fn angle_spectrum(snapshot: &CollapsedSnapshot, grid_size: usize) -> Result<AngleSpectrum> {
    if grid_size < snapshot.values.len() || grid_size == 0 {
        return Err(RadarError::invalid(format!(
            "angle grid of {grid_size} bins is smaller than the {}-element array",
            snapshot.values.len()
        )));
    }
    let fft = FftPlanner::new().plan_fft_forward(grid_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); grid_size];
    buf[..snapshot.values.len()].copy_from_slice(&snapshot.values);
    fft.process(&mut buf);
    let sin_azimuth = sin_axis(grid_size);
    let half = grid_size / 2;
    let power_db = (0..grid_size)
        .map(|k| to_db(buf[(k + half) % grid_size].norm_sqr()))
        .collect();
    Ok(AngleSpectrum {
        azimuth_deg: sin_azimuth
            .iter()
            .map(|u| u.clamp(-1.0, 1.0).asin().to_degrees())
            .collect(),
        sin_azimuth,
        power_db,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Polar,
    Cartesian,
}

/// A uniformly sampled axis: value of index i is `origin + i * step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapAxis {
    pub origin: f64,
    pub step: f64,
    pub len: usize,
}

impl MapAxis {
    pub fn value(&self, index: f64) -> f64 {
        self.origin + index * self.step
    }
}

/// Power in dB over two axes. Polar maps use (range m, sin azimuth);
/// Cartesian maps use (x m, y m). Values are indexed `[dim0, dim1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeAzimuthMap {
    pub kind: MapKind,
    pub power_db: Array2<f64>,
    pub axis0: MapAxis,
    pub axis1: MapAxis,
}

impl RangeAzimuthMap {
    pub fn peak_cell(&self) -> (usize, usize) {
        let (_, n1) = self.power_db.dim();
        let flat = self
            .power_db
            .as_slice()
            .map(argmax)
            .unwrap_or_else(|| argmax(&self.power_db.iter().copied().collect::<Vec<_>>()));
        (flat / n1, flat % n1)
    }

    pub fn peak_db(&self) -> f64 {
        self.power_db.fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DopplerReduction {
    #[default]
    Max,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    pub grid_size: usize,
    pub reduction: DopplerReduction,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_ANGLE_GRID,
            reduction: DopplerReduction::Max,
        }
    }
}

/// Compensation velocity for every range-Doppler cell: a per-Doppler-bin
/// default plus rectangular overrides around resolved detections.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityLookup {
    pub per_doppler_bin: Vec<f64>,
    pub overrides: Vec<VelocityOverride>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityOverride {
    pub range_bins: (usize, usize),
    pub doppler_bins: (usize, usize),
    pub velocity: f64,
}

impl VelocityLookup {
    /// Folded velocity of each Doppler bin centre.
    pub fn folded(rd: &RangeDopplerCube) -> Self {
        Self {
            per_doppler_bin: (0..rd.n_doppler())
                .map(|d| rd.bin_velocity(d as f64))
                .collect(),
            overrides: Vec::new(),
        }
    }

    pub fn velocity_at(&self, range_bin: usize, doppler_bin: usize) -> f64 {
        self.overrides
            .iter()
            .find(|o| {
                (o.range_bins.0..=o.range_bins.1).contains(&range_bin)
                    && (o.doppler_bins.0..=o.doppler_bins.1).contains(&doppler_bin)
            })
            .map_or(self.per_doppler_bin[doppler_bin], |o| o.velocity)
    }
}

/// Per-thread scratch for the per-cell angle transform.
struct AngleWorker {
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

/// Polar range-azimuth map of one frame: every range-Doppler cell is
/// calibrated, migration-compensated, collapsed and transformed, and the
/// Doppler axis is reduced per (range, azimuth) cell.
pub fn range_azimuth_map(
    rd: &RangeDopplerCube,
    plan: &FramePlan,
    varray: &VirtualArray,
    cal: Option<&CalibrationVector>,
    velocities: &VelocityLookup,
    params: &RadarParams,
    config: &MapConfig,
) -> Result<RangeAzimuthMap> {
    let grid = config.grid_size;
    let lo = varray.positions.first().copied().unwrap_or(0);
    let n_positions = (varray.aperture() + 1) as usize;
    if grid < n_positions {
        return Err(RadarError::invalid(format!(
            "angle grid of {grid} bins is smaller than the {n_positions}-element array"
        )));
    }
    if rd.n_tx() != varray.n_tx || rd.n_rx() != varray.n_rx || plan.n_tx != varray.n_tx {
        return Err(RadarError::DimensionMismatch(
            "cube, plan and array disagree on channel count".into(),
        ));
    }
    if velocities.per_doppler_bin.len() != rd.n_doppler() {
        return Err(RadarError::DimensionMismatch(
            "velocity lookup does not match Doppler bins".into(),
        ));
    }
    if let Some(c) = cal {
        if c.n_tx() != varray.n_tx || c.n_rx() != varray.n_rx {
            return Err(RadarError::DimensionMismatch(
                "calibration does not match array".into(),
            ));
        }
    }

    let n_channels = varray.n_tx * varray.n_rx;
    let inv_gain: Vec<Complex64> = match cal {
        Some(c) => c.gains().iter().map(|g| g.inv()).collect(),
        None => vec![Complex64::new(1.0, 0.0); n_channels],
    };
    // Source -> collapsed slot, and the averaging weight of that slot.
    let slots: Vec<usize> = varray
        .sources
        .iter()
        .map(|s| (s.position - lo) as usize)
        .collect();
    let mut counts = vec![0usize; n_positions];
    for &p in &slots {
        counts[p] += 1;
    }
    let weights: Vec<f64> = slots.iter().map(|&p| 1.0 / counts[p] as f64).collect();

    let lambda = params.wavelength();
    let factors = |velocity: f64| -> Vec<Complex64> {
        let rot = tx_rotations(velocity, plan, lambda);
        varray
            .sources
            .iter()
            .zip(&weights)
            .map(|(s, &w)| rot[s.tx] * inv_gain[s.tx * varray.n_rx + s.rx] * w)
            .collect()
    };
    let bin_factors: Vec<Vec<Complex64>> = velocities
        .per_doppler_bin
        .iter()
        .map(|&v| factors(v))
        .collect();

    let n_range = rd.n_range_one_sided();
    let half = grid / 2;
    let fft = FftPlanner::new().plan_fft_forward(grid);
    let mut power = Array2::<f64>::zeros((n_range, grid));
    power
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each_init(
            || AngleWorker {
                buf: vec![Complex64::new(0.0, 0.0); grid],
                scratch: vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
                fft: Arc::clone(&fft),
            },
            |w, (r, mut row)| {
                for (d, bin) in bin_factors.iter().enumerate() {
                    let owned;
                    let f: &[Complex64] = match velocities.overrides.iter().find(|o| {
                        (o.range_bins.0..=o.range_bins.1).contains(&r)
                            && (o.doppler_bins.0..=o.doppler_bins.1).contains(&d)
                    }) {
                        Some(o) => {
                            owned = factors(o.velocity);
                            &owned
                        }
                        None => bin,
                    };
                    w.buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
                    for ((s, &slot), &k) in varray.sources.iter().zip(&slots).zip(f.iter()) {
                        w.buf[slot] += rd.values[[s.tx, s.rx, d, r]] * k;
                    }
                    w.fft.process_with_scratch(&mut w.buf, &mut w.scratch);
                    for (k, cell) in row.iter_mut().enumerate() {
                        let p = w.buf[(k + half) % grid].norm_sqr();
                        match config.reduction {
                            DopplerReduction::Max => *cell = cell.max(p),
                            DopplerReduction::Sum => *cell += p,
                        }
                    }
                }
            },
        );

    Ok(RangeAzimuthMap {
        kind: MapKind::Polar,
        power_db: power.mapv(to_db),
        axis0: MapAxis {
            origin: 0.0,
            step: rd.range_bin_width,
            len: n_range,
        },
        axis1: MapAxis {
            origin: -1.0,
            step: 2.0 / grid as f64,
            len: grid,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianConfig {
    pub x_extent: (f64, f64),
    pub y_extent: (f64, f64),
    pub cell: f64,
    /// Full azimuth field of view, degrees.
    pub fov_deg: f64,
}

impl Default for CartesianConfig {
    fn default() -> Self {
        Self {
            x_extent: (-75.0, 75.0),
            y_extent: (0.0, 150.0),
            cell: 0.3,
            fov_deg: 70.0,
        }
    }
}

/// Sub-cell sample offsets, in cells.
const SUBSAMPLES: [f64; 3] = [-1.0 / 3.0, 0.0, 1.0 / 3.0];

/// Resample a polar map onto an (x, y) grid, interpolating bilinearly in
/// (range, sin azimuth) on linear power. Each cell keeps the largest of a
/// 3 x 3 set of interpolated samples, so narrow peaks survive cells wider
/// than the beam. Cell centres sit at `extent.0 + (i + 0.5) * cell`.
pub fn polar_to_cartesian(
    map: &RangeAzimuthMap,
    config: &CartesianConfig,
) -> Result<RangeAzimuthMap> {
    if map.kind != MapKind::Polar {
        return Err(RadarError::invalid(
            "Cartesian conversion needs a polar map",
        ));
    }
    let cell = config.cell;
    if !(cell > 0.0) || !cell.is_finite() {
        return Err(RadarError::invalid(format!(
            "cell size must be positive, got {cell}"
        )));
    }
    let (x0, x1) = config.x_extent;
    let (y0, y1) = config.y_extent;
    if !(x1 > x0) || !(y1 > y0) {
        return Err(RadarError::invalid("Cartesian extents must be increasing"));
    }
    let nx = ((x1 - x0) / cell).round().max(1.0) as usize;
    let ny = ((y1 - y0) / cell).round().max(1.0) as usize;
    let linear = map.power_db.mapv(|db| 10f64.powf(db / 10.0));
    let (n0, n1) = linear.dim();
    let half_fov = (config.fov_deg / 2.0).to_radians();

    let sample = |x: f64, y: f64| -> Option<f64> {
        let r = x.hypot(y);
        if y < 0.0 || r == 0.0 || x.atan2(y).abs() > half_fov {
            return None;
        }
        let fr = (r - map.axis0.origin) / map.axis0.step;
        let fu = (x / r - map.axis1.origin) / map.axis1.step;
        if fr < 0.0 || fr > (n0 - 1) as f64 || fu < 0.0 || fu > (n1 - 1) as f64 {
            return None;
        }
        let (r0, u0) = (fr.floor() as usize, fu.floor() as usize);
        let (r1, u1) = ((r0 + 1).min(n0 - 1), (u0 + 1).min(n1 - 1));
        let (a, b) = (fr - r0 as f64, fu - u0 as f64);
        Some(
            (1.0 - a) * (1.0 - b) * linear[[r0, u0]]
                + a * (1.0 - b) * linear[[r1, u0]]
                + (1.0 - a) * b * linear[[r0, u1]]
                + a * b * linear[[r1, u1]],
        )
    };

    let mut out = Array2::<f64>::from_elem((nx, ny), MAP_FLOOR_DB);
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut column)| {
            let x = x0 + (i as f64 + 0.5) * cell;
            for (j, value) in column.iter_mut().enumerate() {
                let y = y0 + (j as f64 + 0.5) * cell;
                let best = SUBSAMPLES
                    .iter()
                    .flat_map(|dx| SUBSAMPLES.iter().map(move |dy| (dx, dy)))
                    .filter_map(|(dx, dy)| sample(x + dx * cell, y + dy * cell))
                    .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))));
                if let Some(p) = best {
                    *value = to_db(p);
                }
            }
        });

    Ok(RangeAzimuthMap {
        kind: MapKind::Cartesian,
        power_db: out,
        axis0: MapAxis {
            origin: x0 + 0.5 * cell,
            step: cell,
            len: nx,
        },
        axis1: MapAxis {
            origin: y0 + 0.5 * cell,
            step: cell,
            len: ny,
        },
    })
}

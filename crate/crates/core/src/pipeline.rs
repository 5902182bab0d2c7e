//! End-to-end processing of a staggered frame pair.
//!
//! demux -> range-Doppler -> noncoherent integration -> CFAR per frame ->
//! cross-frame association and candidate intersection -> overlap-phase
//! resolution -> migration compensation -> angle estimation -> maps.

use std::f64::consts::PI;

use ndarray::{s, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle::{
    angle_spectrum, apply_calibration, assemble_snapshot, parabolic_offset, polar_to_cartesian,
    range_azimuth_map, to_db, CalibrationVector, CartesianConfig, MapConfig, RangeAzimuthMap,
    VelocityLookup, VelocityOverride,
};
use crate::array::{build_virtual_array, ArrayGeometry, VirtualArray};
use crate::dsp::{
    annotate, cfar_ca2d, noncoherent_integrate, range_doppler_cube, CfarConfig, Detection,
    DetectionList, RangeDopplerCube, RdConfig,
};
use crate::error::{RadarError, Result};
use crate::params::{build_frame_plan, FramePlan, RadarParams};
use crate::sim::DataCube;
use crate::unfold::{
    compensate_tdm_phase, crt_candidates, crt_intersect, resolve_velocity, tx_rotations,
    ResolvedVelocity, VirtualSnapshot,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnfoldMode {
    /// Intersect both frames' candidate sets, then resolve by overlap phase.
    #[default]
    Staggered,
    /// Resolve frame A's full candidate set by overlap phase alone.
    OverlapOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub rd: RdConfig,
    /// The pipeline detects on the integrated map, so `looks` is replaced by
    /// the channel count.
    pub cfar: CfarConfig,
    pub map: MapConfig,
    /// Produce polar range-azimuth maps for both frames.
    pub maps: bool,
    pub cartesian: Option<CartesianConfig>,
    pub unfold: UnfoldMode,
    /// Candidate match tolerance (m/s); half the coarser Doppler bin if unset.
    pub crt_tolerance: Option<f64>,
    /// Frame-B detections within this many range bins are association candidates.
    pub association_range_bins: usize,
    /// Angle grid used for detection azimuths.
    pub angle_grid: usize,
    /// Further targets sharing a detection cell are reported while their
    /// beam peak stays within this many dB of the first.
    pub angle_peak_window_db: f64,
    /// Further targets must also clear the first spectrum's median by this
    /// many dB, which keeps noise cells to a single report.
    pub angle_min_prominence_db: f64,
    /// Upper bound on targets reported from one detection cell.
    pub max_targets_per_cell: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            rd: RdConfig::default(),
            cfar: CfarConfig::default(),
            map: MapConfig::default(),
            maps: true,
            cartesian: None,
            unfold: UnfoldMode::Staggered,
            crt_tolerance: None,
            association_range_bins: 3,
            angle_grid: 1024,
            angle_peak_window_db: 10.0,
            angle_min_prominence_db: 12.0,
            max_targets_per_cell: 4,
        }
    }
}

/// A detected target with unfolded velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    /// Range at the start of frame A, m.
    pub range: f64,
    /// Unfolded radial velocity, m/s.
    pub velocity: f64,
    /// Azimuth, degrees.
    pub azimuth: f64,
    /// Beamformed peak power, dB.
    pub power_db: f64,
    pub range_bin: usize,
    pub doppler_bin: usize,
    pub folded_velocity: f64,
    /// Frame-B detection used for the candidate intersection, if any.
    pub matched_doppler_bin_b: Option<usize>,
    /// Number of velocity candidates handed to the overlap test.
    pub n_candidates: usize,
    /// Overlap phase residual of the chosen velocity, rad.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub detections: Vec<TargetReport>,
    pub frame_detections: (DetectionList, DetectionList),
    /// Polar maps of frames A and B.
    pub maps: Option<(RangeAzimuthMap, RangeAzimuthMap)>,
    pub cartesian: Option<(RangeAzimuthMap, RangeAzimuthMap)>,
}

struct Frame {
    plan: FramePlan,
    rd: RangeDopplerCube,
    detections: DetectionList,
}

fn process_frame(
    cube: &DataCube,
    params: &RadarParams,
    options: &PipelineOptions,
) -> Result<Frame> {
    let expected = params.pri(cube.frame_index);
    if (cube.slot_interval - expected).abs() > 1e-9 * expected {
        return Err(RadarError::invalid(format!(
            "frame {} has PRI {:.4e} s, params expect {:.4e} s",
            cube.frame_index, cube.slot_interval, expected
        )));
    }
    let plan = build_frame_plan(params, cube.frame_index)?;
    let rd = range_doppler_cube(cube, &plan, params, &options.rd)?;
    let n_r = rd.n_range_one_sided();
    let power = noncoherent_integrate(&rd).slice(s![.., ..n_r]).to_owned();
    let cfar = CfarConfig {
        looks: params.n_tx * params.n_rx,
        ..options.cfar
    };
    let hits = cfar_ca2d(&power, &cfar)?;
    let mut detections = annotate(&hits, &rd);
    for d in &mut detections {
        d.folded_velocity = rd.bin_velocity(d.doppler_bin as f64 + doppler_offset(&power, d));
    }
    Ok(Frame {
        plan,
        rd,
        detections,
    })
}

fn doppler_offset(power: &Array2<f64>, d: &Detection) -> f64 {
    let n = power.dim().0;
    let at = |k: usize| to_db(power[[k % n, d.range_bin]]);
    parabolic_offset(
        at(d.doppler_bin + n - 1),
        at(d.doppler_bin),
        at(d.doppler_bin + 1),
    )
}

/// Run the full chain on a frame pair. `cube_a` anchors reported ranges.
pub fn run_pipeline(
    cube_a: &DataCube,
    cube_b: &DataCube,
    params: &RadarParams,
    geometry: &ArrayGeometry,
    cal: Option<&CalibrationVector>,
    options: &PipelineOptions,
) -> Result<PipelineOutput> {
    params.validate()?;
    if geometry.n_tx() != params.n_tx || geometry.n_rx() != params.n_rx {
        return Err(RadarError::DimensionMismatch(format!(
            "geometry has {} TX x {} RX, params expect {} x {}",
            geometry.n_tx(),
            geometry.n_rx(),
            params.n_tx,
            params.n_rx
        )));
    }
    if params.pri(cube_a.frame_index) == params.pri(cube_b.frame_index) {
        return Err(RadarError::invalid(
            "frame pair must use two different PRIs (consecutive staggered frames)",
        ));
    }
    let varray = build_virtual_array(geometry)?;
    let a = process_frame(cube_a, params, options)?;
    let b = process_frame(cube_b, params, options)?;
    let lambda = params.wavelength();
    let tolerance = options
        .crt_tolerance
        .unwrap_or(0.5 * a.rd.velocity_bin_width.max(b.rd.velocity_bin_width));

    let per_detection: Vec<Result<(Vec<TargetReport>, Option<Detection>)>> = a
        .detections
        .par_iter()
        .map(|det| {
            resolve_detection(
                det, &a, &b, &varray, cal, params, options, tolerance, lambda,
            )
        })
        .collect();
    let mut detections = Vec::new();
    let mut overrides_a = Vec::new();
    let mut overrides_b = Vec::new();
    for (det, result) in a.detections.iter().zip(per_detection) {
        let (reports, matched) = result?;
        if let Some(first) = reports.first() {
            overrides_a.push(region(
                det.range_bin,
                det.doppler_bin,
                &a.rd,
                first.velocity,
            ));
            if let Some(m) = matched {
                overrides_b.push(region(m.range_bin, m.doppler_bin, &b.rd, first.velocity));
            }
        }
        detections.extend(reports);
    }

    let maps = if options.maps {
        let map = |frame: &Frame, overrides: Vec<VelocityOverride>| {
            let mut lookup = VelocityLookup::folded(&frame.rd);
            lookup.overrides = overrides;
            range_azimuth_map(
                &frame.rd,
                &frame.plan,
                &varray,
                cal,
                &lookup,
                params,
                &options.map,
            )
        };
        Some((map(&a, overrides_a)?, map(&b, overrides_b)?))
    } else {
        None
    };
    let cartesian = match (&maps, &options.cartesian) {
        (Some((ma, mb)), Some(cfg)) => {
            Some((polar_to_cartesian(ma, cfg)?, polar_to_cartesian(mb, cfg)?))
        }
        _ => None,
    };

    Ok(PipelineOutput {
        detections,
        frame_detections: (a.detections, b.detections),
        maps,
        cartesian,
    })
}

fn region(
    range_bin: usize,
    doppler_bin: usize,
    rd: &RangeDopplerCube,
    velocity: f64,
) -> VelocityOverride {
    let n_d = rd.n_doppler();
    VelocityOverride {
        range_bins: (range_bin.saturating_sub(1), range_bin + 1),
        doppler_bins: (
            doppler_bin.saturating_sub(1),
            (doppler_bin + 1).min(n_d - 1),
        ),
        velocity,
    }
}

#[allow(clippy::too_many_arguments)]
fn resolve_detection(
    det: &Detection,
    a: &Frame,
    b: &Frame,
    varray: &VirtualArray,
    cal: Option<&CalibrationVector>,
    params: &RadarParams,
    options: &PipelineOptions,
    tolerance: f64,
    lambda: f64,
) -> Result<(Vec<TargetReport>, Option<Detection>)> {
    let set_a = crt_candidates(det.folded_velocity, a.rd.vmax, params.n_tx)?;
    // Every frame-B detection in the range window contributes its
    // intersection; the overlap residual arbitrates between them.
    let mut pooled: Vec<(f64, Detection)> = Vec::new();
    if options.unfold == UnfoldMode::Staggered {
        let window = options.association_range_bins;
        for d in b
            .detections
            .iter()
            .filter(|d| d.range_bin.abs_diff(det.range_bin) <= window)
        {
            let set_b = crt_candidates(d.folded_velocity, b.rd.vmax, params.n_tx)?;
            for v in crt_intersect(&set_a, &set_b, tolerance)? {
                pooled.push((v, *d));
            }
        }
    }
    let candidates: Vec<f64> = if pooled.is_empty() {
        set_a.candidates.clone()
    } else {
        pooled.iter().map(|p| p.0).collect()
    };

    let cell = (det.range_bin, det.doppler_bin);
    let mut snapshot = assemble_snapshot(&a.rd, cell, varray)?;
    if let Some(c) = cal {
        snapshot = apply_calibration(&snapshot, c)?;
    }

    // Peel targets off the cell one at a time: resolve, beamform, subtract.
    let mut components: Vec<Component> = Vec::new();
    let mut floor = f64::NEG_INFINITY;
    while components.len() < options.max_targets_per_cell.max(1) {
        let resolved = resolve_velocity(&snapshot, &candidates, varray, &a.plan, lambda)?;
        let compensated = compensate_tdm_phase(&snapshot, resolved.velocity, &a.plan, lambda);
        let spectrum = angle_spectrum(&compensated.collapse(), options.angle_grid)?;
        let k = spectrum.peak_index();
        let power_db = spectrum.power_db[k];
        if components.is_empty() {
            let mut sorted = spectrum.power_db.clone();
            sorted.sort_by(f64::total_cmp);
            floor = (power_db - options.angle_peak_window_db)
                .max(sorted[sorted.len() / 2] + options.angle_min_prominence_db);
        } else if power_db < floor {
            break;
        }
        let azimuth = spectrum.refined_azimuth(k);
        let u = azimuth.to_radians().sin();
        let steering: Vec<Complex64> = compensated
            .sources
            .iter()
            .map(|src| Complex64::from_polar(1.0, PI * src.position as f64 * u))
            .collect();
        let amplitude = compensated
            .values
            .iter()
            .zip(&steering)
            .map(|(v, s)| v * s.conj())
            .sum::<Complex64>()
            / steering.len() as f64;
        let rotations = tx_rotations(resolved.velocity, &a.plan, lambda);
        for ((v, s), src) in snapshot
            .values
            .iter_mut()
            .zip(&steering)
            .zip(&compensated.sources)
        {
            *v -= amplitude * s * rotations[src.tx].conj();
        }
        components.push(Component {
            resolved,
            u,
            azimuth,
            power_db,
        });
    }

    let n_r = a.rd.n_range_one_sided();
    let n_d = a.rd.n_doppler();
    let neighbours = [
        (det.range_bin.checked_sub(1), det.doppler_bin),
        (
            Some(det.range_bin + 1).filter(|&r| r < n_r),
            det.doppler_bin,
        ),
        (Some(det.range_bin), (det.doppler_bin + n_d - 1) % n_d),
        (Some(det.range_bin), (det.doppler_bin + 1) % n_d),
    ];
    let mut raw = Vec::with_capacity(5);
    for (r, d) in std::iter::once((Some(det.range_bin), det.doppler_bin)).chain(neighbours) {
        raw.push(match r {
            Some(r) => {
                let mut s = assemble_snapshot(&a.rd, (r, d), varray)?;
                if let Some(c) = cal {
                    s = apply_calibration(&s, c)?;
                }
                Some(s)
            }
            None => None,
        });
    }

    let coupling = params.carrier_frequency * params.chirp_duration / params.bandwidth;
    let mut reports = Vec::with_capacity(components.len());
    let mut first_match = None;
    for (i, c) in components.iter().enumerate() {
        let matched = pooled
            .iter()
            .find(|p| p.0 == c.resolved.velocity)
            .map(|p| p.1);
        if i == 0 {
            first_match = matched;
        }
        let beam = |s: &VirtualSnapshot| -> f64 {
            let fixed = compensate_tdm_phase(s, c.resolved.velocity, &a.plan, lambda).collapse();
            let first = fixed.first_position as f64;
            let sum: Complex64 = fixed
                .values
                .iter()
                .enumerate()
                .map(|(p, v)| v * Complex64::from_polar(1.0, -PI * (first + p as f64) * c.u))
                .sum();
            to_db(sum.norm_sqr())
        };
        let side = |j: usize| raw[j].as_ref().map_or(f64::NEG_INFINITY, &beam);
        let here = side(0);
        let dr = if raw[1].is_some() && raw[2].is_some() {
            parabolic_offset(side(1), here, side(2))
        } else {
            0.0
        };
        // Alias index relative to frame A. The strongest target keeps frame
        // A's integrated Doppler estimate; weaker ones use their own beam.
        let alias = ((c.resolved.velocity - det.folded_velocity) / (2.0 * a.rd.vmax)).round();
        let folded = if i == 0 {
            det.folded_velocity
        } else {
            let dd = parabolic_offset(side(3), here, side(4));
            a.rd.bin_velocity(det.doppler_bin as f64 + dd)
        };
        let velocity = folded + alias * 2.0 * a.rd.vmax;
        let measured = a.rd.bin_range(det.range_bin as f64 + dr);
        reports.push(TargetReport {
            range: measured - coupling * velocity - velocity * a.plan.mid_time(),
            velocity,
            azimuth: c.azimuth,
            power_db: c.power_db,
            range_bin: det.range_bin,
            doppler_bin: det.doppler_bin,
            folded_velocity: det.folded_velocity,
            matched_doppler_bin_b: matched.map(|m| m.doppler_bin),
            n_candidates: candidates.len(),
            residual: c.resolved.residual,
        });
    }
    Ok((reports, first_match))
}

struct Component {
    resolved: ResolvedVelocity,
    u: f64,
    azimuth: f64,
    power_db: f64,
}

/// Detections as written to disk by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub frame_a: u32,
    pub frame_b: u32,
    pub detections: Vec<TargetReport>,
}

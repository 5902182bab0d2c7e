//! Doppler unfolding for staggered TDM.
//!
//! Each frame's folded velocity expands to a candidate set spaced by twice
//! that frame's v_max. Intersecting the sets from the two frames leaves a
//! short list, and the survivor whose phase-migration compensation best
//! aligns the co-located (overlapped) virtual elements wins.

use num_complex::Complex64;

use crate::array::{VirtualArray, VirtualSource};
use crate::error::{RadarError, Result};
use crate::params::{phase_migration, FramePlan};

/// Reduce a velocity into [-vmax, vmax) by multiples of 2 vmax.
pub fn fold_velocity(v_true: f64, vmax: f64) -> f64 {
    (v_true + vmax).rem_euclid(2.0 * vmax) - vmax
}

/// Half-width (in 2 vmax steps) of the candidate set for `n_tx` transmitters.
pub fn candidate_order(n_tx: usize) -> usize {
    if n_tx.is_multiple_of(2) {
        n_tx / 2
    } else {
        (n_tx - 1) / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub frame_index: u32,
    pub folded_velocity: f64,
    pub vmax: f64,
    pub order: usize,
    /// Sorted ascending, length 2 * order + 1.
    pub candidates: Vec<f64>,
}

pub fn crt_candidates(folded: f64, vmax: f64, n_tx: usize) -> Result<CandidateSet> {
    if !(vmax > 0.0) || n_tx == 0 {
        return Err(RadarError::invalid(
            "candidate sets need vmax > 0 and n_tx >= 1",
        ));
    }
    let order = candidate_order(n_tx);
    let m = order as i64;
    Ok(CandidateSet {
        frame_index: 0,
        folded_velocity: folded,
        vmax,
        order,
        candidates: (-m..=m).map(|k| folded + 2.0 * k as f64 * vmax).collect(),
    })
}

/// Midpoints of every cross-set pair closer than `tolerance`, sorted and
/// de-duplicated. An empty result is valid.
pub fn crt_intersect(
    set_a: &CandidateSet,
    set_b: &CandidateSet,
    tolerance: f64,
) -> Result<Vec<f64>> {
    if !(tolerance > 0.0) {
        return Err(RadarError::invalid(
            "intersection tolerance must be positive",
        ));
    }
    let mut out: Vec<f64> = set_a
        .candidates
        .iter()
        .flat_map(|&a| {
            set_b
                .candidates
                .iter()
                .filter(move |&&b| (a - b).abs() <= tolerance)
                .map(move |&b| 0.5 * (a + b))
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|x, y| (*x - *y).abs() <= 1e-9);
    Ok(out)
}

/// Complex response of one range-Doppler cell across all (tx, rx) pairings.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualSnapshot {
    /// One value per source, aligned with `sources`.
    pub values: Vec<Complex64>,
    pub sources: Vec<VirtualSource>,
    pub range_bin: usize,
    pub doppler_bin: usize,
    pub frame_index: u32,
}

/// Snapshot reduced to a filled grid of unique positions.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedSnapshot {
    /// Position (half-wavelength units) of `values[0]`.
    pub first_position: u32,
    pub values: Vec<Complex64>,
}

impl VirtualSnapshot {
    /// Average co-located sources onto a contiguous position grid; positions
    /// with no source are zero.
    pub fn collapse(&self) -> CollapsedSnapshot {
        let lo = self.sources.iter().map(|s| s.position).min().unwrap_or(0);
        let hi = self.sources.iter().map(|s| s.position).max().unwrap_or(0);
        let len = if self.sources.is_empty() {
            0
        } else {
            (hi - lo + 1) as usize
        };
        let mut sums = vec![Complex64::new(0.0, 0.0); len];
        let mut counts = vec![0u32; len];
        for (s, v) in self.sources.iter().zip(&self.values) {
            let i = (s.position - lo) as usize;
            sums[i] += v;
            counts[i] += 1;
        }
        for (s, &c) in sums.iter_mut().zip(&counts) {
            if c > 1 {
                *s /= c as f64;
            }
        }
        CollapsedSnapshot {
            first_position: lo,
            values: sums,
        }
    }
}

/// Remove the migration phase (4 pi / lambda) v k T from every value driven
/// by transmitter k.
pub fn compensate_tdm_phase(
    snapshot: &VirtualSnapshot,
    velocity: f64,
    plan: &FramePlan,
    wavelength: f64,
) -> VirtualSnapshot {
    let rotations = tx_rotations(velocity, plan, wavelength);
    let mut out = snapshot.clone();
    for (v, s) in out.values.iter_mut().zip(&snapshot.sources) {
        *v *= rotations[s.tx];
    }
    out
}

/// exp(-j phi_k) for each transmitter k.
pub fn tx_rotations(velocity: f64, plan: &FramePlan, wavelength: f64) -> Vec<Complex64> {
    (0..plan.n_tx)
        .map(|tx| {
            Complex64::from_polar(
                1.0,
                -phase_migration(velocity, plan.tx_offset(tx), wavelength),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedVelocity {
    pub velocity: f64,
    /// Overlap phase residual of the winner, radians.
    pub residual: f64,
}

/// Overlap phase residual after compensating with `velocity`: for each
/// overlapped position, the mean absolute phase difference over its
/// distinct-TX pairs, summed over positions.
pub fn overlap_residual(
    snapshot: &VirtualSnapshot,
    velocity: f64,
    varray: &VirtualArray,
    plan: &FramePlan,
    wavelength: f64,
) -> f64 {
    let rotations = tx_rotations(velocity, plan, wavelength);
    let compensated = |i: usize| snapshot.values[i] * rotations[varray.sources[i].tx];
    let mut total = 0.0;
    let mut pairs = varray.overlapped_pairs.iter().peekable();
    while let Some(first) = pairs.next() {
        let mut sum = (compensated(first.first) * compensated(first.second).conj())
            .arg()
            .abs();
        let mut count = 1usize;
        while let Some(next) = pairs.next_if(|p| p.position == first.position) {
            sum += (compensated(next.first) * compensated(next.second).conj())
                .arg()
                .abs();
            count += 1;
        }
        total += sum / count as f64;
    }
    total
}

/// Pick the candidate whose compensation best aligns overlapped elements.
/// Ties go to the smallest |v|.
pub fn resolve_velocity(
    snapshot: &VirtualSnapshot,
    candidates: &[f64],
    varray: &VirtualArray,
    plan: &FramePlan,
    wavelength: f64,
) -> Result<ResolvedVelocity> {
    if candidates.is_empty() {
        return Err(RadarError::EmptyCandidates);
    }
    if varray.overlapped_pairs.is_empty() {
        return Err(RadarError::UnsupportedGeometry(
            "velocity resolution needs co-located elements from different transmitters".into(),
        ));
    }
    if snapshot.values.len() != varray.n_sources() {
        return Err(RadarError::DimensionMismatch(format!(
            "snapshot has {} values, array has {} sources",
            snapshot.values.len(),
            varray.n_sources()
        )));
    }
    if candidates.len() == 1 {
        let velocity = candidates[0];
        return Ok(ResolvedVelocity {
            velocity,
            residual: overlap_residual(snapshot, velocity, varray, plan, wavelength),
        });
    }
    let mut best: Option<ResolvedVelocity> = None;
    for &velocity in candidates {
        let residual = overlap_residual(snapshot, velocity, varray, plan, wavelength);
        let better = match best {
            None => true,
            Some(b) => {
                let tie = (residual - b.residual).abs() <= 1e-12 * b.residual.max(1e-12);
                if tie {
                    velocity.abs() < b.velocity.abs()
                } else {
                    residual < b.residual
                }
            }
        };
        if better {
            best = Some(ResolvedVelocity { velocity, residual });
        }
    }
    Ok(best.expect("non-empty candidates"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{build_virtual_array, ArrayGeometry};
    use crate::params::{build_frame_plan, RadarParams};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const PAPER_S1: [f64; 9] = [-30.1, -22.9, -15.6, -8.4, -1.2, 6.0, 13.2, 20.5, 27.7];
    const PAPER_S2: [f64; 9] = [-15.6, -11.3, -7.0, -2.6, 1.7, 6.0, 10.4, 14.7, 19.0];

    fn set(values: &[f64]) -> CandidateSet {
        CandidateSet {
            frame_index: 0,
            folded_velocity: values[values.len() / 2],
            vmax: 1.0,
            order: values.len() / 2,
            candidates: values.to_vec(),
        }
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len(), "{a:?} vs {b:?}");
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn fold_examples() {
        assert!((fold_velocity(6.0, 3.6) + 1.2).abs() < 1e-9);
        assert!((fold_velocity(6.0, 2.2) - 1.6).abs() < 1e-9);
        assert!((fold_velocity(1.5, 3.6) - 1.5).abs() < 1e-12);
        assert_eq!(fold_velocity(-3.6, 3.6), -3.6);
        assert!((fold_velocity(3.6, 3.6) + 3.6).abs() < 1e-12);
    }

    #[test]
    fn candidate_examples() {
        let s1 = crt_candidates(-1.2, 3.6, 9).unwrap();
        assert_eq!(s1.order, 4);
        assert_close(
            &s1.candidates,
            &[-30.0, -22.8, -15.6, -8.4, -1.2, 6.0, 13.2, 20.4, 27.6],
            1e-9,
        );
        // Tabulated lists are rounded to 0.1 m/s.
        assert_close(&s1.candidates, &PAPER_S1, 0.15);
        let s2 = crt_candidates(1.6, 2.2, 9).unwrap();
        assert_close(
            &s2.candidates,
            &[-16.0, -11.6, -7.2, -2.8, 1.6, 6.0, 10.4, 14.8, 19.2],
            1e-9,
        );
        let single = crt_candidates(0.7, 2.0, 1).unwrap();
        assert_eq!(single.candidates, vec![0.7]);
        assert_eq!(crt_candidates(0.0, 1.0, 4).unwrap().candidates.len(), 5);
    }

    #[test]
    fn intersect_tabulated_sets() {
        let got = crt_intersect(&set(&PAPER_S1), &set(&PAPER_S2), 0.25).unwrap();
        assert_close(&got, &[-15.6, 6.0], 0.2);
    }

    #[test]
    fn intersect_exact_sets() {
        let s1 = crt_candidates(-1.2, 3.6, 9).unwrap();
        let s2 = crt_candidates(1.6, 2.2, 9).unwrap();
        let got = crt_intersect(&s1, &s2, 0.3).unwrap();
        assert_close(&got, &[6.0], 1e-9);
        let same = crt_intersect(&s1, &s1, 0.01).unwrap();
        assert_close(&same, &s1.candidates, 1e-12);
        assert!(crt_intersect(&s1, &s2, 0.0).is_err());
    }

    fn ideal_snapshot(
        va: &VirtualArray,
        plan: &FramePlan,
        lambda: f64,
        v: f64,
        az: f64,
    ) -> VirtualSnapshot {
        let u = az.to_radians().sin();
        VirtualSnapshot {
            values: va
                .sources
                .iter()
                .map(|s| {
                    let phase = PI * s.position as f64 * u
                        + phase_migration(v, plan.tx_offset(s.tx), lambda);
                    Complex64::from_polar(1.3, phase + 0.4)
                })
                .collect(),
            sources: va.sources.clone(),
            range_bin: 0,
            doppler_bin: 0,
            frame_index: 0,
        }
    }

    fn fixture() -> (VirtualArray, FramePlan, f64) {
        let p = RadarParams::default();
        (
            build_virtual_array(&ArrayGeometry::default()).unwrap(),
            build_frame_plan(&p, 0).unwrap(),
            p.wavelength(),
        )
    }

    #[test]
    fn resolve_picks_true_candidate() {
        let (va, plan, lambda) = fixture();
        let snap = ideal_snapshot(&va, &plan, lambda, 6.0, 12.0);
        let r = resolve_velocity(&snap, &[-15.6, 6.0], &va, &plan, lambda).unwrap();
        assert_eq!(r.velocity, 6.0);
        assert!(r.residual < 1e-6);
    }

    #[test]
    fn resolve_static_prefers_zero() {
        let (va, plan, lambda) = fixture();
        let snap = ideal_snapshot(&va, &plan, lambda, 0.0, -20.0);
        let c = crt_candidates(0.0, 5.15, 9).unwrap();
        let r = resolve_velocity(&snap, &c.candidates, &va, &plan, lambda).unwrap();
        assert_eq!(r.velocity, 0.0);
    }

    #[test]
    fn resolve_single_and_errors() {
        let (va, plan, lambda) = fixture();
        let snap = ideal_snapshot(&va, &plan, lambda, 6.0, 0.0);
        assert_eq!(
            resolve_velocity(&snap, &[42.0], &va, &plan, lambda)
                .unwrap()
                .velocity,
            42.0
        );
        assert!(matches!(
            resolve_velocity(&snap, &[], &va, &plan, lambda),
            Err(RadarError::EmptyCandidates)
        ));
        let lone = build_virtual_array(&ArrayGeometry {
            tx_positions: vec![0],
            rx_positions: vec![0, 1],
        })
        .unwrap();
        let snap1 = VirtualSnapshot {
            values: vec![Complex64::new(1.0, 0.0); 2],
            sources: lone.sources.clone(),
            range_bin: 0,
            doppler_bin: 0,
            frame_index: 0,
        };
        assert!(matches!(
            resolve_velocity(&snap1, &[0.0, 1.0], &lone, &plan, lambda),
            Err(RadarError::UnsupportedGeometry(_))
        ));
    }

    #[test]
    fn compensation_identity_and_phase() {
        let (va, plan, lambda) = fixture();
        let snap = ideal_snapshot(&va, &plan, lambda, 10.0, 20.0);
        assert_eq!(compensate_tdm_phase(&snap, 0.0, &plan, lambda), snap);
        let out = compensate_tdm_phase(&snap, 10.0, &plan, lambda);
        for ((before, after), s) in snap.values.iter().zip(&out.values).zip(&snap.sources) {
            let applied = (after / before).arg();
            let expected = -phase_migration(10.0, plan.tx_offset(s.tx), lambda);
            let d = (applied - expected + PI).rem_euclid(2.0 * PI) - PI;
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn collapse_averages_colocated() {
        let (va, plan, lambda) = fixture();
        let snap = ideal_snapshot(&va, &plan, lambda, 0.0, 20.0);
        let c = snap.collapse();
        assert_eq!(c.first_position, 0);
        assert_eq!(c.values.len(), 86);
        let u = 20f64.to_radians().sin();
        for (p, v) in c.values.iter().enumerate() {
            let expected = Complex64::from_polar(1.3, PI * p as f64 * u + 0.4);
            assert!((v - expected).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn crt_round_trip(frac in -0.999f64..0.999, vmax in 0.5f64..10.0, n_tx in 1usize..13) {
            let m = candidate_order(n_tx);
            let v = frac * (2 * m + 1) as f64 * vmax;
            let set = crt_candidates(fold_velocity(v, vmax), vmax, n_tx).unwrap();
            prop_assert!(set.candidates.iter().any(|c| (c - v).abs() < 1e-9));
            prop_assert_eq!(set.candidates.len(), 2 * m + 1);
            prop_assert!(set.candidates.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn intersect_symmetric_and_monotone(fa in -3.0f64..3.0, fb in -2.0f64..2.0, tol in 0.01f64..1.0) {
            let a = crt_candidates(fa, 3.1, 9).unwrap();
            let b = crt_candidates(fb, 2.3, 9).unwrap();
            let ab = crt_intersect(&a, &b, tol).unwrap();
            let ba = crt_intersect(&b, &a, tol).unwrap();
            prop_assert_eq!(ab.len(), ba.len());
            for (x, y) in ab.iter().zip(&ba) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let wider = crt_intersect(&a, &b, tol * 2.0).unwrap();
            for x in &ab {
                prop_assert!(wider.iter().any(|w| (w - x).abs() < 1e-9));
            }
        }

        #[test]
        fn compensate_round_trip(v in -40.0f64..40.0, az in -60.0f64..60.0) {
            let (va, plan, lambda) = fixture();
            let snap = ideal_snapshot(&va, &plan, lambda, 3.0, az);
            let back = compensate_tdm_phase(&compensate_tdm_phase(&snap, v, &plan, lambda), -v, &plan, lambda);
            for (x, y) in snap.values.iter().zip(&back.values) {
                prop_assert!((x - y).norm() <= 1e-12 * x.norm());
            }
        }

        #[test]
        fn resolve_invariant_to_global_scaling(mag in 0.01f64..100.0, phase in -PI..PI, idx in 0usize..9) {
            let (va, plan, lambda) = fixture();
            let c = crt_candidates(fold_velocity(7.3, 5.15), 5.15, 9).unwrap();
            let snap = ideal_snapshot(&va, &plan, lambda, c.candidates[idx], 8.0);
            let base = resolve_velocity(&snap, &c.candidates, &va, &plan, lambda).unwrap();
            let g = Complex64::from_polar(mag, phase);
            let scaled = VirtualSnapshot { values: snap.values.iter().map(|v| v * g).collect(), ..snap.clone() };
            let r = resolve_velocity(&scaled, &c.candidates, &va, &plan, lambda).unwrap();
            prop_assert_eq!(r.velocity, base.velocity);
            prop_assert_eq!(base.velocity, c.candidates[idx]);
        }
    }
}

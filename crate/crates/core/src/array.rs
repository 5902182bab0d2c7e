//! Physical and virtual MIMO array geometry.
//!
//! Positions live on an integer grid of half-wavelength units so that
//! co-located virtual elements are detected exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{RadarError, Result};

/// Horizontal TX and RX element positions in half-wavelength units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub tx_positions: Vec<u32>,
    pub rx_positions: Vec<u32>,
}

impl Default for ArrayGeometry {
    /// Nine TX and sixteen RX whose pairwise sums tile a filled 86-element
    /// half-wavelength ULA (positions 0..=85).
    fn default() -> Self {
        Self {
            tx_positions: (0..9).map(|k| 4 * k).collect(),
            rx_positions: vec![0, 1, 2, 3, 11, 12, 13, 14, 46, 47, 48, 49, 50, 51, 52, 53],
        }
    }
}

impl ArrayGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.tx_positions.is_empty() || self.rx_positions.is_empty() {
            return Err(RadarError::invalid(
                "array geometry needs at least one TX and one RX",
            ));
        }
        let mut rx = self.rx_positions.clone();
        rx.sort_unstable();
        rx.dedup();
        if rx.len() != self.rx_positions.len() {
            return Err(RadarError::invalid("duplicate RX positions"));
        }
        let mut tx = self.tx_positions.clone();
        tx.sort_unstable();
        tx.dedup();
        if tx.len() != self.tx_positions.len() {
            return Err(RadarError::invalid("duplicate TX positions"));
        }
        Ok(())
    }

    pub fn n_tx(&self) -> usize {
        self.tx_positions.len()
    }

    pub fn n_rx(&self) -> usize {
        self.rx_positions.len()
    }
}

/// One physical (TX, RX) pairing and the virtual position it synthesizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VirtualSource {
    pub position: u32,
    pub tx: usize,
    pub rx: usize,
}

/// Two co-located sources driven by different transmitters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlapPair {
    pub position: u32,
    /// Indices into [`VirtualArray::sources`].
    pub first: usize,
    pub second: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualArray {
    /// Sorted, unique virtual positions.
    pub positions: Vec<u32>,
    /// All (tx, rx) pairings ordered by (position, tx, rx).
    pub sources: Vec<VirtualSource>,
    /// For each entry of `positions`, the indices of its sources.
    pub element_sources: Vec<Vec<usize>>,
    pub overlapped_pairs: Vec<OverlapPair>,
    pub n_tx: usize,
    pub n_rx: usize,
}

impl VirtualArray {
    pub fn aperture(&self) -> u32 {
        match (self.positions.first(), self.positions.last()) {
            (Some(lo), Some(hi)) => hi - lo,
            _ => 0,
        }
    }

    /// Index of a (tx, rx) pairing into per-channel tables (tx-major).
    pub fn channel_index(&self, tx: usize, rx: usize) -> usize {
        tx * self.n_rx + rx
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }
}

pub fn build_virtual_array(geometry: &ArrayGeometry) -> Result<VirtualArray> {
    geometry.validate()?;
    let mut sources: Vec<VirtualSource> = geometry
        .tx_positions
        .iter()
        .enumerate()
        .flat_map(|(tx, &pt)| {
            geometry
                .rx_positions
                .iter()
                .enumerate()
                .map(move |(rx, &pr)| VirtualSource {
                    position: pt + pr,
                    tx,
                    rx,
                })
        })
        .collect();
    sources.sort_unstable();

    let mut grouped: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in sources.iter().enumerate() {
        grouped.entry(s.position).or_default().push(i);
    }

    let mut overlapped_pairs = Vec::new();
    for (&position, members) in &grouped {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                if sources[i].tx != sources[j].tx {
                    overlapped_pairs.push(OverlapPair {
                        position,
                        first: i,
                        second: j,
                    });
                }
            }
        }
    }

    Ok(VirtualArray {
        positions: grouped.keys().copied().collect(),
        element_sources: grouped.into_values().collect(),
        sources,
        overlapped_pairs,
        n_tx: geometry.n_tx(),
        n_rx: geometry.n_rx(),
    })
}

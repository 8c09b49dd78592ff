use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::beamfocus::{aligned_power, csi_oracle_entries, level_phase, quantize_phase, BeamfocusingMatrix};
use crate::error::{Error, Result};
use crate::geometry::{ApertureConfig, ChannelMatrix, Point3};

/// Wraps a phase into `(-pi, pi]`.
pub fn wrap_phase(phase: f64) -> f64 {
    let w = phase.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Nearest quantized level for every component.
pub fn quantize_action(continuous: &[f64], bits: u32) -> Vec<u32> {
    continuous.iter().map(|&v| quantize_phase(v, bits)).collect()
}

/// `+1` when the power strictly increased, `-1` otherwise.
pub fn reward(p_now: f64, p_prev: f64) -> f64 {
    if p_now > p_prev {
        1.0
    } else {
        -1.0
    }
}

/// Power-measurement environment of one subarray. Only the subarray's own
/// elements contribute to the measured power.
#[derive(Clone, Debug, PartialEq)]
pub struct SubarrayEnv {
    pub index: usize,
    pub rows: usize,
    pub cols: usize,
    pub bits: u32,
    pub channel: Vec<Complex64>,
    pub dfp: Point3,
}

impl SubarrayEnv {
    pub fn new(
        index: usize,
        rows: usize,
        cols: usize,
        bits: u32,
        channel: Vec<Complex64>,
        dfp: Point3,
    ) -> Result<Self> {
        if channel.len() != rows * cols || channel.is_empty() {
            return Err(Error::Dimension {
                expected: rows * cols,
                actual: channel.len(),
            });
        }
        Ok(SubarrayEnv {
            index,
            rows,
            cols,
            bits,
            channel,
            dfp,
        })
    }

    /// Environment for subarray `m` of a full-aperture channel.
    pub fn from_channel(aperture: &ApertureConfig, h: &ChannelMatrix, m: usize, bits: u32) -> Result<Self> {
        if m >= aperture.num_subarrays() {
            return Err(Error::domain(format!("subarray {m} out of range")));
        }
        Self::new(
            m,
            aperture.sub_rows(),
            aperture.sub_cols(),
            bits,
            h.subarray(aperture, m),
            h.dfp,
        )
    }

    pub fn elements(&self) -> usize {
        self.channel.len()
    }

    /// Received power for the given level indices, amplitude `1/sqrt(N')`.
    pub fn power(&self, indices: &[u32]) -> f64 {
        let amp = 1.0 / (self.channel.len() as f64).sqrt();
        let s: Complex64 = indices
            .iter()
            .zip(&self.channel)
            .map(|(&k, h)| Complex64::from_polar(amp, -level_phase(k, self.bits)) * h)
            .sum();
        s.norm_sqr()
    }

    pub fn oracle(&self) -> BeamfocusingMatrix {
        csi_oracle_entries(self.rows, self.cols, &self.channel, self.bits)
    }

    /// Power of the quantized phase-conjugate matrix; the normalization target.
    pub fn oracle_power(&self) -> f64 {
        self.power(&self.oracle().indices)
    }

    pub fn aligned_power(&self) -> f64 {
        aligned_power(&self.channel)
    }

    /// Phases in `(-pi, pi]` as fed to the networks.
    pub fn phases(&self, indices: &[u32]) -> Vec<f64> {
        indices.iter().map(|&k| wrap_phase(level_phase(k, self.bits))).collect()
    }

    pub fn matrix(&self, indices: Vec<u32>) -> Result<BeamfocusingMatrix> {
        BeamfocusingMatrix::new(self.rows, self.cols, self.bits, indices)
    }
}

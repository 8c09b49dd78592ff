//! Quantized beamfocusing matrices, received power, the exact-CSI phase-conjugate
//! baseline, power maps on the focal reference plane and the focusing radius.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ApertureConfig, ChannelMatrix, ChannelModel, Point3};

/// Index of the quantized phase `2 pi k / 2^bits` nearest to `phase`; exact ties go
/// to the lower index.
pub fn quantize_phase(phase: f64, bits: u32) -> u32 {
    let levels = 1u32 << bits;
    let x = phase.rem_euclid(TAU) / TAU * levels as f64;
    let lo = x.floor();
    let k = if x - lo <= 0.5 { lo } else { lo + 1.0 };
    (k as u32) % levels
}

pub fn level_phase(index: u32, bits: u32) -> f64 {
    TAU * index as f64 / (1u32 << bits) as f64
}

/// Phase-only matrix with coefficients `exp(j phi) / sqrt(N)`, `phi = 2 pi k / 2^q`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamfocusingMatrix {
    pub rows: usize,
    pub cols: usize,
    pub bits: u32,
    /// Row-major level indices in `[0, 2^bits)`.
    pub indices: Vec<u32>,
}

impl BeamfocusingMatrix {
    pub fn new(rows: usize, cols: usize, bits: u32, indices: Vec<u32>) -> Result<Self> {
        if indices.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                actual: indices.len(),
            });
        }
        if bits == 0 || bits > 16 {
            return Err(Error::config("phase bits must be in 1..=16"));
        }
        let levels = 1u32 << bits;
        if let Some(bad) = indices.iter().find(|&&k| k >= levels) {
            return Err(Error::domain(format!("phase index {bad} outside [0, {levels})")));
        }
        Ok(BeamfocusingMatrix {
            rows,
            cols,
            bits,
            indices,
        })
    }

    pub fn uniform(rows: usize, cols: usize, bits: u32, index: u32) -> Result<Self> {
        Self::new(rows, cols, bits, vec![index; rows * cols])
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn phases(&self) -> Vec<f64> {
        self.indices.iter().map(|&k| level_phase(k, self.bits)).collect()
    }

    pub fn weights(&self) -> Vec<Complex64> {
        let amp = 1.0 / (self.len() as f64).sqrt();
        self.indices
            .iter()
            .map(|&k| Complex64::from_polar(amp, level_phase(k, self.bits)))
            .collect()
    }
}

/// A beamfocusing matrix for subarray `index` (0-based, row-major over the
/// subarray grid).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamfocusingSubmatrix {
    pub index: usize,
    pub matrix: BeamfocusingMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerMeasurement {
    pub power: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

/// Coherent sum `sum_ij conj(w_ij) h_ij`.
pub fn array_sum(weights: &[Complex64], h: &[Complex64]) -> Complex64 {
    weights.iter().zip(h).map(|(w, h)| w.conj() * h).sum()
}

/// Expected received power `|sum conj(w) h|^2 sigma_s^2 + sigma_nu^2`.
pub fn received_power(
    w: &BeamfocusingMatrix,
    h: &ChannelMatrix,
    signal_variance: f64,
    noise_variance: f64,
) -> Result<PowerMeasurement> {
    if w.rows != h.rows || w.cols != h.cols {
        return Err(Error::Dimension {
            expected: h.rows * h.cols,
            actual: w.rows * w.cols,
        });
    }
    Ok(PowerMeasurement {
        power: array_sum(&w.weights(), &h.entries).norm_sqr() * signal_variance + noise_variance,
        signal_variance,
        noise_variance,
    })
}

/// Noise-free received power for unit signal variance.
pub fn power(w: &BeamfocusingMatrix, h: &ChannelMatrix) -> Result<f64> {
    Ok(received_power(w, h, 1.0, 0.0)?.power)
}

/// Places each submatrix in its block of the full matrix.
pub fn assemble_matrix(aperture: &ApertureConfig, subs: &[BeamfocusingSubmatrix]) -> Result<BeamfocusingMatrix> {
    let m_total = aperture.num_subarrays();
    if subs.len() != m_total {
        return Err(Error::domain(format!(
            "expected {m_total} submatrices, got {}",
            subs.len()
        )));
    }
    let (sr, sc) = (aperture.sub_rows(), aperture.sub_cols());
    let bits = subs[0].matrix.bits;
    let mut seen = vec![false; m_total];
    let mut indices = vec![0u32; aperture.num_elements()];
    for sub in subs {
        if sub.index >= m_total {
            return Err(Error::domain(format!("subarray index {} out of range", sub.index)));
        }
        if std::mem::replace(&mut seen[sub.index], true) {
            return Err(Error::domain(format!("duplicate subarray index {}", sub.index)));
        }
        if sub.matrix.bits != bits {
            return Err(Error::domain("submatrices use different phase resolutions"));
        }
        if sub.matrix.rows != sr || sub.matrix.cols != sc {
            return Err(Error::Dimension {
                expected: sr * sc,
                actual: sub.matrix.len(),
            });
        }
        let (br, bc) = (sub.index / aperture.subarray_cols, sub.index % aperture.subarray_cols);
        for i in 0..sr {
            for j in 0..sc {
                indices[(br * sr + i) * aperture.cols + bc * sc + j] = sub.matrix.indices[i * sc + j];
            }
        }
    }
    BeamfocusingMatrix::new(aperture.rows, aperture.cols, bits, indices)
}

/// Splits a full matrix into its submatrices, ordered by subarray index.
pub fn disassemble_matrix(aperture: &ApertureConfig, w: &BeamfocusingMatrix) -> Result<Vec<BeamfocusingSubmatrix>> {
    if w.rows != aperture.rows || w.cols != aperture.cols {
        return Err(Error::Dimension {
            expected: aperture.num_elements(),
            actual: w.len(),
        });
    }
    let (sr, sc) = (aperture.sub_rows(), aperture.sub_cols());
    (0..aperture.num_subarrays())
        .map(|m| {
            let (br, bc) = (m / aperture.subarray_cols, m % aperture.subarray_cols);
            let mut idx = Vec::with_capacity(sr * sc);
            for i in 0..sr {
                for j in 0..sc {
                    idx.push(w.indices[(br * sr + i) * w.cols + bc * sc + j]);
                }
            }
            Ok(BeamfocusingSubmatrix {
                index: m,
                matrix: BeamfocusingMatrix::new(sr, sc, w.bits, idx)?,
            })
        })
        .collect()
}

/// Phase-conjugate matrix from exact channel knowledge: every element's phase is the
/// quantized level nearest to `arg(h)`.
pub fn csi_oracle(h: &ChannelMatrix, bits: u32) -> BeamfocusingMatrix {
    csi_oracle_entries(h.rows, h.cols, &h.entries, bits)
}

pub fn csi_oracle_entries(rows: usize, cols: usize, h: &[Complex64], bits: u32) -> BeamfocusingMatrix {
    BeamfocusingMatrix {
        rows,
        cols,
        bits,
        indices: h.iter().map(|v| quantize_phase(v.arg(), bits)).collect(),
    }
}

/// Power of perfect (unquantized) phase alignment: `(sum |h| / sqrt(N))^2`.
pub fn aligned_power(h: &[Complex64]) -> f64 {
    let s: f64 = h.iter().map(|v| v.norm()).sum();
    s * s / h.len() as f64
}

/// Square sampling grid on the plane through the focal point parallel to the
/// aperture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencePlane {
    pub half_extent_m: f64,
    pub resolution: usize,
}

impl Default for ReferencePlane {
    fn default() -> Self {
        ReferencePlane {
            half_extent_m: 0.5,
            resolution: 101,
        }
    }
}

impl ReferencePlane {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 3 || self.resolution.is_multiple_of(2) {
            return Err(Error::config("reference plane resolution must be odd and >= 3"));
        }
        if !(self.half_extent_m > 0.0) {
            return Err(Error::config("reference plane extent must be positive"));
        }
        Ok(())
    }

    pub fn cell(&self) -> f64 {
        2.0 * self.half_extent_m / (self.resolution - 1) as f64
    }

    /// In-plane offset of grid node `(a, b)` from the center.
    pub fn offset(&self, a: usize, b: usize) -> (f64, f64) {
        let c = self.cell();
        (-self.half_extent_m + a as f64 * c, -self.half_extent_m + b as f64 * c)
    }
}

/// Power sampled on a [`ReferencePlane`]; `values[b * resolution + a]` is the node
/// at column offset `a` and row offset `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerMap {
    pub plane: ReferencePlane,
    pub center: Point3,
    pub values: Vec<f64>,
}

impl PowerMap {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn center_value(&self) -> f64 {
        let mid = self.plane.resolution / 2;
        self.values[mid * self.plane.resolution + mid]
    }

    /// Grid offsets `(du, dv)` of the node with maximum power.
    pub fn argmax_offset(&self) -> (f64, f64) {
        let n = self.plane.resolution;
        let (best, _) =
            self.values.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
            );
        self.plane.offset(best % n, best / n)
    }

    /// Number of cell-width annuli needed to cover every node.
    fn annulus_count(&self) -> usize {
        let mid = (self.plane.resolution / 2) as f64;
        (mid * std::f64::consts::SQRT_2).ceil() as usize
    }

    pub fn max_radius(&self) -> f64 {
        self.annulus_count() as f64 * self.plane.cell()
    }

    /// Power accumulated within radius `k * cell` for `k = 0..=annulus_count`.
    pub fn cumulative_by_annulus(&self) -> Vec<f64> {
        let n = self.plane.resolution;
        let mid = (n / 2) as i64;
        let count = self.annulus_count();
        let mut per = vec![0.0; count + 1];
        for b in 0..n {
            for a in 0..n {
                let (da, db) = (a as i64 - mid, b as i64 - mid);
                let r = ((da * da + db * db) as f64).sqrt();
                // node belongs to the first annulus whose radius covers it
                let k = (r - 1e-9).ceil().max(0.0) as usize;
                per[k.min(count)] += self.values[b * n + a];
            }
        }
        let mut acc = 0.0;
        per.iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    }

    /// Smallest grid-quantized radius whose disk holds at least `eta` of the map power.
    pub fn radius_containing(&self, eta: f64) -> Result<f64> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::domain(format!("power fraction {eta} outside (0, 1]")));
        }
        let cum = self.cumulative_by_annulus();
        let total = *cum.last().expect("at least one annulus");
        let k = cum.iter().position(|&c| c >= eta * total).unwrap_or(cum.len() - 1);
        Ok(k as f64 * self.plane.cell())
    }

    /// Fraction of the total power inside radius `r`.
    pub fn fraction_within(&self, r: f64) -> f64 {
        let cum = self.cumulative_by_annulus();
        let k = ((r / self.plane.cell()) + 1e-9).floor() as usize;
        cum[k.min(cum.len() - 1)] / cum[cum.len() - 1]
    }
}

/// Received power (unit signal variance, no noise) at every node of the reference
/// plane through `dfp`.
pub fn power_density_map(
    w: &BeamfocusingMatrix,
    dfp: Point3,
    plane: &ReferencePlane,
    aperture: &ApertureConfig,
    model: &ChannelModel,
) -> Result<PowerMap> {
    if w.rows != aperture.rows || w.cols != aperture.cols {
        return Err(Error::Dimension {
            expected: aperture.num_elements(),
            actual: w.len(),
        });
    }
    power_density_map_weights(&w.weights(), dfp, plane, aperture, model)
}

pub fn power_density_map_weights(
    weights: &[Complex64],
    dfp: Point3,
    plane: &ReferencePlane,
    aperture: &ApertureConfig,
    model: &ChannelModel,
) -> Result<PowerMap> {
    plane.validate()?;
    let (u, v) = aperture.normal.in_plane();
    let n = plane.resolution;
    let mut values = Vec::with_capacity(n * n);
    for b in 0..n {
        for a in 0..n {
            let (du, dv) = plane.offset(a, b);
            let h = model.at(dfp + u * du + v * dv)?;
            values.push(array_sum(weights, &h.entries).norm_sqr());
        }
    }
    Ok(PowerMap {
        plane: *plane,
        center: dfp,
        values,
    })
}

/// Radius on the reference plane that holds fraction `eta` of the plane's power.
pub fn beamfocusing_radius(
    w: &BeamfocusingMatrix,
    dfp: Point3,
    eta: f64,
    plane: &ReferencePlane,
    aperture: &ApertureConfig,
    model: &ChannelModel,
) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain(format!("power fraction {eta} outside (0, 1]")));
    }
    power_density_map(w, dfp, plane, aperture, model)?.radius_containing(eta)
}

/// `|a1^H a2| / (|a1| |a2|)` for two response vectors.
pub fn normalized_correlation(a1: &[Complex64], a2: &[Complex64]) -> Result<f64> {
    let n1: f64 = a1.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let n2: f64 = a2.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::Degenerate("zero-norm array response".into()));
    }
    let dot: Complex64 = a1.iter().zip(a2).map(|(x, y)| x.conj() * y).sum();
    Ok((dot.norm() / (n1 * n2)).min(1.0))
}

/// Norm-normalized correlation between the array responses `vec(conj(w) . h(r))`
/// at two points.
pub fn response_correlation(r1: Point3, r2: Point3, w: &BeamfocusingMatrix, model: &ChannelModel) -> Result<f64> {
    let weights = w.weights();
    let response = |r: Point3| -> Result<Vec<Complex64>> {
        let h = model.at(r)?;
        if h.entries.len() != weights.len() {
            return Err(Error::Dimension {
                expected: h.entries.len(),
                actual: weights.len(),
            });
        }
        Ok(weights.iter().zip(&h.entries).map(|(w, h)| w.conj() * h).collect())
    };
    if r1 == r2 {
        let a = response(r1)?;
        normalized_correlation(&a, &a)?;
        return Ok(1.0);
    }
    normalized_correlation(&response(r1)?, &response(r2)?)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::geometry::{Axis, ChannelConfig, Provenance, RoomConfig, Scene};

    fn channel(entries: Vec<Complex64>, rows: usize, cols: usize) -> ChannelMatrix {
        ChannelMatrix {
            rows,
            cols,
            entries,
            dfp: Point3::default(),
            provenance: Provenance { aperture: 0, seed: 0 },
        }
    }

    fn desk_scene(modules: usize, sub: usize) -> Scene {
        Scene {
            aperture: ApertureConfig::tiled(modules, modules, sub, sub, Point3::new(1.0, 0.0, 1.5), 28e9, 3),
            room: RoomConfig {
                dimensions_m: [4.0, 4.0, 3.0],
                reflection_coefficient: 0.1,
                reflection_phase_seed: 5,
                surfaces: crate::geometry::Surface::ALL.to_vec(),
            },
            channel: ChannelConfig {
                attenuation: 1.0,
                path_loss_exponent: 2.7,
                hardware_phase_mismatch_std_rad: 0.0,
                mismatch_seed: 0,
            },
        }
    }

    #[test]
    fn quantizer_levels() {
        assert_eq!(quantize_phase(0.6, 2), 0);
        assert_eq!(quantize_phase(PI / 2.0, 2), 1);
        assert_eq!(quantize_phase(-0.1, 2), 0);
        assert_eq!(quantize_phase(TAU - 0.1, 3), 0);
        // tie between 0 and pi/2 goes to 0
        assert_eq!(quantize_phase(PI / 4.0, 2), 0);
        for k in 0..8 {
            assert_eq!(quantize_phase(level_phase(k, 3), 3), k);
        }
    }

    #[test]
    fn single_term_power() {
        let w = BeamfocusingMatrix::uniform(1, 1, 3, 0).unwrap();
        let h = channel(vec![Complex64::new(0.5, 0.0)], 1, 1);
        assert!((power(&w, &h).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn aligned_pair_power() {
        let (a, b) = (0.3, 0.8);
        let phi = level_phase(3, 3);
        let h = channel(vec![Complex64::from_polar(a, phi), Complex64::from_polar(b, phi)], 1, 2);
        let w = BeamfocusingMatrix::uniform(1, 2, 3, 3).unwrap();
        let p = received_power(&w, &h, 2.0, 0.0).unwrap().power;
        let expected = ((a + b) / 2f64.sqrt()).powi(2) * 2.0;
        assert!((p - expected).abs() < 1e-14);
    }

    #[test]
    fn noise_floor_added() {
        let w = BeamfocusingMatrix::uniform(1, 1, 1, 0).unwrap();
        let h = channel(vec![Complex64::new(0.0, 0.0)], 1, 1);
        let m = received_power(&w, &h, 1.0, 0.3).unwrap();
        assert_eq!(m.power, 0.3);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let w = BeamfocusingMatrix::uniform(1, 2, 1, 0).unwrap();
        let h = channel(vec![Complex64::new(1.0, 0.0)], 1, 1);
        assert!(matches!(received_power(&w, &h, 1.0, 0.0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn oracle_phase_matching() {
        let h = channel(vec![Complex64::from_polar(1.0, 0.6)], 1, 1);
        assert_eq!(csi_oracle(&h, 2).indices, vec![0]);
        // fine quantization reproduces the continuous phases
        let h = channel(
            vec![Complex64::from_polar(1.0, 0.1), Complex64::from_polar(2.0, 2.0)],
            1,
            2,
        );
        let w = csi_oracle(&h, 16);
        for (phi, target) in w.phases().iter().zip([0.1, 2.0]) {
            assert!((phi - target).abs() < PI / 65536.0 + 1e-12);
        }
        let p = power(&w, &h).unwrap();
        assert!((p - aligned_power(&h.entries)).abs() / p < 1e-8);
    }

    #[test]
    fn assemble_quadrants() {
        let aperture = ApertureConfig::tiled(2, 2, 2, 2, Point3::default(), 28e9, 2);
        let subs: Vec<_> = (0..4)
            .map(|m| BeamfocusingSubmatrix {
                index: m,
                matrix: BeamfocusingMatrix::uniform(2, 2, 2, m as u32).unwrap(),
            })
            .collect();
        let w = assemble_matrix(&aperture, &subs).unwrap();
        #[rustfmt::skip]
        let expected = vec![
            0, 0, 1, 1,
            0, 0, 1, 1,
            2, 2, 3, 3,
            2, 2, 3, 3,
        ];
        assert_eq!(w.indices, expected);
        assert_eq!(disassemble_matrix(&aperture, &w).unwrap(), subs);
    }

    #[test]
    fn assemble_single_module_passthrough() {
        let aperture = ApertureConfig::tiled(1, 1, 2, 3, Point3::default(), 28e9, 3);
        let m = BeamfocusingMatrix::new(2, 3, 3, vec![0, 1, 2, 3, 4, 5]).unwrap();
        let w = assemble_matrix(
            &aperture,
            &[BeamfocusingSubmatrix {
                index: 0,
                matrix: m.clone(),
            }],
        )
        .unwrap();
        assert_eq!(w, m);
    }

    #[test]
    fn assemble_rejects_duplicates_and_gaps() {
        let aperture = ApertureConfig::tiled(1, 2, 1, 1, Point3::default(), 28e9, 1);
        let s = |index| BeamfocusingSubmatrix {
            index,
            matrix: BeamfocusingMatrix::uniform(1, 1, 1, 0).unwrap(),
        };
        assert!(assemble_matrix(&aperture, &[s(0), s(0)]).is_err());
        assert!(assemble_matrix(&aperture, &[s(0)]).is_err());
    }

    #[test]
    fn zero_weights_give_zero_map() {
        let scene = desk_scene(1, 2);
        let model = scene.model().unwrap();
        let plane = ReferencePlane {
            half_extent_m: 0.1,
            resolution: 5,
        };
        let zero = vec![Complex64::new(0.0, 0.0); 4];
        let map =
            power_density_map_weights(&zero, Point3::new(1.0, 1.5, 1.4), &plane, &scene.aperture, &model).unwrap();
        assert!(map.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn map_center_matches_received_power() {
        let scene = desk_scene(2, 2);
        let model = scene.model().unwrap();
        let dfp = Point3::new(1.0, 1.5, 1.4);
        let w = csi_oracle(&model.at(dfp).unwrap(), 3);
        let plane = ReferencePlane {
            half_extent_m: 0.2,
            resolution: 7,
        };
        let map = power_density_map(&w, dfp, &plane, &scene.aperture, &model).unwrap();
        let p = power(&w, &model.at(dfp).unwrap()).unwrap();
        assert_eq!(map.center_value(), p);
    }

    #[test]
    fn radius_full_fraction_and_monotone() {
        let scene = desk_scene(2, 2);
        let model = scene.model().unwrap();
        let dfp = Point3::new(1.0, 1.5, 1.4);
        let w = csi_oracle(&model.at(dfp).unwrap(), 3);
        let plane = ReferencePlane {
            half_extent_m: 0.3,
            resolution: 11,
        };
        let map = power_density_map(&w, dfp, &plane, &scene.aperture, &model).unwrap();
        assert_eq!(map.radius_containing(1.0).unwrap(), map.max_radius());
        let mut last = 0.0;
        for k in 1..=20 {
            let r = map.radius_containing(k as f64 / 20.0).unwrap();
            assert!(r >= last);
            last = r;
        }
        assert!(map.radius_containing(0.0).is_err());
        assert!(map.radius_containing(1.5).is_err());
    }

    #[test]
    fn identical_points_correlate_fully() {
        let scene = desk_scene(2, 2);
        let model = scene.model().unwrap();
        let w = BeamfocusingMatrix::new(4, 4, 3, (0..16).map(|k| k % 8).collect()).unwrap();
        let p = Point3::new(1.0, 1.5, 1.4);
        assert_eq!(response_correlation(p, p, &w, &model).unwrap(), 1.0);
    }

    #[test]
    fn orthogonal_responses() {
        let a1 = [Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)];
        let a2 = [Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)];
        assert_eq!(normalized_correlation(&a1, &a2).unwrap(), 0.0);
        assert!(normalized_correlation(&a1, &[Complex64::default(); 2]).is_err());
    }

    #[test]
    fn plane_validation() {
        assert!(ReferencePlane {
            half_extent_m: 0.5,
            resolution: 4
        }
        .validate()
        .is_err());
        assert!(ReferencePlane {
            half_extent_m: 0.0,
            resolution: 5
        }
        .validate()
        .is_err());
        assert!(ReferencePlane::default().validate().is_ok());
        let _ = Axis::Y;
    }
}

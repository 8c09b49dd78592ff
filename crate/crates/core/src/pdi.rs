//! Phase-distribution images: circular statistics, rotation and the
//! rotation-maximized circular correlation used to rank teacher subarrays.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::beamfocus::BeamfocusingMatrix;
use crate::error::{Error, Result};

const DEGENERATE_RESULTANT: f64 = 1e-9;
const DEGENERATE_ENERGY: f64 = 1e-12;
const RIGHT_ANGLE_TOL: f64 = 1e-12;

/// Grid of phases in `[0, 2pi)`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseImage {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl PhaseImage {
    /// Wraps every value into `[0, 2pi)`.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("phase image holds non-finite value {v}")));
        }
        Ok(PhaseImage {
            rows,
            cols,
            values: values.into_iter().map(wrap).collect(),
        })
    }

    pub fn from_matrix(m: &BeamfocusingMatrix) -> Self {
        PhaseImage {
            rows: m.rows,
            cols: m.cols,
            values: m.phases(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Adds a global phase offset.
    pub fn offset(&self, phi: f64) -> PhaseImage {
        PhaseImage {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| wrap(v + phi)).collect(),
        }
    }

    /// Comma-separated grid of radians, one image row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.cols.max(1)) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::domain(format!("line {}: {e}", n + 1)))?;
            match cols {
                None => cols = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(Error::domain(format!(
                        "line {}: expected {c} columns, got {}",
                        n + 1,
                        row.len()
                    )))
                }
                _ => {}
            }
            values.extend(row);
            rows += 1;
        }
        PhaseImage::new(rows, cols.unwrap_or(0), values)
    }

    /// Binary 8-bit greyscale PGM, level `round(256 phi / 2pi) mod 256`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend(
            self.values
                .iter()
                .map(|v| ((256.0 * v / TAU).round() as u32 % 256) as u8),
        );
        out
    }

    /// Reads a binary PGM written by [`PhaseImage::to_pgm`]; phases come back at
    /// 8-bit resolution.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::domain("truncated PGM header"));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1;
        if fields[0] != "P5" || fields[3] != "255" {
            return Err(Error::domain("expected an 8-bit binary PGM"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|e| Error::domain(format!("PGM size: {e}")));
        let (cols, rows) = (parse(&fields[1])?, parse(&fields[2])?);
        let body = bytes
            .get(pos..pos + rows * cols)
            .ok_or_else(|| Error::domain("truncated PGM body"))?;
        PhaseImage::new(rows, cols, body.iter().map(|&b| TAU * b as f64 / 256.0).collect())
    }
}

fn wrap(v: f64) -> f64 {
    let w = v.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Ordered rotation angles in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationSet(Vec<f64>);

impl RotationSet {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::config("rotation set must not be empty"));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::config("rotation angles must be finite"));
        }
        Ok(RotationSet(angles))
    }

    /// `0, step, 2 step, ...` below 360 degrees.
    pub fn step_degrees(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 360.0) {
            return Err(Error::config(format!("rotation step {step} deg outside (0, 360]")));
        }
        let count = (360.0 / step - 1e-9).floor() as usize + 1;
        Self::new((0..count).map(|k| (k as f64 * step).to_radians()).collect())
    }

    pub fn angles(&self) -> &[f64] {
        &self.0
    }
}

impl Default for RotationSet {
    /// 36 angles at a 10 degree step.
    fn default() -> Self {
        RotationSet((0..36).map(|k| (10.0 * k as f64).to_radians()).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircularMean {
    pub angle: f64,
    /// Unit phasors summed to (nearly) zero; `angle` is then 0.
    pub degenerate: bool,
}

pub fn circular_mean(img: &PhaseImage) -> Result<CircularMean> {
    circular_mean_of(&img.values)
}

fn circular_mean_of(values: &[f64]) -> Result<CircularMean> {
    if values.is_empty() {
        return Err(Error::Degenerate("circular mean of an empty image".into()));
    }
    let s: Complex64 = values.iter().map(|&v| Complex64::from_polar(1.0, v)).sum();
    if s.norm() <= DEGENERATE_RESULTANT * values.len() as f64 {
        return Ok(CircularMean {
            angle: 0.0,
            degenerate: true,
        });
    }
    Ok(CircularMean {
        angle: s.arg(),
        degenerate: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlation {
    pub value: f64,
    /// One image has (nearly) no sine-residual energy; `value` is then 0.
    pub degenerate: bool,
}

/// Circular Pearson coefficient of two equally sized images.
pub fn circular_pearson(a: &PhaseImage, b: &PhaseImage) -> Result<Correlation> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::Dimension {
            expected: a.rows * a.cols,
            actual: b.rows * b.cols,
        });
    }
    let ma = circular_mean(a)?.angle;
    let mb = circular_mean(b)?.angle;
    let (mut num, mut ea, mut eb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values.iter().zip(&b.values) {
        let sa = (x - ma).sin();
        let sb = (y - mb).sin();
        num += sa * sb;
        ea += sa * sa;
        eb += sb * sb;
    }
    let floor = DEGENERATE_ENERGY * a.values.len() as f64;
    if ea <= floor || eb <= floor {
        return Ok(Correlation {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Correlation {
        value: (num / (ea * eb).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Rotates about the image centre. Multiples of 90 degrees permute pixels exactly;
/// other angles interpolate the unit-phasor field bilinearly, clamping samples that
/// fall outside the grid to the nearest edge pixel.
pub fn rotate(img: &PhaseImage, theta: f64) -> Result<PhaseImage> {
    if !theta.is_finite() {
        return Err(Error::domain("rotation angle must be finite"));
    }
    let quarter = (theta / FRAC_PI_2).round();
    if (theta - quarter * FRAC_PI_2).abs() <= RIGHT_ANGLE_TOL {
        return Ok(rotate_quarters(img, quarter.rem_euclid(4.0) as u32));
    }
    if !img.is_square() {
        return Err(Error::domain(format!(
            "cannot rotate a {}x{} image by a non-right angle",
            img.rows, img.cols
        )));
    }
    let n = img.rows;
    if n == 0 {
        return Ok(img.clone());
    }
    let c = (n - 1) as f64 / 2.0;
    let (sin, cos) = theta.sin_cos();
    let last = (n - 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (j as f64 - c, i as f64 - c);
            let xs = (cos * x + sin * y + c).clamp(0.0, last);
            let ys = (-sin * x + cos * y + c).clamp(0.0, last);
            let (j0, i0) = (xs.floor() as usize, ys.floor() as usize);
            let (j1, i1) = ((j0 + 1).min(n - 1), (i0 + 1).min(n - 1));
            let (fx, fy) = (xs - j0 as f64, ys - i0 as f64);
            let p = |r: usize, k: usize| Complex64::from_polar(1.0, img.get(r, k));
            let z = p(i0, j0) * ((1.0 - fx) * (1.0 - fy))
                + p(i0, j1) * (fx * (1.0 - fy))
                + p(i1, j0) * ((1.0 - fx) * fy)
                + p(i1, j1) * (fx * fy);
            out.push(wrap(z.im.atan2(z.re)));
        }
    }
    Ok(PhaseImage {
        rows: n,
        cols: n,
        values: out,
    })
}

/// `quarters` successive 90 degree rotations; each maps `out[i][j] = in[rows-1-j][i]`.
fn rotate_quarters(img: &PhaseImage, quarters: u32) -> PhaseImage {
    let mut cur = img.clone();
    for _ in 0..quarters {
        let (r, c) = (cur.rows, cur.cols);
        let mut values = Vec::with_capacity(r * c);
        for i in 0..c {
            for j in 0..r {
                values.push(cur.get(r - 1 - j, i));
            }
        }
        cur = PhaseImage {
            rows: c,
            cols: r,
            values,
        };
    }
    cur
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ecc {
    pub value: f64,
    /// First angle attaining the maximum.
    pub angle: f64,
    pub degenerate: bool,
}

/// Maximum circular Pearson coefficient between `a` and the rotations of `b`.
pub fn ecc(a: &PhaseImage, b: &PhaseImage, set: &RotationSet) -> Result<Ecc> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::Dimension {
            expected: a.rows * a.cols,
            actual: b.rows * b.cols,
        });
    }
    let mut best: Option<Ecc> = None;
    for &theta in set.angles() {
        let c = circular_pearson(a, &rotate(b, theta)?)?;
        if best.is_none_or(|e| c.value > e.value) {
            best = Some(Ecc {
                value: c.value,
                angle: theta,
                degenerate: c.degenerate,
            });
        }
    }
    Ok(best.expect("rotation sets are nonempty"))
}

/// Circular Pearson coefficient of `reference` against every image rotated by `theta`.
pub fn similarity_map(reference: &PhaseImage, images: &[PhaseImage], theta: f64) -> Result<Vec<f64>> {
    images
        .iter()
        .map(|img| Ok(circular_pearson(reference, &rotate(img, theta)?)?.value))
        .collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn img(rows: usize, cols: usize, v: &[f64]) -> PhaseImage {
        PhaseImage::new(rows, cols, v.to_vec()).unwrap()
    }

    fn ramp(n: usize) -> PhaseImage {
        let v: Vec<f64> = (0..n * n)
            .map(|k| 0.37 * (k / n) as f64 + 0.11 * (k % n) as f64 * (k % n) as f64)
            .collect();
        img(n, n, &v)
    }

    #[test]
    fn constructor_wraps_into_range() {
        let a = img(1, 3, &[-0.5, TAU, 7.0]);
        assert!((a.get(0, 0) - (TAU - 0.5)).abs() < 1e-15);
        assert_eq!(a.get(0, 1), 0.0);
        assert!((a.get(0, 2) - (7.0 - TAU)).abs() < 1e-15);
    }

    #[test]
    fn matrix_phases_are_lossless() {
        let m = BeamfocusingMatrix::new(1, 4, 2, vec![0, 1, 2, 3]).unwrap();
        assert_eq!(PhaseImage::from_matrix(&m).values(), &[0.0, PI / 2.0, PI, 1.5 * PI]);
    }

    #[test]
    fn mean_of_constant_and_antipodal_images() {
        let c = circular_mean(&img(2, 2, &[1.2; 4])).unwrap();
        assert!((c.angle - 1.2).abs() < 1e-12 && !c.degenerate);
        let d = circular_mean(&img(1, 2, &[0.0, PI])).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.angle, 0.0);
        assert!(circular_mean(&img(0, 0, &[])).is_err());
    }

    #[test]
    fn constant_image_correlates_as_degenerate_zero() {
        let c = circular_pearson(&img(2, 2, &[0.4; 4]), &ramp(2)).unwrap();
        assert_eq!(c.value, 0.0);
        assert!(c.degenerate);
    }

    #[test]
    fn pearson_rejects_size_mismatch() {
        assert!(circular_pearson(&ramp(2), &ramp(3)).is_err());
    }

    #[test]
    fn self_and_offset_correlation() {
        let a = ramp(4);
        assert!((circular_pearson(&a, &a).unwrap().value - 1.0).abs() < 1e-12);
        assert!((circular_pearson(&a, &a.offset(2.1)).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn right_angle_rotations_are_exact_permutations() {
        let a = img(2, 2, &[0.0, 1.0, 2.0, 3.0]);
        let r = rotate(&a, FRAC_PI_2).unwrap();
        assert_eq!(r.values(), &[2.0, 0.0, 3.0, 1.0]);
        assert_eq!(rotate(&a, 0.0).unwrap(), a);
        let b = ramp(5);
        let back = rotate(&rotate(&b, FRAC_PI_2).unwrap(), 1.5 * PI).unwrap();
        assert_eq!(back, b);
        assert_eq!(rotate(&b, TAU).unwrap(), b);
    }

    #[test]
    fn non_square_rotation() {
        let a = img(1, 2, &[0.5, 1.5]);
        let r = rotate(&a, FRAC_PI_2).unwrap();
        assert_eq!((r.rows(), r.cols()), (2, 1));
        assert!(rotate(&a, 0.3).is_err());
    }

    #[test]
    fn interpolated_rotation_of_constant_is_constant() {
        let a = img(3, 3, &[0.9; 9]);
        let r = rotate(&a, 0.4).unwrap();
        assert!(r.values().iter().all(|v| (v - 0.9).abs() < 1e-12));
    }

    #[test]
    fn ecc_finds_right_angle_rotation() {
        let a = ramp(4);
        let b = rotate(&a, FRAC_PI_2).unwrap();
        let e = ecc(&a, &b, &RotationSet::default()).unwrap();
        assert!((e.value - 1.0).abs() < 1e-12);
        assert!((e.angle - 1.5 * PI).abs() < 1e-9);
        let self_e = ecc(&a, &a, &RotationSet::default()).unwrap();
        assert!((self_e.value - 1.0).abs() < 1e-12);
        assert_eq!(self_e.angle, 0.0);
    }

    #[test]
    fn rotation_sets() {
        assert_eq!(RotationSet::default().angles().len(), 36);
        assert_eq!(RotationSet::step_degrees(10.0).unwrap(), RotationSet::default());
        assert_eq!(RotationSet::step_degrees(90.0).unwrap().angles().len(), 4);
        assert!(RotationSet::step_degrees(0.0).is_err());
        assert!(RotationSet::new(vec![]).is_err());
    }

    #[test]
    fn similarity_map_reference_cell_is_one() {
        let a = ramp(3);
        let map = similarity_map(&a, &[ramp(3).offset(1.0), a.clone()], 0.0).unwrap();
        assert!((map[1] - 1.0).abs() < 1e-12);
        assert!((map[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let a = ramp(3);
        assert_eq!(PhaseImage::from_csv(&a.to_csv()).unwrap(), a);
        assert!(PhaseImage::from_csv("1,2\n3\n").is_err());
    }

    #[test]
    fn pgm_levels() {
        let a = img(1, 3, &[0.0, PI, TAU - 1e-6]);
        let bytes = a.to_pgm();
        assert!(bytes.starts_with(b"P5\n3 1\n255\n"));
        assert_eq!(&bytes[bytes.len() - 3..], &[0, 128, 0]);
        let back = PhaseImage::from_pgm(&bytes).unwrap();
        assert_eq!(back.values(), &[0.0, PI, 0.0]);
        assert!(PhaseImage::from_pgm(&bytes[..bytes.len() - 1]).is_err());
    }
}

//! Aperture geometry, first-order image-source multipath and the near-field channel
//! between every element and a focal point.
//!
//! Element and receiver antenna gains are taken as 1, so a channel entry is the
//! propagation term alone.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(self, other: Point3) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn component(self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    pub fn with_component(mut self, axis: Axis, value: f64) -> Self {
        match axis {
            Axis::X => self.x = value,
            Axis::Y => self.y = value,
            Axis::Z => self.z = value,
        }
        self
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl fmt::Display for Point3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Point3 {
        match self {
            Axis::X => Point3::new(1.0, 0.0, 0.0),
            Axis::Y => Point3::new(0.0, 1.0, 0.0),
            Axis::Z => Point3::new(0.0, 0.0, 1.0),
        }
    }

    /// In-plane unit vectors `(column direction, row direction)` for a plane with
    /// this normal.
    pub fn in_plane(self) -> (Point3, Point3) {
        match self {
            Axis::X => (Axis::Y.unit(), Axis::Z.unit()),
            Axis::Y => (Axis::X.unit(), Axis::Z.unit()),
            Axis::Z => (Axis::X.unit(), Axis::Y.unit()),
        }
    }
}

/// Planar array layout and its subarray partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApertureConfig {
    pub rows: usize,
    pub cols: usize,
    /// Element pitch; `None` means half a wavelength.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_m: Option<f64>,
    /// Position of element (1, 1).
    pub corner_m: Point3,
    #[serde(default = "default_normal")]
    pub normal: Axis,
    pub frequency_hz: f64,
    pub phase_bits: u32,
    pub subarray_rows: usize,
    pub subarray_cols: usize,
}

fn default_normal() -> Axis {
    Axis::Y
}

impl ApertureConfig {
    /// Builds a `module_rows x module_cols` grid of `sub_rows x sub_cols` subarrays.
    pub fn tiled(
        module_rows: usize,
        module_cols: usize,
        sub_rows: usize,
        sub_cols: usize,
        corner_m: Point3,
        frequency_hz: f64,
        phase_bits: u32,
    ) -> Self {
        ApertureConfig {
            rows: module_rows * sub_rows,
            cols: module_cols * sub_cols,
            spacing_m: None,
            corner_m,
            normal: Axis::Y,
            frequency_hz,
            phase_bits,
            subarray_rows: module_rows,
            subarray_cols: module_cols,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::config("aperture needs at least one row and column"));
        }
        if !(self.frequency_hz > 0.0) || !self.frequency_hz.is_finite() {
            return Err(Error::config("frequency must be positive"));
        }
        if self.phase_bits == 0 || self.phase_bits > 16 {
            return Err(Error::config("phase_bits must be in 1..=16"));
        }
        if !(self.spacing() > 0.0) {
            return Err(Error::config("element spacing must be positive"));
        }
        if !self.corner_m.is_finite() {
            return Err(Error::config("aperture corner must be finite"));
        }
        if self.subarray_rows == 0
            || self.subarray_cols == 0
            || !self.rows.is_multiple_of(self.subarray_rows)
            || !self.cols.is_multiple_of(self.subarray_cols)
        {
            return Err(Error::config(format!(
                "{}x{} elements cannot be split into {}x{} subarrays",
                self.rows, self.cols, self.subarray_rows, self.subarray_cols
            )));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing_m.unwrap_or_else(|| self.wavelength() / 2.0)
    }

    pub fn num_elements(&self) -> usize {
        self.rows * self.cols
    }

    pub fn num_subarrays(&self) -> usize {
        self.subarray_rows * self.subarray_cols
    }

    /// Elements per subarray along rows.
    pub fn sub_rows(&self) -> usize {
        self.rows / self.subarray_rows
    }

    /// Elements per subarray along columns.
    pub fn sub_cols(&self) -> usize {
        self.cols / self.subarray_cols
    }

    pub fn sub_elements(&self) -> usize {
        self.sub_rows() * self.sub_cols()
    }

    pub fn levels(&self) -> u32 {
        1 << self.phase_bits
    }

    pub fn center(&self) -> Point3 {
        let (u, v) = self.normal.in_plane();
        let s = self.spacing();
        self.corner_m + u * ((self.cols - 1) as f64 * s / 2.0) + v * ((self.rows - 1) as f64 * s / 2.0)
    }

    /// Aperture diagonal measured between outermost element centers.
    pub fn diagonal(&self) -> f64 {
        let s = self.spacing();
        let w = (self.cols - 1) as f64 * s;
        let h = (self.rows - 1) as f64 * s;
        (w * w + h * h).sqrt()
    }

    /// Stable fingerprint used for channel provenance.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.usize(self.rows);
        h.usize(self.cols);
        h.f64(self.spacing());
        h.f64(self.corner_m.x);
        h.f64(self.corner_m.y);
        h.f64(self.corner_m.z);
        h.usize(self.normal as usize);
        h.f64(self.frequency_hz);
        h.usize(self.phase_bits as usize);
        h.usize(self.subarray_rows);
        h.usize(self.subarray_cols);
        h.finish()
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
    fn bytes(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
    fn usize(&mut self, v: usize) {
        self.bytes(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_bits().to_le_bytes());
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

/// One of the six walls of an axis-aligned room `[0, Lx] x [0, Ly] x [0, Lz]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    XMin,
    XMax,
    YMin,
    YMax,
    Floor,
    Ceiling,
}

impl Surface {
    pub const ALL: [Surface; 6] = [
        Surface::XMin,
        Surface::XMax,
        Surface::YMin,
        Surface::YMax,
        Surface::Floor,
        Surface::Ceiling,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    fn axis(self) -> Axis {
        match self {
            Surface::XMin | Surface::XMax => Axis::X,
            Surface::YMin | Surface::YMax => Axis::Y,
            Surface::Floor | Surface::Ceiling => Axis::Z,
        }
    }

    fn offset(self, dims: [f64; 3]) -> f64 {
        match self {
            Surface::XMin | Surface::YMin | Surface::Floor => 0.0,
            Surface::XMax => dims[0],
            Surface::YMax => dims[1],
            Surface::Ceiling => dims[2],
        }
    }

    /// Mirror image of `p` across this wall.
    pub fn mirror(self, p: Point3, dims: [f64; 3]) -> Point3 {
        let axis = self.axis();
        let plane = self.offset(dims);
        p.with_component(axis, 2.0 * plane - p.component(axis))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomConfig {
    pub dimensions_m: [f64; 3],
    pub reflection_coefficient: f64,
    pub reflection_phase_seed: u64,
    #[serde(default = "all_surfaces")]
    pub surfaces: Vec<Surface>,
}

fn all_surfaces() -> Vec<Surface> {
    Surface::ALL.to_vec()
}

impl RoomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions_m.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::config(format!(
                "room dimensions must be positive, got {:?}",
                self.dimensions_m
            )));
        }
        if !(0.0..=1.0).contains(&self.reflection_coefficient) {
            return Err(Error::config("reflection coefficient must lie in [0, 1]"));
        }
        Ok(())
    }

    /// One reflection phase per wall, drawn from `U(0, 2pi)` in [`Surface::ALL`] order.
    pub fn reflection_phases(&self) -> [f64; 6] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.reflection_phase_seed);
        let mut out = [0.0; 6];
        for v in &mut out {
            *v = rng.random_range(0.0..TAU);
        }
        out
    }

    pub fn num_reflections(&self) -> usize {
        self.surfaces.len()
    }

    pub fn contains(&self, p: Point3) -> bool {
        let [lx, ly, lz] = self.dimensions_m;
        (0.0..=lx).contains(&p.x) && (0.0..=ly).contains(&p.y) && (0.0..=lz).contains(&p.z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default = "one")]
    pub attenuation: f64,
    pub path_loss_exponent: f64,
    /// Standard deviation of the per-element line-of-sight phase mismatch.
    #[serde(default)]
    pub hardware_phase_mismatch_std_rad: f64,
    #[serde(default)]
    pub mismatch_seed: u64,
}

fn one() -> f64 {
    1.0
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.attenuation > 0.0) {
            return Err(Error::config("attenuation coefficient must be positive"));
        }
        if !(self.path_loss_exponent > 0.0) {
            return Err(Error::config("path-loss exponent must be positive"));
        }
        if !(self.hardware_phase_mismatch_std_rad >= 0.0) {
            return Err(Error::config("phase mismatch std must be nonnegative"));
        }
        Ok(())
    }
}

/// A reflected path from an element to the focal point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReflectedPath {
    pub surface: Surface,
    pub length: f64,
    pub attenuation: f64,
    pub phase_shift: f64,
}

/// Where the channel came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub aperture: u64,
    pub seed: u64,
}

/// Complex gains between every element and one focal point, row-major
/// `rows x cols`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Complex64>,
    pub dfp: Point3,
    pub provenance: Provenance,
}

impl ChannelMatrix {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.cols + j]
    }

    /// Entries belonging to subarray `m` (0-based, row-major over the subarray
    /// grid), themselves row-major.
    pub fn subarray(&self, aperture: &ApertureConfig, m: usize) -> Vec<Complex64> {
        let (sr, sc) = (aperture.sub_rows(), aperture.sub_cols());
        let (br, bc) = (m / aperture.subarray_cols, m % aperture.subarray_cols);
        let mut out = Vec::with_capacity(sr * sc);
        for i in 0..sr {
            for j in 0..sc {
                out.push(self.get(br * sr + i, bc * sc + j));
            }
        }
        out
    }
}

/// Element positions, row-major: element `(i, j)` sits at
/// `corner + j * spacing * u + i * spacing * v`.
pub fn element_positions(aperture: &ApertureConfig) -> Vec<Point3> {
    let (u, v) = aperture.normal.in_plane();
    let s = aperture.spacing();
    let mut out = Vec::with_capacity(aperture.num_elements());
    for i in 0..aperture.rows {
        for j in 0..aperture.cols {
            out.push(aperture.corner_m + u * (j as f64 * s) + v * (i as f64 * s));
        }
    }
    out
}

/// First-order image-source paths from `element` to `dfp`, one per enabled wall.
pub fn image_source_paths(element: Point3, dfp: Point3, room: &RoomConfig) -> Result<Vec<ReflectedPath>> {
    room.validate()?;
    let phases = room.reflection_phases();
    Ok(room
        .surfaces
        .iter()
        .map(|&surface| ReflectedPath {
            surface,
            length: element.distance(surface.mirror(dfp, room.dimensions_m)),
            attenuation: room.reflection_coefficient,
            phase_shift: phases[surface.index()],
        })
        .collect())
}

/// Aperture, room and propagation constants: everything needed to evaluate a
/// channel at any point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub aperture: ApertureConfig,
    pub room: RoomConfig,
    pub channel: ChannelConfig,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.aperture.validate()?;
        self.room.validate()?;
        self.channel.validate()
    }

    pub fn channel_at(&self, dfp: Point3) -> Result<ChannelMatrix> {
        channel_matrix(&self.aperture, dfp, &self.channel, &self.room)
    }

    pub fn model(&self) -> Result<ChannelModel> {
        ChannelModel::new(&self.aperture, &self.channel, &self.room)
    }
}

/// Precomputed element positions and per-element mismatch phases for repeated channel
/// evaluation at many points.
#[derive(Clone, Debug)]
pub struct ChannelModel {
    rows: usize,
    cols: usize,
    positions: Vec<Point3>,
    mismatch: Vec<f64>,
    wavenumber: f64,
    half_alpha: f64,
    gamma: f64,
    beta: f64,
    walls: Vec<(Surface, f64)>,
    dims: [f64; 3],
    provenance: Provenance,
}

impl ChannelModel {
    pub fn new(aperture: &ApertureConfig, chan: &ChannelConfig, room: &RoomConfig) -> Result<Self> {
        aperture.validate()?;
        room.validate()?;
        chan.validate()?;
        let mismatch: Vec<f64> = if chan.hardware_phase_mismatch_std_rad > 0.0 {
            let normal =
                Normal::new(0.0, chan.hardware_phase_mismatch_std_rad).map_err(|e| Error::config(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(chan.mismatch_seed);
            (0..aperture.num_elements()).map(|_| normal.sample(&mut rng)).collect()
        } else {
            vec![0.0; aperture.num_elements()]
        };
        let phases = room.reflection_phases();
        Ok(ChannelModel {
            rows: aperture.rows,
            cols: aperture.cols,
            positions: element_positions(aperture),
            mismatch,
            wavenumber: aperture.wavenumber(),
            half_alpha: chan.path_loss_exponent / 2.0,
            gamma: chan.attenuation,
            beta: room.reflection_coefficient,
            walls: room.surfaces.iter().map(|s| (*s, phases[s.index()])).collect(),
            dims: room.dimensions_m,
            provenance: Provenance {
                aperture: aperture.fingerprint(),
                seed: room.reflection_phase_seed,
            },
        })
    }

    /// Channel from every element to `dfp`.
    pub fn at(&self, dfp: Point3) -> Result<ChannelMatrix> {
        if !dfp.is_finite() {
            return Err(Error::domain("focal point must be finite"));
        }
        let images: Vec<(Point3, f64)> = self
            .walls
            .iter()
            .map(|(s, phase)| (s.mirror(dfp, self.dims), *phase))
            .collect();
        let k = self.wavenumber;
        let mut entries = Vec::with_capacity(self.positions.len());
        for (p, dtheta) in self.positions.iter().zip(&self.mismatch) {
            let d = p.distance(dfp);
            if d < 1e-12 {
                return Err(Error::domain(format!("focal point {dfp} coincides with an element")));
            }
            let mut h = Complex64::from_polar(self.gamma * d.powf(-self.half_alpha), -(k * d + dtheta));
            if self.beta > 0.0 {
                for (img, phase) in &images {
                    let dl = p.distance(*img);
                    h += Complex64::from_polar(self.gamma * self.beta * dl.powf(-self.half_alpha), -(k * dl + phase));
                }
            }
            entries.push(h);
        }
        Ok(ChannelMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
            dfp,
            provenance: self.provenance,
        })
    }
}

/// Line-of-sight plus first-order reflected terms at every element.
pub fn channel_matrix(
    aperture: &ApertureConfig,
    dfp: Point3,
    chan: &ChannelConfig,
    room: &RoomConfig,
) -> Result<ChannelMatrix> {
    ChannelModel::new(aperture, chan, room)?.at(dfp)
}

/// Reactive near-field bound `0.62 sqrt(D^3 / lambda)` and Fraunhofer distance
/// `2 D^2 / lambda`.
pub fn fresnel_bounds(aperture: &ApertureConfig) -> (f64, f64) {
    fresnel_bounds_for(aperture.diagonal(), aperture.wavelength())
}

pub fn fresnel_bounds_for(diagonal: f64, wavelength: f64) -> (f64, f64) {
    let lower = 0.62 * (diagonal.powi(3) / wavelength).sqrt();
    let upper = 2.0 * diagonal * diagonal / wavelength;
    (lower, upper)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Zone {
    Reactive,
    Fresnel,
    FarField,
}

/// Classifies the focal point by its distance from the aperture center.
pub fn validate_dfp(aperture: &ApertureConfig, dfp: Point3) -> (Zone, f64) {
    let distance = aperture.center().distance(dfp);
    let (lower, upper) = fresnel_bounds(aperture);
    let zone = if distance < lower {
        Zone::Reactive
    } else if distance > upper {
        Zone::FarField
    } else {
        Zone::Fresnel
    };
    (zone, distance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(corner: Point3, freq: f64) -> ApertureConfig {
        ApertureConfig {
            rows: 1,
            cols: 1,
            spacing_m: None,
            corner_m: corner,
            normal: Axis::Y,
            frequency_hz: freq,
            phase_bits: 3,
            subarray_rows: 1,
            subarray_cols: 1,
        }
    }

    fn room(beta: f64) -> RoomConfig {
        RoomConfig {
            dimensions_m: [4.0, 4.0, 3.0],
            reflection_coefficient: beta,
            reflection_phase_seed: 11,
            surfaces: all_surfaces(),
        }
    }

    fn chan() -> ChannelConfig {
        ChannelConfig {
            attenuation: 1.0,
            path_loss_exponent: 2.7,
            hardware_phase_mismatch_std_rad: 0.0,
            mismatch_seed: 0,
        }
    }

    #[test]
    fn single_element_position_is_corner() {
        let a = single(Point3::new(1.0, 0.0, 1.5), 28e9);
        assert_eq!(element_positions(&a), vec![Point3::new(1.0, 0.0, 1.5)]);
    }

    #[test]
    fn two_by_two_xz_plane() {
        let a = ApertureConfig {
            rows: 2,
            cols: 2,
            spacing_m: Some(0.005),
            corner_m: Point3::default(),
            ..single(Point3::default(), 28e9)
        };
        assert_eq!(
            element_positions(&a),
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(0.005, 0.0, 0.0),
                Point3::new(0.0, 0.0, 0.005),
                Point3::new(0.005, 0.0, 0.005),
            ]
        );
    }

    #[test]
    fn full_scale_aperture_size() {
        let a = ApertureConfig::tiled(10, 10, 6, 6, Point3::new(1.0, 0.0, 1.5), 28e9, 3);
        assert!((a.wavelength() - 0.010707).abs() < 1e-5);
        let side = (a.cols - 1) as f64 * a.spacing();
        assert!((side - 0.316).abs() < 1e-3, "{side}");
        assert!((a.diagonal() - 0.447).abs() < 1e-3);
    }

    #[test]
    fn floor_image_path() {
        let paths = image_source_paths(Point3::new(1.0, 0.0, 1.0), Point3::new(1.0, 2.0, 1.0), &room(0.1)).unwrap();
        let floor = paths.iter().find(|p| p.surface == Surface::Floor).unwrap();
        assert!((floor.length - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(paths.len(), 6);
    }

    #[test]
    fn degenerate_room_is_rejected() {
        let mut r = room(0.1);
        r.dimensions_m[2] = 0.0;
        let err = image_source_paths(Point3::default(), Point3::new(1.0, 1.0, 1.0), &r).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn unit_distance_single_term() {
        let a = single(Point3::new(1.0, 1.0, 1.0), 28e9);
        let mut r = room(0.0);
        r.surfaces.clear();
        let h = channel_matrix(&a, Point3::new(1.0, 2.0, 1.0), &chan(), &r).unwrap();
        let e = h.entries[0];
        assert!((e.norm() - 1.0).abs() < 1e-12);
        let expected = (-a.wavenumber()).rem_euclid(TAU);
        assert!((e.arg().rem_euclid(TAU) - expected).abs() < 1e-9);
    }

    #[test]
    fn coincident_focal_point_is_domain_error() {
        let a = single(Point3::new(1.0, 0.0, 1.5), 28e9);
        let err = channel_matrix(&a, Point3::new(1.0, 0.0, 1.5), &chan(), &room(0.1)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn fresnel_bounds_full_scale() {
        let (lower, upper) = fresnel_bounds_for(0.447, 0.0107);
        assert!((upper - 37.35).abs() < 0.1, "{upper}");
        assert!((lower - 1.79).abs() < 0.01, "{lower}");
        let (_, upper_long) = fresnel_bounds_for(0.447, 1e12);
        assert!(upper_long < 1e-12);
    }

    #[test]
    fn zone_classification() {
        let a = ApertureConfig::tiled(10, 10, 6, 6, Point3::new(1.0, 0.0, 1.5), 28e9, 3);
        let (lower, upper) = fresnel_bounds(&a);
        let c = a.center();
        let at = |d: f64| validate_dfp(&a, c + Point3::new(0.0, d, 0.0)).0;
        assert_eq!(at(upper + 1.0), Zone::FarField);
        assert_eq!(at((lower + upper) / 2.0), Zone::Fresnel);
        assert_eq!(at(lower / 2.0), Zone::Reactive);

        let (zone, dist) = validate_dfp(&a, Point3::new(1.0, 1.5, 1.4));
        assert!((dist - 1.53).abs() < 0.01, "{dist}");
        assert_eq!(zone, Zone::Reactive);
    }
}

//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use nearfocus_core::dnn::{LayerSpec, Network};
use nearfocus_core::geometry::{ApertureConfig, ChannelConfig, Point3, RoomConfig};
use num_complex::Complex64;
use rand::Rng;

/// Direct evaluation of the line-of-sight plus first-order image-source sum for
/// every element, straight from the textbook formula.
pub fn direct_channel(a: &ApertureConfig, dfp: Point3, chan: &ChannelConfig, room: &RoomConfig) -> Vec<Complex64> {
    let c = 299_792_458.0;
    let lambda = c / a.frequency_hz;
    let k = TAU / lambda;
    let s = a.spacing_m.unwrap_or(lambda / 2.0);
    let phases = room.reflection_phases();
    let [lx, ly, lz] = room.dimensions_m;
    let images = [
        (Point3::new(-dfp.x, dfp.y, dfp.z), phases[0]),
        (Point3::new(2.0 * lx - dfp.x, dfp.y, dfp.z), phases[1]),
        (Point3::new(dfp.x, -dfp.y, dfp.z), phases[2]),
        (Point3::new(dfp.x, 2.0 * ly - dfp.y, dfp.z), phases[3]),
        (Point3::new(dfp.x, dfp.y, -dfp.z), phases[4]),
        (Point3::new(dfp.x, dfp.y, 2.0 * lz - dfp.z), phases[5]),
    ];
    let dist = |p: Point3, q: Point3| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt();
    let gain = |d: f64| chan.attenuation * d.powf(-chan.path_loss_exponent / 2.0);
    let mut out = Vec::new();
    for i in 0..a.rows {
        for j in 0..a.cols {
            // normal +y: columns run along x, rows along z
            let p = Point3::new(a.corner_m.x + j as f64 * s, a.corner_m.y, a.corner_m.z + i as f64 * s);
            let d = dist(p, dfp);
            let mut h = Complex64::new((k * d).cos(), -(k * d).sin()) * gain(d);
            for (img, phi) in images {
                let dl = dist(p, img);
                let arg = k * dl + phi;
                h += Complex64::new(arg.cos(), -arg.sin()) * (room.reflection_coefficient * gain(dl));
            }
            out.push(h);
        }
    }
    out
}

/// Circular Pearson coefficient from its definition, 0 when either image has no
/// sine energy.
pub fn pearson_ref(a: &[f64], b: &[f64]) -> f64 {
    let mean = |v: &[f64]| {
        let (s, c) = v.iter().fold((0.0, 0.0), |(s, c), x| (s + x.sin(), c + x.cos()));
        if (s * s + c * c).sqrt() <= 1e-9 * v.len() as f64 {
            0.0
        } else {
            s.atan2(c)
        }
    };
    let (ma, mb) = (mean(a), mean(b));
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - ma).sin() * (y - mb).sin()).sum();
    let ea: f64 = a.iter().map(|x| (x - ma).sin().powi(2)).sum();
    let eb: f64 = b.iter().map(|y| (y - mb).sin().powi(2)).sum();
    if ea <= 1e-12 * a.len() as f64 || eb <= 1e-12 * a.len() as f64 {
        return 0.0;
    }
    (num / (ea * eb).sqrt()).clamp(-1.0, 1.0)
}

/// Square image rotated about its centre by inverse mapping with bilinear
/// interpolation of unit phasors and edge clamping.
pub fn rotate_ref(v: &[f64], n: usize, theta: f64) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let at = |r: usize, k: usize| v[r * n + k];
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let dx = j as f64 - c;
            let dy = i as f64 - c;
            let sx = (theta.cos() * dx + theta.sin() * dy + c).max(0.0).min(n as f64 - 1.0);
            let sy = (-theta.sin() * dx + theta.cos() * dy + c).max(0.0).min(n as f64 - 1.0);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(n - 1), (y0 + 1).min(n - 1));
            let (tx, ty) = (sx - x0 as f64, sy - y0 as f64);
            let corners = [
                (at(y0, x0), (1.0 - tx) * (1.0 - ty)),
                (at(y0, x1), tx * (1.0 - ty)),
                (at(y1, x0), (1.0 - tx) * ty),
                (at(y1, x1), tx * ty),
            ];
            let re: f64 = corners.iter().map(|(p, w)| w * p.cos()).sum();
            let im: f64 = corners.iter().map(|(p, w)| w * p.sin()).sum();
            out.push(im.atan2(re).rem_euclid(TAU));
        }
    }
    out
}

/// Exhaustive search over `angles`: maximum coefficient and first maximizing angle.
pub fn ecc_ref(a: &[f64], b: &[f64], n: usize, angles: &[f64]) -> (f64, f64) {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for &t in angles {
        let c = pearson_ref(a, &rotate_ref(b, n, t));
        if c > best.0 {
            best = (c, t);
        }
    }
    best
}

/// A random network drawing from every layer kind.
pub fn random_network<R: Rng>(rng: &mut R) -> Network {
    let input = rng.random_range(1..5);
    let mut specs = vec![LayerSpec::Normalization {
        half_range: rng.random_range(0.5..4.0),
    }];
    for _ in 0..rng.random_range(1..4) {
        specs.push(LayerSpec::FullyConnected {
            width: rng.random_range(1..7),
        });
        specs.push(if rng.random_bool(0.5) {
            LayerSpec::Relu
        } else {
            LayerSpec::Tanh
        });
    }
    specs.push(LayerSpec::FullyConnected {
        width: rng.random_range(1..4),
    });
    specs.push(LayerSpec::Tanh);
    specs.push(LayerSpec::Scale { bound: PI });
    let mut net = Network::new(input, specs, rng).unwrap();
    // nonzero biases keep pre-activations off the relu kink
    let p: Vec<f64> = (0..net.param_count()).map(|_| rng.random_range(-0.8..0.8)).collect();
    net.set_parameters(&p).unwrap();
    net
}

/// Worst relative error between analytic and central-difference gradients of
/// `sum(c . net(x))` over a batch, for parameters and inputs.
pub fn gradient_check<R: Rng>(net: &mut Network, rng: &mut R) -> f64 {
    let batch = 3;
    let out_dim = net.output_dim();
    let in_dim = net.input_dim();
    let x: Vec<f64> = (0..batch * in_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let c: Vec<f64> = (0..batch * out_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |net: &Network, x: &[f64]| -> f64 {
        let tape = net.forward_batch(x, batch).unwrap();
        tape.output().iter().zip(&c).map(|(o, c)| o * c).sum()
    };
    let tape = net.forward_batch(&x, batch).unwrap();
    let back = net.backward(&tape, &c).unwrap();
    let analytic_p = back.grads.flatten();
    let h = 1e-5;
    let base = net.parameters();
    let mut numeric_p = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] = base[k] + h;
        net.set_parameters(&p).unwrap();
        let up = loss(net, &x);
        p[k] = base[k] - h;
        net.set_parameters(&p).unwrap();
        let down = loss(net, &x);
        numeric_p.push((up - down) / (2.0 * h));
    }
    net.set_parameters(&base).unwrap();
    let mut numeric_x = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let mut xp = x.clone();
        xp[k] = x[k] + h;
        let up = loss(net, &xp);
        xp[k] = x[k] - h;
        let down = loss(net, &xp);
        numeric_x.push((up - down) / (2.0 * h));
    }
    rel_err(&analytic_p, &numeric_p).max(rel_err(&back.input_grad, &numeric_x))
}

/// `|a - b| / max(|a|, |b|)` over whole vectors; 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

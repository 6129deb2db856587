//! Independent scalar re-implementations and shared scenes for integration tests.
//!
//! The oracles work on plain arrays and loop over the definitions directly;
//! they share no code with the library beyond reading camera fields.

#![allow(dead_code)]

use fuseflow::synth::{make_ring_rig, render_depth, Intrinsics, Primitive, SceneSpec};
use fuseflow::{Camera, Frame, Vec3d};

pub const ALPHA: f64 = 0.5;
pub const BETA: f64 = 0.5;
pub const GAMMA: f64 = 1.0;
pub const DELTA: f64 = 1.0;
pub const TAU: f64 = 0.6;
pub const SIGMA_MM: f64 = 20.0;

/// Row-major depth grid; 0 is invalid.
pub struct Grid<'a> {
    pub d: &'a [f64],
    pub w: usize,
    pub h: usize,
}

impl Grid<'_> {
    pub fn at(&self, x: i64, y: i64) -> f64 {
        if x < 0 || y < 0 || x >= self.w as i64 || y >= self.h as i64 {
            0.0
        } else {
            self.d[y as usize * self.w + x as usize]
        }
    }
}

pub fn naive_gradient(g: &Grid, x: i64, y: i64) -> f64 {
    let c = g.at(x, y);
    let axis = |a: f64, b: f64| -> f64 {
        if a > 0.0 && b > 0.0 {
            (b - a) / 2.0
        } else if b > 0.0 {
            b - c
        } else if a > 0.0 {
            c - a
        } else {
            0.0
        }
    };
    let gx = axis(g.at(x - 1, y), g.at(x + 1, y));
    let gy = axis(g.at(x, y - 1), g.at(x, y + 1));
    (gx * gx + gy * gy).sqrt()
}

pub fn naive_sigma(g: &Grid, x: i64, y: i64, window: i64) -> f64 {
    let r = window / 2;
    let mut vals = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let v = g.at(x + dx, y + dy);
            if v > 0.0 {
                vals.push(v);
            }
        }
    }
    if vals.len() < 2 {
        return 0.0;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

pub fn naive_confidence(g: &Grid, x: i64, y: i64) -> f64 {
    if g.at(x, y) <= 0.0 {
        return 0.0;
    }
    let raw = ALPHA / (1.0 + BETA * naive_gradient(g, x, y))
        + GAMMA / (1.0 + DELTA * naive_sigma(g, x, y, 3));
    raw.min(1.0)
}

/// Pinhole camera as bare numbers.
#[derive(Clone, Copy)]
pub struct NaiveCam {
    pub id: u32,
    pub f: [f64; 4],
    pub w: usize,
    pub h: usize,
    pub r: [[f64; 3]; 3],
    pub t: [f64; 3],
}

impl NaiveCam {
    pub fn of(c: &Camera) -> Self {
        let m = c.pose.rotation.to_row_array();
        NaiveCam {
            id: c.id,
            f: [c.fx, c.fy, c.cx, c.cy],
            w: c.width,
            h: c.height,
            r: [[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]],
            t: [
                c.pose.translation.x,
                c.pose.translation.y,
                c.pose.translation.z,
            ],
        }
    }

    pub fn to_cam(self, p: [f64; 3]) -> [f64; 3] {
        let mut out = self.t;
        for (i, o) in out.iter_mut().enumerate() {
            for (j, pj) in p.iter().enumerate() {
                *o += self.r[i][j] * pj;
            }
        }
        out
    }

    /// (u, v, z) or `None` within 1 mm of the image plane.
    pub fn project(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        let c = self.to_cam(p);
        (c[2] > 1.0).then(|| {
            [
                self.f[0] * c[0] / c[2] + self.f[2],
                self.f[1] * c[1] / c[2] + self.f[3],
                c[2],
            ]
        })
    }

    pub fn pixel(&self, p: [f64; 3]) -> Option<(usize, usize)> {
        let [u, v, _] = self.project(p)?;
        let (x, y) = (u.round(), v.round());
        (x >= 0.0 && y >= 0.0 && (x as usize) < self.w && (y as usize) < self.h)
            .then_some((x as usize, y as usize))
    }

    pub fn back_project(&self, x: f64, y: f64, z: f64) -> [f64; 3] {
        let pc = [
            (x - self.f[2]) / self.f[0] * z,
            (y - self.f[3]) / self.f[1] * z,
            z,
        ];
        let d = [pc[0] - self.t[0], pc[1] - self.t[1], pc[2] - self.t[2]];
        // Rᵀ d
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            for (j, dj) in d.iter().enumerate() {
                *o += self.r[j][i] * dj;
            }
        }
        out
    }

    pub fn center(&self) -> [f64; 3] {
        self.back_project(self.f[2], self.f[3], 0.0)
    }
}

pub fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Consistency of `p` seen by `owner`: nearest `k − 1` other cameras that see
/// it, `exp(−mean(d²)/σ²)`.
pub fn naive_consistency(
    p: [f64; 3],
    owner: u32,
    cams: &[NaiveCam],
    depths: &[&[f64]],
    k: usize,
    sigma: f64,
) -> f64 {
    let mut cands: Vec<(f64, u32, f64)> = Vec::new();
    for (c, d) in cams.iter().zip(depths) {
        if c.id == owner {
            continue;
        }
        let Some((x, y)) = c.pixel(p) else { continue };
        let z = d[y * c.w + x];
        if z <= 0.0 {
            continue;
        }
        let q = c.back_project(x as f64, y as f64, z);
        cands.push((dist(c.center(), p), c.id, dist(p, q)));
    }
    cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    cands.truncate(k.saturating_sub(1));
    if cands.is_empty() {
        return 1.0;
    }
    let s: f64 = cands.iter().map(|c| c.2 * c.2 / (sigma * sigma)).sum();
    (-s / cands.len() as f64).exp()
}

pub fn v3(p: Vec3d) -> [f64; 3] {
    [p.x, p.y, p.z]
}

/// Bounded floor plane with a sphere floating above it.
pub fn plane_sphere_scene(noise_sigma: f64, seed: u64) -> SceneSpec<f64> {
    let mut s = SceneSpec::new(vec![
        Primitive::plane(
            Vec3d::new(0.0, 0.0, 0.0),
            Vec3d::new(0.0, 0.0, 1.0),
            Some(500.0),
        ),
        Primitive::sphere(Vec3d::new(0.0, 0.0, 250.0), 150.0),
    ]);
    s.noise_sigma = noise_sigma;
    s.seed = seed;
    s
}

/// `n` cameras on a 600 mm ring, 1500 mm above the floor, aimed at the origin.
pub fn overhead_ring(n: usize, size: usize, focal: f64) -> Vec<Camera> {
    make_ring_rig(
        n,
        600.0,
        1500.0,
        Vec3d::zero(),
        &Intrinsics::square(size, focal),
    )
    .unwrap()
}

pub fn render_all(scene: &SceneSpec<f64>, rig: &[Camera], frame: u64) -> (Vec<Frame>, Vec<Frame>) {
    rig.iter()
        .map(|c| {
            let r = render_depth(scene, c, frame);
            (r.observed, r.truth)
        })
        .unzip()
}

pub fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

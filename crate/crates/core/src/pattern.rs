//! Seeded procedural scenes: smooth color gradients, soft blobs, oriented
//! texture and a few hard-edged rectangles. Used as a stand-in corpus for
//! tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{ColorSpace, Image};

#[derive(Debug, Clone)]
struct Blob {
    cx: f64,
    cy: f64,
    radius: f64,
    color: [f64; 3],
}

#[derive(Debug, Clone)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    color: [f64; 3],
}

#[derive(Debug, Clone)]
struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amplitude: [f64; 3],
}

/// A resolution-independent scene; render it at any size.
#[derive(Debug, Clone)]
pub struct Scene {
    corners: [[f64; 3]; 4],
    blobs: Vec<Blob>,
    rects: Vec<Rect>,
    waves: Vec<Wave>,
}

fn color<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> [f64; 3] {
    [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)]
}

impl Scene {
    pub fn new(seed: u64) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corners = [0; 4].map(|_| color(&mut rng, 0.2, 0.8));
        let blobs = (0..rng.random_range(3..7))
            .map(|_| Blob {
                cx: rng.random(),
                cy: rng.random(),
                radius: rng.random_range(0.05..0.25),
                color: color(&mut rng, 0.0, 1.0),
            })
            .collect();
        let rects = (0..rng.random_range(2..5))
            .map(|_| {
                let (x0, y0) = (rng.random_range(0.0..0.8), rng.random_range(0.0..0.8));
                Rect {
                    x0,
                    y0,
                    x1: x0 + rng.random_range(0.05..0.3),
                    y1: y0 + rng.random_range(0.05..0.3),
                    color: color(&mut rng, 0.05, 0.95),
                }
            })
            .collect();
        let waves = (0..2)
            .map(|_| {
                let freq = rng.random_range(8.0..60.0);
                let angle = rng.random_range(0.0..std::f64::consts::PI);
                Wave {
                    fx: freq * angle.cos(),
                    fy: freq * angle.sin(),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                    amplitude: color(&mut rng, 0.02, 0.12),
                }
            })
            .collect();
        Scene {
            corners,
            blobs,
            rects,
            waves,
        }
    }

    fn eval(&self, u: f64, v: f64) -> [f64; 3] {
        let mut px = [0.0; 3];
        let [a, b, c, d] = &self.corners;
        for k in 0..3 {
            px[k] = (1.0 - v) * ((1.0 - u) * a[k] + u * b[k]) + v * ((1.0 - u) * c[k] + u * d[k]);
        }
        for blob in &self.blobs {
            let r2 = ((u - blob.cx).powi(2) + (v - blob.cy).powi(2)) / (blob.radius * blob.radius);
            let alpha = (-r2).exp() * 0.7;
            for k in 0..3 {
                px[k] = (1.0 - alpha) * px[k] + alpha * blob.color[k];
            }
        }
        for r in &self.rects {
            if u >= r.x0 && u < r.x1 && v >= r.y0 && v < r.y1 {
                px = r.color;
            }
        }
        for w in &self.waves {
            let s = (std::f64::consts::TAU * (w.fx * u + w.fy * v) + w.phase).sin();
            for k in 0..3 {
                px[k] += w.amplitude[k] * s;
            }
        }
        px.map(|x| x.clamp(0.0, 1.0))
    }

    /// Renders the scene as an sRGB image.
    pub fn render(&self, height: usize, width: usize) -> Image {
        let mut data = vec![0f32; height * width * 3];
        let n = height * width;
        for y in 0..height {
            for x in 0..width {
                let px = self.eval((x as f64 + 0.5) / width as f64, (y as f64 + 0.5) / height as f64);
                for k in 0..3 {
                    data[k * n + y * width + x] = px[k] as f32;
                }
            }
        }
        Image::new(height, width, 3, ColorSpace::Srgb, data).expect("valid dimensions")
    }
}

/// Uniform random sRGB image (white noise), mainly for stress tests.
pub fn random_image(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..height * width * 3).map(|_| rng.random::<f32>()).collect();
    Image::new(height, width, 3, ColorSpace::Srgb, data).expect("valid dimensions")
}

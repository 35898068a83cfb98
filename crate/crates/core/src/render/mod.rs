//! Splat rasterization: a tile-based renderer, an exhaustive per-pixel
//! reference renderer with identical compositing math, and gradients through
//! the reference path.

mod backward;
mod project;

pub use backward::{render_backward, oracle_backward, Gradients};
pub use project::{project, ProjectedSplat, LOW_PASS, MIN_ALPHA, MIN_TRANSMITTANCE, NEAR_PLANE};

use rayon::prelude::*;

use crate::camera::CameraModel;
use crate::gaussians::GaussianSet;
use crate::image::Image;

pub const TILE_SIZE: usize = 16;

/// Output of a render pass.
#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub rgb: Image,
    /// Accumulated opacity `1 - T` per pixel.
    pub alpha: Image,
    pub stats: RenderStats,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RenderStats {
    /// Splat references per tile (empty for the reference renderer).
    pub splats_per_tile: Vec<u32>,
    pub culled: usize,
    pub visible: usize,
}

/// Front-to-back compositing of an already depth-sorted list at one pixel.
/// Returns the colour (background included) and the final transmittance.
#[inline]
pub(crate) fn composite_pixel<'a>(
    px: f64,
    py: f64,
    splats: impl Iterator<Item = &'a ProjectedSplat>,
    background: &[f64; 3],
) -> ([f64; 3], f64) {
    let mut t = 1.0;
    let mut c = [0.0; 3];
    for s in splats {
        let Some((alpha, _)) = s.alpha_at(px, py) else { continue };
        let w = alpha * t;
        c[0] += s.rgb[0] * w;
        c[1] += s.rgb[1] * w;
        c[2] += s.rgb[2] * w;
        t *= 1.0 - alpha;
        if t < MIN_TRANSMITTANCE {
            break;
        }
    }
    for ch in 0..3 {
        c[ch] += t * background[ch];
    }
    (c, t)
}

/// Tile-based renderer bound to a worker pool.
pub struct TileRenderer {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl TileRenderer {
    pub fn new(workers: usize) -> Self {
        let workers = workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("failed to build render pool");
        Self { pool, workers }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn render(&self, set: &GaussianSet, cam: &CameraModel, background: [f64; 3]) -> RenderedFrame {
        self.pool.install(|| render_tiled_in_pool(set, cam, background))
    }
}

/// Tile-based render on the global rayon pool.
pub fn render_tiled(set: &GaussianSet, cam: &CameraModel, background: [f64; 3]) -> RenderedFrame {
    render_tiled_in_pool(set, cam, background)
}

fn render_tiled_in_pool(set: &GaussianSet, cam: &CameraModel, background: [f64; 3]) -> RenderedFrame {
    let (w, h) = (cam.width, cam.height);
    let tiles_x = w.div_ceil(TILE_SIZE);
    let tiles_y = h.div_ceil(TILE_SIZE);
    let n_tiles = tiles_x * tiles_y;

    let splats = project(set, cam);
    // one global depth sort; binning in this order leaves every tile list sorted
    let mut order: Vec<u32> = (0..splats.len() as u32).collect();
    order.par_sort_unstable_by(|a, b| project::depth_order(&splats[*a as usize], &splats[*b as usize]));

    // bucket splat references per tile (CSR layout)
    let mut counts = vec![0u32; n_tiles];
    let ranges: Vec<(usize, usize, usize, usize)> = splats
        .iter()
        .map(|s| {
            let (x0, x1, y0, y1) = s.pixel_bounds(w, h).expect("projected splats are on screen");
            (x0 / TILE_SIZE, x1 / TILE_SIZE, y0 / TILE_SIZE, y1 / TILE_SIZE)
        })
        .collect();
    for &(tx0, tx1, ty0, ty1) in &ranges {
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                counts[ty * tiles_x + tx] += 1;
            }
        }
    }
    let mut offsets = vec![0usize; n_tiles + 1];
    for t in 0..n_tiles {
        offsets[t + 1] = offsets[t] + counts[t] as usize;
    }
    let mut cursor = offsets.clone();
    let mut refs = vec![0u32; offsets[n_tiles]];
    for &k in &order {
        let (tx0, tx1, ty0, ty1) = ranges[k as usize];
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                let t = ty * tiles_x + tx;
                refs[cursor[t]] = k;
                cursor[t] += 1;
            }
        }
    }

    let mut per_tile: Vec<&[u32]> = Vec::with_capacity(n_tiles);
    let mut rest = refs.as_slice();
    for t in 0..n_tiles {
        let (head, tail) = rest.split_at(counts[t] as usize);
        per_tile.push(head);
        rest = tail;
    }

    let tiles: Vec<(usize, Vec<f64>, Vec<f64>)> = per_tile
        .into_par_iter()
        .enumerate()
        .map(|(tile, list)| {
            let tx = tile % tiles_x;
            let ty = tile / tiles_x;
            let x0 = tx * TILE_SIZE;
            let y0 = ty * TILE_SIZE;
            let x1 = (x0 + TILE_SIZE).min(w);
            let y1 = (y0 + TILE_SIZE).min(h);
            let mut rgb = Vec::with_capacity((x1 - x0) * (y1 - y0) * 3);
            let mut alpha = Vec::with_capacity((x1 - x0) * (y1 - y0));
            for y in y0..y1 {
                for x in x0..x1 {
                    let (c, t) = composite_pixel(
                        x as f64,
                        y as f64,
                        list.iter().map(|k| &splats[*k as usize]),
                        &background,
                    );
                    rgb.extend_from_slice(&c);
                    alpha.push(1.0 - t);
                }
            }
            (tile, rgb, alpha)
        })
        .collect();

    let mut rgb = Image::new(w, h, 3);
    let mut alpha = Image::new(w, h, 1);
    for (tile, trgb, talpha) in tiles {
        let tx = tile % tiles_x;
        let ty = tile / tiles_x;
        let x0 = tx * TILE_SIZE;
        let y0 = ty * TILE_SIZE;
        let tw = (x0 + TILE_SIZE).min(w) - x0;
        for (row, y) in (y0..(y0 + TILE_SIZE).min(h)).enumerate() {
            let src = &trgb[row * tw * 3..(row + 1) * tw * 3];
            let dst = (y * w + x0) * 3;
            rgb.data[dst..dst + tw * 3].copy_from_slice(src);
            alpha.data[y * w + x0..y * w + x0 + tw].copy_from_slice(&talpha[row * tw..(row + 1) * tw]);
        }
    }

    RenderedFrame {
        rgb,
        alpha,
        stats: RenderStats {
            splats_per_tile: counts,
            culled: set.len() - splats.len(),
            visible: splats.len(),
        },
    }
}

/// Reference renderer: global depth sort, then every pixel walks the full
/// sorted list. Single-threaded.
pub fn render_oracle(set: &GaussianSet, cam: &CameraModel, background: [f64; 3]) -> RenderedFrame {
    let (w, h) = (cam.width, cam.height);
    let mut splats: Vec<ProjectedSplat> = (0..set.len())
        .filter_map(|i| project::project_one(set, cam, i).map(|(s, _)| s))
        .collect();
    splats.sort_by(project::depth_order);
    let mut rgb = Image::new(w, h, 3);
    let mut alpha = Image::new(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let (c, t) = composite_pixel(x as f64, y as f64, splats.iter(), &background);
            rgb.pixel_mut(x, y).copy_from_slice(&c);
            alpha.data[y * w + x] = 1.0 - t;
        }
    }
    RenderedFrame {
        rgb,
        alpha,
        stats: RenderStats { splats_per_tile: Vec::new(), culled: set.len() - splats.len(), visible: splats.len() },
    }
}

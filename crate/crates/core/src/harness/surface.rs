//! Reward surfaces over the expert PCA plane, normalized to [0, 1].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::pca::{pca_fit, Pca};
use crate::mdp::{TabularMdp, Trajectory};
use crate::reward::SupportPoint;

/// Fraction of the expert bounding box added on each side.
pub const DEFAULT_MARGIN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceBounds {
    pub u: [f64; 2],
    pub v: [f64; 2],
}

impl SurfaceBounds {
    /// Bounding box of the projected points, widened by `margin` of its
    /// extent per side (0.5 absolute when an extent is zero).
    pub fn around(pca: &Pca, points: &[Vec<f64>], margin: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("no points to bound".into()));
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            let uv = pca.project(p)?;
            for k in 0..2 {
                lo[k] = lo[k].min(uv[k]);
                hi[k] = hi[k].max(uv[k]);
            }
        }
        let widen = |k: usize| {
            let pad = if hi[k] - lo[k] > 1e-12 { margin * (hi[k] - lo[k]) } else { 0.5 };
            [lo[k] - pad, hi[k] + pad]
        };
        Ok(Self { u: widen(0), v: widen(1) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub u: f64,
    pub v: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardSurface {
    pub grid_n: usize,
    /// Row-major over `v` then `u`: `points[iv * grid_n + iu]`.
    pub points: Vec<SurfacePoint>,
    /// Unnormalized rewards in the same order.
    pub raw: Vec<f64>,
    /// All raw values equal; scores were set to 0.5.
    pub constant: bool,
}

fn linspace(range: [f64; 2], n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (range[0] + range[1])];
    }
    (0..n).map(|i| range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64).collect()
}

/// State-action pair whose embedding is closest to `embed`; lets tabular
/// rewards be read off the continuous plane.
pub fn nearest_pair(mdp: &TabularMdp, embed: &[f64]) -> usize {
    (0..mdp.n_pairs())
        .map(|i| {
            let e = mdp.pair_embed(i);
            (i, e.iter().zip(embed).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// PCA plane of the demonstrated state-action embeddings, with the default
/// bounds around them.
pub fn expert_plane(mdp: &TabularMdp, demos: &[Trajectory], margin: f64) -> Result<(Pca, SurfaceBounds)> {
    let embeds: Vec<Vec<f64>> =
        demos.iter().flat_map(|t| t.steps.iter()).map(|&(s, a)| mdp.pair_embed(mdp.pair_index(s, a))).collect();
    let pca = pca_fit(&embeds)?;
    let bounds = SurfaceBounds::around(&pca, &embeds, margin)?;
    Ok((pca, bounds))
}

/// Scores `reward_fn` on a `grid_n x grid_n` grid mapped back through the
/// PCA plane. Each point carries both its embedding and the id of the
/// nearest state-action pair.
pub fn reward_surface<F>(mdp: &TabularMdp, reward_fn: F, pca: &Pca, grid_n: usize, bounds: &SurfaceBounds) -> Result<RewardSurface>
where
    F: Fn(&SupportPoint) -> Result<f64>,
{
    if grid_n == 0 {
        return Err(Error::Invalid("grid_n must be positive".into()));
    }
    crate::error::check_len(mdp.embed_dim(), pca.dim())?;
    let us = linspace(bounds.u, grid_n);
    let vs = linspace(bounds.v, grid_n);
    let mut coords = Vec::with_capacity(grid_n * grid_n);
    let mut raw = Vec::with_capacity(grid_n * grid_n);
    for &v in &vs {
        for &u in &us {
            let embed = pca.inverse(u, v);
            let id = nearest_pair(mdp, &embed);
            let value = reward_fn(&SupportPoint::new(id, embed))?;
            if !value.is_finite() {
                return Err(Error::Invalid(format!("reward is not finite at ({u}, {v})")));
            }
            coords.push((u, v));
            raw.push(value);
        }
    }
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let constant = hi == lo;
    let points = coords
        .iter()
        .zip(&raw)
        .map(|(&(u, v), &r)| SurfacePoint { u, v, score: if constant { 0.5 } else { (r - lo) / (hi - lo) } })
        .collect();
    Ok(RewardSurface { grid_n, points, raw, constant })
}

/// Mean absolute difference between horizontally and vertically adjacent
/// normalized cells.
pub fn total_variation(surface: &RewardSurface) -> f64 {
    let n = surface.grid_n;
    if n < 2 {
        return 0.0;
    }
    let at = |iv: usize, iu: usize| surface.points[iv * n + iu].score;
    let mut sum = 0.0;
    let mut count = 0usize;
    for iv in 0..n {
        for iu in 0..n {
            if iu + 1 < n {
                sum += (at(iv, iu + 1) - at(iv, iu)).abs();
                count += 1;
            }
            if iv + 1 < n {
                sum += (at(iv + 1, iu) - at(iv, iu)).abs();
                count += 1;
            }
        }
    }
    sum / count as f64
}

impl RewardSurface {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        if self.points.is_empty() {
            wtr.write_record(["u", "v", "score"])?;
        }
        for p in &self.points {
            wtr.serialize(p)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

pub fn read_surface_csv<R: std::io::Read>(r: R) -> Result<Vec<SurfacePoint>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

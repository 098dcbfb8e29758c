//! K-means on the SPD manifold with a combined geodesic/curvature distance.
//!
//! Each pass evaluates, for every (point, centroid) pair, the affine-invariant
//! distance `d_R` and the chord–tangent angle `θ`. Both are min-max normalized
//! over all pairs of the pass and combined as `D = w1·d̂_R + w2·θ̂`. Points go
//! to the argmin centroid (ties to the lower index) and centroids move to the
//! Fréchet mean of their members. Clusters smaller than `min_cluster_size`
//! are dissolved one at a time and their points re-routed to the survivors.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MpecError, Result};
use crate::features::check_weight_pair;
use crate::linalg::SpdMatrix;
use crate::manifold::{airm_distance, frechet_mean, BasePoint, PairGeometry, FRECHET_MAX_ITER, FRECHET_TOL};
use crate::rng;

/// Fraction of points allowed to switch cluster in a pass that still counts
/// as converged.
pub const CHANGE_THRESHOLD: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub k: usize,
    pub w1: f64,
    pub w2: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub min_cluster_size: usize,
    /// Independent seedings; the run with the lowest final inertia is kept.
    pub restarts: usize,
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(MpecError::BadK { k: 0, max: 0 });
        }
        check_weight_pair("w1", self.w1, "w2", self.w2)?;
        if self.max_iter == 0 {
            return Err(MpecError::InvalidConfig("max_iter must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(MpecError::InvalidConfig("restarts must be positive".into()));
        }
        if self.min_cluster_size == 0 {
            return Err(MpecError::InvalidConfig("min_cluster_size must be positive".into()));
        }
        Ok(())
    }
}

/// Min-max range of one metric over the pairs of a pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn over(values: impl Iterator<Item = f64>) -> Range {
        values.fold(
            Range {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            },
            |r, v| Range {
                min: r.min.min(v),
                max: r.max.max(v),
            },
        )
    }

    /// Maps `v` into `[0, 1]`; a degenerate range maps everything to 0.
    pub fn normalize(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if !(span > 0.0) {
            return 0.0;
        }
        ((v - self.min) / span).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<SpdMatrix>,
    pub norm_distance: Range,
    pub norm_angle: Range,
    pub config: ClusterConfig,
    pub assignments: Vec<usize>,
    /// Passes in the final Lloyd run (after any dissolution).
    pub iterations_run: usize,
    /// Within-cluster sum of squared geodesic distances, one entry per pass
    /// of the final Lloyd run.
    pub inertia_history: Vec<f64>,
}

struct Pass {
    assignments: Vec<usize>,
    norm_distance: Range,
    norm_angle: Range,
    inertia: f64,
}

fn geometry(points: &[SpdMatrix], centroids: &[SpdMatrix]) -> Result<Vec<Vec<PairGeometry>>> {
    let bases = centroids
        .iter()
        .map(BasePoint::new)
        .collect::<Result<Vec<_>>>()?;
    points
        .par_iter()
        .map(|p| bases.iter().map(|b| pair(b, p)).collect())
        .collect()
}

fn pair(base: &BasePoint, p: &SpdMatrix) -> Result<PairGeometry> {
    if base.point() == p {
        return Ok(PairGeometry {
            distance: 0.0,
            angle: 0.0,
        });
    }
    base.compare(p)
}

fn combined(g: &PairGeometry, dr: &Range, th: &Range, w1: f64, w2: f64) -> f64 {
    w1 * dr.normalize(g.distance) + w2 * th.normalize(g.angle)
}

fn argmin(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values
        .enumerate()
        .fold((0, f64::INFINITY), |best, (j, v)| if v < best.1 { (j, v) } else { best })
}

fn assign_pass(points: &[SpdMatrix], centroids: &[SpdMatrix], cfg: &ClusterConfig) -> Result<Pass> {
    let geo = geometry(points, centroids)?;
    let norm_distance = Range::over(geo.iter().flatten().map(|g| g.distance));
    let norm_angle = Range::over(geo.iter().flatten().map(|g| g.angle));
    let mut inertia = 0.0;
    let assignments = geo
        .iter()
        .map(|row| {
            let (j, _) = argmin(
                row.iter()
                    .map(|g| combined(g, &norm_distance, &norm_angle, cfg.w1, cfg.w2)),
            );
            inertia += row[j].distance * row[j].distance;
            j
        })
        .collect();
    Ok(Pass {
        assignments,
        norm_distance,
        norm_angle,
        inertia,
    })
}

fn seed_centroids(points: &[SpdMatrix], k: usize, seed: u64, restart: usize) -> Result<Vec<SpdMatrix>> {
    let mut rng = rng::rng_for(seed, &[0x6b6d_6561_6e73, restart as u64]);
    let mut chosen = vec![rng.gen_range(0..points.len())];
    let mut nearest: Vec<f64> = vec![f64::INFINITY; points.len()];
    while chosen.len() < k {
        let last = &points[*chosen.last().unwrap()];
        let base = BasePoint::new(last)?;
        for (i, p) in points.iter().enumerate() {
            let d = if p == last { 0.0 } else { base.distance(p)? };
            nearest[i] = nearest[i].min(d * d);
        }
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, w) in nearest.iter().enumerate() {
                if *w > 0.0 {
                    pick = Some(i);
                    if target < *w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.unwrap()
        } else {
            // every point coincides with a chosen centroid
            (0..points.len()).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
    }
    Ok(chosen.into_iter().map(|i| points[i].clone()).collect())
}

fn update_centroids(points: &[SpdMatrix], assignments: &[usize], centroids: &mut [SpdMatrix]) -> Result<()> {
    let updated: Vec<Option<SpdMatrix>> = (0..centroids.len())
        .into_par_iter()
        .map(|j| {
            let members: Vec<SpdMatrix> = points
                .iter()
                .zip(assignments)
                .filter(|(_, &a)| a == j)
                .map(|(p, _)| p.clone())
                .collect();
            if members.is_empty() {
                return Ok(None);
            }
            Ok(Some(frechet_mean(&members, FRECHET_TOL, FRECHET_MAX_ITER)?.mean))
        })
        .collect::<Result<_>>()?;
    for (c, u) in centroids.iter_mut().zip(updated) {
        if let Some(u) = u {
            *c = u;
        }
    }
    Ok(())
}

/// Lloyd iterations from the given centroids. The returned pass is always
/// evaluated against the final centroids.
fn lloyd(
    points: &[SpdMatrix],
    centroids: &mut [SpdMatrix],
    cfg: &ClusterConfig,
    history: &mut Vec<f64>,
) -> Result<(Pass, usize)> {
    let mut previous: Option<Vec<usize>> = None;
    let mut passes = 0;
    loop {
        let pass = assign_pass(points, centroids, cfg)?;
        history.push(pass.inertia);
        passes += 1;
        if let Some(prev) = &previous {
            let changed = prev.iter().zip(&pass.assignments).filter(|(a, b)| a != b).count();
            if changed == 0 || (changed as f64) < CHANGE_THRESHOLD * points.len() as f64 {
                return Ok((pass, passes));
            }
        }
        if passes > cfg.max_iter {
            return Ok((pass, passes));
        }
        update_centroids(points, &pass.assignments, centroids)?;
        previous = Some(pass.assignments);
    }
}

pub fn kmeans_fit(points: &[SpdMatrix], cfg: &ClusterConfig) -> Result<ClusterModel> {
    cfg.validate()?;
    let first = points.first().ok_or(MpecError::EmptyInput("kmeans points"))?;
    if let Some(bad) = points.iter().find(|p| p.dim() != first.dim()) {
        return Err(MpecError::Shape(format!(
            "mixed dimensions {} and {}",
            first.dim(),
            bad.dim()
        )));
    }
    if cfg.k > points.len() {
        return Err(MpecError::BadK {
            k: cfg.k,
            max: points.len(),
        });
    }

    let mut best: Option<ClusterModel> = None;
    for restart in 0..cfg.restarts {
        let run = fit_once(points, cfg, restart)?;
        let better = best
            .as_ref()
            .map_or(true, |b| run.final_inertia() < b.final_inertia());
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Seeding, Lloyd iterations and small-cluster dissolution for one restart.
fn fit_once(points: &[SpdMatrix], cfg: &ClusterConfig, restart: usize) -> Result<ClusterModel> {
    let mut centroids = seed_centroids(points, cfg.k, cfg.seed, restart)?;
    loop {
        let mut history = Vec::new();
        let (pass, passes) = lloyd(points, &mut centroids, cfg, &mut history)?;
        let mut sizes = vec![0usize; centroids.len()];
        for &a in &pass.assignments {
            sizes[a] += 1;
        }
        let victim = sizes
            .iter()
            .enumerate()
            .filter(|(_, &s)| s < cfg.min_cluster_size)
            .min_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(j, _)| j);
        match victim {
            Some(j) if centroids.len() > 1 => {
                centroids.remove(j);
            }
            _ => {
                return Ok(ClusterModel {
                    centroids,
                    norm_distance: pass.norm_distance,
                    norm_angle: pass.norm_angle,
                    config: cfg.clone(),
                    assignments: pass.assignments,
                    iterations_run: passes,
                    inertia_history: history,
                })
            }
        }
    }
}

/// Cached centroid factorizations for routing many points.
pub struct Router<'a> {
    model: &'a ClusterModel,
    bases: Vec<BasePoint>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].dim()
    }

    /// Within-cluster sum of squared geodesic distances of the stored
    /// assignments.
    pub fn final_inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn router(&self) -> Result<Router<'_>> {
        Ok(Router {
            model: self,
            bases: self
                .centroids
                .iter()
                .map(BasePoint::new)
                .collect::<Result<_>>()?,
        })
    }

    /// Nearest surviving cluster under the combined metric, normalized with
    /// the ranges frozen at the end of training.
    pub fn assign(&self, point: &SpdMatrix) -> Result<(usize, f64)> {
        self.router()?.assign(point)
    }
}

impl Router<'_> {
    pub fn assign(&self, point: &SpdMatrix) -> Result<(usize, f64)> {
        if point.dim() != self.model.dim() {
            return Err(MpecError::Shape(format!(
                "point of dimension {} for a model of dimension {}",
                point.dim(),
                self.model.dim()
            )));
        }
        let cfg = &self.model.config;
        let geo = self
            .bases
            .iter()
            .map(|b| pair(b, point))
            .collect::<Result<Vec<_>>>()?;
        Ok(argmin(geo.iter().map(|g| {
            combined(
                g,
                &self.model.norm_distance,
                &self.model.norm_angle,
                cfg.w1,
                cfg.w2,
            )
        })))
    }

    pub fn assign_all(&self, points: &[SpdMatrix]) -> Result<Vec<(usize, f64)>> {
        points.par_iter().map(|p| self.assign(p)).collect()
    }
}

/// Within-cluster sum of squared geodesic distances.
pub fn inertia(points: &[SpdMatrix], centroids: &[SpdMatrix], assignments: &[usize]) -> Result<f64> {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| airm_distance(p, &centroids[a]).map(|d| d * d))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> SpdMatrix {
        SpdMatrix::diag(&[v]).unwrap()
    }

    fn cfg(k: usize, w1: f64, min_cluster_size: usize) -> ClusterConfig {
        ClusterConfig {
            k,
            w1,
            w2: 1.0 - w1,
            max_iter: 50,
            seed: 7,
            min_cluster_size,
            restarts: 1,
        }
    }

    #[test]
    fn single_cluster_is_the_frechet_mean() {
        let pts: Vec<_> = [1.0, 2.0, 8.0].iter().map(|&v| scalar(v)).collect();
        let m = kmeans_fit(&pts, &cfg(1, 0.7, 1)).unwrap();
        assert_eq!(m.assignments, vec![0, 0, 0]);
        let mean = frechet_mean(&pts, FRECHET_TOL, FRECHET_MAX_ITER).unwrap().mean;
        assert!((m.centroids[0].get(0, 0) - mean.get(0, 0)).abs() < 1e-9);
        assert!((mean.get(0, 0) - 16f64.cbrt()).abs() < 1e-9);
    }

    #[test]
    fn scalar_partition() {
        let pts: Vec<_> = [1.0, 1.1, 100.0, 110.0].iter().map(|&v| scalar(v)).collect();
        for seed in 0..20 {
            let m = kmeans_fit(&pts, &ClusterConfig { seed, ..cfg(2, 1.0, 1) }).unwrap();
            let a = &m.assignments;
            assert_eq!(a[0], a[1]);
            assert_eq!(a[2], a[3]);
            assert_ne!(a[0], a[2]);
        }
    }

    #[test]
    fn identical_points_collapse_to_one_cluster() {
        let p = SpdMatrix::diag(&[2.0, 3.0]).unwrap();
        let pts = vec![p.clone(); 6];
        for k in 1..=4 {
            let m = kmeans_fit(&pts, &cfg(k, 0.7, 2)).unwrap();
            assert_eq!(m.k(), 1);
            assert!(m.iterations_run <= 2);
            assert!(m.assignments.iter().all(|&a| a == 0));
        }
    }

    #[test]
    fn bad_k_and_empty_input() {
        let pts = vec![scalar(1.0), scalar(2.0)];
        assert!(matches!(kmeans_fit(&pts, &cfg(3, 1.0, 1)), Err(MpecError::BadK { .. })));
        assert!(matches!(kmeans_fit(&[], &cfg(1, 1.0, 1)), Err(MpecError::EmptyInput(_))));
        assert!(kmeans_fit(&pts, &ClusterConfig { w2: 0.5, ..cfg(1, 1.0, 1) }).is_err());
    }

    fn two_centroid_model(w1: f64) -> ClusterModel {
        ClusterModel {
            centroids: vec![scalar(1.0), scalar(4.0)],
            norm_distance: Range { min: 0.0, max: 2.0 },
            norm_angle: Range { min: 0.0, max: 0.0 },
            config: cfg(2, w1, 1),
            assignments: vec![],
            iterations_run: 0,
            inertia_history: vec![],
        }
    }

    #[test]
    fn assign_examples() {
        let m = two_centroid_model(1.0);
        assert_eq!(m.assign(&scalar(4.0)).unwrap(), (1, 0.0));
        // geometric midpoint of 1 and 4
        assert_eq!(m.assign(&scalar(2.0)).unwrap().0, 0);
        assert!(m.assign(&SpdMatrix::identity(2)).is_err());
    }

    #[test]
    fn assign_held_out_point() {
        let pts: Vec<_> = [1.0, 1.1, 100.0, 110.0].iter().map(|&v| scalar(v)).collect();
        let m = kmeans_fit(&pts, &cfg(2, 1.0, 1)).unwrap();
        let (c, _) = m.assign(&scalar(105.0)).unwrap();
        assert_eq!(c, m.assignments[2]);
    }

    #[test]
    fn range_normalization() {
        let r = Range { min: 1.0, max: 3.0 };
        assert_eq!(r.normalize(2.0), 0.5);
        assert_eq!(r.normalize(5.0), 1.0);
        assert_eq!(r.normalize(0.0), 0.0);
        assert_eq!(Range { min: 1.0, max: 1.0 }.normalize(1.0), 0.0);
    }
}

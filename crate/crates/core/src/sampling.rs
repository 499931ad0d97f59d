//! Training point generation: Latin hypercube residual sets, equally spaced
//! boundary/initial/cost sets, and per-epoch minibatch partitions.
//!
//! All generators are pure functions of their arguments and a seed, so every
//! training run is reproducible. Boundary points come back as labeled groups;
//! periodic problems get aligned point pairs so a periodicity penalty can
//! difference network outputs across the identified edges.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

/// Layout of the boundary training set.
#[derive(Clone, Debug)]
pub enum BoundaryLayout {
    /// No boundary points.
    None,
    /// Aligned pairs on the two faces `x = lo` / `x = hi` of the first axis,
    /// at `n` equally spaced values of the second coordinate (endpoints
    /// included). Groups: `periodic-a`, `periodic-b`, rows aligned.
    PeriodicPairs { n: usize },
    /// `n` points equally spaced around the perimeter of the 2-D box,
    /// starting at the lower-left corner, counterclockwise. Groups:
    /// `bottom`, `right`, `top`, `left`.
    Perimeter { n: usize },
    /// Dirichlet bottom/top edges sampled at `n_edge` period points
    /// (`x_i = lo + i·w/n_edge`, no duplicated endpoint) plus periodic side
    /// pairs at `n_pair` interior midpoint heights — interior so corner
    /// values already fixed by the Dirichlet edges are not re-constrained.
    /// Groups: `bottom`, `top`, `side-a`, `side-b` (sides aligned).
    DirichletTopBottomPeriodicSides { n_edge: usize, n_pair: usize },
}

/// Counts, domain, and layout for one problem's training sets.
#[derive(Clone, Debug)]
pub struct SamplingPlan {
    /// Residual (collocation) point count.
    pub n_r: usize,
    /// Minibatch count; `n_r` must divide evenly.
    pub m: usize,
    /// Domain box, one entry per input dimension.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub boundary: BoundaryLayout,
    /// Initial-condition points on the second-coordinate floor (0 = none).
    pub n_0: usize,
    /// Cost quadrature points on the second-coordinate ceiling (0 = none;
    /// problems with volume costs integrate over the residual batch instead).
    pub n_j: usize,
    pub seed: u64,
}

/// One labeled boundary group.
#[derive(Clone, Debug)]
pub struct BoundaryGroup {
    pub label: String,
    /// `(n, dim)` points.
    pub points: Array2<f64>,
}

/// The generated training sets for one problem.
#[derive(Clone, Debug)]
pub struct TrainingPoints {
    pub residual: Array2<f64>,
    pub boundary: Vec<BoundaryGroup>,
    /// Empty (0 rows) when the problem has no initial condition.
    pub initial: Array2<f64>,
    /// Empty (0 rows) when the cost is not a boundary/final-time quadrature.
    pub cost: Array2<f64>,
}

/// `n` equally spaced values covering `[a, b]`, endpoints included.
pub fn linspace(a: f64, b: f64, n: usize) -> Array1<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let h = (b - a) / (n - 1) as f64;
    Array1::from_shape_fn(n, |i| a + i as f64 * h)
}

/// Midpoint-rule abscissae for `n` equal cells of `[a, b]`.
pub fn midpoints(a: f64, b: f64, n: usize) -> Array1<f64> {
    assert!(n >= 1, "midpoints needs at least one cell");
    let h = (b - a) / n as f64;
    Array1::from_shape_fn(n, |i| a + (i as f64 + 0.5) * h)
}

/// `n` period points `a + i·(b−a)/n` (endpoint `b` excluded, identified with
/// `a` by periodicity).
pub fn period_points(a: f64, b: f64, n: usize) -> Array1<f64> {
    assert!(n >= 1);
    let h = (b - a) / n as f64;
    Array1::from_shape_fn(n, |i| a + i as f64 * h)
}

/// Latin hypercube sample: `n` points in the box, one point per equal-width
/// stratum of every axis (random permutation per axis, uniform jitter inside
/// each stratum). Reproducible by seed.
pub fn lhs_sample(n: usize, lo: &[f64], hi: &[f64], seed: u64) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::InvalidArg("lhs_sample: n must be >= 1".into()));
    }
    if lo.len() != hi.len() || lo.is_empty() {
        return Err(Error::InvalidArg("lhs_sample: bad box dimensions".into()));
    }
    for d in 0..lo.len() {
        if !(lo[d] < hi[d]) {
            return Err(Error::InvalidArg(format!(
                "lhs_sample: empty box on axis {d} ({} >= {})",
                lo[d], hi[d]
            )));
        }
    }
    let dim = lo.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Array2::zeros((n, dim));
    let mut strata: Vec<usize> = (0..n).collect();
    for d in 0..dim {
        strata.shuffle(&mut rng);
        let w = (hi[d] - lo[d]) / n as f64;
        for (i, &s) in strata.iter().enumerate() {
            let jitter: f64 = rng.gen();
            pts[[i, d]] = lo[d] + (s as f64 + jitter) * w;
        }
    }
    Ok(pts)
}

/// Shuffles `points` with a fresh epoch seed and splits them into `m` equal
/// batches that partition the set exactly.
pub fn epoch_minibatches(points: &Array2<f64>, m: usize, epoch_seed: u64) -> Result<Vec<Array2<f64>>> {
    let n = points.nrows();
    if m == 0 || n % m != 0 {
        return Err(Error::InvalidArg(format!(
            "epoch_minibatches: {n} points not divisible into {m} batches"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    order.shuffle(&mut rng);
    let bs = n / m;
    let dim = points.ncols();
    let mut out = Vec::with_capacity(m);
    for b in 0..m {
        let mut batch = Array2::zeros((bs, dim));
        for (i, &row) in order[b * bs..(b + 1) * bs].iter().enumerate() {
            batch.row_mut(i).assign(&points.row(row));
        }
        out.push(batch);
    }
    Ok(out)
}

fn column_points(xs: &Array1<f64>, fixed: f64, x_first: bool) -> Array2<f64> {
    let mut p = Array2::zeros((xs.len(), 2));
    for (i, &x) in xs.iter().enumerate() {
        if x_first {
            p[[i, 0]] = x;
            p[[i, 1]] = fixed;
        } else {
            p[[i, 0]] = fixed;
            p[[i, 1]] = x;
        }
    }
    p
}

/// Equally spaced labeled boundary groups for the requested layout.
pub fn boundary_points(lo: &[f64], hi: &[f64], layout: &BoundaryLayout) -> Vec<BoundaryGroup> {
    match layout {
        BoundaryLayout::None => Vec::new(),
        BoundaryLayout::PeriodicPairs { n } => {
            let ts = linspace(lo[1], hi[1], *n);
            vec![
                BoundaryGroup {
                    label: "periodic-a".into(),
                    points: column_points(&ts, lo[0], false),
                },
                BoundaryGroup {
                    label: "periodic-b".into(),
                    points: column_points(&ts, hi[0], false),
                },
            ]
        }
        BoundaryLayout::Perimeter { n } => {
            let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
            let per = 2.0 * (w + h);
            let step = per / *n as f64;
            let mut groups: Vec<(&str, Vec<[f64; 2]>)> = vec![
                ("bottom", Vec::new()),
                ("right", Vec::new()),
                ("top", Vec::new()),
                ("left", Vec::new()),
            ];
            for i in 0..*n {
                let s = i as f64 * step;
                let (side, x, y) = if s < w {
                    (0, lo[0] + s, lo[1])
                } else if s < w + h {
                    (1, hi[0], lo[1] + (s - w))
                } else if s < 2.0 * w + h {
                    (2, hi[0] - (s - w - h), hi[1])
                } else {
                    (3, lo[0], hi[1] - (s - 2.0 * w - h))
                };
                groups[side].1.push([x, y]);
            }
            groups
                .into_iter()
                .map(|(label, pts)| BoundaryGroup {
                    label: label.into(),
                    points: Array2::from_shape_fn((pts.len(), 2), |(i, d)| pts[i][d]),
                })
                .collect()
        }
        BoundaryLayout::DirichletTopBottomPeriodicSides { n_edge, n_pair } => {
            let xs = period_points(lo[0], hi[0], *n_edge);
            let ys = midpoints(lo[1], hi[1], *n_pair);
            vec![
                BoundaryGroup {
                    label: "bottom".into(),
                    points: column_points(&xs, lo[1], true),
                },
                BoundaryGroup {
                    label: "top".into(),
                    points: column_points(&xs, hi[1], true),
                },
                BoundaryGroup {
                    label: "side-a".into(),
                    points: column_points(&ys, lo[0], false),
                },
                BoundaryGroup {
                    label: "side-b".into(),
                    points: column_points(&ys, hi[0], false),
                },
            ]
        }
    }
}

/// Generates every training set of a plan.
pub fn generate(plan: &SamplingPlan) -> Result<TrainingPoints> {
    if plan.m == 0 || plan.n_r % plan.m != 0 {
        return Err(Error::InvalidArg(format!(
            "sampling plan: N_r = {} not divisible by M = {}",
            plan.n_r, plan.m
        )));
    }
    let residual = lhs_sample(plan.n_r, &plan.lo, &plan.hi, plan.seed)?;
    let boundary = boundary_points(&plan.lo, &plan.hi, &plan.boundary);
    let initial = if plan.n_0 > 0 {
        column_points(&linspace(plan.lo[0], plan.hi[0], plan.n_0), plan.lo[1], true)
    } else {
        Array2::zeros((0, 2))
    };
    let cost = if plan.n_j > 0 {
        column_points(&midpoints(plan.lo[0], plan.hi[0], plan.n_j), plan.hi[1], true)
    } else {
        Array2::zeros((0, 2))
    };
    Ok(TrainingPoints {
        residual,
        boundary,
        initial,
        cost,
    })
}

impl TrainingPoints {
    /// Writes every set to a CSV with columns `x,t,label`.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "x,t,label")?;
        let mut dump = |pts: &Array2<f64>, label: &str| -> std::io::Result<()> {
            for i in 0..pts.nrows() {
                writeln!(f, "{:.16e},{:.16e},{}", pts[[i, 0]], pts[[i, 1]], label)?;
            }
            Ok(())
        };
        dump(&self.residual, "residual")?;
        for g in &self.boundary {
            dump(&g.points, &g.label)?;
        }
        dump(&self.initial, "initial")?;
        dump(&self.cost, "cost")?;
        Ok(())
    }
}

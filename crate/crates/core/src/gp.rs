//! Grid Gaussian-process prior on the log investment map.
//!
//! The latent `log f` lives on a Cartesian grid of characteristics and is
//! parameterised as `log f = L X` with `X ~ N(0, I)` and `L = U D^{1/2}`
//! built factor-by-factor from the per-dimension Gram matrices of a product
//! rational-quadratic kernel. Sampling alternates elliptical slice updates of
//! `X` and of the standardised log-hyperparameters.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::backtest::{for_each_day, BacktestConfig, DayContext, Dataset, PerformanceEvaluator, PerformanceKind, Strategy};
use crate::error::{Error, Result};
use crate::inference::GammaLikelihood;
use crate::linalg::{sym_eigen, Mat};
use crate::math::Real;
use crate::portfolios::masked_softmax;
use crate::rng::{self, SptRng};

/// Cartesian grid with knots sorted per dimension. Cells are indexed
/// row-major: the last dimension varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct CharGrid {
    knots: Vec<Vec<f64>>,
}

impl CharGrid {
    pub fn new(knots: Vec<Vec<f64>>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::invalid("grid needs at least one dimension"));
        }
        for (i, k) in knots.iter().enumerate() {
            if k.is_empty() {
                return Err(Error::invalid(format!("dimension {i} has no knots")));
            }
            if k.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("dimension {i} has a non-finite knot")));
            }
            if k.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::invalid(format!("knots of dimension {i} are not strictly increasing")));
            }
        }
        Ok(CharGrid { knots })
    }

    /// `sizes[i]` knots evenly spaced over `bounds[i]`. A single knot sits at
    /// the midpoint.
    pub fn uniform(bounds: &[(f64, f64)], sizes: &[usize]) -> Result<Self> {
        if bounds.len() != sizes.len() {
            return Err(Error::invalid("bounds and sizes differ in length"));
        }
        let knots = bounds
            .iter()
            .zip(sizes)
            .map(|(&(lo, hi), &m)| match m {
                0 => Vec::new(),
                1 => vec![0.5 * (lo + hi)],
                _ => (0..m).map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64).collect(),
            })
            .collect();
        CharGrid::new(knots)
    }

    pub fn dims(&self) -> usize {
        self.knots.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.knots.iter().map(Vec::len).collect()
    }

    /// Total number of cells `N = Π m_i`.
    pub fn len(&self) -> usize {
        self.knots.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn knots(&self, dim: usize) -> &[f64] {
        &self.knots[dim]
    }

    pub fn all_knots(&self) -> &[Vec<f64>] {
        &self.knots
    }

    pub fn bounds(&self, dim: usize) -> (f64, f64) {
        let k = &self.knots[dim];
        (k[0], k[k.len() - 1])
    }

    /// Nearest knot in one dimension after clamping; exact midpoints go to
    /// the lower knot.
    pub fn snap(&self, dim: usize, x: f64) -> usize {
        let k = &self.knots[dim];
        if !(x > k[0]) {
            return 0;
        }
        let last = k.len() - 1;
        if x >= k[last] {
            return last;
        }
        // first knot strictly above x
        let hi = k.partition_point(|&v| v <= x);
        let lo = hi - 1;
        if x - k[lo] <= k[hi] - x {
            lo
        } else {
            hi
        }
    }

    pub fn cell_index(&self, x: &[f64]) -> usize {
        debug_assert_eq!(x.len(), self.dims());
        let mut idx = 0;
        for (d, &v) in x.iter().enumerate() {
            idx = idx * self.knots[d].len() + self.snap(d, v);
        }
        idx
    }

    /// Per-dimension knot indices of a cell.
    pub fn multi_index(&self, mut cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims()];
        for d in (0..self.dims()).rev() {
            let m = self.knots[d].len();
            out[d] = cell % m;
            cell /= m;
        }
        out
    }

    pub fn cell_coords(&self, cell: usize) -> Vec<f64> {
        self.multi_index(cell)
            .iter()
            .enumerate()
            .map(|(d, &j)| self.knots[d][j])
            .collect()
    }
}

/// Product rational-quadratic kernel hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RqHypers {
    pub amplitude: f64,
    pub lengths: Vec<f64>,
    pub shapes: Vec<f64>,
}

impl RqHypers {
    pub fn new(amplitude: f64, lengths: Vec<f64>, shapes: Vec<f64>) -> Result<Self> {
        let h = RqHypers {
            amplitude,
            lengths,
            shapes,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn dims(&self) -> usize {
        self.lengths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengths.len() != self.shapes.len() {
            return Err(Error::invalid("length scales and shapes differ in count"));
        }
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.amplitude) || !self.lengths.iter().all(|&v| ok(v)) || !self.shapes.iter().all(|&v| ok(v)) {
            return Err(Error::invalid("kernel hyperparameters must be positive and finite"));
        }
        Ok(())
    }

    /// `[k0, l_1..l_d, α_1..α_d]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + 2 * self.dims());
        v.push(self.amplitude);
        v.extend_from_slice(&self.lengths);
        v.extend_from_slice(&self.shapes);
        v
    }

    pub fn from_vec(v: &[f64]) -> Result<Self> {
        if v.is_empty() || v.len() % 2 != 1 {
            return Err(Error::invalid("hyperparameter vector must have odd length"));
        }
        let d = (v.len() - 1) / 2;
        RqHypers::new(v[0], v[1..1 + d].to_vec(), v[1 + d..].to_vec())
    }
}

/// One-dimensional RQ factor `(1 + r²/(2αl²))^{-α}`, without amplitude.
#[inline]
pub fn rq_factor(r: f64, length: f64, shape: f64) -> f64 {
    (1.0 + r * r / (2.0 * shape * length * length)).powf(-shape)
}

pub fn rq_kernel(x: &[f64], y: &[f64], h: &RqHypers) -> f64 {
    let mut k = h.amplitude * h.amplitude;
    for i in 0..x.len() {
        k *= rq_factor(x[i] - y[i], h.lengths[i], h.shapes[i]);
    }
    k
}

/// Log-normal prior: `log h ~ N(location, scale²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalPrior {
    pub location: f64,
    pub scale: f64,
}

impl LogNormalPrior {
    pub fn new(location: f64, scale: f64) -> Result<Self> {
        if !(location.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("log-normal prior needs finite location and positive scale"));
        }
        Ok(LogNormalPrior { location, scale })
    }

    /// Standardised coordinate of a positive value.
    pub fn standardise(&self, h: f64) -> f64 {
        (h.ln() - self.location) / self.scale
    }

    pub fn value(&self, z: f64) -> f64 {
        (self.location + self.scale * z).exp()
    }
}

/// Independent log-normal priors in the order of [`RqHypers::to_vec`].
#[derive(Debug, Clone, PartialEq)]
pub struct HyperPriors {
    pub priors: Vec<LogNormalPrior>,
}

impl HyperPriors {
    /// Length-scale locations at the log median pairwise knot distance, all
    /// other locations at 0, unit scales.
    pub fn for_grid(grid: &CharGrid) -> Self {
        let d = grid.dims();
        let mut priors = vec![LogNormalPrior { location: 0.0, scale: 1.0 }; 1 + 2 * d];
        for i in 0..d {
            priors[1 + i].location = median_pairwise_distance(grid.knots(i)).ln();
        }
        HyperPriors { priors }
    }

    pub fn dims(&self) -> usize {
        (self.priors.len() - 1) / 2
    }

    /// Hyperparameters at standardised coordinates `z`.
    pub fn hypers(&self, z: &[f64]) -> Result<RqHypers> {
        let v: Vec<f64> = self.priors.iter().zip(z).map(|(p, &z)| p.value(z)).collect();
        RqHypers::from_vec(&v)
    }

    pub fn standardise(&self, h: &RqHypers) -> Vec<f64> {
        self.priors.iter().zip(h.to_vec()).map(|(p, v)| p.standardise(v)).collect()
    }

    /// Prior medians.
    pub fn median(&self) -> RqHypers {
        self.hypers(&vec![0.0; self.priors.len()]).expect("finite prior locations")
    }
}

/// Median of `|x_a − x_b|` over pairs `a < b`; 1 when fewer than two
/// distinct values exist.
pub fn median_pairwise_distance(x: &[f64]) -> f64 {
    let mut d: Vec<f64> = Vec::with_capacity(x.len() * x.len().saturating_sub(1) / 2);
    for a in 0..x.len() {
        for b in (a + 1)..x.len() {
            d.push((x[a] - x[b]).abs());
        }
    }
    d.sort_by(f64::total_cmp);
    let m = match d.len() {
        0 => 0.0,
        n if n % 2 == 1 => d[n / 2],
        n => 0.5 * (d[n / 2 - 1] + d[n / 2]),
    };
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Per-dimension square-root factors `U_i D_i^{1/2}` and the amplitude.
#[derive(Debug, Clone)]
pub struct KronFactors {
    pub amplitude: f64,
    /// Eigenvalues per dimension, ascending and clamped at zero.
    pub eigenvalues: Vec<Vec<f64>>,
    pub eigenvectors: Vec<Mat>,
    /// `U_i diag(sqrt λ_i)`.
    pub roots: Vec<Mat>,
}

impl KronFactors {
    pub fn len(&self) -> usize {
        self.roots.iter().map(Mat::rows).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.roots.iter().map(Mat::rows).collect()
    }

    /// All eigenvalues of the full-grid Gram matrix, ascending.
    pub fn full_eigenvalues(&self) -> Vec<f64> {
        let mut vals = vec![self.amplitude * self.amplitude];
        for ev in &self.eigenvalues {
            vals = vals.iter().flat_map(|&a| ev.iter().map(move |&b| a * b)).collect();
        }
        vals.sort_by(f64::total_cmp);
        vals
    }

    /// Dense `L` (tests and small grids only).
    pub fn dense_root(&self) -> Mat {
        let mut l = Mat::scaled_identity(1, self.amplitude);
        for r in &self.roots {
            l = l.kron(r);
        }
        l
    }

    /// Dense `K = L Lᵀ` (tests and small grids only).
    pub fn dense_gram(&self) -> Mat {
        self.dense_root().gram()
    }
}

/// Gram matrix of the unit-amplitude RQ factor over one knot vector.
pub fn factor_gram(knots: &[f64], length: f64, shape: f64) -> Mat {
    Mat::from_fn(knots.len(), knots.len(), |a, b| rq_factor(knots[a] - knots[b], length, shape))
}

/// Dense full-grid Gram matrix by direct kernel evaluation.
pub fn dense_gram(grid: &CharGrid, h: &RqHypers) -> Mat {
    let coords: Vec<Vec<f64>> = (0..grid.len()).map(|c| grid.cell_coords(c)).collect();
    Mat::from_fn(grid.len(), grid.len(), |a, b| rq_kernel(&coords[a], &coords[b], h))
}

pub fn kron_factorize(grid: &CharGrid, h: &RqHypers) -> Result<KronFactors> {
    factorize_knots(grid.all_knots(), h)
}

/// Like [`kron_factorize`] but accepts knot vectors with repeats, which make
/// the Gram matrix singular.
pub fn factorize_knots(knots: &[Vec<f64>], h: &RqHypers) -> Result<KronFactors> {
    h.validate()?;
    if knots.len() != h.dims() {
        return Err(Error::invalid(format!(
            "grid has {} dimensions, hyperparameters {}",
            knots.len(),
            h.dims()
        )));
    }
    let mut eigenvalues = Vec::with_capacity(knots.len());
    let mut eigenvectors = Vec::with_capacity(knots.len());
    let mut roots = Vec::with_capacity(knots.len());
    for (i, k) in knots.iter().enumerate() {
        let g = factor_gram(k, h.lengths[i], h.shapes[i]);
        if !g.is_finite() {
            return Err(Error::numeric(format!("non-finite Gram entry in dimension {i}")));
        }
        let e = sym_eigen(&g).map_err(|e| Error::numeric(format!("dimension {i}: {e}")))?;
        let vals: Vec<f64> = e.values.iter().map(|&v| v.max(0.0)).collect();
        let m = k.len();
        let root = Mat::from_fn(m, m, |a, b| e.vectors[(a, b)] * vals[b].sqrt());
        eigenvalues.push(vals);
        eigenvectors.push(e.vectors);
        roots.push(root);
    }
    Ok(KronFactors {
        amplitude: h.amplitude,
        eigenvalues,
        eigenvectors,
        roots,
    })
}

/// `log f = k0 · (⊗_i U_i D_i^{1/2}) X`, one mode product per dimension.
pub fn kron_matvec(f: &KronFactors, x: &[f64]) -> Result<Vec<f64>> {
    let n = f.len();
    if x.len() != n {
        return Err(Error::invalid(format!("expected {n} whitened coordinates, got {}", x.len())));
    }
    let mut cur = x.to_vec();
    let mut next = vec![0.0; n];
    let sizes = f.sizes();
    for (d, a) in f.roots.iter().enumerate() {
        let m = sizes[d];
        let inner: usize = sizes[d + 1..].iter().product();
        let outer = n / (m * inner);
        for o in 0..outer {
            let base = o * m * inner;
            for r in 0..m {
                let arow = a.row(r);
                let out = &mut next[base + r * inner..base + (r + 1) * inner];
                out.iter_mut().for_each(|v| *v = 0.0);
                for (c, &coef) in arow.iter().enumerate() {
                    if coef == 0.0 {
                        continue;
                    }
                    let src = &cur[base + c * inner..base + (c + 1) * inner];
                    for (o, &s) in out.iter_mut().zip(src) {
                        *o += coef * s;
                    }
                }
            }
        }
        core::mem::swap(&mut cur, &mut next);
    }
    cur.iter_mut().for_each(|v| *v *= f.amplitude);
    Ok(cur)
}

/// Result of one elliptical slice update.
#[derive(Debug, Clone, PartialEq)]
pub struct EssOutcome {
    pub state: Vec<f64>,
    pub log_lik: f64,
    /// Likelihood evaluations used.
    pub evaluations: usize,
}

/// Bracket width below which the update returns the current point.
const MIN_BRACKET: f64 = 1e-12;

/// One elliptical slice sampling update for a zero-mean Gaussian prior.
/// `prior_draw` fills its buffer with a prior sample; `current_ll` must be
/// the finite log-likelihood at `current`.
pub fn ess_step<R: Rng + ?Sized>(
    rng: &mut R,
    current: &[f64],
    current_ll: f64,
    mut prior_draw: impl FnMut(&mut R, &mut [f64]),
    mut log_lik: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<EssOutcome> {
    if current_ll.is_nan() {
        return Err(Error::numeric("log-likelihood is NaN at the current state"));
    }
    let mut nu = vec![0.0; current.len()];
    prior_draw(rng, &mut nu);
    let threshold = current_ll + rng::uniform_open0(rng).ln();
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut theta = two_pi * rng::uniform(rng);
    let (mut lo, mut hi) = (theta - two_pi, theta);
    let mut prop = vec![0.0; current.len()];
    let mut evaluations = 0;
    loop {
        let (c, s) = (theta.cos(), theta.sin());
        for ((p, &x), &v) in prop.iter_mut().zip(current).zip(&nu) {
            *p = x * c + v * s;
        }
        let ll = log_lik(&prop)?;
        evaluations += 1;
        if ll.is_nan() {
            return Err(Error::numeric("log-likelihood returned NaN"));
        }
        if ll > threshold {
            return Ok(EssOutcome {
                state: prop,
                log_lik: ll,
                evaluations,
            });
        }
        if theta < 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        if hi - lo < MIN_BRACKET {
            return Ok(EssOutcome {
                state: current.to_vec(),
                log_lik: current_ll,
                evaluations,
            });
        }
        theta = lo + (hi - lo) * rng::uniform(rng);
    }
}

/// Standard normal prior draw for [`ess_step`].
pub fn standard_normal_draw<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    rng::fill_normal(rng, out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Refuse grids with more cells than this.
    pub max_cells: usize,
    /// Prior draws tried for a starting `X` with finite likelihood.
    pub init_attempts: usize,
    /// When false the hyperparameters stay at their prior medians.
    pub sample_hypers: bool,
    /// Keep every retained `X` (memory `N × retained`).
    pub keep_samples: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            iterations: 2_000,
            burn_in: 1_000,
            max_cells: 1 << 16,
            init_attempts: 1_000,
            sample_hypers: true,
            keep_samples: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpPosterior {
    pub grid: CharGrid,
    /// Posterior mean of `log f` per cell.
    pub mean_log_f: Vec<f64>,
    /// Posterior standard deviation of `log f` per cell.
    pub sd_log_f: Vec<f64>,
    pub retained: usize,
    pub hyper_samples: Vec<RqHypers>,
    /// Retained `X` draws when requested.
    pub x_samples: Vec<Vec<f64>>,
    /// Log-likelihood after each full sweep.
    pub log_lik_trace: Vec<f64>,
    pub x_evaluations: Vec<usize>,
    pub hyper_evaluations: Vec<usize>,
}

impl GpPosterior {
    /// Posterior-mean log map at the cell nearest to `x` after clamping.
    pub fn map_lookup(&self, x: &[f64]) -> f64 {
        self.mean_log_f[self.grid.cell_index(x)]
    }

    /// `mean ± 2 sd` per cell.
    pub fn credible_band(&self) -> Vec<(f64, f64)> {
        self.mean_log_f
            .iter()
            .zip(&self.sd_log_f)
            .map(|(m, s)| (m - 2.0 * s, m + 2.0 * s))
            .collect()
    }

    pub fn hyper_summaries(&self) -> Vec<HyperSummary> {
        let d = self.grid.dims();
        let mut names = vec![String::from("amplitude")];
        names.extend((0..d).map(|i| format!("length_{i}")));
        names.extend((0..d).map(|i| format!("shape_{i}")));
        let vecs: Vec<Vec<f64>> = self.hyper_samples.iter().map(RqHypers::to_vec).collect();
        names
            .into_iter()
            .enumerate()
            .map(|(j, name)| {
                let col: Vec<f64> = vecs.iter().map(|v| v[j]).collect();
                HyperSummary {
                    name,
                    mean: crate::inference::mean(&col),
                    sd: crate::inference::variance(&col).sqrt(),
                }
            })
            .collect()
    }
}

/// Alternate ESS on `X | hypers` and on standardised log-hypers `| X`.
/// `log_lik` receives `log f` on the grid.
pub fn blocked_gibbs(
    grid: &CharGrid,
    priors: &HyperPriors,
    config: &GibbsConfig,
    seed: u64,
    mut log_lik: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<GpPosterior> {
    let n = grid.len();
    if n > config.max_cells {
        let shrink = Real::powf(config.max_cells as f64 / n as f64, 1.0 / grid.dims() as f64);
        let suggested: Vec<usize> = grid.sizes().iter().map(|&m| ((m as f64 * shrink).floor() as usize).max(1)).collect();
        return Err(Error::Resource(format!(
            "grid has {n} cells, limit {}; try sizes {suggested:?}",
            config.max_cells
        )));
    }
    if config.burn_in > config.iterations {
        return Err(Error::invalid("burn-in exceeds the iteration count"));
    }
    if priors.dims() != grid.dims() || priors.priors.len() != 1 + 2 * grid.dims() {
        return Err(Error::invalid("hyperparameter priors do not match the grid"));
    }
    let mut rng = rng::seeded(seed, rng::stream::GP);
    let mut z = vec![0.0; priors.priors.len()];
    let mut factors = kron_factorize(grid, &priors.hypers(&z)?)?;

    let eval = |x: &[f64], f: &KronFactors, log_lik: &mut dyn FnMut(&[f64]) -> Result<f64>| -> Result<f64> {
        let lf = kron_matvec(f, x)?;
        Ok(log_lik(&lf).unwrap_or(f64::NEG_INFINITY))
    };

    let mut x = vec![0.0; n];
    let mut ll = eval(&x, &factors, &mut log_lik)?;
    let mut attempts = 0;
    while !ll.is_finite() {
        if ll.is_nan() {
            return Err(Error::numeric("log-likelihood returned NaN"));
        }
        if attempts == config.init_attempts {
            return Err(Error::Initialization(format!(
                "log-likelihood is -inf at {attempts} prior draws"
            )));
        }
        rng::fill_normal(&mut rng, &mut x);
        ll = eval(&x, &factors, &mut log_lik)?;
        attempts += 1;
    }

    let retained = config.iterations - config.burn_in;
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut post = GpPosterior {
        grid: grid.clone(),
        mean_log_f: Vec::new(),
        sd_log_f: Vec::new(),
        retained,
        hyper_samples: Vec::with_capacity(retained),
        x_samples: Vec::new(),
        log_lik_trace: Vec::with_capacity(config.iterations),
        x_evaluations: Vec::with_capacity(config.iterations),
        hyper_evaluations: Vec::with_capacity(config.iterations),
    };

    for it in 0..config.iterations {
        let out = ess_step(&mut rng, &x, ll, standard_normal_draw::<SptRng>, |cand: &[f64]| {
            eval(cand, &factors, &mut log_lik)
        })?;
        x = out.state;
        ll = out.log_lik;
        post.x_evaluations.push(out.evaluations);

        if config.sample_hypers {
            let out = ess_step(&mut rng, &z, ll, standard_normal_draw::<SptRng>, |cand: &[f64]| {
                let h = match priors.hypers(cand) {
                    Ok(h) => h,
                    Err(_) => return Ok(f64::NEG_INFINITY),
                };
                let f = match kron_factorize(grid, &h) {
                    Ok(f) => f,
                    Err(_) => return Ok(f64::NEG_INFINITY),
                };
                eval(&x, &f, &mut log_lik)
            })?;
            if out.state != z {
                z = out.state;
                factors = kron_factorize(grid, &priors.hypers(&z)?)?;
            }
            ll = out.log_lik;
            post.hyper_evaluations.push(out.evaluations);
        } else {
            post.hyper_evaluations.push(0);
        }
        post.log_lik_trace.push(ll);

        if it >= config.burn_in {
            let lf = kron_matvec(&factors, &x)?;
            for (j, v) in lf.iter().enumerate() {
                sum[j] += v;
                sum_sq[j] += v * v;
            }
            post.hyper_samples.push(priors.hypers(&z)?);
            if config.keep_samples {
                post.x_samples.push(x.clone());
            }
        }
    }

    let r = retained.max(1) as f64;
    post.mean_log_f = sum.iter().map(|s| s / r).collect();
    post.sd_log_f = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, q)| {
            let m = s / r;
            (q / r - m * m).max(0.0).sqrt()
        })
        .collect();
    Ok(post)
}

/// A coordinate of the characteristic space used by a learned map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Feature {
    /// `log μ_i` among the day's members.
    LogMarketWeight,
    /// A named column of the characteristic panel.
    Characteristic(String),
}

impl Feature {
    pub fn name(&self) -> String {
        match self {
            Feature::LogMarketWeight => String::from("log_market_weight"),
            Feature::Characteristic(c) => c.clone(),
        }
    }
}

/// Feature vectors of every member asset on one day.
pub fn day_features(ctx: &DayContext<'_>, features: &[Feature]) -> Result<Vec<Option<Vec<f64>>>> {
    let members = ctx.members();
    let needs_mu = features.contains(&Feature::LogMarketWeight);
    let mu = if needs_mu { Some(ctx.market_weights()?) } else { None };
    let cols: Vec<Option<usize>> = features
        .iter()
        .map(|f| match f {
            Feature::LogMarketWeight => Ok(None),
            Feature::Characteristic(c) => ctx
                .char_index(c)
                .map(Some)
                .ok_or_else(|| Error::invalid(format!("unknown characteristic `{c}`"))),
        })
        .collect::<Result<_>>()?;
    Ok((0..ctx.n())
        .map(|i| {
            members[i].then(|| {
                cols.iter()
                    .map(|c| match c {
                        None => mu.as_ref().map_or(f64::NAN, |m| m[i].ln()),
                        Some(c) => ctx.chars(i)[*c],
                    })
                    .collect()
            })
        })
        .collect())
}

/// Strategy that weights each member by `exp(log f)` at its nearest cell.
pub struct MapStrategy<'a> {
    pub posterior: &'a GpPosterior,
    pub features: &'a [Feature],
}

impl Strategy for MapStrategy<'_> {
    fn target(&mut self, ctx: &DayContext<'_>) -> Result<Vec<f64>> {
        let feats = day_features(ctx, self.features)?;
        let lw: Vec<f64> = feats
            .iter()
            .map(|f| f.as_ref().map_or(f64::NEG_INFINITY, |x| self.posterior.map_lookup(x)))
            .collect();
        Ok(masked_softmax(&lw, ctx.members())?.into_vec())
    }
}

/// Strategy over precomputed cell indices (`usize::MAX` for non-members).
struct CellStrategy<'a> {
    n: usize,
    cells: &'a [usize],
    log_f: &'a [f64],
}

impl Strategy for CellStrategy<'_> {
    fn target(&mut self, ctx: &DayContext<'_>) -> Result<Vec<f64>> {
        let row = &self.cells[ctx.day() * self.n..(ctx.day() + 1) * self.n];
        let lw: Vec<f64> = row
            .iter()
            .map(|&c| if c == usize::MAX { f64::NEG_INFINITY } else { self.log_f[c] })
            .collect();
        Ok(masked_softmax(&lw, ctx.members())?.into_vec())
    }
}

/// Learns a posterior log investment map from a training dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MapLearner {
    pub features: Vec<Feature>,
    /// Knots per feature; empty selects 64 for one feature, 32 per feature
    /// otherwise.
    pub sizes: Vec<usize>,
    pub likelihood: GammaLikelihood,
    pub backtest: BacktestConfig,
    pub gibbs: GibbsConfig,
}

impl MapLearner {
    pub fn new(features: Vec<Feature>, likelihood: GammaLikelihood) -> Self {
        MapLearner {
            features,
            sizes: Vec::new(),
            likelihood,
            backtest: BacktestConfig::default(),
            gibbs: GibbsConfig::default(),
        }
    }

    pub fn grid_sizes(&self) -> Vec<usize> {
        if !self.sizes.is_empty() {
            return self.sizes.clone();
        }
        let m = if self.features.len() == 1 { 64 } else { 32 };
        vec![m; self.features.len()]
    }

    /// Feature values for every (day, member) pair, and a grid spanning
    /// their observed range.
    pub fn observe(&self, data: &Dataset) -> Result<(CharGrid, Vec<Option<Vec<f64>>>)> {
        let d = self.features.len();
        if d == 0 {
            return Err(Error::invalid("map learner needs at least one feature"));
        }
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut all = Vec::with_capacity(data.days() * data.n());
        for_each_day(data, |ctx| {
            all.extend(day_features(ctx, &self.features)?);
            Ok(())
        })?;
        for x in all.iter().flatten() {
            for k in 0..d {
                if !x[k].is_finite() {
                    return Err(Error::domain(format!("non-finite value of feature `{}`", self.features[k].name())));
                }
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        if lo[0] == f64::INFINITY {
            return Err(Error::invalid("no member observations to learn from"));
        }
        let bounds: Vec<(f64, f64)> = lo.into_iter().zip(hi).collect();
        let grid = CharGrid::uniform(&bounds, &self.grid_sizes())?;
        Ok((grid, all))
    }

    pub fn learn(&self, data: &Dataset, seed: u64) -> Result<GpPosterior> {
        let (grid, feats) = self.observe(data)?;
        let n = data.n();
        let cells: Vec<usize> = feats
            .iter()
            .map(|f| f.as_ref().map_or(usize::MAX, |x| grid.cell_index(x)))
            .collect();
        let evaluator = PerformanceEvaluator::new(data, self.backtest, PerformanceKind::ExcessReturnVsEwp)?;
        let priors = HyperPriors::for_grid(&grid);
        let lik = self.likelihood;
        blocked_gibbs(&grid, &priors, &self.gibbs, seed, |log_f| {
            let mut s = CellStrategy {
                n,
                cells: &cells,
                log_f,
            };
            Ok(lik.log_density(evaluator.evaluate(&mut s)?))
        })
    }
}

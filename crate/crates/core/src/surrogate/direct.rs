//! Locally biased DIRECT (dividing rectangles) minimizer.
//!
//! The search box is mapped onto the unit hypercube. Each rectangle keeps
//! its center, a per-dimension trisection level (side `3^-level`) and the
//! objective value at its center. Per iteration, the rectangles on the
//! lower-right convex hull of (size, value) that pass the epsilon test are
//! trisected along all of their longest sides. The local bias comes from
//! measuring size by the longest side and dividing at most one rectangle
//! per size class.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectOptions {
    pub max_evals: usize,
    /// Stop when an iteration lowers the best value by less than this
    /// relative amount.
    pub ftol_rel: f64,
    /// Required relative improvement in the potential-optimality test.
    pub eps: f64,
}

impl Default for DirectOptions {
    fn default() -> Self {
        DirectOptions {
            max_evals: 2000,
            ftol_rel: 1e-16,
            eps: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEvaluations,
    RelativeTolerance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub stop: StopReason,
}

struct Rect {
    center: Vec<f64>,
    levels: Vec<u32>,
    f: f64,
}

impl Rect {
    fn min_level(&self) -> u32 {
        self.levels.iter().copied().min().unwrap_or(0)
    }
}

fn size_of_level(level: u32) -> f64 {
    0.5 * 3f64.powi(-(level as i32))
}

pub(crate) fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::config("optimizer needs at least one dimension"));
    }
    if bounds
        .iter()
        .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
    {
        return Err(Error::config(
            "optimizer bounds must be finite with lower < upper",
        ));
    }
    Ok(())
}

struct Evaluator<'a, F> {
    f: F,
    bounds: &'a [(f64, f64)],
    evals: usize,
    max_evals: usize,
    best_x: Vec<f64>,
    best_f: f64,
    scratch: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Evaluator<'_, F> {
    fn exhausted(&self) -> bool {
        self.evals >= self.max_evals
    }

    /// Objective at a unit-cube point; non-finite values become +inf.
    fn eval(&mut self, unit: &[f64]) -> f64 {
        for ((x, u), (lo, hi)) in self.scratch.iter_mut().zip(unit).zip(self.bounds) {
            *x = lo + u * (hi - lo);
        }
        self.evals += 1;
        let v = (self.f)(&self.scratch);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if self.best_x.is_empty() || v < self.best_f {
            self.best_f = v;
            self.best_x = self.scratch.clone();
        }
        v
    }
}

/// Minimizes `f` over the box `bounds`.
pub fn direct_l<F>(f: F, bounds: &[(f64, f64)], options: &DirectOptions) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> f64,
{
    check_bounds(bounds)?;
    if options.max_evals == 0 {
        return Err(Error::config("evaluation budget must be at least 1"));
    }
    let dim = bounds.len();
    let mut ev = Evaluator {
        f,
        bounds,
        evals: 0,
        max_evals: options.max_evals,
        best_x: Vec::new(),
        best_f: f64::INFINITY,
        scratch: vec![0.0; dim],
    };
    let center = vec![0.5; dim];
    let f0 = ev.eval(&center);
    let mut rects = vec![Rect {
        center,
        levels: vec![0; dim],
        f: f0,
    }];

    let mut iterations = 0;
    let mut stop = StopReason::MaxEvaluations;
    'outer: while !ev.exhausted() {
        iterations += 1;
        let before = ev.best_f;
        for idx in potentially_optimal(&rects, options.eps) {
            if !divide(&mut rects, idx, &mut ev) {
                break 'outer;
            }
        }
        let after = ev.best_f;
        if after < before
            && before.is_finite()
            && (before - after).abs() < options.ftol_rel * 0.5 * (before.abs() + after.abs())
        {
            stop = StopReason::RelativeTolerance;
            break;
        }
    }

    Ok(OptimResult {
        x: ev.best_x,
        f: ev.best_f,
        evaluations: ev.evals,
        iterations,
        stop,
    })
}

/// Indices of rectangles to divide this iteration, largest first.
fn potentially_optimal(rects: &[Rect], eps: f64) -> Vec<usize> {
    // best rectangle per size class, keyed by the smallest trisection level
    let mut classes: Vec<(u32, usize)> = Vec::new();
    for (i, r) in rects.iter().enumerate() {
        let level = r.min_level();
        match classes.iter_mut().find(|(l, _)| *l == level) {
            Some((_, best)) => {
                if r.f < rects[*best].f {
                    *best = i;
                }
            }
            None => classes.push((level, i)),
        }
    }
    // ascending size = descending level
    classes.sort_by_key(|c| std::cmp::Reverse(c.0));
    let points: Vec<(f64, f64, usize)> = classes
        .iter()
        .map(|&(level, i)| (size_of_level(level), rects[i].f, i))
        .collect();

    let finite: Vec<&(f64, f64, usize)> = points.iter().filter(|p| p.1.is_finite()).collect();
    if finite.is_empty() {
        return vec![points.last().expect("at least one rectangle").2];
    }
    let fmin = finite.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    // start the hull at the largest rectangle attaining fmin
    let start = finite
        .iter()
        .rposition(|p| p.1 == fmin)
        .expect("fmin attained");

    let mut hull: Vec<(f64, f64, usize)> = Vec::new();
    for &&p in &finite[start..] {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // drop b unless it lies strictly below the segment a-p
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }

    let threshold = fmin - eps * fmin.abs();
    let mut chosen = Vec::with_capacity(hull.len());
    for (j, &(d, fv, idx)) in hull.iter().enumerate() {
        let pass = match hull.get(j + 1) {
            None => true,
            Some(&(d2, f2, _)) => {
                let k = (f2 - fv) / (d2 - d);
                fv - k * d <= threshold
            }
        };
        if pass {
            chosen.push(idx);
        }
    }
    // any infinite-valued size class larger than the hull still needs splitting
    if let Some(&(d, f, idx)) = points.last() {
        if !f.is_finite() && hull.last().is_none_or(|h| h.0 < d) {
            chosen.push(idx);
        }
    }
    chosen.reverse();
    chosen
}

/// Trisects rectangle `idx` along all of its longest sides. Returns false
/// when the budget ran out before the division finished.
fn divide<F: FnMut(&[f64]) -> f64>(
    rects: &mut Vec<Rect>,
    idx: usize,
    ev: &mut Evaluator<'_, F>,
) -> bool {
    let level = rects[idx].min_level();
    let delta = 3f64.powi(-(level as i32)) / 3.0;
    let longest: Vec<usize> = (0..rects[idx].levels.len())
        .filter(|&i| rects[idx].levels[i] == level)
        .collect();

    let mut samples = Vec::with_capacity(longest.len());
    for &i in &longest {
        let mut lo = rects[idx].center.clone();
        lo[i] -= delta;
        let mut hi = rects[idx].center.clone();
        hi[i] += delta;
        if ev.exhausted() {
            return false;
        }
        let f_lo = ev.eval(&lo);
        if ev.exhausted() {
            return false;
        }
        let f_hi = ev.eval(&hi);
        samples.push((i, lo, f_lo, hi, f_hi));
    }
    samples.sort_by(|a, b| a.2.min(a.4).total_cmp(&b.2.min(b.4)).then(a.0.cmp(&b.0)));

    let mut levels = rects[idx].levels.clone();
    for (i, lo, f_lo, hi, f_hi) in samples {
        levels[i] += 1;
        rects.push(Rect {
            center: lo,
            levels: levels.clone(),
            f: f_lo,
        });
        rects.push(Rect {
            center: hi,
            levels: levels.clone(),
            f: f_hi,
        });
    }
    rects[idx].levels = levels;
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGoldenOptions {
    /// Grid points per dimension.
    pub grid_points: usize,
    /// Successively halved local grids around the incumbent.
    pub zoom_rounds: usize,
    /// Points per dimension of each local grid.
    pub zoom_points: usize,
    /// Coordinate sweeps of golden-section refinement.
    pub rounds: usize,
    /// Golden-section iterations per line search.
    pub line_iterations: usize,
}

impl Default for GridGoldenOptions {
    /// About 1900 evaluations in two dimensions.
    fn default() -> Self {
        GridGoldenOptions {
            grid_points: 39,
            zoom_rounds: 4,
            zoom_points: 9,
            rounds: 1,
            line_iterations: 30,
        }
    }
}

/// Evaluates a regular grid of `m` points per dimension spanning `lo..=hi`
/// and returns the best point when it beats `best`.
fn scan_grid<F: FnMut(&[f64]) -> f64>(
    objective: &mut F,
    lo: &[f64],
    hi: &[f64],
    m: usize,
    best: &mut Option<(Vec<f64>, f64)>,
) -> Result<()> {
    let dim = lo.len();
    let total = m
        .checked_pow(dim as u32)
        .ok_or_else(|| Error::config("grid too large"))?;
    let mut x = vec![0.0; dim];
    for flat in 0..total {
        let mut rest = flat;
        for (d, xd) in x.iter_mut().enumerate() {
            *xd = lo[d] + (rest % m) as f64 * (hi[d] - lo[d]) / (m - 1) as f64;
            rest /= m;
        }
        let v = objective(&x);
        if best.as_ref().is_none_or(|(_, bf)| v < *bf) {
            *best = Some((x.clone(), v));
        }
    }
    Ok(())
}

/// Exhaustive grid search, then local grids of halving width around the
/// best point (which follow ridges that defeat coordinate search), then
/// coordinate-wise golden-section refinement.
pub fn grid_golden<F>(
    mut f: F,
    bounds: &[(f64, f64)],
    options: &GridGoldenOptions,
) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> f64,
{
    check_bounds(bounds)?;
    if options.grid_points < 2 || (options.zoom_rounds > 0 && options.zoom_points < 2) {
        return Err(Error::config(
            "grids need at least two points per dimension",
        ));
    }
    let dim = bounds.len();
    let m = options.grid_points;
    let mut evals = 0usize;
    let mut objective = |x: &[f64]| {
        evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let step: Vec<f64> = bounds
        .iter()
        .map(|(lo, hi)| (hi - lo) / (m - 1) as f64)
        .collect();
    let mut best = None;
    scan_grid(&mut objective, &lo, &hi, m, &mut best)?;

    let mut half = step.clone();
    for _ in 0..options.zoom_rounds {
        let centre = best
            .as_ref()
            .expect("grid has at least one point")
            .0
            .clone();
        let zlo: Vec<f64> = (0..dim).map(|d| (centre[d] - half[d]).max(lo[d])).collect();
        let zhi: Vec<f64> = (0..dim).map(|d| (centre[d] + half[d]).min(hi[d])).collect();
        scan_grid(&mut objective, &zlo, &zhi, options.zoom_points, &mut best)?;
        for h in &mut half {
            *h /= 2.0;
        }
    }
    let (mut best_x, mut best_f) = best.expect("grid has at least one point");

    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut radius = half;
    for _ in 0..options.rounds {
        for d in 0..dim {
            let mut a = (best_x[d] - radius[d]).max(bounds[d].0);
            let mut b = (best_x[d] + radius[d]).min(bounds[d].1);
            let mut probe = best_x.clone();
            let mut at = |t: f64, probe: &mut Vec<f64>| {
                probe[d] = t;
                objective(probe)
            };
            let mut c = b - INV_PHI * (b - a);
            let mut e = a + INV_PHI * (b - a);
            let mut fc = at(c, &mut probe);
            let mut fe = at(e, &mut probe);
            for _ in 0..options.line_iterations {
                if fc < fe {
                    b = e;
                    e = c;
                    fe = fc;
                    c = b - INV_PHI * (b - a);
                    fc = at(c, &mut probe);
                } else {
                    a = c;
                    c = e;
                    fc = fe;
                    e = a + INV_PHI * (b - a);
                    fe = at(e, &mut probe);
                }
            }
            let (t, v) = if fc < fe { (c, fc) } else { (e, fe) };
            if v < best_f {
                best_f = v;
                best_x[d] = t;
            }
        }
        for r in &mut radius {
            *r /= 2.0;
        }
    }

    Ok(OptimResult {
        x: best_x,
        f: best_f,
        evaluations: evals,
        iterations: options.zoom_rounds + options.rounds,
        stop: StopReason::MaxEvaluations,
    })
}

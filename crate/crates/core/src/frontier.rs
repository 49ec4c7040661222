//! Compute-optimal frontier analysis.
//!
//! Pipeline: record-breaking points per curve, a bounded monotone sigmoid
//! per curve in `log2(compute)`, the upper envelope of those sigmoids over a
//! log-spaced budget grid, the `n` attaining it, a running average of
//! `log2 n*`, and a sigmoid through that series.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BIN_WIDTH: f64 = 0.005;
pub const DEFAULT_GRID_SIZE: usize = 64;
pub const DEFAULT_WINDOW: usize = 5;

pub const SLOPE_MAX: f64 = 20.0;
/// Midpoint search extends this far (in log2 units) past the data.
pub const MIDPOINT_MARGIN: f64 = 5.0;
pub const MULTI_STARTS: usize = 16;
/// Below this many points the fit degrades to a step.
pub const MIN_CONFIDENT_POINTS: usize = 4;

/// Guards `floor(reward / width)` against representation error.
const BIN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardPoint {
    pub compute: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordBreakingPoint {
    pub compute: f64,
    pub reward: f64,
    pub bin_index: i64,
}

pub fn reward_bin(reward: f64, bin_width: f64) -> i64 {
    (reward / bin_width + BIN_EPS).floor() as i64
}

/// Keeps each point whose discretized reward enters a bin above every
/// earlier point. The first point is always kept. When several points share
/// a compute value the highest bin among them stands in for that compute.
pub fn extract_record_breaking(
    points: &[RewardPoint],
    bin_width: f64,
) -> Result<Vec<RecordBreakingPoint>> {
    if !(bin_width > 0.0) {
        return Err(Error::config("bin_width", "must be positive"));
    }
    if let Some(i) = (1..points.len()).find(|&i| points[i].compute < points[i - 1].compute) {
        return Err(Error::Unsorted(i));
    }
    let mut out: Vec<RecordBreakingPoint> = Vec::new();
    for p in points {
        let bin = reward_bin(p.reward, bin_width);
        match out.last_mut() {
            None => out.push(RecordBreakingPoint {
                compute: p.compute,
                reward: p.reward,
                bin_index: bin,
            }),
            Some(last) if bin > last.bin_index => {
                let rec = RecordBreakingPoint {
                    compute: p.compute,
                    reward: p.reward,
                    bin_index: bin,
                };
                if p.compute == last.compute {
                    *last = rec;
                } else {
                    out.push(rec);
                }
            }
            Some(_) => {}
        }
    }
    Ok(out)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `lo + (hi - lo) * sigmoid(k * (log2 C - c0))`, evaluated no
/// further right than the largest observed compute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidFit {
    pub lo: f64,
    pub hi: f64,
    pub k: f64,
    pub c0: f64,
    pub rmse: f64,
    pub domain: [f64; 2],
    pub points: usize,
    pub low_confidence: bool,
}

impl SigmoidFit {
    pub fn constant(value: f64, domain: [f64; 2], points: usize) -> Self {
        Self {
            lo: value,
            hi: value,
            k: 0.0,
            c0: domain[0].max(f64::MIN_POSITIVE).log2(),
            rmse: 0.0,
            domain,
            points,
            low_confidence: true,
        }
    }

    pub fn predict_log2(&self, x: f64) -> f64 {
        let x = x.min(self.domain[1].log2());
        self.lo + (self.hi - self.lo) * sigmoid(self.k * (x - self.c0))
    }

    pub fn predict(&self, compute: f64) -> f64 {
        self.predict_log2(compute.min(self.domain[1]).log2())
    }
}

/// Best `(lo, hi)` for fixed sigmoid activations `s` under
/// `floor <= lo <= hi <= ceil`. Returns `(lo, hi, sse)`.
fn best_levels(s: &[f64], y: &[f64], floor: f64, ceil: f64) -> (f64, f64, f64) {
    let sse = |lo: f64, hi: f64| -> f64 {
        s.iter()
            .zip(y)
            .map(|(&si, &yi)| {
                let r = yi - (lo + (hi - lo) * si);
                r * r
            })
            .sum()
    };
    let (mut saa, mut sab, mut sbb, mut say, mut sby) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&si, &yi) in s.iter().zip(y) {
        let a = 1.0 - si;
        saa += a * a;
        sab += a * si;
        sbb += si * si;
        say += a * yi;
        sby += si * yi;
    }
    let mut candidates: Vec<(f64, f64)> = Vec::with_capacity(4);
    let det = saa * sbb - sab * sab;
    if det > 1e-12 * (saa * sbb).max(1e-300) {
        let lo = (say * sbb - sby * sab) / det;
        let hi = (sby * saa - say * sab) / det;
        if floor <= lo && lo <= hi && hi <= ceil {
            let e = sse(lo, hi);
            return (lo, hi, e);
        }
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let c = mean.clamp(floor, ceil);
    candidates.push((c, c));
    if sbb > 0.0 {
        let hi = ((sby - floor * sab) / sbb).clamp(floor, ceil);
        candidates.push((floor, hi));
    }
    if saa > 0.0 {
        let lo = ((say - ceil * sab) / saa).clamp(floor, ceil);
        candidates.push((lo, ceil));
    }
    candidates
        .into_iter()
        .map(|(lo, hi)| (lo, hi, sse(lo, hi)))
        .fold((c, c, f64::INFINITY), |best, cand| {
            if cand.2 < best.2 {
                cand
            } else {
                best
            }
        })
}

struct Problem1d<'a> {
    x: &'a [f64],
    y: &'a [f64],
    floor: f64,
    ceil: f64,
    scratch: std::cell::RefCell<Vec<f64>>,
}

impl Problem1d<'_> {
    fn eval(&self, slope: f64, midpoint: f64) -> (f64, f64, f64) {
        let mut s = self.scratch.borrow_mut();
        s.clear();
        s.extend(self.x.iter().map(|&xi| sigmoid(slope * (xi - midpoint))));
        best_levels(&s, self.y, self.floor, self.ceil)
    }
}

/// Box-constrained Nelder-Mead in two dimensions; trial points are
/// projected onto the box.
fn nelder_mead_2d(
    f: &dyn Fn([f64; 2]) -> f64,
    start: [f64; 2],
    step: [f64; 2],
    lower: [f64; 2],
    upper: [f64; 2],
) -> ([f64; 2], f64) {
    let project = |p: [f64; 2]| [p[0].clamp(lower[0], upper[0]), p[1].clamp(lower[1], upper[1])];
    let mut simplex = [
        project(start),
        project([start[0] + step[0], start[1]]),
        project([start[0], start[1] + step[1]]),
    ];
    // A projected vertex can coincide with the start; flip it inward.
    if simplex[1] == simplex[0] {
        simplex[1] = project([start[0] - step[0], start[1]]);
    }
    if simplex[2] == simplex[0] {
        simplex[2] = project([start[0], start[1] - step[1]]);
    }
    let mut values = simplex.map(f);

    for _ in 0..400 {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);

        let spread = values[2] - values[0];
        let size = simplex[1..]
            .iter()
            .map(|v| (v[0] - simplex[0][0]).abs().max((v[1] - simplex[0][1]).abs()))
            .fold(0.0, f64::max);
        if size < 1e-10 || spread.abs() <= 1e-16 * values[0].abs().max(1e-30) && size < 1e-6 {
            break;
        }

        let centroid = [
            (simplex[0][0] + simplex[1][0]) / 2.0,
            (simplex[0][1] + simplex[1][1]) / 2.0,
        ];
        let along = |t: f64| {
            project([
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ])
        };

        let reflected = along(-1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = if fr < values[2] { along(-0.5) } else { along(0.5) };
            let fc = f(contracted);
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for i in 1..3 {
                    simplex[i] = project([
                        (simplex[0][0] + simplex[i][0]) / 2.0,
                        (simplex[0][1] + simplex[i][1]) / 2.0,
                    ]);
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best], values[best])
}

/// Least-squares monotone sigmoid through `(compute, value)` pairs with
/// output bounds `[floor, ceil]`, slope in `[0, 20]` and midpoint within
/// five log2 units of the data. Fewer than four points give a steepest-slope
/// step fit marked `low_confidence`.
pub fn fit_sigmoid(points: &[(f64, f64)], floor: f64, ceil: f64) -> Result<SigmoidFit> {
    if points.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: points.len(),
        });
    }
    if points.iter().any(|&(c, _)| !(c > 0.0)) {
        return Err(Error::config("compute", "fit points need positive compute"));
    }
    if !(floor <= ceil) {
        return Err(Error::config("bounds", "floor must not exceed ceil"));
    }
    let x: Vec<f64> = points.iter().map(|&(c, _)| c.log2()).collect();
    let y: Vec<f64> = points.iter().map(|&(_, v)| v).collect();
    let x_min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let c_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let problem = Problem1d {
        x: &x,
        y: &y,
        floor,
        ceil,
        scratch: std::cell::RefCell::new(Vec::with_capacity(x.len())),
    };
    let lower = [0.0, x_min - MIDPOINT_MARGIN];
    let upper = [SLOPE_MAX, x_max + MIDPOINT_MARGIN];

    let (slope, midpoint, sse) = if points.len() < MIN_CONFIDENT_POINTS {
        let mut xs = x.clone();
        xs.sort_by(f64::total_cmp);
        let mut cands = vec![lower[1], upper[1]];
        cands.extend(xs.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        cands
            .into_iter()
            .map(|m| (SLOPE_MAX, m, problem.eval(SLOPE_MAX, m).2))
            .fold((SLOPE_MAX, lower[1], f64::INFINITY), |b, c| if c.2 < b.2 { c } else { b })
    } else {
        let objective = |p: [f64; 2]| problem.eval(p[0], p[1]).2;
        let span = (x_max - x_min).max(1e-6);
        let slopes = [0.25, 1.0, 3.0, 10.0].map(|k| (k * 8.0 / span).min(SLOPE_MAX));
        let mids = [0.15, 0.4, 0.6, 0.85].map(|q| x_min + q * span);
        let mut best = ([0.0, 0.0], f64::INFINITY);
        for &k0 in &slopes {
            for &m0 in &mids {
                let step = [0.5 * k0.max(0.05), 0.1 * span.max(1.0)];
                let (p, v) = nelder_mead_2d(&objective, [k0, m0], step, lower, upper);
                if v < best.1 {
                    best = (p, v);
                }
            }
        }
        (best.0[0], best.0[1], best.1)
    };
    let (lo, hi, sse_final) = problem.eval(slope, midpoint);
    debug_assert!((sse_final - sse).abs() <= 1e-9 * sse.max(1.0));
    Ok(SigmoidFit {
        lo,
        hi,
        k: slope,
        c0: midpoint,
        rmse: (sse_final / points.len() as f64).sqrt(),
        domain: [c_min, c_max],
        points: points.len(),
        low_confidence: points.len() < MIN_CONFIDENT_POINTS,
    })
}

/// Reward-vs-compute fit over record-breaking points, bounded to `[0, 1]`.
pub fn fit_monotone_sigmoid(points: &[RecordBreakingPoint]) -> Result<SigmoidFit> {
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.compute, p.reward)).collect();
    fit_sigmoid(&pairs, 0.0, 1.0)
}

/// `count` budgets spaced evenly in log2 between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 || hi <= lo {
        return vec![hi.max(lo)];
    }
    let (a, b) = (lo.log2(), hi.log2());
    (0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp2()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierCurve {
    pub grid: Vec<f64>,
    pub envelope_reward: Vec<f64>,
    pub frontier_n: Vec<usize>,
    pub smoothed_log2_nstar: Vec<f64>,
}

/// Upper envelope of `fits` over `grid`. `frontier_n[j]` is the `n` whose
/// best value up to `grid[j]` is highest; ties go to the smaller `n`.
/// `smoothed_log2_nstar` starts as the raw `log2 frontier_n`; see
/// [`smooth_nstar`].
pub fn frontier_envelope(fits: &BTreeMap<usize, SigmoidFit>, grid: &[f64]) -> Result<FrontierCurve> {
    let (envelope, frontier_n) = envelope_by_key(fits, grid)?;
    let smoothed = frontier_n.iter().map(|&n| (n as f64).log2()).collect();
    Ok(FrontierCurve {
        grid: grid.to_vec(),
        envelope_reward: envelope,
        frontier_n,
        smoothed_log2_nstar: smoothed,
    })
}

/// Envelope over fits with arbitrary ordered keys, returning the envelope
/// value and the attaining key per budget. Ties go to the smallest key. A
/// fit only competes from the start of its observed domain onward.
pub fn envelope_by_key<K: Ord + Clone>(
    fits: &BTreeMap<K, SigmoidFit>,
    grid: &[f64],
) -> Result<(Vec<f64>, Vec<K>)> {
    if fits.is_empty() {
        return Err(Error::Empty("fits"));
    }
    if grid.is_empty() {
        return Err(Error::Empty("grid"));
    }
    let mut running: Vec<f64> = vec![f64::NEG_INFINITY; fits.len()];
    let mut envelope = Vec::with_capacity(grid.len());
    let mut keys = Vec::with_capacity(grid.len());
    for &c in grid {
        let mut best: Option<(&K, f64)> = None;
        for (slot, (key, fit)) in running.iter_mut().zip(fits) {
            if c < fit.domain[0] * (1.0 - 1e-12) {
                continue;
            }
            *slot = slot.max(fit.predict(c));
            if best.is_none_or(|(_, v)| *slot > v) {
                best = Some((key, *slot));
            }
        }
        let Some((key, v)) = best else {
            return Err(Error::config("grid", format!("budget {c} precedes every fitted curve")));
        };
        envelope.push(v);
        keys.push(key.clone());
    }
    Ok((envelope, keys))
}

/// Centered moving average with windows truncated at the edges.
pub fn moving_average(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::config("window", format!("{window} is not a positive odd number")));
    }
    let half = window / 2;
    Ok((0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect())
}

/// Running average of `log2 frontier_n` along the grid.
pub fn smooth_nstar(frontier: &FrontierCurve, window: usize) -> Result<Vec<f64>> {
    let raw: Vec<f64> = frontier.frontier_n.iter().map(|&n| (n as f64).log2()).collect();
    moving_average(&raw, window)
}

/// Sigmoid of `log2 n*` against `log2 C`, bounded to `[0, log2 n_max]`.
pub fn fit_nstar_sigmoid(grid: &[f64], smoothed: &[f64], log2_n_max: f64) -> Result<SigmoidFit> {
    let pairs: Vec<(f64, f64)> = grid.iter().copied().zip(smoothed.iter().copied()).collect();
    fit_sigmoid(&pairs, 0.0, log2_n_max)
}

/// Swept `n` closest to `2^fit(C)` in log2 distance; ties go to the smaller.
pub fn recommend(fit: &SigmoidFit, compute: f64, swept: &[usize]) -> Option<usize> {
    let target = fit.predict(compute);
    swept.iter().copied().min_by(|&a, &b| {
        let da = ((a as f64).log2() - target).abs();
        let db = ((b as f64).log2() - target).abs();
        da.total_cmp(&db).then(a.cmp(&b))
    })
}

//! Levenberg-Marquardt over the stacked residuals.
//!
//! Variables are ordered by their time along the band so that the normal
//! matrix has a narrow envelope; it is factored with a skyline Cholesky.

use super::band::TimedBand;
use super::objective::{
    agent_weights, evaluate_with, for_each_residual, kind_weight, pack, unpack, variable_keys, Association, BandAgent,
    TebProblem, VarLayout,
};
use super::obstacles::ObstacleSet;
use super::{KinodynamicLimits, ObjectiveWeights, TebParams};
use crate::costmap::CostmapStack;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub accepted: usize,
    pub initial: f64,
    pub final_value: f64,
}

/// Symmetric positive matrix in envelope storage (upper triangle by column).
struct Skyline {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl Skyline {
    fn new(first: Vec<usize>) -> Self {
        let mut start = Vec::with_capacity(first.len() + 1);
        let mut acc = 0;
        for (j, f) in first.iter().enumerate() {
            start.push(acc);
            acc += j - f + 1;
        }
        start.push(acc);
        Self {
            first,
            start,
            data: vec![0.0; acc],
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        self.start[j] + i - self.first[j]
    }

    /// In-place `U^T U` factorization; false if not positive definite.
    fn factor(&mut self) -> bool {
        let m = self.first.len();
        for j in 0..m {
            let fj = self.first[j];
            for i in fj..=j {
                let lo = self.first[i].max(fj);
                let mut s = self.data[self.at(i, j)];
                let (bi, bj) = (self.at(lo, i), self.at(lo, j));
                for k in 0..i - lo {
                    s -= self.data[bi + k] * self.data[bj + k];
                }
                if i < j {
                    let d = self.data[self.at(i, i)];
                    let ij = self.at(i, j);
                    self.data[ij] = s / d;
                } else {
                    if !(s > 0.0) || !s.is_finite() {
                        return false;
                    }
                    let jj = self.at(j, j);
                    self.data[jj] = s.sqrt();
                }
            }
        }
        true
    }

    fn solve(&self, b: &mut [f64]) {
        let m = self.first.len();
        for j in 0..m {
            let fj = self.first[j];
            let mut s = b[j];
            let base = self.at(fj, j);
            for k in fj..j {
                s -= self.data[base + k - fj] * b[k];
            }
            b[j] = s / self.data[self.at(j, j)];
        }
        for j in (0..m).rev() {
            b[j] /= self.data[self.at(j, j)];
            let fj = self.first[j];
            let base = self.at(fj, j);
            let xj = b[j];
            for k in fj..j {
                b[k] -= self.data[base + k - fj] * xj;
            }
        }
    }
}

struct Normal {
    h: Skyline,
    diag: Vec<f64>,
    g: Vec<f64>,
}

fn build_normal(problem: &TebProblem<'_>, layout: &VarLayout, assoc: &Association, perm: &[usize]) -> Normal {
    let m = layout.total;
    let weights: Vec<ObjectiveWeights> = (0..problem.agents.len()).map(|i| agent_weights(problem, i)).collect();
    let mut first: Vec<usize> = (0..m).collect();
    for_each_residual(problem, layout, assoc, |row| {
        if row.len == 0 {
            return;
        }
        let lo = row.idx[..row.len].iter().map(|&v| perm[v]).min().unwrap();
        for &v in &row.idx[..row.len] {
            let p = perm[v];
            if lo < first[p] {
                first[p] = lo;
            }
        }
    });
    let mut h = Skyline::new(first);
    let mut g = vec![0.0; m];
    for_each_residual(problem, layout, assoc, |row| {
        let w = kind_weight(&weights[row.owner], row.kind);
        if w == 0.0 {
            return;
        }
        for a in 0..row.len {
            let pa = perm[row.idx[a]];
            let ja = row.val[a];
            g[pa] += w * row.u * ja;
            for b in 0..row.len {
                let pb = perm[row.idx[b]];
                if pa <= pb {
                    let at = h.at(pa, pb);
                    h.data[at] += w * ja * row.val[b];
                }
            }
        }
    });
    let diag = (0..m).map(|j| h.data[h.at(j, j)]).collect();
    Normal { h, diag, g }
}

fn objective(problem: &TebProblem<'_>, layout: &VarLayout) -> f64 {
    let assoc = Association::compute(problem);
    evaluate_with(problem, layout, &assoc).total
}

/// Largest change allowed per variable in one step.
fn step_bounds(agents: &[BandAgent], layout: &VarLayout, x: &[f64]) -> Vec<f64> {
    let mut b = vec![0.0; layout.total];
    for (a, agent) in agents.iter().enumerate() {
        if !layout.is_free(a) {
            continue;
        }
        let n = agent.band.len();
        for k in 1..n - 1 {
            for (comp, lim) in [(0, MAX_SHIFT), (1, MAX_SHIFT), (2, MAX_TURN)] {
                b[layout.config(a, k, comp).unwrap()] = lim;
            }
        }
        for i in 0..n - 1 {
            let v = layout.dt(a, i).unwrap();
            b[v] = 0.5 * x[v];
        }
    }
    b
}

const MAX_SHIFT: f64 = 0.25;
const MAX_TURN: f64 = 0.6;

/// Jointly optimizes all free bands of `problem` in place.
pub fn optimize_problem(problem: &mut TebProblem<'_>, iterations: usize) -> Result<OptimizeReport> {
    let layout = VarLayout::new(&problem.agents);
    let initial = objective(problem, &layout);
    if !initial.is_finite() {
        return Err(Error::Diverged(format!("objective is {initial} before optimization")));
    }
    let mut report = OptimizeReport {
        iterations: 0,
        accepted: 0,
        initial,
        final_value: initial,
    };
    if layout.total == 0 {
        return Ok(report);
    }
    let dt_floor = problem.params.dt_floor;
    let mut f_cur = initial;
    let mut lambda = 1e-3;
    for _ in 0..iterations {
        report.iterations += 1;
        let assoc = Association::compute(problem);
        let keys = variable_keys(&problem.agents, &layout);
        let mut order: Vec<usize> = (0..layout.total).collect();
        order.sort_by(|&a, &b| keys[a].0.total_cmp(&keys[b].0).then(keys[a].1.cmp(&keys[b].1)).then(a.cmp(&b)));
        let mut perm = vec![0; layout.total];
        for (p, &v) in order.iter().enumerate() {
            perm[v] = p;
        }
        let normal = build_normal(problem, &layout, &assoc, &perm);
        let x = pack(&problem.agents, &layout);
        let bounds = step_bounds(&problem.agents, &layout, &x);
        let mut accepted = None;
        for _ in 0..10 {
            let mut h = Skyline {
                first: normal.h.first.clone(),
                start: normal.h.start.clone(),
                data: normal.h.data.clone(),
            };
            for j in 0..layout.total {
                let at = h.at(j, j);
                h.data[at] += lambda * (normal.diag[j] + 1e-6);
            }
            if !h.factor() {
                lambda *= 10.0;
                continue;
            }
            let mut step: Vec<f64> = normal.g.iter().map(|v| -v).collect();
            h.solve(&mut step);
            // the model is poor in the time differences far from x, so the
            // step is shortened to stay within the per-variable bounds
            let mut scale: f64 = 1.0;
            for (v, b) in bounds.iter().enumerate() {
                let d = step[perm[v]].abs();
                if d > *b {
                    scale = scale.min(b / d);
                }
            }
            let mut x_new = x.clone();
            for (v, xv) in x_new.iter_mut().enumerate() {
                *xv += scale * step[perm[v]];
            }
            let mut candidate = problem.agents.clone();
            unpack(&mut candidate, &layout, &x_new, dt_floor);
            let trial = TebProblem {
                agents: candidate,
                ..problem.clone()
            };
            let f_new = objective(&trial, &layout);
            if f_new.is_finite() && f_new <= f_cur {
                accepted = Some((trial.agents, f_new));
                lambda = (lambda / 3.0).max(1e-9);
                break;
            }
            lambda *= 4.0;
        }
        let Some((agents, f_new)) = accepted else { break };
        problem.agents = agents;
        report.accepted += 1;
        let gain = f_cur - f_new;
        f_cur = f_new;
        if gain <= 1e-9 * f_cur.max(1e-12) {
            break;
        }
    }
    report.final_value = f_cur;
    Ok(report)
}

/// Optimizes a single robot band against fixed other agents.
#[allow(clippy::too_many_arguments)]
pub fn optimize(
    band: &TimedBand,
    stack: Option<&CostmapStack>,
    obstacles: &ObstacleSet,
    others: &[BandAgent],
    weights: &ObjectiveWeights,
    limits: &KinodynamicLimits,
    params: &TebParams,
    radius: f64,
    iterations: usize,
) -> Result<(TimedBand, OptimizeReport)> {
    let mut agents = vec![BandAgent::robot(band.clone(), *limits, radius)];
    agents.extend(others.iter().cloned().map(|mut o| {
        o.fixed = true;
        o
    }));
    let mut problem = TebProblem {
        agents,
        obstacles,
        stack,
        weights: *weights,
        params: *params,
    };
    let report = optimize_problem(&mut problem, iterations)?;
    Ok((problem.agents.swap_remove(0).band, report))
}

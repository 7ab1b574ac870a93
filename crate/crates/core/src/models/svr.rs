use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    dot, envelope, sq_dist, unwrap_envelope, FittedModel, HyperParams, Matrix, ModelEnvelope, ModelKind, ParamValue, Regressor, TrainSet,
};
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;
const DEFAULT_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SvrKernel {
    Linear,
    Rbf,
}

/// Epsilon-insensitive support vector regression, dual solved by SMO with
/// second-order working-set selection.
pub struct Svr {
    kernel: SvrKernel,
}

impl Svr {
    pub fn new(kernel: SvrKernel) -> Self {
        Svr { kernel }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub kernel: SvrKernel,
    pub gamma: f64,
    pub train_x: Matrix,
    /// Dual coefficient per training row (alpha - alpha*).
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    #[serde(skip)]
    params: HyperParams,
}

impl SvrModel {
    fn k(&self, a: &[f64], b: &[f64]) -> f64 {
        kernel_value(self.kernel, self.gamma, a, b)
    }
}

fn kernel_value(kernel: SvrKernel, gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    match kernel {
        SvrKernel::Linear => dot(a, b),
        SvrKernel::Rbf => (-gamma * sq_dist(a, b)).exp(),
    }
}

impl FittedModel for SvrModel {
    fn predict_mean(&self, x: &Matrix) -> Vec<f64> {
        (0..x.n)
            .map(|i| {
                let row = x.row(i);
                self.alpha
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| **a != 0.0)
                    .map(|(s, a)| a * self.k(self.train_x.row(s), row))
                    .sum::<f64>()
                    + self.bias
            })
            .collect()
    }

    fn envelope(&self) -> ModelEnvelope {
        envelope(self.kind(), &self.params, self)
    }
}

impl SvrModel {
    fn kind(&self) -> ModelKind {
        match self.kernel {
            SvrKernel::Linear => ModelKind::SvrLinear,
            SvrKernel::Rbf => ModelKind::SvrRbf,
        }
    }
}

pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub iterations: usize,
}

/// Solves the 2n-variable dual on a precomputed n x n kernel (row-major).
pub(crate) fn solve_dual(k: &[f64], y: &[f64], c: f64, eps: f64, tol: f64) -> Result<DualSolution> {
    let n = y.len();
    let l = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let kk = |i: usize, j: usize| k[(i % n) * n + (j % n)];
    let q = |i: usize, j: usize| sign(i) * sign(j) * kk(i, j);
    let qd: Vec<f64> = (0..l).map(|t| kk(t, t)).collect();
    let p: Vec<f64> = (0..l).map(|t| if t < n { eps - y[t] } else { eps + y[t - n] }).collect();
    let mut a = vec![0.0; l];
    let mut g = p.clone();
    let upper = |v: f64| v >= c;
    let lower = |v: f64| v <= 0.0;
    let max_iter = (100 * l).max(1_000_000);
    let mut iter = 0;
    let mut qi = vec![0.0; l];
    let mut qj = vec![0.0; l];
    loop {
        // first index: maximal violating
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax_idx = usize::MAX;
        for t in 0..l {
            if sign(t) > 0.0 {
                if !upper(a[t]) && -g[t] >= gmax {
                    gmax = -g[t];
                    gmax_idx = t;
                }
            } else if !lower(a[t]) && g[t] >= gmax {
                gmax = g[t];
                gmax_idx = t;
            }
        }
        let i = gmax_idx;
        if i == usize::MAX {
            break;
        }
        for (t, v) in qi.iter_mut().enumerate() {
            *v = q(i, t);
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut gmin_idx = usize::MAX;
        let mut obj_diff_min = f64::INFINITY;
        for j in 0..l {
            if sign(j) > 0.0 {
                if !lower(a[j]) {
                    let grad_diff = gmax + g[j];
                    if g[j] >= gmax2 {
                        gmax2 = g[j];
                    }
                    if grad_diff > 0.0 {
                        let mut quad = qd[i] + qd[j] - 2.0 * sign(i) * qi[j];
                        if quad <= 0.0 {
                            quad = TAU;
                        }
                        let obj_diff = -(grad_diff * grad_diff) / quad;
                        if obj_diff <= obj_diff_min {
                            gmin_idx = j;
                            obj_diff_min = obj_diff;
                        }
                    }
                }
            } else if !upper(a[j]) {
                let grad_diff = gmax - g[j];
                if -g[j] >= gmax2 {
                    gmax2 = -g[j];
                }
                if grad_diff > 0.0 {
                    let mut quad = qd[i] + qd[j] + 2.0 * sign(i) * qi[j];
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let obj_diff = -(grad_diff * grad_diff) / quad;
                    if obj_diff <= obj_diff_min {
                        gmin_idx = j;
                        obj_diff_min = obj_diff;
                    }
                }
            }
        }
        let violation = gmax + gmax2;
        if violation < tol || gmin_idx == usize::MAX {
            break;
        }
        iter += 1;
        if iter > max_iter {
            return Err(Error::Convergence(format!(
                "svr stopped after {max_iter} iterations with KKT violation {violation:.3e}"
            )));
        }
        let j = gmin_idx;
        for (t, v) in qj.iter_mut().enumerate() {
            *v = q(j, t);
        }
        let (old_ai, old_aj) = (a[i], a[j]);
        if sign(i) != sign(j) {
            let mut quad = qd[i] + qd[j] + 2.0 * qi[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-g[i] - g[j]) / quad;
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > 0.0 {
                if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if diff > 0.0 {
                if a[i] > c {
                    a[i] = c;
                    a[j] = c - diff;
                }
            } else if a[j] > c {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            let mut quad = qd[i] + qd[j] - 2.0 * qi[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (g[i] - g[j]) / quad;
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > c {
                if a[i] > c {
                    a[i] = c;
                    a[j] = sum - c;
                }
            } else if a[j] < 0.0 {
                a[j] = 0.0;
                a[i] = sum;
            }
            if sum > c {
                if a[j] > c {
                    a[j] = c;
                    a[i] = sum - c;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        let (dai, daj) = (a[i] - old_ai, a[j] - old_aj);
        for t in 0..l {
            g[t] += qi[t] * dai + qj[t] * daj;
        }
    }
    // bias from free variables, else midpoint of the feasible interval
    let (mut ub, mut lb, mut sum_free, mut nr_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..l {
        let yg = sign(t) * g[t];
        if upper(a[t]) {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(a[t]) {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            nr_free += 1;
            sum_free += yg;
        }
    }
    let rho = if nr_free > 0 { sum_free / nr_free as f64 } else { (ub + lb) / 2.0 };
    let objective = (0..l).map(|t| a[t] * (g[t] + p[t])).sum::<f64>() / 2.0;
    Ok(DualSolution {
        alpha: (0..n).map(|t| a[t] - a[t + n]).collect(),
        bias: -rho,
        objective,
        iterations: iter,
    })
}

const IPM_MAX_ITER: usize = 200;

/// Solves the same dual by a primal-dual interior-point method with
/// Mehrotra's predictor-corrector. The 2n-variable Newton system reduces to
/// one n x n Cholesky factorisation per iteration, so the cost does not grow
/// with `c` the way SMO's iteration count does on low-rank (linear) kernels.
pub(crate) fn solve_dual_ipm(k: &[f64], y: &[f64], c: f64, eps: f64) -> Result<DualSolution> {
    let n = y.len();
    let km = DMatrix::from_row_slice(n, n, k);
    let ymax = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = 1.0 + ymax + eps;
    // primal α, α*; dual multipliers of α ≥ 0 (s), α ≤ c (t) and the same for α*
    let mut a = vec![c / 2.0; n];
    let mut a2 = vec![c / 2.0; n];
    let mut s = vec![scale; n];
    let mut t = vec![scale; n];
    let mut s2 = vec![scale; n];
    let mut t2 = vec![scale; n];
    let mut b = y.iter().sum::<f64>() / n as f64;
    let ones = DVector::from_element(n, 1.0);
    for iter in 0..IPM_MAX_ITER {
        let beta = DVector::from_iterator(n, (0..n).map(|i| a[i] - a2[i]));
        let kb = &km * &beta;
        let r1: Vec<f64> = (0..n).map(|i| kb[i] + eps - y[i] + b - s[i] + t[i]).collect();
        let r2: Vec<f64> = (0..n).map(|i| -kb[i] + eps + y[i] - b - s2[i] + t2[i]).collect();
        let r3: f64 = beta.iter().sum();
        let comp: f64 = (0..n).map(|i| s[i] * a[i] + t[i] * (c - a[i]) + s2[i] * a2[i] + t2[i] * (c - a2[i])).sum();
        let mu = comp / (4 * n) as f64;
        let dual_res = r1.iter().chain(&r2).fold(0.0f64, |m, v| m.max(v.abs()));
        let objective = 0.5 * beta.dot(&kb) + (0..n).map(|i| eps * (a[i] + a2[i]) - y[i] * beta[i]).sum::<f64>();
        if dual_res <= 1e-9 * scale && r3.abs() <= 1e-9 * c * n as f64 && comp <= 1e-10 * (1.0 + objective.abs()) {
            return Ok(DualSolution {
                alpha: beta.iter().copied().collect(),
                bias: b,
                objective,
                iterations: iter,
            });
        }
        let d1: Vec<f64> = (0..n).map(|i| s[i] / a[i] + t[i] / (c - a[i])).collect();
        let d2: Vec<f64> = (0..n).map(|i| s2[i] / a2[i] + t2[i] / (c - a2[i])).collect();
        let h: Vec<f64> = (0..n).map(|i| d1[i] * d2[i] / (d1[i] + d2[i])).collect();
        let mut m = km.clone();
        for i in 0..n {
            m[(i, i)] += h[i];
        }
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Numeric(format!("svr interior-point system lost definiteness at iteration {iter}")))?;
        let m0 = chol.solve(&ones);
        let m0_sum = m0.sum();
        // rc_*: complementarity right-hand sides for (α,s), (c−α,t), (α*,s*), (c−α*,t*)
        let direction = |rc: [&[f64]; 4]| {
            let e1: Vec<f64> = (0..n).map(|i| -rc[0][i] / a[i] + rc[1][i] / (c - a[i])).collect();
            let e2: Vec<f64> = (0..n).map(|i| -rc[2][i] / a2[i] + rc[3][i] / (c - a2[i])).collect();
            let g1: Vec<f64> = (0..n).map(|i| -r1[i] - e1[i]).collect();
            let g2: Vec<f64> = (0..n).map(|i| -r2[i] - e2[i]).collect();
            let hv = DVector::from_iterator(n, (0..n).map(|i| g1[i] - d1[i] * (g1[i] + g2[i]) / (d1[i] + d2[i])));
            let m1 = chol.solve(&hv);
            let db = (m1.sum() + r3) / m0_sum;
            let w = m1 - &m0 * db;
            let da: Vec<f64> = (0..n).map(|i| (g1[i] + g2[i] + d2[i] * w[i]) / (d1[i] + d2[i])).collect();
            let da2: Vec<f64> = (0..n).map(|i| da[i] - w[i]).collect();
            let ds: Vec<f64> = (0..n).map(|i| (rc[0][i] - s[i] * da[i]) / a[i]).collect();
            let dt: Vec<f64> = (0..n).map(|i| (rc[1][i] + t[i] * da[i]) / (c - a[i])).collect();
            let ds2: Vec<f64> = (0..n).map(|i| (rc[2][i] - s2[i] * da2[i]) / a2[i]).collect();
            let dt2: Vec<f64> = (0..n).map(|i| (rc[3][i] + t2[i] * da2[i]) / (c - a2[i])).collect();
            (da, da2, ds, dt, ds2, dt2, db)
        };
        let max_step = |d: &(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64)| {
            let mut tau = 1.0f64;
            let mut limit = |x: f64, dx: f64| {
                if dx < 0.0 {
                    tau = tau.min(-x / dx);
                }
            };
            for i in 0..n {
                limit(a[i], d.0[i]);
                limit(c - a[i], -d.0[i]);
                limit(a2[i], d.1[i]);
                limit(c - a2[i], -d.1[i]);
                limit(s[i], d.2[i]);
                limit(t[i], d.3[i]);
                limit(s2[i], d.4[i]);
                limit(t2[i], d.5[i]);
            }
            tau
        };
        let neg = |p: &[f64], q: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..n).map(|i| -p[i] * q(i)).collect() };
        let rc0 = [
            neg(&s, &|i| a[i]),
            neg(&t, &|i| c - a[i]),
            neg(&s2, &|i| a2[i]),
            neg(&t2, &|i| c - a2[i]),
        ];
        let aff = direction([&rc0[0], &rc0[1], &rc0[2], &rc0[3]]);
        let ta = max_step(&aff);
        let comp_aff: f64 = (0..n)
            .map(|i| {
                (a[i] + ta * aff.0[i]) * (s[i] + ta * aff.2[i])
                    + (c - a[i] - ta * aff.0[i]) * (t[i] + ta * aff.3[i])
                    + (a2[i] + ta * aff.1[i]) * (s2[i] + ta * aff.4[i])
                    + (c - a2[i] - ta * aff.1[i]) * (t2[i] + ta * aff.5[i])
            })
            .sum();
        let sigma = (comp_aff / comp).powi(3).clamp(0.0, 1.0);
        let target = sigma * mu;
        let rc = [
            (0..n).map(|i| rc0[0][i] + target - aff.0[i] * aff.2[i]).collect::<Vec<f64>>(),
            (0..n).map(|i| rc0[1][i] + target + aff.0[i] * aff.3[i]).collect(),
            (0..n).map(|i| rc0[2][i] + target - aff.1[i] * aff.4[i]).collect(),
            (0..n).map(|i| rc0[3][i] + target + aff.1[i] * aff.5[i]).collect(),
        ];
        let dir = direction([&rc[0], &rc[1], &rc[2], &rc[3]]);
        let tau = (0.995 * max_step(&dir)).min(1.0);
        for i in 0..n {
            a[i] += tau * dir.0[i];
            a2[i] += tau * dir.1[i];
            s[i] += tau * dir.2[i];
            t[i] += tau * dir.3[i];
            s2[i] += tau * dir.4[i];
            t2[i] += tau * dir.5[i];
        }
        b += tau * dir.6;
    }
    Err(Error::Convergence(format!("svr interior point did not converge in {IPM_MAX_ITER} iterations")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Solver {
    Smo,
    InteriorPoint,
}

struct Resolved {
    c: f64,
    eps: f64,
    gamma_scale: f64,
    tol: f64,
    solver: Option<Solver>,
}

fn resolve(p: &HyperParams) -> Result<Resolved> {
    let r = Resolved {
        c: p.num("C", 1.0)?,
        eps: p.num("epsilon", 0.1)?,
        gamma_scale: p.num("gamma_scale", 1.0)?,
        tol: p.num("tol", DEFAULT_TOL)?,
        solver: match p.get("solver") {
            None => None,
            Some(ParamValue::Text(t)) if t == "smo" => Some(Solver::Smo),
            Some(ParamValue::Text(t)) if t == "ipm" => Some(Solver::InteriorPoint),
            Some(other) => return Err(Error::Parameter(format!("svr solver must be `smo` or `ipm`, got `{other}`"))),
        },
    };
    if !(r.c > 0.0) || !(r.eps >= 0.0) || !(r.gamma_scale > 0.0) || !(r.tol > 0.0) {
        return Err(Error::Parameter(format!("invalid svr parameters {p}")));
    }
    Ok(r)
}

impl Svr {
    fn gamma(&self, r: &Resolved, d: usize) -> f64 {
        match self.kernel {
            SvrKernel::Linear => 0.0,
            SvrKernel::Rbf => r.gamma_scale / d.max(1) as f64,
        }
    }

    fn gram(&self, x: &Matrix, gamma: f64) -> Vec<f64> {
        let n = x.n;
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = kernel_value(self.kernel, gamma, x.row(i), x.row(j));
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }

    fn solve(&self, train: &TrainSet, k: &[f64], r: &Resolved, gamma: f64, params: &HyperParams) -> Result<Box<dyn FittedModel>> {
        // SMO stalls on low-rank kernels at large C; the linear kernel defaults to interior point
        let default = match self.kernel {
            SvrKernel::Linear => Solver::InteriorPoint,
            SvrKernel::Rbf => Solver::Smo,
        };
        let sol = match r.solver.unwrap_or(default) {
            Solver::InteriorPoint => solve_dual_ipm(k, &train.y, r.c, r.eps)?,
            Solver::Smo => match solve_dual(k, &train.y, r.c, r.eps, r.tol) {
                Err(Error::Convergence(msg)) if r.solver.is_none() => {
                    log::debug!("event=svr_solver_fallback reason={msg}");
                    solve_dual_ipm(k, &train.y, r.c, r.eps)?
                }
                other => other?,
            },
        };
        Ok(Box::new(SvrModel {
            kernel: self.kernel,
            gamma,
            train_x: train.x.clone(),
            alpha: sol.alpha,
            bias: sol.bias,
            dual_objective: sol.objective,
            iterations: sol.iterations,
            params: params.clone(),
        }))
    }
}

impl Regressor for Svr {
    fn kind(&self) -> ModelKind {
        match self.kernel {
            SvrKernel::Linear => ModelKind::SvrLinear,
            SvrKernel::Rbf => ModelKind::SvrRbf,
        }
    }

    fn default_grid(&self) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for c in [0.1, 1.0, 10.0, 100.0] {
            for eps in [0.01, 0.1] {
                match self.kernel {
                    SvrKernel::Linear => out.push(HyperParams::new().with("C", c).with("epsilon", eps)),
                    SvrKernel::Rbf => {
                        for g in [0.1, 1.0, 10.0] {
                            out.push(HyperParams::new().with("C", c).with("epsilon", eps).with("gamma_scale", g));
                        }
                    }
                }
            }
        }
        out
    }

    fn fit_sorted(&self, train: &TrainSet, params: &HyperParams, _seed: u64) -> Result<Box<dyn FittedModel>> {
        let r = resolve(params)?;
        let gamma = self.gamma(&r, train.d());
        let k = self.gram(&train.x, gamma);
        self.solve(train, &k, &r, gamma, params)
    }

    fn fit_grid_sorted(&self, train: &TrainSet, grid: &[HyperParams], _seed: u64) -> Vec<Result<Box<dyn FittedModel>>> {
        let mut grams: Vec<(u64, Vec<f64>)> = Vec::new();
        grid.iter()
            .map(|p| {
                let r = resolve(p)?;
                let gamma = self.gamma(&r, train.d());
                let pos = match grams.iter().position(|(g, _)| *g == gamma.to_bits()) {
                    Some(pos) => pos,
                    None => {
                        grams.push((gamma.to_bits(), self.gram(&train.x, gamma)));
                        grams.len() - 1
                    }
                };
                self.solve(train, &grams[pos].1, &r, gamma, p)
            })
            .collect()
    }

    fn load(&self, env: &ModelEnvelope) -> Result<Box<dyn FittedModel>> {
        let mut m: SvrModel = unwrap_envelope(env, self.kind())?;
        m.params = env.params.clone();
        Ok(Box::new(m))
    }
}

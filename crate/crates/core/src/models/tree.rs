use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;

/// Per-feature split thresholds. Features with at most `max_bins` distinct
/// training values get one bin per value, so splits are exact; others are
/// cut at empirical quantiles. A value's bin is the number of thresholds
/// strictly below it, and NaN falls in bin 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub thresholds: Vec<Vec<f64>>,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

impl Binning {
    pub fn fit(x: &Matrix, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, 256);
        let thresholds = (0..x.d)
            .map(|j| {
                let mut v: Vec<f64> = (0..x.n).map(|i| x.get(i, j)).filter(|v| !v.is_nan()).collect();
                v.sort_by(f64::total_cmp);
                let mut distinct = v.clone();
                distinct.dedup();
                if distinct.len() <= max_bins {
                    return distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect();
                }
                let n = v.len();
                let mut cuts: Vec<f64> = Vec::with_capacity(max_bins - 1);
                for b in 1..max_bins {
                    let r = b * n / max_bins;
                    if r == 0 || r >= n {
                        continue;
                    }
                    let lo = v[r - 1];
                    if let Some(hi) = v[r..].iter().copied().find(|t| *t > lo) {
                        let c = midpoint(lo, hi);
                        if cuts.last().is_none_or(|l| c > *l) {
                            cuts.push(c);
                        }
                    }
                }
                cuts
            })
            .collect();
        Binning { thresholds }
    }

    pub fn n_bins(&self, j: usize) -> usize {
        self.thresholds[j].len() + 1
    }

    pub fn code(&self, j: usize, v: f64) -> u8 {
        self.thresholds[j].partition_point(|t| v > *t) as u8
    }

    /// Column-major bin codes.
    pub fn encode(&self, x: &Matrix) -> Vec<Vec<u8>> {
        (0..x.d).map(|j| (0..x.n).map(|i| self.code(j, x.get(i, j))).collect()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Features tried per node.
    pub max_features: usize,
    /// Multiplier applied to leaf values.
    pub scale: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: usize::MAX,
            min_leaf: 1,
            lambda: 0.0,
            max_features: usize::MAX,
            scale: 1.0,
        }
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Node {
    f: u32,
    b: u8,
    t: f64,
    l: u32,
    r: u32,
    v: f64,
}

/// Binary regression tree; `x <= threshold` goes left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            if n.f == LEAF {
                return n.v;
            }
            // NaN compares false and goes left, matching bin 0
            i = if x[n.f as usize] > n.t { n.r } else { n.l } as usize;
        }
    }

    pub fn predict_codes(&self, codes: &[Vec<u8>], row: usize) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            if n.f == LEAF {
                return n.v;
            }
            i = if codes[n.f as usize][row] > n.b { n.r } else { n.l } as usize;
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.f == LEAF).count()
    }

    /// (feature, threshold) of the root split, if any.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        let n = &self.nodes[0];
        (n.f != LEAF).then_some((n.f as usize, n.t))
    }
}

/// Grows trees on pre-binned features from per-row gradient and hessian.
/// With `g = -w*y` and `h = w` this is weighted variance reduction and leaves
/// hold weighted means; with residual gradients it is a boosting step.
pub struct TreeBuilder<'a> {
    pub codes: &'a [Vec<u8>],
    pub binning: &'a Binning,
}

struct Split {
    feature: usize,
    bin: u8,
    gain: f64,
}

#[derive(Default)]
struct Scratch {
    hg: Vec<f64>,
    hh: Vec<f64>,
    hc: Vec<usize>,
    buf: Vec<(u8, f64, f64)>,
    feats: Vec<usize>,
    part: Vec<usize>,
}

impl TreeBuilder<'_> {
    /// Builds over `rows` (reordered in place). When `leaf_out` is given, each
    /// row's leaf value is written at its row index.
    pub fn build<R: Rng>(
        &self,
        rows: &mut [usize],
        g: &[f64],
        h: &[f64],
        params: &TreeParams,
        rng: &mut R,
        mut leaf_out: Option<&mut [f64]>,
    ) -> Tree {
        let d = self.codes.len();
        let mut s = Scratch {
            hg: vec![0.0; 256],
            hh: vec![0.0; 256],
            hc: vec![0; 256],
            feats: (0..d).collect(),
            ..Default::default()
        };
        let mut nodes = vec![Node {
            f: LEAF,
            b: 0,
            t: 0.0,
            l: 0,
            r: 0,
            v: 0.0,
        }];
        let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
        while let Some((id, start, end, depth)) = stack.pop() {
            let rs = &mut rows[start..end];
            let (mut gs, mut hs, mut scale) = (0.0, 0.0, 0.0);
            for &r in rs.iter() {
                gs += g[r];
                hs += h[r];
                scale += g[r] * g[r] / h[r];
            }
            let value = -gs / (hs + params.lambda) * params.scale;
            nodes[id].v = value;
            let split = if depth >= params.max_depth || rs.len() < 2 * params.min_leaf.max(1) {
                None
            } else {
                self.best_split(rs, g, h, gs, hs, 1e-12 * scale, params, rng, &mut s)
            };
            let Some(split) = split else {
                if let Some(out) = leaf_out.as_deref_mut() {
                    for &r in rs.iter() {
                        out[r] = value;
                    }
                }
                continue;
            };
            let col = &self.codes[split.feature];
            s.part.clear();
            s.part.extend(rs.iter().copied().filter(|&r| col[r] <= split.bin));
            let n_left = s.part.len();
            s.part.extend(rs.iter().copied().filter(|&r| col[r] > split.bin));
            rs.copy_from_slice(&s.part);
            let left = nodes.len();
            for _ in 0..2 {
                nodes.push(Node {
                    f: LEAF,
                    b: 0,
                    t: 0.0,
                    l: 0,
                    r: 0,
                    v: 0.0,
                });
            }
            let n = &mut nodes[id];
            n.f = split.feature as u32;
            n.b = split.bin;
            n.t = self.binning.thresholds[split.feature][split.bin as usize];
            n.l = left as u32;
            n.r = left as u32 + 1;
            stack.push((left + 1, start + n_left, end, depth + 1));
            stack.push((left, start, start + n_left, depth + 1));
        }
        Tree { nodes }
    }

    #[allow(clippy::too_many_arguments)]
    fn best_split<R: Rng>(
        &self,
        rows: &[usize],
        g: &[f64],
        h: &[f64],
        gs: f64,
        hs: f64,
        min_gain: f64,
        params: &TreeParams,
        rng: &mut R,
        s: &mut Scratch,
    ) -> Option<Split> {
        let d = s.feats.len();
        let mtry = params.max_features.clamp(1, d);
        if mtry < d {
            for i in 0..mtry {
                let k = rng.random_range(i..d);
                s.feats.swap(i, k);
            }
        }
        let lambda = params.lambda;
        let min_leaf = params.min_leaf.max(1);
        let m = rows.len();
        let parent = gs * gs / (hs + lambda);
        let mut best: Option<Split> = None;
        let consider = |feature: usize, bin: u8, gl: f64, hl: f64, cl: usize, best: &mut Option<Split>| {
            let cr = m - cl;
            if cl < min_leaf || cr < min_leaf {
                return;
            }
            let (gr, hr) = (gs - gl, hs - hl);
            let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
            if gain > min_gain && best.as_ref().is_none_or(|b| gain > b.gain) {
                *best = Some(Split { feature, bin, gain });
            }
        };
        for fi in 0..mtry {
            let j = s.feats[fi];
            let nb = self.binning.n_bins(j);
            if nb < 2 {
                continue;
            }
            let col = &self.codes[j];
            if m * 8 < nb {
                s.buf.clear();
                s.buf.extend(rows.iter().map(|&r| (col[r], g[r], h[r])));
                s.buf.sort_by_key(|e| e.0);
                let (mut gl, mut hl) = (0.0, 0.0);
                for i in 0..m - 1 {
                    gl += s.buf[i].1;
                    hl += s.buf[i].2;
                    if s.buf[i + 1].0 != s.buf[i].0 {
                        consider(j, s.buf[i].0, gl, hl, i + 1, &mut best);
                    }
                }
            } else {
                s.hg[..nb].fill(0.0);
                s.hh[..nb].fill(0.0);
                s.hc[..nb].fill(0);
                for &r in rows {
                    let c = col[r] as usize;
                    s.hg[c] += g[r];
                    s.hh[c] += h[r];
                    s.hc[c] += 1;
                }
                let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
                for b in 0..nb - 1 {
                    if s.hc[b] == 0 {
                        continue;
                    }
                    gl += s.hg[b];
                    hl += s.hh[b];
                    cl += s.hc[b];
                    if cl == m {
                        break;
                    }
                    consider(j, b as u8, gl, hl, cl, &mut best);
                }
            }
        }
        best
    }
}

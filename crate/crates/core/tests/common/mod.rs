//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's metric, transport or forward-pass code.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_bytes(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.gen()).collect()
}

/// Pearson correlation via raw sums: (nΣxy − ΣxΣy) / sqrt(...).
pub fn naive_cc(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Mean standardized value (sample standard deviation) at fixated cells.
pub fn naive_nss(map: &[u8], fixated: &[bool]) -> f64 {
    let n = map.len() as f64;
    let mean = map.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mut ss = 0.0;
    for &v in map {
        ss += (v as f64 - mean) * (v as f64 - mean);
    }
    let sd = (ss / (n - 1.0)).sqrt();
    let mut total = 0.0;
    let mut count = 0.0;
    for (i, &f) in fixated.iter().enumerate() {
        if f {
            total += (map[i] as f64 - mean) / sd;
            count += 1.0;
        }
    }
    total / count
}

pub fn normalized(map: &[u8]) -> Vec<f64> {
    let s: f64 = map.iter().map(|&v| v as f64).sum();
    map.iter().map(|&v| v as f64 / s).collect()
}

pub fn naive_kld(pred: &[u8], gt: &[u8]) -> f64 {
    let eps = f64::EPSILON;
    let (p, g) = (normalized(pred), normalized(gt));
    let mut total = 0.0;
    for i in 0..p.len() {
        total += g[i] * (g[i] / (p[i] + eps) + eps).ln();
    }
    total
}

pub fn naive_sim(pred: &[u8], gt: &[u8]) -> f64 {
    let (p, g) = (normalized(pred), normalized(gt));
    let mut total = 0.0;
    for i in 0..p.len() {
        total += if p[i] < g[i] { p[i] } else { g[i] };
    }
    total
}

/// Euclidean ground distance between centers of cells `i` and `j` of a grid
/// of width `w`.
pub fn cell_distance(i: usize, j: usize, w: usize) -> f64 {
    let dx = (i % w) as f64 - (j % w) as f64;
    let dy = (i / w) as f64 - (j / w) as f64;
    (dx * dx + dy * dy).sqrt()
}

const TOL: f64 = 1e-12;

fn pivot(tab: &mut [Vec<f64>], obj: &mut [f64], basis: &mut [usize], r: usize, c: usize) {
    let p = tab[r][c];
    for v in tab[r].iter_mut() {
        *v /= p;
    }
    let prow = tab[r].clone();
    for (i, row) in tab.iter_mut().enumerate() {
        if i != r && row[c] != 0.0 {
            let f = row[c];
            for (v, pv) in row.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
        }
    }
    let f = obj[c];
    for (v, pv) in obj.iter_mut().zip(&prow) {
        *v -= f * pv;
    }
    basis[r] = c;
}

/// Minimizes with Bland's rule over columns `0..allowed`; `obj` holds reduced
/// costs and, in its last slot, minus the objective.
fn simplex(tab: &mut [Vec<f64>], obj: &mut [f64], basis: &mut [usize], allowed: usize) {
    let rhs = obj.len() - 1;
    loop {
        let Some(c) = (0..allowed).find(|&j| obj[j] < -TOL) else {
            return;
        };
        let mut best: Option<(f64, usize)> = None;
        for (r, row) in tab.iter().enumerate() {
            if row[c] > TOL {
                let ratio = row[rhs] / row[c];
                let better = match best {
                    None => true,
                    Some((b, br)) => ratio < b - TOL || (ratio <= b + TOL && basis[r] < basis[br]),
                };
                if better {
                    best = Some((ratio, r));
                }
            }
        }
        let (_, r) = best.expect("transportation LP is bounded");
        pivot(tab, obj, basis, r, c);
    }
}

/// Balanced transportation problem solved as a dense LP with the two-phase
/// tableau simplex. `cost[i * demand.len() + j]` is the cost of moving a unit
/// from supply `i` to demand `j`.
pub fn lp_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> f64 {
    let (ns, nd) = (supply.len(), demand.len());
    let n = ns * nd;
    let m = ns + nd;
    let cols = n + m + 1;
    let rhs = cols - 1;
    let mut tab = vec![vec![0.0; cols]; m];
    for i in 0..ns {
        for j in 0..nd {
            tab[i][i * nd + j] = 1.0;
            tab[ns + j][i * nd + j] = 1.0;
        }
    }
    for r in 0..m {
        tab[r][n + r] = 1.0;
        tab[r][rhs] = if r < ns { supply[r] } else { demand[r - ns] };
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // phase 1: minimize the sum of artificials
    let mut obj = vec![0.0; cols];
    for row in &tab {
        for j in 0..n {
            obj[j] -= row[j];
        }
        obj[rhs] -= row[rhs];
    }
    simplex(&mut tab, &mut obj, &mut basis, n);
    assert!(obj[rhs].abs() < 1e-9, "transportation LP infeasible");
    for r in 0..m {
        if basis[r] >= n {
            if let Some(c) = (0..n).find(|&j| tab[r][j].abs() > TOL) {
                pivot(&mut tab, &mut obj, &mut basis, r, c);
            }
        }
    }

    // phase 2
    let mut obj = vec![0.0; cols];
    obj[..n].copy_from_slice(cost);
    for r in 0..m {
        let cb = if basis[r] < n { cost[basis[r]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..cols {
                obj[j] -= cb * tab[r][j];
            }
        }
    }
    simplex(&mut tab, &mut obj, &mut basis, n);
    -obj[rhs]
}

/// EMD between two same-size maps on the full, uncancelled transport problem.
pub fn oracle_emd(pred: &[f64], gt: &[f64], width: usize) -> f64 {
    let ps: f64 = pred.iter().sum();
    let gs: f64 = gt.iter().sum();
    let supply: Vec<f64> = pred.iter().map(|v| v / ps).collect();
    let demand: Vec<f64> = gt.iter().map(|v| v / gs).collect();
    let mut cost = Vec::with_capacity(supply.len() * demand.len());
    for i in 0..supply.len() {
        for j in 0..demand.len() {
            cost.push(cell_distance(i, j, width));
        }
    }
    lp_transport(&supply, &demand, &cost)
}

/// Second implementation of the tiny classifier's forward pass, working on
/// channel planes straight from the flat parameter layout.
pub fn naive_logits(params: &[f64], side: usize, classes: usize, x: &[f64]) -> Vec<f64> {
    let filters = 8;
    let cs = side - 2;
    let ps = cs / 2;
    let plane = |c: usize, y: usize, xx: usize| x[(y * side + xx) * 3 + c];
    let w = |o: usize, i: usize, ky: usize, kx: usize| params[o * 27 + i * 9 + ky * 3 + kx];
    let conv_b = &params[216..224];
    let mut act = vec![vec![0.0; cs * cs]; filters];
    for (o, a) in act.iter_mut().enumerate() {
        for y in 0..cs {
            for xx in 0..cs {
                let mut s = conv_b[o];
                for i in 0..3 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            s += w(o, i, ky, kx) * plane(i, y + ky, xx + kx);
                        }
                    }
                }
                a[y * cs + xx] = if s > 0.0 { s } else { 0.0 };
            }
        }
    }
    let flen = ps * ps * filters;
    let mut feat = vec![0.0; flen];
    for o in 0..filters {
        for py in 0..ps {
            for px in 0..ps {
                let a = &act[o];
                let v = a[2 * py * cs + 2 * px]
                    + a[2 * py * cs + 2 * px + 1]
                    + a[(2 * py + 1) * cs + 2 * px]
                    + a[(2 * py + 1) * cs + 2 * px + 1];
                feat[(py * ps + px) * filters + o] = v / 4.0;
            }
        }
    }
    let fc_w = &params[224..224 + classes * flen];
    let fc_b = &params[224 + classes * flen..];
    (0..classes)
        .map(|k| {
            let mut s = fc_b[k];
            for f in 0..flen {
                s += fc_w[k * flen + f] * feat[f];
            }
            s
        })
        .collect()
}

pub fn naive_loss(params: &[f64], side: usize, classes: usize, x: &[f64], label: usize) -> f64 {
    let z = naive_logits(params, side, classes, x);
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
    lse - z[label]
}

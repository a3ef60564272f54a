//! Minimization of `w^T K w` over the probability simplex for dense SPD `K`.

use std::collections::VecDeque;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

#[derive(Debug, Clone, PartialEq)]
pub struct QpOutcome {
    pub w: Vec<f64>,
    pub energy: f64,
    pub iterations: usize,
    /// Largest KKT violation relative to the energy level.
    pub residual: f64,
}

pub trait SimplexQpSolver: Named + Send + Sync {
    fn minimize(&self, k: &DMatrix<f64>, warm: Option<&[f64]>, tol: f64) -> Result<QpOutcome>;
}

/// Euclidean projection onto `{w >= 0, sum w = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let cand = (cum - 1.0) / (i + 1) as f64;
        if ui - cand > 0.0 {
            tau = cand;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

fn energy(k: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    w.dot(&(k * w))
}

/// KKT violation: on the support `(Kw)_i` equals the level `w^T K w`, and
/// off it `(Kw)_j` is not below the level.
pub fn kkt_residual(k: &DMatrix<f64>, w: &[f64]) -> f64 {
    let wv = DVector::from_column_slice(w);
    let kw = k * &wv;
    let mu = wv.dot(&kw);
    let scale = mu.abs().max(f64::MIN_POSITIVE);
    let wmax = w.iter().cloned().fold(0.0, f64::max);
    let mut r = 0.0f64;
    for i in 0..w.len() {
        let gap = kw[i] - mu;
        if w[i] > 1e-10 * wmax {
            r = r.max(gap.abs() * (w[i] / wmax).min(1.0));
        }
        r = r.max(-gap);
    }
    r / scale
}

/// Projected gradient with Barzilai-Borwein steps and a nonmonotone line search.
pub struct ProjectedBb {
    pub max_iter: usize,
}

impl Named for ProjectedBb {
    fn name(&self) -> &'static str {
        "projected_bb"
    }
}

impl SimplexQpSolver for ProjectedBb {
    fn minimize(&self, k: &DMatrix<f64>, warm: Option<&[f64]>, tol: f64) -> Result<QpOutcome> {
        let n = k.nrows();
        let mut w = DVector::from_column_slice(&match warm {
            Some(w0) => project_simplex(w0),
            None => vec![1.0 / n as f64; n],
        });
        let mut g = 2.0 * (k * &w);
        let mut f = w.dot(&g) * 0.5;
        let mut recent: VecDeque<f64> = VecDeque::from(vec![f]);
        let mut alpha = 1.0 / k.diagonal().amax().max(f64::MIN_POSITIVE);
        for it in 1..=self.max_iter {
            let res = kkt_residual(k, w.as_slice());
            if res < tol {
                return Ok(QpOutcome { w: w.as_slice().to_vec(), energy: f, iterations: it - 1, residual: res });
            }
            let fmax = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let target = DVector::from_vec(project_simplex((&w - alpha * &g).as_slice()));
            let d = &target - &w;
            let slope = g.dot(&d);
            let mut lam = 1.0;
            let (mut w_new, mut f_new);
            loop {
                w_new = &w + lam * &d;
                f_new = energy(k, &w_new);
                if f_new <= fmax + 1e-4 * lam * slope || lam < 1e-12 {
                    break;
                }
                lam *= 0.5;
            }
            let g_new = 2.0 * (k * &w_new);
            let s = &w_new - &w;
            let y = &g_new - &g;
            let sy = s.dot(&y);
            alpha = if sy > 0.0 { (s.dot(&s) / sy).clamp(1e-12, 1e12) } else { alpha * 2.0 };
            w = w_new;
            g = g_new;
            f = f_new;
            recent.push_back(f);
            if recent.len() > 10 {
                recent.pop_front();
            }
        }
        let res = kkt_residual(k, w.as_slice());
        Err(Error::NoConvergence { iterations: self.max_iter, residual: res })
    }
}

/// Primal active-set method: equality-constrained solves on the support via
/// Cholesky, dropping blocking coordinates and adding the most violated one.
pub struct ActiveSet {
    pub max_iter: usize,
}

impl Named for ActiveSet {
    fn name(&self) -> &'static str {
        "active_set"
    }
}

impl SimplexQpSolver for ActiveSet {
    fn minimize(&self, k: &DMatrix<f64>, warm: Option<&[f64]>, tol: f64) -> Result<QpOutcome> {
        let n = k.nrows();
        let mut w: Vec<f64> = match warm {
            Some(w0) => project_simplex(w0),
            None => vec![1.0 / n as f64; n],
        };
        let wmax = w.iter().cloned().fold(0.0, f64::max);
        for x in w.iter_mut() {
            if *x <= 1e-12 * wmax {
                *x = 0.0;
            }
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let mut support: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
        for it in 1..=self.max_iter {
            let m = support.len();
            let ks = DMatrix::from_fn(m, m, |a, b| k[(support[a], support[b])]);
            let chol = ks.cholesky().ok_or(Error::NotPositiveDefinite(m))?;
            let x = chol.solve(&DVector::from_element(m, 1.0));
            let sx: f64 = x.sum();
            let target: Vec<f64> = x.iter().map(|v| v / sx).collect();
            if target.iter().all(|&v| v >= 0.0) {
                for (a, &i) in support.iter().enumerate() {
                    w[i] = target[a];
                }
                let wv = DVector::from_column_slice(&w);
                let kw = k * &wv;
                let mu = wv.dot(&kw);
                let worst = (0..n)
                    .filter(|i| !support.contains(i))
                    .map(|j| (j, kw[j] - mu))
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                match worst {
                    Some((j, gap)) if gap < -tol * mu.abs() => {
                        support.push(j);
                        support.sort_unstable();
                    }
                    _ => {
                        let res = kkt_residual(k, &w);
                        return Ok(QpOutcome { w, energy: mu, iterations: it, residual: res });
                    }
                }
            } else {
                // move towards the target until the first coordinate hits zero
                let mut step = 1.0f64;
                for (a, &i) in support.iter().enumerate() {
                    let d = target[a] - w[i];
                    if d < 0.0 {
                        step = step.min(-w[i] / d);
                    }
                }
                for (a, &i) in support.iter().enumerate() {
                    w[i] += step * (target[a] - w[i]);
                }
                let wmax = w.iter().cloned().fold(0.0, f64::max);
                support.retain(|&i| w[i] > 1e-14 * wmax);
                for i in 0..n {
                    if !support.contains(&i) {
                        w[i] = 0.0;
                    }
                }
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= s);
            }
        }
        Err(Error::NoConvergence { iterations: self.max_iter, residual: kkt_residual(k, &w) })
    }
}

/// Projected BB to locate the support, then exact active-set refinement.
pub struct BbThenActiveSet;

impl Named for BbThenActiveSet {
    fn name(&self) -> &'static str {
        "bb_then_active_set"
    }
}

impl SimplexQpSolver for BbThenActiveSet {
    fn minimize(&self, k: &DMatrix<f64>, warm: Option<&[f64]>, tol: f64) -> Result<QpOutcome> {
        let coarse = match (ProjectedBb { max_iter: 400 }).minimize(k, warm, 1e-4) {
            Ok(o) => o,
            Err(Error::NoConvergence { .. }) => QpOutcome {
                w: vec![1.0 / k.nrows() as f64; k.nrows()],
                energy: f64::NAN,
                iterations: 400,
                residual: f64::NAN,
            },
            Err(e) => return Err(e),
        };
        let mut fine = (ActiveSet { max_iter: 4 * k.nrows() + 50 }).minimize(k, Some(&coarse.w), tol)?;
        fine.iterations += coarse.iterations;
        Ok(fine)
    }
}

pub fn qp_registry() -> &'static Registry<dyn SimplexQpSolver> {
    static REG: OnceLock<Registry<dyn SimplexQpSolver>> = OnceLock::new();
    REG.get_or_init(|| {
        let bb: Arc<dyn SimplexQpSolver> = Arc::new(ProjectedBb { max_iter: 20_000 });
        let act: Arc<dyn SimplexQpSolver> = Arc::new(ActiveSet { max_iter: 10_000 });
        let both: Arc<dyn SimplexQpSolver> = Arc::new(BbThenActiveSet);
        Registry::new("QP solver").with(bb).with(act).with(both).with_default("bb_then_active_set")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DMatrix<f64> {
        // exponential kernel plus a constant: positive definite, positive entries
        DMatrix::from_fn(n, n, |i, j| 1.0 + (-(i as f64 - j as f64).abs() / 5.0).exp() + if i == j { 0.1 } else { 0.0 })
    }

    #[test]
    fn projection() {
        let p = project_simplex(&[0.5, 0.9, -1.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((p[0] - 0.3).abs() < 1e-15 && (p[1] - 0.7).abs() < 1e-15 && p[2] == 0.0);
    }

    #[test]
    fn solvers_agree() {
        let k = spd(40);
        let reg = qp_registry();
        let mut energies = Vec::new();
        for name in reg.names() {
            let o = reg.get(name).unwrap().minimize(&k, None, 1e-9).unwrap();
            assert!(o.residual < 1e-6, "{name}: {}", o.residual);
            assert!(o.w.iter().all(|&x| x >= 0.0));
            energies.push(o.energy);
        }
        for e in &energies {
            assert!((e - energies[0]).abs() < 1e-8 * energies[0]);
        }
    }

    #[test]
    fn inactive_coordinate_found() {
        // the third point is expensive: optimum puts no mass there
        let k = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.9, 0.0, 1.0, 0.9, 0.9, 0.9, 5.0]);
        let o = qp_registry().resolve(None).unwrap().minimize(&k, None, 1e-12).unwrap();
        assert!(o.w[2] == 0.0 && (o.w[0] - 0.5).abs() < 1e-12);
        assert!((o.energy - 0.5).abs() < 1e-12);
    }
}

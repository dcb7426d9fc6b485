#![allow(dead_code)]

use adaptive_lsvi::{Policy, Spec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform direction scaled to a uniform radius in `[0, 1]`.
pub fn random_features(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            let r: f64 = rng.random();
            v.iter().map(|x| x / norm * r).collect()
        })
        .collect()
}

/// From-scratch `λI + Σ φφᵀ`, its inverse and log-determinant via nalgebra.
pub struct GramOracle {
    pub mat: DMatrix<f64>,
    pub inv: DMatrix<f64>,
    pub log_det: f64,
}

pub fn gram_oracle(d: usize, lambda: f64, phis: &[Vec<f64>]) -> GramOracle {
    let x = DMatrix::from_fn(phis.len(), d, |i, j| phis[i][j]);
    let mat = DMatrix::identity(d, d) * lambda + x.transpose() * &x;
    let chol = mat.clone().cholesky().expect("positive definite");
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let inv = chol.inverse();
    GramOracle { mat, inv, log_det }
}

pub fn to_dmatrix(m: &adaptive_lsvi::Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max() / b.abs().max()
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Value of `policy` from each start state by pushing the state distribution forward.
pub fn forward_values(spec: &Spec, policy: &Policy) -> Vec<f64> {
    let (n_s, horizon) = (spec.n_states(), spec.horizon());
    (0..n_s)
        .map(|start| {
            let mut dist = vec![0.0; n_s];
            dist[start] = 1.0;
            let mut total = 0.0;
            for h in 0..horizon {
                let mut next = vec![0.0; n_s];
                for s in 0..n_s {
                    if dist[s] == 0.0 {
                        continue;
                    }
                    let a = policy.action(h, s);
                    total += dist[s] * spec.reward(h, s, a);
                    for (sp, p) in spec.transition(h, s, a).iter().enumerate() {
                        next[sp] += dist[s] * p;
                    }
                }
                dist = next;
            }
            total
        })
        .collect()
}

/// Every deterministic Markov policy, in mixed-radix order.
pub fn all_policies(n_s: usize, n_a: usize, horizon: usize) -> Vec<Policy> {
    let slots = n_s * horizon;
    let total = n_a.pow(slots as u32);
    (0..total)
        .map(|mut code| {
            let mut table = vec![vec![0; n_s]; horizon];
            for slot in 0..slots {
                table[slot / n_s][slot % n_s] = code % n_a;
                code /= n_a;
            }
            Policy::new(table)
        })
        .collect()
}

/// Random tabular MDP with rows drawn uniformly from the simplex.
pub fn random_tabular(n_s: usize, n_a: usize, horizon: usize, seed: u64) -> (Vec<Vec<Vec<Vec<f64>>>>, Vec<Vec<Vec<f64>>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Vec::new();
    let mut r = Vec::new();
    for _ in 0..horizon {
        let mut ph = Vec::new();
        let mut rh = Vec::new();
        for _ in 0..n_s {
            let mut pa = Vec::new();
            let mut ra = Vec::new();
            for _ in 0..n_a {
                let w: Vec<f64> = (0..n_s).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
                let z: f64 = w.iter().sum();
                pa.push(w.iter().map(|x| x / z).collect());
                ra.push(rng.random());
            }
            ph.push(pa);
            rh.push(ra);
        }
        p.push(ph);
        r.push(rh);
    }
    (p, r)
}

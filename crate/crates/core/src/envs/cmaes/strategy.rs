//! CMA-ES with an externally controlled step size.
//!
//! The generation update follows the standard (mu/mu_w, lambda) scheme with
//! weighted recombination, rank-one and rank-mu covariance updates and both
//! evolution paths. The step size is never adapted here; [`csa_step_size`]
//! computes what cumulative step-size adaptation would choose.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use super::functions::Objective;
use crate::error::{Error, Result};
use crate::seed::Rng;

pub const MAX_SIGMA: f64 = 10.0;

pub fn population_size(n: usize) -> usize {
    4 + (3.0 * (n as f64).ln()).floor() as usize
}

/// Approximation of E||N(0, I_n)||.
pub fn expected_norm(n: usize) -> f64 {
    let n = n as f64;
    n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))
}

/// Default strategy parameters for dimension `n`.
#[derive(Debug, Clone)]
pub struct CmaParameters {
    pub dimension: usize,
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
}

impl CmaParameters {
    pub fn new(n: usize) -> Self {
        let nf = n as f64;
        let lambda = population_size(n);
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));

        CmaParameters {
            dimension: n,
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c1,
            c_mu,
            chi_n: expected_norm(n),
        }
    }
}

/// Fixed-capacity history, most recent value first, zero padded.
#[derive(Debug, Clone)]
pub struct History {
    values: VecDeque<f64>,
    capacity: usize,
}

impl History {
    pub fn new(capacity: usize) -> Self {
        History {
            values: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, v: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_back();
        }
        self.values.push_front(v);
    }

    pub fn latest(&self) -> Option<f64> {
        self.values.front().copied()
    }

    pub fn slots(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .copied()
            .chain(std::iter::repeat(0.0))
            .take(self.capacity)
    }
}

#[derive(Debug, Clone)]
pub struct CmaState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub sigma: f64,
    pub path_sigma: DVector<f64>,
    pub path_c: DVector<f64>,
    pub generation: usize,
    pub best_fitness_history: History,
    pub fitness_delta_history: History,
    pub sigma_history: History,
    /// Lowest fitness seen in the episode.
    pub best_so_far: f64,
    /// Number of eigenvalue-floor repairs applied to the covariance.
    pub repairs: usize,
    eigenvectors: DMatrix<f64>,
    sqrt_eigenvalues: DVector<f64>,
}

impl CmaState {
    pub fn new(mean: DVector<f64>, sigma: f64, history_length: usize) -> Self {
        let n = mean.len();
        CmaState {
            covariance: DMatrix::identity(n, n),
            sigma,
            path_sigma: DVector::zeros(n),
            path_c: DVector::zeros(n),
            generation: 0,
            best_fitness_history: History::new(history_length),
            fitness_delta_history: History::new(history_length),
            sigma_history: History::new(history_length),
            best_so_far: f64::INFINITY,
            repairs: 0,
            eigenvectors: DMatrix::identity(n, n),
            sqrt_eigenvalues: DVector::from_element(n, 1.0),
            mean,
        }
    }

    /// Draws `C^(1/2) z` for a standard normal `z`.
    pub fn sample_direction(&self, rng: &mut Rng) -> DVector<f64> {
        let n = self.mean.len();
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        &self.eigenvectors * z.component_mul(&self.sqrt_eigenvalues)
    }

    fn inv_sqrt_times(&self, y: &DVector<f64>) -> DVector<f64> {
        let projected = self.eigenvectors.transpose() * y;
        &self.eigenvectors * projected.component_div(&self.sqrt_eigenvalues)
    }

    /// Re-decomposes the covariance, flooring eigenvalues at `1e-14 * trace / n`.
    fn refresh_decomposition(&mut self) -> Result<()> {
        let n = self.mean.len();
        let sym = (&self.covariance + self.covariance.transpose()) * 0.5;
        if sym.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("covariance matrix became non-finite".into()));
        }
        let floor = 1e-14 * sym.trace().max(f64::MIN_POSITIVE) / n as f64;
        let eig = SymmetricEigen::new(sym.clone());
        let needs_repair = eig.eigenvalues.iter().any(|&l| l < floor);
        let values = eig.eigenvalues.map(|l| l.max(floor));
        self.covariance = if needs_repair {
            self.repairs += 1;
            let c = &eig.eigenvectors * DMatrix::from_diagonal(&values) * eig.eigenvectors.transpose();
            (&c + c.transpose()) * 0.5
        } else {
            sym
        };
        if Cholesky::new(self.covariance.clone()).is_none() {
            self.repairs += 1;
            self.covariance = &eig.eigenvectors * DMatrix::from_diagonal(&values) * eig.eigenvectors.transpose()
                + DMatrix::identity(n, n) * floor;
        }
        self.eigenvectors = eig.eigenvectors;
        self.sqrt_eigenvalues = values.map(f64::sqrt);
        Ok(())
    }
}

/// Runs one generation with step size `sigma`. Returns the generation's best fitness.
pub fn cma_generation(
    state: &mut CmaState,
    params: &CmaParameters,
    objective: &Objective,
    sigma: f64,
    rng: &mut Rng,
) -> Result<f64> {
    if !(sigma > 0.0 && sigma <= MAX_SIGMA) {
        return Err(Error::Domain(format!("step size {sigma} outside (0, {MAX_SIGMA}]")));
    }
    let n = params.dimension;
    state.sigma = sigma;

    let directions: Vec<DVector<f64>> = (0..params.lambda).map(|_| state.sample_direction(rng)).collect();
    let mut scored = Vec::with_capacity(params.lambda);
    for (k, y) in directions.iter().enumerate() {
        let x = &state.mean + y * sigma;
        scored.push((objective.evaluate(&x)?, k));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let best = scored[0].0;

    let mut y_w = DVector::zeros(n);
    for (w, &(_, k)) in params.weights.iter().zip(&scored) {
        y_w += &directions[k] * *w;
    }
    state.mean += &y_w * sigma;

    let cs = params.c_sigma;
    state.path_sigma = &state.path_sigma * (1.0 - cs)
        + state.inv_sqrt_times(&y_w) * (cs * (2.0 - cs) * params.mu_eff).sqrt();

    let g = (state.generation + 1) as i32;
    let norm_ps = state.path_sigma.norm();
    let h_sigma = norm_ps / (1.0 - (1.0 - cs).powi(2 * g)).sqrt() < (1.4 + 2.0 / (n as f64 + 1.0)) * params.chi_n;
    let h = if h_sigma { 1.0 } else { 0.0 };

    let cc = params.c_c;
    state.path_c = &state.path_c * (1.0 - cc) + &y_w * (h * (cc * (2.0 - cc) * params.mu_eff).sqrt());

    let weight_sum: f64 = params.weights.iter().sum();
    let decay = 1.0 - params.c1 - params.c_mu * weight_sum + (1.0 - h) * params.c1 * cc * (2.0 - cc);
    let mut cov = &state.covariance * decay;
    cov += &state.path_c * state.path_c.transpose() * params.c1;
    for (w, &(_, k)) in params.weights.iter().zip(&scored) {
        let y = &directions[k];
        cov += y * y.transpose() * (params.c_mu * w);
    }
    state.covariance = cov;
    state.refresh_decomposition()?;

    let previous = state.best_fitness_history.latest();
    state.generation += 1;
    state.best_fitness_history.push(best);
    state.fitness_delta_history.push(previous.map_or(0.0, |p| best - p));
    state.sigma_history.push(sigma);
    state.best_so_far = state.best_so_far.min(best);
    Ok(best)
}

/// Step size chosen by cumulative step-size adaptation for the next generation.
///
/// Before the first generation the current step size is returned unchanged.
pub fn csa_step_size(state: &CmaState, params: &CmaParameters) -> f64 {
    if state.generation == 0 {
        return state.sigma.min(MAX_SIGMA);
    }
    let ratio = state.path_sigma.norm() / params.chi_n;
    let next = state.sigma * ((params.c_sigma / params.d_sigma) * (ratio - 1.0)).exp();
    next.clamp(f64::MIN_POSITIVE, MAX_SIGMA)
}

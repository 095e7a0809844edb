//! Moving-horizon least-squares fault estimation.
//!
//! Over a window of `L` predictor residuals
//! `r_{k,L} = 𝐎_L x̃(k−L+1) + T_L^f f_{k,L} + noise`, the initial state error
//! and the window faults are fitted jointly by ordinary least squares. The
//! solution is written as
//!
//! ```text
//! f̂′ = [𝒢′ + ℳ′ (I − T_L^f 𝒢′)] r_{k,L}
//! 𝒢′ = (T_L^fᵀ T_L^f)⁻¹ T_L^fᵀ
//! Δ  = 𝐎_Lᵀ 𝐎_L − 𝐎_Lᵀ T_L^f 𝒢′ 𝐎_L
//! ℳ′ = −𝒢′ 𝐎_L Δ⁺ 𝐎_Lᵀ
//! ```
//!
//! and only the last block of `f̂′` is reported. Unlike the block-Toeplitz
//! operators of the recursive filter, `𝒢′` and `ℳ′` are dense.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::design::fault_markov;
use crate::linalg::{self, hstack};
use crate::lti::{block_toeplitz, MarkovSequence, PredictorModel};
use crate::sysid::IdentifiedXi;
use crate::{Channel, Error, Result, Scalar};

/// Window operators of the LS estimator.
#[derive(Debug, Clone)]
pub struct MheProblem<T: Scalar> {
    /// Basis of the extended observability range (`L·n_y × n`).
    pub obs: DMatrix<T>,
    pub tf: DMatrix<T>,
    /// `Ψ_L = [𝐎_L T_L^f]`.
    pub psi: DMatrix<T>,
    pub gp: DMatrix<T>,
    pub mp: DMatrix<T>,
    pub delta: DMatrix<T>,
    pub window: usize,
    /// Last `n_f` rows of `𝒢′ + ℳ′(I − T_L^f 𝒢′)`.
    last_block: DMatrix<T>,
    n_f: usize,
    n_y: usize,
}

impl<T: Scalar> MheProblem<T> {
    /// Builds the operators from `T_L^f` Markov blocks and an observability
    /// basis with `L·n_y` rows.
    pub fn from_parts(hf: &MarkovSequence<T>, obs: DMatrix<T>, window: usize) -> Result<Self> {
        if window == 0 || hf.len() < window {
            return Err(Error::validation(format!(
                "window {window} needs {window} fault Markov blocks, got {}",
                hf.len()
            )));
        }
        let (n_y, n_f) = (hf.row_dim(), hf.col_dim());
        if obs.nrows() != window * n_y {
            return Err(Error::validation(
                "observability basis has the wrong row count",
            ));
        }
        let tf = block_toeplitz(&hf.truncated(window)?);
        let expected = window * n_f;
        let rank = linalg::rank(&tf, linalg::default_rank_tol());
        if rank < expected {
            return Err(Error::WindowInversionRank { rank, expected });
        }
        let tft = tf.transpose();
        let gp = (&tft * &tf)
            .cholesky()
            .ok_or(Error::WindowInversionRank { rank, expected })?
            .solve(&tft);
        let o_t = obs.transpose();
        let tg = &tf * &gp;
        let delta = &o_t * &obs - &o_t * &tg * &obs;
        let delta_pinv = linalg::pinv(&delta, linalg::default_rank_tol());
        let mp = -(&gp * &obs * delta_pinv * &o_t);
        let proj = DMatrix::identity(window * n_y, window * n_y) - tg;
        let full = &gp + &mp * proj;
        let last_block = full.rows((window - 1) * n_f, n_f).into_owned();
        let psi = hstack(&[&obs, &tf]);
        Ok(Self {
            obs,
            tf,
            psi,
            gp,
            mp,
            delta,
            window,
            last_block,
            n_f,
            n_y,
        })
    }

    /// Operators from a known predictor.
    pub fn from_predictor(pred: &PredictorModel<T>, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::validation("window must be at least 1"));
        }
        let hf = pred.channel_system(Channel::F).markov(window);
        let obs = linalg::observability(&pred.phi, &pred.c, window);
        Self::from_parts(&hf, obs, window)
    }

    /// Operators from identified Markov parameters. `T_L^f` comes from the
    /// fault channel; the observability range is spanned by the leading
    /// `order` left singular vectors of the Hankel matrix with block `(t, s)`
    /// equal to `[H_{t+s}^u H_{t+s}^y]` (`t < L`, `1 ≤ s ≤ cols`; zero past `p`).
    pub fn from_xi(
        xi: &IdentifiedXi<T>,
        sensors: &[usize],
        window: usize,
        order: usize,
        cols: usize,
    ) -> Result<Self> {
        if window > xi.past_horizon + 1 {
            return Err(Error::validation(format!(
                "window {window} exceeds the identified Markov length {}",
                xi.past_horizon + 1
            )));
        }
        let hf = fault_markov(&xi.hy, sensors, window)?;
        let obs = observability_basis_from_xi(xi, window, order, cols)?;
        Self::from_parts(&hf, obs, window)
    }

    pub fn faults(&self) -> usize {
        self.n_f
    }
    pub fn outputs(&self) -> usize {
        self.n_y
    }

    /// Full stacked estimate `f̂′` for one window (`L·n_y` residuals,
    /// oldest first).
    pub fn estimate_window(&self, r: &DVector<T>) -> Result<DVector<T>> {
        self.check_window(r)?;
        let proj_r = r - &self.tf * (&self.gp * r);
        Ok(&self.gp * r + &self.mp * proj_r)
    }

    /// Last block of [`estimate_window`](Self::estimate_window): `f̂(k)`.
    pub fn estimate_last(&self, r: &DVector<T>) -> Result<DVector<T>> {
        self.check_window(r)?;
        Ok(&self.last_block * r)
    }

    fn check_window(&self, r: &DVector<T>) -> Result<()> {
        if r.len() != self.window * self.n_y {
            return Err(Error::validation(format!(
                "residual window has length {}, expected {}",
                r.len(),
                self.window * self.n_y
            )));
        }
        Ok(())
    }
}

/// Orthonormal basis of the observability range estimated from Ξ.
pub fn observability_basis_from_xi<T: Scalar>(
    xi: &IdentifiedXi<T>,
    window: usize,
    order: usize,
    cols: usize,
) -> Result<DMatrix<T>> {
    let io = xi.io_markov();
    let (n_y, q) = (io.row_dim(), io.col_dim());
    if order == 0 || order > window * n_y || order > cols * q {
        return Err(Error::validation(format!(
            "observability order {order} does not fit the Hankel size"
        )));
    }
    let p = xi.past_horizon;
    let mut hankel = DMatrix::zeros(window * n_y, cols * q);
    for t in 0..window {
        for s in 1..=cols {
            if t + s <= p {
                linalg::set_block(&mut hankel, t * n_y, (s - 1) * q, &io[t + s]);
            }
        }
    }
    let svd = linalg::svd(&hankel);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("Hankel SVD failed".into()))?;
    Ok(u.columns(0, order).into_owned())
}

/// Batch estimate for one window.
pub fn mhe_estimate<T: Scalar>(
    problem: &MheProblem<T>,
    r_window: &DVector<T>,
) -> Result<DVector<T>> {
    problem.estimate_last(r_window)
}

/// Streaming estimator over a residual sequence.
#[derive(Debug, Clone)]
pub struct MheRunner<T: Scalar> {
    problem: MheProblem<T>,
    buffer: VecDeque<DVector<T>>,
}

impl<T: Scalar> MheRunner<T> {
    pub fn new(problem: MheProblem<T>) -> Self {
        let cap = problem.window;
        Self {
            problem,
            buffer: VecDeque::with_capacity(cap),
        }
    }

    pub fn problem(&self) -> &MheProblem<T> {
        &self.problem
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
    }

    /// Adds `r(k)`; returns `f̂(k)` once `L` residuals have been seen and
    /// `None` during warm-up.
    pub fn push(&mut self, r: &DVector<T>) -> Result<Option<DVector<T>>> {
        let (n_y, n_f, window) = (self.problem.n_y, self.problem.n_f, self.problem.window);
        if r.len() != n_y {
            return Err(Error::validation("residual has the wrong dimension"));
        }
        if self.buffer.len() == window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(r.clone());
        if self.buffer.len() < window {
            return Ok(None);
        }
        let mut f = DVector::zeros(n_f);
        for (t, rt) in self.buffer.iter().enumerate() {
            f += self.problem.last_block.columns(t * n_y, n_y) * rt;
        }
        Ok(Some(f))
    }
}

/// Runs the estimator over residuals (one sample per row). Warm-up samples
/// are `None`.
pub fn run_mhe<T: Scalar>(
    problem: &MheProblem<T>,
    residuals: &DMatrix<T>,
) -> Result<Vec<Option<DVector<T>>>> {
    let mut runner = MheRunner::new(problem.clone());
    (0..residuals.nrows())
        .map(|k| runner.push(&residuals.row(k).transpose()))
        .collect()
}

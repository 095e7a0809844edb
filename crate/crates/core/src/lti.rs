//! Linear time-invariant systems, the innovation/predictor conversion and
//! the structured matrices (block Toeplitz, block Hankel, extended
//! observability) built from them.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{self, hstack, set_block};
use crate::{Error, Result, Scalar};

/// Plain discrete-time system `x⁺ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem<T: Scalar> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
}

impl<T: Scalar> LtiSystem<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        check_shape("A", &a, n, n)?;
        check_shape("B", &b, n, b.ncols())?;
        check_shape("C", &c, c.nrows(), n)?;
        check_shape("D", &d, c.nrows(), b.ncols())?;
        Ok(Self { a, b, c, d })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Impulse response `{D, CB, CAB, ...}` of length `len`.
    pub fn markov(&self, len: usize) -> MarkovSequence<T> {
        let mut blocks = Vec::with_capacity(len);
        if len > 0 {
            blocks.push(self.d.clone());
        }
        let mut cak = self.c.clone();
        for _ in 1..len {
            blocks.push(&cak * &self.b);
            cak = &cak * &self.a;
        }
        MarkovSequence {
            blocks,
            rows: self.outputs(),
            cols: self.inputs(),
        }
    }

    /// `𝒯_L(A, B, C, D)`.
    pub fn toeplitz(&self, len: usize) -> DMatrix<T> {
        block_toeplitz(&self.markov(len))
    }

    /// Runs the system over `inputs` (one sample per row) from `x0`.
    pub fn simulate(&self, inputs: &DMatrix<T>, x0: &DVector<T>) -> DMatrix<T> {
        let n_samples = inputs.nrows();
        let mut out = DMatrix::zeros(n_samples, self.outputs());
        let mut x = x0.clone();
        for k in 0..n_samples {
            let u = inputs.row(k).transpose();
            let y = &self.c * &x + &self.d * &u;
            out.row_mut(k).copy_from(&y.transpose());
            x = &self.a * &x + &self.b * &u;
        }
        out
    }
}

pub(crate) fn check_shape<T: Scalar>(
    name: &str,
    m: &DMatrix<T>,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::validation(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Physical plant with additive faults and Gaussian noise:
///
/// ```text
/// ξ(k+1) = A ξ(k) + B u(k) + E f(k) + F w(k)
/// y(k)   = C ξ(k) + D u(k) + G f(k) + v(k)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel<T: Scalar> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    pub e: DMatrix<T>,
    pub f: DMatrix<T>,
    pub g: DMatrix<T>,
    /// Process noise covariance (`n_w × n_w`).
    pub q: DMatrix<T>,
    /// Measurement noise covariance (`n_y × n_y`).
    pub r: DMatrix<T>,
}

impl<T: Scalar> StateSpaceModel<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        d: DMatrix<T>,
        e: DMatrix<T>,
        f: DMatrix<T>,
        g: DMatrix<T>,
        q: DMatrix<T>,
        r: DMatrix<T>,
    ) -> Result<Self> {
        let n = a.nrows();
        let (n_u, n_y, n_f, n_w) = (b.ncols(), c.nrows(), g.ncols(), f.ncols());
        check_shape("A", &a, n, n)?;
        check_shape("B", &b, n, n_u)?;
        check_shape("C", &c, n_y, n)?;
        check_shape("D", &d, n_y, n_u)?;
        check_shape("E", &e, n, n_f)?;
        check_shape("F", &f, n, n_w)?;
        check_shape("G", &g, n_y, n_f)?;
        check_shape("Q", &q, n_w, n_w)?;
        check_shape("R", &r, n_y, n_y)?;
        let tol = T::lit(1e-9);
        if !linalg::is_symmetric(&q, tol) || !linalg::is_symmetric(&r, tol) {
            return Err(Error::validation("noise covariances must be symmetric"));
        }
        linalg::psd_factor(&q)?;
        linalg::psd_factor(&r)?;
        Ok(Self {
            a,
            b,
            c,
            d,
            e,
            f,
            g,
            q,
            r,
        })
    }

    /// Sensor-fault plant: `E = 0`, `G` = identity columns of the faulty
    /// sensors (zero-based indices).
    #[allow(clippy::too_many_arguments)]
    pub fn with_sensor_faults(
        a: DMatrix<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        d: DMatrix<T>,
        f: DMatrix<T>,
        q: DMatrix<T>,
        r: DMatrix<T>,
        sensors: &[usize],
    ) -> Result<Self> {
        let n_y = c.nrows();
        validate_sensors(sensors, n_y)?;
        let e = DMatrix::zeros(a.nrows(), sensors.len());
        let g = linalg::selection_columns(n_y, sensors);
        Self::new(a, b, c, d, e, f, g, q, r)
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
    pub fn faults(&self) -> usize {
        self.g.ncols()
    }
    pub fn noise_inputs(&self) -> usize {
        self.f.ncols()
    }
}

pub(crate) fn validate_sensors(sensors: &[usize], n_y: usize) -> Result<()> {
    if sensors.is_empty() {
        return Err(Error::validation("at least one faulty sensor is required"));
    }
    for (i, &s) in sensors.iter().enumerate() {
        if s >= n_y {
            return Err(Error::validation(format!(
                "sensor index {} out of range for {n_y} outputs",
                s + 1
            )));
        }
        if sensors[..i].contains(&s) {
            return Err(Error::validation(format!("sensor {} listed twice", s + 1)));
        }
    }
    Ok(())
}

/// One-step-ahead predictor form
///
/// ```text
/// x(k+1) = Φ x(k) + B̃ u(k) + Ẽ f(k) + K y(k)
/// y(k)   = C x(k) + D u(k) + G f(k) + e(k)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel<T: Scalar> {
    pub phi: DMatrix<T>,
    pub btilde: DMatrix<T>,
    pub k: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    pub etilde: DMatrix<T>,
    pub g: DMatrix<T>,
    pub sigma_e: DMatrix<T>,
}

impl<T: Scalar> PredictorModel<T> {
    /// Builds a predictor from its matrices, checking dimensions.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        phi: DMatrix<T>,
        btilde: DMatrix<T>,
        k: DMatrix<T>,
        c: DMatrix<T>,
        d: DMatrix<T>,
        etilde: DMatrix<T>,
        g: DMatrix<T>,
        sigma_e: DMatrix<T>,
    ) -> Result<Self> {
        let n = phi.nrows();
        let (n_u, n_y, n_f) = (btilde.ncols(), c.nrows(), g.ncols());
        check_shape("Phi", &phi, n, n)?;
        check_shape("Btilde", &btilde, n, n_u)?;
        check_shape("K", &k, n, n_y)?;
        check_shape("C", &c, n_y, n)?;
        check_shape("D", &d, n_y, n_u)?;
        check_shape("Etilde", &etilde, n, n_f)?;
        check_shape("G", &g, n_y, n_f)?;
        check_shape("SigmaE", &sigma_e, n_y, n_y)?;
        Ok(Self {
            phi,
            btilde,
            k,
            c,
            d,
            etilde,
            g,
            sigma_e,
        })
    }

    /// Predictor with sensor faults on `sensors`: `Ẽ = −K^{[J]}`, `G = I^{[J]}`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_sensor_faults(
        phi: DMatrix<T>,
        btilde: DMatrix<T>,
        k: DMatrix<T>,
        c: DMatrix<T>,
        d: DMatrix<T>,
        sigma_e: DMatrix<T>,
        sensors: &[usize],
    ) -> Result<Self> {
        let n_y = c.nrows();
        validate_sensors(sensors, n_y)?;
        if k.ncols() != n_y {
            return Err(Error::validation("K must have one column per output"));
        }
        let g = linalg::selection_columns(n_y, sensors);
        let etilde = -(&k * &g);
        Self::new(phi, btilde, k, c, d, etilde, g, sigma_e)
    }

    pub fn states(&self) -> usize {
        self.phi.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.btilde.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
    pub fn faults(&self) -> usize {
        self.g.ncols()
    }

    /// The subsystem driving the outputs from one channel.
    pub fn channel_system(&self, channel: Channel) -> LtiSystem<T> {
        let (b, d) = match channel {
            Channel::U => (self.btilde.clone(), self.d.clone()),
            Channel::Y => (
                self.k.clone(),
                DMatrix::zeros(self.outputs(), self.outputs()),
            ),
            Channel::F => (self.etilde.clone(), self.g.clone()),
        };
        LtiSystem {
            a: self.phi.clone(),
            b,
            c: self.c.clone(),
            d,
        }
    }

    /// The system behind `T_L^z`: `(Φ, [B̃ K], −C, [−D I])`.
    pub fn z_system(&self) -> LtiSystem<T> {
        let n_y = self.outputs();
        LtiSystem {
            a: self.phi.clone(),
            b: hstack(&[&self.btilde, &self.k]),
            c: -&self.c,
            d: hstack(&[&(-&self.d), &DMatrix::identity(n_y, n_y)]),
        }
    }

    /// The fault-free system `(Φ, [B̃ K], C, [D 0])` whose Markov
    /// parameters make up Ξ.
    pub fn io_system(&self) -> LtiSystem<T> {
        let n_y = self.outputs();
        LtiSystem {
            a: self.phi.clone(),
            b: hstack(&[&self.btilde, &self.k]),
            c: self.c.clone(),
            d: hstack(&[&self.d, &DMatrix::zeros(n_y, n_y)]),
        }
    }
}

/// Input channel of the predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    U,
    Y,
    F,
}

/// Ordered, uniformly sized sequence of Markov parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSequence<T: Scalar> {
    blocks: Vec<DMatrix<T>>,
    rows: usize,
    cols: usize,
}

impl<T: Scalar> MarkovSequence<T> {
    pub fn new(blocks: Vec<DMatrix<T>>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::validation("Markov sequence must have at least one block"))?;
        let (rows, cols) = first.shape();
        if let Some(i) = blocks.iter().position(|b| b.shape() != (rows, cols)) {
            return Err(Error::validation(format!(
                "Markov block {i} is {:?}, expected {rows}x{cols}",
                blocks[i].shape()
            )));
        }
        Ok(Self { blocks, rows, cols })
    }

    /// Builds `len` blocks from a generator.
    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> DMatrix<T>) -> Result<Self> {
        Self::new((0..len).map(&mut f).collect())
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }
    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
    pub fn row_dim(&self) -> usize {
        self.rows
    }
    pub fn col_dim(&self) -> usize {
        self.cols
    }
    pub fn blocks(&self) -> &[DMatrix<T>] {
        &self.blocks
    }
    pub fn into_blocks(self) -> Vec<DMatrix<T>> {
        self.blocks
    }

    /// First `len` blocks.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.len() {
            return Err(Error::validation(format!(
                "cannot take {len} blocks from a sequence of {}",
                self.len()
            )));
        }
        Ok(Self {
            blocks: self.blocks[..len].to_vec(),
            rows: self.rows,
            cols: self.cols,
        })
    }

    /// Largest absolute elementwise difference to another sequence.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a - b).amax())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Frobenius norm of all blocks stacked.
    pub fn frobenius(&self) -> T {
        self.blocks
            .iter()
            .map(|b| b.norm_squared())
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }
}

impl<T: Scalar> std::ops::Index<usize> for MarkovSequence<T> {
    type Output = DMatrix<T>;
    fn index(&self, i: usize) -> &DMatrix<T> {
        &self.blocks[i]
    }
}

/// Lower block-triangular Toeplitz matrix with `H_0` on the diagonal.
pub fn block_toeplitz<T: Scalar>(seq: &MarkovSequence<T>) -> DMatrix<T> {
    let (p, q, len) = (seq.rows, seq.cols, seq.len());
    let mut out = DMatrix::zeros(len * p, len * q);
    for i in 0..len {
        for j in 0..=i {
            set_block(&mut out, i * p, j * q, &seq.blocks[i - j]);
        }
    }
    out
}

/// Block Hankel matrix with block `(i, j)` = `W_{i+j+1}` (zero-based `i, j`),
/// i.e. the top-left block is `W_1`.
pub fn block_hankel<T: Scalar>(seq: &MarkovSequence<T>, l: usize, m: usize) -> Result<DMatrix<T>> {
    if l == 0 || m == 0 {
        return Err(Error::validation(
            "Hankel needs at least one block row and column",
        ));
    }
    if seq.len() < l + m {
        return Err(Error::validation(format!(
            "Hankel {l}x{m} needs W_1..W_{} but the sequence has {} blocks",
            l + m - 1,
            seq.len()
        )));
    }
    let (p, q) = (seq.rows, seq.cols);
    let mut out = DMatrix::zeros(l * p, m * q);
    for i in 0..l {
        for j in 0..m {
            set_block(&mut out, i * p, j * q, &seq.blocks[i + j + 1]);
        }
    }
    Ok(out)
}

/// `𝒪_L(A, C) = [C; CA; ...; CA^{L−1}]`.
pub fn extended_observability<T: Scalar>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    len: usize,
) -> Result<DMatrix<T>> {
    check_shape("A", a, a.nrows(), a.nrows())?;
    check_shape("C", c, c.nrows(), a.nrows())?;
    Ok(linalg::observability(a, c, len))
}

/// Predictor Markov parameters of one channel (`H^u`, `H^y` or `H^f`).
pub fn markov_parameters<T: Scalar>(
    pred: &PredictorModel<T>,
    channel: Channel,
    len: usize,
) -> Result<MarkovSequence<T>> {
    if len == 0 {
        return Err(Error::validation("Markov length must be at least 1"));
    }
    Ok(pred.channel_system(channel).markov(len))
}

/// Steady-state Kalman filter quantities.
#[derive(Debug, Clone)]
pub struct DareSolution<T: Scalar> {
    /// Stabilizing solution of the filter Riccati equation.
    pub p: DMatrix<T>,
    pub k: DMatrix<T>,
    pub sigma_e: DMatrix<T>,
    pub iterations: usize,
    /// Relative residual of the Riccati equation at `p`.
    pub residual: T,
}

pub const DARE_TOL: f64 = 1e-12;
pub const DARE_MAX_ITER: usize = 100_000;

/// Filter-form Riccati equation
/// `P = A P Aᵀ + W − A P Cᵀ (C P Cᵀ + R)⁻¹ C P Aᵀ`
/// solved by fixed-point iteration of the recursion started at `P = I`.
///
/// Returns `K = A P Cᵀ (C P Cᵀ + R)⁻¹` and `Σ = C P Cᵀ + R`.
pub fn dare_fixed_point<T: Scalar>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    w: &DMatrix<T>,
    r: &DMatrix<T>,
    tol: T,
    max_iter: usize,
) -> Result<DareSolution<T>> {
    let n = a.nrows();
    if r.nrows() > 0 && r.clone().cholesky().is_none() {
        return Err(Error::validation("R must be symmetric positive definite"));
    }
    let r_scale = r.norm().max(T::tiny());
    let mut p = DMatrix::identity(n, n);
    let mut change = T::max_value().unwrap_or(T::lit(f64::MAX));
    let mut converged = None;
    for it in 1..=max_iter {
        let next = riccati_step(a, c, w, r, &p)?;
        change = (&next - &p).norm() / (next.norm() + r_scale);
        p = next;
        if change <= tol {
            converged = Some(it);
            break;
        }
        if !change.is_finite() {
            break;
        }
    }
    let iterations = converged.ok_or(Error::RiccatiDivergence {
        iterations: max_iter,
        residual: change.as_f64(),
    })?;
    let p = (&p + p.transpose()) * T::lit(0.5);
    let sigma = c * &p * c.transpose() + r;
    let k = if c.nrows() == 0 {
        DMatrix::zeros(n, 0)
    } else {
        let apc = a * &p * c.transpose();
        // K Σ = A P Cᵀ  ⇒  Σ Kᵀ = (A P Cᵀ)ᵀ
        linalg::solve(&sigma, &apc.transpose())?.transpose()
    };
    let residual = (riccati_step(a, c, w, r, &p)? - &p).norm() / (p.norm() + r_scale);
    let rho = linalg::spectral_radius(&(a - &k * c));
    if rho >= T::one() {
        return Err(Error::RiccatiNotStabilizing {
            spectral_radius: rho.as_f64(),
        });
    }
    Ok(DareSolution {
        p,
        k,
        sigma_e: sigma,
        iterations,
        residual,
    })
}

fn riccati_step<T: Scalar>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    w: &DMatrix<T>,
    r: &DMatrix<T>,
    p: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let app = a * p * a.transpose() + w;
    if c.nrows() == 0 {
        return Ok(app);
    }
    let s = c * p * c.transpose() + r;
    let cpa = c * p * a.transpose();
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance lost definiteness".into()))?;
    let x = chol.solve(&cpa);
    let next = app - cpa.transpose() * x;
    Ok((&next + next.transpose()) * T::lit(0.5))
}

/// Steady-state Kalman gain of the plant.
pub fn solve_dare<T: Scalar>(
    model: &StateSpaceModel<T>,
    tol: T,
    max_iter: usize,
) -> Result<DareSolution<T>> {
    let w = &model.f * &model.q * model.f.transpose();
    dare_fixed_point(&model.a, &model.c, &w, &model.r, tol, max_iter)
}

/// Predictor form of the plant with the steady-state Kalman gain.
pub fn to_predictor<T: Scalar>(model: &StateSpaceModel<T>) -> Result<PredictorModel<T>> {
    let sol = solve_dare(model, T::lit(DARE_TOL), DARE_MAX_ITER)?;
    Ok(predictor_with_gain(model, &sol.k, sol.sigma_e))
}

/// `Φ = A − KC`, `B̃ = B − KD`, `Ẽ = E − KG` for a given gain.
pub fn predictor_with_gain<T: Scalar>(
    model: &StateSpaceModel<T>,
    k: &DMatrix<T>,
    sigma_e: DMatrix<T>,
) -> PredictorModel<T> {
    PredictorModel {
        phi: &model.a - k * &model.c,
        btilde: &model.b - k * &model.d,
        k: k.clone(),
        c: model.c.clone(),
        d: model.d.clone(),
        etilde: &model.e - k * &model.g,
        g: model.g.clone(),
        sigma_e,
    }
}

/// Deterministic Gaussian noise for a plant: `w ~ N(0, Q)`, `v ~ N(0, R)`.
///
/// Each signal gets its own ChaCha8 stream under the common seed.
pub struct NoiseSource<T: Scalar> {
    w_factor: DMatrix<T>,
    v_factor: DMatrix<T>,
    w_rng: ChaCha8Rng,
    v_rng: ChaCha8Rng,
}

pub const STREAM_PROCESS: u64 = 1;
pub const STREAM_MEASUREMENT: u64 = 2;
pub const STREAM_REFERENCE: u64 = 3;

/// Seeded generator on a named stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal vector of length `n`.
pub fn standard_normal<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> DVector<T> {
    DVector::from_fn(n, |_, _| {
        let s: f64 = StandardNormal.sample(rng);
        T::lit(s)
    })
}

impl<T: Scalar> NoiseSource<T> {
    pub fn new(model: &StateSpaceModel<T>, seed: u64) -> Result<Self> {
        Ok(Self {
            w_factor: linalg::psd_factor(&model.q)?,
            v_factor: linalg::psd_factor(&model.r)?,
            w_rng: stream_rng(seed, STREAM_PROCESS),
            v_rng: stream_rng(seed, STREAM_MEASUREMENT),
        })
    }

    /// Next `(w(k), v(k))` pair.
    pub fn sample(&mut self) -> (DVector<T>, DVector<T>) {
        let w = &self.w_factor * standard_normal::<T>(&mut self.w_rng, self.w_factor.ncols());
        let v = &self.v_factor * standard_normal::<T>(&mut self.v_rng, self.v_factor.ncols());
        (w, v)
    }
}

/// Open-loop simulation of the plant. `u` and `f` hold one sample per row;
/// `x0` defaults to zero.
pub fn simulate<T: Scalar>(
    model: &StateSpaceModel<T>,
    u: &DMatrix<T>,
    f: &DMatrix<T>,
    seed: u64,
    x0: Option<&DVector<T>>,
) -> Result<IoData<T>> {
    let n_samples = u.nrows();
    check_shape("u", u, n_samples, model.inputs())?;
    check_shape("f", f, n_samples, model.faults())?;
    let mut x = match x0 {
        Some(x0) => {
            if x0.len() != model.states() {
                return Err(Error::validation(
                    "x0 length does not match the state dimension",
                ));
            }
            x0.clone()
        }
        None => DVector::zeros(model.states()),
    };
    let mut noise = NoiseSource::new(model, seed)?;
    let mut y = DMatrix::zeros(n_samples, model.outputs());
    for k in 0..n_samples {
        let (w, v) = noise.sample();
        let uk = u.row(k).transpose();
        let fk = f.row(k).transpose();
        let yk = &model.c * &x + &model.d * &uk + &model.g * &fk + v;
        y.row_mut(k).copy_from(&yk.transpose());
        x = &model.a * &x + &model.b * &uk + &model.e * &fk + &model.f * w;
    }
    IoData::new(u.clone(), y)
}

/// Input/output record, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct IoData<T: Scalar> {
    pub u: DMatrix<T>,
    pub y: DMatrix<T>,
}

impl<T: Scalar> IoData<T> {
    pub fn new(u: DMatrix<T>, y: DMatrix<T>) -> Result<Self> {
        if u.nrows() != y.nrows() {
            return Err(Error::validation(format!(
                "u has {} samples but y has {}",
                u.nrows(),
                y.nrows()
            )));
        }
        if y.nrows() == 0 {
            return Err(Error::validation(
                "I/O data must contain at least one sample",
            ));
        }
        Ok(Self { u, y })
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.y.nrows() == 0
    }
    pub fn inputs(&self) -> usize {
        self.u.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.y.ncols()
    }

    /// `z(k) = [u(k); y(k)]` stacked as rows.
    pub fn z(&self) -> DMatrix<T> {
        hstack(&[&self.u, &self.y])
    }

    /// Writes `k,u1..,y1..` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        header.extend((1..=self.inputs()).map(|i| format!("u{i}")));
        header.extend((1..=self.outputs()).map(|i| format!("y{i}")));
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut rec = vec![k.to_string()];
            rec.extend(self.u.row(k).iter().map(|v| fmt_full(*v)));
            rec.extend(self.y.row(k).iter().map(|v| fmt_full(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let u_cols: Vec<usize> = column_indices(&header, 'u');
        let y_cols: Vec<usize> = column_indices(&header, 'y');
        if y_cols.is_empty() {
            return Err(Error::Parse("CSV header has no y columns".into()));
        }
        let mut u_rows = Vec::new();
        let mut y_rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            for &i in &u_cols {
                u_rows.push(parse_field::<T>(&rec[i])?);
            }
            for &i in &y_cols {
                y_rows.push(parse_field::<T>(&rec[i])?);
            }
        }
        let n = y_rows.len() / y_cols.len();
        Self::new(
            DMatrix::from_row_slice(n, u_cols.len(), &u_rows),
            DMatrix::from_row_slice(n, y_cols.len(), &y_rows),
        )
    }
}

fn column_indices(header: &csv::StringRecord, prefix: char) -> Vec<usize> {
    let mut cols: Vec<(usize, usize)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            let h = h.trim();
            h.strip_prefix(prefix)
                .and_then(|rest| rest.parse::<usize>().ok())
                .map(|idx| (idx, i))
        })
        .collect();
    cols.sort();
    cols.into_iter().map(|(_, i)| i).collect()
}

/// Formats a value with 17 significant digits.
pub fn fmt_full<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

pub(crate) fn parse_field<T: Scalar>(s: &str) -> Result<T> {
    s.trim()
        .parse::<f64>()
        .map(T::lit)
        .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn scalar_model(a: f64, q: f64, r: f64) -> StateSpaceModel<f64> {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        StateSpaceModel::new(
            m(a),
            m(0.0),
            m(1.0),
            m(0.0),
            m(0.0),
            m(1.0),
            m(1.0),
            m(q),
            m(r),
        )
        .unwrap()
    }

    #[test]
    fn stable_plant_without_process_noise_has_zero_gain() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, -0.3]);
        let model = StateSpaceModel::with_sensor_faults(
            a,
            DMatrix::zeros(2, 1),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            &[0],
        )
        .unwrap();
        let sol = solve_dare(&model, 1e-12, DARE_MAX_ITER).unwrap();
        assert!(sol.k.amax() < 1e-10);
        assert!(sol.p.amax() < 1e-10);
        assert!((sol.sigma_e - DMatrix::<f64>::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn scalar_riccati_matches_naive_recursion() {
        // oracle: plain scalar recursion, 10^4 steps
        let (a, q, r) = (0.9_f64, 0.1, 1.0);
        let mut p = 1.0;
        for _ in 0..10_000 {
            p = a * a * p + q - a * a * p * p / (p + r);
        }
        let k_oracle = a * p / (p + r);
        let sol = solve_dare(&scalar_model(a, q, r), 1e-14, DARE_MAX_ITER).unwrap();
        assert!((sol.k[(0, 0)] - k_oracle).abs() < 1e-12);
        assert!((sol.sigma_e[(0, 0)] - (p + r)).abs() < 1e-12);
    }

    #[test]
    fn random_detectable_model_gives_stable_predictor() {
        let mut rng = stream_rng(11, 0);
        for _ in 0..10 {
            let model = fixtures::random_plant::<f64>(&mut rng, 4, 2, 3, &[1], 1.3);
            let sol = solve_dare(&model, 1e-12, DARE_MAX_ITER).unwrap();
            assert!(sol.residual <= 1e-10, "residual {}", sol.residual);
            let rho = linalg::spectral_radius(&(&model.a - &sol.k * &model.c));
            assert!(rho < 1.0);
        }
    }

    #[test]
    fn indefinite_r_is_rejected() {
        let mut m = scalar_model(0.5, 0.1, 1.0);
        m.r[(0, 0)] = -1.0;
        assert!(matches!(
            solve_dare(&m, 1e-12, 100),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let m = scalar_model(0.99, 1.0, 1.0);
        assert!(matches!(
            solve_dare(&m, 1e-15, 3),
            Err(Error::RiccatiDivergence { .. })
        ));
    }

    #[test]
    fn sensor_fault_predictor_directions() {
        let mut rng = stream_rng(5, 0);
        let model = fixtures::random_plant::<f64>(&mut rng, 3, 1, 2, &[0], 1.1);
        let pred = to_predictor(&model).unwrap();
        assert!((&pred.etilde + pred.k.column(0)).amax() < 1e-15);
        assert_eq!(pred.g, linalg::selection_columns(2, &[0]));
        assert!(linalg::spectral_radius(&pred.phi) < 1.0);
    }

    #[test]
    fn zero_gain_predictor_keeps_plant_matrices() {
        let mut rng = stream_rng(6, 0);
        let model = fixtures::random_plant::<f64>(&mut rng, 3, 2, 2, &[1], 0.8);
        let pred = predictor_with_gain(&model, &DMatrix::zeros(3, 2), model.r.clone());
        assert_eq!(pred.phi, model.a);
        assert_eq!(pred.btilde, model.b);
        assert_eq!(pred.etilde, model.e);
    }

    #[test]
    fn markov_channels_follow_definition() {
        let mut rng = stream_rng(7, 0);
        let pred = fixtures::random_predictor::<f64>(&mut rng, 4, 2, 3, &[2], 0.9);
        let hu = markov_parameters(&pred, Channel::U, 5).unwrap();
        let hy = markov_parameters(&pred, Channel::Y, 5).unwrap();
        let hf = markov_parameters(&pred, Channel::F, 5).unwrap();
        assert_eq!(hu[0], pred.d);
        assert_eq!(hy[0], DMatrix::zeros(3, 3));
        assert_eq!(hf[0], pred.g);
        // oracle: explicit repeated multiplication C Φ Φ Ẽ
        let oracle = &pred.c * &pred.phi * &pred.phi * &pred.etilde;
        assert!((&hf[3] - oracle).amax() < 1e-14);
        assert!(markov_parameters(&pred, Channel::U, 0).is_err());
    }

    #[test]
    fn toeplitz_unrolled() {
        let seq = MarkovSequence::new(vec![
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 3.0),
        ])
        .unwrap();
        let t = block_toeplitz(&seq);
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 2.0, 1.0, 0.0, 3.0, 2.0, 1.0]);
        assert_eq!(t, expect);
        let single = block_toeplitz(&seq.truncated(1).unwrap());
        assert_eq!(single, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn toeplitz_from_state_space_matches_direct_construction() {
        let mut rng = stream_rng(8, 0);
        let pred = fixtures::random_predictor::<f64>(&mut rng, 4, 2, 3, &[0, 1], 0.9);
        let len = 8;
        let t = block_toeplitz(&markov_parameters(&pred, Channel::U, len).unwrap());
        // oracle: block (i, j) = C Φ^{i-j-1} B̃ below the diagonal, D on it
        let (p, q) = (3, 2);
        let mut direct = DMatrix::zeros(len * p, len * q);
        for i in 0..len {
            for j in 0..=i {
                let blk = if i == j {
                    pred.d.clone()
                } else {
                    let mut pw = DMatrix::identity(4, 4);
                    for _ in 0..(i - j - 1) {
                        pw = &pw * &pred.phi;
                    }
                    &pred.c * pw * &pred.btilde
                };
                set_block(&mut direct, i * p, j * q, &blk);
            }
        }
        assert!((t - direct).amax() <= 1e-12);
    }

    #[test]
    fn hankel_layout_and_rank() {
        let seq = MarkovSequence::new(
            (0..4)
                .map(|i| DMatrix::from_element(1, 1, i as f64))
                .collect(),
        )
        .unwrap();
        let h = block_hankel(&seq, 2, 2).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]));
        assert_eq!(
            block_hankel(&seq, 1, 1).unwrap(),
            DMatrix::from_element(1, 1, 1.0)
        );
        assert!(block_hankel(&seq, 2, 3).is_err());

        let mut rng = stream_rng(9, 0);
        let pred = fixtures::random_predictor::<f64>(&mut rng, 3, 2, 2, &[0], 0.8);
        let hu = markov_parameters(&pred, Channel::U, 12).unwrap();
        let h = block_hankel(&hu, 5, 5).unwrap();
        assert_eq!(linalg::rank(&h, 1e-9), 3);
    }

    #[test]
    fn observability_stacking() {
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let a = DMatrix::identity(2, 2);
        assert_eq!(extended_observability(&a, &c, 1).unwrap(), c);
        assert_eq!(
            extended_observability(&a, &c, 2).unwrap(),
            linalg::vstack(&[&c, &c])
        );
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, -0.2, 0.3]);
        let o = extended_observability(&a, &c, 4).unwrap();
        let mut row = c.clone();
        for i in 0..4 {
            assert!((o.rows(i, 1) - &row).amax() < 1e-15);
            row = &row * &a;
        }
    }

    #[test]
    fn zero_trajectory_and_determinism() {
        let mut rng = stream_rng(10, 0);
        let mut model = fixtures::random_plant::<f64>(&mut rng, 3, 1, 2, &[0], 1.2);
        model.q = DMatrix::zeros(model.noise_inputs(), model.noise_inputs());
        model.r = DMatrix::zeros(2, 2);
        let u = DMatrix::zeros(50, 1);
        let f = DMatrix::zeros(50, 1);
        let data = simulate(&model, &u, &f, 3, None).unwrap();
        assert!(data.y.amax() == 0.0);

        let noisy = fixtures::random_plant::<f64>(&mut rng, 3, 1, 2, &[0], 0.9);
        let u = DMatrix::from_fn(40, 1, |k, _| (k as f64 * 0.3).sin());
        let f = DMatrix::zeros(40, 1);
        let a = simulate(&noisy, &u, &f, 42, None).unwrap();
        let b = simulate(&noisy, &u, &f, 42, None).unwrap();
        assert_eq!(a, b);
        assert!(simulate(&noisy, &u, &DMatrix::zeros(39, 1), 1, None).is_err());
    }

    #[test]
    fn impulse_response_equals_plant_markov_parameters() {
        let mut rng = stream_rng(12, 0);
        let mut model = fixtures::random_plant::<f64>(&mut rng, 3, 2, 2, &[0], 1.1);
        model.q = DMatrix::zeros(model.noise_inputs(), model.noise_inputs());
        model.r = DMatrix::zeros(2, 2);
        let mut u = DMatrix::zeros(6, 2);
        u[(0, 0)] = 1.0;
        let data = simulate(&model, &u, &DMatrix::zeros(6, 1), 0, None).unwrap();
        let mut pw = DMatrix::identity(3, 3);
        for k in 1..6 {
            // oracle: C A^{k-1} B, first input column
            let h = &model.c * &pw * model.b.column(0);
            assert!((data.y.row(k).transpose() - h).amax() < 1e-12);
            pw = &pw * &model.a;
        }
    }

    #[test]
    fn noise_sample_covariance_converges() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = DMatrix::from_row_slice(2, 2, &[0.3, -0.1, -0.1, 0.2]);
        let model = StateSpaceModel::with_sensor_faults(
            DMatrix::identity(2, 2) * 0.5,
            DMatrix::zeros(2, 0),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 0),
            DMatrix::identity(2, 2),
            q.clone(),
            r.clone(),
            &[0],
        )
        .unwrap();
        let mut src = NoiseSource::new(&model, 99).unwrap();
        let n = 100_000;
        let mut sw = DMatrix::<f64>::zeros(2, 2);
        let mut sv = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let (w, v) = src.sample();
            sw += &w * w.transpose();
            sv += &v * v.transpose();
        }
        sw /= n as f64;
        sv /= n as f64;
        assert!((sw - &q).norm() / q.norm() < 0.05);
        assert!((sv - &r).norm() / r.norm() < 0.05);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let u = DMatrix::from_fn(5, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0));
        let y = DMatrix::from_fn(5, 1, |i, _| std::f64::consts::PI * i as f64);
        let data = IoData::new(u, y).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,u1,u2,y1\n"));
        let back = IoData::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, data);
    }
}

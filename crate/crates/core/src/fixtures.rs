//! Random model generators for tests, property checks and benchmarks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg;
use crate::lti::{PredictorModel, StateSpaceModel};
use crate::Scalar;

pub fn gaussian<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let s: f64 = StandardNormal.sample(rng);
        T::lit(s)
    })
}

/// Gaussian square matrix rescaled to the given spectral radius.
pub fn with_spectral_radius<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> DMatrix<T> {
    let a: DMatrix<T> = gaussian(rng, n, n);
    let rho = linalg::spectral_radius(&a);
    if rho == T::zero() {
        return a;
    }
    a * (T::lit(radius) / rho)
}

/// Random orthogonal matrix (Q factor of a Gaussian matrix).
pub fn orthogonal<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<T> {
    gaussian::<T>(rng, n, n).qr().q()
}

/// Random well-conditioned similarity transform.
pub fn similarity<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<T> {
    let q = orthogonal::<T>(rng, n);
    let d = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            T::lit(rng.random_range(0.5..2.0))
        } else {
            T::zero()
        }
    });
    let q2 = orthogonal::<T>(rng, n);
    q * d * q2
}

/// Random sensor-fault plant with `F = I`, moderately excited noise and
/// `A` scaled to spectral radius `radius` (may exceed 1).
pub fn random_plant<T: Scalar>(
    rng: &mut ChaCha8Rng,
    n: usize,
    n_u: usize,
    n_y: usize,
    sensors: &[usize],
    radius: f64,
) -> StateSpaceModel<T> {
    let a = with_spectral_radius(rng, n, radius);
    let b = gaussian(rng, n, n_u);
    let c = gaussian(rng, n_y, n);
    let d = gaussian::<T>(rng, n_y, n_u) * T::lit(0.1);
    let lq = gaussian::<T>(rng, n, n) * T::lit(0.3);
    let q = &lq * lq.transpose() + DMatrix::identity(n, n) * T::lit(0.05);
    let lr = gaussian::<T>(rng, n_y, n_y) * T::lit(0.2);
    let r = &lr * lr.transpose() + DMatrix::identity(n_y, n_y) * T::lit(0.1);
    StateSpaceModel::with_sensor_faults(a, b, c, d, DMatrix::identity(n, n), q, r, sensors)
        .expect("consistent random plant")
}

/// Random sensor-fault predictor with `Φ` of spectral radius `radius < 1`.
pub fn random_predictor<T: Scalar>(
    rng: &mut ChaCha8Rng,
    n: usize,
    n_u: usize,
    n_y: usize,
    sensors: &[usize],
    radius: f64,
) -> PredictorModel<T> {
    let phi = with_spectral_radius(rng, n, radius);
    let btilde = gaussian(rng, n, n_u);
    let k = gaussian::<T>(rng, n, n_y) * T::lit(0.5);
    let c = gaussian(rng, n_y, n);
    let d = gaussian(rng, n_y, n_u);
    PredictorModel::with_sensor_faults(phi, btilde, k, c, d, DMatrix::identity(n_y, n_y), sensors)
        .expect("consistent random predictor")
}

/// Fault subsystem `(Φ, Ẽ, C, G)` with prescribed invariant zeros.
#[derive(Debug, Clone)]
pub struct FaultSubsystem<T: Scalar> {
    pub phi: DMatrix<T>,
    pub etilde: DMatrix<T>,
    pub c: DMatrix<T>,
    pub g: DMatrix<T>,
    pub sensors: Vec<usize>,
}

/// A planted invariant zero: real value or complex pair `re ± i·im`.
#[derive(Debug, Clone, Copy)]
pub enum PlantedZero {
    Real(f64),
    Pair(f64, f64),
}

impl PlantedZero {
    fn dim(&self) -> usize {
        match self {
            PlantedZero::Real(_) => 1,
            PlantedZero::Pair(..) => 2,
        }
    }
}

/// Builds a sensor-fault subsystem whose invariant zeros are exactly
/// `zeros` (the unobservable modes of `(Φ₁, C₂)`), with the remaining
/// dynamics of `Φ₁` scaled to spectral radius `radius`.
///
/// Needs `n_y > sensors.len()` unless the zeros fill the whole state.
pub fn planted_zero_subsystem<T: Scalar>(
    rng: &mut ChaCha8Rng,
    n: usize,
    n_y: usize,
    sensors: &[usize],
    zeros: &[PlantedZero],
    radius: f64,
) -> FaultSubsystem<T> {
    let nz: usize = zeros.iter().map(|z| z.dim()).sum();
    assert!(nz <= n, "more zeros than states");
    let n_f = sensors.len();
    assert!(n_y > n_f || nz == n, "square fault subsystems have n zeros");
    let no = n - nz;

    let mut phi1 = DMatrix::zeros(n, n);
    if no > 0 {
        let ao = with_spectral_radius::<T>(rng, no, radius);
        linalg::set_block(&mut phi1, 0, 0, &ao);
        let a21 = gaussian::<T>(rng, nz, no);
        linalg::set_block(&mut phi1, no, 0, &a21);
    }
    let mut off = no;
    for z in zeros {
        match *z {
            PlantedZero::Real(v) => {
                phi1[(off, off)] = T::lit(v);
                off += 1;
            }
            PlantedZero::Pair(re, im) => {
                phi1[(off, off)] = T::lit(re);
                phi1[(off, off + 1)] = T::lit(im);
                phi1[(off + 1, off)] = T::lit(-im);
                phi1[(off + 1, off + 1)] = T::lit(re);
                off += 2;
            }
        }
    }
    // healthy sensors see only the first `no` coordinates
    let mut c = gaussian::<T>(rng, n_y, n);
    for row in 0..n_y {
        if !sensors.contains(&row) {
            for col in no..n {
                c[(row, col)] = T::zero();
            }
        }
    }
    let s = similarity::<T>(rng, n);
    let s_inv = s.clone().try_inverse().expect("similarity invertible");
    let phi1 = &s * phi1 * &s_inv;
    let c = c * &s_inv;
    let g = linalg::selection_columns::<T>(n_y, sensors);
    let etilde = gaussian::<T>(rng, n, n_f);
    let phi = &phi1 + &etilde * g.transpose() * &c;
    FaultSubsystem {
        phi,
        etilde,
        c,
        g,
        sensors: sensors.to_vec(),
    }
}

/// Random subset of `count` distinct sensors out of `n_y`, sorted.
pub fn random_sensors(rng: &mut ChaCha8Rng, n_y: usize, count: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n_y).collect();
    for i in 0..count {
        let j = rng.random_range(i..n_y);
        all.swap(i, j);
    }
    let mut out = all[..count].to_vec();
    out.sort();
    out
}

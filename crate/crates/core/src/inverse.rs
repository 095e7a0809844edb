//! Model-based system-inversion fault estimation filter.
//!
//! A residual generator driven by `z = [u; y]` is followed by a left inverse
//! of the fault channel. The open-loop inverse `(Φ₁, B₁, C₁, D₁)` need not be
//! stable; feeding the residual reconstruction error back through `K_r`
//! gives `Φ₂ = Φ₁ − K_r C₂`, which can be made stable whenever the fault
//! subsystem `(Φ, Ẽ, C, G)` has no invariant zeros on or outside the unit
//! circle. The cascade is then reduced to an `n`-state filter from `(u, y)`
//! to `f̂`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, hstack, vstack};
use crate::lti::{self, check_shape, fmt_full, parse_field, IoData, LtiSystem, PredictorModel};
use crate::{Error, Result, Scalar};

/// `G⁻ = (GᵀG)⁻¹Gᵀ` for a full-column-rank `G`.
pub fn left_inverse<T: Scalar>(g: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n_f = g.ncols();
    let rank = linalg::rank(g, T::lit(1e-10).max(T::eps() * T::lit(100.0)));
    if rank < n_f || g.nrows() < n_f {
        return Err(Error::FaultDirectionRank {
            rank,
            expected: n_f,
        });
    }
    let gtg = g.transpose() * g;
    let chol = gtg.cholesky().ok_or(Error::FaultDirectionRank {
        rank,
        expected: n_f,
    })?;
    Ok(chol.solve(&g.transpose()))
}

/// Residual generator `(Φ, [B̃ K], −C, [−D I])` driven by `z(k) = [u; y]`.
pub fn residual_generator<T: Scalar>(pred: &PredictorModel<T>) -> LtiSystem<T> {
    pred.z_system()
}

/// Open-loop left inverse and the residual-reconstruction matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseMatrices<T: Scalar> {
    /// `Φ₁ = Φ − Ẽ G⁻ C`
    pub phi1: DMatrix<T>,
    /// `B₁ = Ẽ G⁻`
    pub b1: DMatrix<T>,
    /// `C₁ = −G⁻ C`
    pub c1: DMatrix<T>,
    /// `D₁ = G⁻`
    pub d1: DMatrix<T>,
    /// `C₂ = (I − G G⁻) C`
    pub c2: DMatrix<T>,
    /// `D₂ = G G⁻`
    pub d2: DMatrix<T>,
}

pub fn open_loop_inverse<T: Scalar>(pred: &PredictorModel<T>) -> Result<InverseMatrices<T>> {
    let gm = left_inverse(&pred.g)?;
    let n_y = pred.outputs();
    let b1 = &pred.etilde * &gm;
    let d2 = &pred.g * &gm;
    let proj = DMatrix::identity(n_y, n_y) - &d2;
    Ok(InverseMatrices {
        phi1: &pred.phi - &b1 * &pred.c,
        c1: -(&gm * &pred.c),
        c2: proj * &pred.c,
        d1: gm,
        b1,
        d2,
    })
}

/// Closed-loop left inverse `(Φ₂, B₂, C₁, D₁)` acting on the residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopInverse<T: Scalar> {
    pub phi2: DMatrix<T>,
    pub b2: DMatrix<T>,
    pub c1: DMatrix<T>,
    pub d1: DMatrix<T>,
}

impl<T: Scalar> ClosedLoopInverse<T> {
    pub fn system(&self) -> LtiSystem<T> {
        LtiSystem {
            a: self.phi2.clone(),
            b: self.b2.clone(),
            c: self.c1.clone(),
            d: self.d1.clone(),
        }
    }
}

/// `Φ₂ = Φ₁ − K_r C₂`, `B₂ = B₁ + K_r (I − D₂)`.
pub fn closed_loop_inverse<T: Scalar>(
    inv: &InverseMatrices<T>,
    kr: &DMatrix<T>,
) -> Result<ClosedLoopInverse<T>> {
    let n = inv.phi1.nrows();
    let n_y = inv.c2.nrows();
    check_shape("K_r", kr, n, n_y)?;
    Ok(ClosedLoopInverse {
        phi2: &inv.phi1 - kr * &inv.c2,
        b2: &inv.b1 + kr * (DMatrix::identity(n_y, n_y) - &inv.d2),
        c1: inv.c1.clone(),
        d1: inv.d1.clone(),
    })
}

/// Invariant zeros of a fault subsystem.
#[derive(Debug, Clone)]
pub struct ZeroReport<T: Scalar> {
    pub zeros: Vec<Complex<T>>,
    /// Unstable modes that are observable only through estimation error
    /// (realized systems).
    pub nearly_unobservable: Vec<Complex<T>>,
    /// All finite zeros satisfy `|λ| < 1 − margin` and no unstable mode is
    /// nearly unobservable.
    pub stable: bool,
    /// Distance of the staircase rank decisions from their threshold
    /// (ratio; close to 1 means ill-conditioned).
    pub decision_margin: T,
    pub warning: Option<String>,
}

pub const DEFAULT_ZERO_MARGIN: f64 = 1e-6;

/// Invariant zeros of `(Φ, Ẽ, C, G)` with full-column-rank `G`.
///
/// With `N` an orthonormal basis of the left null space of `G`, the
/// Rosenbrock pencil `[[Φ−λI, Ẽ], [C, G]]` loses rank exactly at the
/// unobservable modes of `(Φ − Ẽ G⁻ C, N C)`, which are extracted with an
/// orthogonal staircase reduction. When `G` is square every eigenvalue of
/// `Φ − Ẽ G⁻¹ C` is a zero.
pub fn invariant_zeros<T: Scalar>(
    phi: &DMatrix<T>,
    etilde: &DMatrix<T>,
    c: &DMatrix<T>,
    g: &DMatrix<T>,
    margin: T,
) -> Result<ZeroReport<T>> {
    let n = phi.nrows();
    check_shape("Phi", phi, n, n)?;
    check_shape("Etilde", etilde, n, g.ncols())?;
    check_shape("C", c, g.nrows(), n)?;
    let gm = left_inverse(g)?;
    let phi1 = phi - etilde * &gm * c;
    let null = linalg::left_null_space(g, T::lit(1e-10));
    let nc = &null * c;
    let stair = linalg::unobservable_modes(&phi1, &nc, linalg::default_rank_tol());
    let bound = T::one() - margin;
    let stable = stair.modes.iter().all(|z| T::cabs(z) < bound);
    let warning = (stair.decision_margin < T::lit(100.0)).then(|| {
        format!(
            "zero computation ill-conditioned: rank decision margin {:.3e}",
            stair.decision_margin.as_f64()
        )
    });
    Ok(ZeroReport {
        zeros: stair.modes,
        nearly_unobservable: Vec::new(),
        stable,
        decision_margin: stair.decision_margin,
        warning,
    })
}

/// [`invariant_zeros`] of the predictor's fault subsystem.
pub fn predictor_zeros<T: Scalar>(pred: &PredictorModel<T>, margin: T) -> Result<ZeroReport<T>> {
    invariant_zeros(&pred.phi, &pred.etilde, &pred.c, &pred.g, margin)
}

/// How `K_r` is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum StabilizationStrategy {
    /// Stabilizing solution of the filter Riccati equation on `(Φ₁, C₂)`
    /// with a process weight and unit output weight. With the weight from
    /// [`FilterParts::process_weight`] the gain is independent of the state
    /// basis.
    #[default]
    Riccati,
    /// Eigenvalues of `Φ₁ − K_r C₂` at the given real poles.
    PolePlacement { poles: Vec<f64> },
}

impl StabilizationStrategy {
    pub fn tag(&self) -> String {
        match self {
            Self::Riccati => "riccati".into(),
            Self::PolePlacement { poles } => {
                let list: Vec<String> = poles.iter().map(|p| p.to_string()).collect();
                format!("poles[{}]", list.join(" "))
            }
        }
    }
}

/// Output-feedback gain `K_r` making `Φ₁ − K_r C₂` stable. `weight` is the
/// `n × n` process weight of the Riccati strategy.
pub fn stabilizing_gain<T: Scalar>(
    phi1: &DMatrix<T>,
    c2: &DMatrix<T>,
    weight: &DMatrix<T>,
    strategy: &StabilizationStrategy,
) -> Result<DMatrix<T>> {
    let n = phi1.nrows();
    check_shape("Phi1", phi1, n, n)?;
    check_shape("C2", c2, c2.nrows(), n)?;
    check_shape("weight", weight, n, n)?;
    let stair = linalg::unobservable_modes(phi1, c2, linalg::default_rank_tol());
    let unstable: Vec<(f64, f64)> = stair
        .modes
        .iter()
        .filter(|z| T::cabs(z) >= T::one())
        .map(|z| (z.re.as_f64(), z.im.as_f64()))
        .collect();
    if !unstable.is_empty() {
        return Err(Error::Unstabilizable {
            modes: unstable,
            context: String::new(),
        });
    }
    let kr = match strategy {
        StabilizationStrategy::Riccati => {
            let n_y = c2.nrows();
            let sol = lti::dare_fixed_point(
                phi1,
                c2,
                weight,
                &DMatrix::identity(n_y, n_y),
                T::lit(lti::DARE_TOL),
                lti::DARE_MAX_ITER,
            )?;
            sol.k
        }
        StabilizationStrategy::PolePlacement { poles } => {
            if !stair.modes.is_empty() {
                return Err(Error::Unobservable(stair.modes.len()));
            }
            let poles: Vec<T> = poles.iter().map(|&p| T::lit(p)).collect();
            place_output_injection(phi1, c2, &poles)?
        }
    };
    let rho = linalg::spectral_radius(&(phi1 - &kr * c2));
    if rho >= T::one() {
        return Err(Error::Numerical(format!(
            "stabilizing gain left spectral radius {}",
            rho.as_f64()
        )));
    }
    Ok(kr)
}

/// Multi-output pole placement by reduction to one output direction `w`:
/// `K_r = l wᵀ`, with `l` from Ackermann's formula on `(Φ₁, wᵀC₂)`.
///
/// Candidate directions depend only on the output space, so the gain
/// transforms covariantly under state similarity.
fn place_output_injection<T: Scalar>(
    phi1: &DMatrix<T>,
    c2: &DMatrix<T>,
    poles: &[T],
) -> Result<DMatrix<T>> {
    let n = phi1.nrows();
    let n_y = c2.nrows();
    if poles.len() != n {
        return Err(Error::PolePlacement(format!(
            "{} poles given for a filter of order {n}",
            poles.len()
        )));
    }
    if poles.iter().any(|p| p.abs() >= T::one()) {
        return Err(Error::PolePlacement(
            "requested poles must lie inside the unit circle".into(),
        ));
    }
    let mut candidates: Vec<DVector<T>> = vec![DVector::from_element(n_y, T::one())];
    for i in 0..n_y {
        if c2.row(i).amax() > T::zero() {
            let mut e = DVector::zeros(n_y);
            e[i] = T::one();
            candidates.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..8 {
        candidates.push(lti::standard_normal(&mut rng, n_y));
    }
    for w in candidates {
        let cw: DMatrix<T> = DMatrix::from_row_slice(1, n, (w.transpose() * c2).as_slice());
        let obs = linalg::observability(phi1, &cw, n);
        let sv = linalg::singular_values(&obs);
        let (Some(&hi), Some(&lo)) = (sv.first(), sv.last()) else {
            continue;
        };
        if hi == T::zero() || lo / hi < T::lit(1e-12) {
            continue;
        }
        let l = linalg::ackermann_observer(phi1, &cw, poles)?;
        return Ok(l * w.transpose());
    }
    Err(Error::PolePlacement(
        "no single output direction makes the pair observable".into(),
    ))
}

/// Matrices shared by the model-based and the Markov-parameter filter:
/// the system `(Φ₁, [B_f K_f], [C₁; −C₂], [[D_{f,1} D₁]; [−D_{f,2} G_{f,2}]])`
/// plus `C₂` for stabilization.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterParts<T: Scalar> {
    pub phi1: DMatrix<T>,
    pub bf: DMatrix<T>,
    pub kf: DMatrix<T>,
    pub c1: DMatrix<T>,
    pub c2: DMatrix<T>,
    pub df1: DMatrix<T>,
    pub d1: DMatrix<T>,
    pub df2: DMatrix<T>,
    pub gf2: DMatrix<T>,
}

impl<T: Scalar> FilterParts<T> {
    pub fn from_predictor(pred: &PredictorModel<T>) -> Result<Self> {
        let inv = open_loop_inverse(pred)?;
        let n_y = pred.outputs();
        let proj = DMatrix::identity(n_y, n_y) - &inv.d2;
        Ok(Self {
            bf: &pred.btilde - &inv.b1 * &pred.d,
            kf: &pred.k + &inv.b1,
            df1: -(&inv.d1 * &pred.d),
            df2: &proj * &pred.d,
            gf2: proj,
            phi1: inv.phi1,
            c1: inv.c1,
            c2: inv.c2,
            d1: inv.d1,
        })
    }

    pub fn order(&self) -> usize {
        self.phi1.nrows()
    }

    /// The combined system whose Markov parameters are `W_i = [R_i; Q_i]`.
    pub fn w_system(&self) -> LtiSystem<T> {
        LtiSystem {
            a: self.phi1.clone(),
            b: hstack(&[&self.bf, &self.kf]),
            c: vstack(&[&self.c1, &(-&self.c2)]),
            d: vstack(&[
                &hstack(&[&self.df1, &self.d1]),
                &hstack(&[&(-&self.df2), &self.gf2]),
            ]),
        }
    }

    /// `[B_f K_f][B_f K_f]ᵀ`: transforms like a state covariance, so the
    /// Riccati gain it yields follows the state basis.
    pub fn process_weight(&self) -> DMatrix<T> {
        let bz = hstack(&[&self.bf, &self.kf]);
        &bz * bz.transpose()
    }

    /// [`stabilizing_gain`] with [`process_weight`](Self::process_weight).
    pub fn stabilizing_gain(&self, strategy: &StabilizationStrategy) -> Result<DMatrix<T>> {
        stabilizing_gain(&self.phi1, &self.c2, &self.process_weight(), strategy)
    }

    /// Assembles the reduced filter for a given feedback gain.
    pub fn assemble(&self, kr: &DMatrix<T>) -> Result<FaultEstimationFilter<T>> {
        check_shape("K_r", kr, self.order(), self.c2.nrows())?;
        FaultEstimationFilter::new(
            &self.phi1 - kr * &self.c2,
            &self.bf - kr * &self.df2,
            &self.kf + kr * &self.gf2,
            self.c1.clone(),
            self.df1.clone(),
            self.d1.clone(),
        )
    }
}

/// Reduced fault estimation filter
///
/// ```text
/// x_f(k+1) = A_f x_f(k) + B_u u(k) + B_y y(k)
/// f̂(k)     = C_f x_f(k) + D_u u(k) + D_y y(k)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct FaultEstimationFilter<T: Scalar> {
    pub af: DMatrix<T>,
    pub bu: DMatrix<T>,
    pub by: DMatrix<T>,
    pub cf: DMatrix<T>,
    pub du: DMatrix<T>,
    pub dy: DMatrix<T>,
    pub state: DVector<T>,
}

impl<T: Scalar> FaultEstimationFilter<T> {
    pub fn new(
        af: DMatrix<T>,
        bu: DMatrix<T>,
        by: DMatrix<T>,
        cf: DMatrix<T>,
        du: DMatrix<T>,
        dy: DMatrix<T>,
    ) -> Result<Self> {
        let n = af.nrows();
        let (n_u, n_y, n_f) = (bu.ncols(), by.ncols(), cf.nrows());
        check_shape("Af", &af, n, n)?;
        check_shape("Bu", &bu, n, n_u)?;
        check_shape("By", &by, n, n_y)?;
        check_shape("Cf", &cf, n_f, n)?;
        check_shape("Du", &du, n_f, n_u)?;
        check_shape("Dy", &dy, n_f, n_y)?;
        Ok(Self {
            af,
            bu,
            by,
            cf,
            du,
            dy,
            state: DVector::zeros(n),
        })
    }

    pub fn order(&self) -> usize {
        self.af.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.bu.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.by.ncols()
    }
    pub fn faults(&self) -> usize {
        self.cf.nrows()
    }

    pub fn spectral_radius(&self) -> T {
        linalg::spectral_radius(&self.af)
    }

    pub fn reset(&mut self, x0: Option<&DVector<T>>) {
        match x0 {
            Some(x) => self.state.copy_from(x),
            None => self.state.fill(T::zero()),
        }
    }

    /// One filter update; returns `f̂(k)`.
    pub fn step(&mut self, u: &DVector<T>, y: &DVector<T>) -> DVector<T> {
        let f = &self.cf * &self.state + &self.du * u + &self.dy * y;
        self.state = &self.af * &self.state + &self.bu * u + &self.by * y;
        f
    }

    /// Runs the filter over a record starting from `x0` (zero if `None`);
    /// one estimate per row.
    pub fn run(&mut self, data: &IoData<T>, x0: Option<&DVector<T>>) -> Result<DMatrix<T>> {
        if data.inputs() != self.inputs() || data.outputs() != self.outputs() {
            return Err(Error::validation("data dimensions do not match the filter"));
        }
        if let Some(x) = x0 {
            if x.len() != self.order() {
                return Err(Error::validation("initial filter state has wrong length"));
            }
        }
        self.reset(x0);
        let mut out = DMatrix::zeros(data.len(), self.faults());
        for k in 0..data.len() {
            let f = self.step(&data.u.row(k).transpose(), &data.y.row(k).transpose());
            out.row_mut(k).copy_from(&f.transpose());
        }
        Ok(out)
    }

    /// The filter as a system from `z = [u; y]` to `f̂`.
    pub fn system(&self) -> LtiSystem<T> {
        LtiSystem {
            a: self.af.clone(),
            b: hstack(&[&self.bu, &self.by]),
            c: self.cf.clone(),
            d: hstack(&[&self.du, &self.dy]),
        }
    }

    /// Writes the matrices as `<name>.csv` files plus `manifest.csv` into `dir`.
    pub fn write_bundle(&self, dir: &Path, strategy_tag: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("manifest.csv"))?;
        w.write_record(["n_hat", "n_u", "n_y", "n_f", "stabilization"])?;
        w.write_record([
            self.order().to_string(),
            self.inputs().to_string(),
            self.outputs().to_string(),
            self.faults().to_string(),
            strategy_tag.to_string(),
        ])?;
        w.flush()?;
        for (name, m) in self.named() {
            write_matrix_csv(std::fs::File::create(dir.join(format!("{name}.csv")))?, m)?;
        }
        Ok(())
    }

    pub fn read_bundle(dir: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(dir.join("manifest.csv"))?;
        let rec = rdr
            .records()
            .next()
            .ok_or_else(|| Error::Parse("empty filter manifest".into()))??;
        let dim = |i: usize| -> Result<usize> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse("bad filter manifest".into()))
        };
        let (n, n_u, n_y, n_f) = (dim(0)?, dim(1)?, dim(2)?, dim(3)?);
        let load = |name: &str, r: usize, c: usize| -> Result<DMatrix<T>> {
            let m = read_matrix_csv(std::fs::File::open(dir.join(format!("{name}.csv")))?, r, c)?;
            Ok(m)
        };
        Self::new(
            load("Af", n, n)?,
            load("Bu", n, n_u)?,
            load("By", n, n_y)?,
            load("Cf", n_f, n)?,
            load("Du", n_f, n_u)?,
            load("Dy", n_f, n_y)?,
        )
    }

    fn named(&self) -> [(&'static str, &DMatrix<T>); 6] {
        [
            ("Af", &self.af),
            ("Bu", &self.bu),
            ("By", &self.by),
            ("Cf", &self.cf),
            ("Du", &self.du),
            ("Dy", &self.dy),
        ]
    }
}

/// Headerless CSV, one matrix row per line. Empty matrices produce an
/// empty file.
pub fn write_matrix_csv<T: Scalar, W: Write>(out: W, m: &DMatrix<T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    if m.ncols() > 0 {
        for r in 0..m.nrows() {
            w.write_record(m.row(r).iter().map(|v| fmt_full(*v)))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<T: Scalar, R: Read>(
    input: R,
    rows: usize,
    cols: usize,
) -> Result<DMatrix<T>> {
    let mut out = DMatrix::zeros(rows, cols);
    if cols == 0 {
        return Ok(out);
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut count = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if r >= rows || rec.len() != cols {
            return Err(Error::Parse(format!(
                "matrix CSV does not match {rows}x{cols}"
            )));
        }
        for (c, field) in rec.iter().enumerate() {
            out[(r, c)] = parse_field(field)?;
        }
        count += 1;
    }
    if count != rows {
        return Err(Error::Parse(format!(
            "matrix CSV has {count} rows, expected {rows}"
        )));
    }
    Ok(out)
}

/// Model-based reduced filter for a given stabilizing gain.
pub fn reduced_filter<T: Scalar>(
    pred: &PredictorModel<T>,
    kr: &DMatrix<T>,
) -> Result<FaultEstimationFilter<T>> {
    FilterParts::from_predictor(pred)?.assemble(kr)
}

/// Unreduced cascade of residual generator and closed-loop inverse, state
/// `[x_r; x̂]`, input `z = [u; y]`.
pub fn cascade_filter<T: Scalar>(
    pred: &PredictorModel<T>,
    kr: &DMatrix<T>,
) -> Result<LtiSystem<T>> {
    let inv = open_loop_inverse(pred)?;
    let cl = closed_loop_inverse(&inv, kr)?;
    let n = pred.states();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    linalg::set_block(&mut a, 0, 0, &cl.phi2);
    linalg::set_block(&mut a, 0, n, &(-(&cl.b2 * &pred.c)));
    linalg::set_block(&mut a, n, n, &pred.phi);
    let b = vstack(&[
        &hstack(&[&(-(&cl.b2 * &pred.d)), &cl.b2]),
        &hstack(&[&pred.btilde, &pred.k]),
    ]);
    let c = hstack(&[&cl.c1, &(-(&cl.d1 * &pred.c))]);
    let d = hstack(&[&(-(&cl.d1 * &pred.d)), &cl.d1]);
    LtiSystem::new(a, b, c, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, PlantedZero};
    use crate::lti::stream_rng;

    #[test]
    fn left_inverse_cases() {
        let sel = linalg::selection_columns::<f64>(3, &[1]);
        assert_eq!(left_inverse(&sel).unwrap(), sel.transpose());
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((left_inverse(&id).unwrap() - &id).amax() < 1e-15);
        let mut rng = stream_rng(1, 0);
        let g: DMatrix<f64> = fixtures::gaussian(&mut rng, 5, 3);
        let gm = left_inverse(&g).unwrap();
        assert!((gm * &g - DMatrix::identity(3, 3)).amax() <= 1e-12);
        let bad = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(
            left_inverse(&bad),
            Err(Error::FaultDirectionRank {
                rank: 1,
                expected: 2
            })
        ));
    }

    #[test]
    fn open_loop_inverse_special_cases() {
        let mut rng = stream_rng(2, 0);
        let mut pred = fixtures::random_predictor::<f64>(&mut rng, 3, 1, 2, &[0], 0.8);
        pred.etilde = DMatrix::zeros(3, 1);
        let inv = open_loop_inverse(&pred).unwrap();
        assert_eq!(inv.phi1, pred.phi);
        assert_eq!(inv.b1, DMatrix::zeros(3, 2));
        // G⁻ (I − G G⁻) = 0 and D₁ G = I
        assert!((&inv.d1 * (DMatrix::identity(2, 2) - &inv.d2)).amax() < 1e-15);
        assert!((&inv.d1 * &pred.g - DMatrix::identity(1, 1)).amax() < 1e-15);

        let all = fixtures::random_predictor::<f64>(&mut rng, 3, 1, 2, &[0, 1], 0.8);
        let inv = open_loop_inverse(&all).unwrap();
        assert!(inv.c2.amax() < 1e-15);
        assert!((&inv.d2 - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn first_sensor_inverse_selects_first_residual() {
        let mut rng = stream_rng(3, 0);
        let pred = fixtures::random_predictor::<f64>(&mut rng, 3, 1, 3, &[0], 0.8);
        let inv = open_loop_inverse(&pred).unwrap();
        let r = DVector::from_vec(vec![0.7, -1.3, 2.0]);
        assert_eq!((&inv.d1 * &r)[0], 0.7);
        // C₂ zeroes the first row of C and keeps the rest
        assert!(inv.c2.row(0).amax() == 0.0);
        assert_eq!(inv.c2.rows(1, 2), pred.c.rows(1, 2));
    }

    #[test]
    fn residual_generator_zero_without_noise() {
        let mut rng = stream_rng(4, 0);
        let pred = fixtures::random_predictor::<f64>(&mut rng, 3, 2, 2, &[1], 0.8);
        // y from the predictor with e ≡ 0 and f ≡ 0, matched x̂(0) = x(0) = 0
        let n = 60;
        let mut x = DVector::zeros(3);
        let mut z = DMatrix::zeros(n, 4);
        for k in 0..n {
            let u = DVector::from_vec(vec![(k as f64 * 0.3).sin(), (k as f64 * 0.17).cos()]);
            let y = &pred.c * &x + &pred.d * &u;
            x = &pred.phi * &x + &pred.btilde * &u + &pred.k * &y;
            z.row_mut(k).columns_mut(0, 2).copy_from(&u.transpose());
            z.row_mut(k).columns_mut(2, 2).copy_from(&y.transpose());
        }
        let r = residual_generator(&pred).simulate(&z, &DVector::zeros(3));
        // x evolves with Φ + KC, which may be unstable: compare relative to y
        assert!(r.amax() <= 1e-12 * z.amax().max(1.0), "{}", r.amax());
    }

    #[test]
    fn planted_zeros_are_recovered() {
        let mut rng = stream_rng(5, 0);
        let sys = fixtures::planted_zero_subsystem::<f64>(
            &mut rng,
            5,
            3,
            &[0],
            &[PlantedZero::Real(0.5)],
            1.3,
        );
        let rep = invariant_zeros(&sys.phi, &sys.etilde, &sys.c, &sys.g, 1e-6).unwrap();
        assert!(rep.stable);
        assert_eq!(rep.zeros.len(), 1);
        assert!((rep.zeros[0].re - 0.5).abs() < 1e-6 && rep.zeros[0].im.abs() < 1e-6);
        // oracle: the Rosenbrock pencil drops rank at the zero
        let pencil = rosenbrock(&sys, 0.5);
        let sv = linalg::singular_values(&pencil);
        assert!(sv.last().unwrap() / sv[0] < 1e-9);

        let bad = fixtures::planted_zero_subsystem::<f64>(
            &mut rng,
            4,
            3,
            &[1],
            &[PlantedZero::Real(1.2)],
            0.7,
        );
        let rep = invariant_zeros(&bad.phi, &bad.etilde, &bad.c, &bad.g, 1e-6).unwrap();
        assert!(!rep.stable);
    }

    #[test]
    fn zero_on_unit_circle_counts_as_unstable() {
        let mut rng = stream_rng(6, 0);
        let sys = fixtures::planted_zero_subsystem::<f64>(
            &mut rng,
            3,
            2,
            &[0],
            &[PlantedZero::Real(1.0)],
            0.5,
        );
        let rep = invariant_zeros(&sys.phi, &sys.etilde, &sys.c, &sys.g, 1e-6).unwrap();
        assert!(!rep.stable);
    }

    #[test]
    fn zero_free_direction_uses_unobservable_modes() {
        // Ẽ = 0, stable Φ: zeros are the modes hidden from the healthy sensors
        let phi = DMatrix::from_row_slice(3, 3, &[0.5, 0.0, 0.0, 0.2, 0.3, 0.0, 0.1, 0.0, -0.4]);
        let c = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let g = linalg::selection_columns::<f64>(2, &[0]);
        let e = DMatrix::zeros(3, 1);
        let rep = invariant_zeros(&phi, &e, &c, &g, 1e-6).unwrap();
        assert!(rep.stable);
        let sys = fixtures::FaultSubsystem {
            phi: phi.clone(),
            etilde: e,
            c,
            g,
            sensors: vec![0],
        };
        // oracle: direct rank test of the pencil at each reported zero
        for z in &rep.zeros {
            let pencil = rosenbrock(&sys, z.re);
            assert!(linalg::rank(&pencil, 1e-9) < 4);
        }
        // and no rank drop at an arbitrary point
        assert_eq!(linalg::rank(&rosenbrock(&sys, 0.77), 1e-9), 4);
    }

    fn unit_weight(phi1: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::identity(phi1.nrows(), phi1.nrows())
    }

    #[test]
    fn weighted_riccati_gain_follows_similarity() {
        let mut rng = stream_rng(9, 0);
        let pred: PredictorModel<f64> = fixtures::random_predictor(&mut rng, 4, 2, 3, &[1], 0.8);
        let parts = FilterParts::from_predictor(&pred).unwrap();
        let kr = parts
            .stabilizing_gain(&StabilizationStrategy::Riccati)
            .unwrap();
        let t: DMatrix<f64> = fixtures::similarity(&mut rng, 4);
        let ti = t.clone().try_inverse().unwrap();
        let moved = FilterParts {
            phi1: &t * &parts.phi1 * &ti,
            bf: &t * &parts.bf,
            kf: &t * &parts.kf,
            c1: &parts.c1 * &ti,
            c2: &parts.c2 * &ti,
            ..parts.clone()
        };
        let kr_moved = moved
            .stabilizing_gain(&StabilizationStrategy::Riccati)
            .unwrap();
        assert!((kr_moved - &t * &kr).amax() <= 1e-8 * (1.0 + kr.amax()));
        // identity weights do not share this property
        let plain = stabilizing_gain(
            &parts.phi1,
            &parts.c2,
            &unit_weight(&parts.phi1),
            &StabilizationStrategy::Riccati,
        )
        .unwrap();
        let plain_moved = stabilizing_gain(
            &moved.phi1,
            &moved.c2,
            &unit_weight(&moved.phi1),
            &StabilizationStrategy::Riccati,
        )
        .unwrap();
        assert!((plain_moved - &t * &plain).amax() > 1e-6);
    }

    fn rosenbrock(sys: &fixtures::FaultSubsystem<f64>, lambda: f64) -> DMatrix<f64> {
        let n = sys.phi.nrows();
        let top = hstack(&[&(&sys.phi - DMatrix::identity(n, n) * lambda), &sys.etilde]);
        let bottom = hstack(&[&sys.c, &sys.g]);
        vstack(&[&top, &bottom])
    }

    #[test]
    fn scalar_pole_placement() {
        let phi1 = DMatrix::from_element(1, 1, 1.1);
        let c2 = DMatrix::from_element(1, 1, 1.0);
        let kr: DMatrix<f64> = stabilizing_gain(
            &phi1,
            &c2,
            &unit_weight(&phi1),
            &StabilizationStrategy::PolePlacement { poles: vec![0.5] },
        )
        .unwrap();
        assert!((kr[(0, 0)] - 0.6).abs() < 1e-14);
    }

    #[test]
    fn pole_placement_hits_requested_poles() {
        let mut rng = stream_rng(7, 0);
        let poles = [0.948, 0.532, 0.225, 0.141];
        for _ in 0..5 {
            let phi1: DMatrix<f64> = fixtures::with_spectral_radius(&mut rng, 4, 1.2);
            let c2: DMatrix<f64> = fixtures::gaussian(&mut rng, 2, 4);
            let kr = stabilizing_gain(
                &phi1,
                &c2,
                &unit_weight(&phi1),
                &StabilizationStrategy::PolePlacement {
                    poles: poles.to_vec(),
                },
            )
            .unwrap();
            let mut eig: Vec<f64> = linalg::eigenvalues(&(&phi1 - &kr * &c2))
                .iter()
                .map(|z| {
                    assert!(z.im.abs() < 1e-8);
                    z.re
                })
                .collect();
            eig.sort_by(|a, b| b.total_cmp(a));
            for (e, p) in eig.iter().zip(poles) {
                assert!((e - p).abs() < 1e-8, "{e} vs {p}");
            }
        }
    }

    #[test]
    fn riccati_keeps_stable_pair_stable() {
        let mut rng = stream_rng(8, 0);
        let phi1: DMatrix<f64> = fixtures::with_spectral_radius(&mut rng, 3, 0.6);
        let c2 = DMatrix::zeros(2, 3);
        let kr = stabilizing_gain(
            &phi1,
            &c2,
            &unit_weight(&phi1),
            &StabilizationStrategy::Riccati,
        )
        .unwrap();
        assert!(linalg::spectral_radius(&(&phi1 - &kr * &c2)) < 1.0);
    }

    #[test]
    fn unstabilizable_and_unobservable_errors() {
        let phi1 = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.2]);
        let c2 = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        match stabilizing_gain(
            &phi1,
            &c2,
            &unit_weight(&phi1),
            &StabilizationStrategy::Riccati,
        ) {
            Err(Error::Unstabilizable { modes, .. }) => assert!((modes[0].0 - 1.2).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        let phi1 = DMatrix::from_row_slice(2, 2, &[1.1, 0.0, 0.0, 0.4]);
        let strat = StabilizationStrategy::PolePlacement {
            poles: vec![0.2, 0.3],
        };
        assert!(matches!(
            stabilizing_gain(&phi1, &c2, &unit_weight(&phi1), &strat),
            Err(Error::Unobservable(1))
        ));
        assert!(stabilizing_gain(
            &phi1,
            &c2,
            &unit_weight(&phi1),
            &StabilizationStrategy::Riccati
        )
        .is_ok());
    }

    #[test]
    fn closed_loop_inverse_cases() {
        let mut rng = stream_rng(9, 0);
        let pred = fixtures::random_predictor::<f64>(&mut rng, 3, 1, 3, &[2], 0.8);
        let inv = open_loop_inverse(&pred).unwrap();
        let zero = closed_loop_inverse(&inv, &DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(zero.phi2, inv.phi1);
        assert_eq!(zero.b2, inv.b1);
        let kr: DMatrix<f64> = fixtures::gaussian(&mut rng, 3, 3);
        let cl = closed_loop_inverse(&inv, &kr).unwrap();
        // oracle: expand K_r (r − r̂) feedback term by term
        assert!((&cl.phi2 - (&inv.phi1 - &kr * &inv.c2)).amax() < 1e-14);
        assert!((&cl.b2 - (&inv.b1 + &kr - &kr * &inv.d2)).amax() < 1e-14);

        let all = fixtures::random_predictor::<f64>(&mut rng, 3, 1, 2, &[0, 1], 0.8);
        let inv = open_loop_inverse(&all).unwrap();
        let kr: DMatrix<f64> = fixtures::gaussian(&mut rng, 3, 2);
        let cl = closed_loop_inverse(&inv, &kr).unwrap();
        assert!((&cl.b2 - &inv.b1).amax() < 1e-14);
    }

    #[test]
    fn reduced_filter_without_feedthrough() {
        let mut rng = stream_rng(10, 0);
        let mut pred = fixtures::random_predictor::<f64>(&mut rng, 3, 2, 2, &[0], 0.8);
        pred.d = DMatrix::zeros(2, 2);
        let parts = FilterParts::from_predictor(&pred).unwrap();
        assert_eq!(parts.df1, DMatrix::zeros(1, 2));
        assert_eq!(parts.bf, pred.btilde);
    }

    #[test]
    fn zero_data_gives_zero_estimates() {
        let mut rng = stream_rng(11, 0);
        let pred = fixtures::random_predictor::<f64>(&mut rng, 3, 1, 2, &[0], 0.8);
        let parts = FilterParts::from_predictor(&pred).unwrap();
        let kr = parts
            .stabilizing_gain(&StabilizationStrategy::Riccati)
            .unwrap();
        let mut filt = parts.assemble(&kr).unwrap();
        let data = IoData::new(DMatrix::zeros(30, 1), DMatrix::zeros(30, 2)).unwrap();
        let a = filt.run(&data, None).unwrap();
        assert!(a.amax() == 0.0);
        let data = IoData::new(
            DMatrix::from_fn(30, 1, |k, _| (k as f64).sin()),
            DMatrix::from_fn(30, 2, |k, j| (k as f64 * 0.2 + j as f64).cos()),
        )
        .unwrap();
        let a = filt.run(&data, None).unwrap();
        let b = filt.run(&data, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bundle_round_trip() {
        let mut rng = stream_rng(12, 0);
        let pred = fixtures::random_predictor::<f64>(&mut rng, 3, 0, 2, &[1], 0.8);
        let parts = FilterParts::from_predictor(&pred).unwrap();
        let kr = parts
            .stabilizing_gain(&StabilizationStrategy::Riccati)
            .unwrap();
        let filt = parts.assemble(&kr).unwrap();
        let dir = std::env::temp_dir().join(format!("sfe-bundle-{}", std::process::id()));
        filt.write_bundle(&dir, "riccati").unwrap();
        let back = FaultEstimationFilter::<f64>::read_bundle(&dir).unwrap();
        assert_eq!(back, filt);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn strategy_serde_tags() {
        #[derive(Deserialize)]
        struct Wrap {
            stabilization: StabilizationStrategy,
        }
        let w: Wrap =
            toml::from_str("[stabilization]\nstrategy = \"pole_placement\"\npoles = [0.5, 0.2]\n")
                .unwrap();
        assert_eq!(
            w.stabilization,
            StabilizationStrategy::PolePlacement {
                poles: vec![0.5, 0.2]
            }
        );
        assert_eq!(w.stabilization.tag(), "poles[0.5 0.2]");
        let w: Wrap = toml::from_str("[stabilization]\nstrategy = \"riccati\"\n").unwrap();
        assert_eq!(w.stabilization, StabilizationStrategy::Riccati);
    }
}

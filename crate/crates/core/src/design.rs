//! Fault estimation filter designed directly from predictor Markov
//! parameters, without an intermediate plant model.
//!
//! From `Ξ` the fault channel `H^f`, the residual channel `H^z`, the left
//! inverse `G_i` and the products `R_i` (fault reconstruction) and `Q_i`
//! (residual reconstruction error) are formed by block convolutions. A
//! Ho-Kalman realization of `W_i = [R_i; Q_i]` then yields, in some state
//! basis, every matrix the reduced filter needs.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::StageExt;
use crate::inverse::{self, FaultEstimationFilter, FilterParts, StabilizationStrategy, ZeroReport};
use crate::linalg::{self, hstack, vstack};
use crate::lti::{block_hankel, validate_sensors, IoData, LtiSystem, MarkovSequence};
use crate::sysid::{identify_xi, IdentifiedXi, XiOptions};
use crate::{Error, Result, Scalar};

/// Model order for the realization step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(try_from = "OrderRepr", into = "OrderRepr")]
pub enum OrderSelection {
    Fixed(usize),
    /// Largest gap `σ_i / σ_{i+1}` in the Hankel singular values.
    #[default]
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OrderRepr {
    Fixed(usize),
    Named(String),
}

impl TryFrom<OrderRepr> for OrderSelection {
    type Error = String;
    fn try_from(r: OrderRepr) -> std::result::Result<Self, String> {
        match r {
            OrderRepr::Fixed(0) => Err("order must be at least 1".into()),
            OrderRepr::Fixed(n) => Ok(Self::Fixed(n)),
            OrderRepr::Named(s) if s == "auto" => Ok(Self::Auto),
            OrderRepr::Named(s) => Err(format!(
                "order must be a positive integer or \"auto\", got {s:?}"
            )),
        }
    }
}

impl From<OrderSelection> for OrderRepr {
    fn from(o: OrderSelection) -> Self {
        match o {
            OrderSelection::Fixed(n) => OrderRepr::Fixed(n),
            OrderSelection::Auto => OrderRepr::Named("auto".into()),
        }
    }
}

/// Parameters of the data-driven design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    /// Zero-based indices of the faulty sensors.
    pub sensors: Vec<usize>,
    /// Number of `W_i` blocks formed (`W_0 .. W_{L−1}`).
    pub horizon: usize,
    /// Hankel block rows.
    pub hankel_rows: usize,
    /// Hankel block columns.
    pub hankel_cols: usize,
    pub order: OrderSelection,
    pub stabilization: StabilizationStrategy,
    /// Relative threshold for the fault-direction rank test.
    pub rank_tol: f64,
    /// Zeros with `|λ| ≥ 1 − zero_margin` count as unstable.
    pub zero_margin: f64,
    /// Unstable modes of the realized `(Φ₁, C₂)` whose relative PBH distance
    /// from unobservability is below this are treated as unstable zeros
    /// blurred by estimation error.
    pub observability_tol: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            sensors: vec![0],
            horizon: 100,
            hankel_rows: 20,
            hankel_cols: 20,
            order: OrderSelection::Auto,
            stabilization: StabilizationStrategy::Riccati,
            rank_tol: 1e-10,
            zero_margin: inverse::DEFAULT_ZERO_MARGIN,
            observability_tol: 1e-2,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self, n_y: usize, past_horizon: usize) -> Result<()> {
        validate_sensors(&self.sensors, n_y)?;
        if self.hankel_rows == 0 || self.hankel_cols < 2 {
            return Err(Error::validation(
                "Hankel needs l ≥ 1 block rows and m ≥ 2 block columns",
            ));
        }
        let needed = self.hankel_rows + self.hankel_cols;
        if self.horizon < needed {
            return Err(Error::validation(format!(
                "horizon L = {} must be at least l + m = {needed}",
                self.horizon
            )));
        }
        if self.horizon > past_horizon + 1 {
            return Err(Error::validation(format!(
                "horizon L = {} exceeds the identified Markov length p + 1 = {}",
                self.horizon,
                past_horizon + 1
            )));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(Error::validation("rank_tol must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.zero_margin) {
            return Err(Error::validation("zero_margin must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.observability_tol) {
            return Err(Error::validation("observability_tol must lie in [0, 1)"));
        }
        if let StabilizationStrategy::PolePlacement { poles } = &self.stabilization {
            if poles.iter().any(|p| !p.is_finite()) {
                return Err(Error::validation("poles must be finite"));
            }
        }
        Ok(())
    }
}

/// `H_0^f = I^{[J]}`, `H_i^f = −(H_i^y)^{[J]}` for `i = 1 .. len−1`.
pub fn fault_markov<T: Scalar>(
    hy: &MarkovSequence<T>,
    sensors: &[usize],
    len: usize,
) -> Result<MarkovSequence<T>> {
    let n_y = hy.row_dim();
    validate_sensors(sensors, n_y)?;
    check_len(hy, len)?;
    let sel = linalg::selection_columns::<T>(n_y, sensors);
    MarkovSequence::from_fn(len, |i| {
        if i == 0 {
            sel.clone()
        } else {
            -(&hy[i] * &sel)
        }
    })
}

/// `H_0^z = [−H_0^u, I]`, `H_i^z = [−H_i^u, −H_i^y]`.
pub fn z_markov<T: Scalar>(
    hu: &MarkovSequence<T>,
    hy: &MarkovSequence<T>,
    len: usize,
) -> Result<MarkovSequence<T>> {
    check_len(hu, len)?;
    check_len(hy, len)?;
    let n_y = hy.row_dim();
    MarkovSequence::from_fn(len, |i| {
        if i == 0 {
            hstack(&[&(-&hu[0]), &DMatrix::identity(n_y, n_y)])
        } else {
            hstack(&[&(-&hu[i]), &(-&hy[i])])
        }
    })
}

/// Markov parameters of the open-loop left inverse:
/// `G_0 = (H_0^f)⁻`, `G_i = −Σ_{j=1..i} G_{i−j} H_j^f G_0`.
pub fn inverse_markov<T: Scalar>(hf: &MarkovSequence<T>, len: usize) -> Result<MarkovSequence<T>> {
    check_len(hf, len)?;
    let g0 = inverse::left_inverse(&hf[0])?;
    let mut g: Vec<DMatrix<T>> = Vec::with_capacity(len);
    g.push(g0.clone());
    for i in 1..len {
        let mut acc = DMatrix::zeros(g0.nrows(), hf.col_dim());
        for j in 1..=i {
            acc += &g[i - j] * &hf[j];
        }
        g.push(-(acc * &g0));
    }
    MarkovSequence::new(g)
}

/// `R_i = Σ_{j=0..i} G_{i−j} H_j^z`.
pub fn convolve_r<T: Scalar>(
    g: &MarkovSequence<T>,
    hz: &MarkovSequence<T>,
    len: usize,
) -> Result<MarkovSequence<T>> {
    check_len(g, len)?;
    check_len(hz, len)?;
    MarkovSequence::from_fn(len, |i| {
        let mut acc = DMatrix::zeros(g.row_dim(), hz.col_dim());
        for j in 0..=i {
            acc += &g[i - j] * &hz[j];
        }
        acc
    })
}

/// `Q_i = H_i^z − Σ_{j=0..i} H_{i−j}^f R_j`.
pub fn convolve_q<T: Scalar>(
    hf: &MarkovSequence<T>,
    hz: &MarkovSequence<T>,
    r: &MarkovSequence<T>,
    len: usize,
) -> Result<MarkovSequence<T>> {
    check_len(hf, len)?;
    check_len(hz, len)?;
    check_len(r, len)?;
    MarkovSequence::from_fn(len, |i| {
        let mut acc = hz[i].clone();
        for j in 0..=i {
            acc -= &hf[i - j] * &r[j];
        }
        acc
    })
}

/// `W_i = [R_i; Q_i]` for `i < len` from an identified Ξ.
pub fn w_markov<T: Scalar>(
    xi: &IdentifiedXi<T>,
    sensors: &[usize],
    len: usize,
) -> Result<MarkovSequence<T>> {
    let hf = fault_markov(&xi.hy, sensors, len)?;
    let hz = z_markov(&xi.hu, &xi.hy, len)?;
    let g = inverse_markov(&hf, len)?;
    let r = convolve_r(&g, &hz, len)?;
    let q = convolve_q(&hf, &hz, &r, len)?;
    MarkovSequence::from_fn(len, |i| vstack(&[&r[i], &q[i]]))
}

fn check_len<T: Scalar>(seq: &MarkovSequence<T>, len: usize) -> Result<()> {
    if len == 0 || len > seq.len() {
        return Err(Error::validation(format!(
            "need {len} Markov blocks, sequence has {}",
            seq.len()
        )));
    }
    Ok(())
}

/// Picks the order from sorted Hankel singular values.
pub fn select_order<T: Scalar>(sv: &[T], order: OrderSelection) -> Result<usize> {
    let max = sv.len();
    match order {
        OrderSelection::Fixed(n) if n == 0 || n > max => Err(Error::validation(format!(
            "order {n} outside 1..={max} allowed by the Hankel size"
        ))),
        OrderSelection::Fixed(n) => Ok(n),
        OrderSelection::Auto => {
            let top = *sv
                .first()
                .ok_or_else(|| Error::validation("empty Hankel matrix"))?;
            if top <= T::zero() {
                return Err(Error::InsufficientExcitation(
                    "Hankel matrix is zero".into(),
                ));
            }
            let floor = top * T::eps();
            let mut best = (1, T::zero());
            for i in 0..max {
                let next = if i + 1 < max { sv[i + 1] } else { T::zero() };
                let ratio = sv[i] / next.max(floor);
                if ratio > best.1 {
                    best = (i + 1, ratio);
                }
            }
            Ok(best.0)
        }
    }
}

/// Ho-Kalman realization of `seq` (`seq[0]` is the feedthrough) from an
/// `l × m` block Hankel of `seq[1..]`. Returns the system and all Hankel
/// singular values.
pub fn realize_markov<T: Scalar>(
    seq: &MarkovSequence<T>,
    l: usize,
    m: usize,
    order: OrderSelection,
) -> Result<(LtiSystem<T>, Vec<T>)> {
    if m < 2 {
        return Err(Error::validation("realization needs m ≥ 2 block columns"));
    }
    let (p, q) = (seq.row_dim(), seq.col_dim());
    let hankel = block_hankel(seq, l, m)?;
    let svd = linalg::svd(&hankel);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numerical("Hankel SVD failed".into())),
    };
    let sv: Vec<T> = svd.singular_values.iter().copied().collect();
    let n = select_order(&sv, order)?;
    if sv[n - 1] <= T::zero() {
        return Err(Error::InsufficientExcitation(format!(
            "Hankel matrix has rank below the requested order {n}"
        )));
    }
    let sqrt: Vec<T> = sv[..n].iter().map(|s| s.sqrt()).collect();
    // Ĉ = Σ^{1/2} Vᵀ, Ô = U Σ^{1/2}
    let mut ctrl = vt.rows(0, n).into_owned();
    let mut obs = u.columns(0, n).into_owned();
    for i in 0..n {
        ctrl.row_mut(i).scale_mut(sqrt[i]);
        obs.column_mut(i).scale_mut(sqrt[i]);
    }
    let shifted = ctrl.columns(q, (m - 1) * q).into_owned();
    let base = ctrl.columns(0, (m - 1) * q).into_owned();
    let a = shifted * linalg::pinv(&base, linalg::default_rank_tol());
    let b = ctrl.columns(0, q).into_owned();
    let c = obs.rows(0, p).into_owned();
    let sys = LtiSystem::new(a, b, c, seq[0].clone())?;
    Ok((sys, sv))
}

/// Filter matrices realized from `W`, in an arbitrary state basis.
#[derive(Debug, Clone)]
pub struct RealizedSystem<T: Scalar> {
    pub parts: FilterParts<T>,
    pub singular_values: Vec<T>,
}

impl<T: Scalar> RealizedSystem<T> {
    pub fn order(&self) -> usize {
        self.parts.order()
    }

    /// Writes each realized matrix as `<name>.csv` plus
    /// `singular_values.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let p = &self.parts;
        for (name, m) in [
            ("Phi1", &p.phi1),
            ("Bf", &p.bf),
            ("Kf", &p.kf),
            ("C1", &p.c1),
            ("C2", &p.c2),
            ("Df1", &p.df1),
            ("D1", &p.d1),
            ("Df2", &p.df2),
            ("Gf2", &p.gf2),
        ] {
            inverse::write_matrix_csv(std::fs::File::create(dir.join(format!("{name}.csv")))?, m)?;
        }
        write_singular_values(
            std::fs::File::create(dir.join("singular_values.csv"))?,
            &self.singular_values,
        )
    }
}

/// CSV `index,sigma` with one-based indices.
pub fn write_singular_values<T: Scalar, W: Write>(out: W, sv: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "sigma"])?;
    for (i, s) in sv.iter().enumerate() {
        w.write_record([(i + 1).to_string(), crate::lti::fmt_full(*s)])?;
    }
    w.flush()?;
    Ok(())
}

/// Realizes `W` and splits the result into the filter matrices.
pub fn realize<T: Scalar>(
    w: &MarkovSequence<T>,
    n_u: usize,
    n_y: usize,
    cfg: &DesignConfig,
) -> Result<RealizedSystem<T>> {
    let n_f = cfg.sensors.len();
    if w.row_dim() != n_f + n_y || w.col_dim() != n_u + n_y {
        return Err(Error::validation("W blocks do not match the dimensions"));
    }
    let (sys, sv) = realize_markov(w, cfg.hankel_rows, cfg.hankel_cols, cfg.order)?;
    let w0 = &w[0];
    let parts = FilterParts {
        phi1: sys.a,
        bf: sys.b.columns(0, n_u).into_owned(),
        kf: sys.b.columns(n_u, n_y).into_owned(),
        c1: sys.c.rows(0, n_f).into_owned(),
        c2: -sys.c.rows(n_f, n_y).into_owned(),
        df1: w0.view((0, 0), (n_f, n_u)).into_owned(),
        d1: w0.view((0, n_u), (n_f, n_y)).into_owned(),
        df2: -w0.view((n_f, 0), (n_y, n_u)).into_owned(),
        gf2: w0.view((n_f, n_u), (n_y, n_y)).into_owned(),
    };
    Ok(RealizedSystem {
        parts,
        singular_values: sv,
    })
}

/// Zeros of the realized fault subsystem: the unobservable modes of
/// `(Φ̂₁, Ĉ₂)`.
pub fn realized_zeros<T: Scalar>(
    parts: &FilterParts<T>,
    margin: T,
    observability_tol: T,
) -> ZeroReport<T> {
    let stair = linalg::unobservable_modes(&parts.phi1, &parts.c2, linalg::default_rank_tol());
    let bound = T::one() - margin;
    let nearly_unobservable: Vec<_> = linalg::eigenvalues(&parts.phi1)
        .into_iter()
        .filter(|z| {
            T::cabs(z) >= bound
                && linalg::pbh_observability(&parts.phi1, &parts.c2, *z) < observability_tol
        })
        .collect();
    ZeroReport {
        stable: stair.modes.iter().all(|z| T::cabs(z) < bound) && nearly_unobservable.is_empty(),
        warning: (stair.decision_margin < T::lit(100.0)).then(|| {
            format!(
                "zero computation ill-conditioned: rank decision margin {:.3e}",
                stair.decision_margin.as_f64()
            )
        }),
        zeros: stair.modes,
        nearly_unobservable,
        decision_margin: stair.decision_margin,
    }
}

/// Everything produced by a data-driven design.
#[derive(Debug, Clone)]
pub struct FilterDesign<T: Scalar> {
    pub filter: FaultEstimationFilter<T>,
    pub realized: RealizedSystem<T>,
    pub gain: DMatrix<T>,
    pub zeros: ZeroReport<T>,
}

/// Designs the reduced filter from Markov parameters.
pub fn design_filter_from_xi<T: Scalar>(
    xi: &IdentifiedXi<T>,
    cfg: &DesignConfig,
) -> Result<FilterDesign<T>> {
    let (n_u, n_y) = (xi.inputs(), xi.outputs());
    cfg.validate(n_y, xi.past_horizon).stage("validate")?;
    let hf0 = linalg::selection_columns::<T>(n_y, &cfg.sensors);
    let rank = linalg::rank(&hf0, T::lit(cfg.rank_tol));
    if rank < cfg.sensors.len() {
        return Err(Error::FaultFeedthroughRank {
            rank,
            expected: cfg.sensors.len(),
        }
        .at("markov"));
    }
    let w = w_markov(xi, &cfg.sensors, cfg.horizon).stage("markov")?;
    let realized = realize(&w, n_u, n_y, cfg).stage("realize")?;
    let zeros = realized_zeros(
        &realized.parts,
        T::lit(cfg.zero_margin),
        T::lit(cfg.observability_tol),
    );
    if !zeros.stable {
        let source = if zeros.nearly_unobservable.is_empty() {
            &zeros.zeros
        } else {
            &zeros.nearly_unobservable
        };
        let modes = source
            .iter()
            .filter(|z| T::cabs(z) >= T::one() - T::lit(cfg.zero_margin))
            .map(|z| (z.re.as_f64(), z.im.as_f64()))
            .collect();
        return Err(Error::Unstabilizable {
            modes,
            context: " in the realized filter".into(),
        }
        .at("zeros"));
    }
    let gain = realized
        .parts
        .stabilizing_gain(&cfg.stabilization)
        .stage("stabilize")?;
    let filter = realized.parts.assemble(&gain).stage("assemble")?;
    Ok(FilterDesign {
        filter,
        realized,
        gain,
        zeros,
    })
}

/// Identification followed by [`design_filter_from_xi`].
pub fn design_filter_from_data<T: Scalar>(
    data: &IoData<T>,
    ident: &XiOptions,
    cfg: &DesignConfig,
) -> Result<FilterDesign<T>> {
    let xi = identify_xi(data, ident).stage("identify")?;
    design_filter_from_xi(&xi, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::inverse::open_loop_inverse;
    use crate::lti::{block_toeplitz, stream_rng, Channel};

    fn setup(
        seed: u64,
        n: usize,
        n_u: usize,
        n_y: usize,
        sensors: &[usize],
    ) -> (crate::lti::PredictorModel<f64>, IdentifiedXi<f64>) {
        let mut rng = stream_rng(seed, 0);
        let pred = fixtures::random_predictor::<f64>(&mut rng, n, n_u, n_y, sensors, 0.7);
        let xi = IdentifiedXi::from_predictor(&pred, 60).unwrap();
        (pred, xi)
    }

    #[test]
    fn fault_markov_matches_fault_channel() {
        let (pred, xi) = setup(1, 3, 1, 3, &[0, 2]);
        let hf = fault_markov(&xi.hy, &[0, 2], 20).unwrap();
        let oracle = pred.channel_system(Channel::F).markov(20);
        assert!(hf.max_abs_diff(&oracle) < 1e-14);
    }

    #[test]
    fn inverse_markov_is_left_inverse_of_toeplitz() {
        let (_, xi) = setup(2, 4, 1, 3, &[1]);
        let hf = fault_markov(&xi.hy, &[1], 15).unwrap();
        let g = inverse_markov(&hf, 15).unwrap();
        let prod = block_toeplitz(&g) * block_toeplitz(&hf);
        assert!((prod - DMatrix::identity(15, 15)).amax() < 1e-10);
    }

    #[test]
    fn inverse_markov_matches_open_loop_inverse() {
        let (pred, xi) = setup(3, 3, 2, 3, &[0]);
        let inv = open_loop_inverse(&pred).unwrap();
        let oracle = LtiSystem::new(inv.phi1, inv.b1, inv.c1, inv.d1)
            .unwrap()
            .markov(25);
        let hf = fault_markov(&xi.hy, &[0], 25).unwrap();
        let g = inverse_markov(&hf, 25).unwrap();
        assert!(g.max_abs_diff(&oracle) < 1e-9);
    }

    #[test]
    fn w_matches_filter_parts_system() {
        let (pred, xi) = setup(4, 4, 2, 3, &[0, 1]);
        let w = w_markov(&xi, &[0, 1], 30).unwrap();
        let oracle = FilterParts::from_predictor(&pred)
            .unwrap()
            .w_system()
            .markov(30);
        assert!(w.max_abs_diff(&oracle) < 1e-9);
    }

    #[test]
    fn exact_realization_reproduces_w() {
        let (_, xi) = setup(5, 4, 1, 3, &[2]);
        let cfg = DesignConfig {
            sensors: vec![2],
            horizon: 50,
            ..Default::default()
        };
        let w = w_markov(&xi, &cfg.sensors, cfg.horizon).unwrap();
        let real = realize(&w, 1, 3, &cfg).unwrap();
        assert_eq!(real.order(), 4);
        let back = real.parts.w_system().markov(50);
        assert!(w.max_abs_diff(&back) < 1e-8);
    }

    #[test]
    fn order_selection() {
        let sv = [10.0, 9.0, 1e-9, 1e-10];
        assert_eq!(select_order(&sv, OrderSelection::Auto).unwrap(), 2);
        assert_eq!(select_order(&sv, OrderSelection::Fixed(3)).unwrap(), 3);
        assert!(select_order(&sv, OrderSelection::Fixed(5)).is_err());
        // full rank: the last value against the eps floor wins
        assert_eq!(select_order(&[1.0, 0.5], OrderSelection::Auto).unwrap(), 2);
        // ties go to the smaller order
        assert_eq!(
            select_order(&[8.0, 4.0, 2.0, 1.0], OrderSelection::Auto).unwrap(),
            4
        );
        assert_eq!(
            select_order(&[4.0, 1.0, 0.25, 0.25 / 4.0 / 1e20], OrderSelection::Auto).unwrap(),
            3
        );
    }

    #[test]
    fn config_validation() {
        let cfg = DesignConfig {
            sensors: vec![3],
            ..Default::default()
        };
        assert!(cfg.validate(3, 120).unwrap_err().is_validation());
        let cfg = DesignConfig {
            horizon: 30,
            ..Default::default()
        };
        assert!(cfg.validate(3, 120).is_err());
        let cfg = DesignConfig::default();
        assert!(cfg.validate(3, 50).is_err());
        assert!(cfg.validate(3, 99).is_ok());
    }

    #[test]
    fn config_from_toml() {
        let cfg: DesignConfig = toml::from_str(
            "sensors = [0, 1]\nhorizon = 60\norder = 4\n[stabilization]\nstrategy = \"pole_placement\"\npoles = [0.1, 0.2, 0.3, 0.4]\n",
        )
        .unwrap();
        assert_eq!(cfg.order, OrderSelection::Fixed(4));
        assert_eq!(cfg.hankel_rows, 20);
        let auto: DesignConfig = toml::from_str("order = \"auto\"").unwrap();
        assert_eq!(auto.order, OrderSelection::Auto);
        assert!(toml::from_str::<DesignConfig>("order = \"big\"").is_err());
        assert!(toml::from_str::<DesignConfig>("bogus = 1").is_err());
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<DesignConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn design_reports_stage_on_failure() {
        let (_, xi) = setup(6, 3, 1, 3, &[0]);
        let cfg = DesignConfig {
            horizon: 200,
            ..Default::default()
        };
        let err = design_filter_from_xi(&xi, &cfg).unwrap_err();
        assert!(matches!(
            err,
            Error::Stage {
                stage: "validate",
                ..
            }
        ));
        assert!(err.is_validation());
    }

    #[test]
    fn singular_value_csv() {
        let mut buf = Vec::new();
        write_singular_values(&mut buf, &[2.0f64, 0.5]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,sigma\n1,2.0000000000000000e0\n"));
    }
}

//! Least-squares identification of the predictor Markov parameters Ξ from
//! fault-free (possibly closed-loop) input/output data.
//!
//! The predictor output is regressed on a window of `p` past samples plus the
//! current input (a VARX model):
//!
//! ```text
//! y(k) ≈ H_0^u u(k) + Σ_{i=1..p} [H_i^u u(k−i) + H_i^y y(k−i)]
//! ```
//!
//! With `Φ^p ≈ 0` this is a consistent estimator even under feedback, since
//! the regression error is the innovation. The truncation bias from finite
//! `p` is not corrected.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, hstack};
use crate::lti::{fmt_full, parse_field, Channel, IoData, MarkovSequence, PredictorModel};
use crate::{Error, Result, Scalar};

/// Identified Markov parameter row Ξ.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedXi<T: Scalar> {
    /// `H_0^u .. H_p^u` (`n_y × n_u` blocks).
    pub hu: MarkovSequence<T>,
    /// `H_0^y .. H_p^y` (`n_y × n_y` blocks); `H_0^y` is stored as zero.
    pub hy: MarkovSequence<T>,
    pub past_horizon: usize,
    /// Estimate of the innovation covariance from the regression residuals.
    pub residual_variance: DMatrix<T>,
}

impl<T: Scalar> IdentifiedXi<T> {
    pub fn inputs(&self) -> usize {
        self.hu.col_dim()
    }
    pub fn outputs(&self) -> usize {
        self.hu.row_dim()
    }

    /// Exact Ξ of a known predictor (what identification converges to).
    pub fn from_predictor(pred: &PredictorModel<T>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::validation("past horizon must be at least 1"));
        }
        Ok(Self {
            hu: pred.channel_system(Channel::U).markov(p + 1),
            hy: pred.channel_system(Channel::Y).markov(p + 1),
            past_horizon: p,
            residual_variance: pred.sigma_e.clone(),
        })
    }

    /// Ξ in the row layout `[H_p^u H_p^y ... H_1^u H_1^y H_0^u]`.
    pub fn xi_row(&self) -> DMatrix<T> {
        let p = self.past_horizon;
        let mut blocks: Vec<&DMatrix<T>> = Vec::with_capacity(2 * p + 1);
        for i in (1..=p).rev() {
            blocks.push(&self.hu[i]);
            blocks.push(&self.hy[i]);
        }
        blocks.push(&self.hu[0]);
        hstack(&blocks)
    }

    /// Blocks `[H_i^u H_i^y]` of the fault-free system `(Φ, [B̃ K], C, [D 0])`.
    pub fn io_markov(&self) -> MarkovSequence<T> {
        MarkovSequence::from_fn(self.past_horizon + 1, |i| {
            hstack(&[&self.hu[i], &self.hy[i]])
        })
        .expect("uniform blocks")
    }

    /// Predictor residuals `r(k) = y(k) − ŷ(k|k−1)` using the truncated
    /// predictor; samples before the record start are taken as zero.
    pub fn residuals(&self, data: &IoData<T>) -> Result<DMatrix<T>> {
        if data.inputs() != self.inputs() || data.outputs() != self.outputs() {
            return Err(Error::validation("data dimensions do not match Ξ"));
        }
        let n = data.len();
        let p = self.past_horizon;
        let mut r = DMatrix::zeros(n, self.outputs());
        for k in 0..n {
            let mut acc: DVector<T> =
                data.y.row(k).transpose() - &self.hu[0] * data.u.row(k).transpose();
            for i in 1..=p.min(k) {
                acc -= &self.hu[i] * data.u.row(k - i).transpose();
                acc -= &self.hy[i] * data.y.row(k - i).transpose();
            }
            r.row_mut(k).copy_from(&acc.transpose());
        }
        Ok(r)
    }

    /// CSV with a manifest line `p,n_u,n_y` followed by one line per matrix
    /// row: `kind,lag,row,values...` where kind is `Hu`, `Hy` or `SigmaE`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record(["p", "n_u", "n_y"])?;
        w.write_record([
            self.past_horizon.to_string(),
            self.inputs().to_string(),
            self.outputs().to_string(),
        ])?;
        let mut emit = |kind: &str, lag: usize, m: &DMatrix<T>| -> Result<()> {
            for r in 0..m.nrows() {
                let mut rec = vec![kind.to_string(), lag.to_string(), r.to_string()];
                rec.extend(m.row(r).iter().map(|v| fmt_full(*v)));
                w.write_record(&rec)?;
            }
            Ok(())
        };
        for i in 0..=self.past_horizon {
            emit("Hu", i, &self.hu[i])?;
        }
        for i in 1..=self.past_horizon {
            emit("Hy", i, &self.hy[i])?;
        }
        emit("SigmaE", 0, &self.residual_variance)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
        let mut records = rdr.records();
        let manifest = records
            .next()
            .ok_or_else(|| Error::Parse("missing manifest values".into()))??;
        let dims: Vec<usize> = manifest
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(e.to_string()))
            })
            .collect::<Result<_>>()?;
        let [p, n_u, n_y] = dims[..] else {
            return Err(Error::Parse("manifest must be p,n_u,n_y".into()));
        };
        let mut hu = vec![DMatrix::zeros(n_y, n_u); p + 1];
        let mut hy = vec![DMatrix::zeros(n_y, n_y); p + 1];
        let mut sigma = DMatrix::zeros(n_y, n_y);
        for rec in records {
            let rec = rec?;
            if rec.len() < 3 {
                return Err(Error::Parse("short Ξ record".into()));
            }
            let lag: usize = rec[1].parse().map_err(|_| Error::Parse("bad lag".into()))?;
            let row: usize = rec[2].parse().map_err(|_| Error::Parse("bad row".into()))?;
            let target = match &rec[0] {
                "Hu" if lag <= p => &mut hu[lag],
                "Hy" if lag <= p => &mut hy[lag],
                "SigmaE" => &mut sigma,
                other => return Err(Error::Parse(format!("unknown Ξ record {other} lag {lag}"))),
            };
            if row >= target.nrows() || rec.len() - 3 != target.ncols() {
                return Err(Error::Parse(format!(
                    "Ξ record {} has wrong shape",
                    &rec[0]
                )));
            }
            for (j, field) in rec.iter().skip(3).enumerate() {
                target[(row, j)] = parse_field(field)?;
            }
        }
        Ok(Self {
            hu: MarkovSequence::new(hu)?,
            hy: MarkovSequence::new(hy)?,
            past_horizon: p,
            residual_variance: sigma,
        })
    }
}

/// Number of regressors for past horizon `p` (with the current input).
pub fn regressor_count(p: usize, n_u: usize, n_y: usize) -> usize {
    p * (n_u + n_y) + n_u
}

/// Settings of the VARX regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XiOptions {
    /// Past horizon `p`.
    pub past_horizon: usize,
    /// Tikhonov weight; `0` for plain least squares.
    pub ridge: f64,
    /// Estimate `H_0^u = D`. Turn off for strictly proper plants under
    /// output feedback without delay, where `u(k)` is correlated with the
    /// innovation `e(k)` and `D = 0` is known.
    pub feedthrough: bool,
}

impl Default for XiOptions {
    fn default() -> Self {
        Self {
            past_horizon: 100,
            ridge: 0.0,
            feedthrough: true,
        }
    }
}

/// Identifies Ξ by VARX least squares over `k = p..N−1`.
pub fn identify_xi<T: Scalar>(data: &IoData<T>, opts: &XiOptions) -> Result<IdentifiedXi<T>> {
    let p = opts.past_horizon;
    if p == 0 {
        return Err(Error::validation("past horizon must be at least 1"));
    }
    if !(opts.ridge >= 0.0 && opts.ridge.is_finite()) {
        return Err(Error::validation("ridge must be non-negative"));
    }
    let ridge = T::lit(opts.ridge);
    let (n, n_u, n_y) = (data.len(), data.inputs(), data.outputs());
    let block = n_u + n_y;
    let d = if opts.feedthrough {
        regressor_count(p, n_u, n_y)
    } else {
        p * block
    };
    let rows = n.saturating_sub(p);
    if rows == 0 || (opts.ridge == 0.0 && rows < d) {
        return Err(Error::InsufficientExcitation(format!(
            "{n} samples give {rows} regression rows for {d} unknowns per output (need N >= {})",
            d + p
        )));
    }
    let extra = if opts.ridge > 0.0 { d } else { 0 };
    let total = rows + extra;
    let mut x = DMatrix::zeros(total, d);
    let mut y = DMatrix::zeros(total, n_y);
    for (row, k) in (p..n).enumerate() {
        for i in 1..=p {
            let off = (p - i) * block;
            for j in 0..n_u {
                x[(row, off + j)] = data.u[(k - i, j)];
            }
            for j in 0..n_y {
                x[(row, off + n_u + j)] = data.y[(k - i, j)];
            }
        }
        if opts.feedthrough {
            for j in 0..n_u {
                x[(row, p * block + j)] = data.u[(k, j)];
            }
        }
        for j in 0..n_y {
            y[(row, j)] = data.y[(k, j)];
        }
    }
    if extra > 0 {
        let s = ridge.sqrt();
        for j in 0..d {
            x[(rows + j, j)] = s;
        }
    }
    let x_fit = x.rows(0, rows).into_owned();
    let rtol = T::eps() * T::lit(total.max(d) as f64) * T::lit(10.0);
    let sol = linalg::lstsq_pivoted(x, y.clone(), rtol);
    if sol.rank < d {
        let col = sol.deficient.iter().copied().min().unwrap_or(0);
        return Err(Error::InsufficientExcitation(format!(
            "regressor matrix has rank {} of {d}; first dependent regressor is {}",
            sol.rank,
            describe_regressor(col, p, n_u, n_y)
        )));
    }
    let coef = sol.coef;
    let resid = y.rows(0, rows) - &x_fit * &coef;
    let dof = if rows > d { rows - d } else { rows };
    let residual_variance = resid.transpose() * &resid / T::lit(dof as f64);

    let xi = coef.transpose();
    let mut hu = Vec::with_capacity(p + 1);
    let mut hy = Vec::with_capacity(p + 1);
    hu.push(if opts.feedthrough {
        xi.columns(p * block, n_u).into_owned()
    } else {
        DMatrix::zeros(n_y, n_u)
    });
    hy.push(DMatrix::zeros(n_y, n_y));
    for i in 1..=p {
        let off = (p - i) * block;
        hu.push(xi.columns(off, n_u).into_owned());
        hy.push(xi.columns(off + n_u, n_y).into_owned());
    }
    Ok(IdentifiedXi {
        hu: MarkovSequence::new(hu)?,
        hy: MarkovSequence::new(hy)?,
        past_horizon: p,
        residual_variance,
    })
}

fn describe_regressor(col: usize, p: usize, n_u: usize, n_y: usize) -> String {
    let block = n_u + n_y;
    if col >= p * block {
        return format!("u{}(k)", col - p * block + 1);
    }
    let lag = p - col / block;
    let within = col % block;
    if within < n_u {
        format!("u{}(k-{lag})", within + 1)
    } else {
        format!("y{}(k-{lag})", within - n_u + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::lti::{standard_normal, stream_rng};

    fn opts(p: usize, ridge: f64) -> XiOptions {
        XiOptions {
            past_horizon: p,
            ridge,
            feedthrough: true,
        }
    }

    /// Simulates the predictor directly: y = C x + D u + e, x⁺ = Φx + B̃u + Ky.
    fn predictor_data(pred: &PredictorModel<f64>, n: usize, noise: f64, seed: u64) -> IoData<f64> {
        let mut rng = stream_rng(seed, 0);
        let mut x = DVector::zeros(pred.states());
        let mut u = DMatrix::zeros(n, pred.inputs());
        let mut y = DMatrix::zeros(n, pred.outputs());
        for k in 0..n {
            let uk = standard_normal::<f64>(&mut rng, pred.inputs());
            let ek = standard_normal::<f64>(&mut rng, pred.outputs()) * noise;
            let yk = &pred.c * &x + &pred.d * &uk + ek;
            x = &pred.phi * &x + &pred.btilde * &uk + &pred.k * &yk;
            u.row_mut(k).copy_from(&uk.transpose());
            y.row_mut(k).copy_from(&yk.transpose());
        }
        IoData::new(u, y).unwrap()
    }

    #[test]
    fn nilpotent_predictor_has_no_truncation_bias() {
        let mut rng = stream_rng(1, 0);
        let mut pred = fixtures::random_predictor::<f64>(&mut rng, 3, 2, 2, &[0], 0.5);
        // strictly lower triangular Φ is nilpotent of index ≤ 3
        pred.phi = DMatrix::from_fn(3, 3, |i, j| if i > j { 0.7 * (i + j) as f64 } else { 0.0 });
        let p = 4;
        let data = predictor_data(&pred, 20_000, 1.0, 2);
        let xi = identify_xi(&data, &opts(p, 0.0)).unwrap();
        let exact = IdentifiedXi::from_predictor(&pred, p).unwrap();
        // coefficient standard error is about 1/sqrt(N) ≈ 0.007
        assert!(xi.hu.max_abs_diff(&exact.hu) < 0.05);
        assert!(xi.hy.max_abs_diff(&exact.hy) < 0.05);
        assert!((&xi.residual_variance - DMatrix::identity(2, 2)).amax() < 0.05);
    }

    #[test]
    fn error_shrinks_with_more_data() {
        let mut rng = stream_rng(3, 0);
        let pred = fixtures::random_predictor::<f64>(&mut rng, 4, 1, 2, &[0], 0.6);
        let p = 30;
        let exact = IdentifiedXi::from_predictor(&pred, p).unwrap();
        let err = |n: usize, seed: u64| {
            let xi = identify_xi(&predictor_data(&pred, n, 0.1, seed), &opts(p, 0.0)).unwrap();
            let mut e = 0.0;
            for i in 0..=p {
                e += (&xi.hu[i] - &exact.hu[i]).norm_squared()
                    + (&xi.hy[i] - &exact.hy[i]).norm_squared();
            }
            e.sqrt()
        };
        let mut small: Vec<f64> = (0..10).map(|s| err(1_000, 100 + s)).collect();
        let mut large: Vec<f64> = (0..10).map(|s| err(10_000, 200 + s)).collect();
        small.sort_by(f64::total_cmp);
        large.sort_by(f64::total_cmp);
        assert!(large[5] < small[5], "{} vs {}", large[5], small[5]);
    }

    #[test]
    fn too_few_samples_is_insufficient_excitation() {
        let mut rng = stream_rng(4, 0);
        let pred = fixtures::random_predictor::<f64>(&mut rng, 2, 1, 1, &[0], 0.5);
        let data = predictor_data(&pred, 20, 0.1, 1);
        let err = identify_xi(&data, &opts(10, 0.0)).unwrap_err();
        assert!(matches!(err, Error::InsufficientExcitation(_)));
        // ridge lifts the row requirement
        assert!(identify_xi(&data, &opts(10, 1e-3)).is_ok());
    }

    #[test]
    fn rank_deficient_regressor_names_signal() {
        let n = 200;
        let mut rng = stream_rng(9, 0);
        let noise: DMatrix<f64> = fixtures::gaussian(&mut rng, n, 2);
        let u = DMatrix::from_fn(n, 2, |k, j| if j == 0 { noise[(k, 0)] } else { 0.0 });
        let y = noise.columns(1, 1).into_owned();
        let data = IoData::new(u, y).unwrap();
        match identify_xi(&data, &opts(2, 0.0)).unwrap_err() {
            Error::InsufficientExcitation(msg) => assert!(msg.contains("u2"), "{msg}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn regressor_names() {
        assert_eq!(describe_regressor(0, 2, 1, 1), "u1(k-2)");
        assert_eq!(describe_regressor(3, 2, 1, 1), "y1(k-1)");
        assert_eq!(describe_regressor(4, 2, 1, 1), "u1(k)");
    }

    #[test]
    fn fir_residuals_recover_innovation() {
        let mut rng = stream_rng(5, 0);
        let mut pred = fixtures::random_predictor::<f64>(&mut rng, 2, 1, 2, &[0], 0.5);
        pred.phi = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let data = predictor_data(&pred, 50, 0.0, 3);
        let xi = IdentifiedXi::from_predictor(&pred, 3).unwrap();
        assert!(xi.residuals(&data).unwrap().amax() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = stream_rng(6, 0);
        let pred = fixtures::random_predictor::<f64>(&mut rng, 3, 2, 2, &[1], 0.7);
        let xi = IdentifiedXi::from_predictor(&pred, 5).unwrap();
        let mut buf = Vec::new();
        xi.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("p,n_u,n_y\n5,2,2\n"));
        let back = IdentifiedXi::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, xi);
    }

    #[test]
    fn xi_row_layout() {
        let mut rng = stream_rng(7, 0);
        let pred = fixtures::random_predictor::<f64>(&mut rng, 2, 1, 1, &[0], 0.7);
        let xi = IdentifiedXi::from_predictor(&pred, 2).unwrap();
        let row = xi.xi_row();
        assert_eq!(row.ncols(), regressor_count(2, 1, 1));
        assert_eq!(row[(0, 0)], xi.hu[2][(0, 0)]);
        assert_eq!(row[(0, 3)], xi.hy[1][(0, 0)]);
        assert_eq!(row[(0, 4)], xi.hu[0][(0, 0)]);
    }
}

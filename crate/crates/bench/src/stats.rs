//! Sample statistics of estimation errors and their 3σ contour.

use nalgebra::SymmetricEigen;
use sfe_core::{Error, Matrix, Result, Vector};

/// Contour level: the ellipsoid `(e − μ)ᵀ Σ⁻¹ (e − μ) = 3`.
pub const CONTOUR_LEVEL: f64 = 3.0;

/// Principal axes of the 3σ contour.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipse {
    pub center: Vector,
    /// Half-lengths `√(3 λ_i)`, descending.
    pub semi_axes: Vec<f64>,
    /// Unit axis directions as columns, matching `semi_axes`.
    pub directions: Matrix,
}

impl Ellipse {
    /// Orientation of the major axis in degrees (two-dimensional case).
    pub fn angle_deg(&self) -> Option<f64> {
        (self.directions.nrows() == 2).then(|| {
            let d = self.directions.column(0);
            let mut a = d[1].atan2(d[0]).to_degrees();
            if a <= -90.0 {
                a += 180.0;
            } else if a > 90.0 {
                a -= 180.0;
            }
            a
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats {
    pub samples: usize,
    pub mean: Vector,
    /// Unbiased sample covariance.
    pub covariance: Matrix,
    pub ellipse: Ellipse,
    /// Covariance numerically singular: the contour collapses.
    pub degenerate: bool,
}

impl ErrorStats {
    pub fn trace(&self) -> f64 {
        self.covariance.trace()
    }
}

/// Mean, covariance and 3σ contour of error samples (one per row).
pub fn ellipse_stats(errors: &Matrix) -> Result<ErrorStats> {
    let (n, dim) = errors.shape();
    if dim == 0 || n < dim + 1 {
        return Err(Error::validation(format!(
            "need at least {} error samples, got {n}",
            dim + 1
        )));
    }
    if errors.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("estimation errors are not finite".into()));
    }
    let mean = Vector::from_fn(dim, |j, _| errors.column(j).mean());
    let mut centered = errors.clone();
    for j in 0..dim {
        centered.column_mut(j).add_scalar_mut(-mean[j]);
    }
    let mut covariance = centered.transpose() * &centered / (n - 1) as f64;
    covariance = (&covariance + covariance.transpose()) * 0.5;
    let eig = SymmetricEigen::new(covariance.clone());
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let degenerate = order.iter().any(|&i| eig.eigenvalues[i] <= top * 1e-12) || top == 0.0;
    let semi_axes = order
        .iter()
        .map(|&i| (CONTOUR_LEVEL * eig.eigenvalues[i].max(0.0)).sqrt())
        .collect();
    let mut directions = Matrix::zeros(dim, dim);
    for (c, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        // deterministic sign: largest component positive
        if v[v.iamax()] < 0.0 {
            v.neg_mut();
        }
        directions.set_column(c, &v);
    }
    Ok(ErrorStats {
        samples: n,
        ellipse: Ellipse {
            center: mean.clone(),
            semi_axes,
            directions,
        },
        mean,
        covariance,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn isotropic_samples_give_circle_of_radius_sqrt3() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = Matrix::from_fn(200_000, 2, |_, _| StandardNormal.sample(&mut rng));
        let s = ellipse_stats(&e).unwrap();
        for a in &s.ellipse.semi_axes {
            assert!((a * a - 3.0).abs() < 0.05, "{a}");
        }
        assert!(!s.degenerate);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let e = Matrix::from_element(10, 2, 0.5);
        let s = ellipse_stats(&e).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.mean, Vector::from_element(2, 0.5));
    }

    #[test]
    fn scalar_interval_half_width() {
        let e = Matrix::from_column_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let s = ellipse_stats(&e).unwrap();
        // sample variance 4/3
        assert!((s.ellipse.semi_axes[0] - (3.0f64 * 4.0 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn correlated_axes_follow_eigenvectors() {
        // points on the line y = x: major axis at 45 degrees, minor zero
        let e = Matrix::from_fn(50, 2, |k, _| k as f64);
        let s = ellipse_stats(&e).unwrap();
        assert!((s.ellipse.angle_deg().unwrap() - 45.0).abs() < 1e-9);
        assert!(s.degenerate);
        assert!(s.ellipse.semi_axes[1] < 1e-6);
    }

    #[test]
    fn too_few_samples() {
        assert!(ellipse_stats(&Matrix::zeros(2, 2)).is_err());
    }
}

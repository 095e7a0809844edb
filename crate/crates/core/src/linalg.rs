//! Dense linear-algebra helpers shared by the estimation modules.

use nalgebra::{Complex, DMatrix, DVector, SVD};

use crate::{Error, Result, Scalar};

/// Default relative tolerance for structural rank decisions.
pub fn default_rank_tol<T: Scalar>() -> T {
    T::lit(1e-9).max(T::eps() * T::lit(1e3))
}

/// Singular value decomposition with singular values sorted descending.
pub fn svd<T: Scalar>(m: &DMatrix<T>) -> SVD<T, nalgebra::Dyn, nalgebra::Dyn> {
    SVD::new(m.clone(), true, true)
}

pub fn singular_values<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    if m.is_empty() {
        return Vec::new();
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

/// Numerical rank with threshold `rtol * sigma_max`.
pub fn rank<T: Scalar>(m: &DMatrix<T>, rtol: T) -> usize {
    let sv = singular_values(m);
    match sv.first() {
        Some(&s0) if s0 > T::zero() => sv.iter().filter(|&&s| s > rtol * s0).count(),
        _ => 0,
    }
}

/// Moore-Penrose pseudo-inverse; singular values below `rtol * sigma_max`
/// are treated as zero.
pub fn pinv<T: Scalar>(m: &DMatrix<T>, rtol: T) -> DMatrix<T> {
    let (r, c) = m.shape();
    if m.is_empty() {
        return DMatrix::zeros(c, r);
    }
    let svd = svd(m);
    let s0 = svd.singular_values[0];
    let u = svd.u.as_ref().expect("u computed");
    let vt = svd.v_t.as_ref().expect("v_t computed");
    let mut out = DMatrix::zeros(c, r);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s0 <= T::zero() || s <= rtol * s0 {
            break;
        }
        let inv = T::one() / s;
        out += vt.row(i).transpose() * u.column(i).transpose() * inv;
    }
    out
}

/// Orthonormal basis of the left null space of `m`, returned as rows:
/// `N * m = 0`, `N * N^T = I`.
pub fn left_null_space<T: Scalar>(m: &DMatrix<T>, rtol: T) -> DMatrix<T> {
    let r = m.nrows();
    let (u, rk) = full_left_basis(m, rtol);
    u.columns(rk, r - rk).transpose()
}

/// Full orthogonal `U` of the SVD of `m` (rows × rows) and the numerical rank.
/// The first `rank` columns span the range of `m`.
pub fn full_left_basis<T: Scalar>(m: &DMatrix<T>, rtol: T) -> (DMatrix<T>, usize) {
    let (r, c) = m.shape();
    if r == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    // Padding with r zero columns forces SVD to return a square U.
    let mut padded = DMatrix::zeros(r, c + r);
    padded.columns_mut(0, c).copy_from(m);
    let svd = svd(&padded);
    let s0 = svd.singular_values[0];
    let rk = if s0 > T::zero() {
        svd.singular_values
            .iter()
            .filter(|&&s| s > rtol * s0)
            .count()
    } else {
        0
    };
    (svd.u.expect("u computed"), rk.min(c))
}

pub fn eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Vec<Complex<T>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.clone().complex_eigenvalues().iter().copied().collect()
}

/// Largest eigenvalue modulus; zero for an empty matrix.
pub fn spectral_radius<T: Scalar>(m: &DMatrix<T>) -> T {
    eigenvalues(m)
        .iter()
        .map(|z| T::cabs(z))
        .fold(T::zero(), |a, b| a.max(b))
}

pub fn is_symmetric<T: Scalar>(m: &DMatrix<T>, rtol: T) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.norm().max(T::one());
    (m - m.transpose()).norm() <= rtol * scale
}

/// Factor `L` with `L L^T = m` for a symmetric positive semidefinite `m`.
///
/// Uses the symmetric eigendecomposition so that singular covariances
/// (e.g. zero noise on some channels) are accepted.
pub fn psd_factor<T: Scalar>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * T::lit(0.5);
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(T::tiny());
    let mut l = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -T::lit(1e-10) * scale {
            return Err(Error::validation(format!(
                "covariance is not positive semidefinite (eigenvalue {lam})"
            )));
        }
        let s = lam.max(T::zero()).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    Ok(l)
}

/// Stacked matrix powers `[C; C A; ...; C A^{count-1}]`.
pub fn observability<T: Scalar>(a: &DMatrix<T>, c: &DMatrix<T>, count: usize) -> DMatrix<T> {
    let (p, n) = c.shape();
    let mut out = DMatrix::zeros(p * count, n);
    let mut row = c.clone();
    for i in 0..count {
        out.rows_mut(i * p, p).copy_from(&row);
        row = &row * a;
    }
    out
}

/// Coefficients `[1, a_1, ..., a_n]` of `prod (s - r_i)` for real roots.
pub fn poly_from_roots<T: Scalar>(roots: &[T]) -> Vec<T> {
    let mut coeffs = vec![T::one()];
    for &r in roots {
        let mut next = vec![T::zero(); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs
}

/// Evaluates a matrix polynomial with coefficients ordered by descending power.
pub fn matrix_poly<T: Scalar>(a: &DMatrix<T>, coeffs: &[T]) -> DMatrix<T> {
    let n = a.nrows();
    let mut acc = DMatrix::zeros(n, n);
    for &c in coeffs {
        acc = &acc * a + DMatrix::identity(n, n) * c;
    }
    acc
}

/// Observer gain `l` (n×1) placing the eigenvalues of `a - l c` at `poles`
/// for a single-output pair via Ackermann's formula.
pub fn ackermann_observer<T: Scalar>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    poles: &[T],
) -> Result<DVector<T>> {
    let n = a.nrows();
    if poles.len() != n || c.nrows() != 1 {
        return Err(Error::PolePlacement(format!(
            "need {n} poles and a single output row, got {} poles",
            poles.len()
        )));
    }
    let obs = observability(a, c, n);
    let mut en = DVector::zeros(n);
    en[n - 1] = T::one();
    let x = obs.lu().solve(&en).ok_or_else(|| {
        Error::PolePlacement("single-output observability matrix singular".into())
    })?;
    let p = matrix_poly(a, &poly_from_roots(poles));
    Ok(p * x)
}

/// Result of the orthogonal staircase reduction.
#[derive(Debug, Clone)]
pub struct Staircase<T: Scalar> {
    /// Eigenvalues of the block that the input cannot reach.
    pub modes: Vec<Complex<T>>,
    /// Dimension of the reachable part.
    pub reachable_dim: usize,
    /// Smallest ratio between a rank decision's singular value and the
    /// threshold (or the threshold and the first rejected singular value).
    /// Values close to 1 mean the structure is numerically ambiguous.
    pub decision_margin: T,
}

/// Uncontrollable modes of `(a, b)` via the orthogonal controllability
/// staircase form.
pub fn uncontrollable_modes<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, rtol: T) -> Staircase<T> {
    let n = a.nrows();
    let mut a = a.clone();
    let scale = a.norm().max(b.norm()).max(T::tiny());
    let tol = rtol * scale;
    let mut offset = 0;
    let mut blk = b.clone();
    let mut margin = T::max_value().unwrap_or(T::lit(f64::MAX));
    while offset < n {
        let rows = n - offset;
        if blk.ncols() == 0 {
            break;
        }
        let sv = singular_values(&blk);
        let rk = sv.iter().filter(|&&s| s > tol).count().min(rows);
        if let Some(&s) = sv.get(rk.saturating_sub(1)) {
            if rk > 0 {
                margin = margin.min(s / tol);
            }
        }
        if let Some(&s) = sv.get(rk) {
            if s > T::zero() {
                margin = margin.min(tol / s);
            }
        }
        if rk == 0 {
            break;
        }
        let (u, _) = full_left_basis(&blk, T::zero());
        // a <- T^T a T with T = diag(I_offset, u)
        let top = u.transpose() * a.rows(offset, rows);
        a.rows_mut(offset, rows).copy_from(&top);
        let right = a.columns(offset, rows) * &u;
        a.columns_mut(offset, rows).copy_from(&right);
        let next = offset + rk;
        if next >= n {
            offset = n;
            break;
        }
        blk = a.view((next, offset), (n - next, rk)).into_owned();
        offset = next;
    }
    let tail = a
        .view((offset, offset), (n - offset, n - offset))
        .into_owned();
    Staircase {
        modes: eigenvalues(&tail),
        reachable_dim: offset,
        decision_margin: margin,
    }
}

/// Unobservable modes of `(a, c)` (dual staircase).
pub fn unobservable_modes<T: Scalar>(a: &DMatrix<T>, c: &DMatrix<T>, rtol: T) -> Staircase<T> {
    uncontrollable_modes(&a.transpose(), &c.transpose(), rtol)
}

/// Relative distance of `λ` from being an unobservable mode of `(a, c)`:
/// `σ_min([a − λI; c]) / ‖[a; c]‖₂`.
pub fn pbh_observability<T: Scalar>(a: &DMatrix<T>, c: &DMatrix<T>, lambda: Complex<T>) -> T {
    let n = a.nrows();
    if n == 0 {
        return T::one();
    }
    let z = T::zero();
    let pencil = DMatrix::<Complex<T>>::from_fn(n + c.nrows(), n, |i, j| {
        if i < n {
            let shift = if i == j { lambda } else { Complex::new(z, z) };
            Complex::new(a[(i, j)], z) - shift
        } else {
            Complex::new(c[(i - n, j)], z)
        }
    });
    let smin = pencil
        .singular_values()
        .iter()
        .fold(T::max_value().unwrap_or(T::one()), |m, &s| m.min(s));
    let scale = singular_values(&vstack(&[a, c]))
        .first()
        .copied()
        .unwrap_or(T::zero());
    if scale <= T::tiny() {
        return T::zero();
    }
    smin / scale
}

/// Least-squares solution from a column-pivoted Householder QR.
#[derive(Debug, Clone)]
pub struct LstsqSolution<T: Scalar> {
    /// `d × k` coefficients minimizing `‖X θ − Y‖_F`.
    pub coef: DMatrix<T>,
    pub rank: usize,
    /// Column indices (of `X`) rejected by the rank decision, in pivot order.
    pub deficient: Vec<usize>,
}

/// Column-pivoted (Businger–Golub) Householder QR least squares.
///
/// Columns whose pivoted diagonal falls below `rtol * |R_00|` are rejected
/// and receive zero coefficients (basic solution).
pub fn lstsq_pivoted<T: Scalar>(x: DMatrix<T>, y: DMatrix<T>, rtol: T) -> LstsqSolution<T> {
    let (m, d) = x.shape();
    let k = y.ncols();
    assert_eq!(y.nrows(), m, "row mismatch in least squares");
    let mut xs = x.data.as_vec().clone();
    let mut ys = y.data.as_vec().clone();
    let mut perm: Vec<usize> = (0..d).collect();
    let mut norms: Vec<T> = (0..d)
        .map(|j| xs[j * m..(j + 1) * m].iter().map(|v| *v * *v).sum::<T>())
        .collect();
    let mut orig_norms = norms.clone();
    let steps = m.min(d);
    let mut diag: Vec<T> = Vec::with_capacity(steps);
    let mut rank = steps;
    let mut r00 = T::zero();
    let mut v = vec![T::zero(); m];

    for step in 0..steps {
        let (jmax, _) = norms[step..]
            .iter()
            .enumerate()
            .fold(
                (0, -T::one()),
                |acc, (i, &nv)| if nv > acc.1 { (i, nv) } else { acc },
            );
        let jmax = jmax + step;
        if jmax != step {
            for i in 0..m {
                xs.swap(step * m + i, jmax * m + i);
            }
            perm.swap(step, jmax);
            norms.swap(step, jmax);
            orig_norms.swap(step, jmax);
        }
        let col = &xs[step * m..(step + 1) * m];
        let sub = &col[step..];
        let norm = sub.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if step == 0 {
            r00 = norm;
        }
        if norm <= rtol * r00 || norm == T::zero() {
            rank = step;
            break;
        }
        let alpha = if sub[0] > T::zero() { -norm } else { norm };
        let len = m - step;
        v[..len].copy_from_slice(sub);
        v[0] -= alpha;
        let vnorm2: T = v[..len].iter().map(|e| *e * *e).sum();
        diag.push(alpha);
        if vnorm2 > T::zero() {
            let beta = T::lit(2.0) / vnorm2;
            for j in step + 1..d {
                let cj = &mut xs[j * m + step..(j + 1) * m];
                let dot: T = cj.iter().zip(&v[..len]).map(|(a, b)| *a * *b).sum();
                let s = dot * beta;
                for (a, b) in cj.iter_mut().zip(&v[..len]) {
                    *a -= s * *b;
                }
            }
            for j in 0..k {
                let cj = &mut ys[j * m + step..(j + 1) * m];
                let dot: T = cj.iter().zip(&v[..len]).map(|(a, b)| *a * *b).sum();
                let s = dot * beta;
                for (a, b) in cj.iter_mut().zip(&v[..len]) {
                    *a -= s * *b;
                }
            }
        }
        xs[step * m + step] = alpha;
        // downdate partial column norms
        for j in step + 1..d {
            let r = xs[j * m + step];
            let nv = norms[j] - r * r;
            if nv <= T::lit(1e-6) * orig_norms[j] {
                let tail = &xs[j * m + step + 1..(j + 1) * m];
                norms[j] = tail.iter().map(|e| *e * *e).sum();
                orig_norms[j] = norms[j];
            } else {
                norms[j] = nv;
            }
        }
    }

    // back substitution on the leading rank×rank triangle
    let mut coef_p = DMatrix::zeros(d, k);
    for c in 0..k {
        for i in (0..rank).rev() {
            let mut acc = ys[c * m + i];
            for j in i + 1..rank {
                acc -= xs[j * m + i] * coef_p[(j, c)];
            }
            coef_p[(i, c)] = acc / xs[i * m + i];
        }
    }
    let mut coef = DMatrix::zeros(d, k);
    for (i, &orig) in perm.iter().enumerate() {
        coef.row_mut(orig).copy_from(&coef_p.row(i));
    }
    LstsqSolution {
        coef,
        rank,
        deficient: perm[rank..].to_vec(),
    }
}

/// Solves `a x = b` for square nonsingular `a`.
pub fn solve<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical("singular linear system".into()))
}

/// Places `block` at `(r, c)` inside `target`.
pub fn set_block<T: Scalar>(target: &mut DMatrix<T>, r: usize, c: usize, block: &DMatrix<T>) {
    target.view_mut((r, c), block.shape()).copy_from(block);
}

pub fn hstack<T: Scalar>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        set_block(&mut out, 0, c, b);
        c += b.ncols();
    }
    out
}

pub fn vstack<T: Scalar>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        set_block(&mut out, r, 0, b);
        r += b.nrows();
    }
    out
}

/// Identity columns `I^{[j]}` for the given zero-based indices.
pub fn selection_columns<T: Scalar>(n: usize, idx: &[usize]) -> DMatrix<T> {
    let mut out = DMatrix::zeros(n, idx.len());
    for (c, &j) in idx.iter().enumerate() {
        out[(j, c)] = T::one();
    }
    out
}

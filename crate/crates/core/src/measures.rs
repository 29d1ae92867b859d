//! Entanglement and overlap diagnostics.

use nalgebra::{DMatrix, Matrix4, Schur};

use crate::error::{invalid, Error, Result};
use crate::scalar::{cabs, cre, Real, C};
use crate::state::{ReducedDensityMatrix, StateVector};

/// Residual allowed on eigenvalues that must be real and nonnegative.
pub const EIGEN_RESIDUAL: f64 = 1e-8;
/// Spin-flip eigenvalues below this level are rounding noise (the spectrum
/// of a unit-trace `ρ ρ̃` is bounded by 1) and are zeroed before the square root.
const NOISE_FLOOR: f64 = 1e-13;

fn lambdas_from_spectrum<T: Real>(mu: [T; 4]) -> [T; 4] {
    let floor = T::lit(NOISE_FLOOR);
    mu.map(|x| if x > floor { x.sqrt() } else { T::zero() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcurrenceResult<T: Real> {
    pub value: T,
    /// Square roots of the spin-flip spectrum, descending.
    pub lambdas: [T; 4],
}

impl<T: Real> ConcurrenceResult<T> {
    fn from_lambdas(mut lambdas: [T; 4]) -> Self {
        lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        let raw = lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3];
        let value = if raw > T::zero() { raw } else { T::zero() };
        Self { value, lambdas }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyResult<T: Real> {
    pub value: T,
    pub purity: T,
}

fn as_matrix4<T: Real>(rho: &ReducedDensityMatrix<T>) -> Result<Matrix4<C<T>>> {
    if rho.sites.len() != 2 || rho.dim() != 4 {
        return invalid(format!(
            "concurrence needs a two-site (4x4) density matrix, got {}x{}",
            rho.dim(),
            rho.dim()
        ));
    }
    Ok(Matrix4::from_fn(|r, c| rho.matrix[(r, c)]))
}

/// `(σy ⊗ σy) ρ* (σy ⊗ σy)`.
pub fn spin_flip<T: Real>(rho: &Matrix4<C<T>>) -> Matrix4<C<T>> {
    // σy⊗σy is real with entries ±1 on the anti-diagonal: (0,3)=(3,0)=-1, (1,2)=(2,1)=+1.
    let sign = |i: usize| if i == 0 || i == 3 { -T::one() } else { T::one() };
    Matrix4::from_fn(|r, c| rho[(3 - r, 3 - c)].conj() * cre(sign(r) * sign(c)))
}

fn check_real_nonneg<T: Real>(z: C<T>) -> Option<T> {
    let tol = T::lit(EIGEN_RESIDUAL);
    if z.im.abs() > tol || z.re < -tol {
        None
    } else {
        Some(if z.re > T::zero() { z.re } else { T::zero() })
    }
}

fn hermitian_eigen4<T: Real>(m: Matrix4<C<T>>) -> ([T; 4], Matrix4<C<T>>) {
    let h = (m + m.adjoint()) * cre(T::lit(0.5));
    let eig = h.symmetric_eigen();
    let ev = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2], eig.eigenvalues[3]];
    (ev, eig.eigenvectors)
}

/// Wootters concurrence from the spectrum of `ρ ρ̃`.
///
/// The non-Hermitian product can be defective when `ρ` is close to a pure
/// product state; if its eigenvalues miss the residual check the Hermitian
/// route of [`concurrence_via_sqrt`] is used instead.
pub fn concurrence<T: Real>(rho: &ReducedDensityMatrix<T>) -> Result<ConcurrenceResult<T>> {
    let m = as_matrix4(rho)?;
    let product = m * spin_flip(&m);
    let spectrum = Schur::try_new(product, T::lit(1e-15), 10_000).and_then(|s| s.eigenvalues());
    if let Some(ev) = spectrum {
        let vals: Option<Vec<T>> = ev.iter().map(|z| check_real_nonneg(*z)).collect();
        if let Some(vals) = vals {
            return Ok(ConcurrenceResult::from_lambdas(lambdas_from_spectrum([
                vals[0], vals[1], vals[2], vals[3],
            ])));
        }
    }
    concurrence_via_sqrt(rho)
}

/// Concurrence from the eigenvalues of `r = sqrt(sqrt(ρ) ρ̃ sqrt(ρ))`.
pub fn concurrence_via_sqrt<T: Real>(rho: &ReducedDensityMatrix<T>) -> Result<ConcurrenceResult<T>> {
    let m = as_matrix4(rho)?;
    let (p, u) = hermitian_eigen4(m);
    let tol = T::lit(EIGEN_RESIDUAL);
    if p.iter().any(|&x| x < -tol) {
        return Err(Error::NumericalFailure(format!(
            "density matrix has a negative eigenvalue {:e}",
            p.iter().copied().fold(T::zero(), |a, b| if b < a { b } else { a })
        )));
    }
    let root = Matrix4::from_diagonal(&nalgebra::Vector4::from_fn(|i, _| {
        cre(if p[i] > T::zero() { p[i].sqrt() } else { T::zero() })
    }));
    let sqrt_rho = u * root * u.adjoint();
    let inner = sqrt_rho * spin_flip(&m) * sqrt_rho;
    let (mu, _) = hermitian_eigen4(inner);
    if let Some(x) = mu.iter().find(|&&x| x < -tol) {
        return Err(Error::NumericalFailure(format!("negative spin-flip eigenvalue {x:e}")));
    }
    Ok(ConcurrenceResult::from_lambdas(lambdas_from_spectrum(mu)))
}

/// Concurrence between two sites of a pure chain state.
pub fn pair_concurrence<T: Real>(state: &StateVector<T>, i: usize, j: usize) -> Result<T> {
    Ok(concurrence(&state.reduce(&[i, j])?)?.value)
}

/// `|<reference|state>|`.
pub fn fidelity<T: Real>(state: &StateVector<T>, reference: &StateVector<T>) -> Result<T> {
    if state.dim() != reference.dim() {
        return invalid(format!(
            "fidelity between states of dimension {} and {}",
            state.dim(),
            reference.dim()
        ));
    }
    Ok(cabs(reference.inner(state)?))
}

/// Size-normalized 2-Rényi entropy `-ln Tr(ρ²) / ln d`.
pub fn renyi2<T: Real>(rho: &ReducedDensityMatrix<T>) -> Result<EntropyResult<T>> {
    let purity = rho.purity();
    if !(purity > T::zero()) || !purity.is_finite() {
        return Err(Error::NumericalFailure(format!("non-positive purity {purity:e}")));
    }
    let d = T::from_usize(rho.dim()).expect("dimension fits in a float");
    let raw = -purity.ln() / d.ln();
    let value = if raw < T::zero() {
        T::zero()
    } else if raw > T::one() {
        T::one()
    } else {
        raw
    };
    Ok(EntropyResult { value, purity })
}

/// Running maximum over a window of `window` samples centred on each point.
/// Windows are truncated at the ends of the series.
pub fn envelope<T: Real>(series: &[T], window: usize) -> Result<Vec<T>> {
    if window == 0 {
        return invalid("envelope window must be positive");
    }
    if window > series.len() {
        return invalid(format!(
            "envelope window {window} exceeds series length {}",
            series.len()
        ));
    }
    let back = (window - 1) / 2;
    let ahead = window / 2;
    let n = series.len();
    // monotone deque of candidate indices
    let mut deque = std::collections::VecDeque::with_capacity(window);
    let mut next = 0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let hi = (i + ahead).min(n - 1);
        while next <= hi {
            while deque.back().is_some_and(|&b: &usize| series[b] <= series[next]) {
                deque.pop_back();
            }
            deque.push_back(next);
            next += 1;
        }
        let lo = i.saturating_sub(back);
        while deque.front().is_some_and(|&f| f < lo) {
            deque.pop_front();
        }
        out.push(series[*deque.front().expect("window is never empty")]);
    }
    Ok(out)
}

/// Indices of strict interior local maxima (`s[i-1] < s[i] >= s[i+1]`).
pub fn local_maxima<T: Real>(series: &[T]) -> Vec<usize> {
    (1..series.len().saturating_sub(1))
        .filter(|&i| series[i] > series[i - 1] && series[i] >= series[i + 1])
        .collect()
}

/// Normalized autocorrelation for lags `0..max_lag`.
pub fn autocorrelation<T: Real>(series: &[T], max_lag: usize) -> Vec<T> {
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    let nf = T::from_usize(n).expect("length fits in a float");
    let mean = series.iter().fold(T::zero(), |a, &b| a + b) / nf;
    let dev: Vec<T> = series.iter().map(|&x| x - mean).collect();
    let var = dev.iter().fold(T::zero(), |a, &b| a + b * b);
    (0..max_lag.min(n))
        .map(|k| {
            if var <= T::zero() {
                return if k == 0 { T::one() } else { T::zero() };
            }
            dev[..n - k].iter().zip(&dev[k..]).fold(T::zero(), |a, (&x, &y)| a + x * y) / var
        })
        .collect()
}

/// Height of the dominant non-zero-lag peak of the normalized
/// autocorrelation, over lags up to half the series length. Zero if the
/// autocorrelation has no interior local maximum.
pub fn periodicity_score<T: Real>(series: &[T]) -> T {
    let acf = autocorrelation(series, series.len() / 2);
    local_maxima(&acf)
        .into_iter()
        .map(|i| acf[i])
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

/// Arithmetic mean of consecutive differences of `positions`.
pub fn mean_spacing<T: Real>(positions: &[T]) -> Option<T> {
    if positions.len() < 2 {
        return None;
    }
    let n = T::from_usize(positions.len() - 1)?;
    Some((positions[positions.len() - 1] - positions[0]) / n)
}

/// Spin-flipped reduced matrix as a dynamic matrix, for callers that work with `DMatrix`.
pub fn spin_flipped<T: Real>(rho: &ReducedDensityMatrix<T>) -> Result<DMatrix<C<T>>> {
    let m = spin_flip(&as_matrix4(rho)?);
    Ok(DMatrix::from_fn(4, 4, |r, c| m[(r, c)]))
}

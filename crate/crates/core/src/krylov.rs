//! Lanczos approximation of `exp(-iHτ)|v>` with adaptive substeps.
//!
//! The local error of a step is estimated as `β_m |e_m^T exp(-iT_m τ) e_1|`
//! and kept below `rate * τ`, so errors accumulated over a run of length
//! `t` stay below `rate * t`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kernels;
use crate::models::Hamiltonian;
use crate::scalar::{cabs, cis, czero, cre, Real, C};
use crate::state::StateVector;

/// Memory budget for a stored Lanczos basis. Larger problems regenerate the
/// basis in a second pass instead of storing it.
const STORED_BASIS_BYTES: usize = 1 << 30;

#[derive(Debug, Clone)]
pub struct KrylovStepper<T: Real> {
    /// Allowed local error per unit time.
    rate: T,
    max_dim: usize,
    min_step: T,
    /// Step size carried over between calls.
    hint: T,
    /// Krylov dimension of the previous step; convergence checks start just below it.
    last_dim: usize,
}

struct Lanczos<T: Real> {
    alpha: Vec<T>,
    beta: Vec<T>,
    /// `β_m`, coupling of the last basis vector to the residual; zero on breakdown.
    residual: T,
    basis: Option<Vec<Vec<C<T>>>>,
    /// Projection from the final convergence check, if it covered the whole recurrence.
    projected: Option<Projected<T>>,
}

impl<T: Real> Lanczos<T> {
    fn dim(&self) -> usize {
        self.alpha.len()
    }
}

/// Eigen-decomposition of the tridiagonal projection.
struct Projected<T: Real> {
    eig: SymmetricEigen<T, nalgebra::Dyn>,
}

impl<T: Real> Projected<T> {
    fn new(alpha: &[T], beta: &[T]) -> Self {
        let m = alpha.len();
        let t = DMatrix::from_fn(m, m, |r, c| {
            if r == c {
                alpha[r]
            } else if r + 1 == c {
                beta[r]
            } else if c + 1 == r {
                beta[c]
            } else {
                T::zero()
            }
        });
        Self { eig: t.symmetric_eigen() }
    }

    /// `exp(-i T τ) e_1`.
    fn propagate_e1(&self, tau: T) -> Vec<C<T>> {
        let q = &self.eig.eigenvectors;
        let m = q.nrows();
        let coeffs: Vec<C<T>> = (0..m)
            .map(|k| cis(-self.eig.eigenvalues[k] * tau) * cre(q[(0, k)]))
            .collect();
        (0..m)
            .map(|r| (0..m).fold(czero(), |acc, k| acc + coeffs[k] * cre(q[(r, k)])))
            .collect()
    }

    fn error(&self, residual: T, tau: T) -> T {
        if residual == T::zero() {
            return T::zero();
        }
        let y = self.propagate_e1(tau);
        residual * cabs(y[y.len() - 1])
    }
}

impl<T: Real> KrylovStepper<T> {
    pub fn new(tolerance: T, horizon: T) -> Self {
        let horizon = if horizon > T::one() { horizon } else { T::one() };
        Self {
            rate: tolerance / horizon,
            max_dim: 40,
            min_step: T::lit(1e-10),
            hint: T::lit(0.5),
            last_dim: 0,
        }
    }

    fn krylov_cap(&self, dim: usize) -> usize {
        self.max_dim.min(dim)
    }

    fn breakdown_threshold() -> T {
        T::lit(1e-12)
    }

    /// Run the recurrence from the unit vector `v`, stopping once `target`
    /// can be reached within the error budget or the dimension cap is hit.
    fn lanczos(&self, ham: &Hamiltonian<T>, v: &[C<T>], target: T, store: bool) -> Lanczos<T> {
        let dim = v.len();
        let cap = self.krylov_cap(dim);
        let mut alpha = Vec::with_capacity(cap);
        let mut beta: Vec<T> = Vec::with_capacity(cap);
        let mut basis = store.then(|| vec![v.to_vec()]);
        let mut prev: Vec<C<T>> = vec![czero(); dim];
        let mut cur: Vec<C<T>> = v.to_vec();
        let mut w: Vec<C<T>> = vec![czero(); dim];
        let mut residual = T::zero();
        let mut projected = None;
        let first_check = self.last_dim.saturating_sub(2).max(2);
        for j in 0..cap {
            ham.apply_into(&cur, &mut w);
            let a = kernels::dot(&cur, &w).re;
            kernels::axpy(cre(-a), &cur, &mut w);
            if j > 0 {
                kernels::axpy(cre(-beta[j - 1]), &prev, &mut w);
            }
            if let Some(b) = basis.as_ref() {
                // one pass of full reorthogonalization
                for q in b.iter() {
                    let overlap = kernels::dot(q, &w);
                    kernels::axpy(-overlap, q, &mut w);
                }
            }
            alpha.push(a);
            let b = kernels::norm(&w);
            if b < Self::breakdown_threshold() {
                residual = T::zero();
                break;
            }
            residual = b;
            if j + 1 == cap {
                break;
            }
            if j >= first_check {
                let proj = Projected::new(&alpha, &beta);
                if proj.error(residual, target) <= self.rate * target {
                    projected = Some(proj);
                    break;
                }
            }
            beta.push(b);
            std::mem::swap(&mut prev, &mut cur);
            kernels::scale(cre(T::one() / b), &mut w);
            std::mem::swap(&mut cur, &mut w);
            if let Some(bs) = basis.as_mut() {
                bs.push(cur.clone());
            }
        }
        Lanczos { alpha, beta, residual, basis, projected }
    }

    /// Recompute the basis with the same recurrence and accumulate `Σ y_k v_k`.
    fn combine_two_pass(ham: &Hamiltonian<T>, v: &[C<T>], lz: &Lanczos<T>, y: &[C<T>]) -> Vec<C<T>> {
        let dim = v.len();
        let mut out = vec![czero(); dim];
        let mut prev: Vec<C<T>> = vec![czero(); dim];
        let mut cur: Vec<C<T>> = v.to_vec();
        let mut w: Vec<C<T>> = vec![czero(); dim];
        for j in 0..lz.dim() {
            kernels::axpy(y[j], &cur, &mut out);
            if j + 1 == lz.dim() {
                break;
            }
            ham.apply_into(&cur, &mut w);
            kernels::axpy(cre(-lz.alpha[j]), &cur, &mut w);
            if j > 0 {
                kernels::axpy(cre(-lz.beta[j - 1]), &prev, &mut w);
            }
            std::mem::swap(&mut prev, &mut cur);
            kernels::scale(cre(T::one() / lz.beta[j]), &mut w);
            std::mem::swap(&mut cur, &mut w);
        }
        out
    }

    /// Advance `state` by `duration` under `ham`.
    pub fn advance(&mut self, ham: &Hamiltonian<T>, state: &mut StateVector<T>, duration: T) -> Result<()> {
        self.advance_sampled(ham, state, duration, &[], |_, _| Ok(()))
    }

    /// Advance `state` by `duration`, calling `emit(k, ψ(offsets[k]))` along
    /// the way. Offsets must be increasing and lie in `(0, duration)`; the
    /// intermediate states come from the same Krylov bases as the steps.
    pub fn advance_sampled<F>(
        &mut self,
        ham: &Hamiltonian<T>,
        state: &mut StateVector<T>,
        duration: T,
        offsets: &[T],
        mut emit: F,
    ) -> Result<()>
    where
        F: FnMut(usize, &StateVector<T>) -> Result<()>,
    {
        let mut remaining = duration;
        let mut elapsed = T::zero();
        let mut pending = 0;
        let dim = state.dim();
        let store = self.krylov_cap(dim) * dim * std::mem::size_of::<C<T>>() <= STORED_BASIS_BYTES;
        let mut scratch = state.clone();
        while remaining > T::zero() {
            let mut tau = if self.hint < remaining { self.hint } else { remaining };
            let mut lz = self.lanczos(ham, state.amplitudes(), tau, store);
            self.last_dim = lz.dim();
            let proj = lz.projected.take().unwrap_or_else(|| Projected::new(&lz.alpha, &lz.beta));
            let mut shrunk = false;
            while proj.error(lz.residual, tau) > self.rate * tau {
                tau *= T::lit(0.5);
                shrunk = true;
                if tau < self.min_step {
                    return Err(Error::Convergence(format!(
                        "Krylov step fell below {:e} at error rate {:e}",
                        self.min_step, self.rate
                    )));
                }
            }
            let combine = |y: &[C<T>]| match &lz.basis {
                Some(basis) => {
                    let mut out = vec![czero(); dim];
                    for (q, &c) in basis.iter().zip(y) {
                        kernels::axpy(c, q, &mut out);
                    }
                    out
                }
                None => Self::combine_two_pass(ham, state.amplitudes(), &lz, y),
            };
            let last_step = remaining - tau < self.min_step;
            while pending < offsets.len() && (last_step || offsets[pending] - elapsed <= tau) {
                let y = proj.propagate_e1(offsets[pending] - elapsed);
                scratch.amplitudes_mut().copy_from_slice(&combine(&y));
                scratch.renormalize();
                emit(pending, &scratch)?;
                pending += 1;
            }
            let next = combine(&proj.propagate_e1(tau));
            state.amplitudes_mut().copy_from_slice(&next);
            let n = state.renormalize();
            let drift = (n - T::one()).abs();
            if drift > T::lit(1e-6) {
                return Err(Error::Convergence(format!("norm drifted by {drift:e} in one Krylov step")));
            }
            elapsed += tau;
            remaining -= tau;
            if last_step {
                remaining = T::zero();
            }
            // grow the step when the error budget allowed the full step
            self.hint = if shrunk { tau } else { tau * T::lit(2.0) };
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{dense_h, ModelKind, ModelSpec};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// exp(-iHt)ψ by dense Hermitian eigendecomposition.
    fn dense_evolve(spec: &ModelSpec, psi: &[C<f64>], t: f64) -> Vec<C<f64>> {
        let h = dense_h::<f64>(spec).unwrap();
        let eig = h.symmetric_eigen();
        let u = &eig.eigenvectors;
        let coeffs = u.adjoint() * DVector::from_column_slice(psi);
        let phased = DVector::from_fn(coeffs.len(), |k, _| coeffs[k] * cis(-eig.eigenvalues[k] * t));
        (u * phased).iter().copied().collect()
    }

    #[test]
    fn matches_dense_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in ModelKind::ALL {
            let spec = ModelSpec::new(kind, 8);
            let ham = Hamiltonian::new(&spec).unwrap();
            let mut s = StateVector::random(8, &mut rng).unwrap();
            let expect = dense_evolve(&spec, s.amplitudes(), 3.7);
            let mut stepper = KrylovStepper::new(1e-11, 3.7);
            stepper.advance(&ham, &mut s, 3.7).unwrap();
            let err: f64 = s.amplitudes().iter().zip(&expect).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err < 1e-9, "{kind}: {err}");
        }
    }

    #[test]
    fn two_pass_equals_stored_basis() {
        let spec = ModelSpec::dfm(10);
        let ham = Hamiltonian::<f64>::new(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = StateVector::random(10, &mut rng).unwrap();
        let stepper = KrylovStepper::new(1e-10, 1.0);
        let stored = stepper.lanczos(&ham, s.amplitudes(), 0.3, true);
        let plain = stepper.lanczos(&ham, s.amplitudes(), 0.3, false);
        let proj = Projected::new(&plain.alpha, &plain.beta);
        let y = proj.propagate_e1(0.3);
        let a = KrylovStepper::combine_two_pass(&ham, s.amplitudes(), &plain, &y);
        let expect = dense_evolve(&spec, s.amplitudes(), 0.3);
        let err: f64 = a.iter().zip(&expect).map(|(x, z)| (x - z).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-8, "{err}");
        assert_eq!(stored.dim(), plain.dim());
    }

    #[test]
    fn sampled_states_match_dense_exponential() {
        let spec = ModelSpec::dfm(8);
        let ham = Hamiltonian::<f64>::new(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s0 = StateVector::random(8, &mut rng).unwrap();
        let offsets: Vec<f64> = (1..200).map(|k| k as f64 * 0.05).collect();
        let mut s = s0.clone();
        let mut stepper = KrylovStepper::new(1e-10, 10.0);
        let mut seen = 0;
        stepper
            .advance_sampled(&ham, &mut s, 10.0, &offsets, |k, psi| {
                assert_eq!(k, seen);
                seen += 1;
                let expect = dense_evolve(&spec, s0.amplitudes(), offsets[k]);
                let err: f64 = psi.amplitudes().iter().zip(&expect).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                assert!(err < 1e-9, "t = {}: {err}", offsets[k]);
                Ok(())
            })
            .unwrap();
        assert_eq!(seen, offsets.len());
        let expect = dense_evolve(&spec, s0.amplitudes(), 10.0);
        let err: f64 = s.amplitudes().iter().zip(&expect).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn invariant_subspace_breakdown_is_exact() {
        // The L-sector of a 4-site DFM has 3 states, so the Krylov space closes early.
        let spec = ModelSpec::dfm(4);
        let ham = Hamiltonian::<f64>::new(&spec).unwrap();
        let mut s = StateVector::basis(4, 0b0101).unwrap();
        let expect = dense_evolve(&spec, s.amplitudes(), 25.0);
        let mut stepper = KrylovStepper::new(1e-12, 25.0);
        stepper.advance(&ham, &mut s, 25.0).unwrap();
        let err: f64 = s.amplitudes().iter().zip(&expect).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-12, "{err}");
    }
}

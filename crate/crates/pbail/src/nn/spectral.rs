//! Spectral normalization of weight matrices via power iteration.
//!
//! The estimate keeps persistent left/right singular-vector guesses and
//! refines them by one iteration per call, which is enough once training has
//! warmed up: the vectors track the slowly moving weights. Normalizing by
//! the estimated top singular value keeps each layer roughly 1-Lipschitz,
//! which tames reward extrapolation on states outside the training data.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Threshold below which a matrix is treated as zero and left unnormalized.
const SIGMA_FLOOR: f64 = 1e-30;

/// Persistent singular-vector estimates for one `in x out` weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState<S> {
    /// Left vector estimate, `1 x in`.
    pub u: Tensor<S>,
    /// Right vector estimate, `out x 1`.
    pub v: Tensor<S>,
}

impl<S: Scalar> SpectralState<S> {
    /// Random unit-norm initialization.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let mut u = Tensor::zeros(1, in_dim);
        for x in u.data_mut() {
            *x = S::c(rng.sample::<f64, _>(StandardNormal));
        }
        let mut v = Tensor::zeros(out_dim, 1);
        for x in v.data_mut() {
            *x = S::c(rng.sample::<f64, _>(StandardNormal));
        }
        normalize_in_place(&mut u);
        normalize_in_place(&mut v);
        Self { u, v }
    }

    /// One power-iteration refinement against `w` (`in x out`).
    pub fn power_iterate(&mut self, w: &Tensor<S>) {
        let (in_dim, out_dim) = w.shape();
        assert_eq!(self.u.cols(), in_dim, "u length vs weight rows");
        assert_eq!(self.v.rows(), out_dim, "v length vs weight cols");
        // v <- normalize(W^T u)
        for j in 0..out_dim {
            let mut acc = S::zero();
            for i in 0..in_dim {
                acc += w.get(i, j) * self.u.data()[i];
            }
            self.v.data_mut()[j] = acc;
        }
        if !normalize_in_place(&mut self.v) {
            return;
        }
        // u <- normalize(W v)
        for i in 0..in_dim {
            let row = w.row_slice(i);
            let mut acc = S::zero();
            for (&wv, &vv) in row.iter().zip(self.v.data()) {
                acc += wv * vv;
            }
            self.u.data_mut()[i] = acc;
        }
        normalize_in_place(&mut self.u);
    }

    /// Current top-singular-value estimate `u^T W v`.
    pub fn sigma(&self, w: &Tensor<S>) -> S {
        let (in_dim, out_dim) = w.shape();
        let mut acc = S::zero();
        for i in 0..in_dim {
            let ui = self.u.data()[i];
            let row = w.row_slice(i);
            for j in 0..out_dim {
                acc += ui * row[j] * self.v.data()[j];
            }
        }
        acc
    }
}

/// Runs one power iteration and returns `w / sigma`. A (numerically) zero
/// matrix is returned unchanged.
pub fn spectral_normalize<S: Scalar>(w: &Tensor<S>, state: &mut SpectralState<S>) -> Tensor<S> {
    state.power_iterate(w);
    let sigma = state.sigma(w);
    if sigma.as_f64().abs() < SIGMA_FLOOR {
        return w.clone();
    }
    w.map(|x| x / sigma)
}

fn normalize_in_place<S: Scalar>(t: &mut Tensor<S>) -> bool {
    let norm = t.sq_norm().sqrt();
    if norm.as_f64() < SIGMA_FLOOR {
        return false;
    }
    for x in t.data_mut() {
        *x = *x / norm;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Top singular value by Jacobi eigenvalue iteration on `W^T W`;
    /// independent of the power-iteration path under test.
    pub(crate) fn jacobi_top_singular_value(w: &Tensor<f64>) -> f64 {
        let (n, m) = w.shape();
        let mut a = vec![vec![0.0; m]; m];
        for j in 0..m {
            for k in 0..m {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += w.get(i, j) * w.get(i, k);
                }
                a[j][k] = acc;
            }
        }
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..m {
                for q in (p + 1)..m {
                    off += a[p][q] * a[p][q];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..m {
                for q in (p + 1)..m {
                    if a[p][q].abs() < 1e-18 {
                        continue;
                    }
                    let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..m {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..m {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let lambda_max = (0..m).map(|i| a[i][i]).fold(f64::MIN, f64::max);
        lambda_max.max(0.0).sqrt()
    }

    #[test]
    fn diagonal_matrix_converges_to_unit_leading_singular_value() {
        let w = Tensor::<f64>::new(2, 2, vec![2.0, 0.0, 0.0, 1.0]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut state = SpectralState::init(2, 2, &mut rng);
        let mut out = w.clone();
        for _ in 0..200 {
            out = spectral_normalize(&w, &mut state);
        }
        assert!((out.get(0, 0) - 1.0).abs() < 1e-9);
        assert!((out.get(1, 1) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn identity_matrix_is_fixed_point() {
        let w = Tensor::<f64>::new(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut state = SpectralState::init(3, 3, &mut rng);
        let mut out = w.clone();
        for _ in 0..50 {
            out = spectral_normalize(&w, &mut state);
        }
        for (x, y) in out.data().iter().zip(w.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_matrix_is_returned_unchanged() {
        let w = Tensor::<f64>::zeros(3, 2);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut state = SpectralState::init(3, 2, &mut rng);
        let out = spectral_normalize(&w, &mut state);
        assert_eq!(out, w);
    }

    #[test]
    fn random_matrix_normalized_sigma_matches_jacobi_svd() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        for trial in 0..20 {
            let (n, m) = (4, 4);
            let mut w = Tensor::zeros(n, m);
            for x in w.data_mut() {
                *x = rng.sample::<f64, _>(StandardNormal);
            }
            let mut state = SpectralState::init(n, m, &mut rng);
            let mut out = w.clone();
            for _ in 0..300 {
                out = spectral_normalize(&w, &mut state);
            }
            let sigma_out = jacobi_top_singular_value(&out);
            assert!(
                (sigma_out - 1.0).abs() < 1e-9,
                "trial {trial}: normalized sigma {sigma_out}"
            );
        }
    }

    #[test]
    fn normalization_is_scale_invariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut w = Tensor::zeros(3, 3);
        for x in w.data_mut() {
            *x = rng.sample::<f64, _>(StandardNormal);
        }
        let w_scaled = w.map(|x| x * 7.5);
        let mut s1 = SpectralState::init(3, 3, &mut ChaCha20Rng::seed_from_u64(9));
        let mut s2 = SpectralState::init(3, 3, &mut ChaCha20Rng::seed_from_u64(9));
        let mut a = w.clone();
        let mut b = w_scaled.clone();
        for _ in 0..300 {
            a = spectral_normalize(&w, &mut s1);
            b = spectral_normalize(&w_scaled, &mut s2);
        }
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn one_iteration_tracks_slowly_changing_weights() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let mut w = Tensor::zeros(5, 5);
        for x in w.data_mut() {
            *x = rng.sample::<f64, _>(StandardNormal);
        }
        let mut state = SpectralState::init(5, 5, &mut rng);
        // Warm up, then drift the weights slightly each step as training would.
        for _ in 0..100 {
            let _ = spectral_normalize(&w, &mut state);
        }
        for _ in 0..50 {
            for x in w.data_mut() {
                *x += 1e-3 * rng.sample::<f64, _>(StandardNormal);
            }
            let out = spectral_normalize(&w, &mut state);
            let sigma = jacobi_top_singular_value(&out);
            assert!((sigma - 1.0).abs() < 0.05, "sigma drifted to {sigma}");
        }
    }
}

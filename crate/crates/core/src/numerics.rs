//! Representation-agnostic numerical kernels.
//!
//! Rank-one inverse and determinant updates take a signed weight `c` instead
//! of a pre-scaled vector, so `A + c u u'` with negative `c` never needs a
//! complex square root. Dimension mismatches are contract violations and
//! panic; only a vanishing Sherman-Morrison denominator is reported as an
//! error.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type SymMatrix = DMatrix<f64>;

/// Largest probability handed to [`chi2_quantile`]. `1 - 4.9e-324` rounds to
/// exactly one in binary64, where the quantile is infinite.
pub const P_MAX: f64 = 1.0 - 1e-12;

/// Smallest `|1 + c u' A^-1 u|` accepted by [`sm_rank_one`].
pub const SM_EPS: f64 = 1e-12;

/// `v' M v`, reading `M` column by column.
pub fn quadratic_form(m: &SymMatrix, v: &Vector) -> f64 {
    assert_eq!(m.nrows(), v.len(), "quadratic_form: dimension mismatch");
    assert_eq!(m.ncols(), v.len(), "quadratic_form: matrix not square");
    let mut acc = 0.0;
    for (j, vj) in v.iter().enumerate() {
        if *vj != 0.0 {
            acc += vj * m.column(j).dot(v);
        }
    }
    acc
}

/// Replaces `m` by `(m + m') / 2`.
pub fn symmetrize(m: &mut SymMatrix) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Sherman-Morrison: `(A + c u u')^-1` from `A^-1`.
pub fn sm_rank_one(ainv: &SymMatrix, u: &Vector, c: f64) -> Result<SymMatrix> {
    assert_eq!(ainv.nrows(), u.len(), "sm_rank_one: dimension mismatch");
    let w = ainv * u;
    let g = 1.0 + c * u.dot(&w);
    if g.abs() <= SM_EPS || !g.is_finite() {
        return Err(Error::SingularUpdate { denominator: g });
    }
    let mut out = ainv.clone();
    sub_scaled_outer(&mut out, &w, c / g);
    Ok(out)
}

/// `m <- m - k w w'`, then re-symmetrized. With `w = A^-1 u` and
/// `k = c / (1 + c u' w)` this is the in-place Sherman-Morrison step.
pub fn sub_scaled_outer(m: &mut SymMatrix, w: &Vector, k: f64) {
    m.ger(-k, w, w, 1.0);
    symmetrize(m);
}

/// `m <- s m - k w w'` in one column-major pass. Each entry is formed as
/// `s m_ij - k (w_i w_j)`, so a bitwise symmetric `m` stays symmetric.
pub fn scale_sub_outer(m: &mut SymMatrix, s: f64, w: &Vector, k: f64) {
    let n = w.len();
    assert_eq!((m.nrows(), m.ncols()), (n, n), "scale_sub_outer: dimension mismatch");
    let w = w.as_slice();
    for (j, col) in m.as_mut_slice().chunks_exact_mut(n).enumerate() {
        let wj = w[j];
        for (mij, wi) in col.iter_mut().zip(w) {
            *mij = s * *mij - k * (wi * wj);
        }
    }
}

/// Matrix determinant lemma: `|A + c u u'| = |A| (1 + c u' A^-1 u)`.
pub fn det_rank_one(det_a: f64, ainv: &SymMatrix, u: &Vector, c: f64) -> f64 {
    det_a * (1.0 + c * quadratic_form(ainv, u))
}

/// Log-domain form of [`det_rank_one`]. `None` when the updated matrix is not
/// positive definite (non-positive factor).
pub fn log_det_rank_one(log_det_a: f64, ainv: &SymMatrix, u: &Vector, c: f64) -> Option<f64> {
    let factor = 1.0 + c * quadratic_form(ainv, u);
    (factor > 0.0).then(|| log_det_a + factor.ln())
}

/// `ln sum exp(v_i)` with max shifting. All `-inf` yields `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "log_sum_exp: empty input");
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Novelty threshold for a given `beta`: the `1 - beta` chi-squared quantile,
/// with `beta == 0` meaning "never create beyond the first component".
pub fn novelty_threshold(dof: usize, beta: f64) -> f64 {
    assert!((0.0..1.0).contains(&beta), "beta must lie in [0, 1)");
    if beta == 0.0 {
        f64::INFINITY
    } else {
        chi2_quantile(dof, (1.0 - beta).min(P_MAX))
    }
}

/// Chi-squared quantile: the `q` with `P(dof/2, q/2) = p`.
///
/// Safeguarded Newton iteration on the regularized incomplete gamma
/// function; the upper tail is used for `p > 0.5` so probabilities near one
/// keep full relative precision. `p` above [`P_MAX`] is clamped.
pub fn chi2_quantile(dof: usize, p: f64) -> f64 {
    assert!(dof >= 1, "chi2_quantile: dof must be positive");
    assert!((0.0..1.0).contains(&p), "chi2_quantile: p = {p} outside [0, 1)");
    if p == 0.0 {
        return 0.0;
    }
    let p = p.min(P_MAX);
    let a = 0.5 * dof as f64;
    let ln_gamma_a = ln_gamma(a);
    let upper = p > 0.5;
    let tail = 1.0 - p;

    // Monotone increasing residual in y = q / 2.
    let residual = |y: f64| {
        if upper {
            tail - gamma_q(a, y)
        } else {
            gamma_p(a, y) - p
        }
    };

    let mut lo = 0.0_f64;
    let mut hi = a.max(1.0);
    while residual(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = residual(y);
        if r == 0.0 {
            break;
        }
        if r < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let density = ((a - 1.0) * y.ln() - y - ln_gamma_a).exp();
        let newton = y - r / density;
        let next = if density > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - y).abs();
        y = next;
        if step <= 1e-15 * y || hi - lo <= 1e-15 * hi {
            break;
        }
    }
    2.0 * y
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cont_frac(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cont_frac(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (a * x.ln() - x - ln_gamma(a)).exp()
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_cont_frac(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    h * (a * x.ln() - x - ln_gamma(a)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_spd, random_vector, rel_err};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_quadratic(m: &SymMatrix, v: &Vector) -> f64 {
        let n = v.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += v[i] * m[(i, j)] * v[j];
            }
        }
        acc
    }

    #[test]
    fn quadratic_form_cases() {
        let v = Vector::from_vec(vec![3.0, 4.0]);
        assert_eq!(quadratic_form(&SymMatrix::identity(2, 2), &v), 25.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_spd(&mut rng, 5);
        assert_eq!(quadratic_form(&m, &Vector::zeros(5)), 0.0);
        let v = random_vector(&mut rng, 5);
        let q = quadratic_form(&m, &v);
        assert!(q > 0.0);
        assert!(rel_err(q, naive_quadratic(&m, &v)) < 1e-12);
    }

    #[test]
    fn scale_sub_outer_matches_dense_and_stays_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_spd(&mut rng, 6);
        let w = random_vector(&mut rng, 6);
        let expect = &m * 1.25 - &w * w.transpose() * 0.3;
        let mut got = m.clone();
        scale_sub_outer(&mut got, 1.25, &w, 0.3);
        assert!((&got - &expect).amax() < 1e-12);
        assert_eq!(got, got.transpose());
    }

    #[test]
    #[should_panic]
    fn quadratic_form_rejects_mismatch() {
        quadratic_form(&SymMatrix::identity(2, 2), &Vector::zeros(3));
    }

    #[test]
    fn sm_rank_one_trivial() {
        let id = SymMatrix::identity(3, 3);
        assert_eq!(sm_rank_one(&id, &Vector::zeros(3), 1.0).unwrap(), id);
        let out = sm_rank_one(&SymMatrix::identity(1, 1), &Vector::from_element(1, 1.0), 1.0).unwrap();
        assert!((out[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sm_rank_one_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_spd(&mut rng, 6);
        let u = random_vector(&mut rng, 6);
        let ainv = a.clone().try_inverse().unwrap();
        let got = sm_rank_one(&ainv, &u, 0.3).unwrap();
        let want = (&a + 0.3 * &u * u.transpose()).try_inverse().unwrap();
        assert!((&got - &want).abs().max() <= 1e-9 * want.abs().max());
        assert_eq!(got, got.transpose());
    }

    #[test]
    fn sm_rank_one_singular() {
        let id = SymMatrix::identity(1, 1);
        let err = sm_rank_one(&id, &Vector::from_element(1, 1.0), -1.0).unwrap_err();
        assert!(matches!(err, Error::SingularUpdate { denominator } if denominator.abs() <= SM_EPS));
    }

    #[test]
    fn det_rank_one_cases() {
        assert_eq!(det_rank_one(1.0, &SymMatrix::identity(2, 2), &Vector::zeros(2), 1.0), 1.0);
        assert_eq!(
            det_rank_one(1.0, &SymMatrix::identity(1, 1), &Vector::from_element(1, 1.0), 1.0),
            2.0
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(&mut rng, 6);
        let u = random_vector(&mut rng, 6);
        let ainv = a.clone().try_inverse().unwrap();
        let got = det_rank_one(a.determinant(), &ainv, &u, 0.7);
        let want = (&a + 0.7 * &u * u.transpose()).determinant();
        assert!(rel_err(got, want) < 1e-9);
        let log = log_det_rank_one(a.determinant().ln(), &ainv, &u, 0.7).unwrap();
        assert!(rel_err(log.exp(), want) < 1e-9);
    }

    #[test]
    fn chi2_closed_forms() {
        assert_eq!(chi2_quantile(1, 0.0), 0.0);
        let q = chi2_quantile(2, 0.95);
        assert!(rel_err(q, -2.0 * (0.05f64).ln()) < 1e-12, "{q}");
        assert!((q - 5.991_464_547_107_979).abs() < 1e-9);
        // clamp: anything above P_MAX behaves like P_MAX
        assert_eq!(chi2_quantile(2, 1.0 - 1e-15), chi2_quantile(2, P_MAX));
    }

    #[test]
    #[should_panic]
    fn chi2_rejects_one() {
        chi2_quantile(3, 1.0);
    }

    #[test]
    fn chi2_roundtrip_through_gamma() {
        for dof in [1usize, 3, 7, 34, 100, 784] {
            for p in [1e-6, 0.01, 0.3, 0.5, 0.77, 0.99, 0.999_999, P_MAX] {
                let q = chi2_quantile(dof, p);
                let a = dof as f64 / 2.0;
                if p <= 0.5 {
                    assert!(rel_err(gamma_p(a, q / 2.0), p) < 1e-8, "dof {dof} p {p}");
                } else {
                    assert!(rel_err(gamma_q(a, q / 2.0), 1.0 - p) < 1e-8, "dof {dof} p {p}");
                }
            }
        }
    }

    #[test]
    fn chi2_monotone_on_grid() {
        for dof in [1usize, 2, 10, 100] {
            let mut prev = 0.0;
            for k in 0..100 {
                let p = 0.01 + (P_MAX - 0.01) * k as f64 / 99.0;
                let q = chi2_quantile(dof, p);
                assert!(q > prev, "dof {dof} p {p}");
                prev = q;
            }
        }
        for p in [0.1, 0.9, P_MAX] {
            assert!(chi2_quantile(5, p) < chi2_quantile(6, p));
        }
    }

    #[test]
    fn novelty_threshold_beta() {
        assert_eq!(novelty_threshold(4, 0.0), f64::INFINITY);
        let smallest = f64::from_bits(1);
        let t = novelty_threshold(7, smallest);
        assert!(t.is_finite() && t > 50.0);
        assert!((novelty_threshold(1, 0.05) - 3.841_458_820_694_124).abs() < 1e-9);
    }

    #[test]
    fn log_sum_exp_cases() {
        assert_eq!(log_sum_exp(&[0.0]), 0.0);
        assert!((log_sum_exp(&[2.5, 2.5]) - (2.5 + 2f64.ln())).abs() < 1e-15);
        // -1000 + ln(1 + e^-1), reference from 40-digit evaluation
        let want = -1000.0 + 0.313_261_687_518_222_8;
        assert!((log_sum_exp(&[-1000.0, -1001.0]) - want).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, -3.0]), -3.0);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        // ln(49!) for Gamma(50)
        let ln_fact: f64 = (1..50).map(|k| (k as f64).ln()).sum();
        assert!(rel_err(ln_gamma(50.0), ln_fact) < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lse_shift_invariant(v in prop::collection::vec(-50.0f64..50.0, 1..12), k in -100.0f64..100.0) {
                let shifted: Vec<f64> = v.iter().map(|x| x + k).collect();
                prop_assert!((log_sum_exp(&shifted) - (log_sum_exp(&v) + k)).abs() < 1e-12);
            }

            #[test]
            fn sm_and_det_roundtrip(seed in any::<u64>(), dim in 1usize..=8, c in -0.2f64..1.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_spd(&mut rng, dim);
                let u = random_vector(&mut rng, dim) * 0.5;
                let ainv = a.clone().try_inverse().unwrap();
                let updated = &a + c * &u * u.transpose();
                if let Ok(inv) = sm_rank_one(&ainv, &u, c) {
                    let eye = &updated * &inv;
                    prop_assert!((eye - SymMatrix::identity(dim, dim)).abs().max() < 1e-7);
                    let det = det_rank_one(a.determinant(), &ainv, &u, c);
                    prop_assert!((det * inv.determinant() - 1.0).abs() < 1e-7);
                }
            }
        }
    }
}

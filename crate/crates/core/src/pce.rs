//! Per-component Hermite chaos expansions `xi_l = sum_n c_{n,l} He_n(eta_l)`.
//!
//! Coefficients come from projecting the map `eta -> F^{-1}(Phi(eta))` onto
//! probabilists' Hermite polynomials, with `F` the Gaussian-KDE-smoothed
//! empirical CDF of each training coordinate.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::par;
use crate::textio::{self, data_lines, fields, header_value, missing_header, parse_f64, parse_usize};

pub const DEFAULT_ORDER: usize = 10;
pub const DEFAULT_QUADRATURE: usize = 64;

/// Probabilists' Hermite polynomials `He_0..=He_n` at `x`.
pub fn hermite_all(n: usize, x: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(n + 1);
    h.push(1.0);
    if n >= 1 {
        h.push(x);
    }
    for k in 1..n {
        h.push(x * h[k] - k as f64 * h[k - 1]);
    }
    h
}

pub fn hermite(n: usize, x: f64) -> f64 {
    hermite_all(n, x)[n]
}

/// Orthonormal Hermite values `He_k / sqrt(k!)` for `k < n`, and `p_n`.
fn orthonormal(n: usize, x: f64) -> (Vec<f64>, f64) {
    let mut p = Vec::with_capacity(n + 1);
    p.push(1.0);
    if n >= 1 {
        p.push(x);
    }
    for k in 1..n {
        let next = (x * p[k] - (k as f64).sqrt() * p[k - 1]) / ((k + 1) as f64).sqrt();
        p.push(next);
    }
    let last = p.pop().unwrap_or(1.0);
    (p, last)
}

/// `q`-point Gauss rule for the standard normal density: nodes ascending,
/// weights summing to one.
pub fn gauss_hermite(q: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if q == 0 {
        return Err(Error::invalid("quadrature needs at least one point"));
    }
    let jac = DMatrix::from_fn(q, q, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let weights = nodes
        .iter_mut()
        .map(|x| {
            // polish on p_q, whose derivative is sqrt(q) p_{q-1}
            for _ in 0..3 {
                let (p, pq) = orthonormal(q, *x);
                let dp = (q as f64).sqrt() * p[q - 1];
                if dp != 0.0 {
                    *x -= pq / dp;
                }
            }
            // Christoffel weight
            let (p, _) = orthonormal(q, *x);
            1.0 / p.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    Ok((nodes, weights))
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Silverman's rule `1.06 sigma M^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::invalid(format!("bandwidth needs at least 2 samples, got {m}")));
    }
    let mean = samples.iter().sum::<f64>() / m as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    let h = 1.06 * var.sqrt() * (m as f64).powf(-0.2);
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Degenerate("samples have zero spread".into()));
    }
    Ok(h)
}

/// Solves `Fbar(x) = p` where `Fbar` is the smoothed CDF (`upper = false`)
/// or survival function (`upper = true`). Working in the nearer tail keeps
/// full relative precision for `p` close to 0 or 1.
fn kde_quantile(samples: &[f64], h: f64, p: f64, upper: bool) -> f64 {
    let mf = samples.len() as f64;
    let tail = |x: f64| -> f64 {
        let s: f64 = samples
            .iter()
            .map(|&s| {
                let z = (x - s) / h;
                if upper {
                    std_normal_cdf(-z)
                } else {
                    std_normal_cdf(z)
                }
            })
            .sum();
        s / mf
    };
    let lo_s = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_s = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // tail(x) is decreasing in x for the survival side; flip so `f` increases
    let f = |x: f64| if upper { -tail(x) } else { tail(x) };
    let target = if upper { -p } else { p };
    let (mut a, mut b) = (lo_s - h, hi_s + h);
    let mut step = h;
    while f(a) > target {
        step *= 2.0;
        a -= step;
    }
    step = h;
    while f(b) < target {
        step *= 2.0;
        b += step;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if (fm - target).abs() <= 1e-12 * p {
            return mid;
        }
        if fm < target {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Inverse of `F(x) = (1/M) sum Phi((x - s_l) / h)`.
pub fn empirical_icdf(samples: &[f64], h: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability must lie in (0, 1), got {p}")));
    }
    if samples.len() < 2 {
        return Err(Error::invalid("inverse CDF needs at least 2 samples"));
    }
    if !(h > 0.0 && h.is_finite()) || !samples.iter().all(|s| s.is_finite()) {
        return Err(Error::invalid("bandwidth and samples must be finite, bandwidth positive"));
    }
    Ok(if p <= 0.5 {
        kde_quantile(samples, h, p, false)
    } else {
        kde_quantile(samples, h, 1.0 - p, true)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PceModel {
    pub order: usize,
    /// `r x (P + 1)`; row `l` holds `c_{0,l}..c_{P,l}`.
    pub coeffs: DMatrix<f64>,
    pub bandwidths: Vec<f64>,
    /// Training values per component (`M x r`); empty after loading from disk.
    pub samples: DMatrix<f64>,
}

/// Fits one expansion per column of `xi_d` (`M x r`).
pub fn fit_pce(xi_d: &DMatrix<f64>, order: usize, quadrature: usize) -> Result<PceModel> {
    if order < 1 {
        return Err(Error::invalid("expansion order must be at least 1"));
    }
    if quadrature < 2 * order + 1 {
        return Err(Error::invalid(format!(
            "{quadrature} quadrature points under-resolve order {order}; need at least {}",
            2 * order + 1
        )));
    }
    let (nodes, weights) = gauss_hermite(quadrature)?;
    let r = xi_d.ncols();
    let columns: Vec<Vec<f64>> = (0..r).map(|l| xi_d.column(l).iter().copied().collect()).collect();
    let fitted = par::map_slice(&columns, |samples| -> Result<(f64, Vec<f64>)> {
        let h = silverman_bandwidth(samples)?;
        let mut c = vec![0.0; order + 1];
        for (&eta, &w) in nodes.iter().zip(&weights) {
            let x = if eta <= 0.0 {
                kde_quantile(samples, h, std_normal_cdf(eta), false)
            } else {
                kde_quantile(samples, h, std_normal_cdf(-eta), true)
            };
            for (n, he) in hermite_all(order, eta).into_iter().enumerate() {
                c[n] += w * x * he;
            }
        }
        let mut fact = 1.0;
        for (n, cn) in c.iter_mut().enumerate() {
            if n > 0 {
                fact *= n as f64;
            }
            *cn /= fact;
        }
        Ok((h, c))
    });
    let mut coeffs = DMatrix::zeros(r, order + 1);
    let mut bandwidths = Vec::with_capacity(r);
    for (l, res) in fitted.into_iter().enumerate() {
        let (h, c) = res?;
        bandwidths.push(h);
        for (n, v) in c.into_iter().enumerate() {
            coeffs[(l, n)] = v;
        }
    }
    Ok(PceModel {
        order,
        coeffs,
        bandwidths,
        samples: xi_d.clone(),
    })
}

impl PceModel {
    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    fn check(&self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "eta",
                expected: self.dim(),
                got: eta.len(),
            });
        }
        Ok(())
    }

    /// Components `l` whose map is decreasing somewhere on `[lo, hi]`,
    /// checked on a uniform grid of `n` points.
    pub fn monotonicity_violations(&self, lo: f64, hi: f64, n: usize) -> Vec<usize> {
        (0..self.dim())
            .filter(|&l| {
                (0..n).any(|k| {
                    let eta = lo + (hi - lo) * k as f64 / (n - 1).max(1) as f64;
                    component_derivative(self, l, eta) < 0.0
                })
            })
            .collect()
    }
}

fn component_value(model: &PceModel, l: usize, eta: f64) -> f64 {
    hermite_all(model.order, eta)
        .iter()
        .enumerate()
        .map(|(n, he)| model.coeffs[(l, n)] * he)
        .sum()
}

fn component_derivative(model: &PceModel, l: usize, eta: f64) -> f64 {
    let he = hermite_all(model.order, eta);
    (1..=model.order)
        .map(|n| model.coeffs[(l, n)] * n as f64 * he[n - 1])
        .sum()
}

pub fn eval_pce(model: &PceModel, eta: &[f64]) -> Result<Vec<f64>> {
    model.check(eta)?;
    Ok(eta.iter().enumerate().map(|(l, &e)| component_value(model, l, e)).collect())
}

/// Diagonal of `d xi / d eta`.
pub fn pce_derivative(model: &PceModel, eta: &[f64]) -> Result<Vec<f64>> {
    model.check(eta)?;
    Ok(eta.iter().enumerate().map(|(l, &e)| component_derivative(model, l, e)).collect())
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

const WHAT: &str = "pce model";

/// Rows `c <component> <n> <coefficient>` and `h <component> <bandwidth>`.
pub fn format_pce(model: &PceModel) -> String {
    let mut s = format!("# pce model\n# order: {}\n# components: {}\n", model.order, model.dim());
    for l in 0..model.dim() {
        let _ = writeln!(s, "h {l} {:?}", model.bandwidths[l]);
        for n in 0..=model.order {
            let _ = writeln!(s, "c {l} {n} {:?}", model.coeffs[(l, n)]);
        }
    }
    s
}

pub fn parse_pce(text: &str) -> Result<PceModel> {
    let order = parse_usize(WHAT, 0, header_value(text, "order").ok_or_else(|| missing_header(WHAT, "order"))?)?;
    let r = parse_usize(
        WHAT,
        0,
        header_value(text, "components").ok_or_else(|| missing_header(WHAT, "components"))?,
    )?;
    let mut coeffs = DMatrix::from_element(r, order + 1, f64::NAN);
    let mut bandwidths = vec![f64::NAN; r];
    for (line, l) in data_lines(text) {
        let bad = |msg: String| Error::Parse { what: WHAT, line, msg };
        match l.split_whitespace().next() {
            Some("h") => {
                let t = fields(WHAT, line, l, 3)?;
                let comp = parse_usize(WHAT, line, t[1])?;
                *bandwidths.get_mut(comp).ok_or_else(|| bad(format!("component {comp} out of range")))? =
                    parse_f64(WHAT, line, t[2])?;
            }
            Some("c") => {
                let t = fields(WHAT, line, l, 4)?;
                let comp = parse_usize(WHAT, line, t[1])?;
                let n = parse_usize(WHAT, line, t[2])?;
                if comp >= r || n > order {
                    return Err(bad(format!("entry ({comp}, {n}) out of range")));
                }
                coeffs[(comp, n)] = parse_f64(WHAT, line, t[3])?;
            }
            _ => return Err(bad(format!("unrecognized row {l:?}"))),
        }
    }
    if coeffs.iter().chain(&bandwidths).any(|v| v.is_nan()) {
        return Err(Error::Parse {
            what: WHAT,
            line: 0,
            msg: "missing coefficient or bandwidth rows".into(),
        });
    }
    Ok(PceModel {
        order,
        coeffs,
        bandwidths,
        samples: DMatrix::zeros(0, r),
    })
}

pub fn write_pce(path: &Path, model: &PceModel) -> Result<()> {
    textio::write_file(path, &format_pce(model))
}

pub fn read_pce(path: &Path) -> Result<PceModel> {
    parse_pce(&textio::read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_samples(m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn hermite_low_orders() {
        let x = 1.7;
        let h = hermite_all(4, x);
        let expected = [1.0, x, x * x - 1.0, x.powi(3) - 3.0 * x, x.powi(4) - 6.0 * x * x + 3.0];
        for (a, b) in h.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn small_rules_are_exact() {
        let (x, w) = gauss_hermite(2).unwrap();
        assert!((x[0] + 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        assert!((w[0] - 0.5).abs() < 1e-14 && (w[1] - 0.5).abs() < 1e-14);
        let (x, w) = gauss_hermite(3).unwrap();
        let s3 = 3f64.sqrt();
        assert!((x[0] + s3).abs() < 1e-14 && x[1].abs() < 1e-14);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-14 && (w[0] - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn quadrature_reproduces_orthogonality() {
        for (p, q) in [(10, 21), (10, 64), (5, 11)] {
            let (x, w) = gauss_hermite(q).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            for n in 0..=p {
                for m in 0..=p {
                    let s: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * hermite(n, xi) * hermite(m, xi)).sum();
                    let expected = if n == m { factorial(n) } else { 0.0 };
                    let scale = (factorial(n) * factorial(m)).sqrt();
                    assert!((s - expected).abs() <= 1e-10 * scale, "q={q} <{n},{m}> = {s}");
                }
            }
        }
    }

    #[test]
    fn normal_moments_from_large_rule() {
        let (x, w) = gauss_hermite(64).unwrap();
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        let m10: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((m4 - 3.0).abs() < 1e-12);
        assert!((m10 - 945.0).abs() < 1e-9);
    }

    #[test]
    fn icdf_examples() {
        let s = normal_samples(2001, 1);
        let h = silverman_bandwidth(&s).unwrap();
        let mut sorted = s.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[1000];
        assert!((empirical_icdf(&s, h, 0.5).unwrap() - median).abs() < 0.05);

        let two = [0.0, 1.0];
        assert!(empirical_icdf(&two, 1e-6, 0.3).unwrap().abs() < 1e-4);
        assert!((empirical_icdf(&two, 1e-6, 0.7).unwrap() - 1.0).abs() < 1e-4);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..1.0)).collect();
        let hu = silverman_bandwidth(&u).unwrap();
        assert!((empirical_icdf(&u, hu, 0.25).unwrap() - 0.25).abs() < 0.02);

        for p in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(empirical_icdf(&s, h, p).is_err());
        }
    }

    #[test]
    fn icdf_inverts_smoothed_cdf_in_both_tails() {
        let s = normal_samples(200, 4);
        let h = silverman_bandwidth(&s).unwrap();
        let cdf = |x: f64| s.iter().map(|&v| std_normal_cdf((x - v) / h)).sum::<f64>() / s.len() as f64;
        for p in [1e-12, 1e-6, 0.01, 0.3, 0.5, 0.8] {
            let x = empirical_icdf(&s, h, p).unwrap();
            assert!((cdf(x) - p).abs() <= 1e-10 * p.max(1e-3), "p={p}");
        }
        let x = empirical_icdf(&s, h, 1.0 - 1e-9).unwrap();
        let surv = s.iter().map(|&v| std_normal_cdf(-(x - v) / h)).sum::<f64>() / s.len() as f64;
        assert!((surv - 1e-9).abs() <= 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn icdf_strictly_increasing(p in 0.001f64..0.998, dp in 1e-4f64..1e-3) {
            let s = normal_samples(100, 9);
            let h = silverman_bandwidth(&s).unwrap();
            prop_assert!(empirical_icdf(&s, h, p).unwrap() < empirical_icdf(&s, h, p + dp).unwrap());
        }

        #[test]
        fn derivative_matches_differences(eta in proptest::collection::vec(-3.0f64..3.0, 3)) {
            let model = random_model(3, 6, 5);
            let d = pce_derivative(&model, &eta).unwrap();
            let h = 1e-5;
            for l in 0..3 {
                let mut ep = eta.clone();
                let mut em = eta.clone();
                ep[l] += h;
                em[l] -= h;
                let fd = (eval_pce(&model, &ep).unwrap()[l] - eval_pce(&model, &em).unwrap()[l]) / (2.0 * h);
                prop_assert!((d[l] - fd).abs() <= 1e-6 * fd.abs().max(1e-3));
            }
        }
    }

    fn random_model(r: usize, order: usize, seed: u64) -> PceModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PceModel {
            order,
            coeffs: DMatrix::from_fn(r, order + 1, |_, n| rng.random_range(-1.0..1.0) / factorial(n)),
            bandwidths: vec![0.1; r],
            samples: DMatrix::zeros(0, r),
        }
    }

    #[test]
    fn gaussian_samples_give_identity_map() {
        let xi = DMatrix::from_vec(4000, 1, normal_samples(4000, 7));
        let model = fit_pce(&xi, 10, 64).unwrap();
        // KDE smoothing inflates the variance by h^2, so c_1 ~ sqrt(1 + h^2)
        assert!((model.coeffs[(0, 1)] - 1.0).abs() < 0.05, "{}", model.coeffs);
        for n in (0..=10).filter(|&n| n != 1) {
            assert!(model.coeffs[(0, n)].abs() <= 0.05, "c_{n} = {}", model.coeffs[(0, n)]);
        }
    }

    #[test]
    fn affine_samples_recover_affine_map() {
        let s: Vec<f64> = normal_samples(20_000, 8).into_iter().map(|e| 2.0 * e + 3.0).collect();
        let model = fit_pce(&DMatrix::from_vec(s.len(), 1, s), 6, 32).unwrap();
        assert!((model.coeffs[(0, 0)] - 3.0).abs() < 0.05);
        assert!((model.coeffs[(0, 1)] - 2.0).abs() < 0.05);
        for n in 2..=6 {
            assert!(model.coeffs[(0, n)].abs() < 0.02);
        }
    }

    #[test]
    fn coefficients_track_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // skewed, heavy right tail
        let s: Vec<f64> = (0..1000)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (0.6 * z).exp() + 0.3 * z
            })
            .collect();
        let m = s.len() as f64;
        let mean = s.iter().sum::<f64>() / m;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let xi = DMatrix::from_vec(s.len(), 1, s);
        let model = fit_pce(&xi, 10, 64).unwrap();
        // the smoothed map has the sample mean; quadrature error shrinks with Q
        let e64 = (model.coeffs[(0, 0)] - mean).abs();
        let e256 = (fit_pce(&xi, 10, 256).unwrap().coeffs[(0, 0)] - mean).abs();
        assert!(e64 <= 1e-3 * var.sqrt(), "{e64}");
        assert!(e256 < e64, "{e256} vs {e64}");
        let pvar: f64 = (1..=10).map(|n| model.coeffs[(0, n)].powi(2) * factorial(n)).sum();
        assert!((pvar - var).abs() <= 0.1 * var);
    }

    #[test]
    fn eval_examples() {
        let model = random_model(2, 5, 1);
        let at0 = eval_pce(&model, &[0.0, 0.0]).unwrap();
        for l in 0..2 {
            let c = |n| model.coeffs[(l, n)];
            assert!((at0[l] - (c(0) - c(2) + 3.0 * c(4))).abs() < 1e-14);
        }
        let affine = PceModel { order: 1, coeffs: DMatrix::from_row_slice(1, 2, &[0.5, 2.0]), bandwidths: vec![1.0], samples: DMatrix::zeros(0, 1) };
        assert_eq!(eval_pce(&affine, &[1.5]).unwrap(), vec![3.5]);
        assert_eq!(pce_derivative(&affine, &[-4.0]).unwrap(), vec![2.0]);
        assert!(eval_pce(&model, &[0.0]).is_err());
        let d = pce_derivative(&model, &[5.0, -5.0]).unwrap();
        assert!(d.iter().all(|v| v.is_finite()));
        let he = hermite_all(4, 5.0);
        let direct: f64 = (1..=5).map(|n| model.coeffs[(0, n)] * n as f64 * he[n - 1]).sum();
        assert!((d[0] - direct).abs() <= 1e-12 * direct.abs());
    }

    #[test]
    fn fit_rejects_bad_settings() {
        let xi = DMatrix::from_vec(10, 1, normal_samples(10, 2));
        assert!(fit_pce(&xi, 10, 20).is_err());
        assert!(fit_pce(&xi, 0, 20).is_err());
        assert!(fit_pce(&DMatrix::from_element(10, 1, 1.0), 2, 5).is_err());
    }

    #[test]
    fn ks_statistic_examples() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[5.0, 6.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0, 5.0, 6.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn text_round_trip() {
        let model = random_model(3, 4, 2);
        let back = parse_pce(&format_pce(&model)).unwrap();
        assert_eq!(back.coeffs, model.coeffs);
        assert_eq!(back.bandwidths, model.bandwidths);
        let text = format_pce(&model);
        let cut: String = text.lines().filter(|l| !l.starts_with("c 1 2")).collect::<Vec<_>>().join("\n");
        assert!(parse_pce(&cut).is_err());
    }
}

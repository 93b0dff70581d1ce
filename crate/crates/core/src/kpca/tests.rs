use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::mesh_fem::build_structured_mesh;
use crate::prior_gen::{generate_snapshots, ChannelSpec};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// All multi-indices of length `n` summing to `d`.
fn multi_indices(n: usize, d: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![d]];
    }
    (0..=d)
        .flat_map(|first| {
            multi_indices(n - 1, d - first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Explicit feature vector with `phi(x) . phi(y) = c + (x . y)^d`.
fn explicit_features(x: &[f64], d: u32, c: f64) -> Vec<f64> {
    let mut f = vec![c.sqrt()];
    for alpha in multi_indices(x.len(), d) {
        let coef = factorial(d) / alpha.iter().map(|&a| factorial(a)).product::<f64>();
        let mono: f64 = x.iter().zip(&alpha).map(|(v, &a)| v.powi(a as i32)).product();
        f.push(coef.sqrt() * mono);
    }
    f
}

struct FeaturePca {
    features: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<nalgebra::DVector<f64>>,
}

fn feature_pca(y: &DMatrix<f64>, d: u32, c: f64) -> FeaturePca {
    let m = y.ncols();
    let cols: Vec<Vec<f64>> = (0..m)
        .map(|l| explicit_features(y.column(l).as_slice(), d, c))
        .collect();
    let nf = cols[0].len();
    let features = DMatrix::from_fn(nf, m, |i, l| cols[l][i]);
    let mean = features.column_mean();
    let mut centered = features.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = &centered * centered.transpose() / m as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..nf).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    FeaturePca {
        features,
        eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
        eigenvectors: order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect(),
    }
}

fn channel_ensemble(n: usize, m: usize) -> DMatrix<f64> {
    let mesh = build_structured_mesh(n, n, 1.0, 1.0).unwrap();
    generate_snapshots(&mesh, &ChannelSpec::default(), m).unwrap().values
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    d / b.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn explicit_features_reproduce_kernel() {
    let x = [0.3, -1.2, 0.7];
    let y = [1.1, 0.4, -0.5];
    for d in 1..=3 {
        let k = Kernel::Polynomial { degree: d, c: 0.7 };
        let fx = explicit_features(&x, d, 0.7);
        let fy = explicit_features(&y, d, 0.7);
        let via_features: f64 = fx.iter().zip(&fy).map(|(a, b)| a * b).sum();
        assert!((via_features - kernel_eval(&k, &x, &y).unwrap()).abs() < 1e-12);
        // feature dimension (N_R + d - 1)! / (d! (N_R - 1)!) plus the offset slot
        let nf = factorial(3 + d - 1) / (factorial(d) * factorial(2));
        assert_eq!(fx.len(), nf as usize + 1);
    }
}

#[test]
fn kernel_trick_matches_explicit_feature_pca() {
    for (nr, m, d, seed) in [(2, 3, 2, 1), (3, 10, 3, 2), (2, 8, 3, 3), (3, 6, 1, 4)] {
        let y = random_matrix(nr, m, seed);
        let c = 0.5;
        let model = fit_matrix(&y, Kernel::Polynomial { degree: d, c }, Retain::Energy(0.999_999)).unwrap();
        let oracle = feature_pca(&y, d, c);
        let top = oracle.eigenvalues[0];
        for (k, &l) in model.lambda_f.iter().enumerate() {
            assert!((l - oracle.eigenvalues[k]).abs() <= 1e-8 * top, "{nr} {m} {d}: {l} vs {}", oracle.eigenvalues[k]);
        }
        // every explicit eigenvalue above the clip threshold is accounted for
        let positive = oracle.eigenvalues.iter().filter(|&&l| l > 1e-10 * top).count();
        assert_eq!(model.lambda_f.len(), positive);

        let mean = oracle.features.column_mean();
        for k in 0..model.r {
            let e = &oracle.eigenvectors[k];
            let direct: Vec<f64> = (0..m)
                .map(|l| e.dot(&(oracle.features.column(l) - &mean)) / oracle.eigenvalues[k].sqrt())
                .collect();
            let ours: Vec<f64> = model.xi_d.column(k).iter().copied().collect();
            let sign = if direct.iter().zip(&ours).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            for l in 0..m {
                assert!((sign * ours[l] - direct[l]).abs() <= 1e-8, "component {k} snapshot {l}");
            }
        }

        // with every positive component kept, the expansion recovers each image
        let full = fit_matrix(&y, Kernel::Polynomial { degree: d, c }, Retain::Count(model.lambda_f.len())).unwrap();
        for l in 0..m {
            let beta = feature_weights(&full, &full.training_xi(l)).unwrap();
            let point = &oracle.features * nalgebra::DVector::from_vec(beta);
            let target = oracle.features.column(l);
            assert!((point - target).amax() <= 1e-8 * target.amax().max(1.0));
        }
    }
}

#[test]
fn linear_kernel_is_classical_pca() {
    let (nr, m) = (6, 9);
    let y = random_matrix(nr, m, 11);
    let model = fit_matrix(&y, Kernel::linear(), Retain::Count(5)).unwrap();
    let mean = y.column_mean();
    let mut yt = y.clone();
    for mut c in yt.column_iter_mut() {
        c -= &mean;
    }
    // spectrum of the node-space covariance
    let cov = SymmetricEigen::new(&yt * yt.transpose() / m as f64);
    let mut ev: Vec<f64> = cov.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    for (k, &l) in model.lambda_f.iter().enumerate() {
        assert!((l - ev[k]).abs() <= 1e-10 * ev[0]);
    }
    // scores normalized to unit variance via the SVD of the centered data
    let svd = yt.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    for k in 0..model.r {
        let w = vt.row(order[k]);
        for l in 0..m {
            let expected = (m as f64).sqrt() * w[l];
            assert!((model.xi_d[(l, k)].abs() - expected.abs()).abs() <= 1e-8);
        }
    }
    for k in 0..model.r {
        let var = model.xi_d.column(k).norm_squared() / m as f64;
        assert!((var - 1.0).abs() < 1e-12);
    }
}

#[test]
fn centering_matches_matrix_form_and_is_idempotent() {
    let y = random_matrix(4, 7, 5);
    let k = gram_matrix(&Kernel::Polynomial { degree: 2, c: 1.0 }, &y);
    let one = DMatrix::from_element(7, 7, 1.0 / 7.0);
    let explicit = &k - &k * &one - &one * &k + &one * &k * &one;
    let kc = center_gram(&k);
    assert!((&kc - explicit).amax() <= 1e-12 * k.amax());
    assert!((center_gram(&kc) - &kc).amax() <= 1e-12 * k.amax());
}

#[test]
fn offset_does_not_change_the_fit() {
    let y = random_matrix(3, 8, 9);
    let a = fit_matrix(&y, Kernel::Polynomial { degree: 3, c: 0.0 }, Retain::Count(4)).unwrap();
    let b = fit_matrix(&y, Kernel::Polynomial { degree: 3, c: 2.0 }, Retain::Count(4)).unwrap();
    for (x, y) in a.lambda_f.iter().zip(&b.lambda_f) {
        assert!((x - y).abs() <= 1e-10 * a.lambda_f[0]);
    }
}

#[test]
fn duplicate_snapshots_share_coordinates() {
    let mut y = random_matrix(5, 8, 21);
    let c2 = y.column(2).into_owned();
    y.set_column(6, &c2);
    let model = fit_matrix(&y, Kernel::polynomial(3), Retain::Count(4)).unwrap();
    for k in 0..4 {
        assert!((model.xi_d[(2, k)] - model.xi_d[(6, k)]).abs() <= 1e-8);
    }
}

#[test]
fn eigenvalues_descend_and_energy_rule() {
    let y = channel_ensemble(8, 40);
    let model = fit_matrix(&y, Kernel::polynomial(3), Retain::Energy(0.75)).unwrap();
    assert!(model.lambda_f.windows(2).all(|w| w[0] >= w[1]));
    assert!(model.lambda_f.iter().all(|&l| l > 0.0));
    let total: f64 = model.lambda_f.iter().sum();
    let head: f64 = model.lambda_f[..model.r].iter().sum();
    let shorter: f64 = model.lambda_f[..model.r - 1].iter().sum();
    assert!(head >= 0.75 * total && shorter < 0.75 * total);
    assert_eq!(model.xi_d.shape(), (40, model.r));
}

#[test]
fn fit_rejects_bad_input() {
    let y = random_matrix(3, 5, 1);
    assert!(fit_matrix(&y.columns(0, 1).into_owned(), Kernel::linear(), Retain::Count(1)).is_err());
    assert!(fit_matrix(&y, Kernel::linear(), Retain::Count(0)).is_err());
    assert!(fit_matrix(&y, Kernel::linear(), Retain::Count(6)).is_err());
    assert!(fit_matrix(&y, Kernel::linear(), Retain::Energy(1.0)).is_err());
    assert!(fit_matrix(&y, Kernel::polynomial(7), Retain::Count(1)).is_err());
    // rank 3 data cannot supply 4 components
    assert!(fit_matrix(&y, Kernel::linear(), Retain::Count(4)).is_err());
    let same = DMatrix::from_element(3, 5, 0.4);
    assert!(matches!(
        fit_matrix(&same, Kernel::polynomial(2), Retain::Count(1)),
        Err(crate::Error::Degenerate(_))
    ));
}

#[test]
fn linear_preimage_is_exact_reconstruction() {
    let y = random_matrix(5, 9, 3);
    let model = fit_matrix(&y, Kernel::linear(), Retain::Count(5)).unwrap();
    for l in 0..9 {
        let p = preimage(&model, &model.training_xi(l), PreimageInit::Nearest, &Default::default()).unwrap();
        assert_eq!(p.iterations, 0);
        assert!(rel(&p.y, model.snapshot(l)) <= 1e-12);
    }
}

#[test]
fn linear_jacobian_is_reconstruction_matrix() {
    let y = random_matrix(5, 9, 4);
    let model = fit_matrix(&y, Kernel::linear(), Retain::Count(3)).unwrap();
    let mean = y.column_mean();
    let mut yt = y.clone();
    for mut c in yt.column_iter_mut() {
        c -= &mean;
    }
    let expected = &yt * &model.v / 3.0;
    for xi in [vec![0.0; 3], vec![1.0, -2.0, 0.5]] {
        let p = preimage(&model, &xi, PreimageInit::Nearest, &Default::default()).unwrap();
        let j = preimage_jacobian(&model, &xi, &p.y).unwrap();
        assert!((j - &expected).amax() <= 1e-12 * expected.amax());
    }
}

fn poly_model(d: u32, r: usize) -> KpcaModel {
    fit_matrix(&channel_ensemble(8, 40), Kernel::polynomial(d), Retain::Count(r)).unwrap()
}

#[test]
fn polynomial_preimage_of_training_points() {
    let y = channel_ensemble(8, 40);
    // every positive component kept: the feature point is the exact image
    let full = fit_matrix(&y, Kernel::polynomial(5), Retain::Energy(0.999_999_999)).unwrap();
    let reduced = fit_matrix(&y, Kernel::polynomial(5), Retain::Energy(0.75)).unwrap();
    let mut mean = 0.0;
    for l in 0..40 {
        let p = preimage(&full, &full.training_xi(l), PreimageInit::Nearest, &Default::default()).unwrap();
        assert!(rel(&p.y, full.snapshot(l)) <= 1e-8);
        let p = preimage(&reduced, &reduced.training_xi(l), PreimageInit::Nearest, &Default::default()).unwrap();
        mean += rel(&p.y, reduced.snapshot(l)) / 40.0;
    }
    assert!(mean < 0.15, "mean relative error {mean}");
}

#[test]
fn reconstruction_errors_match_direct_preimages() {
    let model = poly_model(3, 6);
    let opts = PreimageOptions::default();
    let idx = [0, 7, 39];
    let errs = training_reconstruction_errors(&model, &idx, &opts).unwrap();
    for (&l, e) in idx.iter().zip(&errs) {
        let p = preimage(&model, &model.training_xi(l), PreimageInit::Nearest, &opts).unwrap();
        assert_eq!(*e, rel(&p.y, model.snapshot(l)));
    }
    let y = channel_ensemble(8, 40);
    let full_linear = fit_matrix(&y, Kernel::linear(), Retain::Energy(0.999_999_999)).unwrap();
    let errs = training_reconstruction_errors(&full_linear, &[0, 1, 2], &opts).unwrap();
    assert!(errs.iter().all(|e| *e < 1e-10), "{errs:?}");
    assert!(training_reconstruction_errors(&model, &[40], &opts).is_err());
}

#[test]
fn preimage_is_a_fixed_point_and_start_independent() {
    let model = poly_model(5, 6);
    let xi = [0.4, -0.3, 0.2, 0.1, -0.5, 0.3];
    let opts = PreimageOptions { tol: 1e-13, ..Default::default() };
    let a = preimage(&model, &xi, PreimageInit::Nearest, &opts).unwrap();
    let other = model.snapshot(17).to_vec();
    let b = preimage(&model, &xi, PreimageInit::Given(&other), &opts).unwrap();
    assert!(rel(&a.y, &b.y) * nalgebra::DVector::from_column_slice(&a.y).norm() <= 1e-6);
    assert_eq!(a.restarts, 0);
}

#[test]
fn preimage_rejects_wrong_lengths() {
    let model = poly_model(2, 3);
    assert!(preimage(&model, &[0.0; 2], PreimageInit::Nearest, &Default::default()).is_err());
    assert!(preimage(&model, &[0.0; 3], PreimageInit::Given(&[1.0; 4]), &Default::default()).is_err());
}

#[test]
fn failed_iterations_exhaust_restarts() {
    let model = poly_model(5, 6);
    let opts = PreimageOptions { max_iter: 1, tol: 0.0, max_restarts: 2 };
    match preimage(&model, &[0.3; 6], PreimageInit::Nearest, &opts) {
        Err(crate::Error::PreimageFailed { restarts, .. }) => assert_eq!(restarts, 2),
        other => panic!("{other:?}"),
    }
}

fn fd_jacobian_check(model: &KpcaModel, xi: &[f64]) {
    let opts = PreimageOptions { tol: 1e-14, max_iter: 5000, ..Default::default() };
    let y0 = preimage(model, xi, PreimageInit::Nearest, &opts).unwrap().y;
    let j = preimage_jacobian(model, xi, &y0).unwrap();
    let h = 1e-5;
    for k in 0..xi.len() {
        let mut xp = xi.to_vec();
        let mut xm = xi.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let yp = preimage(model, &xp, PreimageInit::Given(&y0), &opts).unwrap().y;
        let ym = preimage(model, &xm, PreimageInit::Given(&y0), &opts).unwrap().y;
        let fd: Vec<f64> = yp.iter().zip(&ym).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let col: Vec<f64> = j.column(k).iter().copied().collect();
        let e = rel(&col, &fd);
        assert!(e <= 1e-4, "column {k}: relative error {e}");
    }
}

#[test]
fn polynomial_jacobian_matches_finite_differences() {
    let model = poly_model(5, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..3 {
        let xi: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        fd_jacobian_check(&model, &xi);
    }
}

#[test]
fn gaussian_jacobian_matches_finite_differences() {
    let y = channel_ensemble(8, 40);
    let model = fit_matrix(&y, Kernel::Gaussian { sigma: 400.0 }, Retain::Count(4)).unwrap();
    fd_jacobian_check(&model, &[0.2, -0.4, 0.1, 0.3]);
}

#[test]
fn jacobian_has_full_column_rank() {
    let model = poly_model(5, 8);
    let xi = vec![0.1; 8];
    let p = preimage(&model, &xi, PreimageInit::Nearest, &Default::default()).unwrap();
    let j = preimage_jacobian(&model, &xi, &p.y).unwrap();
    let s = j.singular_values();
    assert!(s.min() > 1e-8 * s.max(), "{s}");
}

#[test]
fn vjp_matches_dense_jacobian() {
    for kernel in [Kernel::polynomial(5), Kernel::polynomial(3), Kernel::Gaussian { sigma: 400.0 }, Kernel::linear()] {
        let model = fit_matrix(&channel_ensemble(8, 40), kernel, Retain::Count(6)).unwrap();
        let xi = [0.3, -0.2, 0.5, 0.0, -0.1, 0.2];
        let p = preimage(&model, &xi, PreimageInit::Nearest, &PreimageOptions { tol: 1e-13, ..Default::default() }).unwrap();
        let j = preimage_jacobian(&model, &xi, &p.y).unwrap();
        let g: Vec<f64> = (0..model.n_nodes()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let expected: Vec<f64> = j.tr_mul(&nalgebra::DVector::from_column_slice(&g)).iter().copied().collect();
        let got = preimage_vjp(&model, &xi, &p.y, &g).unwrap();
        assert!(rel(&got, &expected) <= 1e-9, "{kernel}: {got:?} vs {expected:?}");
    }
}

#[test]
fn projection_recovers_training_coordinates() {
    let model = poly_model(3, 6);
    for l in [0, 9, 33] {
        let xi = project(&model, model.snapshot(l)).unwrap();
        let expected = model.training_xi(l);
        for (a, b) in xi.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn archive_round_trip_is_bit_exact() {
    let model = poly_model(4, 5);
    let back = io::parse_model(&io::format_model(&model)).unwrap();
    assert_eq!(back, model);
    let g = fit_matrix(&random_matrix(3, 6, 2), Kernel::Gaussian { sigma: 0.7 }, Retain::Count(2)).unwrap();
    assert_eq!(io::parse_model(&io::format_model(&g)).unwrap(), g);
}

#[test]
fn archive_rejects_truncation() {
    let text = io::format_model(&poly_model(2, 3));
    let cut: String = text.lines().take(text.lines().count() - 2).collect::<Vec<_>>().join("\n");
    assert!(io::parse_model(&cut).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feature_weights_sum_to_one(xi in proptest::collection::vec(-3.0f64..3.0, 4)) {
        let model = fit_matrix(&random_matrix(4, 7, 13), Kernel::polynomial(2), Retain::Count(4)).unwrap();
        let beta = feature_weights(&model, &xi).unwrap();
        prop_assert!((beta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

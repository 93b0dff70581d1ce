use approx::assert_relative_eq;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use stochinv::kpca::{self, fit_matrix, preimage, Kernel, PreimageInit, PreimageOptions, Retain};
use stochinv::mcmc::{self, read_chain, InitEta, SamplerConfig, SamplerKind};
use stochinv::mesh_fem::io::{read_observations, write_observations};
use stochinv::mesh_fem::{build_structured_mesh, forward, LoadSpec, MaterialField, ObservationSet, Side};
use stochinv::pce::{fit_pce, read_pce, write_pce};
use stochinv::posterior::{boundary_observation_dofs, grad_log_posterior, log_posterior, PosteriorSpec};
use stochinv::prior_gen::{generate_snapshots, hold_out, read_snapshots, write_snapshots, ChannelSpec};
use tempfile::TempDir;

fn small_spec() -> PosteriorSpec {
    let mesh = build_structured_mesh(8, 8, 1.0, 1.0).unwrap();
    let set = generate_snapshots(&mesh, &ChannelSpec::default(), 41).unwrap();
    let (truth, train) = hold_out(&set, 0).unwrap();
    let kpca = kpca::fit(&train, Kernel::polynomial(3), Retain::Count(4)).unwrap();
    let pce = fit_pce(&kpca.xi_d, 6, 32).unwrap();
    let load = LoadSpec::self_weight(&mesh, 0.025);
    let dofs = boundary_observation_dofs(&mesh, &[Side::Top, Side::Left, Side::Right], &load);
    let u = forward(&mesh, &MaterialField::locked(truth), &load).unwrap().u;
    let obs = ObservationSet::from_field(&u, dofs).unwrap();
    let max_obs = obs.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    PosteriorSpec {
        kpca,
        pce,
        mesh,
        load,
        obs,
        noise_variance: (30.0 * max_obs).powi(2),
        likelihood_scale: 1000.0,
        preimage: PreimageOptions::default(),
    }
}

#[test]
fn persisted_inputs_reproduce_the_posterior() {
    let spec = small_spec();
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    kpca::io::write_model(&p.join("model.txt"), &spec.kpca).unwrap();
    write_pce(&p.join("pce.txt"), &spec.pce).unwrap();
    write_observations(&p.join("obs.txt"), &spec.obs).unwrap();

    let reread = PosteriorSpec {
        kpca: kpca::io::read_model(&p.join("model.txt")).unwrap(),
        pce: read_pce(&p.join("pce.txt")).unwrap(),
        obs: read_observations(&p.join("obs.txt")).unwrap(),
        ..spec.clone()
    };
    for eta in [[0.0; 4], [0.7, -1.2, 0.3, 1.9]] {
        let a = log_posterior(&spec, &eta, None).unwrap();
        let b = log_posterior(&reread, &eta, None).unwrap();
        assert_eq!(a.log_post, b.log_post);
        assert_eq!(grad_log_posterior(&spec, &a).unwrap(), grad_log_posterior(&reread, &b).unwrap());
    }
}

#[test]
fn snapshot_files_round_trip() {
    let mesh = build_structured_mesh(6, 5, 2.0, 1.0).unwrap();
    let spec = ChannelSpec::default();
    let set = generate_snapshots(&mesh, &spec, 7).unwrap();
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("snap.txt");
    write_snapshots(&path, &set, &spec).unwrap();
    assert_eq!(read_snapshots(&path).unwrap(), set);
}

#[test]
fn sampling_the_posterior_persists_every_step() {
    let spec = small_spec();
    let cfgs: Vec<SamplerConfig> = [SamplerKind::Langevin, SamplerKind::RandomWalk]
        .into_iter()
        .enumerate()
        .map(|(i, kind)| SamplerConfig {
            kind,
            n_samples: 60,
            seed: 9,
            stream: i as u64,
            init: InitEta::Fill(0.0),
            ..Default::default()
        })
        .collect();
    let dir = TempDir::new().unwrap();
    let records = mcmc::run_chains_to_dir(&spec, &cfgs, dir.path());
    for (i, rec) in records.into_iter().enumerate() {
        let rec = rec.unwrap();
        assert_eq!(rec.samples.len(), 60);
        assert!(rec.accepted.iter().any(|&a| a), "chain {i} never moved");
        let back = read_chain(&dir.path().join(format!("chain_{i}.txt"))).unwrap();
        assert_eq!(back.samples, rec.samples);
        assert_eq!(back.log_posts, rec.log_posts);
        assert_eq!(back.accepted, rec.accepted);
    }
}

#[test]
fn linear_kernel_matches_snapshot_covariance_pca() {
    let mesh = build_structured_mesh(6, 6, 1.0, 1.0).unwrap();
    let set = generate_snapshots(&mesh, &ChannelSpec::default(), 25).unwrap();
    let model = kpca::fit(&set, Kernel::linear(), Retain::Count(5)).unwrap();

    let y = &set.values;
    let m = y.ncols() as f64;
    let mean = y.column_mean();
    let mut yc = y.clone();
    for mut c in yc.column_iter_mut() {
        c -= &mean;
    }
    let eig = SymmetricEigen::new(&yc * yc.transpose() / m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    for (k, &e) in order.iter().take(5).enumerate() {
        assert_relative_eq!(model.lambda_f[k], eig.eigenvalues[e], max_relative = 1e-9);
        let u = eig.eigenvectors.column(e);
        let coords: Vec<f64> = yc.column_iter().map(|c| u.dot(&c) / eig.eigenvalues[e].sqrt()).collect();
        let sign = if coords[0] * model.xi_d[(0, k)] < 0.0 { -1.0 } else { 1.0 };
        for (l, c) in coords.iter().enumerate() {
            assert_relative_eq!(model.xi_d[(l, k)], sign * c, epsilon = 1e-8);
        }
    }

    // the linear pre-image is the projection onto the retained subspace
    let xi = model.training_xi(3);
    let y_star = preimage(&model, &xi, PreimageInit::Nearest, &PreimageOptions::default()).unwrap().y;
    let mut expected = mean.clone();
    for &e in order.iter().take(5) {
        let u = eig.eigenvectors.column(e);
        expected += u * u.dot(&yc.column(3));
    }
    for (a, b) in y_star.iter().zip(expected.iter()) {
        assert_relative_eq!(*a, *b, epsilon = 1e-8, max_relative = 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projecting_a_training_snapshot_recovers_its_coordinates(
        seed in 0u64..1000,
        degree in 1u32..=4,
        m in 6usize..14,
    ) {
        let y = DMatrix::from_fn(5, m, |i, l| {
            let t = (seed as f64 + 1.0) * 0.37 + i as f64 * 1.3 + l as f64 * 0.71;
            (t.sin() * 43758.5453).fract()
        });
        let r = 3.min(m - 1);
        let model = fit_matrix(&y, Kernel::polynomial(degree), Retain::Count(r)).unwrap();
        for l in 0..m {
            let xi = kpca::project(&model, y.column(l).as_slice()).unwrap();
            let scale = model.xi_d.row(l).amax().max(1.0);
            for k in 0..r {
                prop_assert!((xi[k] - model.xi_d[(l, k)]).abs() <= 1e-8 * scale);
            }
        }
    }
}

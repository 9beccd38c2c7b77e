use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use sigsel_core::baselines::*;
use sigsel_core::rng::stream;

fn column(xs: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((xs.len(), 1), xs.to_vec()).unwrap()
}

#[test]
fn normal_mode_within_tenth_sigma() {
    let (mu, sigma) = (0.3, 0.05);
    let mut rng = stream(17, &[]);
    let dist = Normal::new(mu, sigma).unwrap();
    let xs: Vec<f64> = (0..10_000).map(|_| dist.sample(&mut rng)).collect();
    let mode = posterior_mode_kde(&column(&xs)).unwrap()[0];
    assert!((mode - mu).abs() < 0.1 * sigma, "mode {mode}");
}

fn kde_on_grid(xs: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let h = sd * n.powf(-0.2);
    grid.iter()
        .map(|g| xs.iter().map(|x| (-0.5 * ((g - x) / h).powi(2)).exp()).sum())
        .collect()
}

#[test]
fn bimodal_mode_follows_heavier_cluster() {
    let mut rng = stream(5, &[]);
    let heavy = Normal::new(1.0, 0.1).unwrap();
    let light = Normal::new(-1.0, 0.1).unwrap();
    let xs: Vec<f64> = (0..2000)
        .map(|i| if i % 5 == 0 { light.sample(&mut rng) } else { heavy.sample(&mut rng) })
        .collect();
    let mode = posterior_mode_kde(&column(&xs)).unwrap()[0];
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    assert!((mean - 0.6).abs() < 0.05);

    let grid: Vec<f64> = (0..=4000).map(|i| -2.0 + i as f64 * 1e-3).collect();
    let dens = kde_on_grid(&xs, &grid);
    let (best, _) = dens
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let grid_mode = grid[best];
    assert!((grid_mode - 1.0).abs() < 0.05);
    assert!((mode - grid_mode).abs() < 0.02, "sample argmax {mode}, grid argmax {grid_mode}");
}

#[test]
fn constant_coordinate_is_returned() {
    let mut rng = stream(8, &[]);
    let mut samples = Array2::zeros((500, 2));
    for i in 0..500 {
        samples[[i, 0]] = rng.random_range(-1.0..1.0);
        samples[[i, 1]] = 0.125;
    }
    assert_eq!(posterior_mode_kde(&samples).unwrap()[1], 0.125);
}

#[test]
fn symmetric_unimodal_mode_near_mean() {
    let mut rng = stream(9, &[]);
    let dist = Normal::new(0.0, 1.0).unwrap();
    let n = 2000;
    let mut samples = Array2::zeros((n, 2));
    for v in samples.iter_mut() {
        *v = dist.sample(&mut rng);
    }
    let mode = posterior_mode_kde(&samples).unwrap();
    let mean = posterior_mean(&samples).unwrap();
    let h: Vec<f64> = (0..2)
        .map(|j| {
            let c = samples.column(j);
            let var = c.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            var.sqrt() * (n as f64).powf(-1.0 / 6.0)
        })
        .collect();
    let density = |x: f64, y: f64| -> f64 {
        samples
            .rows()
            .into_iter()
            .map(|r| (-0.5 * (((x - r[0]) / h[0]).powi(2) + ((y - r[1]) / h[1]).powi(2))).exp())
            .sum()
    };
    // dense-grid argmax of the same estimator
    let grid: Vec<f64> = (0..=60).map(|i| -1.5 + i as f64 * 0.05).collect();
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for &x in &grid {
        for &y in &grid {
            let d = density(x, y);
            if d > best.2 {
                best = (x, y, d);
            }
        }
    }
    assert!((mode[0] - best.0).abs() < 0.1 && (mode[1] - best.1).abs() < 0.1, "{mode:?} vs {best:?}");
    assert!(density(mode[0], mode[1]) > 0.99 * best.2);
    // the argmax of a Scott-bandwidth KDE wanders by up to ~1.5 bandwidths in 2-D
    for j in 0..2 {
        assert!((mode[j] - mean[j]).abs() < 2.0 * h[j], "coordinate {j}: {} vs {}", mode[j], mean[j]);
    }
}

proptest! {
    #[test]
    fn rmse_translation_coherent(
        pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6),
        shift in -10.0f64..10.0,
    ) {
        let est: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let truth: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let moved_e: Vec<f64> = est.iter().map(|v| v + shift).collect();
        let moved_t: Vec<f64> = truth.iter().map(|v| v + shift).collect();
        let a = rmse(&est, &truth).unwrap();
        let b = rmse(&moved_e, &moved_t).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn lls_exact_on_logit_linear_data(
        a0 in 0.05f64..0.95,
        s in -0.1f64..0.1,
        diploid in any::<bool>(),
    ) {
        let ploidy = if diploid { Ploidy::Diploid } else { Ploidy::Haploid };
        let slope = if diploid { s / 2.0 } else { s };
        let times: Vec<i64> = (0..=10).map(|k| 10 * k).collect();
        let l0 = (a0 / (1.0 - a0)).ln();
        let freqs = Array2::from_shape_fn((11, 1), |(k, _)| {
            let l = l0 + slope * times[k] as f64;
            1.0 / (1.0 + (-l).exp())
        });
        let traj = sigsel_core::wf::Trajectory::new(times, freqs).unwrap();
        let est = lls_estimate(&traj, ploidy, None).unwrap();
        prop_assert!((est.s_hat[0] - s).abs() < 1e-12);
    }
}

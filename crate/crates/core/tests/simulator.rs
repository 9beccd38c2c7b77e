use proptest::prelude::*;
use sigsel_core::rng::stream;
use sigsel_core::wf::*;

fn dirichlet_like(weights: &[f64]) -> HaplotypeFrequencies {
    HaplotypeFrequencies::from_weights(weights).unwrap()
}

/// Recombination via marginals: for each crossover pattern the loci split into
/// the set inherited from the first parent and the set inherited from the
/// second, and the two parents are independent draws from `h`.
fn recombine_by_marginals(h: &[f64], rates: &[f64]) -> Vec<f64> {
    let loci = rates.len() + 1;
    let n = 1usize << loci;
    let marginal = |g: usize, set: &[usize]| -> f64 {
        (0..n)
            .filter(|&k| set.iter().all(|&l| allele_at(k, l, loci) == allele_at(g, l, loci)))
            .map(|k| h[k])
            .sum()
    };
    let mut out = vec![0.0; n];
    for pattern in 0..(1usize << rates.len()) {
        let mut p = 1.0;
        let mut first = Vec::new();
        let mut second = Vec::new();
        let mut switched = false;
        for l in 0..loci {
            if l > 0 {
                let cross = (pattern >> (l - 1)) & 1 == 1;
                p *= if cross { rates[l - 1] } else { 1.0 - rates[l - 1] };
                switched ^= cross;
            }
            if switched { second.push(l) } else { first.push(l) }
        }
        for (g, o) in out.iter_mut().enumerate() {
            *o += p * marginal(g, &first) * marginal(g, &second);
        }
    }
    out
}

fn linkage(h: &HaplotypeFrequencies) -> f64 {
    let v = h.values();
    v[0] * v[3] - v[1] * v[2]
}

proptest! {
    #[test]
    fn recombination_matches_marginal_oracle(
        w in prop::collection::vec(0.01f64..1.0, 8),
        r1 in 0.0f64..0.5,
        r2 in 0.0f64..0.5,
    ) {
        let h = dirichlet_like(&w);
        let out = recombine(&h, &RecombinationMap::new(vec![r1, r2]).unwrap()).unwrap();
        let oracle = recombine_by_marginals(h.values(), &[r1, r2]);
        for (a, b) in out.values().iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn recombination_preserves_allele_marginals(
        w in prop::collection::vec(0.0f64..1.0, 8),
        r1 in 0.0f64..0.5,
        r2 in 0.0f64..0.5,
    ) {
        prop_assume!(w.iter().sum::<f64>() > 0.01);
        let h = dirichlet_like(&w);
        let out = recombine(&h, &RecombinationMap::new(vec![r1, r2]).unwrap()).unwrap();
        for (a, b) in haplotype_to_allele(&h).iter().zip(haplotype_to_allele(&out)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let total: f64 = out.values().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn neutral_linkage_decays_by_one_minus_r(
        w in prop::collection::vec(0.01f64..1.0, 4),
        r in 0.0f64..0.5,
    ) {
        let rmap = RecombinationMap::new(vec![r]).unwrap();
        let wf = WrightFisher::new(FitnessModel::additive(vec![0.0, 0.0], SelectionMode::Standard).unwrap(), &rmap).unwrap();
        let mut h = dirichlet_like(&w);
        for _ in 0..5 {
            let next = wf.deterministic_update(&h).unwrap();
            prop_assert!((linkage(&next) - (1.0 - r) * linkage(&h)).abs() < 1e-12);
            h = next;
        }
    }

    #[test]
    fn generation_output_is_a_distribution(
        w in prop::collection::vec(0.0f64..1.0, 4),
        s1 in -0.5f64..0.5,
        s2 in -0.5f64..0.5,
        seed in any::<u64>(),
        nfds in any::<bool>(),
    ) {
        prop_assume!(w.iter().sum::<f64>() > 0.01);
        let mode = if nfds { SelectionMode::Nfds } else { SelectionMode::Standard };
        let model = FitnessModel::additive(vec![s1, s2], mode).unwrap();
        let wf = WrightFisher::new(model, &RecombinationMap::new(vec![0.1]).unwrap()).unwrap();
        let h = dirichlet_like(&w);
        let det = wf.deterministic_update(&h).unwrap();
        let next = wf.generation(&h, 50, &mut stream(seed, &[])).unwrap();
        for out in [det, next] {
            let total: f64 = out.values().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(out.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn recombination_parent_roles_are_symmetric() {
    // swapping which parent contributes the leftmost locus gives the same pool
    let h = [0.05, 0.1, 0.15, 0.2, 0.02, 0.08, 0.3, 0.1];
    let rates = [0.2, 0.35];
    let loci = 3;
    let n = 8;
    let mut swapped = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            for pattern in 0..4usize {
                let mut p = 1.0;
                let mut from_i = false;
                let mut g = 0;
                for l in 0..loci {
                    if l > 0 {
                        let cross = (pattern >> (l - 1)) & 1 == 1;
                        p *= if cross { rates[l - 1] } else { 1.0 - rates[l - 1] };
                        from_i ^= cross;
                    }
                    g = (g << 1) | allele_at(if from_i { i } else { j }, l, loci);
                }
                swapped[g] += h[i] * h[j] * p;
            }
        }
    }
    let out = recombine(&HaplotypeFrequencies::new(h.to_vec()).unwrap(), &RecombinationMap::new(rates.to_vec()).unwrap()).unwrap();
    for (a, b) in out.values().iter().zip(&swapped) {
        approx::assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
    }
}

fn neutral_config(reps_seed: u64) -> (WrightFisher, SimConfig) {
    let sim = SimConfig {
        pop_size: 100,
        t0: 0,
        intervals: 5,
        delta_t: 4,
        init_haps: HaplotypeFrequencies::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
        seed: reps_seed,
    };
    let wf = WrightFisher::new(
        FitnessModel::additive(vec![0.0, 0.0], SelectionMode::Standard).unwrap(),
        &RecombinationMap::new(vec![0.05]).unwrap(),
    )
    .unwrap();
    (wf, sim)
}

#[test]
fn neutral_allele_frequency_is_a_martingale() {
    let (wf, sim) = neutral_config(7);
    let reps = 10_000;
    let start = haplotype_to_allele(&sim.init_haps);
    let finals: Vec<Vec<f64>> = (0..reps)
        .map(|r| {
            let t = wf.simulate(&sim, &mut stream(sim.seed, &[r])).unwrap();
            t.freqs().row(t.len() - 1).to_vec()
        })
        .collect();
    for (l, &a0) in start.iter().enumerate() {
        let xs: Vec<f64> = finals.iter().map(|f| f[l]).collect();
        let mean = xs.iter().sum::<f64>() / reps as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!((mean - a0).abs() < 3.0 * se, "locus {l}: mean {mean}, start {a0}, se {se}");
    }
}

#[test]
fn stronger_selection_rises_faster() {
    let sim = SimConfig {
        pop_size: 5000,
        t0: 0,
        intervals: 10,
        delta_t: 10,
        init_haps: HaplotypeFrequencies::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
        seed: 0,
    };
    let wf = WrightFisher::new(
        FitnessModel::additive(vec![0.02, 0.07], SelectionMode::Standard).unwrap(),
        &RecombinationMap::new(vec![1e-6]).unwrap(),
    )
    .unwrap();
    let logit = |a: f64| (a / (1.0 - a)).ln();
    let mut gain = [0.0; 2];
    for r in 0..100 {
        let t = wf.simulate(&sim, &mut stream(11, &[r])).unwrap();
        let f = t.freqs();
        for l in 0..2 {
            gain[l] += logit(f[[10, l]]) - logit(f[[0, l]]);
        }
    }
    assert!(gain[1] > gain[0]);
    // expected diploid logit slope is s/2 per generation
    approx::assert_abs_diff_eq!(gain[0] / 100.0, 0.01 * 100.0, epsilon = 0.3);
    approx::assert_abs_diff_eq!(gain[1] / 100.0, 0.035 * 100.0, epsilon = 0.5);
}

#[test]
fn trajectories_are_bit_reproducible() {
    let (wf, sim) = neutral_config(3);
    let a = wf.simulate(&sim, &mut stream(3, &[1])).unwrap();
    let b = wf.simulate(&sim, &mut stream(3, &[1])).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.freqs().row(0).to_vec(), haplotype_to_allele(&sim.init_haps));
}

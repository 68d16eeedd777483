use proptest::prelude::*;
use spiked_core::amp::{run_se, se_step};
use spiked_core::dynamics::langevin_step;
use spiked_core::model::{Channels, Configuration, Instance, TensorStorage};
use spiked_core::rng::{self, Stream};
use spiked_core::theory::{critical_delta3, critical_delta3_bracketed, lambda_exponent};
use spiked_core::{KernelQ, ModelParams};

fn instance(n: usize, d2: f64, d3: f64, seed: u64) -> Instance {
    Instance::builder(ModelParams::new(n, d2, d3, 1.0).unwrap(), seed)
        .build()
        .unwrap()
}

/// Fisher-Yates driven by a seeded stream.
fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand_core::RngCore;
    let mut r = rng::stream(seed, Stream::Init, 99, 0);
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (r.next_u64() % (i as u64 + 1)) as usize;
        p.swap(i, j);
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hamiltonian_is_permutation_invariant(seed in 0u64..1000, pseed in 0u64..1000, n in 3usize..24) {
        let inst = instance(n, 0.7, 1.5, seed);
        let perm = permutation(n, pseed);
        let q = inst.permuted(&perm).unwrap();
        let x = Configuration::random(n, seed ^ 0x55);
        let mut px = vec![0.0; n];
        for (i, &p) in perm.iter().enumerate() {
            px[p] = x[i];
        }
        let (a, b) = (inst.hamiltonian(&x).unwrap(), q.hamiltonian(&px).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
        prop_assert!((inst.overlap(&x).unwrap() - q.overlap(&px).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences(seed in 0u64..1000, d2 in 0.2f64..2.0, d3 in 0.2f64..3.0) {
        let n = 32;
        let inst = instance(n, d2, d3, seed);
        let x = Configuration::random(n, seed + 7).into_inner();
        let g = inst.gradient(&x).unwrap();
        let eps = 1e-5;
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += eps;
            xm[i] -= eps;
            let fd = (inst.hamiltonian(&xp).unwrap() - inst.hamiltonian(&xm).unwrap()) / (2.0 * eps);
            prop_assert!((fd - g[i]).abs() <= 1e-5, "i={i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn langevin_step_stays_on_sphere(seed in 0u64..1000, dt in 1e-4f64..0.1, beta in 0.2f64..5.0) {
        let n = 40;
        let p = ModelParams::new(n, 0.7, 1.5, beta).unwrap();
        let inst = Instance::builder(p, seed).build().unwrap();
        let mut noise = rng::stream(seed, Stream::Thermal, 0, 0);
        let mut x = Configuration::random(n, seed);
        for _ in 0..5 {
            x = langevin_step(&x, &inst, dt, Some(&mut noise)).unwrap();
            let r = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
            prop_assert!((r - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn instances_are_bit_exact(seed in any::<u64>(), n in 3usize..20) {
        let a = instance(n, 0.5, 1.0, seed);
        let b = instance(n, 0.5, 1.0, seed);
        prop_assert_eq!(&a, &b);
        let c = Instance::builder(*a.params(), seed)
            .storage(TensorStorage::Implicit)
            .build()
            .unwrap()
            .to_packed();
        prop_assert_eq!(a.tensor().unwrap(), c.tensor().unwrap());
    }

    #[test]
    fn se_map_is_monotone(d2 in 0.05f64..3.0, d3 in 0.05f64..5.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let k = KernelQ::new(d2, d3);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(se_step(lo, &k) <= se_step(hi, &k));
        let f = se_step(hi, &k);
        prop_assert!((0.0..1.0).contains(&f));
    }

    #[test]
    fn se_iterates_are_monotone(d2 in 0.05f64..3.0, d3 in 0.05f64..5.0, m0 in 1e-8f64..1.0) {
        let se = run_se(&KernelQ::new(d2, d3), m0, 1e-12, 5000).unwrap();
        let t = &se.trajectory;
        let up = t.windows(2).all(|w| w[1] >= w[0]);
        let down = t.windows(2).all(|w| w[1] <= w[0]);
        prop_assert!(up || down, "not monotone: {:?}", &t[..t.len().min(6)]);
    }

    #[test]
    fn closed_form_line_matches_root_finding(d2 in 0.05f64..0.95, which in 0usize..3) {
        let beta = [1.0, 1.25, f64::INFINITY][which];
        match (critical_delta3(d2, beta), critical_delta3_bracketed(d2, beta)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0), "{a} vs {b}"),
            (None, None) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn threshold_lines_are_ordered(d2 in 0.01f64..0.99) {
        let c = |b: f64| critical_delta3(d2, b).unwrap_or(0.0);
        prop_assert!(c(1.0) <= c(1.25) && c(1.25) <= c(f64::INFINITY));
    }
}

#[test]
fn lambda_vanishes_on_the_reference_points() {
    assert!(lambda_exponent(0.5, 1.0, f64::INFINITY).unwrap().abs() <= 1e-12);
    assert!(lambda_exponent(0.5, 0.5, 1.0).unwrap().abs() <= 1e-12);
}

#[test]
fn noise_free_spike_has_zero_energy_without_channels() {
    let p = ModelParams::new(12, 0.5, 0.5, 1.0).unwrap();
    let inst = Instance::implicit(p, 3, Channels::EMPTY).unwrap();
    let x = Configuration::random(12, 4);
    assert_eq!(inst.hamiltonian(&x).unwrap(), 0.0);
}

/// `(1/N) sum_{i<j} (Y_ij - x*_i x*_j / sqrt N)^2` averages to `delta2 (N-1)/2`.
#[test]
fn matrix_noise_has_the_requested_variance() {
    let (n, d2, seeds) = (64usize, 0.7, 120u64);
    let samples: Vec<f64> = (0..seeds)
        .map(|s| {
            let inst = instance(n, d2, 1.5, s);
            let x = inst.signal();
            let mut acc = 0.0;
            let mut off = 0;
            for i in 0..n {
                for j in i + 1..n {
                    let e = inst.matrix()[off] - x[i] * x[j] / (n as f64).sqrt();
                    acc += e * e;
                    off += 1;
                }
            }
            acc / n as f64
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / seeds as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
    let se = (var / seeds as f64).sqrt();
    let expected = d2 * (n - 1) as f64 / 2.0;
    assert!((mean - expected).abs() <= 3.0 * se, "{mean} vs {expected} (se {se})");
}

//! Acceptance suite: one test per checkable claim, loosely ordered from
//! algebraic identities to statistical bands. Each test prints a PASS line
//! on success so a `--nocapture` run reads as a checklist.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution as RandDistribution, StandardNormal};
use std::f64::consts::PI;

use ntk_core::bounds::{
    certified_lower_bound_empirical, certified_lower_bound_limiting, lipschitz_empirical,
    lipschitz_naive_bound, scaling_expression, trace_upper_bound_limiting, upper_bound_empirical,
    FormulaId,
};
use ntk_core::data::{sample, DataSpec, Distribution};
use ntk_core::empirical::{
    backward_vectors, empirical_ntk, jacobian, layerwise_decomposition, linearized_fit,
    normalized_ntk,
};
use ntk_core::hermite::{
    dual_from_hermite, gershgorin_bounds, hermite_coeff_relu, khatri_rao_gram, GershgorinVariant,
};
use ntk_core::kernel::{limiting_ntk, limiting_ntk_monte_carlo, relu_dual};
use ntk_core::linalg::{
    max_abs_entry_diff, operator_norm, rel_frobenius_distance, smallest_eigenvalue,
};
use ntk_core::net::{batch_forward, forward, init_weights, Architecture};
use ntk_core::rng::{derive_seed, stream, substream};

fn pass(n: u32, what: &str) {
    println!("ACCEPTANCE {n:02} {what}: PASS");
}

#[test]
fn criterion_01_hermite_identities() {
    let mu1 = hermite_coeff_relu(1);
    assert_eq!(mu1 * mu1, 0.25, "first coefficient squared must be exactly 1/4");

    let mu0 = hermite_coeff_relu(0);
    let mut even_sum = mu0 * mu0;
    for r in (2..=200).step_by(2) {
        let mu = hermite_coeff_relu(r);
        even_sum += mu * mu;
    }
    assert!(
        (0.2499..=0.25).contains(&even_sum),
        "even-order mass {even_sum} outside [0.2499, 0.25]"
    );
    pass(1, "hermite identities");
}

#[test]
fn criterion_02_dual_kernel_series() {
    for rho in [-0.9, -0.5, 0.0, 0.5, 0.9] {
        let series = dual_from_hermite(rho, 100).unwrap();
        let closed = relu_dual(1.0, 1.0, rho).unwrap() / 2.0;
        assert!(
            (series - closed).abs() <= 1e-6,
            "rho {rho}: series {series} vs closed {closed}"
        );
    }
    pass(2, "dual kernel series vs closed form");
}

#[test]
fn criterion_03_closed_form_vs_monte_carlo() {
    // Hand case first: orthogonal rows of norm 2 at depth 2.
    let mut x = DMatrix::zeros(2, 4);
    x[(0, 0)] = 2.0;
    x[(1, 1)] = 2.0;
    let k2 = limiting_ntk(&x, 2).unwrap();
    let want = DMatrix::from_row_slice(2, 2, &[8.0, 4.0 / PI, 4.0 / PI, 8.0]);
    assert!(max_abs_entry_diff(k2.final_ntk(), &want) <= 1e-12);

    // Sampled cross-check of every kernel entry at the stated scale.
    let spec = DataSpec::new(Distribution::Gaussian, 4, 16, 20_250_816).unwrap();
    let x = sample(&spec).unwrap();
    let exact = limiting_ntk(&x, 3).unwrap();
    let mc = limiting_ntk_monte_carlo(&x, 3, 1_000_000, 20_250_818).unwrap();
    for l in 2..=3usize {
        let (g, g_mc, g_se) = (exact.conjugate_at(l), &mc.conjugate[l - 1], &mc.conjugate_se[l - 1]);
        let (gd, gd_mc, gd_se) =
            (exact.derivative_at(l), &mc.derivative[l - 2], &mc.derivative_se[l - 2]);
        for i in 0..4 {
            for j in 0..4 {
                let dev = (g[(i, j)] - g_mc[(i, j)]).abs();
                assert!(
                    dev <= 3.0 * g_se[(i, j)] + 1e-12,
                    "conjugate layer {l} entry ({i},{j}): dev {dev} vs se {}",
                    g_se[(i, j)]
                );
                let dev = (gd[(i, j)] - gd_mc[(i, j)]).abs();
                assert!(
                    dev <= 3.0 * gd_se[(i, j)] + 1e-12,
                    "derivative layer {l} entry ({i},{j}): dev {dev} vs se {}",
                    gd_se[(i, j)]
                );
            }
        }
    }
    pass(3, "closed forms vs Monte Carlo");
}

#[test]
fn criterion_04_limiting_sandwich_and_scale() {
    let dims = [4usize, 16, 64];
    let counts = [2usize, 4, 8, 16];
    let depths = [2usize, 3, 4];
    let dists = [Distribution::Gaussian, Distribution::Sphere, Distribution::Hypercube];
    for case in 0..100u64 {
        let d = dims[(case % 3) as usize];
        let n = counts[(case % 4) as usize];
        let depth = depths[(case % 3) as usize];
        let r = if case % 2 == 0 { 2 } else { 4 };
        let x = sample(&DataSpec::new(dists[(case % 3) as usize], n, d, 41_000 + case).unwrap())
            .unwrap();
        let stack = limiting_ntk(&x, depth).unwrap();
        let exact = smallest_eigenvalue(stack.final_ntk()).unwrap();
        let scale = operator_norm(stack.final_ntk()).unwrap();
        let lower = certified_lower_bound_limiting(&x, depth, r).unwrap().value;
        let upper = trace_upper_bound_limiting(&x, depth).unwrap().value;
        assert!(lower <= exact + 1e-8 * scale, "case {case}: {lower} vs {exact}");
        assert!(upper >= exact - 1e-8 * scale, "case {case}: {upper} vs {exact}");
    }

    // Scale stability: the smallest eigenvalue tracks the data scale d
    // within a frozen band across dimensions at fixed sample count.
    for depth in [2usize, 3] {
        for (di, d) in [32usize, 64, 128, 256].into_iter().enumerate() {
            for t in 0..3u64 {
                let seed = 42_000 + 100 * depth as u64 + 10 * di as u64 + t;
                let x =
                    sample(&DataSpec::new(Distribution::Gaussian, 16, d, seed).unwrap()).unwrap();
                let lam =
                    smallest_eigenvalue(limiting_ntk(&x, depth).unwrap().final_ntk()).unwrap();
                let ratio = lam / d as f64;
                assert!(
                    ratio >= 0.1 && ratio <= 2.0 * depth as f64,
                    "d {d} depth {depth} trial {t}: ratio {ratio}"
                );
            }
        }
    }
    pass(4, "limiting sandwich + scale band");
}

#[test]
fn criterion_05_jacobian_finite_differences() {
    let shapes: [&[usize]; 4] = [&[3, 8, 5, 1], &[2, 4, 1], &[5, 6, 1], &[4, 16, 2, 8, 1]];
    let mut checked = 0usize;
    let mut attempt = 0u64;
    while checked < 20 {
        let widths = shapes[(attempt % 4) as usize].to_vec();
        let arch = Architecture::he(widths.clone()).unwrap();
        let ws = init_weights(&arch, 43_000 + attempt);
        let x = sample(&DataSpec::new(Distribution::Gaussian, 3, widths[0], 43_500 + attempt).unwrap())
            .unwrap();
        attempt += 1;
        let (_, traces) = batch_forward(&ws, &x).unwrap();
        if traces.iter().any(|t| t.pre.iter().any(|g| g.iter().any(|v| v.abs() < 1e-3))) {
            continue; // too close to a kink for clean difference quotients
        }
        let j = jacobian(&ws, &x).unwrap();
        let h = 1e-5;
        for l in 1..=ws.depth() {
            let (rows, cols) = ws.layer(l).shape();
            for c in 0..cols {
                for r in 0..rows {
                    let mut plus = ws.clone();
                    plus.layer_mut(l)[(r, c)] += h;
                    let mut minus = ws.clone();
                    minus.layer_mut(l)[(r, c)] -= h;
                    for i in 0..3 {
                        let xi = x.row(i).transpose();
                        let fd = (forward(&plus, &xi).unwrap().output()
                            - forward(&minus, &xi).unwrap().output())
                            / (2.0 * h);
                        let an = j.block(l)[(i, c * rows + r)];
                        assert!(
                            (fd - an).abs() <= 1e-6 * an.abs().max(1.0),
                            "attempt {attempt} layer {l} ({r},{c}) sample {i}: {fd} vs {an}"
                        );
                    }
                }
            }
        }
        checked += 1;
    }
    pass(5, "jacobian matches finite differences");
}

#[test]
fn criterion_06_layerwise_decomposition_identity() {
    let shapes: [&[usize]; 5] = [
        &[8, 256, 4, 64, 1],
        &[6, 12, 9, 1],
        &[5, 7, 1],
        &[4, 64, 64, 1],
        &[3, 2, 128, 2, 1],
    ];
    for case in 0..50u64 {
        let widths = shapes[(case % 5) as usize].to_vec();
        let n = if case % 2 == 0 { 3 } else { 5 };
        let arch = Architecture::he(widths.clone()).unwrap();
        let ws = init_weights(&arch, 44_000 + case);
        let x = sample(&DataSpec::new(Distribution::Sphere, n, widths[0], 44_500 + case).unwrap())
            .unwrap();
        let dec = layerwise_decomposition(&ws, &x).unwrap();
        let kbar = empirical_ntk(&jacobian(&ws, &x).unwrap());
        let err = rel_frobenius_distance(&dec.reconstruction, &kbar);
        assert!(err <= 1e-10, "case {case} widths {widths:?}: residual {err}");
    }
    pass(6, "layerwise decomposition identity");
}

#[test]
fn criterion_07_empirical_sandwich() {
    let shapes: [&[usize]; 4] = [&[4, 16, 1], &[3, 8, 8, 1], &[5, 32, 4, 1], &[2, 4, 4, 4, 1]];
    for case in 0..100u64 {
        let widths = shapes[(case % 4) as usize].to_vec();
        let n = 2 + (case % 3) as usize;
        let arch = Architecture::he(widths.clone()).unwrap();
        let ws = init_weights(&arch, 45_000 + case);
        let x = sample(&DataSpec::new(Distribution::Gaussian, n, widths[0], 45_500 + case).unwrap())
            .unwrap();
        let kbar = empirical_ntk(&jacobian(&ws, &x).unwrap());
        let exact = smallest_eigenvalue(&kbar).unwrap();
        let scale = operator_norm(&kbar).unwrap();
        let lower = certified_lower_bound_empirical(&ws, &x).unwrap().value;
        let upper = upper_bound_empirical(&ws, &x).unwrap().value;
        assert!(lower <= exact + 1e-8 * scale, "case {case}: {lower} vs {exact}");
        assert!(upper >= exact - 1e-8 * scale, "case {case}: {upper} vs {exact}");
    }

    // Depth 1: the single layerwise term IS the kernel's smallest eigenvalue.
    for t in 0..10u64 {
        let arch = Architecture::he(vec![6, 1]).unwrap();
        let ws = init_weights(&arch, 46_000 + t);
        let x = sample(&DataSpec::new(Distribution::Gaussian, 4, 6, 46_500 + t).unwrap()).unwrap();
        let kbar = empirical_ntk(&jacobian(&ws, &x).unwrap());
        let exact = smallest_eigenvalue(&kbar).unwrap();
        let lower = certified_lower_bound_empirical(&ws, &x).unwrap().value;
        assert!(
            (lower - exact).abs() <= 1e-10 * exact.abs().max(1.0),
            "trial {t}: {lower} vs {exact}"
        );
    }
    pass(7, "empirical sandwich");
}

#[test]
fn criterion_08_convergence_to_limit() {
    let x = sample(&DataSpec::new(Distribution::Gaussian, 8, 16, 47_000).unwrap()).unwrap();
    let depth = 3;
    let k_inf = limiting_ntk(&x, depth).unwrap();
    let mut medians = Vec::new();
    for &width in &[64usize, 256, 1024] {
        let widths = vec![16, width, width, 1];
        let arch = Architecture::new(widths.clone(), vec![1.0; depth]).unwrap();
        let mut gaps = Vec::new();
        for t in 0..10u64 {
            let ws = init_weights(&arch, 47_100 + t);
            let kbar = empirical_ntk(&jacobian(&ws, &x).unwrap());
            let normalized = normalized_ntk(&kbar, &widths).unwrap();
            gaps.push(max_abs_entry_diff(&normalized, k_inf.final_ntk()));
        }
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push(0.5 * (gaps[4] + gaps[5]));
    }
    assert!(
        medians[0] > medians[1] && medians[1] > medians[2],
        "median gaps not strictly decreasing: {medians:?}"
    );
    assert!(
        medians[2] <= medians[0] / 2.0,
        "width-1024 median {} not below half the width-64 median {}",
        medians[2],
        medians[0]
    );
    pass(8, "finite-width kernels approach the limit");
}

#[test]
fn criterion_09_memorization() {
    let n = 16usize;
    let wide = 4 * ((n as f64) * (n as f64).ln()).ceil() as usize;
    let arch = Architecture::he(vec![8, wide, 1]).unwrap();
    for t in 0..10u64 {
        let x = sample(&DataSpec::new(Distribution::Gaussian, n, 8, 48_000 + t).unwrap()).unwrap();
        let ws = init_weights(&arch, 48_100 + t);
        let j = jacobian(&ws, &x).unwrap();
        let lam = smallest_eigenvalue(&empirical_ntk(&j)).unwrap();
        assert!(lam > 0.0, "trial {t}: kernel not positive definite ({lam})");
        let mut label_rng = stream(derive_seed(48_200, "labels", t));
        let y = DVector::from_fn(n, |_, _| if label_rng.gen::<bool>() { 1.0 } else { -1.0 });
        let fit = linearized_fit(&j, &y).unwrap();
        assert!(fit.residual_norm <= 1e-6, "trial {t}: residual {}", fit.residual_norm);
    }
    pass(9, "random-label memorization");
}

#[test]
fn criterion_10_concentration_bands() {
    // Activation-count concentration: ‖Σ_k(x)‖_F² is the number of active
    // units, within ±4√n_k of n_k/2 in at least 95% of trials.
    let n_k = 1024usize;
    let arch = Architecture::he(vec![16, n_k, 1]).unwrap();
    let mut hits = 0usize;
    for t in 0..200u64 {
        let ws = init_weights(&arch, 49_000 + t);
        let x = sample(&DataSpec::new(Distribution::Sphere, 1, 16, 49_300 + t).unwrap()).unwrap();
        let trace = forward(&ws, &x.row(0).transpose()).unwrap();
        let active: f64 = trace.activation_diag(1).iter().sum();
        if (active - n_k as f64 / 2.0).abs() <= 4.0 * (n_k as f64).sqrt() {
            hits += 1;
        }
    }
    assert!(hits >= 190, "activation count in band in only {hits}/200 trials");

    // Feature-norm growth: ‖f_k(x)‖²/‖x‖² stays within [0.2, 5] under the
    // width-normalised variance products in at least 95% of trials.
    let widths = vec![1024usize, 1024, 1024, 1];
    let arch = Architecture::he(widths.clone()).unwrap();
    for k in [1usize, 2] {
        let mut hits = 0usize;
        for t in 0..100u64 {
            let ws = init_weights(&arch, 50_000 + t);
            let x =
                sample(&DataSpec::new(Distribution::Sphere, 1, 1024, 50_200 + t).unwrap()).unwrap();
            let trace = forward(&ws, &x.row(0).transpose()).unwrap();
            let ratio = trace.feature(k).norm_squared() / x.row(0).norm_squared();
            if (0.2..=5.0).contains(&ratio) {
                hits += 1;
            }
        }
        assert!(hits >= 95, "feature norm ratio (layer {k}) in band in only {hits}/100 trials");
    }

    // Backward-vector norms against the variance products, band [0.1, 10].
    let widths = vec![16usize, 512, 512, 1];
    let arch = Architecture::he(widths.clone()).unwrap();
    let depth = arch.depth();
    for j in [1usize, 2] {
        let mut denom = arch.variance(depth) * widths[j] as f64;
        for l in (j + 1)..depth {
            denom *= widths[l] as f64 * arch.variance(l);
        }
        let mut hits = 0usize;
        let mut total = 0usize;
        for t in 0..50u64 {
            let ws = init_weights(&arch, 51_000 + t);
            let x =
                sample(&DataSpec::new(Distribution::Gaussian, 2, 16, 51_200 + t).unwrap()).unwrap();
            let (_, traces) = batch_forward(&ws, &x).unwrap();
            let b = backward_vectors(&ws, &traces, j).unwrap();
            for i in 0..2 {
                total += 1;
                if (0.1..=10.0).contains(&(b.rows.row(i).norm_squared() / denom)) {
                    hits += 1;
                }
            }
        }
        assert!(hits * 20 >= total * 19, "backward ratio (layer {j}): {hits}/{total} in band");
    }
    pass(10, "concentration bands");
}

#[test]
fn criterion_11_gershgorin_validity() {
    let mut rng = substream(52_000, "gershgorin-acceptance", 0);
    for case in 0..200 {
        let n = 2 + (case % 5);
        let m_cols = 2 + (case % 4);
        let r = 1 + (case % 4);
        let mut m = DMatrix::<f64>::zeros(n, m_cols);
        for v in m.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let (lower, upper) = gershgorin_bounds(&m, r, GershgorinVariant::NMinusOne).unwrap();
        let gram = khatri_rao_gram(&m, r).unwrap().gram;
        let lam = smallest_eigenvalue(&gram).unwrap();
        let lam_max = gram.symmetric_eigenvalues().max();
        let slack = 1e-10 * lam_max.abs().max(1.0);
        assert!(lower <= lam + slack, "case {case}: lower {lower} vs {lam}");
        assert!(upper >= lam_max - slack, "case {case}: upper {upper} vs {lam_max}");
    }

    // Tight case: equality between the lower bound and the eigenvalue.
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5f64.sqrt(), 0.5f64.sqrt()]);
    let (lower, _) = gershgorin_bounds(&m, 2, GershgorinVariant::NMinusOne).unwrap();
    let lam = smallest_eigenvalue(&khatri_rao_gram(&m, 2).unwrap().gram).unwrap();
    assert!((lower - 0.5).abs() <= 1e-12 && (lam - 0.5).abs() <= 1e-12);
    pass(11, "Gershgorin validity");
}

#[test]
fn criterion_12_lipschitz_properties() {
    // Exactness at the first layer.
    for t in 0..5u64 {
        let arch = Architecture::he(vec![6, 32, 1]).unwrap();
        let ws = init_weights(&arch, 53_000 + t);
        let spec = DataSpec::new(Distribution::Gaussian, 1, 6, 0).unwrap();
        let est = lipschitz_empirical(&ws, 1, 4, &spec, 53_100 + t).unwrap();
        let direct = operator_norm(ws.layer(1)).unwrap();
        assert!((est.estimate - direct).abs() <= 1e-10 * direct.max(1.0));
    }

    // Sampled estimate never exceeds the operator-norm product, and the
    // squared estimate tracks the structural width expression inside a
    // frozen band across widths at fixed depth.
    let spec = DataSpec::new(Distribution::Gaussian, 1, 8, 0).unwrap();
    let mut ratios = Vec::new();
    for &width in &[64usize, 256, 1024] {
        let arch = Architecture::he(vec![8, width, width, width, 1]).unwrap();
        let denom = scaling_expression(FormulaId::LipschitzScaling, &arch, 8, 8, 0.1, 2, 3)
            .unwrap()
            .value;
        for t in 0..5u64 {
            let ws = init_weights(&arch, 54_000 + t);
            let est = lipschitz_empirical(&ws, 3, 64, &spec, 54_100 + t).unwrap();
            let naive = lipschitz_naive_bound(&ws, 3).unwrap();
            assert!(est.estimate <= naive * (1.0 + 1e-12), "width {width} trial {t}");
            let ratio = est.estimate * est.estimate / denom;
            ratios.push((width, t, ratio));
            assert!(
                (0.002..=0.3).contains(&ratio),
                "width {width} trial {t}: ratio {ratio} outside frozen band"
            );
        }
    }
    pass(12, "Lipschitz estimator properties");
}

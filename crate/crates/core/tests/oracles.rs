//! Cross-module oracles: the network against IST, analytic gradients against
//! finite differences, and the data-consistency projector against its
//! algebraic form.

use num_complex::Complex;
use nusrecon::ist::{ist_reconstruct, prepare_problem, IstConfig, ReconProblem, ThresholdMode};
use nusrecon::net::{
    data_consistency, ist_equivalent_weights, modern_forward, modern_forward_batch, threshold_autoset, BnMode,
    LsWeights, ModernMeta, ModernWeights, BN_EPS, CHANNELS,
};
use nusrecon::rng;
use nusrecon::sampling::{self, poisson_gap_schedule, uniform_schedule};
use nusrecon::spectral::{dft_forward, dft_inverse, synthesize_fid, ComplexSeries, Domain, PeakRanges, Shape, ShrinkMode, SyntheticSignalSpec};
use nusrecon::training::{deep_supervision_loss, grad, init_weights, make_sample, Sample};
use rand::Rng;

fn random_fid(n: usize, seed: u64) -> ComplexSeries<f64> {
    let peaks = PeakRanges::default().sample(&mut rng::rng(seed));
    synthesize_fid(&SyntheticSignalSpec { peaks, n, noise_sigma: 1e-3, seed }).unwrap()
}

fn line_problem(n: usize, density: f64, ve: bool, seed: u64) -> ReconProblem<f64> {
    let fid = random_fid(n, seed);
    let count = sampling::count_for_density(n, density).unwrap();
    let s = poisson_gap_schedule(n, count, seed).unwrap();
    prepare_problem(&sampling::extract(&fid, &s).unwrap(), &s, ve).unwrap()
}

#[test]
fn network_with_ist_weights_equals_ist() {
    let mut case = 0u64;
    for n in [16, 64, 256] {
        for density in [0.25, 0.5] {
            for ve in [false, true] {
                case += 1;
                let p = line_problem(n, density, ve, 100 + case);
                let x0 = dft_forward(&p.y_full);
                let lambda = 0.1 * x0.values().iter().map(|v| v.re.abs().max(v.im.abs())).fold(0.0, f64::max);
                let cfg = IstConfig {
                    max_iters: 10,
                    tol: f64::MIN_POSITIVE,
                    threshold: ThresholdMode::Absolute { lambda },
                    shrinkage: ShrinkMode::SeparableReal,
                    final_dc: true,
                };
                let (ist, diag) = ist_reconstruct(&p, &cfg).unwrap();
                assert_eq!(diag.iterations, 10);
                let w = ist_equivalent_weights(&[lambda; CHANNELS], 10, 1).unwrap();
                let net = modern_forward(&p, &w, BnMode::Infer).unwrap().reconstruction;
                let err = ist.values().iter().zip(net.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                assert!(err <= 1e-10, "n={n} density={density} ve={ve}: {err:e}");
            }
        }
    }
}

#[test]
fn zero_threshold_network_is_pure_data_consistency() {
    let p = line_problem(64, 0.25, false, 7);
    let w = ist_equivalent_weights(&[0.0; CHANNELS], 4, 1).unwrap();
    let out = modern_forward(&p, &w, BnMode::Infer).unwrap();
    let want = dft_forward(&p.y_full);
    for x in &out.iterates {
        let err = x.values().iter().zip(want.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }
}

#[test]
fn data_consistency_dual_form_and_projection() {
    for seed in 0..10 {
        let p = line_problem(48, 0.3, seed % 2 == 0, seed);
        let mut r = rng::rng(seed + 50);
        let vals: Vec<Complex<f64>> = (0..p.y_full.len()).map(|_| Complex::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)).collect();
        let x = ComplexSeries::line(vals, Domain::Frequency).unwrap();
        let replaced = data_consistency(&x, &p).unwrap();

        // x + F U^T (y - U F^H x)
        let t = dft_inverse(&x);
        let mask = p.schedule.mask();
        let resid: Vec<Complex<f64>> = (0..t.len())
            .map(|i| if mask[i] { p.y_full.values()[i] - t.values()[i] } else { Complex::new(0.0, 0.0) })
            .collect();
        let corr = dft_forward(&ComplexSeries::time(resid).unwrap());
        for i in 0..x.len() {
            assert!((replaced.values()[i] - (x.values()[i] + corr.values()[i])).norm() < 1e-12);
        }
        let twice = data_consistency(&replaced, &p).unwrap();
        for (a, b) in replaced.values().iter().zip(twice.values()) {
            assert!((a - b).norm() < 1e-12);
        }
        let back = dft_inverse(&replaced);
        for &k in p.schedule.indices() {
            assert!((back.values()[k] - p.y_full.values()[k]).norm() < 1e-12);
        }
    }
}

#[test]
fn autoset_matches_manual_forward() {
    // four spatial positions, only channels 0 and 1 active
    let p = 4;
    let mut feats = vec![0.0; CHANNELS * p];
    let c0 = [0.5, -1.0, 0.25, 2.0];
    let c1 = [-0.3, 0.1, 0.4, -0.2];
    feats[..p].copy_from_slice(&c0);
    feats[p..2 * p].copy_from_slice(&c1);
    let mut w = LsWeights::<f64>::zeros((1, 3));
    // fc1 weight is [out][in]
    w.fc1.weight[0] = 0.7;
    w.fc1.weight[1] = -0.4;
    w.fc1.weight[CHANNELS] = 0.2;
    w.fc1.weight[CHANNELS + 1] = 0.9;
    w.fc1.bias = vec![0.05, -0.1];
    w.bn.scale = vec![1.5, 0.8];
    w.bn.shift = vec![0.1, 0.2];
    w.bn.running_mean = vec![0.3, 0.1];
    w.bn.running_var = vec![0.5, 2.0];
    for c in 0..CHANNELS {
        w.fc2.weight[c * 2] = 0.3 + 0.01 * c as f64;
        w.fc2.weight[c * 2 + 1] = -0.6;
        w.fc2.bias[c] = 0.02;
    }
    let theta = threshold_autoset(&feats, &w, BnMode::Infer).unwrap();

    let g0 = (0.5 + 1.0 + 0.25 + 2.0) / 4.0;
    let g1 = (0.3 + 0.1 + 0.4 + 0.2) / 4.0;
    let z = [0.7 * g0 - 0.4 * g1 + 0.05, 0.2 * g0 + 0.9 * g1 - 0.1];
    let mean = [0.3, 0.1];
    let var = [0.5, 2.0];
    let (scale, shift) = ([1.5, 0.8], [0.1, 0.2]);
    let h: Vec<f64> = (0..2).map(|j| ((z[j] - mean[j]) / (var[j] + BN_EPS).sqrt() * scale[j] + shift[j]).max(0.0)).collect();
    for c in 0..CHANNELS {
        let g = match c {
            0 => g0,
            1 => g1,
            _ => 0.0,
        };
        let a = (0.3 + 0.01 * c as f64) * h[0] - 0.6 * h[1] + 0.02;
        let want = g / (1.0 + (-a).exp());
        assert!((theta[c] - want).abs() < 1e-15, "channel {c}");
        assert!(theta[c] < g || g == 0.0);
    }
}

fn perturbed(meta: ModernMeta, seed: u64) -> ModernWeights<f64> {
    let mut w = init_weights::<f64>(meta, seed);
    let mut r = rng::rng(seed ^ 0xabc);
    let flat: Vec<f64> = w.flatten().iter().map(|v| v + 0.05 * (r.random::<f64>() - 0.5)).collect();
    w.assign(&flat);
    for b in &mut w.blocks {
        b.bn.running_mean = vec![0.1, -0.2];
        b.bn.running_var = vec![0.7, 1.3];
    }
    if let Some(f) = &mut w.fixed_thetas {
        for t in f.iter_mut() {
            for v in t.iter_mut() {
                *v = 0.02 + 0.05 * r.random::<f64>();
            }
        }
    }
    w
}

fn line_samples(n: usize, count: usize, seed: u64) -> Vec<Sample<f64>> {
    (0..count)
        .map(|q| {
            let fid = random_fid(n, seed + q as u64);
            let s = poisson_gap_schedule(n, n / 2, seed + q as u64).unwrap();
            make_sample(fid.values(), &s, false, Vec::new()).unwrap()
        })
        .collect()
}

fn plane_samples(rows: usize, cols: usize, count: usize, seed: u64) -> Vec<Sample<f64>> {
    let shape = Shape::Plane(rows, cols);
    (0..count)
        .map(|q| {
            let mut r = rng::rng(seed + q as u64);
            let vals: Vec<Complex<f64>> = (0..shape.len()).map(|_| Complex::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)).collect();
            let fid = ComplexSeries::new(vals, Domain::Time, shape).unwrap();
            let s = uniform_schedule(shape, shape.len() / 2, seed + q as u64).unwrap();
            let problem = prepare_problem(&sampling::extract(&fid, &s).unwrap(), &s, false).unwrap();
            Sample { problem, label: dft_forward(&fid), peaks: Vec::new() }
        })
        .collect()
}

fn loss_at(w: &ModernWeights<f64>, batch: &[&Sample<f64>], mode: BnMode) -> f64 {
    let problems: Vec<_> = batch.iter().map(|s| &s.problem).collect();
    let outs = modern_forward_batch(&problems, w, mode).unwrap();
    let its: Vec<&[ComplexSeries<f64>]> = outs.iter().map(|o| o.iterates.as_slice()).collect();
    let refs: Vec<_> = batch.iter().map(|s| &s.label).collect();
    deep_supervision_loss(&its, &refs).unwrap()
}

fn check_gradients(w: &ModernWeights<f64>, samples: &[Sample<f64>], mode: BnMode) {
    let batch: Vec<&Sample<f64>> = samples.iter().collect();
    let g = grad(w, &batch, mode).unwrap();
    assert!((g.loss - loss_at(w, &batch, mode)).abs() <= 1e-12 * g.loss.max(1.0));
    let analytic = g.grads.flatten();
    let base = w.flatten();
    let h = 1e-6;
    let mut failures = Vec::new();
    for group in w.param_groups() {
        let mut fd = Vec::new();
        for i in group.range.clone() {
            let mut p = base.clone();
            let mut wp = w.clone();
            p[i] = base[i] + h;
            wp.assign(&p);
            let up = loss_at(&wp, &batch, mode);
            p[i] = base[i] - h;
            wp.assign(&p);
            let down = loss_at(&wp, &batch, mode);
            fd.push((up - down) / (2.0 * h));
        }
        let an = &analytic[group.range.clone()];
        let diff: f64 = an.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = an.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
        // groups whose gradient vanishes identically (a bias in front of
        // batch normalisation) leave only finite-difference noise
        let rel = diff / scale.max(1e-4);
        if rel > 1e-4 {
            failures.push(format!("{}: relative error {rel:e} (|g| = {scale:e})", group.name));
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn gradients_line_adaptive_train() {
    let w = perturbed(ModernMeta::new(2, 1), 1);
    check_gradients(&w, &line_samples(16, 3, 10), BnMode::Train);
}

#[test]
fn gradients_line_adaptive_infer() {
    // seed 0 puts a shrinkage kink within 1e-6 of a feature; these do not
    for seed in 1..4 {
        let w = perturbed(ModernMeta::new(2, 1), 2 + seed);
        check_gradients(&w, &line_samples(16, 2, 20 + seed), BnMode::Infer);
    }
}

#[test]
fn gradients_plane() {
    let w = perturbed(ModernMeta::new(2, 2), 3);
    check_gradients(&w, &plane_samples(4, 5, 2, 30), BnMode::Train);
}

#[test]
fn gradients_non_adaptive() {
    let mut meta = ModernMeta::new(2, 1);
    meta.non_adaptive = true;
    let w = perturbed(meta, 4);
    check_gradients(&w, &line_samples(16, 2, 40), BnMode::Train);
}

#[test]
fn gradients_without_final_dc() {
    let mut meta = ModernMeta::new(2, 1);
    meta.final_dc = false;
    let w = perturbed(meta, 5);
    check_gradients(&w, &line_samples(16, 2, 50), BnMode::Train);
}

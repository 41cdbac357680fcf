use super::*;
use crate::fixtures::{chain_counterexample, seeded_parametrization};
use crate::linalg::c;

fn grid(t_end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect()
}

fn single() -> (PositiveParametrization, ExponentialBcf) {
    let p = PositiveParametrization::new(vec![c(1.0, 2.0)], vec![c(1.0, 0.0)]).unwrap();
    let b = amplitudes_from_residues(&p);
    (p, b)
}

fn sorted_by_im(bcf: &ExponentialBcf) -> Vec<(Complex64, Complex64)> {
    let mut v: Vec<_> = bcf
        .lambdas()
        .iter()
        .copied()
        .zip(bcf.amplitudes().iter().copied())
        .collect();
    v.sort_by(|a, b| a.0.im.total_cmp(&b.0.im));
    v
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

fn fd_check<P: LeastSquares>(problem: &P, x: &DVector<f64>) {
    let (_, jac) = problem.jacobian(x);
    for q in 0..problem.n_params() {
        let h = 1e-6 * (1.0 + x[q].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[q] += h;
        xm[q] -= h;
        let fd = (problem.residuals(&xp) - problem.residuals(&xm)) / (2.0 * h);
        let err = (&fd - jac.column(q)).amax();
        assert!(err < 1e-6 * (1.0 + fd.amax()), "column {q}: {err:e}");
    }
}

#[test]
fn physical_jacobian_matches_finite_differences() {
    let p = seeded_parametrization(3, 5);
    let target = ExponentialBcf::new(vec![c(0.7, 1.0)], vec![c(0.3, 0.0)]).unwrap();
    let samples = BcfSamples::from_bcf(&target, grid(4.0, 30)).unwrap();
    let problem = PhysicalProblem(Problem::new(&samples, Weighting::Exponential { rate: 0.3 }, 3));
    let x = PhysicalProblem::pack(p.residues(), p.lambdas());
    fd_check(&problem, &x);
}

#[test]
fn direct_jacobian_matches_finite_differences() {
    let target = chain_counterexample();
    let samples = BcfSamples::from_bcf(&target, grid(4.0, 30)).unwrap();
    let problem = DirectProblem(Problem::new(&samples, Weighting::Uniform, 3));
    let g = [c(0.3, 0.2), c(-0.1, -0.5), c(0.4, 0.3)];
    let l = [c(0.5, 1.0), c(1.2, -2.0), c(2.0, 0.5)];
    fd_check(&problem, &DirectProblem::pack(&g, &l));
}

#[test]
fn packing_round_trips() {
    let p = seeded_parametrization(3, 2);
    let problem_samples = BcfSamples::from_fn(grid(1.0, 5), |_| c(0.0, 0.0)).unwrap();
    let problem = PhysicalProblem(Problem::new(&problem_samples, Weighting::Uniform, 3));
    let (r, l) = problem.unpack(&PhysicalProblem::pack(p.residues(), p.lambdas()));
    // Same amplitudes, residues up to one global phase.
    let g0 = p.amplitudes();
    let g1 = amplitudes(&r, &l);
    for (a, b) in g0.iter().zip(&g1) {
        assert!((a - b).norm() < 1e-12);
    }
    assert_eq!(r[0].im, 0.0);
}

#[test]
fn physical_recovers_single_exponential() {
    let (_, target) = single();
    // G = |r|^2 / (2 Re lambda) for one term.
    let expected_g = c(1.0 / (2.0 * 1.0), 0.0);
    let samples = BcfSamples::from_bcf(&target, grid(5.0, 200)).unwrap();
    let fit = fit_physical(&samples, 1, &FitConfig::default()).unwrap();
    assert!(rel(fit.bcf.amplitudes()[0], expected_g) < 1e-6);
    assert!(rel(fit.bcf.lambdas()[0], c(1.0, 2.0)) < 1e-6);
    assert_eq!(fit.is_physical(), Some(true));
    assert!(fit.converged);
}

#[test]
fn zero_target_gives_zero_model() {
    let samples = BcfSamples::from_fn(grid(5.0, 50), |_| c(0.0, 0.0)).unwrap();
    for fit in [
        fit_physical(&samples, 1, &FitConfig::default()).unwrap(),
        fit_direct(&samples, 1, &FitConfig::default()).unwrap(),
    ] {
        assert!(fit.residual_norm < 1e-12, "{}", fit.residual_norm);
        assert!(fit.bcf.amplitudes().iter().all(|g| g.norm() < 1e-8));
    }
}

#[test]
fn physical_fit_of_two_term_fixture() {
    let target = chain_counterexample();
    let taus = grid(10.0, 200);
    let samples = BcfSamples::from_bcf(&target, taus.clone()).unwrap();
    let fit = fit_physical(&samples, 2, &FitConfig::default()).unwrap();
    let worst = taus
        .iter()
        .map(|&t| rel(fit.bcf.eval(t), target.eval(t)))
        .fold(0.0, f64::max);
    assert!(worst < 1e-4, "max relative error {worst:e}");
    assert_eq!(fit.is_physical(), Some(true));
}

#[test]
fn direct_recovers_single_exponential() {
    let (_, target) = single();
    let samples = BcfSamples::from_bcf(&target, grid(5.0, 200)).unwrap();
    let fit = fit_direct(&samples, 1, &FitConfig::default()).unwrap();
    assert!(rel(fit.bcf.amplitudes()[0], c(0.5, 0.0)) < 1e-6);
    assert!(rel(fit.bcf.lambdas()[0], c(1.0, 2.0)) < 1e-6);
}

#[test]
fn direct_splits_damped_cosine() {
    let samples =
        BcfSamples::from_fn(grid(10.0, 400), |t| c((-t).exp() * (5.0 * t).cos(), 0.0)).unwrap();
    let fit = fit_direct(&samples, 2, &FitConfig::default()).unwrap();
    // cos(5t) = (e^{5it} + e^{-5it}) / 2
    let terms = sorted_by_im(&fit.bcf);
    assert!(rel(terms[0].0, c(1.0, -5.0)) < 1e-6);
    assert!(rel(terms[1].0, c(1.0, 5.0)) < 1e-6);
    assert!(rel(terms[0].1, c(0.5, 0.0)) < 1e-6);
    assert!(rel(terms[1].1, c(0.5, 0.0)) < 1e-6);
}

/// `G = (1, g2)`, `lambda = (1, 2)`: `J(omega) ~ 2 (1 + 2 g2) / omega^2` at large
/// `omega`, so `g2 = -0.5` is the boundary and `g2 = -0.6` is unphysical.
fn adversarial() -> ExponentialBcf {
    ExponentialBcf::new(vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(1.0, 0.0), c(-0.6, 0.0)]).unwrap()
}

#[test]
fn adversarial_target_separates_the_arms() {
    let target = adversarial();
    assert!(target.spectral_density(50.0).unwrap() < 0.0);
    let samples = BcfSamples::from_bcf(&target, grid(8.0, 200)).unwrap();
    let direct = fit_direct(&samples, 2, &FitConfig::default()).unwrap();
    assert!(direct.bcf.hermiticity_defect() < 1e-12);
    assert!(direct.residual_norm < 1e-8, "{}", direct.residual_norm);
    assert_eq!(direct.is_physical(), Some(false));
    let physical = fit_physical(&samples, 2, &FitConfig::default()).unwrap();
    assert_eq!(physical.is_physical(), Some(true));
    assert!(physical.residual_norm > direct.residual_norm);
}

#[test]
fn compare_on_single_lorentzian() {
    let (_, target) = single();
    let samples = BcfSamples::from_bcf(&target, grid(5.0, 200)).unwrap();
    let report = compare_ansatz(&samples, 1);
    assert!(report.equal_parameter_counts);
    for arm in [&report.physical, &report.direct] {
        assert!(arm.residual_norm().unwrap() < 1e-8);
        assert_eq!(arm.is_physical(), Some(true));
    }
}

#[test]
fn compare_on_ohmic_like_target() {
    let samples = BcfSamples::from_fn(grid(20.0, 200), |t| {
        let z = c(1.0, t);
        1.0 / (z * z)
    })
    .unwrap();
    let report = compare_ansatz(&samples, 3);
    assert!(report.physical.residual_norm().unwrap().is_finite());
    assert!(report.direct.residual_norm().unwrap().is_finite());
    assert_eq!(report.physical.is_physical(), Some(true));
}

#[test]
fn compare_on_zero_target() {
    let samples = BcfSamples::from_fn(grid(5.0, 50), |_| c(0.0, 0.0)).unwrap();
    let report = compare_ansatz(&samples, 2);
    for arm in [&report.physical, &report.direct] {
        let res = arm.result.as_ref().unwrap();
        assert!(res.bcf.amplitudes().iter().all(|g| g.norm() < 1e-8));
    }
}

#[test]
fn parameter_counts_match_vector_lengths() {
    let samples = BcfSamples::from_fn(grid(1.0, 5), |_| c(0.0, 0.0)).unwrap();
    for n in 1..6 {
        let phys = PhysicalProblem(Problem::new(&samples, Weighting::Uniform, n));
        let dir = DirectProblem(Problem::new(&samples, Weighting::Uniform, n));
        assert_eq!(phys.n_params(), dir.n_params());
        assert_eq!(phys.n_params(), parameter_count(Ansatz::Physical, n).free);
        assert_eq!(dir.n_params(), parameter_count(Ansatz::Direct, n).free);
        assert_eq!(parameter_count(Ansatz::Direct, n).raw, 4 * n);
    }
}

#[test]
fn objective_decreases_monotonically() {
    let target = amplitudes_from_residues(&seeded_parametrization(2, 11));
    let samples = BcfSamples::from_bcf(&target, grid(6.0, 120)).unwrap();
    for fit in [
        fit_physical(&samples, 2, &FitConfig::default()).unwrap(),
        fit_direct(&samples, 2, &FitConfig::default()).unwrap(),
    ] {
        assert!(fit.history.len() > 1);
        assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn residual_norm_is_recomputed_from_params() {
    let samples = BcfSamples::from_fn(grid(10.0, 100), |t| c((-0.5 * t).exp(), 0.1 * t.sin())).unwrap();
    let fit = fit_physical(&samples, 1, &FitConfig::default()).unwrap();
    let FitParams::Physical(p) = &fit.params else {
        panic!("wrong arm")
    };
    let direct_sum: f64 = samples
        .taus()
        .iter()
        .zip(samples.values())
        .map(|(&t, y)| {
            let a: Complex64 = p
                .lambdas()
                .iter()
                .zip(p.amplitudes())
                .map(|(l, g)| g * (-l * t).exp())
                .sum();
            (a - y).norm_sqr()
        })
        .sum();
    assert!((fit.residual_norm - direct_sum.sqrt()).abs() < 1e-12);
    assert!(fit.residual_norm > 0.0);
}

#[test]
fn equivariant_under_time_rescaling() {
    let s = 2.0;
    let p = seeded_parametrization(2, 3);
    let target = amplitudes_from_residues(&p);
    let samples = BcfSamples::from_bcf(&target, grid(6.0, 80)).unwrap();
    let scaled = samples.rescaled(s).unwrap();
    // lambda -> lambda / s, r -> r / sqrt(s) leaves every G_j unchanged.
    let p_scaled = PositiveParametrization::new(
        p.lambdas().iter().map(|l| l / s).collect(),
        p.residues().iter().map(|r| r / s.sqrt()).collect(),
    )
    .unwrap();
    let probe = amplitudes_from_residues(&seeded_parametrization(2, 4));
    let probe_scaled = ExponentialBcf::new(
        probe.lambdas().iter().map(|l| l / s).collect(),
        probe.amplitudes().to_vec(),
    )
    .unwrap();
    let a = residual_norm(&samples, &probe, Weighting::Uniform);
    let b = residual_norm(&scaled, &probe_scaled, Weighting::Uniform);
    assert!((a - b).abs() < 1e-12 * (1.0 + a));
    assert!(residual_norm(&scaled, &amplitudes_from_residues(&p_scaled), Weighting::Uniform) < 1e-12);

    let noisy = BcfSamples::from_fn(grid(6.0, 80), |t| target.eval(t) + c(0.01 * (3.0 * t).sin(), 0.0)).unwrap();
    let f1 = fit_physical(&noisy, 2, &FitConfig::default()).unwrap();
    let f2 = fit_physical(&noisy.rescaled(s).unwrap(), 2, &FitConfig::default()).unwrap();
    assert!(
        (f1.residual_norm - f2.residual_norm).abs() < 1e-6 * f1.residual_norm,
        "{} vs {}",
        f1.residual_norm,
        f2.residual_norm
    );
}

#[test]
fn deterministic_for_fixed_seed() {
    let target = amplitudes_from_residues(&seeded_parametrization(2, 8));
    let samples = BcfSamples::from_fn(grid(6.0, 60), |t| target.eval(t) + c(0.0, 0.01 * t.cos())).unwrap();
    let cfg = FitConfig {
        seed: 42,
        ..FitConfig::default()
    };
    let a = fit_direct(&samples, 2, &cfg).unwrap();
    let b = fit_direct(&samples, 2, &cfg).unwrap();
    assert_eq!(a.bcf, b.bcf);
    assert_eq!(a.best_restart, b.best_restart);
}

#[test]
fn rejects_bad_input() {
    let samples = BcfSamples::from_fn(grid(1.0, 5), |_| c(1.0, 0.0)).unwrap();
    assert_eq!(
        fit_physical(&samples, 0, &FitConfig::default()).unwrap_err(),
        Error::InvalidN(0)
    );
    assert!(matches!(
        fit_direct(&samples, 0, &FitConfig::default()),
        Err(Error::InvalidN(0))
    ));
    assert!(BcfSamples::new(vec![0.0, 0.0], vec![c(1.0, 0.0); 2], None).is_err());
    assert!(BcfSamples::new(vec![-1.0, 0.0], vec![c(1.0, 0.0); 2], None).is_err());
    assert!(BcfSamples::new(vec![0.0, 1.0], vec![c(1.0, 0.0)], None).is_err());
    assert!(BcfSamples::new(vec![0.0, 1.0], vec![c(1.0, 0.0); 2], Some(vec![1.0, 0.0])).is_err());
    assert!(BcfSamples::new(vec![], vec![], None).is_err());
}

#[test]
fn json_output_uses_bcf_schema() {
    let (_, target) = single();
    let samples = BcfSamples::from_bcf(&target, grid(5.0, 50)).unwrap();
    let fit = fit_physical(&samples, 1, &FitConfig::default()).unwrap();
    let v = serde_json::to_value(&fit).unwrap();
    let back: ExponentialBcf = serde_json::from_value(v.clone()).unwrap();
    assert_eq!(back, fit.bcf);
    assert!(v.get("residues").is_some());
    assert!(v.get("residual_norm").is_some());
}

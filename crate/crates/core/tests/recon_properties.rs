use vccrecon::pattern::{apply_pattern, PartialFourier, SamplingPattern};
use vccrecon::phantom::{make_phantom, simulate_kspace, PhantomParams, PhantomTruth};
use vccrecon::pipeline::{self, Calibration, RunConfig};
use vccrecon::recon::{partial_fourier_recon, solve, synthesize_coil_images, ForwardModel, SolveMode};
use vccrecon::validate::nrmse;
use vccrecon::{KTensor, SensitivityMaps};

fn smooth_truth() -> PhantomTruth {
    make_phantom(&PhantomParams::default()).unwrap()
}

fn recon_coils(truth: &PhantomTruth, pattern: &SamplingPattern, mode: SolveMode, lt: f64, li: f64) -> KTensor {
    let maps = SensitivityMaps::from_coil_maps(&truth.phased_maps().unwrap()).unwrap();
    let ksp = apply_pattern(&simulate_kspace(truth).unwrap(), pattern).unwrap();
    let model = ForwardModel::new(maps.clone(), pattern.clone(), mode, lt, li).unwrap();
    let out = solve(&model, &ksp, 200, 1e-8).unwrap();
    synthesize_coil_images(&out.image, &maps).unwrap()
}

#[test]
fn full_sampling_with_exact_maps_recovers_image() {
    let truth = smooth_truth();
    let pattern = SamplingPattern::full(96, 96).unwrap();
    let coils = recon_coils(&truth, &pattern, SolveMode::Complex, 0.0, 0.0);
    let err = nrmse(&coils, &truth.coil_images().unwrap(), &truth.support).unwrap();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn exact_maps_at_r3_stay_within_one_percent() {
    let truth = smooth_truth();
    let pattern = SamplingPattern::new(96, 96, 3, (24, 24), PartialFourier::FULL).unwrap();
    let interior = truth.smooth_support(0);
    let coils = recon_coils(&truth, &pattern, SolveMode::Complex, 1e-4, 0.0);
    let err = nrmse(&coils, &truth.coil_images().unwrap(), &interior).unwrap();
    assert!(err < 0.01, "{err}");
}

#[test]
fn strong_imaginary_penalty_matches_real_constraint() {
    let truth = smooth_truth();
    let pattern = SamplingPattern::new(96, 96, 3, (24, 24), PartialFourier::FULL).unwrap();
    let real = recon_coils(&truth, &pattern, SolveMode::RealConstrained, 1e-4, 0.0);
    let soft = recon_coils(&truth, &pattern, SolveMode::ImagRegularized, 1e-4, 1.0);
    let gap = nrmse(&soft, &real, &truth.support).unwrap();
    assert!(gap < 0.01, "{gap}");
}

#[test]
fn partial_fourier_real_recon_with_exact_maps() {
    let truth = smooth_truth();
    let pf = PartialFourier::new(5, 8).unwrap();
    let pattern = SamplingPattern::new(96, 96, 3, (24, 24), pf).unwrap();
    let maps = SensitivityMaps::from_coil_maps(&truth.phased_maps().unwrap()).unwrap();
    let ksp = apply_pattern(&simulate_kspace(&truth).unwrap(), &pattern).unwrap();
    let model = ForwardModel::new(maps.clone(), pattern, SolveMode::RealConstrained, 1e-4, 0.0).unwrap();
    let out = partial_fourier_recon(&model, &ksp, 200, 1e-8).unwrap();
    let coils = synthesize_coil_images(&out.image, &maps).unwrap();
    let err = nrmse(&coils, &truth.coil_images().unwrap(), &truth.support).unwrap();
    assert!(err < 0.01, "{err}");
    assert!(out.image.data().iter().all(|z| z.im == 0.0));
}

#[test]
fn centered_maps_give_nearly_real_complex_recon() {
    let config = RunConfig { mode: SolveMode::Complex, ..RunConfig::default() };
    let out = pipeline::run(&config).unwrap();
    let (mut re, mut im) = (0.0f64, 0.0f64);
    for (z, &s) in out.recon.image.data().iter().zip(&out.truth.support) {
        if s {
            re += (z.re as f64).powi(2);
            im += (z.im as f64).powi(2);
        }
    }
    assert!(im / (re + im) < 0.02, "imaginary share {}", im / (re + im));
}

#[test]
fn pipeline_is_deterministic() {
    let config = RunConfig { grid: 48, ncoils: 4, acs: 16, kernel: 5, iters: 30, ..RunConfig::default() };
    let a = pipeline::run(&config).unwrap();
    let b = pipeline::run(&config).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.coils.data(), b.coils.data());
    let da = tempfile::tempdir().unwrap();
    let db = tempfile::tempdir().unwrap();
    assert_eq!(a.write(da.path()).unwrap(), b.write(db.path()).unwrap());
}

#[test]
fn frozen_fixtures() {
    let blobs = pipeline::run(&RunConfig { hf_blobs: 3, maps: 2, ..RunConfig::default() }).unwrap();
    let v = blobs.metric("nrmse").unwrap();
    assert!((v - 0.001327).abs() < 1e-3, "two-map blob nrmse {v}");

    let smooth = pipeline::run(&RunConfig::default()).unwrap();
    let v = smooth.metric("nrmse").unwrap();
    assert!(v < 0.0006, "smooth nrmse {v}");
    assert_eq!(smooth.metric("nkernels"), Some(80.0));

    let pf = PartialFourier::new(5, 8).unwrap();
    let half = pipeline::run(&RunConfig { pf, ..RunConfig::default() }).unwrap();
    let v = half.metric("nrmse").unwrap();
    assert!(v < 0.00185, "partial Fourier nrmse {v}");
    assert_eq!(half.config.calib, Calibration::Vcc);
}

mod common;

use common::{coil_tensor, random_complex, real_dot};
use proptest::prelude::*;
use vccrecon::phantom::{dilate, make_phantom, simulate_kspace, PhantomParams};
use vccrecon::pipeline::{calibrate_maps, Calibration};
use vccrecon::validate::{project, ProjectionMode};
use vccrecon::{Dim, KTensor, SensitivityMaps};

const N: usize = 4;

fn maps(nc: usize, ns: usize, seed: u64) -> SensitivityMaps {
    let dims = vec![(Dim::X, N), (Dim::Y, N), (Dim::Coil, nc), (Dim::Set, ns)];
    let t = KTensor::new(dims, random_complex(N * N * nc * ns, seed)).unwrap();
    SensitivityMaps::new(t, vec![1.0; N * N * ns]).unwrap()
}

fn apply(m: &KTensor, s: &SensitivityMaps, mode: ProjectionMode) -> KTensor {
    project(m, s, mode, None).unwrap().0
}

fn pixel_residuals(m: &KTensor, s: &SensitivityMaps, mode: ProjectionMode) -> Vec<f32> {
    project(m, s, mode, None).unwrap().1.combined
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projector_is_idempotent(seed in 0u64..1000, nc in 2usize..5, ns in 1usize..3, real in any::<bool>()) {
        let mode = if real { ProjectionMode::Real } else { ProjectionMode::Complex };
        let s = maps(nc, ns, seed);
        let p = apply(&coil_tensor(N, N, nc, seed + 7), &s, mode);
        let pp = apply(&p, &s, mode);
        for (a, b) in p.data().iter().zip(pp.data()) {
            prop_assert!((a - b).norm() < 1e-4);
        }
    }

    #[test]
    fn projector_is_self_adjoint(seed in 0u64..1000, nc in 2usize..5, ns in 1usize..3, real in any::<bool>()) {
        let mode = if real { ProjectionMode::Real } else { ProjectionMode::Complex };
        let s = maps(nc, ns, seed);
        let a = coil_tensor(N, N, nc, seed + 1);
        let b = coil_tensor(N, N, nc, seed + 2);
        let lhs = real_dot(&apply(&a, &s, mode).to_c64(), &b.to_c64());
        let rhs = real_dot(&a.to_c64(), &apply(&b, &s, mode).to_c64());
        prop_assert!((lhs - rhs).abs() < 1e-4 * (1.0 + lhs.abs()));
    }

    #[test]
    fn residual_is_orthogonal_to_projection(seed in 0u64..1000, nc in 2usize..5, real in any::<bool>()) {
        let mode = if real { ProjectionMode::Real } else { ProjectionMode::Complex };
        let s = maps(nc, 2, seed);
        let m = coil_tensor(N, N, nc, seed + 3);
        let p = apply(&m, &s, mode).to_c64();
        let r: Vec<_> = m.to_c64().iter().zip(&p).map(|(a, b)| a - b).collect();
        prop_assert!(real_dot(&r, &p).abs() < 1e-4);
    }

    #[test]
    fn real_residual_dominates_complex(seed in 0u64..1000, nc in 2usize..5, ns in 1usize..3) {
        let s = maps(nc, ns, seed);
        let m = coil_tensor(N, N, nc, seed + 4);
        let re = pixel_residuals(&m, &s, ProjectionMode::Real);
        let co = pixel_residuals(&m, &s, ProjectionMode::Complex);
        for (r, c) in re.iter().zip(&co) {
            prop_assert!(*r >= *c - 1e-5);
        }
    }

    #[test]
    fn more_sets_never_increase_residual(seed in 0u64..1000, nc in 3usize..6, real in any::<bool>()) {
        let mode = if real { ProjectionMode::Real } else { ProjectionMode::Complex };
        let two = maps(nc, 2, seed);
        let one = two.first_sets(1).unwrap();
        let m = coil_tensor(N, N, nc, seed + 5);
        let r2 = pixel_residuals(&m, &two, mode);
        let r1 = pixel_residuals(&m, &one, mode);
        for (a, b) in r2.iter().zip(&r1) {
            prop_assert!(*a <= *b + 1e-5);
        }
    }
}

#[test]
fn single_map_residual_concentrates_on_blobs() {
    let truth = make_phantom(&PhantomParams { hf_blobs: 3, ..PhantomParams::default() }).unwrap();
    let ksp = simulate_kspace(&truth).unwrap();
    let cal = calibrate_maps(&ksp, Calibration::Vcc, 24, 6, 0.001, 0.85, 1).unwrap();
    let coils = truth.coil_images().unwrap();
    let (_, err) = project(&coils, &cal.maps, ProjectionMode::Real, Some(&truth.support)).unwrap();
    let near = dilate(&truth.blob_mask(), truth.n, 2);
    let energy = |keep: &dyn Fn(usize) -> bool| -> f64 {
        err.combined
            .iter()
            .enumerate()
            .filter(|(i, _)| truth.support[*i] && keep(*i))
            .map(|(_, v)| (*v as f64).powi(2))
            .sum()
    };
    let total = energy(&|_| true);
    let on_blobs = energy(&|i| near[i]);
    assert!(on_blobs / total >= 0.7, "blob share {}", on_blobs / total);
}

#[test]
fn vcc_maps_beat_direct_maps_on_smooth_phantom() {
    let truth = make_phantom(&PhantomParams::default()).unwrap();
    let ksp = simulate_kspace(&truth).unwrap();
    let coils = truth.coil_images().unwrap();
    let residual = |calib| {
        let cal = calibrate_maps(&ksp, calib, 24, 6, 0.001, 0.85, 1).unwrap();
        project(&coils, &cal.maps, ProjectionMode::Real, Some(&truth.support)).unwrap().1.scalar
    };
    let vcc = residual(Calibration::Vcc);
    let direct = residual(Calibration::Direct);
    assert!(vcc < 0.03 && vcc < direct, "vcc {vcc} direct {direct}");
}

#[test]
fn wider_calibration_shrinks_two_map_residual() {
    let truth = make_phantom(&PhantomParams { hf_blobs: 3, ..PhantomParams::default() }).unwrap();
    let ksp = simulate_kspace(&truth).unwrap();
    let coils = truth.coil_images().unwrap();
    let residual = |acs, k| {
        let cal = calibrate_maps(&ksp, Calibration::Vcc, acs, k, 0.001, 0.85, 2).unwrap();
        project(&coils, &cal.maps, ProjectionMode::Real, Some(&truth.support)).unwrap().1.scalar
    };
    let narrow = residual(16, 6);
    let wide = residual(40, 10);
    assert!(wide < narrow, "acs40 {wide} acs16 {narrow}");
}

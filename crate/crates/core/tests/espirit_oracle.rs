mod common;

use common::{coil_tensor, dense_eigen, dense_operator, principal_angle, random_tensor};
use vccrecon::espirit::{calibrate, eigen_maps};
use vccrecon::fft::fftc;
use vccrecon::pattern::extract_center;
use vccrecon::phantom::{make_phantom, simulate_kspace, PhantomParams};
use vccrecon::{Dim, KTensor};

const GAP: f64 = 1e-3;

fn compare_with_oracle(acs: &KTensor, k: usize, n: usize) {
    let sub = calibrate(acs, k, 0.001).unwrap();
    let nc = sub.ncoils();
    let maps = eigen_maps(&sub, n, n, nc).unwrap();
    let mut worst_val = 0.0f64;
    let mut worst_angle = 0.0f64;
    for qy in 0..n {
        for qx in 0..n {
            let pixel = qx + n * qy;
            let oracle = dense_eigen(&dense_operator(&sub, n, n, (qx, qy)));
            for s in 0..nc {
                let ours = maps.eigenvalue(pixel, s) as f64;
                worst_val = worst_val.max((ours - oracle[s].0).abs());
                let separated = (0..nc)
                    .filter(|&t| t != s)
                    .all(|t| (oracle[t].0 - oracle[s].0).abs() > GAP);
                if separated {
                    let angle = principal_angle(&maps.coil_vector(pixel, s), &oracle[s].1);
                    worst_angle = worst_angle.max(angle);
                }
            }
        }
    }
    assert!(worst_val < 1e-4, "eigenvalue deviation {worst_val}");
    assert!(worst_angle < 1e-3, "principal angle {worst_angle}");
}

#[test]
fn matches_dense_oracle_on_phantom_acs() {
    let truth = make_phantom(&PhantomParams { grid: 32, ncoils: 2, hf_blobs: 0, seed: 3 }).unwrap();
    let ksp = simulate_kspace(&truth).unwrap();
    let acs = extract_center(&ksp, 12, 12).unwrap();
    compare_with_oracle(&acs, 4, 16);
}

#[test]
fn matches_dense_oracle_on_random_acs() {
    compare_with_oracle(&coil_tensor(8, 8, 2, 11), 3, 16);
}

#[test]
fn matches_dense_oracle_with_three_coils() {
    compare_with_oracle(&coil_tensor(10, 10, 3, 5), 4, 16);
}

#[test]
fn single_coil_with_full_kernel_basis_has_unit_eigenvalue() {
    let img = random_tensor(vec![(Dim::X, 16), (Dim::Y, 16), (Dim::Coil, 1)], 9);
    let ksp = fftc(&img, &[Dim::X, Dim::Y]).unwrap();
    let acs = extract_center(&ksp, 12, 12).unwrap();
    let sub = calibrate(&acs, 4, 1e-9).unwrap();
    assert_eq!(sub.nkernels(), 16);
    let maps = eigen_maps(&sub, 16, 16, 1).unwrap();
    for q in 0..256 {
        assert!((maps.eigenvalue(q, 0) - 1.0).abs() < 1e-5);
        let v = maps.coil_vector(q, 0)[0];
        assert!((v.re - 1.0).abs() < 1e-6 && v.im.abs() < 1e-6, "{v}");
    }
}

#[test]
fn physical_phantom_kernel_count_is_frozen() {
    let truth = make_phantom(&PhantomParams::default()).unwrap();
    let ksp = simulate_kspace(&truth).unwrap();
    let acs = extract_center(&ksp, 24, 24).unwrap();
    let sub = calibrate(&acs, 6, 0.001).unwrap();
    assert_eq!(sub.nkernels(), 64);
    assert!(sub.nkernels() < 6 * 6 * 8 / 2);
}

#[test]
fn kernels_are_orthonormal_and_singular_values_sorted() {
    let sub = calibrate(&coil_tensor(12, 12, 3, 21), 4, 0.01).unwrap();
    for a in 0..sub.nkernels() {
        for b in 0..sub.nkernels() {
            let dot: vccrecon::num_complex::Complex64 =
                sub.kernel(a).iter().zip(sub.kernel(b)).map(|(x, y)| x.conj() * y).sum();
            let expect = if a == b { 1.0 } else { 0.0 };
            assert!((dot.re - expect).abs() < 1e-9 && dot.im.abs() < 1e-9);
        }
    }
    let sv = sub.singular_values();
    assert!(sv.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn eigenvalues_stay_in_unit_interval_and_maps_are_normalized() {
    let truth = make_phantom(&PhantomParams { grid: 32, ncoils: 4, hf_blobs: 0, seed: 1 }).unwrap();
    let ksp = simulate_kspace(&truth).unwrap();
    let sub = calibrate(&extract_center(&ksp, 12, 12).unwrap(), 4, 0.001).unwrap();
    let maps = eigen_maps(&sub, 32, 32, 2).unwrap();
    for q in 0..32 * 32 {
        let (l0, l1) = (maps.eigenvalue(q, 0), maps.eigenvalue(q, 1));
        assert!(l0 >= l1 && l1 >= -1e-4 && l0 <= 1.0 + 1e-4);
        let norm: f64 = maps.coil_vector(q, 0).iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-5);
    }
}

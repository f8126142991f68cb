//! End-to-end runs: phantom, sampling, calibration, phase centering,
//! reconstruction and metrics, plus the reproducibility manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::espirit::{self, calibrate, eigen_maps, soft_weight};
use crate::io::write_ktensor;
use crate::maps::SensitivityMaps;
use crate::pattern::{apply_pattern, extract_center, PartialFourier, SamplingPattern};
use crate::phantom::{make_phantom, simulate_kspace, PhantomParams, PhantomTruth};
use crate::recon::{self, solve, synthesize_coil_images, ForwardModel, ReconResult, SolveMode};
use crate::tensor::{Dim, KTensor};
use crate::validate::{diff_image, direct_maps, nrmse, project, rss, ProjectionMode};
use crate::vcc::{align_sign, center_phase_all, make_vcc, PhaseMap};

/// How sensitivity maps are obtained from the ACS data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Calibration {
    /// ESPIRiT on physical plus virtual conjugate channels, phase-centered.
    Vcc,
    /// ESPIRiT on the physical channels only.
    Espirit,
    /// Low-resolution maps from the k-space center.
    Direct,
}

impl Calibration {
    pub fn name(self) -> &'static str {
        match self {
            Calibration::Vcc => "vcc",
            Calibration::Espirit => "espirit",
            Calibration::Direct => "direct",
        }
    }
}

impl std::str::FromStr for Calibration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vcc" => Ok(Calibration::Vcc),
            "espirit" => Ok(Calibration::Espirit),
            "direct" => Ok(Calibration::Direct),
            _ => Err(Error::param(format!("unknown calibration `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: usize,
    pub ncoils: usize,
    pub hf_blobs: usize,
    pub seed: u64,
    pub kernel: usize,
    pub thresh: f64,
    pub crop: f64,
    pub acs: usize,
    pub accel: usize,
    pub pf: PartialFourier,
    pub maps: usize,
    pub calib: Calibration,
    pub mode: SolveMode,
    pub lambda: f64,
    pub lambda_imag: f64,
    pub iters: usize,
    pub tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: 96,
            ncoils: 8,
            hf_blobs: 0,
            seed: 42,
            kernel: espirit::DEFAULT_KERNEL,
            thresh: espirit::DEFAULT_THRESHOLD,
            crop: espirit::DEFAULT_CROP,
            acs: 24,
            accel: 3,
            pf: PartialFourier::FULL,
            maps: 1,
            calib: Calibration::Vcc,
            mode: SolveMode::RealConstrained,
            lambda: recon::DEFAULT_LAMBDA_TIKHONOV,
            lambda_imag: recon::DEFAULT_LAMBDA_IMAG,
            iters: recon::DEFAULT_MAX_ITER,
            tol: recon::DEFAULT_TOL,
        }
    }
}

impl RunConfig {
    pub fn phantom_params(&self) -> PhantomParams {
        PhantomParams {
            grid: self.grid,
            ncoils: self.ncoils,
            hf_blobs: self.hf_blobs,
            seed: self.seed,
        }
    }

    pub fn pattern(&self) -> Result<SamplingPattern> {
        SamplingPattern::new(self.grid, self.grid, self.accel, (self.acs, self.acs), self.pf)
    }

    /// `key=value` lines, one per field, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("grid", self.grid.to_string()),
            ("ncoils", self.ncoils.to_string()),
            ("hf_blobs", self.hf_blobs.to_string()),
            ("seed", self.seed.to_string()),
            ("kernel", self.kernel.to_string()),
            ("thresh", self.thresh.to_string()),
            ("crop", self.crop.to_string()),
            ("acs", self.acs.to_string()),
            ("accel", self.accel.to_string()),
            ("pf", self.pf.to_string()),
            ("maps", self.maps.to_string()),
            ("calib", self.calib.name().to_string()),
            ("mode", self.mode.name().to_string()),
            ("lambda", self.lambda.to_string()),
            ("lambda_imag", self.lambda_imag.to_string()),
            ("iters", self.iters.to_string()),
            ("tol", self.tol.to_string()),
        ]
    }
}

/// Maps plus what was learned while estimating them.
#[derive(Clone, Debug)]
pub struct Calibrated {
    /// Maps before soft weighting, eigenvalues included.
    pub raw: SensitivityMaps,
    /// Soft-weighted maps used for projection and reconstruction.
    pub maps: SensitivityMaps,
    pub phases: Vec<PhaseMap>,
    pub nkernels: usize,
}

/// Estimates `nsets` map sets from the ACS block of `ksp`.
pub fn calibrate_maps(
    ksp: &KTensor,
    calib: Calibration,
    acs: usize,
    kernel: usize,
    thresh: f64,
    crop: f64,
    nsets: usize,
) -> Result<Calibrated> {
    let (nx, ny, _) = ksp.coil_shape()?;
    let block = extract_center(ksp, acs, acs)?;
    match calib {
        Calibration::Direct => {
            if nsets != 1 {
                return Err(Error::param("direct maps provide a single set"));
            }
            let maps = direct_maps(ksp, acs)?;
            Ok(Calibrated {
                raw: maps.clone(),
                maps,
                phases: Vec::new(),
                nkernels: 0,
            })
        }
        Calibration::Espirit => {
            let sub = calibrate(&block, kernel, thresh)?;
            let raw = eigen_maps(&sub, nx, ny, nsets)?;
            let maps = soft_weight(&raw, crop)?;
            Ok(Calibrated {
                raw,
                maps,
                phases: Vec::new(),
                nkernels: sub.nkernels(),
            })
        }
        Calibration::Vcc => {
            // The mirror of an even centered block is shifted by one sample,
            // so only the inner `acs - 1` block has every partner acquired.
            if acs < 2 {
                return Err(Error::param("ACS must be at least 2 for virtual conjugate coils"));
            }
            let vcc = make_vcc(ksp)?;
            let inner = extract_center(vcc.data(), acs - 1, acs - 1)?;
            let sub = calibrate(&inner, kernel, thresh)?;
            let wide = eigen_maps(&sub, nx, ny, nsets)?;
            let (phases, centered) = center_phase_all(&wide)?;
            let reference = direct_maps(ksp, acs)?;
            let raw = align_sign(&centered, &reference)?;
            let maps = soft_weight(&raw, crop)?;
            Ok(Calibrated {
                raw,
                maps,
                phases,
                nkernels: sub.nkernels(),
            })
        }
    }
}

/// Per-pixel doubled-angle phase error between estimated maps and a
/// reference, `|wrap(2 arg <c_ref, c_est>)|`. Pixels where either vector
/// vanishes report `pi`.
pub fn doubled_angle_error(maps: &SensitivityMaps, set: usize, reference: &KTensor) -> Result<Vec<f64>> {
    let (nx, ny, nc) = reference.coil_shape()?;
    maps.check_same_grid(nx, ny)?;
    if maps.ncoils() != nc {
        return Err(Error::shape(format!("{} map channels vs {nc} reference", maps.ncoils())));
    }
    let plane = nx * ny;
    let r = reference.to_c64();
    Ok((0..plane)
        .map(|q| {
            let v = maps.coil_vector(q, set);
            let z: Complex64 = (0..nc).map(|c| v[c] * r[q + plane * c].conj()).sum();
            if z.norm() == 0.0 {
                std::f64::consts::PI
            } else {
                (z * z).arg().abs()
            }
        })
        .collect())
}

/// Largest absolute finite difference of `image` along x.
pub fn edge_sharpness(image: &[f32], nx: usize) -> f64 {
    image
        .chunks(nx)
        .flat_map(|row| row.windows(2).map(|w| (w[1] as f64 - w[0] as f64).abs()))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub config: RunConfig,
    pub truth: PhantomTruth,
    pub full_ksp: KTensor,
    pub pattern: SamplingPattern,
    pub ksp: KTensor,
    pub calibrated: Calibrated,
    pub recon: ReconResult,
    /// Coil images synthesized from the reconstruction.
    pub coils: KTensor,
    pub metrics: Vec<(&'static str, f64)>,
}

impl PipelineOutput {
    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| *k == key).map(|m| m.1)
    }

    /// Writes the data products to `dir` together with `manifest.txt`, and
    /// returns the manifest text.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<String> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let files: Vec<(&str, KTensor)> = vec![
            ("ksp.ksp1", self.ksp.clone()),
            ("maps.ksp1", self.calibrated.maps.maps().clone()),
            ("eig.ksp1", self.calibrated.raw.eigenvalue_tensor()?),
            ("img.ksp1", self.recon.image.clone()),
            ("coils.ksp1", self.coils.clone()),
        ];
        let mut manifest = String::new();
        for (k, v) in self.config.entries() {
            writeln!(manifest, "{k}={v}").unwrap();
        }
        for (name, t) in &files {
            let path = dir.join(name);
            write_ktensor(&path, t)?;
            writeln!(manifest, "sha256.{name}={}", sha256_hex(&fs::read(&path)?)).unwrap();
        }
        manifest.push_str(&metrics_text(&self.metrics));
        fs::write(dir.join("manifest.txt"), &manifest)?;
        Ok(manifest)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

pub fn metrics_text(metrics: &[(&str, f64)]) -> String {
    metrics.iter().fold(String::new(), |mut s, (k, v)| {
        writeln!(s, "{k}={v}").unwrap();
        s
    })
}

/// Runs the whole chain for one configuration.
pub fn run(config: &RunConfig) -> Result<PipelineOutput> {
    let truth = make_phantom(&config.phantom_params())?;
    let full_ksp = simulate_kspace(&truth)?;
    let pattern = config.pattern()?;
    let ksp = apply_pattern(&full_ksp, &pattern)?;
    let calibrated = calibrate_maps(
        &ksp,
        config.calib,
        config.acs,
        config.kernel,
        config.thresh,
        config.crop,
        config.maps,
    )?;
    let model = ForwardModel::new(
        calibrated.maps.clone(),
        pattern.clone(),
        config.mode,
        config.lambda,
        config.lambda_imag,
    )?;
    let result = solve(&model, &ksp, config.iters, config.tol)?;
    let coils = synthesize_coil_images(&result.image, &calibrated.maps)?;

    let reference = truth.coil_images()?;
    let support = &truth.support;
    let diff = diff_image(&coils, &reference, Some(support))?;
    let (_, proj_real) = project(&reference, &calibrated.maps, ProjectionMode::Real, Some(support))?;
    let (_, proj_complex) = project(&reference, &calibrated.maps, ProjectionMode::Complex, Some(support))?;
    let magnitude = rss(&coils)?;
    let mut metrics = vec![
        ("nrmse", nrmse(&coils, &reference, support)?),
        ("diff_rms", diff.scalar),
        ("proj_real", proj_real.scalar),
        ("proj_complex", proj_complex.scalar),
        ("edge_sharpness", edge_sharpness(&magnitude, config.grid)),
        ("iterations", result.iterations as f64),
        ("converged", result.converged as u8 as f64),
        ("nkernels", calibrated.nkernels as f64),
    ];
    if config.calib == Calibration::Vcc {
        let truth_maps = truth.phased_maps()?;
        let err = doubled_angle_error(&calibrated.raw, 0, &truth_maps)?;
        let inside: Vec<f64> = err.iter().zip(support).filter(|(_, &s)| s).map(|(e, _)| *e).collect();
        let good = inside.iter().filter(|&&e| e < 0.05).count();
        metrics.push(("phase_ok_fraction", good as f64 / inside.len().max(1) as f64));
    }
    Ok(PipelineOutput {
        config: config.clone(),
        truth,
        full_ksp,
        pattern,
        ksp,
        calibrated,
        recon: result,
        coils,
        metrics,
    })
}

/// Image-space coil data of the fully sampled k-space.
pub fn reference_coils(full_ksp: &KTensor) -> Result<KTensor> {
    crate::fft::ifftc(full_ksp, &[Dim::X, Dim::Y])
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use vccrecon::espirit::{self, calibrate, eigen_maps, soft_weight};
use vccrecon::io::{read_ktensor, write_ktensor};
use vccrecon::num_complex::Complex32;
use vccrecon::pattern::{apply_pattern, extract_center, PartialFourier, SamplingPattern};
use vccrecon::phantom::{make_phantom, simulate_kspace, PhantomParams};
use vccrecon::pipeline::{self, metrics_text, Calibration, RunConfig};
use vccrecon::recon::{self, solve, synthesize_coil_images, ForwardModel, SolveMode};
use vccrecon::validate::{diff_image, nrmse, project, ProjectionMode};
use vccrecon::vcc::{align_sign, center_phase_all, make_vcc};
use vccrecon::{Dim, Error, KTensor, SensitivityMaps};

const EXPERIMENTS: &str = "\
Experiments (synthetic phantom, pipeline subcommand):
  E1  eigenvalue maps              pipeline --hf-blobs 3 --maps 2   (eig.ksp1 in --out-dir)
  E2  projection residuals         pipeline --hf-blobs 3 --maps 1   -> proj_real (1 map)
                                   pipeline --hf-blobs 3 --maps 2   -> proj_real (2 maps)
                                   pipeline --hf-blobs 3 --calib espirit --mode complex -> proj_complex
      ACS / kernel sweep           pipeline --hf-blobs 3 --maps {1,2} --acs {16,24,32,40} --kernel {4,6,8,10}
  E3  A  full reference            pipeline --hf-blobs 3 --accel 1 --mode complex
      B  1 map                     pipeline --hf-blobs 3 --maps 1 --mode real
      C  2 maps                    pipeline --hf-blobs 3 --maps 2 --mode real
      D  1 map, imag penalty       pipeline --hf-blobs 3 --maps 1 --mode imagreg
      E  direct maps               pipeline --hf-blobs 3 --calib direct --mode real
      F  direct maps, imag penalty pipeline --hf-blobs 3 --calib direct --mode imagreg
      G  complex, partial Fourier  pipeline --hf-blobs 3 --pf 5/8 --mode complex
      H-L                          as B-F with --pf 5/8
  E4  A-D                          as E3 A-D with --hf-blobs 6
";

#[derive(Parser)]
#[command(name = "vccrecon", version, about = "VCC-ESPIRiT calibration and phase-constrained SENSE", after_help = EXPERIMENTS)]
struct Cli {
    /// Worker threads (also VCCRECON_THREADS).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a multi-coil phantom and its fully sampled k-space.
    Phantom(PhantomArgs),
    /// Append virtual conjugate channels to k-space.
    Vcc(VccArgs),
    /// ESPIRiT calibration from the k-space center.
    Ecalib(EcalibArgs),
    /// Remove the conjugate-pair phase from 2N-channel maps.
    Phasecal(PhasecalArgs),
    /// Iterative reconstruction from undersampled k-space.
    Recon(ReconArgs),
    /// Project coil images onto the span of the maps.
    Project(ProjectArgs),
    /// NRMSE and residual figures as key=value lines.
    Metrics(MetricsArgs),
    /// Phantom to metrics in one run, with a manifest.
    #[command(after_help = EXPERIMENTS)]
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long, default_value_t = 96)]
    grid: usize,
    #[arg(long, default_value_t = 8)]
    coils: usize,
    #[arg(long, default_value_t = 0)]
    hf_blobs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Fully sampled k-space.
    #[arg(long)]
    out: PathBuf,
    /// Fully sampled coil images.
    #[arg(long)]
    coil_images: Option<PathBuf>,
    /// Support mask as a real [x, y] tensor of zeros and ones.
    #[arg(long)]
    support: Option<PathBuf>,
}

#[derive(Args)]
struct VccArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EcalibArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Calibration block size. For VCC k-space built from undersampled data
    /// use one less than the acquired ACS, so every virtual sample has its
    /// acquired partner.
    #[arg(long, default_value_t = 24, value_parser = clap::value_parser!(u64).range(1..))]
    acs: u64,
    #[arg(long, default_value_t = espirit::DEFAULT_KERNEL as u64, value_parser = clap::value_parser!(u64).range(1..))]
    kernel: u64,
    #[arg(long, default_value_t = espirit::DEFAULT_THRESHOLD, value_parser = unit_fraction)]
    thresh: f64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    maps: u64,
    #[arg(long, default_value_t = espirit::DEFAULT_CROP, value_parser = crop_value)]
    crop: f64,
    /// Maps; eigenvalues go to `<stem>_eig.ksp1` next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PhasecalArgs {
    /// 2N-channel maps from VCC k-space.
    #[arg(long)]
    maps: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Removed phase, one plane per set.
    #[arg(long)]
    phase: Option<PathBuf>,
    /// Low-resolution maps used to fix the per-pixel sign.
    #[arg(long)]
    align_ref: Option<PathBuf>,
}

#[derive(Args)]
struct ReconArgs {
    #[arg(long)]
    ksp: PathBuf,
    #[arg(long)]
    maps: PathBuf,
    /// e.g. `R=3,acs=24,pf=5/8`
    #[arg(long, default_value = "R=3,acs=24")]
    pattern: PatternSpec,
    #[arg(long, default_value = "real")]
    mode: SolveMode,
    #[arg(long, default_value_t = recon::DEFAULT_LAMBDA_TIKHONOV, value_parser = non_negative)]
    lambda: f64,
    #[arg(long, default_value_t = recon::DEFAULT_LAMBDA_IMAG, value_parser = non_negative)]
    lambda_imag: f64,
    #[arg(long, default_value_t = recon::DEFAULT_MAX_ITER as u64, value_parser = clap::value_parser!(u64).range(1..))]
    iters: u64,
    #[arg(long, default_value_t = recon::DEFAULT_TOL, value_parser = non_negative)]
    tol: f64,
    /// Component images `[x, y, set]`.
    #[arg(long)]
    out: PathBuf,
    /// Coil images synthesized from the result.
    #[arg(long)]
    coils_out: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    coils: PathBuf,
    #[arg(long)]
    maps: PathBuf,
    #[arg(long, default_value = "real")]
    mode: ProjectionMode,
    #[arg(long)]
    out: PathBuf,
    /// Per-coil residual.
    #[arg(long)]
    err: Option<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Combined error map as PGM, scaled by five.
    #[arg(long)]
    pgm: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    a: PathBuf,
    /// Reference.
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Combined difference map as PGM, scaled by five.
    #[arg(long)]
    pgm: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, default_value_t = 96)]
    grid: usize,
    #[arg(long, default_value_t = 8)]
    coils: usize,
    #[arg(long, default_value_t = 0)]
    hf_blobs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = espirit::DEFAULT_KERNEL as u64, value_parser = clap::value_parser!(u64).range(1..))]
    kernel: u64,
    #[arg(long, default_value_t = espirit::DEFAULT_THRESHOLD, value_parser = unit_fraction)]
    thresh: f64,
    #[arg(long, default_value_t = espirit::DEFAULT_CROP, value_parser = crop_value)]
    crop: f64,
    #[arg(long, default_value_t = 24, value_parser = clap::value_parser!(u64).range(1..))]
    acs: u64,
    /// Acceleration R along y.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    accel: u64,
    /// Partial-Fourier fraction along x.
    #[arg(long, default_value = "1")]
    pf: PartialFourier,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    maps: u64,
    #[arg(long, default_value = "vcc")]
    calib: Calibration,
    #[arg(long, default_value = "real")]
    mode: SolveMode,
    #[arg(long, default_value_t = recon::DEFAULT_LAMBDA_TIKHONOV, value_parser = non_negative)]
    lambda: f64,
    #[arg(long, default_value_t = recon::DEFAULT_LAMBDA_IMAG, value_parser = non_negative)]
    lambda_imag: f64,
    #[arg(long, default_value_t = recon::DEFAULT_MAX_ITER as u64, value_parser = clap::value_parser!(u64).range(1..))]
    iters: u64,
    #[arg(long, default_value_t = recon::DEFAULT_TOL, value_parser = non_negative)]
    tol: f64,
    /// Where data products and manifest.txt are written.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// `R=3,acs=24[,pf=5/8]`
#[derive(Clone, Debug)]
struct PatternSpec {
    accel: usize,
    acs: usize,
    pf: PartialFourier,
}

impl FromStr for PatternSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut spec = PatternSpec {
            accel: 1,
            acs: 24,
            pf: PartialFourier::FULL,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or(format!("expected key=value, got `{part}`"))?;
            let count = |v: &str| match v.parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(format!("`{key}` needs a positive integer, got `{v}`")),
            };
            match key.to_ascii_lowercase().as_str() {
                "r" => spec.accel = count(value)?,
                "acs" => spec.acs = count(value)?,
                "pf" => spec.pf = value.parse().map_err(|e: Error| e.to_string())?,
                _ => return Err(format!("unknown pattern key `{key}`")),
            }
        }
        Ok(spec)
    }
}

fn unit_fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v <= 1.0 => Ok(v),
        _ => Err(format!("`{s}` is not in (0, 1]")),
    }
}

fn crop_value(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..1.0).contains(&v) => Ok(v),
        _ => Err(format!("`{s}` is not in [0, 1)")),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a finite non-negative number")),
    }
}

fn eig_path(maps: &Path) -> PathBuf {
    let stem = maps.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    maps.with_file_name(format!("{stem}_eig.ksp1"))
}

fn write_maps(path: &Path, maps: &SensitivityMaps) -> vccrecon::Result<()> {
    write_ktensor(path, maps.maps())?;
    write_ktensor(eig_path(path), &maps.eigenvalue_tensor()?)
}

/// Maps from `[x, y, coil]` or `[x, y, coil, set]`, with eigenvalues from
/// the sibling file when present.
fn read_maps(path: &Path) -> vccrecon::Result<SensitivityMaps> {
    let t = read_ktensor(path)?;
    let t = if t.dims().len() == 3 {
        let (nx, ny, nc) = t.coil_shape()?;
        KTensor::new(
            vec![(Dim::X, nx), (Dim::Y, ny), (Dim::Coil, nc), (Dim::Set, 1)],
            t.into_data(),
        )?
    } else {
        t
    };
    let sibling = eig_path(path);
    if sibling.exists() {
        SensitivityMaps::from_tensors(t, &read_ktensor(sibling)?)
    } else {
        let d = t.dims().to_vec();
        SensitivityMaps::new(t, vec![1.0; d[0].1 * d[1].1 * d.get(3).map_or(1, |s| s.1)])
    }
}

fn read_mask(path: &Path) -> vccrecon::Result<Vec<bool>> {
    let t = read_ktensor(path)?;
    t.expect_layout(&[Dim::X, Dim::Y])?;
    Ok(t.data().iter().map(|v| v.norm() > 0.5).collect())
}

fn mask_tensor(mask: &[bool], n: usize) -> vccrecon::Result<KTensor> {
    KTensor::new(
        vec![(Dim::X, n), (Dim::Y, n)],
        mask.iter().map(|&m| Complex32::new(m as u8 as f32, 0.0)).collect(),
    )
}

fn run(command: Command) -> vccrecon::Result<()> {
    match command {
        Command::Phantom(a) => {
            let truth = make_phantom(&PhantomParams {
                grid: a.grid,
                ncoils: a.coils,
                hf_blobs: a.hf_blobs,
                seed: a.seed,
            })?;
            write_ktensor(&a.out, &simulate_kspace(&truth)?)?;
            if let Some(p) = a.coil_images {
                write_ktensor(p, &truth.coil_images()?)?;
            }
            if let Some(p) = a.support {
                write_ktensor(p, &mask_tensor(&truth.support, truth.n)?)?;
            }
        }
        Command::Vcc(a) => {
            let ksp = read_ktensor(&a.input)?;
            write_ktensor(&a.out, make_vcc(&ksp)?.data())?;
        }
        Command::Ecalib(a) => {
            let ksp = read_ktensor(&a.input)?;
            let (nx, ny, _) = ksp.coil_shape()?;
            let acs = a.acs as usize;
            let sub = calibrate(&extract_center(&ksp, acs, acs)?, a.kernel as usize, a.thresh)?;
            let raw = eigen_maps(&sub, nx, ny, a.maps as usize)?;
            let weighted = soft_weight(&raw, a.crop)?;
            write_ktensor(&a.out, weighted.maps())?;
            write_ktensor(eig_path(&a.out), &raw.eigenvalue_tensor()?)?;
            println!("nkernels={}", sub.nkernels());
        }
        Command::Phasecal(a) => {
            let maps = read_maps(&a.maps)?;
            let (phases, mut centered) = center_phase_all(&maps)?;
            if let Some(r) = a.align_ref {
                centered = align_sign(&centered, &read_maps(&r)?)?;
            }
            write_maps(&a.out, &centered)?;
            if let Some(p) = a.phase {
                let (nx, ny) = maps.grid();
                let mut data = Vec::with_capacity(nx * ny * phases.len());
                for ph in &phases {
                    data.extend(ph.phi().iter().map(|&v| Complex32::new(v as f32, 0.0)));
                }
                let t = KTensor::new(vec![(Dim::X, nx), (Dim::Y, ny), (Dim::Set, phases.len())], data)?;
                write_ktensor(p, &t)?;
            }
        }
        Command::Recon(a) => {
            let ksp = read_ktensor(&a.ksp)?;
            let (nx, ny, _) = ksp.coil_shape()?;
            let maps = read_maps(&a.maps)?;
            let pattern = SamplingPattern::new(nx, ny, a.pattern.accel, (a.pattern.acs, a.pattern.acs), a.pattern.pf)?;
            let ksp = apply_pattern(&ksp, &pattern)?;
            let model = ForwardModel::new(maps.clone(), pattern, a.mode, a.lambda, a.lambda_imag)?;
            let result = solve(&model, &ksp, a.iters as usize, a.tol)?;
            write_ktensor(&a.out, &result.image)?;
            if let Some(p) = a.coils_out {
                write_ktensor(p, &synthesize_coil_images(&result.image, &maps)?)?;
            }
            println!("iterations={}", result.iterations);
            println!("converged={}", result.converged as u8);
            println!("residual={}", result.residual_history.last().copied().unwrap_or(0.0));
            if !result.converged {
                eprintln!("warning: tolerance not reached after {} iterations", result.iterations);
            }
        }
        Command::Project(a) => {
            let coils = read_ktensor(&a.coils)?;
            let maps = read_maps(&a.maps)?;
            let mask = a.mask.as_deref().map(read_mask).transpose()?;
            let (projected, err) = project(&coils, &maps, a.mode, mask.as_deref())?;
            write_ktensor(&a.out, &projected)?;
            if let Some(p) = a.err {
                write_ktensor(p, &err.per_coil)?;
            }
            if let Some(p) = a.pgm {
                let full = vccrecon::validate::rss(&coils)?.iter().fold(0.0f32, |m, &v| m.max(v));
                err.write_pgm(p, full as f64)?;
            }
            println!("residual={}", err.scalar);
        }
        Command::Metrics(a) => {
            let x = read_ktensor(&a.a)?;
            let y = read_ktensor(&a.b)?;
            let plane = x.require(Dim::X)? * x.require(Dim::Y)?;
            let mask = match &a.mask {
                Some(p) => read_mask(p)?,
                None => vec![true; plane],
            };
            println!("nrmse={}", nrmse(&x, &y, &mask)?);
            if x.coil_shape().is_ok() {
                let d = diff_image(&x, &y, Some(&mask))?;
                println!("diff_rms={}", d.scalar);
                if let Some(p) = a.pgm {
                    let full = vccrecon::validate::rss(&y)?.iter().fold(0.0f32, |m, &v| m.max(v));
                    d.write_pgm(p, full as f64)?;
                }
            }
        }
        Command::Pipeline(a) => {
            let config = RunConfig {
                grid: a.grid,
                ncoils: a.coils,
                hf_blobs: a.hf_blobs,
                seed: a.seed,
                kernel: a.kernel as usize,
                thresh: a.thresh,
                crop: a.crop,
                acs: a.acs as usize,
                accel: a.accel as usize,
                pf: a.pf,
                maps: a.maps as usize,
                calib: a.calib,
                mode: a.mode,
                lambda: a.lambda,
                lambda_imag: a.lambda_imag,
                iters: a.iters as usize,
                tol: a.tol,
            };
            let out = pipeline::run(&config)?;
            match a.out_dir {
                Some(dir) => print!("{}", out.write(dir)?),
                None => print!("{}", metrics_text(&out.metrics)),
            }
        }
    }
    Ok(())
}

fn thread_count(flag: Option<u64>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return Ok(Some(n as usize));
    }
    match std::env::var("VCCRECON_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("VCCRECON_THREADS must be a positive integer, got `{v}`")),
        },
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match thread_count(cli.threads) {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidParameter(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

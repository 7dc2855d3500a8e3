//! Seeded coefficient generators and the `lodadapt-field v1` file format.
//!
//! All random draws use `ChaCha8Rng` seeded from a `u64`, so a field is a
//! pure function of its spec and seed on every platform.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::darcy::mobility;
use crate::error::{config_err, Error, Result};
use crate::fem::Coefficient;
use crate::grid::{Grid, MeshPair};

/// Random checkerboard `10^c`, `c ~ U[−2, 0]` per fine cell, then the
/// vertical stripe `15/32 ≤ x_1 ≤ 1/2` set to `10^{-2}` and finally the
/// horizontal stripe `1/4 ≤ x_2 ≤ 5/16` set to 1 (midpoint tests).
pub fn checkerboard_base(grid: &Grid, seed: u64) -> Result<Coefficient> {
    if grid.dim() != 2 {
        return Err(config_err!("the checkerboard coefficient is two-dimensional"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..grid.num_cells()).map(|_| 10f64.powf(rng.random_range(-2.0..=0.0))).collect();
    for (c, x) in v.iter_mut().enumerate() {
        let m = grid.cell_midpoint(c);
        if (15.0 / 32.0..=0.5).contains(&m[0]) {
            *x = 0.01;
        }
        if (0.25..=5.0 / 16.0).contains(&m[1]) {
            *x = 1.0;
        }
    }
    Coefficient::new(v)
}

/// `A^n = A_b (2 + sin(8π (x_1 − n/128)))` at fine-cell midpoints.
pub fn sweep_coefficient(grid: &Grid, base: &Coefficient, n: i64) -> Result<Coefficient> {
    let shift = n.rem_euclid(128) as f64 / 128.0;
    Coefficient::new(
        (0..grid.num_cells())
            .map(|c| base.get(c) * (2.0 + (8.0 * PI * (grid.cell_midpoint(c)[0] - shift)).sin()))
            .collect(),
    )
}

/// Gaussian sampler choice for the lognormal field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    /// Circulant embedding, dense factorization if embedding fails on a
    /// small grid.
    #[default]
    Auto,
    Circulant,
    Dense,
}

const DENSE_LIMIT: usize = 4096;

/// `K = exp(σ κ)` with `κ` a centered unit-variance Gaussian field of
/// covariance `exp(−|x − y| / d)`, sampled at fine-cell midpoints of a 2D
/// grid.
pub fn lognormal_field(grid: &Grid, stddev: f64, corr_len: f64, seed: u64, sampler: Sampler) -> Result<Coefficient> {
    if grid.dim() != 2 {
        return Err(config_err!("the lognormal field is two-dimensional"));
    }
    if !(stddev >= 0.0 && stddev.is_finite()) || !(corr_len > 0.0 && corr_len.is_finite()) {
        return Err(config_err!("lognormal field needs stddev >= 0 and corr_len > 0"));
    }
    let kappa = gaussian_field(grid, corr_len, seed, sampler)?;
    Coefficient::new(kappa.iter().map(|&k| (stddev * k).exp()).collect())
}

/// Unit-variance Gaussian field with exponential covariance.
pub fn gaussian_field(grid: &Grid, corr_len: f64, seed: u64, sampler: Sampler) -> Result<Vec<f64>> {
    match sampler {
        Sampler::Dense => dense_gaussian(grid, corr_len, seed),
        Sampler::Circulant => circulant_gaussian(grid, corr_len, seed),
        Sampler::Auto => match circulant_gaussian(grid, corr_len, seed) {
            Err(Error::Numeric(msg)) if grid.num_cells() <= DENSE_LIMIT => {
                log::warn!("{msg}; falling back to dense factorization");
                dense_gaussian(grid, corr_len, seed)
            }
            r => r,
        },
    }
}

fn circulant_gaussian(grid: &Grid, corr_len: f64, seed: u64) -> Result<Vec<f64>> {
    let m = [grid.cells()[0], grid.cells()[1]];
    let h = [grid.h(0), grid.h(1)];
    let mut planner = FftPlanner::<f64>::new();
    let mut pad = 1usize;
    loop {
        let n = [2 * m[0] * pad, 2 * m[1] * pad];
        let mut buf: Vec<Complex64> = Vec::with_capacity(n[0] * n[1]);
        for k1 in 0..n[1] {
            let y = k1.min(n[1] - k1) as f64 * h[1];
            for k0 in 0..n[0] {
                let x = k0.min(n[0] - k0) as f64 * h[0];
                buf.push(Complex64::new((-(x * x + y * y).sqrt() / corr_len).exp(), 0.0));
            }
        }
        fft2(&mut planner, &mut buf, n, false);
        let lmax = buf.iter().map(|c| c.re).fold(0.0, f64::max);
        let lmin = buf.iter().map(|c| c.re).fold(f64::MAX, f64::min);
        if lmin >= -1e-10 * lmax {
            let total = (n[0] * n[1]) as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut y: Vec<Complex64> = buf
                .iter()
                .map(|l| {
                    let s = (l.re.max(0.0) / total).sqrt();
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(s * re, s * im)
                })
                .collect();
            fft2(&mut planner, &mut y, n, false);
            let mut out = Vec::with_capacity(m[0] * m[1]);
            for j in 0..m[1] {
                for i in 0..m[0] {
                    out.push(y[i + n[0] * j].re);
                }
            }
            return Ok(out);
        }
        if pad >= 8 {
            return Err(Error::Numeric(format!(
                "circulant embedding has negative eigenvalue {lmin:e} (max {lmax:e}) even with padding {pad}"
            )));
        }
        pad *= 2;
    }
}

fn fft2(planner: &mut FftPlanner<f64>, buf: &mut [Complex64], n: [usize; 2], inverse: bool) {
    let row = if inverse { planner.plan_fft_inverse(n[0]) } else { planner.plan_fft_forward(n[0]) };
    for r in buf.chunks_exact_mut(n[0]) {
        row.process(r);
    }
    let col = if inverse { planner.plan_fft_inverse(n[1]) } else { planner.plan_fft_forward(n[1]) };
    let mut tmp = vec![Complex64::new(0.0, 0.0); n[1]];
    for i in 0..n[0] {
        for j in 0..n[1] {
            tmp[j] = buf[i + n[0] * j];
        }
        col.process(&mut tmp);
        for j in 0..n[1] {
            buf[i + n[0] * j] = tmp[j];
        }
    }
}

fn dense_gaussian(grid: &Grid, corr_len: f64, seed: u64) -> Result<Vec<f64>> {
    let n = grid.num_cells();
    if n > DENSE_LIMIT {
        return Err(config_err!("dense Gaussian sampling is limited to {DENSE_LIMIT} cells, grid has {n}"));
    }
    let mid: Vec<[f64; 3]> = (0..n).map(|c| grid.cell_midpoint(c)).collect();
    let cov = Mat::<f64>::from_fn(n, n, |i, j| {
        let d = ((mid[i][0] - mid[j][0]).powi(2) + (mid[i][1] - mid[j][1]).powi(2)).sqrt();
        (-d / corr_len).exp()
    });
    let llt = cov.llt(faer::Side::Lower).map_err(|e| Error::Numeric(format!("covariance factorization failed: {e:?}")))?;
    let l = llt.L();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok((0..n).map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum()).collect())
}

/// Number of octaves of the 3D product field on a grid.
pub fn product_octaves(grid: &Grid) -> usize {
    let min = grid.cells().iter().take(grid.dim()).copied().min().unwrap_or(1);
    (usize::BITS - 1 - min.leading_zeros()).min(7) as usize
}

/// `K = 2^{−3 i_max} Π_{i=1}^{i_max} (1 + ω_{i,⌈2^i x⌉})³` with `ω ~ U[0,1]`
/// drawn octave by octave in lexicographic order, on the unit cube.
pub fn product_field_3d(grid: &Grid, seed: u64) -> Result<Coefficient> {
    if grid.dim() != 3 {
        return Err(config_err!("the product field is three-dimensional"));
    }
    let imax = product_octaves(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omegas: Vec<Vec<f64>> = (1..=imax)
        .map(|i| {
            let n = 1usize << i;
            (0..n * n * n).map(|_| rng.random_range(0.0..=1.0)).collect()
        })
        .collect();
    let lo = grid.lo();
    let hi = grid.hi();
    let norm = 2f64.powi(-3 * imax as i32);
    Coefficient::new(
        (0..grid.num_cells())
            .map(|c| {
                let m = grid.cell_midpoint(c);
                let x: Vec<f64> = (0..3).map(|a| (m[a] - lo[a]) / (hi[a] - lo[a])).collect();
                let mut k = norm;
                for (i, om) in omegas.iter().enumerate() {
                    let n = 1usize << (i + 1);
                    let idx: Vec<usize> = x.iter().map(|&xa| ((xa * n as f64).ceil() as usize).clamp(1, n) - 1).collect();
                    let w = om[idx[0] + n * (idx[1] + n * idx[2])];
                    k *= (1.0 + w).powi(3);
                }
                k
            })
            .collect(),
    )
}

/// Declarative description of a coefficient field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    CheckerboardBase {
        seed: u64,
    },
    Sweep {
        seed: u64,
        n: i64,
    },
    Lognormal2d {
        seed: u64,
        stddev: f64,
        corr_len: f64,
        #[serde(default)]
        sampler: Sampler,
    },
    Product3d {
        seed: u64,
    },
    /// `λ(s) K` with one saturation per coarse element.
    Darcy {
        permeability: Box<FieldSpec>,
        saturation: Vec<f64>,
    },
    File {
        path: String,
    },
}

impl FieldSpec {
    pub fn generate(&self, mesh: &MeshPair) -> Result<Coefficient> {
        let fine = mesh.fine();
        let c = match self {
            FieldSpec::Constant { value } => Coefficient::constant(fine.num_cells(), *value)?,
            FieldSpec::CheckerboardBase { seed } => checkerboard_base(fine, *seed)?,
            FieldSpec::Sweep { seed, n } => sweep_coefficient(fine, &checkerboard_base(fine, *seed)?, *n)?,
            FieldSpec::Lognormal2d { seed, stddev, corr_len, sampler } => lognormal_field(fine, *stddev, *corr_len, *seed, *sampler)?,
            FieldSpec::Product3d { seed } => product_field_3d(fine, *seed)?,
            FieldSpec::Darcy { permeability, saturation } => {
                let k = permeability.generate(mesh)?;
                if saturation.len() != mesh.coarse().num_cells() {
                    return Err(config_err!(
                        "darcy field needs {} saturations, got {}",
                        mesh.coarse().num_cells(),
                        saturation.len()
                    ));
                }
                Coefficient::new(
                    (0..fine.num_cells())
                        .map(|c| mobility(saturation[mesh.coarse_cell_of_fine(c)]).total * k.get(c))
                        .collect(),
                )?
            }
            FieldSpec::File { path } => {
                let f = read_field(Path::new(path))?;
                if f.counts != fine.cells()[..fine.dim()] {
                    return Err(config_err!("field file {path} has counts {:?}, mesh has {:?}", f.counts, &fine.cells()[..fine.dim()]));
                }
                Coefficient::new(f.values)?
            }
        };
        c.check_mesh(mesh)?;
        Ok(c)
    }
}

/// A scalar field on a tensor grid, one value per cell, lexicographic.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldData {
    pub counts: Vec<usize>,
    pub values: Vec<f64>,
}

const MAGIC: &str = "lodadapt-field v1";

fn header(counts: &[usize]) -> String {
    let mut h = format!("{MAGIC} {}", counts.len());
    for c in counts {
        h.push_str(&format!(" {c}"));
    }
    h
}

fn parse_header(line: &str) -> Result<Vec<usize>> {
    let rest = line
        .trim()
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Format(format!("expected header starting with '{MAGIC}'")))?;
    let nums: Vec<usize> = rest
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad header token '{t}'"))))
        .collect::<Result<_>>()?;
    let (&d, counts) = nums.split_first().ok_or_else(|| Error::Format("header lacks dimension".into()))?;
    if !(1..=3).contains(&d) || counts.len() != d || counts.contains(&0) {
        return Err(Error::Format(format!("inconsistent header '{}'", line.trim())));
    }
    Ok(counts.to_vec())
}

/// Text form: header line, then one value per line.
pub fn write_field(path: &Path, counts: &[usize], values: &[f64]) -> Result<()> {
    let mut s = header(counts);
    s.push('\n');
    for v in values {
        s.push_str(&format!("{v:e}\n"));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Binary form: raw little-endian `f64`, header in `<path>.json`.
pub fn write_field_binary(path: &Path, counts: &[usize], values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    let side = serde_json::json!({ "header": header(counts) });
    fs::write(sidecar(path), serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(())
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Read either form; a binary file is recognized by its sidecar.
pub fn read_field(path: &Path) -> Result<FieldData> {
    let side = sidecar(path);
    let (counts, values) = if side.exists() {
        let meta: serde_json::Value = serde_json::from_slice(&fs::read(&side)?)?;
        let h = meta["header"].as_str().ok_or_else(|| Error::Format(format!("{}: missing header", side.display())))?;
        let counts = parse_header(h)?;
        let bytes = fs::read(path)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Format(format!("{}: length is not a multiple of 8", path.display())));
        }
        let values = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        (counts, values)
    } else {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let counts = parse_header(lines.next().unwrap_or(""))?;
        let values = lines
            .flat_map(str::split_whitespace)
            .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad value '{t}'"))))
            .collect::<Result<Vec<_>>>()?;
        (counts, values)
    };
    let expect: usize = counts.iter().product();
    if values.len() != expect {
        return Err(Error::Format(format!("{}: {} values, header says {expect}", path.display(), values.len())));
    }
    Ok(FieldData { counts, values })
}

//! Monte Carlo sampling of the truncated chaos expansion in dimension one.
//!
//! The field value u_N(t, 0) = 1 + Σ_{n≤N} θ^{n/2} Iₙ(f̃ₙ(·, 0; t)) is
//! sampled exactly in distribution after projecting each symmetrized kernel
//! onto an orthonormal basis of m disjoint equal-width boxes covering the
//! light cone [−t, t]. In box coordinates the multiple Wiener integral of a
//! symmetric basis tensor is a product of probabilists' Hermite polynomials
//! in the i.i.d. standard Gaussians Z_j = W(e_j), so a sample costs one pass
//! over the stored coefficient tensors:
//!
//!   I₁ = Σ a_j Z_j,   I₂ = Σ a_{jk}(Z_jZ_k − δ_{jk}),
//!   I₃ = Σ a_{jkl}(Z_jZ_kZ_l − δ_{jk}Z_l − δ_{jl}Z_k − δ_{kl}Z_j),
//!
//! with the sums over all ordered index tuples and each tensor stored once
//! per sorted tuple. The flat-noise kernels on the line are explicit hinge
//! powers,
//!
//!   f̃ₙ(x₁, …, xₙ; t) = (n!)^{-2} 2^{-n} Σ_σ (t − B_σ)₊ⁿ,
//!   B_σ = |x_{σ(1)}| + Σ_k |x_{σ(k)} − x_{σ(k−1)}|,
//!
//! so box coefficients are exact antiderivatives at n = 1 and per-box
//! Gauss-Legendre products at n = 2, 3. Projection onto the box partition is
//! an L² conditional expectation: every projected norm sits below its
//! continuum value and increases under refinement, and the Parseval sums of
//! the stored tensors give the projected norms for bias accounting.
//!
//! Replicates are drawn on the fixed chunked substreams of [`run_chunked`],
//! so runs are reproducible bit for bit at any thread count, and moment
//! standard errors come from a nonparametric bootstrap over the stored
//! samples (200 resamples on a dedicated substream).

use rand::Rng;

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;
use crate::rng::{chunk_rng, run_chunked, Accum};
use crate::util::fmt_sig17;

/// Largest admissible truncation order; the coefficient tensors are built
/// by nested quadrature whose cost is mⁿ.
pub const ORDER_CAP: usize = 3;

/// Mode caps per chaos order, keeping the order-n tensor below ~50k stored
/// entries so a sample pass stays cheap.
fn mode_cap(order: usize) -> usize {
    match order {
        1 => 4096,
        2 => 512,
        _ => 64,
    }
}

/// Bootstrap resample count for moment standard errors.
const BOOTSTRAP_RESAMPLES: usize = 200;

/// Chunk-index offset separating bootstrap streams from sampling streams.
const BOOTSTRAP_STREAM: u64 = 1 << 32;

// ---------------------------------------------------------------------------
// Box basis
// ---------------------------------------------------------------------------

/// Orthonormal basis of `modes` disjoint equal-width indicator boxes
/// partitioning [−half_width, half_width]: e_j = 1_{[x_j, x_{j+1})}/√w.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBasis {
    modes: usize,
    half_width: f64,
}

impl BoxBasis {
    pub fn new(modes: usize, half_width: f64) -> Result<Self> {
        if modes < 2 || modes > mode_cap(1) {
            return Err(Error::InvalidSpec(format!(
                "box count must lie in [2, {}]: {modes}",
                mode_cap(1)
            )));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "basis half-width must be positive and finite: {half_width}"
            )));
        }
        Ok(Self { modes, half_width })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Width w of a single box.
    pub fn width(&self) -> f64 {
        2.0 * self.half_width / self.modes as f64
    }

    /// Endpoints of box j.
    pub fn edges(&self, j: usize) -> (f64, f64) {
        let w = self.width();
        let lo = -self.half_width + j as f64 * w;
        (lo, lo + w)
    }
}

// ---------------------------------------------------------------------------
// Symmetric coefficient tensors
// ---------------------------------------------------------------------------

/// Coefficients ⟨f̃ₙ, e_{j₁} ⊗ … ⊗ e_{jₙ}⟩ of a projected symmetric kernel,
/// stored once per sorted index tuple (the tensor is symmetric, so every
/// ordering of a tuple carries the same value). Exact zeros are dropped.
#[derive(Debug, Clone)]
pub struct KernelTensor {
    order: usize,
    modes: usize,
    /// Sorted index tuples; slots past `order` are zero padding.
    idx: Vec<[u32; 3]>,
    coeff: Vec<f64>,
}

/// Number of ordered tuples represented by a sorted tuple of length n ≤ 3.
fn multiplicity(order: usize, idx: &[u32; 3]) -> f64 {
    match order {
        1 => 1.0,
        2 => {
            if idx[0] == idx[1] {
                1.0
            } else {
                2.0
            }
        }
        _ => {
            let (a, b, c) = (idx[0], idx[1], idx[2]);
            if a == b && b == c {
                1.0
            } else if a == b || b == c {
                3.0
            } else {
                6.0
            }
        }
    }
}

impl KernelTensor {
    /// Build a tensor from (sorted tuple, coefficient) pairs. Intended for
    /// synthetic tensors in tests and diagnostics; [`project_kernel`] is the
    /// production constructor.
    pub fn from_entries(order: usize, modes: usize, entries: &[(Vec<usize>, f64)]) -> Result<Self> {
        if order == 0 || order > ORDER_CAP {
            return Err(Error::Unsupported(format!(
                "tensor order must lie in 1..={ORDER_CAP}: {order}"
            )));
        }
        let mut idx = Vec::with_capacity(entries.len());
        let mut coeff = Vec::with_capacity(entries.len());
        for (tuple, a) in entries {
            if tuple.len() != order {
                return Err(Error::InvalidSpec(format!(
                    "index tuple {tuple:?} has length {} in an order-{order} tensor",
                    tuple.len()
                )));
            }
            if tuple.windows(2).any(|p| p[0] > p[1]) {
                return Err(Error::InvalidSpec(format!("index tuple {tuple:?} is not sorted")));
            }
            if tuple.iter().any(|&j| j >= modes) {
                return Err(Error::InvalidSpec(format!(
                    "index tuple {tuple:?} exceeds the mode count {modes}"
                )));
            }
            if !a.is_finite() {
                return Err(Error::InvalidSpec(format!("coefficient at {tuple:?} is not finite")));
            }
            let mut row = [0u32; 3];
            for (slot, &j) in row.iter_mut().zip(tuple) {
                *slot = j as u32;
            }
            if idx.contains(&row) {
                return Err(Error::InvalidSpec(format!("duplicate index tuple {tuple:?}")));
            }
            if *a != 0.0 {
                idx.push(row);
                coeff.push(*a);
            }
        }
        Ok(Self { order, modes, idx, coeff })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Number of stored (nonzero) sorted tuples.
    pub fn len(&self) -> usize {
        self.coeff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeff.is_empty()
    }

    /// Stored coefficient of a sorted tuple, or 0 if absent.
    pub fn coefficient(&self, tuple: &[usize]) -> f64 {
        let mut row = [0u32; 3];
        for (slot, &j) in row.iter_mut().zip(tuple) {
            *slot = j as u32;
        }
        self.idx
            .iter()
            .position(|r| *r == row)
            .map_or(0.0, |k| self.coeff[k])
    }

    /// Σ over ordered tuples of the squared coefficients: the squared L²
    /// norm ‖P f̃ₙ‖² of the projected kernel (Parseval).
    pub fn parseval_sum(&self) -> f64 {
        self.idx
            .iter()
            .zip(&self.coeff)
            .map(|(row, a)| multiplicity(self.order, row) * a * a)
            .sum()
    }

    /// The multiple Wiener integral Iₙ(P f̃ₙ) evaluated at the Gaussian
    /// vector z, via the Hermite product form of each sorted tuple.
    pub fn evaluate(&self, z: &[f64]) -> f64 {
        debug_assert!(z.len() >= self.modes);
        let mut acc = 0.0;
        match self.order {
            1 => {
                for (row, a) in self.idx.iter().zip(&self.coeff) {
                    acc += a * z[row[0] as usize];
                }
            }
            2 => {
                for (row, a) in self.idx.iter().zip(&self.coeff) {
                    let (zj, zk) = (z[row[0] as usize], z[row[1] as usize]);
                    if row[0] == row[1] {
                        acc += a * (zj * zj - 1.0);
                    } else {
                        acc += 2.0 * a * zj * zk;
                    }
                }
            }
            _ => {
                for (row, a) in self.idx.iter().zip(&self.coeff) {
                    let (zj, zk, zl) =
                        (z[row[0] as usize], z[row[1] as usize], z[row[2] as usize]);
                    if row[0] == row[1] && row[1] == row[2] {
                        acc += a * (zj * zj * zj - 3.0 * zj);
                    } else if row[0] == row[1] {
                        acc += 3.0 * a * (zj * zj - 1.0) * zl;
                    } else if row[1] == row[2] {
                        acc += 3.0 * a * zj * (zk * zk - 1.0);
                    } else {
                        acc += 6.0 * a * zj * zk * zl;
                    }
                }
            }
        }
        acc
    }
}

// ---------------------------------------------------------------------------
// Kernel projection
// ---------------------------------------------------------------------------

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// ∫₀^x (1/2)(t − |u|)₊ du, the exact antiderivative used at n = 1.
fn cone_antiderivative(t: f64, x: f64) -> f64 {
    let c = x.abs().min(t);
    let area = 0.5 * (t * c - 0.5 * c * c);
    if x < 0.0 {
        -area
    } else {
        area
    }
}

/// Symmetrized order-2 kernel (n!)⁻² 2⁻ⁿ Σ_σ (t − B_σ)₊ⁿ.
fn sym_kernel2(t: f64, x: f64, y: f64) -> f64 {
    let d = (x - y).abs();
    let b1 = x.abs() + d;
    let b2 = y.abs() + d;
    (relu(t - b1).powi(2) + relu(t - b2).powi(2)) / 16.0
}

/// Symmetrized order-3 kernel; the six chain orders are spelled out.
fn sym_kernel3(t: f64, x: f64, y: f64, z: f64) -> f64 {
    let dxy = (x - y).abs();
    let dxz = (x - z).abs();
    let dyz = (y - z).abs();
    let chains = [
        x.abs() + dxy + dyz,
        x.abs() + dxz + dyz,
        y.abs() + dxy + dxz,
        y.abs() + dyz + dxz,
        z.abs() + dxz + dxy,
        z.abs() + dyz + dxy,
    ];
    chains.iter().map(|&b| relu(t - b).powi(3)).sum::<f64>() / 288.0
}

/// Per-box quadrature nodes (point, weight) for the coefficient integrals,
/// with boxes wholly outside the light cone dropped (their coefficient is
/// exactly zero because every kernel argument satisfies |xᵢ| ≤ B_σ ≤ t).
fn box_nodes(basis: &BoxBasis, t: f64, points: usize) -> Vec<Option<Vec<(f64, f64)>>> {
    let rule = gauss_legendre(points);
    (0..basis.modes())
        .map(|j| {
            let (lo, hi) = basis.edges(j);
            if lo >= t || hi <= -t {
                return None;
            }
            let c = 0.5 * (lo + hi);
            let h = 0.5 * (hi - lo);
            Some(
                rule.x
                    .iter()
                    .zip(&rule.w)
                    .map(|(&xi, &wi)| (c + h * xi, h * wi))
                    .collect(),
            )
        })
        .collect()
}

/// Project the order-n symmetrized kernel at time t onto the box basis:
/// coefficients ⟨f̃ₙ(·, 0; t), e_{j₁} ⊗ … ⊗ e_{jₙ}⟩ for sorted tuples.
///
/// n = 1 uses the closed-form antiderivative of the cone profile
/// (1/2)(t − |x|)₊; n = 2, 3 use per-box Gauss-Legendre products (8 and 5
/// points per axis). The basis must cover the light cone [−t, t], else the
/// projection would silently lose kernel mass.
pub fn project_kernel(n: usize, t: f64, basis: &BoxBasis) -> Result<KernelTensor> {
    if n == 0 || n > ORDER_CAP {
        return Err(Error::Unsupported(format!(
            "projection supports orders 1..={ORDER_CAP}: {n}"
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Precondition(format!("time must be positive and finite: {t}")));
    }
    if basis.half_width() < t * (1.0 - 1e-12) {
        return Err(Error::Coverage(format!(
            "basis covers [-{}, {}] but the kernel support reaches |x| = {t}",
            basis.half_width(),
            basis.half_width()
        )));
    }
    if basis.modes() > mode_cap(n) {
        return Err(Error::InvalidSpec(format!(
            "order {n} caps the mode count at {}: {}",
            mode_cap(n),
            basis.modes()
        )));
    }
    let m = basis.modes();
    let w = basis.width();
    let mut idx = Vec::new();
    let mut coeff = Vec::new();
    match n {
        1 => {
            let scale = 1.0 / w.sqrt();
            for j in 0..m {
                let (lo, hi) = basis.edges(j);
                let a = (cone_antiderivative(t, hi) - cone_antiderivative(t, lo)) * scale;
                if a != 0.0 {
                    idx.push([j as u32, 0, 0]);
                    coeff.push(a);
                }
            }
        }
        2 => {
            let nodes = box_nodes(basis, t, 8);
            for j in 0..m {
                let Some(nj) = &nodes[j] else { continue };
                for k in j..m {
                    let Some(nk) = &nodes[k] else { continue };
                    let mut s = 0.0;
                    for &(x, wx) in nj {
                        for &(y, wy) in nk {
                            s += wx * wy * sym_kernel2(t, x, y);
                        }
                    }
                    let a = s / w;
                    if a != 0.0 {
                        idx.push([j as u32, k as u32, 0]);
                        coeff.push(a);
                    }
                }
            }
        }
        _ => {
            let nodes = box_nodes(basis, t, 5);
            for j in 0..m {
                let Some(nj) = &nodes[j] else { continue };
                for k in j..m {
                    let Some(nk) = &nodes[k] else { continue };
                    for l in k..m {
                        let Some(nl) = &nodes[l] else { continue };
                        let mut s = 0.0;
                        for &(x, wx) in nj {
                            for &(y, wy) in nk {
                                for &(z, wz) in nl {
                                    s += wx * wy * wz * sym_kernel3(t, x, y, z);
                                }
                            }
                        }
                        let a = s / (w * w.sqrt());
                        if a != 0.0 {
                            idx.push([j as u32, k as u32, l as u32]);
                            coeff.push(a);
                        }
                    }
                }
            }
        }
    }
    Ok(KernelTensor { order: n, modes: m, idx, coeff })
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Parameters of one sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Evaluation time of the field.
    pub t: f64,
    /// Coupling constant θ ≥ 0 multiplying the noise.
    pub theta: f64,
    /// Chaos truncation order N ∈ 1..=3.
    pub order: usize,
    /// Number of basis boxes covering the light cone [−t, t].
    pub modes: usize,
    /// Number of field samples to draw.
    pub replicates: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::InvalidSpec(format!("time must be positive: {}", self.t)));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "coupling must be nonnegative: {}",
                self.theta
            )));
        }
        if self.order == 0 || self.order > ORDER_CAP {
            return Err(Error::InvalidSpec(format!(
                "truncation order must lie in 1..={ORDER_CAP}: {}",
                self.order
            )));
        }
        if self.modes < 4 || self.modes > mode_cap(self.order) {
            return Err(Error::InvalidSpec(format!(
                "mode count must lie in [4, {}] at order {}: {}",
                mode_cap(self.order),
                self.order,
                self.modes
            )));
        }
        if self.replicates < 100 || self.replicates > 5_000_000 {
            return Err(Error::InvalidSpec(format!(
                "replicates must lie in [100, 5e6]: {}",
                self.replicates
            )));
        }
        Ok(())
    }

    /// Canonical one-line rendering, the input of config fingerprints.
    pub fn canonical(&self) -> String {
        format!(
            "simulate t={} theta={} order={} modes={} replicates={} seed={}",
            fmt_sig17(self.t),
            fmt_sig17(self.theta),
            self.order,
            self.modes,
            self.replicates,
            self.seed
        )
    }
}

struct SampleVec(Vec<f64>);

impl Accum for SampleVec {
    fn zero() -> Self {
        SampleVec(Vec::new())
    }

    fn merge(&mut self, other: Self) {
        self.0.extend(other.0);
    }
}

/// One completed sampling run: the samples, the empirical mean with its
/// standard error, and the projected kernel norms ‖P f̃ₙ‖² for each order
/// in the truncation (the exact chaos weights of the sampled field).
#[derive(Debug, Clone)]
pub struct SimRun {
    pub config: SimConfig,
    pub samples: Vec<f64>,
    pub mean: f64,
    pub mean_stderr: f64,
    /// (n, ‖P f̃ₙ‖²) for n = 1..=order.
    pub projected_norms: Vec<(usize, f64)>,
}

/// Draw `replicates` samples of the truncated field at the origin.
///
/// The basis always has exactly `modes` boxes on [−t, t], so the light cone
/// is covered by construction; the per-order tensors are built once and the
/// replicate loop runs on chunked substreams.
pub fn sample_field(config: &SimConfig) -> Result<SimRun> {
    config.validate()?;
    let basis = BoxBasis::new(config.modes, config.t)?;
    let mut tensors = Vec::with_capacity(config.order);
    for n in 1..=config.order {
        tensors.push(project_kernel(n, config.t, &basis)?);
    }
    let scales: Vec<f64> = (1..=config.order)
        .map(|n| config.theta.powf(n as f64 / 2.0))
        .collect();
    let modes = config.modes;
    let tensors_ref = &tensors;
    let scales_ref = &scales;
    let acc: SampleVec = run_chunked(config.seed, config.replicates, |rng, len, acc: &mut SampleVec| {
        let mut z = vec![0.0; modes];
        acc.0.reserve(len as usize);
        for _ in 0..len {
            for zi in z.iter_mut() {
                *zi = rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            let mut u = 1.0;
            for (tensor, s) in tensors_ref.iter().zip(scales_ref) {
                u += s * tensor.evaluate(&z);
            }
            acc.0.push(u);
        }
    });
    let samples = acc.0;
    let count = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / count;
    let var = samples.iter().map(|&u| (u - mean) * (u - mean)).sum::<f64>() / count;
    let mean_stderr = (var / count).sqrt();
    let projected_norms = tensors
        .iter()
        .map(|tensor| (tensor.order(), tensor.parseval_sum()))
        .collect();
    Ok(SimRun { config: config.clone(), samples, mean, mean_stderr, projected_norms })
}

/// Standard error of `stat` over nonparametric bootstrap resamples of
/// `values`, each resample drawn on its own deterministic substream.
fn bootstrap_stderr<F: Fn(&[f64]) -> f64>(values: &[f64], seed: u64, stat: F) -> f64 {
    let n = values.len();
    let mut buf = vec![0.0; n];
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for r in 0..BOOTSTRAP_RESAMPLES {
        let mut rng = chunk_rng(seed, BOOTSTRAP_STREAM + r as u64);
        for slot in buf.iter_mut() {
            *slot = values[rng.gen_range(0..n)];
        }
        stats.push(stat(&buf));
    }
    let k = stats.len() as f64;
    let mean = stats.iter().sum::<f64>() / k;
    let var = stats.iter().map(|&s| (s - mean) * (s - mean)).sum::<f64>() / (k - 1.0);
    var.sqrt()
}

impl SimRun {
    /// Empirical absolute moment E|u|^p with a bootstrap standard error.
    pub fn abs_moment(&self, p: f64) -> Result<(f64, f64)> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Domain(format!("moment exponent must be positive: {p}")));
        }
        let ys: Vec<f64> = self.samples.iter().map(|&u| u.abs().powf(p)).collect();
        let value = ys.iter().sum::<f64>() / ys.len() as f64;
        let se = bootstrap_stderr(&ys, self.config.seed, |xs| {
            xs.iter().sum::<f64>() / xs.len() as f64
        });
        Ok((value, se))
    }

    /// Empirical p-norm (E|u|^p)^{1/p} with a bootstrap standard error.
    pub fn p_norm(&self, p: f64) -> Result<(f64, f64)> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Domain(format!("norm exponent must be positive: {p}")));
        }
        let ys: Vec<f64> = self.samples.iter().map(|&u| u.abs().powf(p)).collect();
        let value = (ys.iter().sum::<f64>() / ys.len() as f64).powf(1.0 / p);
        let se = bootstrap_stderr(&ys, self.config.seed, |xs| {
            (xs.iter().sum::<f64>() / xs.len() as f64).powf(1.0 / p)
        });
        Ok((value, se))
    }

    /// Empirical variance with a bootstrap standard error.
    pub fn variance(&self) -> (f64, f64) {
        let var = |xs: &[f64]| {
            let n = xs.len() as f64;
            let m = xs.iter().sum::<f64>() / n;
            xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / n
        };
        (var(&self.samples), bootstrap_stderr(&self.samples, self.config.seed, var))
    }

    /// Second moment of the sampled (projected) field predicted by its own
    /// chaos weights: 1 + Σ θⁿ n! ‖P f̃ₙ‖². Exact for the sampler up to
    /// Monte Carlo error, slightly below the continuum series.
    pub fn predicted_second_moment(&self) -> f64 {
        let mut s = 1.0;
        let mut factorial = 1.0;
        for &(n, norm2) in &self.projected_norms {
            factorial *= n as f64;
            s += self.config.theta.powi(n as i32) * factorial * norm2;
        }
        s
    }

    /// Single-column CSV of the raw samples.
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("u\n");
        for &u in &self.samples {
            out.push_str(&fmt_sig17(u));
            out.push('\n');
        }
        out
    }

    /// Structured-text moment report for the requested exponents.
    pub fn report(&self, ps: &[f64]) -> Result<String> {
        let mut out = String::new();
        out.push_str(&format!("config= {}\n", self.config.canonical()));
        out.push_str(&format!(
            "samples= {} mean= {} stderr= {}\n",
            self.samples.len(),
            fmt_sig17(self.mean),
            fmt_sig17(self.mean_stderr)
        ));
        for &(n, norm2) in &self.projected_norms {
            out.push_str(&format!("projected_norm2 n= {n} value= {}\n", fmt_sig17(norm2)));
        }
        for &p in ps {
            let (v, se) = self.abs_moment(p)?;
            out.push_str(&format!(
                "abs_moment p= {} value= {} stderr= {}\n",
                fmt_sig17(p),
                fmt_sig17(v),
                fmt_sig17(se)
            ));
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Moment comparison under time stretching
// ---------------------------------------------------------------------------

/// Outcome of the two-run moment comparison ‖u_N(t)‖_p vs ‖u_N(t_p)‖₂ with
/// the stretched time t_p = (p−1)^{1/3} t of the flat noise on the line.
#[derive(Debug, Clone)]
pub struct HyperReport {
    pub p: f64,
    pub t: f64,
    pub t_stretched: f64,
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    /// rhs − lhs; nonnegative up to Monte Carlo error.
    pub margin: f64,
    /// lhs ≤ rhs + 3·(joint standard error).
    pub holds: bool,
}

impl HyperReport {
    pub fn to_text(&self) -> String {
        format!(
            "p= {} t= {} t_stretched= {}\nlhs_p_norm= {} stderr= {}\nrhs_2_norm= {} stderr= {}\nmargin= {} holds= {}\nnote= comparison of the truncated expansion at two times; the bound \
             is the Gaussian hypercontractivity estimate applied to the finite chaos sum, \
             checked here by Monte Carlo\n",
            fmt_sig17(self.p),
            fmt_sig17(self.t),
            fmt_sig17(self.t_stretched),
            fmt_sig17(self.lhs),
            fmt_sig17(self.lhs_stderr),
            fmt_sig17(self.rhs),
            fmt_sig17(self.rhs_stderr),
            fmt_sig17(self.margin),
            self.holds
        )
    }
}

/// Check ‖u_N(t)‖_p ≤ ‖u_N(t_p)‖₂ by two sampling runs sharing the seed.
///
/// The kernels scale as f̃ₙ(·; λt) = λⁿ f̃ₙ(·/λ; t), so with the basis
/// dilating along (both runs use `modes` boxes on their own light cone) the
/// projected chaos weights of the second run are exactly (p−1)ⁿ times those
/// of the first and the inequality holds for the sampled fields themselves,
/// not only in the continuum limit. p = 2 stretches by (p−1)^{1/3} = 1, so
/// both runs coincide sample for sample and the margin is exactly zero.
pub fn hypercontractivity_check(config: &SimConfig, p: f64) -> Result<HyperReport> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::Domain(format!("the comparison needs p >= 2: {p}")));
    }
    config.validate()?;
    let t_stretched = (p - 1.0).powf(1.0 / 3.0) * config.t;
    let run_l = sample_field(config)?;
    let mut config_r = config.clone();
    config_r.t = t_stretched;
    let run_r = sample_field(&config_r)?;
    let (lhs, lhs_stderr) = run_l.p_norm(p)?;
    let (rhs, rhs_stderr) = run_r.p_norm(2.0)?;
    let joint = (lhs_stderr * lhs_stderr + rhs_stderr * rhs_stderr).sqrt();
    let margin = rhs - lhs;
    Ok(HyperReport {
        p,
        t: config.t,
        t_stretched,
        lhs,
        lhs_stderr,
        rhs,
        rhs_stderr,
        margin,
        holds: lhs <= rhs + 3.0 * joint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::realspace_norm;
    use crate::kernels::NoiseSpec;
    use crate::quad::adaptive_simpson;

    fn white_line() -> NoiseSpec {
        NoiseSpec::white(1).unwrap()
    }

    #[test]
    fn first_order_coefficients_match_an_independent_quadrature() {
        let t = 1.0;
        let basis = BoxBasis::new(10, 1.25).unwrap();
        let tensor = project_kernel(1, t, &basis).unwrap();
        let w = basis.width();
        for j in 0..basis.modes() {
            let (lo, hi) = basis.edges(j);
            let oracle =
                adaptive_simpson(&|x: f64| 0.5 * relu(t - x.abs()), lo, hi, 1e-12, 40) / w.sqrt();
            assert!(
                (tensor.coefficient(&[j]) - oracle).abs() < 1e-10,
                "box {j}: {} vs {oracle}",
                tensor.coefficient(&[j])
            );
        }
    }

    #[test]
    fn boxes_outside_the_light_cone_carry_nothing() {
        // Basis wider than the cone: the outer boxes on [−2, −1] and [1, 2]
        // must be absent from every tensor.
        let basis = BoxBasis::new(16, 2.0).unwrap();
        for n in 1..=2 {
            let tensor = project_kernel(n, 1.0, &basis).unwrap();
            for j in 0..16 {
                let (lo, hi) = basis.edges(j);
                if lo >= 1.0 || hi <= -1.0 {
                    let tuple = vec![j; n];
                    assert_eq!(tensor.coefficient(&tuple), 0.0, "n={n} box {j}");
                }
            }
        }
        // Basis narrower than the cone: refuse rather than truncate.
        let narrow = BoxBasis::new(16, 0.5).unwrap();
        assert!(matches!(project_kernel(1, 1.0, &narrow), Err(Error::Coverage(_))));
    }

    #[test]
    fn parseval_ladder_rises_to_the_first_order_norm() {
        // ‖f̃₁(·; t)‖² = t³/6; the box projection is a conditional
        // expectation, so halving the width can only gain norm.
        let t = 1.0;
        let mut previous = 0.0;
        for modes in [16, 32, 64] {
            let basis = BoxBasis::new(modes, t).unwrap();
            let s = project_kernel(1, t, &basis).unwrap().parseval_sum();
            assert!(s > previous, "modes {modes}: {s} vs {previous}");
            previous = s;
        }
        assert!((previous - 1.0 / 6.0).abs() < 1e-4, "{previous}");
    }

    #[test]
    fn parseval_ladder_rises_to_the_second_order_norm() {
        let t = 1.0;
        let oracle = realspace_norm(&white_line(), 2, t).unwrap();
        let mut previous = 0.0;
        for modes in [16, 32, 64] {
            let basis = BoxBasis::new(modes, t).unwrap();
            let s = project_kernel(2, t, &basis).unwrap().parseval_sum();
            assert!(s > previous, "modes {modes}: {s} vs {previous}");
            previous = s;
        }
        let rel = (previous - oracle).abs() / oracle;
        assert!(previous < oracle + 1e-9, "projection exceeds the norm: {previous} vs {oracle}");
        assert!(rel < 4e-3, "modes 64 defect {rel:.2e} vs oracle {oracle}");
    }

    #[test]
    fn tensor_construction_rejects_malformed_entries() {
        assert!(KernelTensor::from_entries(2, 8, &[(vec![3, 1], 1.0)]).is_err());
        assert!(KernelTensor::from_entries(2, 8, &[(vec![1], 1.0)]).is_err());
        assert!(KernelTensor::from_entries(2, 8, &[(vec![1, 9], 1.0)]).is_err());
        assert!(KernelTensor::from_entries(0, 8, &[]).is_err());
        assert!(KernelTensor::from_entries(
            2,
            8,
            &[(vec![1, 2], 1.0), (vec![1, 2], 0.5)]
        )
        .is_err());
        let t = KernelTensor::from_entries(2, 8, &[(vec![1, 2], 0.0)]).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn wick_squares_of_single_tensors_match_the_norms() {
        // E[Iₙ(g)²] = n!·‖g‖² termwise; three single-entry tensors with the
        // three distinct multiplicity patterns at n = 2, 3.
        let cases: Vec<(KernelTensor, f64)> = vec![
            (
                KernelTensor::from_entries(2, 4, &[(vec![1, 1], 0.7)]).unwrap(),
                2.0 * 0.7 * 0.7,
            ),
            (
                KernelTensor::from_entries(2, 4, &[(vec![0, 2], 0.5)]).unwrap(),
                2.0 * 2.0 * 0.5 * 0.5,
            ),
            (
                KernelTensor::from_entries(3, 4, &[(vec![0, 1, 2], 0.3)]).unwrap(),
                6.0 * 6.0 * 0.3 * 0.3,
            ),
        ];
        for (k, (tensor, want)) in cases.iter().enumerate() {
            assert!((tensor.parseval_sum() * fact(tensor.order()) - want).abs() < 1e-12);
            let reps = 200_000u64;
            let acc: crate::rng::Moments =
                run_chunked(11 + k as u64, reps, |rng, len, acc: &mut crate::rng::Moments| {
                    if acc.sum.is_empty() {
                        *acc = crate::rng::Moments::with_width(1);
                    }
                    let mut z = [0.0; 4];
                    for _ in 0..len {
                        for zi in z.iter_mut() {
                            *zi = rng.sample::<f64, _>(rand_distr::StandardNormal);
                        }
                        let v = tensor.evaluate(&z);
                        acc.push(&[v * v]);
                    }
                });
            let (mean, se) = (acc.mean(0), acc.stderr(0));
            assert!(
                (mean - want).abs() < 3.0 * se,
                "case {k}: {mean} vs {want} (se {se:.2e})"
            );
        }
    }

    fn fact(n: usize) -> f64 {
        (1..=n).product::<usize>() as f64
    }

    #[test]
    fn field_mean_is_one_and_first_order_variance_is_the_norm() {
        let config = SimConfig {
            t: 1.0,
            theta: 1.0,
            order: 1,
            modes: 64,
            replicates: 100_000,
            seed: 5,
        };
        let run = sample_field(&config).unwrap();
        assert_eq!(run.samples.len(), 100_000);
        assert!(
            (run.mean - 1.0).abs() < 3.0 * run.mean_stderr,
            "mean {} stderr {}",
            run.mean,
            run.mean_stderr
        );
        // Var u = θ·‖f̃₁‖² = θt³/6, with the mode-64 projection defect two
        // orders below the Monte Carlo band.
        let (var, var_se) = run.variance();
        assert!(
            (var - 1.0 / 6.0).abs() < 3.0 * var_se,
            "var {var} stderr {var_se}"
        );
        let defect = 1.0 / 6.0 - run.projected_norms[0].1;
        assert!(defect > 0.0 && defect < 1e-4, "defect {defect}");
    }

    #[test]
    fn second_order_moment_matches_the_series_oracle() {
        let config = SimConfig {
            t: 1.0,
            theta: 1.0,
            order: 2,
            modes: 48,
            replicates: 100_000,
            seed: 6,
        };
        let run = sample_field(&config).unwrap();
        let (m2, se) = run.abs_moment(2.0).unwrap();
        // Deterministic quadrature oracle for the continuum series through
        // order 2: 1 + θ‖f̃₁‖² + 2θ²‖f̃₂‖².
        let series = 1.0
            + realspace_norm(&white_line(), 1, 1.0).unwrap()
            + 2.0 * realspace_norm(&white_line(), 2, 1.0).unwrap();
        assert!((m2 - series).abs() < 3.0 * se, "{m2} vs {series} (se {se:.2e})");
        // The sampler's own prediction from the projected tensors is tighter.
        let predicted = run.predicted_second_moment();
        assert!((m2 - predicted).abs() < 3.0 * se, "{m2} vs {predicted}");
        assert!(predicted < series);
    }

    #[test]
    fn runs_are_reproducible_and_seed_sensitive() {
        let config = SimConfig {
            t: 0.5,
            theta: 2.0,
            order: 2,
            modes: 16,
            replicates: 1_000,
            seed: 9,
        };
        let a = sample_field(&config).unwrap();
        let b = sample_field(&config).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = sample_field(&SimConfig { seed: 10, ..config.clone() }).unwrap();
        assert_ne!(a.samples, c.samples);
        // Moment calls do not disturb the stored run, and the report renders.
        let (m, se) = a.abs_moment(4.0).unwrap();
        assert!(m > 0.0 && se > 0.0);
        let text = a.report(&[2.0, 4.0]).unwrap();
        assert!(text.contains("abs_moment p= 4"));
        assert!(text.contains("projected_norm2 n= 2"));
        let csv = a.samples_csv();
        assert_eq!(csv.lines().count(), 1_001);
        assert!(csv.starts_with("u\n"));
    }

    #[test]
    fn empirical_norms_are_ordered_in_p() {
        // (E|u|²)^{1/2} ≤ (E|u|⁴)^{1/4} on the empirical measure, for any
        // sample set, by power-mean monotonicity.
        for seed in [1, 2, 3] {
            let run = sample_field(&SimConfig {
                t: 1.0,
                theta: 0.5,
                order: 2,
                modes: 24,
                replicates: 2_000,
                seed,
            })
            .unwrap();
            let (n2, _) = run.p_norm(2.0).unwrap();
            let (n4, _) = run.p_norm(4.0).unwrap();
            assert!(n2 <= n4 * (1.0 + 1e-12), "{n2} vs {n4}");
        }
    }

    #[test]
    fn zero_coupling_gives_the_constant_field() {
        let config = SimConfig {
            t: 1.0,
            theta: 0.0,
            order: 3,
            modes: 8,
            replicates: 500,
            seed: 3,
        };
        let run = sample_field(&config).unwrap();
        assert!(run.samples.iter().all(|&u| u == 1.0));
        let rep = hypercontractivity_check(&config, 3.0).unwrap();
        assert_eq!(rep.lhs, 1.0);
        assert_eq!(rep.rhs, 1.0);
        assert_eq!(rep.margin, 0.0);
        assert!(rep.holds);
    }

    #[test]
    fn equal_time_comparison_is_an_identity() {
        // p = 2 stretches time by 1, so both runs are the same run.
        let config = SimConfig {
            t: 0.9,
            theta: 1.5,
            order: 2,
            modes: 24,
            replicates: 2_000,
            seed: 17,
        };
        let rep = hypercontractivity_check(&config, 2.0).unwrap();
        assert_eq!(rep.t_stretched, rep.t);
        assert_eq!(rep.lhs.to_bits(), rep.rhs.to_bits());
        assert_eq!(rep.margin, 0.0);
        assert!(rep.holds);
        assert!(rep.to_text().contains("holds= true"));
    }

    #[test]
    fn fourth_moment_is_dominated_at_the_stretched_time() {
        let config = SimConfig {
            t: 0.8,
            theta: 2.5,
            order: 3,
            modes: 24,
            replicates: 30_000,
            seed: 21,
        };
        let rep = hypercontractivity_check(&config, 4.0).unwrap();
        assert!((rep.t_stretched - 3f64.powf(1.0 / 3.0) * 0.8).abs() < 1e-15);
        assert!(rep.holds, "{}", rep.to_text());
        // The stretch buys a strictly positive margin at these parameters,
        // visible beyond the error bars.
        assert!(
            rep.margin > (rep.lhs_stderr.powi(2) + rep.rhs_stderr.powi(2)).sqrt(),
            "margin {} lhs se {} rhs se {}",
            rep.margin,
            rep.lhs_stderr,
            rep.rhs_stderr
        );
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let good = SimConfig {
            t: 1.0,
            theta: 1.0,
            order: 2,
            modes: 16,
            replicates: 1_000,
            seed: 0,
        };
        assert!(good.validate().is_ok());
        assert!(SimConfig { t: 0.0, ..good.clone() }.validate().is_err());
        assert!(SimConfig { theta: -1.0, ..good.clone() }.validate().is_err());
        assert!(SimConfig { order: 4, ..good.clone() }.validate().is_err());
        assert!(SimConfig { order: 3, modes: 128, ..good.clone() }.validate().is_err());
        assert!(SimConfig { replicates: 10, ..good.clone() }.validate().is_err());
        assert!(hypercontractivity_check(&good, 1.5).is_err());
        assert!(project_kernel(4, 1.0, &BoxBasis::new(8, 1.0).unwrap()).is_err());
        assert!(BoxBasis::new(1, 1.0).is_err());
        assert!(BoxBasis::new(8, 0.0).is_err());
    }
}

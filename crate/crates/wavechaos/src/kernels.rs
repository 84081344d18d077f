//! Noise specifications and wave propagator kernels.
//!
//! A [`NoiseSpec`] fixes the spatial covariance structure of a centered,
//! spatially homogeneous Gaussian noise on R^d (constant in time) through a
//! covariance kernel γ and its spectral measure μ(dξ) = φ(ξ) dξ with γ = Fμ:
//!
//! * white: γ = δ₀, φ ≡ (2π)^{-d}, scaling exponent α = d;
//! * riesz: γ(x) = |x|^{-α}, φ(ξ) = C(d,α) |ξ|^{α-d}, 0 < α < d;
//! * fractional product: γ(x) = Π_i |x_i|^{-α_i}, α_i ∈ (0,1), α = Σ α_i;
//! * hybrid: γ(x) = Π_i |x^{(i)}|^{-α_i} over coordinate groups of sizes
//!   d_i with α_i ∈ (0, d_i); its spectral constant is the per-group
//!   product Π_i C(d_i, α_i), consistent with the two special cases.
//!
//! Here C(d,α) = π^{-d/2} 2^{-α} Γ((d-α)/2) / Γ(α/2). Every non-white
//! family factors as γ = K * K with K(x) = Π_i β(α_i,d_i) |x^{(i)}|^{-(d_i+α_i)/2},
//! β(α,d) = π^{-d/4} Γ((d+α)/4)/Γ((d-α)/4) · sqrt(Γ((d-α)/2)/Γ(α/2)).
//!
//! [`WaveKernel`] evaluates the wave propagator G(t, ·) and its spatial
//! Fourier transform FG(t)(ξ) = e^{-ε|ξ|²/2} sin(t|ξ|)/|ξ| (value t at
//! ξ = 0), with Gaussian mollification width ε ≥ 0. In d ≤ 2 the kernel
//! is a function and is evaluated analytically at ε = 0; in d = 3 it is a
//! measure on the sphere |x| = t and real-space evaluation requires ε > 0,
//! where G_ε(t, ·) = G(t, ·) * p_ε has the radial closed form
//!
//!   G_ε(t, x) = (4πr)^{-1} (2πε)^{-1/2} [e^{-(r-t)²/2ε} - e^{-(r+t)²/2ε}],
//!
//! r = |x|, with the r → 0 limit (4π)^{-1} (2πε)^{-1/2} (2t/ε) e^{-t²/2ε}
//! and total mass ∫ G_ε(t, x) dx = t exactly.

use crate::error::{Error, Result};
use crate::util::config_fingerprint;
use statrs::function::gamma::ln_gamma;

/// Surface area of the unit sphere S^{d-1} in R^d.
pub fn sphere_area(d: usize) -> f64 {
    let df = d as f64;
    2.0 * (0.5 * df * std::f64::consts::PI.ln() - ln_gamma(0.5 * df)).exp()
}

/// Spectral normalization C(d,α) = π^{-d/2} 2^{-α} Γ((d-α)/2) / Γ(α/2),
/// evaluated through log-gamma for stability near the endpoints.
pub fn spectral_constant(d: usize, alpha: f64) -> f64 {
    let df = d as f64;
    (-0.5 * df * std::f64::consts::PI.ln() - alpha * 2.0_f64.ln()
        + ln_gamma(0.5 * (df - alpha))
        - ln_gamma(0.5 * alpha))
        .exp()
}

/// Square-root kernel normalization β(α,d) with K * K = γ per group.
pub fn sqrt_kernel_constant(alpha: f64, d: usize) -> f64 {
    let df = d as f64;
    (-0.25 * df * std::f64::consts::PI.ln() + ln_gamma(0.25 * (df + alpha))
        - ln_gamma(0.25 * (df - alpha))
        + 0.5 * (ln_gamma(0.5 * (df - alpha)) - ln_gamma(0.5 * alpha)))
        .exp()
}

/// Noise covariance family.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseFamily {
    White,
    Riesz { alpha: f64 },
    FractionalProduct { alphas: Vec<f64> },
    Hybrid { group_dims: Vec<usize>, alphas: Vec<f64> },
}

/// Admissible noise specification in dimension d ≤ 3.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    d: usize,
    family: NoiseFamily,
}

impl NoiseSpec {
    pub fn white(d: usize) -> Result<Self> {
        Self::check_dim(d)?;
        Ok(Self { d, family: NoiseFamily::White })
    }

    pub fn riesz(d: usize, alpha: f64) -> Result<Self> {
        Self::check_dim(d)?;
        if !(alpha > 0.0 && alpha < d as f64) {
            return Err(Error::InvalidSpec(format!(
                "riesz exponent must satisfy 0 < alpha < d: alpha={alpha}, d={d}"
            )));
        }
        Ok(Self { d, family: NoiseFamily::Riesz { alpha } })
    }

    pub fn fractional(alphas: &[f64]) -> Result<Self> {
        let d = alphas.len();
        Self::check_dim(d)?;
        for &a in alphas {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidSpec(format!(
                    "fractional product exponents must lie in (0,1): {a}"
                )));
            }
        }
        Ok(Self {
            d,
            family: NoiseFamily::FractionalProduct { alphas: alphas.to_vec() },
        })
    }

    pub fn hybrid(groups: &[(usize, f64)]) -> Result<Self> {
        let d: usize = groups.iter().map(|g| g.0).sum();
        Self::check_dim(d)?;
        if groups.is_empty() {
            return Err(Error::InvalidSpec("hybrid spec needs at least one group".into()));
        }
        for &(di, ai) in groups {
            if di == 0 {
                return Err(Error::InvalidSpec("hybrid group of dimension 0".into()));
            }
            if !(ai > 0.0 && ai < di as f64) {
                return Err(Error::InvalidSpec(format!(
                    "hybrid exponent must satisfy 0 < alpha_i < d_i: alpha_i={ai}, d_i={di}"
                )));
            }
        }
        Ok(Self {
            d,
            family: NoiseFamily::Hybrid {
                group_dims: groups.iter().map(|g| g.0).collect(),
                alphas: groups.iter().map(|g| g.1).collect(),
            },
        })
    }

    fn check_dim(d: usize) -> Result<()> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidSpec(format!("dimension must be 1, 2, or 3: {d}")));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn family(&self) -> &NoiseFamily {
        &self.family
    }

    /// Scaling exponent α: φ(cξ) = c^{α-d} φ(ξ). White noise scales with
    /// exponent d (φ constant).
    pub fn alpha(&self) -> f64 {
        match &self.family {
            NoiseFamily::White => self.d as f64,
            NoiseFamily::Riesz { alpha } => *alpha,
            NoiseFamily::FractionalProduct { alphas } => alphas.iter().sum(),
            NoiseFamily::Hybrid { alphas, .. } => alphas.iter().sum(),
        }
    }

    /// Critical regime marker: α = d = 3 with flat spectrum. Moment bounds
    /// downstream switch from exponential-of-power to radius statements here.
    pub fn is_critical(&self) -> bool {
        matches!(self.family, NoiseFamily::White) && self.d == 3
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Precondition(format!(
                "point has dimension {}, spec has dimension {}",
                x.len(),
                self.d
            )));
        }
        Ok(())
    }

    fn group_slices<'a>(&self, x: &'a [f64]) -> Vec<(&'a [f64], f64, usize)> {
        // (group coordinates, alpha_i, d_i) per group
        match &self.family {
            NoiseFamily::White => vec![],
            NoiseFamily::Riesz { alpha } => vec![(x, *alpha, self.d)],
            NoiseFamily::FractionalProduct { alphas } => x
                .iter()
                .zip(alphas)
                .enumerate()
                .map(|(i, (_, &a))| (&x[i..=i], a, 1))
                .collect(),
            NoiseFamily::Hybrid { group_dims, alphas } => {
                let mut out = Vec::with_capacity(group_dims.len());
                let mut off = 0;
                for (&di, &ai) in group_dims.iter().zip(alphas) {
                    out.push((&x[off..off + di], ai, di));
                    off += di;
                }
                out
            }
        }
    }

    /// Covariance kernel γ(x). Undefined for white noise (γ = δ₀) and
    /// singular where any group norm vanishes.
    pub fn covariance(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        if matches!(self.family, NoiseFamily::White) {
            return Err(Error::Unsupported(
                "white noise covariance is a point mass, not a function".into(),
            ));
        }
        let mut val = 1.0;
        for (g, a, _) in self.group_slices(x) {
            let r = norm(g);
            if r == 0.0 {
                return Err(Error::Domain(
                    "covariance is singular where a group norm vanishes".into(),
                ));
            }
            val *= r.powf(-a);
        }
        Ok(val)
    }

    /// Spectral density φ(ξ) of μ(dξ) = φ(ξ) dξ. Singular at ξ group norms
    /// equal to zero for the non-white families.
    pub fn spectral_density(&self, xi: &[f64]) -> Result<f64> {
        self.check_point(xi)?;
        match &self.family {
            NoiseFamily::White => {
                Ok((2.0 * std::f64::consts::PI).powi(-(self.d as i32)))
            }
            _ => {
                let mut val = 1.0;
                for (g, a, di) in self.group_slices(xi) {
                    let r = norm(g);
                    if r == 0.0 {
                        return Err(Error::Domain(
                            "spectral density is singular where a group norm vanishes".into(),
                        ));
                    }
                    val *= spectral_constant(di, a) * r.powf(a - di as f64);
                }
                Ok(val)
            }
        }
    }

    /// Square-root kernel K with K * K = γ. Not available for white noise.
    pub fn sqrt_kernel(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        if matches!(self.family, NoiseFamily::White) {
            return Err(Error::Unsupported(
                "white noise has no locally integrable square-root kernel".into(),
            ));
        }
        let mut val = 1.0;
        for (g, a, di) in self.group_slices(x) {
            let r = norm(g);
            if r == 0.0 {
                return Err(Error::Domain("square-root kernel singular at 0".into()));
            }
            val *= sqrt_kernel_constant(a, di) * r.powf(-0.5 * (di as f64 + a));
        }
        Ok(val)
    }

    /// Sphere average weight ∫_{S^{d-1}} φ dσ = α μ(B₁), in closed form
    /// for every family (Gaussian-integral factorization over groups).
    pub fn sphere_weight(&self) -> f64 {
        match &self.family {
            NoiseFamily::White => {
                (2.0 * std::f64::consts::PI).powi(-(self.d as i32)) * sphere_area(self.d)
            }
            NoiseFamily::Riesz { alpha } => {
                spectral_constant(self.d, *alpha) * sphere_area(self.d)
            }
            NoiseFamily::FractionalProduct { alphas } => {
                let groups: Vec<(usize, f64)> = alphas.iter().map(|&a| (1, a)).collect();
                product_sphere_weight(&groups)
            }
            NoiseFamily::Hybrid { group_dims, alphas } => {
                let groups: Vec<(usize, f64)> =
                    group_dims.iter().zip(alphas).map(|(&d, &a)| (d, a)).collect();
                product_sphere_weight(&groups)
            }
        }
    }

    /// Canonical configuration block: fixed key set, one `key = value` per
    /// line. Parsed back by [`NoiseSpec::parse_config_block`].
    pub fn to_config_block(&self) -> String {
        let mut s = String::new();
        match &self.family {
            NoiseFamily::White => {
                s.push_str("family = white\n");
                s.push_str(&format!("d = {}\n", self.d));
            }
            NoiseFamily::Riesz { alpha } => {
                s.push_str("family = riesz\n");
                s.push_str(&format!("d = {}\n", self.d));
                s.push_str(&format!("alpha = {}\n", fmt_param(*alpha)));
            }
            NoiseFamily::FractionalProduct { alphas } => {
                s.push_str("family = fractional_product\n");
                s.push_str(&format!("d = {}\n", self.d));
                s.push_str(&format!("alphas = {}\n", join_params(alphas)));
            }
            NoiseFamily::Hybrid { group_dims, alphas } => {
                s.push_str("family = hybrid\n");
                s.push_str(&format!("d = {}\n", self.d));
                s.push_str(&format!("alphas = {}\n", join_params(alphas)));
                s.push_str(&format!(
                    "groups = {}\n",
                    group_dims.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(", ")
                ));
            }
        }
        s
    }

    /// Strict parser for the configuration block: exactly the keys
    /// `family`, `d`, `alpha`/`alphas`, `groups` as applicable; unknown,
    /// duplicate, or missing keys are configuration errors.
    pub fn parse_config_block(text: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let k = k.trim().to_string();
            if kv.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("duplicate key {k}")));
            }
        }
        let family = kv
            .remove("family")
            .ok_or_else(|| Error::Config("missing key family".into()))?;
        let d: usize = kv
            .remove("d")
            .ok_or_else(|| Error::Config("missing key d".into()))?
            .parse()
            .map_err(|_| Error::Config("d must be a positive integer".into()))?;
        let alpha = kv.remove("alpha");
        let alphas = kv.remove("alphas");
        let groups = kv.remove("groups");
        if let Some(k) = kv.keys().next() {
            return Err(Error::Config(format!("unknown key {k}")));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad numeric value {s}")))
        };
        let parse_list = |s: &str| -> Result<Vec<f64>> {
            s.split(',').map(parse_f).collect()
        };
        let reject = |cond: bool, what: &str| -> Result<()> {
            if cond {
                Err(Error::Config(format!("key {what} not allowed for this family")))
            } else {
                Ok(())
            }
        };
        match family.as_str() {
            "white" => {
                reject(alpha.is_some(), "alpha")?;
                reject(alphas.is_some(), "alphas")?;
                reject(groups.is_some(), "groups")?;
                Self::white(d)
            }
            "riesz" => {
                reject(alphas.is_some(), "alphas")?;
                reject(groups.is_some(), "groups")?;
                let a = parse_f(&alpha.ok_or_else(|| Error::Config("riesz needs alpha".into()))?)?;
                Self::riesz(d, a)
            }
            "fractional_product" => {
                reject(alpha.is_some(), "alpha")?;
                reject(groups.is_some(), "groups")?;
                let list = parse_list(
                    &alphas.ok_or_else(|| Error::Config("fractional_product needs alphas".into()))?,
                )?;
                if list.len() != d {
                    return Err(Error::Config(format!(
                        "fractional_product needs {d} exponents, got {}",
                        list.len()
                    )));
                }
                Self::fractional(&list)
            }
            "hybrid" => {
                reject(alpha.is_some(), "alpha")?;
                let list = parse_list(
                    &alphas.ok_or_else(|| Error::Config("hybrid needs alphas".into()))?,
                )?;
                let dims: Vec<usize> = groups
                    .ok_or_else(|| Error::Config("hybrid needs groups".into()))?
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::Config(format!("bad group size {s}")))
                    })
                    .collect::<Result<_>>()?;
                if dims.len() != list.len() {
                    return Err(Error::Config("groups and alphas lengths differ".into()));
                }
                if dims.iter().sum::<usize>() != d {
                    return Err(Error::Config("group sizes must sum to d".into()));
                }
                let pairs: Vec<(usize, f64)> =
                    dims.into_iter().zip(list).collect();
                Self::hybrid(&pairs)
            }
            other => Err(Error::Config(format!("unknown family {other}"))),
        }
    }

    /// Stable fingerprint of the canonical configuration block.
    pub fn fingerprint(&self) -> String {
        config_fingerprint(&self.to_config_block())
    }
}

fn norm(x: &[f64]) -> f64 {
    // Scaled to survive coordinates near the extremes of the double range;
    // naive squaring would underflow to 0 and falsely trip singularity
    // guards at quadrature nodes extremely close to the origin.
    let m = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    let s: f64 = x
        .iter()
        .map(|v| {
            let r = v / m;
            r * r
        })
        .sum();
    m * s.sqrt()
}

fn fmt_param(x: f64) -> String {
    // Shortest representation that round-trips; keeps config blocks readable.
    let s = format!("{x}");
    if s.parse::<f64>() == Ok(x) {
        s
    } else {
        format!("{x:.17}")
    }
}

fn join_params(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_param(x)).collect::<Vec<_>>().join(", ")
}

/// ∫_{S^{d-1}} Π_i |u^{(i)}|^{α_i - d_i} dσ times the spectral constants:
/// the closed-form sphere weight for product-structured densities,
/// 2^{1-k} Π_i [ω_{d_i-1} Γ(α_i/2)] / Γ(α/2) · Π_i C(d_i, α_i).
fn product_sphere_weight(groups: &[(usize, f64)]) -> f64 {
    let k = groups.len();
    let alpha: f64 = groups.iter().map(|g| g.1).sum();
    let mut log = (1.0 - k as f64) * 2.0_f64.ln() - ln_gamma(0.5 * alpha);
    let mut c = 1.0;
    for &(di, ai) in groups {
        log += sphere_area(di).ln() + ln_gamma(0.5 * ai);
        c *= spectral_constant(di, ai);
    }
    c * log.exp()
}

/// Wave propagator with Gaussian mollification width ε ≥ 0.
#[derive(Debug, Clone, Copy)]
pub struct WaveKernel {
    d: usize,
    epsilon: f64,
}

impl WaveKernel {
    /// d ≤ 2 requires ε = 0 (analytic real-space form); d = 3 accepts any
    /// ε ≥ 0 but real-space evaluation then requires ε > 0.
    pub fn new(d: usize, epsilon: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidSpec(format!("wave kernel dimension must be 1..3: {d}")));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidSpec("mollification width must be >= 0".into()));
        }
        if d <= 2 && epsilon != 0.0 {
            return Err(Error::InvalidSpec(
                "d <= 2 real-space kernel is analytic only at epsilon = 0".into(),
            ));
        }
        Ok(Self { d, epsilon })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Total mass ∫ G(t, x) dx = t, preserved exactly by mollification.
    pub fn mass(&self, t: f64) -> f64 {
        t
    }

    /// Real-space evaluation of G (d ≤ 2) or G_ε (d = 3, ε > 0).
    pub fn real(&self, t: f64, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::Precondition(format!(
                "point has dimension {}, kernel has dimension {}",
                x.len(),
                self.d
            )));
        }
        if !(t >= 0.0) {
            return Err(Error::Precondition("time must be >= 0".into()));
        }
        let r = norm(x);
        match self.d {
            1 => Ok(if r < t { 0.5 } else { 0.0 }),
            2 => {
                if r > t {
                    Ok(0.0)
                } else if r == t {
                    Err(Error::Domain(
                        "d=2 kernel is singular on the light cone |x| = t".into(),
                    ))
                } else {
                    Ok(1.0 / (2.0 * std::f64::consts::PI * (t * t - r * r).sqrt()))
                }
            }
            3 => {
                if self.epsilon == 0.0 {
                    return Err(Error::Domain(
                        "d=3 kernel is a sphere measure; real-space evaluation needs epsilon > 0"
                            .into(),
                    ));
                }
                Ok(self.mollified3(t, r))
            }
            _ => unreachable!(),
        }
    }

    /// Radial d = 3 mollified kernel; stable in both the r t/ε small
    /// (sinhc series) and large (two Gaussians) regimes.
    fn mollified3(&self, t: f64, r: f64) -> f64 {
        let eps = self.epsilon;
        let pref = 1.0 / (4.0 * std::f64::consts::PI)
            / (2.0 * std::f64::consts::PI * eps).sqrt();
        let z = r * t / eps;
        if z < 0.5 {
            // (e^{-(r-t)^2/2e} - e^{-(r+t)^2/2e})/r = (2t/e) e^{-(r^2+t^2)/2e} sinhc(z)
            let sinhc = if z < 1e-4 {
                1.0 + z * z / 6.0
            } else {
                z.sinh() / z
            };
            pref * (2.0 * t / eps) * (-(r * r + t * t) / (2.0 * eps)).exp() * sinhc
        } else {
            let a = (-(r - t) * (r - t) / (2.0 * eps)).exp();
            let b = (-(r + t) * (r + t) / (2.0 * eps)).exp();
            pref * (a - b) / r
        }
    }

    /// Fourier side FG(t)(ξ) = e^{-ε|ξ|²/2} sin(t|ξ|)/|ξ|, value t at ξ = 0.
    pub fn fourier(&self, t: f64, xi: &[f64]) -> f64 {
        self.fourier_radial(t, norm(xi))
    }

    /// FG as a function of ρ = |ξ|.
    pub fn fourier_radial(&self, t: f64, rho: f64) -> f64 {
        let moll = if self.epsilon > 0.0 {
            (-0.5 * self.epsilon * rho * rho).exp()
        } else {
            1.0
        };
        moll * fourier_sine_radial(t, rho)
    }
}

/// sin(tρ)/ρ with the continuous value t at ρ = 0.
pub fn fourier_sine_radial(t: f64, rho: f64) -> f64 {
    let w = t * rho;
    if w.abs() < 1e-6 {
        // t (1 - w^2/6 + w^4/120)
        t * (1.0 - w * w / 6.0 * (1.0 - w * w / 20.0))
    } else {
        (w).sin() / rho
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{de_sing0, gauss_legendre};
    use proptest::prelude::*;

    fn beta_fn(a: f64, b: f64) -> f64 {
        (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
    }

    #[test]
    fn covariance_examples() {
        // riesz d=3 alpha=2 at |x| = 3
        let s = NoiseSpec::riesz(3, 2.0).unwrap();
        let v = s.covariance(&[1.0, 2.0, 2.0]).unwrap();
        assert!((v - 1.0 / 9.0).abs() < 1e-15);
        // fractional product d=2
        let s = NoiseSpec::fractional(&[0.5, 0.5]).unwrap();
        let v = s.covariance(&[4.0, 0.25]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // singular point is a domain error
        assert!(matches!(s.covariance(&[0.0, 1.0]), Err(Error::Domain(_))));
        // white has no covariance function
        let s = NoiseSpec::white(1).unwrap();
        assert!(matches!(s.covariance(&[1.0]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn spectral_density_examples() {
        let s = NoiseSpec::white(2).unwrap();
        let v = s.spectral_density(&[5.0, -3.0]).unwrap();
        let expect = (2.0 * std::f64::consts::PI).powi(-2);
        assert!((v - expect).abs() < 1e-18);

        // riesz d=2 alpha=1: C(2,1) = 1/(2 pi), phi(xi) = C |xi|^{-1}
        let s = NoiseSpec::riesz(2, 1.0).unwrap();
        let v = s.spectral_density(&[3.0, 4.0]).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI) / 5.0).abs() < 1e-15);

        let s = NoiseSpec::fractional(&[0.3, 0.7]).unwrap();
        let v = s.spectral_density(&[2.0, -1.0]).unwrap();
        let expect = spectral_constant(1, 0.3) * 2.0_f64.powf(0.3 - 1.0)
            * spectral_constant(1, 0.7);
        assert!((v - expect).abs() < 1e-15 * expect);
    }

    #[test]
    fn riesz_constants_match_known_values() {
        // C(2,1) = pi^{-1} 2^{-1} Gamma(1/2)/Gamma(1/2) = 1/(2 pi)
        let c = spectral_constant(2, 1.0);
        assert!((c - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        // C(3,2) = pi^{-3/2} 2^{-2} Gamma(1/2)/Gamma(1) = 1/(4 pi)
        let c = spectral_constant(3, 2.0);
        assert!((c - 1.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn sqrt_kernel_squares_to_covariance_in_closed_form() {
        // d=1, alpha=1/2: the convolution integral of K*K at x=1 reduces to
        // beta functions: beta^2 [B(1/4,1/4) + 2 B(1/4,1/2)] = gamma(1) = 1.
        let b = sqrt_kernel_constant(0.5, 1);
        let closed = b * b * (beta_fn(0.25, 0.25) + 2.0 * beta_fn(0.25, 0.5));
        assert!((closed - 1.0).abs() < 1e-12, "closed={closed}");
    }

    #[test]
    fn sqrt_kernel_squares_to_covariance_by_quadrature() {
        // Same identity, evaluated numerically: gamma(x) = int K(y) K(x-y) dy
        // at x = 1 for riesz d=1 alpha=1/2, using the de rule on each
        // singular piece and a 1/u map on the tails.
        let s = NoiseSpec::riesz(1, 0.5).unwrap();
        let k = |y: f64| s.sqrt_kernel(&[y]).unwrap();
        // int_0^1 K(y) K(1-y) dy, split at 1/2 so each singular end sits
        // at the origin of a de rule.
        let inner = de_sing0(|y| k(y) * k(1.0 - y), 0.5, 1e-11)
            + de_sing0(|y| k(1.0 - y) * k(y), 0.5, 1e-11);
        // int_1^2: v = y - 1 in (0,1], singular at v = 0.
        let mid = de_sing0(|v| k(1.0 + v) * k(v), 1.0, 1e-11);
        // int_2^inf after y = 1 + 1/v: K(1+1/v) K(1/v) / v^2
        //   = beta^2 v^{-1/2} (1+v)^{-3/4}, combined analytically because
        // the raw product under/overflows near v = 0.
        let b0 = sqrt_kernel_constant(0.5, 1);
        let tail = de_sing0(|v| b0 * b0 * v.powf(-0.5) * (1.0 + v).powf(-0.75), 1.0, 1e-11);
        let total = inner + 2.0 * (mid + tail);
        let gamma1 = s.covariance(&[1.0]).unwrap();
        assert!(
            (total - gamma1).abs() < 1e-6,
            "quadrature {total} vs gamma(1) = {gamma1}"
        );
    }

    #[test]
    fn sphere_weight_closed_forms() {
        // white d=1: (2 pi)^{-1} * 2 = 1/pi
        let s = NoiseSpec::white(1).unwrap();
        assert!((s.sphere_weight() - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        // riesz d=2 alpha=1: C(2,1) * 2 pi = 1
        let s = NoiseSpec::riesz(2, 1.0).unwrap();
        assert!((s.sphere_weight() - 1.0).abs() < 1e-14);
        // hybrid with one group must reduce to riesz
        let h = NoiseSpec::hybrid(&[(2, 1.0)]).unwrap();
        let r = NoiseSpec::riesz(2, 1.0).unwrap();
        assert!((h.sphere_weight() - r.sphere_weight()).abs() < 1e-14);
        // fractional d=2 vs direct angular quadrature of phi on S^1; the
        // density is endpoint-singular on the quarter circle, so integrate
        // each half with the double-exponential rule (symmetric halves
        // swap the roles of the two coordinates).
        let s = NoiseSpec::fractional(&[0.5, 0.8]).unwrap();
        let q = std::f64::consts::FRAC_PI_4;
        let h1 = de_sing0(
            |th| s.spectral_density(&[th.cos(), th.sin()]).unwrap(),
            q,
            1e-12,
        );
        let h2 = de_sing0(
            |th| s.spectral_density(&[th.sin(), th.cos()]).unwrap(),
            q,
            1e-12,
        );
        let quarter = h1 + h2;
        assert!(
            (s.sphere_weight() - 4.0 * quarter).abs() < 1e-8 * s.sphere_weight(),
            "closed {} vs quad {}",
            s.sphere_weight(),
            4.0 * quarter
        );
    }

    #[test]
    fn wave_kernel_d1_d2_values() {
        let k1 = WaveKernel::new(1, 0.0).unwrap();
        assert_eq!(k1.real(2.0, &[1.5]).unwrap(), 0.5);
        assert_eq!(k1.real(2.0, &[2.5]).unwrap(), 0.0);

        let k2 = WaveKernel::new(2, 0.0).unwrap();
        let v = k2.real(2.0, &[1.0, 1.0]).unwrap();
        let expect = 1.0 / (2.0 * std::f64::consts::PI * (4.0 - 2.0_f64).sqrt());
        assert!((v - expect).abs() < 1e-15);
        assert!(matches!(k2.real(1.0, &[0.6, 0.8]), Err(Error::Domain(_))));
        assert!(WaveKernel::new(2, 0.1).is_err());
    }

    #[test]
    fn wave_kernel_d3_center_value_and_sphere_average() {
        // G_eps(t, 0) = t p_eps(t) where p_eps is the centered Gaussian
        // density, as the sphere average of p_eps(x - y) at x = 0.
        let eps = 0.01;
        let k = WaveKernel::new(3, eps).unwrap();
        let t = 1.0;
        let v = k.real(t, &[0.0, 0.0, 0.0]).unwrap();
        let expect = t * (2.0 * std::f64::consts::PI * eps).powf(-1.5)
            * (-t * t / (2.0 * eps)).exp();
        assert!((v - expect).abs() < 1e-12 * expect.max(1e-300));
    }

    #[test]
    fn wave_kernel_d3_mass_is_t() {
        let eps = 0.05;
        let k = WaveKernel::new(3, eps).unwrap();
        let t = 0.8;
        let rule = gauss_legendre(64);
        let mass = rule.integrate_composite(0.0, t + 14.0 * eps.sqrt(), 40, |r| {
            4.0 * std::f64::consts::PI * r * r * k.real(t, &[r, 0.0, 0.0]).unwrap()
        });
        assert!((mass - t).abs() < 1e-10, "mass={mass}");
    }

    #[test]
    fn wave_kernel_d3_realspace_matches_fourier_by_radial_transform() {
        // F G_eps(t)(xi) = (4 pi / rho) int_0^inf r sin(rho r) G_eps(t, r) dr
        let eps = 0.04;
        let k = WaveKernel::new(3, eps).unwrap();
        let t = 0.7;
        let rule = gauss_legendre(64);
        for rho in [0.5, 1.0, 3.0] {
            let upper = t + 14.0 * eps.sqrt();
            let val = rule.integrate_composite(0.0, upper, 60, |r| {
                r * (rho * r).sin() * k.real(t, &[r, 0.0, 0.0]).unwrap()
            }) * 4.0
                * std::f64::consts::PI
                / rho;
            let expect = k.fourier_radial(t, rho);
            assert!(
                (val - expect).abs() < 1e-8,
                "rho={rho} val={val} expect={expect}"
            );
        }
    }

    #[test]
    fn fourier_value_at_zero_is_t() {
        let k = WaveKernel::new(3, 0.0).unwrap();
        assert_eq!(k.fourier(2.5, &[0.0, 0.0, 0.0]), 2.5);
        let k1 = WaveKernel::new(1, 0.0).unwrap();
        // small-rho series branch continuity
        let a = k1.fourier_radial(2.5, 1e-7);
        let b = k1.fourier_radial(2.5, 2e-6);
        assert!((a - 2.5).abs() < 1e-12);
        assert!((b - (2.5e-6_f64 * 2.0).sin() / 2e-6).abs() < 1e-12);
    }

    #[test]
    fn config_block_round_trip_and_strictness() {
        let specs = vec![
            NoiseSpec::white(3).unwrap(),
            NoiseSpec::riesz(2, 1.5).unwrap(),
            NoiseSpec::fractional(&[0.25, 0.5]).unwrap(),
            NoiseSpec::hybrid(&[(1, 0.5), (2, 1.2)]).unwrap(),
        ];
        for s in specs {
            let block = s.to_config_block();
            let back = NoiseSpec::parse_config_block(&block).unwrap();
            assert_eq!(s, back, "{block}");
            assert_eq!(s.fingerprint(), back.fingerprint());
        }
        assert!(NoiseSpec::parse_config_block("family = white\nd = 1\nbogus = 3\n").is_err());
        assert!(NoiseSpec::parse_config_block("family = riesz\nd = 2\n").is_err());
        assert!(NoiseSpec::parse_config_block(
            "family = white\nd = 1\nd = 2\n"
        )
        .is_err());
        assert!(NoiseSpec::parse_config_block("family = white\nd = 1\nalpha = 1\n").is_err());
    }

    #[test]
    fn admissibility_is_enforced() {
        assert!(NoiseSpec::riesz(2, 2.0).is_err());
        assert!(NoiseSpec::riesz(2, 0.0).is_err());
        assert!(NoiseSpec::fractional(&[0.5, 1.0]).is_err());
        assert!(NoiseSpec::hybrid(&[(1, 0.5), (2, 2.0)]).is_err());
        assert!(NoiseSpec::white(4).is_err());
        assert!(NoiseSpec::hybrid(&[(2, 1.0), (2, 1.0)]).is_err()); // d = 4
    }

    #[test]
    fn alpha_aggregates_group_exponents() {
        assert_eq!(NoiseSpec::white(3).unwrap().alpha(), 3.0);
        assert_eq!(NoiseSpec::riesz(3, 1.7).unwrap().alpha(), 1.7);
        let s = NoiseSpec::hybrid(&[(1, 0.5), (2, 1.2)]).unwrap();
        assert!((s.alpha() - 1.7).abs() < 1e-15);
        assert!(NoiseSpec::white(3).unwrap().is_critical());
        assert!(!NoiseSpec::white(2).unwrap().is_critical());
        assert!(!NoiseSpec::riesz(3, 2.9).unwrap().is_critical());
    }

    proptest! {
        // gamma(cx) = c^{-alpha} gamma(x) and phi(c xi) = c^{alpha-d} phi(xi)
        #[test]
        fn scaling_laws_hold(
            c in 0.1_f64..10.0,
            x0 in 0.05_f64..3.0,
            x1 in 0.05_f64..3.0,
            a0 in 0.1_f64..0.9,
            a1 in 0.1_f64..0.9,
        ) {
            let s = NoiseSpec::fractional(&[a0, a1]).unwrap();
            let x = [x0, x1];
            let cx = [c * x0, c * x1];
            let alpha = s.alpha();
            let g = s.covariance(&x).unwrap();
            let gc = s.covariance(&cx).unwrap();
            prop_assert!((gc - c.powf(-alpha) * g).abs() <= 1e-10 * gc.abs().max(1e-10));
            let p = s.spectral_density(&x).unwrap();
            let pc = s.spectral_density(&cx).unwrap();
            prop_assert!((pc - c.powf(alpha - 2.0) * p).abs() <= 1e-10 * pc.abs().max(1e-10));
        }

        // FG(t)(c xi) = (1/c) FG(ct)(xi) at eps = 0
        #[test]
        fn propagator_scaling(
            c in 0.2_f64..5.0,
            t in 0.1_f64..3.0,
            rho in 0.001_f64..20.0,
        ) {
            let k = WaveKernel::new(1, 0.0).unwrap();
            let lhs = k.fourier_radial(t, c * rho);
            let rhs = k.fourier_radial(c * t, rho) / c;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-10));
        }
    }
}

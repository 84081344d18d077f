//! Series-rate tooling for the moment expansion.
//!
//! The second moment of the solution is a power series in time whose
//! coefficients come from the chaos-kernel norms. Everything here works
//! on that series and its relatives:
//!
//! - `mittag_leffler_limit` evaluates t^{−1/γ} log Σₙ tⁿ/(n!)^γ, the
//!   normalized growth functional whose large-t limit is γ.
//! - `stirling_rate_check` tabulates (1/n) log(Γ(an+1)/(n!)^a), which
//!   converges to a·log a; the bridge between the two factorial
//!   normalizations of the coefficient sequence.
//! - `fit_rate` extracts an exponential rate from positive coefficients
//!   by least squares on log Rₙ, giving the radius of convergence
//!   exp(−rate) of Σ Rₙ xⁿ.
//! - `critical_times` evaluates the blow-up times of the spatially
//!   white d = 3 case: T_p = √2/(θ(p−1)√M) from the series radius and
//!   the Dalang-type bound T_p′ = 4π/(θ(p−1)), with the chain
//!   T_p ≥ 2π²/(θ(p−1)) ≥ T_p′ tracked whenever M ≤ 1/(2π⁴).
//! - `asymptotic_constant` evaluates the closed-form growth constants
//!   of log-moments: with β = (4−α)/(3−α) and the base factor
//!   b = θ^{1/(3−α)} (1/2)^{α/(2(3−α))} (2√M/(4−α))^β, the p-norm rate
//!   is b(3−α)/2, the second-moment rate b(3−α), the fixed-p moment
//!   rate p(p−1)^{1/(3−α)} b(3−α)/2, and the fixed-t large-p rate
//!   t^β b(3−α)/2.
//! - `series_growth_probe` sums the truncated series
//!   Σₙ θⁿ t^{(4−α)n} Rₙ/(n!)^{3−α} on a time grid in log space and
//!   fits both the growth exponent (against β) and the constant in
//!   front of t^β (against (3−α)(θR)^{1/(3−α)} for geometric Rₙ = Rⁿ).
//!
//! All sums run in log space with a 36-log-unit tail cutoff so that tⁿ
//! never overflows.

use crate::kernels::NoiseSpec;
use crate::util::fmt_sig17;
use crate::{Error, Result};
use statrs::function::gamma::ln_gamma;

/// Terms this far below the running maximum in log space are dropped.
const LOG_TAIL_CUTOFF: f64 = 36.0;

/// Normalized growth functional of the stretched exponential series:
/// t^{−1/γ} log Σ_{n≥0} tⁿ/(n!)^γ, which tends to γ as t → ∞.
///
/// The sum runs in log space: terms n log t − γ log Γ(n+1) rise to a
/// single peak near n ≈ t^{1/γ} and then fall; summation stops once a
/// term drops 36 log units below the peak.
pub fn mittag_leffler_limit(gamma_exp: f64, t: f64) -> Result<f64> {
    if !(gamma_exp > 0.0 && gamma_exp.is_finite()) {
        return Err(Error::Domain(format!("gamma must be positive: {gamma_exp}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("evaluation point must be positive: {t}")));
    }
    let ln_t = t.ln();
    let mut max_log = 0.0f64; // n = 0 term
    let mut terms = vec![0.0f64];
    let mut n = 1usize;
    loop {
        let term = n as f64 * ln_t - gamma_exp * ln_gamma(n as f64 + 1.0);
        if term > max_log {
            max_log = term;
        } else if term < max_log - LOG_TAIL_CUTOFF {
            break;
        }
        terms.push(term);
        n += 1;
    }
    let sum: f64 = terms.iter().map(|&v| (v - max_log).exp()).sum();
    let log_total = max_log + sum.ln();
    Ok(t.powf(-1.0 / gamma_exp) * log_total)
}

/// The sequence (1/n) log(Γ(an+1)/(n!)^a) together with its limit
/// a·log a.
#[derive(Clone, Debug)]
pub struct StirlingRateReport {
    pub a: f64,
    /// (n, value) for n = 1..=n_max.
    pub sequence: Vec<(usize, f64)>,
    /// a·log a.
    pub limit: f64,
}

impl StirlingRateReport {
    /// CSV with columns n, value, limit.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,value,limit\n");
        for (n, v) in &self.sequence {
            out.push_str(&format!("{},{},{}\n", n, fmt_sig17(*v), fmt_sig17(self.limit)));
        }
        out
    }
}

/// Tabulates (1/n) log(Γ(an+1)/(n!)^a) for n = 1..=n_max via log-Gamma
/// and reports the limit a·log a it converges to.
pub fn stirling_rate_check(a: f64, n_max: usize) -> Result<StirlingRateReport> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("rate parameter must be positive: {a}")));
    }
    if n_max == 0 {
        return Err(Error::Precondition("need at least one index".into()));
    }
    let sequence = (1..=n_max)
        .map(|n| {
            let nf = n as f64;
            (n, (ln_gamma(a * nf + 1.0) - a * ln_gamma(nf + 1.0)) / nf)
        })
        .collect();
    Ok(StirlingRateReport { a, sequence, limit: a * a.ln() })
}

/// Exponential-rate fit of a positive coefficient sequence.
#[derive(Clone, Debug)]
pub struct SeriesProbe {
    /// The supplied (n, Rₙ) pairs, sorted by n.
    pub coefficients: Vec<(usize, f64)>,
    /// Inclusive index window the fit used.
    pub window: (usize, usize),
    /// Least-squares slope of log Rₙ on n over the window.
    pub rate: f64,
    /// Standard error of the slope.
    pub rate_stderr: f64,
    /// exp(−rate): radius of convergence of Σ Rₙ xⁿ.
    pub radius: f64,
}

impl SeriesProbe {
    /// CSV with columns n, coefficient, log_coefficient, in_window.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,coefficient,log_coefficient,in_window\n");
        for (n, r) in &self.coefficients {
            let used = *n >= self.window.0 && *n <= self.window.1;
            out.push_str(&format!(
                "{},{},{},{}\n",
                n,
                fmt_sig17(*r),
                fmt_sig17(r.ln()),
                used
            ));
        }
        out
    }
}

/// Ordinary least squares of ys on xs: (slope, intercept, slope stderr).
fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let k = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / k;
    let ybar = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let dof = (k - 2.0).max(1.0);
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    (slope, intercept, (ss_res / dof / sxx).sqrt())
}

/// Fits log Rₙ = rate·n + const by least squares over a window of the
/// supplied coefficients and reports radius = exp(−rate).
///
/// `window` is an inclusive index range; the default is the last half
/// of the supplied indices (early-n transients bias the slope). At
/// least 4 points must fall in the window and every coefficient must
/// be positive.
pub fn fit_rate(coefficients: &[(usize, f64)], window: Option<(usize, usize)>) -> Result<SeriesProbe> {
    let mut coeffs = coefficients.to_vec();
    coeffs.sort_by_key(|&(n, _)| n);
    coeffs.dedup_by_key(|&mut (n, _)| n);
    if coeffs.len() != coefficients.len() {
        return Err(Error::Precondition("duplicate series indices".into()));
    }
    for &(n, r) in &coeffs {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Precondition(format!("coefficient at n = {n} must be positive: {r}")));
        }
    }
    let (lo, hi) = match window {
        Some((lo, hi)) => {
            if lo > hi
                || lo < coeffs.first().map(|&(n, _)| n).unwrap_or(0)
                || hi > coeffs.last().map(|&(n, _)| n).unwrap_or(0)
            {
                return Err(Error::Precondition(format!(
                    "window [{lo}, {hi}] outside the supplied indices"
                )));
            }
            (lo, hi)
        }
        None => {
            let mid = coeffs[coeffs.len() / 2].0;
            (mid, coeffs.last().map(|&(n, _)| n).unwrap())
        }
    };
    let (xs, ys): (Vec<f64>, Vec<f64>) = coeffs
        .iter()
        .filter(|&&(n, _)| n >= lo && n <= hi)
        .map(|&(n, r)| (n as f64, r.ln()))
        .unzip();
    if xs.len() < 4 {
        return Err(Error::Precondition(format!(
            "need at least 4 points in the fit window, have {}",
            xs.len()
        )));
    }
    let (slope, _, stderr) = ols(&xs, &ys);
    Ok(SeriesProbe {
        coefficients: coeffs,
        window: (lo, hi),
        rate: slope,
        rate_stderr: stderr,
        radius: (-slope).exp(),
    })
}

/// Inputs for the closed-form growth constants: the scaling exponent
/// (read as d for white noise), the coupling θ, the moment order p,
/// and the variational constant M.
#[derive(Clone, Copy, Debug)]
pub struct AsymptoticSpec {
    /// Scaling exponent α of the noise family; equals d for white noise.
    pub alpha_index: f64,
    pub theta: f64,
    /// Moment order, ≥ 2.
    pub p: f64,
    /// Variational constant M for this family and θ = 1.
    pub m_value: f64,
}

impl AsymptoticSpec {
    pub fn new(alpha_index: f64, theta: f64, p: f64, m_value: f64) -> Self {
        AsymptoticSpec { alpha_index, theta, p, m_value }
    }

    /// Reads the exponent off a noise family.
    pub fn for_family(spec: &NoiseSpec, theta: f64, p: f64, m_value: f64) -> Self {
        Self::new(spec.alpha(), theta, p, m_value)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_index > 0.0 && self.alpha_index <= 3.0) {
            return Err(Error::Domain(format!(
                "scaling exponent must lie in (0, 3]: {}",
                self.alpha_index
            )));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Domain(format!("theta must be positive: {}", self.theta)));
        }
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(Error::Domain(format!("moment order must be at least 2: {}", self.p)));
        }
        if !(self.m_value > 0.0 && self.m_value.is_finite()) {
            return Err(Error::Domain(format!("M must be positive: {}", self.m_value)));
        }
        Ok(())
    }

    /// Growth exponent β = (4−α)/(3−α); infinite at the critical
    /// exponent α = 3, which is rejected.
    pub fn beta(&self) -> Result<f64> {
        self.validate()?;
        if self.alpha_index >= 3.0 {
            return Err(Error::Domain(
                "critical exponent 3 has no growth exponent (moments blow up in finite time)"
                    .into(),
            ));
        }
        Ok((4.0 - self.alpha_index) / (3.0 - self.alpha_index))
    }
}

/// Which closed-form growth constant to evaluate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateKind {
    /// lim t_p^{−β} log‖u(t,x)‖_p with t_p = (p−1)^{1/(4−α)} t.
    PNormRate,
    /// lim t^{−β} log E|u(t,x)|²: twice the p-norm rate.
    P2Rate,
    /// lim t^{−β} log E|u(t,x)|^p at fixed p.
    TFixed,
    /// lim p^{−β} log E|u(t,x)|^p at the fixed time t.
    PFixed { t: f64 },
}

/// Evaluates the requested closed-form growth constant.
pub fn asymptotic_constant(spec: &AsymptoticSpec, which: RateKind) -> Result<f64> {
    let beta = spec.beta()?;
    let alpha = spec.alpha_index;
    let inv = 1.0 / (3.0 - alpha);
    let base = spec.theta.powf(inv)
        * 0.5f64.powf(alpha * inv / 2.0)
        * (2.0 * spec.m_value.sqrt() / (4.0 - alpha)).powf(beta);
    let half_rate = base * (3.0 - alpha) / 2.0;
    Ok(match which {
        RateKind::PNormRate => half_rate,
        RateKind::P2Rate => 2.0 * half_rate,
        RateKind::TFixed => spec.p * (spec.p - 1.0).powf(inv) * half_rate,
        RateKind::PFixed { t } => {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Domain(format!("fixed time must be positive: {t}")));
            }
            t.powf(beta) * half_rate
        }
    })
}

/// Geometric rate R = (2/(4−α))^{4−α} 2^{−α/2} M^{(4−α)/2} of the
/// normalized coefficients Rₙ = (n!)^{4−α}‖f̃ₙ(·,0;1)‖²; at α = 3 this
/// is 2^{−1/2}√M, the reciprocal of the θ-scaled series radius.
pub fn geometric_rate(alpha_index: f64, m_value: f64) -> Result<f64> {
    if !(alpha_index > 0.0 && alpha_index <= 3.0) {
        return Err(Error::Domain(format!("scaling exponent must lie in (0, 3]: {alpha_index}")));
    }
    if !(m_value > 0.0 && m_value.is_finite()) {
        return Err(Error::Domain(format!("M must be positive: {m_value}")));
    }
    let a = 4.0 - alpha_index;
    Ok((2.0 / a).powf(a) * 0.5f64.powf(alpha_index / 2.0) * m_value.powf(a / 2.0))
}

/// Blow-up times of the critical (spatially white, d = 3) case.
#[derive(Clone, Debug)]
pub struct CriticalTimes {
    /// √2/(θ(p−1)√M): radius of the p-th-moment series.
    pub t_p: f64,
    /// 4π/(θ(p−1)): the Dalang-type solvability time.
    pub t_p_prime: f64,
    /// 2π²/(θ(p−1)): the midpoint the chain passes through when M
    /// equals the closed-form bound 1/(2π⁴).
    pub midpoint: f64,
    /// Whether M ≤ 1/(2π⁴); the chain below is only guaranteed then.
    pub m_within_bound: bool,
    /// T_p ≥ 2π²/(θ(p−1)) ≥ T_p′.
    pub chain_holds: bool,
}

impl CriticalTimes {
    pub fn to_record(&self) -> String {
        format!(
            "t_p= {}\nt_p_prime= {}\nmidpoint= {}\nm_within_bound= {}\nchain_holds= {}\n",
            fmt_sig17(self.t_p),
            fmt_sig17(self.t_p_prime),
            fmt_sig17(self.midpoint),
            self.m_within_bound,
            self.chain_holds
        )
    }
}

/// Evaluates T_p = √2/(θ(p−1)√M) and T_p′ = 4π/(θ(p−1)) for the
/// critical case, which requires scaling exponent 3. When M exceeds
/// the closed-form bound 1/(2π⁴) the chain T_p ≥ 2π²/(θ(p−1)) ≥ T_p′
/// is not guaranteed; that is reported, not asserted.
pub fn critical_times(spec: &AsymptoticSpec) -> Result<CriticalTimes> {
    spec.validate()?;
    if spec.alpha_index != 3.0 {
        return Err(Error::Precondition(format!(
            "blow-up times exist only at the critical exponent 3, got {}",
            spec.alpha_index
        )));
    }
    let denom = spec.theta * (spec.p - 1.0);
    let t_p = std::f64::consts::SQRT_2 / (denom * spec.m_value.sqrt());
    let t_p_prime = 4.0 * std::f64::consts::PI / denom;
    let midpoint = 2.0 * std::f64::consts::PI.powi(2) / denom;
    let bound = 0.5 / std::f64::consts::PI.powi(4);
    Ok(CriticalTimes {
        t_p,
        t_p_prime,
        midpoint,
        m_within_bound: spec.m_value <= bound,
        chain_holds: t_p + 1e-12 >= midpoint && midpoint >= t_p_prime,
    })
}

/// Truncated-series growth fit on a time grid.
#[derive(Clone, Debug)]
pub struct SeriesGrowthReport {
    /// Exponent the growth should follow: β = (4−α)/(3−α).
    pub beta: f64,
    /// Exponent b minimizing the residual of the affine fit
    /// log S ≈ a·t^b + c over the grid.
    pub fitted_exponent: f64,
    /// Slope of log S against t^β.
    pub fitted_constant: f64,
    /// (t, log S(t)) over the grid.
    pub points: Vec<(f64, f64)>,
    /// True when the last retained order contributes more than 1% of
    /// the sum at the largest grid time: the fit window has outrun the
    /// truncation order and the slopes are biased low.
    pub truncated: bool,
}

impl SeriesGrowthReport {
    /// CSV with columns t, log_sum, t_to_beta.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,log_sum,t_to_beta\n");
        for (t, s) in &self.points {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_sig17(*t),
                fmt_sig17(*s),
                fmt_sig17(t.powf(self.beta))
            ));
        }
        out
    }
}

/// Sums S(t) = Σ_{n=0}^{N} θⁿ t^{(4−α)n} Rₙ/(n!)^{3−α} in log space on
/// the supplied time grid and fits the growth exponent (the b minimizing
/// the residual of log S ≈ a·t^b + c, to compare with β) and the growth
/// constant (slope of log S on t^β). The free intercept absorbs the
/// slowly varying subexponential prefactor of the sum, which would
/// otherwise bias a log-log slope upward by O(log t / t^β) and push the
/// usable fit window far beyond desk-scale truncation orders.
/// Coefficients are the normalized Rₙ = (n!)^{4−α}‖f̃ₙ(·,0;1)‖²,
/// supplied for n = 0..=N consecutively with R₀ = 1; for exactly
/// geometric Rₙ = Rⁿ the constant converges to (3−α)(θR)^{1/(3−α)}.
pub fn series_growth_probe(
    alpha_index: f64,
    theta: f64,
    t_grid: &[f64],
    r_coeffs: &[f64],
) -> Result<SeriesGrowthReport> {
    if !(alpha_index > 0.0 && alpha_index < 3.0) {
        return Err(Error::Domain(format!(
            "growth probe needs a scaling exponent in (0, 3): {alpha_index}"
        )));
    }
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("theta must be nonnegative: {theta}")));
    }
    if r_coeffs.len() < 2 {
        return Err(Error::Precondition("need coefficients for orders 0 and 1 at least".into()));
    }
    if (r_coeffs[0] - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "order-0 coefficient must be 1 (empty product), got {}",
            r_coeffs[0]
        )));
    }
    for (n, &r) in r_coeffs.iter().enumerate() {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Precondition(format!("coefficient at n = {n} must be positive: {r}")));
        }
    }
    if t_grid.len() < 4 {
        return Err(Error::Precondition("need at least 4 grid times".into()));
    }
    if t_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::Domain("grid times must be positive".into()));
    }
    {
        let mut sorted: Vec<f64> = t_grid.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::Precondition("grid times must be distinct".into()));
        }
    }
    let beta = (4.0 - alpha_index) / (3.0 - alpha_index);
    let a = 4.0 - alpha_index;
    let mut points = Vec::with_capacity(t_grid.len());
    let mut truncated = false;
    let t_max = t_grid.iter().cloned().fold(f64::MIN, f64::max);
    for &t in t_grid {
        let mut terms = Vec::with_capacity(r_coeffs.len());
        for (n, &r) in r_coeffs.iter().enumerate() {
            let nf = n as f64;
            if theta == 0.0 && n > 0 {
                break;
            }
            if n == 0 {
                // The empty product: θ⁰t⁰R₀/0!^(3−α) contributes exactly R₀.
                terms.push(r.ln());
                continue;
            }
            terms.push(
                nf * theta.ln() + a * nf * t.ln() + r.ln()
                    - (3.0 - alpha_index) * ln_gamma(nf + 1.0),
            );
        }
        let peak = terms.iter().cloned().fold(f64::MIN, f64::max);
        let sum: f64 = terms
            .iter()
            .filter(|&&v| v > peak - LOG_TAIL_CUTOFF)
            .map(|&v| (v - peak).exp())
            .sum();
        let log_s = peak + sum.ln();
        if t == t_max && terms.len() == r_coeffs.len() {
            let last_share = (terms[terms.len() - 1] - log_s).exp();
            truncated = last_share > 0.01;
        }
        points.push((t, log_s));
    }
    let fitted_exponent = if theta > 0.0 {
        let ts: Vec<f64> = points.iter().map(|&(t, _)| t).collect();
        let ys: Vec<f64> = points.iter().map(|&(_, s)| s).collect();
        // Golden-section search: the residual is smooth and unimodal in b
        // on any window bracketing the growth exponent.
        let (mut lo, mut hi) = (0.25, 4.0);
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        for _ in 0..90 {
            let m1 = hi - (hi - lo) * INV_PHI;
            let m2 = lo + (hi - lo) * INV_PHI;
            if affine_rss(&ts, &ys, m1) < affine_rss(&ts, &ys, m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        0.5 * (lo + hi)
    } else {
        0.0
    };
    let xs: Vec<f64> = points.iter().map(|&(t, _)| t.powf(beta)).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, s)| s).collect();
    let fitted_constant = ols(&xs, &ys).0;
    Ok(SeriesGrowthReport { beta, fitted_exponent, fitted_constant, points, truncated })
}

/// Residual sum of squares of the best affine fit of ys on t^b.
fn affine_rss(ts: &[f64], ys: &[f64], b: f64) -> f64 {
    let n = ts.len() as f64;
    let xs: Vec<f64> = ts.iter().map(|t| t.powf(b)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    xs.iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = (y - my) - slope * (x - mx);
            r * r
        })
        .sum()
}

/// [`series_growth_probe`] with the scaling exponent taken from a noise
/// family description instead of passed as a raw number.
pub fn series_growth_probe_for(
    noise: &NoiseSpec,
    theta: f64,
    t_grid: &[f64],
    r_coeffs: &[f64],
) -> Result<SeriesGrowthReport> {
    series_growth_probe(noise.alpha(), theta, t_grid, r_coeffs)
}

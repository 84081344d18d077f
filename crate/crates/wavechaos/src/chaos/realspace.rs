//! Real-space quadrature oracles for low-order chaos-kernel norms.
//!
//! The iterated wave kernels in dimension one are explicit hinge powers: the
//! chain integral over the time simplex of ∏ₖ (1/2)1{|yₖ−yₖ₋₁| < Δₖ} equals
//! 2^{−n}(t − B)₊ⁿ/n! with B = Σₖ |yₖ−yₖ₋₁|, so with Hₙ(t,x) denoting the
//! n!-scaled symmetrized kernel,
//!
//!   Hₙ(t,x) = Σ_σ 2^{−n} (t − B_σ(x))₊ⁿ / n!,   B_σ = Σₖ |x_{σ(k)} − x_{σ(k−1)}|,
//!
//! (x_{σ(0)} = 0) and the squared norm is (n!)^{−2}∫Hₙ² dx for white noise.
//! For the Riesz family the same kernels are paired through the covariance
//! |x−y|^{−α}: in dimension one the inner smoothing integrals reduce to
//! closed-form power moments of piecewise quadratics, in dimension two the
//! smoothed field is built in polar coordinates around the singularity.
//! Everything here is deterministic; these values cross-check the
//! independent spectral Monte Carlo path.

use crate::error::{Error, Result};
use crate::kernels::{NoiseFamily, NoiseSpec};
use crate::quad::{adaptive_simpson, de_sing0, gauss_legendre};

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// ‖f̃ₙ(·,0;t)‖² by real-space quadrature for the supported (family, n)
/// combinations: white d=1 at n ≤ 2, Riesz d=1 at n ≤ 2, Riesz d=2 at n=1.
pub fn realspace_norm(spec: &NoiseSpec, n: usize, t: f64) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    match (spec.family(), spec.d()) {
        (NoiseFamily::White, 1) => white_line_norm(n, t),
        (NoiseFamily::Riesz { alpha }, 1) => riesz_line_norm(n, t, *alpha),
        (NoiseFamily::Riesz { alpha }, 2) if n == 1 => Ok(riesz_plane_first_norm(t, *alpha)),
        (NoiseFamily::Riesz { .. }, 2) => Err(Error::Config(
            "real-space path in dimension two stops at n = 1; use the spectral path".into(),
        )),
        _ => Err(Error::Config(format!(
            "no real-space quadrature for family {:?} in dimension {} at n = {}",
            spec.family(),
            spec.d(),
            n
        ))),
    }
}

// ---------------------------------------------------------------- white d=1

fn h2_line(t: f64, x1: f64, x2: f64) -> f64 {
    let b1 = x1.abs() + (x2 - x1).abs();
    let b2 = x2.abs() + (x1 - x2).abs();
    (relu(t - b1).powi(2) + relu(t - b2).powi(2)) / 8.0
}

fn white_line_norm(n: usize, t: f64) -> Result<f64> {
    match n {
        1 => {
            // ∫ ((t−|x|)/2)² dx over the support, split at the apex
            let f = |x: f64| {
                let h = 0.5 * relu(t - x.abs());
                h * h
            };
            Ok(adaptive_simpson(&f, -t, 0.0, 1e-12 * t * t * t, 30)
                + adaptive_simpson(&f, 0.0, t, 1e-12 * t * t * t, 30))
        }
        2 => {
            let scale = t.powi(6);
            let inner_tol = 1e-11 * scale;
            let outer = |x1: f64| {
                let g = |x2: f64| {
                    let h = h2_line(t, x1, x2);
                    h * h
                };
                adaptive_simpson(&g, -t, x1, inner_tol, 26)
                    + adaptive_simpson(&g, x1, t, inner_tol, 26)
            };
            let total = adaptive_simpson(&outer, -t, 0.0, 1e-9 * scale, 22)
                + adaptive_simpson(&outer, 0.0, t, 1e-9 * scale, 22);
            Ok(total / 4.0)
        }
        _ => Err(Error::Config(
            "white-noise real-space quadrature supports n = 1, 2".into(),
        )),
    }
}

// ---------------------------------------------------------------- riesz d=1

/// (∫_a^b wᵏ|w|^{−α} dw for k = 0, 1, 2) with w measured from x: the
/// antiderivatives are continuous through w = 0 for α < 1.
fn power_moments(a: f64, b: f64, x: f64, alpha: f64) -> (f64, f64, f64) {
    let p0 = |w: f64| w.signum() * w.abs().powf(1.0 - alpha) / (1.0 - alpha);
    let p1 = |w: f64| w.abs().powf(2.0 - alpha) / (2.0 - alpha);
    let p2 = |w: f64| w.signum() * w.abs().powf(3.0 - alpha) / (3.0 - alpha);
    let (lo, hi) = (a - x, b - x);
    (p0(hi) - p0(lo), p1(hi) - p1(lo), p2(hi) - p2(lo))
}

/// ∫_a^b (q₀ + q₁u + q₂u²)|x−u|^{−α} du exactly.
fn kernel_quadratic_integral(a: f64, b: f64, x: f64, alpha: f64, q: (f64, f64, f64)) -> f64 {
    let c2 = q.2;
    let c1 = q.1 + 2.0 * q.2 * x;
    let c0 = q.0 + q.1 * x + q.2 * x * x;
    let (m0, m1, m2) = power_moments(a, b, x, alpha);
    c0 * m0 + c1 * m1 + c2 * m2
}

fn riesz_line_norm(n: usize, t: f64, alpha: f64) -> Result<f64> {
    match n {
        1 => Ok(riesz_line_first_norm(t, alpha)),
        2 => Ok(riesz_line_second_norm(t, alpha)),
        _ => Err(Error::Config(
            "Riesz real-space quadrature supports n = 1, 2".into(),
        )),
    }
}

fn riesz_line_first_norm(t: f64, alpha: f64) -> f64 {
    // f₁ = (1/2)(t−|u|)₊ is linear on [−t,0] and [0,t]; the smoothing
    // integral against |x−u|^{−α} is exact piecewise
    let smoothed = |x: f64| {
        kernel_quadratic_integral(-t, 0.0, x, alpha, (0.5 * t, 0.5, 0.0))
            + kernel_quadratic_integral(0.0, t, x, alpha, (0.5 * t, -0.5, 0.0))
    };
    let f = |x: f64| 0.5 * relu(t - x.abs()) * smoothed(x);
    let tol = 1e-11 * t.powf(4.0 - alpha);
    adaptive_simpson(&f, -t, 0.0, tol, 26) + adaptive_simpson(&f, 0.0, t, tol, 26)
}

fn tilde_f2_line(t: f64, x1: f64, x2: f64) -> f64 {
    h2_line(t, x1, x2) / 2.0
}

/// Breakpoints of u ↦ f̃₂(u, v; t): the kernel is a single quadratic between
/// consecutive entries.
fn second_kernel_breaks(t: f64, v: f64) -> Vec<f64> {
    let mut b = vec![
        -t,
        0.0,
        v,
        0.5 * (t + v),
        0.5 * (v - t),
        v + (t - v.abs()),
        v - (t - v.abs()),
        t,
    ];
    b.retain(|x| x.is_finite() && *x >= -t - 1e-12 && *x <= t + 1e-12);
    b.sort_by(|p, q| p.partial_cmp(q).unwrap());
    b.dedup_by(|p, q| (*p - *q).abs() < 1e-12 * t);
    b
}

/// Fit the quadratic that u ↦ f(u) equals on [a, b] from three interior
/// samples; exact because the restriction is a polynomial of degree ≤ 2.
fn fit_quadratic<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let h = 0.25 * (b - a);
    let (ym, y0, yp) = (f(m - h), f(m), f(m + h));
    let q2 = (yp - 2.0 * y0 + ym) / (2.0 * h * h);
    let q1 = (yp - ym) / (2.0 * h) - 2.0 * q2 * m;
    let q0 = y0 - q1 * m - q2 * m * m;
    (q0, q1, q2)
}

fn riesz_line_second_norm(t: f64, alpha: f64) -> f64 {
    let rule = gauss_legendre(8);

    // Σ_pieces ∫ f̃₂(u,v)|x−u|^{−α} du with per-piece exact power moments;
    // the piece table already carries the v dependence
    let smoothed_in_first = |x: f64, pieces: &[(f64, f64, (f64, f64, f64))]| -> f64 {
        pieces
            .iter()
            .map(|&(a, b, q)| kernel_quadratic_integral(a, b, x, alpha, q))
            .sum()
    };
    let build_pieces = |v: f64| -> Vec<(f64, f64, (f64, f64, f64))> {
        let brk = second_kernel_breaks(t, v);
        brk.windows(2)
            .filter(|w| w[1] - w[0] > 1e-12 * t)
            .map(|w| {
                let f = |u: f64| tilde_f2_line(t, u, v);
                (w[0], w[1], fit_quadratic(&f, w[0], w[1]))
            })
            .collect()
    };

    // C(v, x₂) = ∫ f̃₂(x₁, x₂) (Γf̃₂(·,v))(x₁) dx₁, panels on both kink sets
    let correlation = |v: f64, x2: f64, pieces: &[(f64, f64, (f64, f64, f64))]| -> f64 {
        let mut brk = second_kernel_breaks(t, x2);
        brk.extend(second_kernel_breaks(t, v));
        brk.sort_by(|p, q| p.partial_cmp(q).unwrap());
        brk.dedup_by(|p, q| (*p - *q).abs() < 1e-10 * t);
        let mut acc = 0.0;
        for w in brk.windows(2) {
            if w[1] - w[0] < 1e-12 * t {
                continue;
            }
            acc += rule.integrate(w[0], w[1], |x1| {
                tilde_f2_line(t, x1, x2) * smoothed_in_first(x1, pieces)
            });
        }
        acc
    };

    // ∫∫ |x₂−v|^{−α} C(v, x₂) dv dx₂ over x₂ > 0, doubled by central symmetry
    let outer_panels = 4usize;
    let outer_rule = gauss_legendre(6);
    let mut total = 0.0;
    for p in 0..outer_panels {
        let a = t * p as f64 / outer_panels as f64;
        let b = t * (p + 1) as f64 / outer_panels as f64;
        total += outer_rule.integrate(a, b, |x2| {
            let inner = |s: f64, sign: f64| -> f64 {
                let v = x2 + sign * s;
                let pieces = build_pieces(v);
                s.powf(-alpha) * correlation(v, x2, &pieces)
            };
            de_sing0(|s| inner(s, -1.0), x2 + t, 1e-6) + de_sing0(|s| inner(s, 1.0), t - x2, 1e-6)
        });
    }
    2.0 * total
}

// ---------------------------------------------------------------- riesz d=2

/// Time-integrated planar propagator ∫₀ᵗ G(s, x) ds = (2π)^{−1} acosh(t/r).
fn plane_propagator_integral(t: f64, r: f64) -> f64 {
    if r >= t || r <= 0.0 {
        return 0.0;
    }
    (t / r).acosh() / (2.0 * std::f64::consts::PI)
}

/// Mean of f₁ over the circle of radius ρ centered at distance r from the
/// origin, with the squared radius in the cancellation-free form
/// (r−ρ)² + 4rρcos²(ψ/2). Midpoint rule doubled until stable; the integrand
/// has at worst an integrable logarithmic feature.
fn ring_average(t: f64, r: f64, rho: f64) -> f64 {
    let eval = |m: usize| -> f64 {
        let mut s = 0.0;
        for k in 0..m {
            let psi = std::f64::consts::PI * (k as f64 + 0.5) / m as f64;
            let c = (0.5 * psi).cos();
            let y2 = (r - rho) * (r - rho) + 4.0 * r * rho * c * c;
            s += plane_propagator_integral(t, y2.sqrt());
        }
        s / m as f64
    };
    let mut m = 64;
    let mut val = eval(m);
    while m < 1024 {
        m *= 2;
        let next = eval(m);
        let done = (next - val).abs() <= 1e-7 * (1.0 + val.abs());
        val = next;
        if done {
            break;
        }
    }
    val
}

/// (γ ∗ f₁)(x) at |x| = r in polar coordinates around x.
fn plane_smoothed_field(t: f64, alpha: f64, r: f64) -> f64 {
    let integrand = |rho: f64| rho.powf(1.0 - alpha) * ring_average(t, r, rho);
    let mut brk = vec![0.0, r.min(t - r), r.max(t - r), r + t];
    brk.dedup_by(|p, q| (*p - *q).abs() < 1e-13 * t);
    let mut acc = 0.0;
    for w in brk.windows(2) {
        if w[1] - w[0] <= 0.0 {
            continue;
        }
        acc += de_sing0(|s| integrand(w[0] + s), w[1] - w[0], 1e-6);
    }
    2.0 * std::f64::consts::PI * acc
}

fn riesz_plane_first_norm(t: f64, alpha: f64) -> f64 {
    let outer = |r: f64| r * plane_propagator_integral(t, r) * plane_smoothed_field(t, alpha, r);
    let half = de_sing0(|s| outer(s), 0.5 * t, 1e-6);
    let upper = de_sing0(|s| outer(t - s), 0.5 * t, 1e-6);
    2.0 * std::f64::consts::PI * (half + upper)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_first_order_matches_cubic() {
        let v = realspace_norm(&NoiseSpec::white(1).unwrap(), 1, 1.0).unwrap();
        assert!((v - 1.0 / 6.0).abs() < 1e-10, "{v}");
        let v2 = realspace_norm(&NoiseSpec::white(1).unwrap(), 1, 2.0).unwrap();
        assert!((v2 - 8.0 / 6.0).abs() < 1e-9, "{v2}");
    }

    #[test]
    fn white_second_order_obeys_time_scaling() {
        let spec = NoiseSpec::white(1).unwrap();
        let v1 = realspace_norm(&spec, 2, 1.0).unwrap();
        let v2 = realspace_norm(&spec, 2, 1.3).unwrap();
        assert!(v1 > 0.0);
        let ratio = v2 / v1;
        let target = 1.3f64.powi(6);
        assert!((ratio / target - 1.0).abs() < 1e-5, "{ratio} vs {target}");
    }

    #[test]
    fn riesz_line_first_order_matches_closed_form() {
        // independent check of two fully separate routes at several α
        for alpha in [0.3, 0.5, 0.8] {
            let spec = NoiseSpec::riesz(1, alpha).unwrap();
            let v = realspace_norm(&spec, 1, 1.0).unwrap();
            let closed = super::super::ops::closed_form_first_norm(&spec, 1.0);
            assert!(
                (v / closed - 1.0).abs() < 1e-6,
                "alpha={alpha}: {v} vs {closed}"
            );
        }
    }

    #[test]
    fn riesz_line_second_order_obeys_time_scaling() {
        let alpha = 0.5;
        let spec = NoiseSpec::riesz(1, alpha).unwrap();
        let v1 = realspace_norm(&spec, 2, 1.0).unwrap();
        let v2 = realspace_norm(&spec, 2, 1.4).unwrap();
        let target = 1.4f64.powf((4.0 - alpha) * 2.0);
        assert!(v1 > 0.0);
        assert!((v2 / v1 / target - 1.0).abs() < 2e-3, "{} vs {target}", v2 / v1);
    }

    #[test]
    fn riesz_plane_first_order_matches_closed_form() {
        for alpha in [0.7, 1.2] {
            let spec = NoiseSpec::riesz(2, alpha).unwrap();
            let v = realspace_norm(&spec, 1, 1.0).unwrap();
            let closed = super::super::ops::closed_form_first_norm(&spec, 1.0);
            assert!(
                (v / closed - 1.0).abs() < 1e-2,
                "alpha={alpha}: {v} vs {closed}"
            );
        }
    }

    #[test]
    fn unsupported_requests_are_config_errors() {
        assert!(realspace_norm(&NoiseSpec::riesz(2, 1.0).unwrap(), 2, 1.0).is_err());
        assert!(realspace_norm(&NoiseSpec::white(3).unwrap(), 1, 1.0).is_err());
        assert!(realspace_norm(&NoiseSpec::fractional(&[0.5]).unwrap(), 1, 1.0).is_err());
        assert!(realspace_norm(&NoiseSpec::white(1).unwrap(), 3, 1.0).is_err());
    }
}

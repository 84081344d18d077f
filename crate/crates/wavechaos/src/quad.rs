//! Deterministic quadrature toolbox.
//!
//! Three rules cover every deterministic integral in the crate:
//!
//! * Gauss-Legendre for smooth integrands on finite intervals (tensorized
//!   where needed by the callers),
//! * Gauss-Laguerre for ∫₀^∞ e^{-t} f(t) dt Laplace-type integrals,
//! * a double-exponential (tanh-sinh) rule for integrable endpoint
//!   singularities placed at the origin.
//!
//! Node generation is by Newton iteration on the classical three-term
//! recurrences; nothing here depends on the noise model.

/// Nodes and weights of an n point rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

/// Gauss-Legendre rule on [-1, 1]. Exact for polynomials of degree 2n-1.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = (((2 * j + 1) as f64) * z * p1 - (j as f64) * p2) / ((j + 1) as f64);
            }
            dp = (n as f64) * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    Rule { x, w }
}

/// Gauss-Laguerre rule: Σ wᵢ f(xᵢ) ≈ ∫₀^∞ e^{-t} f(t) dt.
pub fn gauss_laguerre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n {
        if i == 0 {
            z = 3.0 / (1.0 + 2.4 * nf);
        } else if i == 1 {
            z += 15.0 / (1.0 + 2.5 * nf);
        } else {
            let ai = (i - 1) as f64;
            z += ((1.0 + 2.55 * ai) / (1.9 * ai)) * (z - x[i - 2]);
        }
        let mut pp = 0.0;
        let mut p2 = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = (((2 * j - 1) as f64 - z) * p2 - ((j - 1) as f64) * p3) / (j as f64);
            }
            pp = nf * (p1 - p2) / z;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = -1.0 / (pp * nf * p2);
    }
    Rule { x, w }
}

impl Rule {
    /// Integrate a Gauss-Legendre rule over [a, b].
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut s = 0.0;
        for (xi, wi) in self.x.iter().zip(&self.w) {
            s += wi * f(c + h * xi);
        }
        s * h
    }

    /// Composite Gauss-Legendre over [a, b] split into `panels` cells.
    pub fn integrate_composite<F: Fn(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        f: F,
    ) -> f64 {
        let h = (b - a) / panels as f64;
        let mut s = 0.0;
        for k in 0..panels {
            s += self.integrate(a + k as f64 * h, a + (k + 1) as f64 * h, &f);
        }
        s
    }

    /// Σ wᵢ f(xᵢ), the natural form for Gauss-Laguerre rules.
    pub fn sum<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.x.iter().zip(&self.w).map(|(x, w)| w * f(*x)).sum()
    }
}

/// ∫₀^b f(x) dx with an integrable singularity allowed at x = 0.
///
/// Tanh-sinh transform x = b/(1 + e^{-2u}), u = (π/2) sinh t, trapezoid in
/// t with step halving until two sweeps agree to `tol` relative.
pub fn de_sing0<F: Fn(f64) -> f64>(f: F, b: f64, tol: f64) -> f64 {
    // Wide enough that the double-exponential tail is below 1e-12 even for
    // singularities as strong as x^{-0.9}.
    let t_max = 6.0;
    let eval = |t: f64| -> f64 {
        let u = 0.5 * std::f64::consts::PI * t.sinh();
        // x = b * sigmoid(2u); weight = b * (pi/2) cosh t * sech^2(u) / 2,
        // both computed through e^{-2|u|} to avoid overflow.
        let e = (-2.0 * u.abs()).exp();
        let sig = if u >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
        let x = b * sig;
        if x <= 0.0 || x >= b {
            return 0.0;
        }
        let sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
        let w = 0.5 * b * (0.5 * std::f64::consts::PI) * t.cosh() * sech2;
        let fx = f(x);
        if fx.is_finite() {
            fx * w
        } else {
            0.0
        }
    };
    let mut h = 0.5;
    let steps = (2.0 * t_max / h) as i64;
    let mut val = (0..=steps).map(|i| eval(-t_max + i as f64 * h)).sum::<f64>() * h;
    for _ in 1..12 {
        // T(h/2) = T(h)/2 + (h/2) Σ f(midpoints of the h grid).
        let prev = val;
        let steps = (2.0 * t_max / h) as i64;
        let add: f64 = (0..steps)
            .map(|i| eval(-t_max + (i as f64 + 0.5) * h))
            .sum();
        val = 0.5 * val + 0.5 * h * add;
        h *= 0.5;
        if (val - prev).abs() <= tol * (val.abs() + 1e-300) {
            return val;
        }
    }
    val
}

/// Adaptive Simpson on [a, b] for smooth-by-parts integrands.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, m: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, 0.5 * (a + m), m);
        let right = simpson(f, m, 0.5 * (m + b), b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, m, left, 0.5 * tol, depth - 1) + rec(f, m, b, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    rec(f, a, b, simpson(f, a, m, b), tol, depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_is_exact_on_polynomials() {
        let r = gauss_legendre(8);
        // degree 15 polynomial, exact integral over [0, 2]
        let val = r.integrate(0.0, 2.0, |x| x.powi(15) - 3.0 * x.powi(7) + x);
        let exact = 2.0_f64.powi(16) / 16.0 - 3.0 * 2.0_f64.powi(8) / 8.0 + 2.0;
        assert!((val - exact).abs() < 1e-10 * exact.abs());
    }

    #[test]
    fn laguerre_matches_gamma_moments() {
        let r = gauss_laguerre(32);
        for k in 0..8u32 {
            let val = r.sum(|t| t.powi(k as i32));
            let exact: f64 = (1..=k).map(|j| j as f64).product::<f64>().max(1.0);
            assert!(
                (val - exact).abs() < 1e-9 * exact,
                "k={k} val={val} exact={exact}"
            );
        }
    }

    #[test]
    fn laguerre_handles_noninteger_powers() {
        // Gamma(1.5) = sqrt(pi)/2. The square-root kink at 0 limits the
        // rule to slow algebraic convergence, so this only pins moderate
        // accuracy; production integrands on this rule are entire.
        let r = gauss_laguerre(64);
        let val = r.sum(|t| t.sqrt());
        let exact = 0.5 * std::f64::consts::PI.sqrt();
        assert!((val - exact).abs() < 1e-3 * exact, "val={val} exact={exact}");
    }

    #[test]
    fn de_rule_integrates_power_singularity() {
        // ∫₀^1 x^{-1/2} dx = 2, ∫₀^1 x^{-3/4} dx = 4
        let v1 = de_sing0(|x| x.powf(-0.5), 1.0, 1e-12);
        assert!((v1 - 2.0).abs() < 1e-10, "{v1}");
        let v2 = de_sing0(|x| x.powf(-0.75), 1.0, 1e-12);
        assert!((v2 - 4.0).abs() < 1e-9, "{v2}");
    }

    #[test]
    fn adaptive_simpson_on_oscillation() {
        let f = |x: f64| (10.0 * x).sin();
        let val = adaptive_simpson(&f, 0.0, 1.0, 1e-12, 30);
        let exact = (1.0 - (10.0_f64).cos()) / 10.0;
        assert!((val - exact).abs() < 1e-10);
    }
}

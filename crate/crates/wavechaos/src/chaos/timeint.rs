//! Exact ordered time integrals of wave propagator products.
//!
//! Fix gap frequencies a_1..a_n ≥ 0 (in context: a_j = |ξ_1 + … + ξ_j| is
//! a prefix sum magnitude) and let z_j = a_j². The ordered integral
//!
//!   A(t) = ∫_{0<s_1<…<s_n<t} Π_{j=1}^n sin(a_j (s_{j+1}−s_j))/a_j ds,
//!
//! with s_{n+1} = t and the initial segment [0, s_1] free, is an n-fold
//! convolution 1 * g_{a_1} * … * g_{a_n} with Laplace transform
//! (1/λ) Π_j (λ² + z_j)^{-1}. Partial fractions in λ² turn that into a
//! divided difference of the single function
//!
//!   g(z) = (1 − cos(t√z))/z,      g(0) = t²/2,
//!
//! namely A(t) = (−1)^{n−1} g[z_1, …, z_n]. Evaluating the divided
//! difference naively is unstable when z's collide, so the table is built
//! with a cluster rule: nodes closer than a relative threshold are grouped
//! and their table entries computed from the Taylor form of the divided
//! difference around the cluster center,
//!
//!   g[y_1..y_m] = Σ_{r≥0} g^{(m−1+r)}(c)/(m−1+r)! · h_r(y−c),
//!
//! (h_r = complete homogeneous symmetric polynomial), while entries whose
//! endpoints lie in different clusters use the ordinary recursion with a
//! well-separated denominator. Scaled derivatives g^{(j)}(z)/j! come from
//! the entire series in z when w = t√z ≤ 12 and from an exact closed-form
//! term expansion in {z^{-b/2}, cos(t√z), sin(t√z)} otherwise.

use std::sync::OnceLock;

/// Largest divided-difference order supported (chaos order cap).
pub const MAX_ORDER: usize = 12;

/// Series / closed-form switch point in w = t√z.
const W_SWITCH: f64 = 12.0;

/// g(z) = (1 − cos(t√z))/z with the limit t²/2 at z = 0.
pub fn g_value(t: f64, z: f64) -> f64 {
    g_deriv_scaled(t, z, 0)
}

/// Scaled derivative g^{(j)}(z)/j! of g(z) = (1 − cos(t√z))/z.
pub fn g_deriv_scaled(t: f64, z: f64, j: usize) -> f64 {
    debug_assert!(z >= 0.0 && t >= 0.0);
    let w = t * z.sqrt();
    if w <= W_SWITCH {
        g_deriv_series(t, z, j)
    } else {
        g_deriv_closed(t, z, j)
    }
}

/// Entire series: g^{(j)}(z)/j! = Σ_{r≥j} (−1)^r t^{2r+2} C(r,j) z^{r−j}/(2r+2)!.
fn g_deriv_series(t: f64, z: f64, j: usize) -> f64 {
    // First term (r = j): (−1)^j t^{2j+2} / (2j+2)!, built as Π t²/k so the
    // intermediate stays scaled.
    let mut term = if j % 2 == 0 { 1.0 } else { -1.0 };
    for k in 1..=(2 * j + 2) {
        term /= k as f64;
        if k % 2 == 0 {
            term *= t * t;
        }
    }
    let mut sum = term;
    let mut r = j;
    loop {
        // term_{r+1} / term_r = −t² z (r+1) / ((r+1−j)(2r+3)(2r+4))
        let rf = r as f64;
        let ratio = -t * t * z * (rf + 1.0)
            / ((rf + 1.0 - j as f64) * (2.0 * rf + 3.0) * (2.0 * rf + 4.0));
        term *= ratio;
        sum += term;
        r += 1;
        if term.abs() <= 1e-18 * sum.abs().max(1e-300) || r > j + 220 {
            break;
        }
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Trig {
    One,
    Cos,
    Sin,
}

/// One term c · t^a · z^{-b/2} · trig(t√z) of a scaled derivative.
#[derive(Debug, Clone, Copy)]
struct Term {
    c: f64,
    a: u32,
    b: u32,
    trig: Trig,
}

/// Term lists of T_j = g^{(j)}/j!, built once up to MAX_ORDER + Taylor slack.
fn term_tables() -> &'static Vec<Vec<Term>> {
    static TABLES: OnceLock<Vec<Vec<Term>>> = OnceLock::new();
    TABLES.get_or_init(|| {
        let max_j = MAX_ORDER + 44;
        let mut tables: Vec<Vec<Term>> = Vec::with_capacity(max_j + 1);
        tables.push(vec![
            Term { c: 1.0, a: 0, b: 2, trig: Trig::One },
            Term { c: -1.0, a: 0, b: 2, trig: Trig::Cos },
        ]);
        for j in 0..max_j {
            let scale = 1.0 / (j as f64 + 1.0); // T_{j+1} = T_j' / (j+1)
            let mut next: Vec<Term> = Vec::new();
            let mut push = |t: Term| {
                if t.c == 0.0 {
                    return;
                }
                for u in next.iter_mut() {
                    if u.a == t.a && u.b == t.b && u.trig == t.trig {
                        u.c += t.c;
                        return;
                    }
                }
                next.push(t);
            };
            for &Term { c, a, b, trig } in &tables[j] {
                // d/dz of the power part
                push(Term { c: c * scale * -(b as f64) / 2.0, a, b: b + 2, trig });
                // d/dz of the trig part: cos → −sin · t/(2√z), sin → cos · t/(2√z)
                match trig {
                    Trig::One => {}
                    Trig::Cos => push(Term {
                        c: c * scale * -0.5,
                        a: a + 1,
                        b: b + 1,
                        trig: Trig::Sin,
                    }),
                    Trig::Sin => push(Term {
                        c: c * scale * 0.5,
                        a: a + 1,
                        b: b + 1,
                        trig: Trig::Cos,
                    }),
                }
            }
            next.retain(|t| t.c != 0.0);
            tables.push(next);
        }
        tables
    })
}

/// Closed-form evaluation of g^{(j)}(z)/j!, stable for w = t√z ≳ j.
fn g_deriv_closed(t: f64, z: f64, j: usize) -> f64 {
    let tables = term_tables();
    assert!(j < tables.len(), "derivative order {j} beyond table");
    let sq = z.sqrt();
    let w = t * sq;
    let (cw, sw) = (w.cos(), w.sin());
    let mut sum = 0.0;
    for &Term { c, a, b, trig } in &tables[j] {
        // t^a z^{-b/2} = t^a / (√z)^b
        let mut v = c;
        for _ in 0..a {
            v *= t;
        }
        for _ in 0..b {
            v /= sq;
        }
        sum += v * match trig {
            Trig::One => 1.0,
            Trig::Cos => cw,
            Trig::Sin => sw,
        };
    }
    sum
}

/// A(t) for prefix-sum squares `zs` (length n ≥ 1), computing g internally.
pub fn simplex_sin_integral(t: f64, zs: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64)> = zs.iter().map(|&z| (z, f64::NAN)).collect();
    for p in pts.iter_mut() {
        p.1 = g_value(t, p.0);
    }
    simplex_sin_integral_cached(t, &mut pts)
}

/// A(t) from precomputed pairs (z, g(z)); the slice is reordered in place.
/// Callers batching many permutations of shared prefix sums pass cached g
/// values here and pay only the O(n²) table per call.
pub fn simplex_sin_integral_cached(t: f64, pts: &mut [(f64, f64)]) -> f64 {
    let n = pts.len();
    assert!(n >= 1 && n <= MAX_ORDER, "order must be in 1..={MAX_ORDER}");
    if t == 0.0 {
        return 0.0;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Cluster assignment: nodes this close make the plain recursion lose
    // all precision, and the Taylor form converges fast.
    let mut cluster = [0usize; MAX_ORDER];
    let zfloor = 4.0 / (t * t);
    for i in 1..n {
        let (lo, hi) = (pts[i - 1].0, pts[i].0);
        let w_hi = t * hi.sqrt();
        let rel = (1e-3_f64).min(1.0 / (1.0 + w_hi));
        let thresh = rel * hi.max(zfloor);
        cluster[i] = if hi - lo <= thresh { cluster[i - 1] } else { cluster[i - 1] + 1 };
    }
    let nclusters = cluster[n - 1] + 1;
    let mut centers = [0.0f64; MAX_ORDER];
    {
        let mut count = [0usize; MAX_ORDER];
        for i in 0..n {
            centers[cluster[i]] += pts[i].0;
            count[cluster[i]] += 1;
        }
        for k in 0..nclusters {
            centers[k] /= count[k] as f64;
        }
    }

    // Triangular table over spans [i, i+j].
    let mut table = [[0.0f64; MAX_ORDER]; MAX_ORDER];
    for i in 0..n {
        table[0][i] = pts[i].1;
    }
    for j in 1..n {
        for i in 0..n - j {
            table[j][i] = if cluster[i] == cluster[i + j] {
                taylor_dd(t, centers[cluster[i]], &pts[i..=i + j])
            } else {
                (table[j - 1][i + 1] - table[j - 1][i]) / (pts[i + j].0 - pts[i].0)
            };
        }
    }
    let dd = table[n - 1][0];
    if n % 2 == 1 {
        dd
    } else {
        -dd
    }
}

/// Divided difference over clustered nodes via the Taylor form around `c`.
fn taylor_dd(t: f64, c: f64, pts: &[(f64, f64)]) -> f64 {
    let m = pts.len();
    const R_MAX: usize = 40;
    // Complete homogeneous symmetric polynomials of the offsets.
    let mut h = [0.0f64; R_MAX + 1];
    h[0] = 1.0;
    for &(z, _) in pts {
        let u = z - c;
        for r in 1..=R_MAX {
            h[r] += u * h[r - 1];
        }
    }
    let mut sum = 0.0;
    for r in 0..=R_MAX {
        let term = g_deriv_scaled(t, c, m - 1 + r) * h[r];
        sum += term;
        if r > 0 && term.abs() <= 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;

    fn g_ref(t: f64, z: f64) -> f64 {
        // 1 − cos w = 2 sin²(w/2), stable for small w
        if z == 0.0 {
            0.5 * t * t
        } else {
            let half = 0.5 * t * z.sqrt();
            2.0 * half.sin() * half.sin() / z
        }
    }

    #[test]
    fn g_value_matches_reference_across_switch() {
        for &t in &[0.5, 1.0, 7.0] {
            for &z in &[0.0, 1e-8, 0.3, 2.0, 4.0, 10.0, 300.0, 1e6] {
                let v = g_value(t, z);
                let r = g_ref(t, z);
                assert!(
                    (v - r).abs() <= 1e-11 * r.abs().max(1e-12),
                    "t={t} z={z} v={v} r={r}"
                );
            }
        }
    }

    #[test]
    fn derivative_matches_analytic_first_derivative() {
        // g'(z) = t sin(t√z)/(2 z^{3/2}) − (1 − cos(t√z))/z²
        for &(t, z) in &[(1.0f64, 0.5f64), (1.0, 9.0), (3.0, 40.0), (0.3, 2000.0), (6.0, 25.0)] {
            let w = t * z.sqrt();
            let analytic = t * w.sin() / (2.0 * z.powf(1.5)) - (1.0 - w.cos()) / (z * z);
            let v = g_deriv_scaled(t, z, 1);
            assert!(
                (v - analytic).abs() <= 1e-10 * analytic.abs().max(1e-14),
                "t={t} z={z} v={v} analytic={analytic}"
            );
        }
    }

    #[test]
    fn derivative_routes_agree_near_switch() {
        // both routes must agree just below and above w = 12
        for j in 0..8 {
            for &frac in &[0.95, 0.999, 1.001, 1.05] {
                let t = 2.0;
                let w = W_SWITCH * frac;
                let z = (w / t) * (w / t);
                let a = g_deriv_series(t, z, j);
                let b = g_deriv_closed(t, z, j);
                assert!(
                    (a - b).abs() <= 2e-9 * a.abs().max(1e-16),
                    "j={j} w={w} series={a} closed={b}"
                );
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for j in 1..6 {
            for &(t, z) in &[(1.0f64, 2.0f64), (2.0, 60.0), (5.0, 9.0)] {
                let h = 1e-5 * z.max(1.0);
                let fd = (g_deriv_scaled(t, z + h, j - 1) - g_deriv_scaled(t, z - h, j - 1))
                    / (2.0 * h);
                let v = g_deriv_scaled(t, z, j) * j as f64; // unscale: g^{(j)}/ (j-1)!
                assert!(
                    (v - fd).abs() <= 1e-5 * fd.abs().max(1e-10),
                    "j={j} t={t} z={z} v={v} fd={fd}"
                );
            }
        }
    }

    #[test]
    fn order_one_is_g() {
        let t = 1.3;
        for &z in &[0.0, 0.7, 19.0] {
            let v = simplex_sin_integral(t, &[z]);
            assert!((v - g_ref(t, z)).abs() <= 1e-12 * g_ref(t, z).abs().max(1e-12));
        }
    }

    #[test]
    fn order_two_matches_partial_fraction_and_quadrature() {
        let (t, a1, a2) = (1.0, 2.0, 3.0);
        let (z1, z2) = (a1 * a1, a2 * a2);
        let v = simplex_sin_integral(t, &[z1, z2]);
        let pf = (g_ref(t, z1) - g_ref(t, z2)) / (z2 - z1);
        assert!((v - pf).abs() <= 1e-13);

        // direct 2-D simplex quadrature of sin(a1(s2−s1))/a1 · sin(a2(t−s2))/a2
        let outer = adaptive_simpson(
            &|s2: f64| {
                let inner = adaptive_simpson(
                    &|s1: f64| ((s2 - s1) * a1).sin() / a1,
                    0.0,
                    s2,
                    1e-12,
                    24,
                );
                inner * ((t - s2) * a2).sin() / a2
            },
            0.0,
            t,
            1e-10,
            24,
        );
        assert!((v - outer).abs() <= 1e-7, "dd={v} quad={outer}");
    }

    #[test]
    fn order_three_matches_simplex_quadrature() {
        let t = 0.9;
        let zs = [1.0f64, 16.0, 36.0];
        let a: Vec<f64> = zs.iter().map(|z| z.sqrt()).collect();
        let v = simplex_sin_integral(t, &zs);
        let quad = adaptive_simpson(
            &|s3: f64| {
                adaptive_simpson(
                    &|s2: f64| {
                        adaptive_simpson(
                            &|s1: f64| ((s2 - s1) * a[0]).sin() / a[0],
                            0.0,
                            s2,
                            1e-11,
                            20,
                        ) * ((s3 - s2) * a[1]).sin()
                            / a[1]
                    },
                    0.0,
                    s3,
                    1e-10,
                    20,
                ) * ((t - s3) * a[2]).sin()
                    / a[2]
            },
            0.0,
            t,
            1e-9,
            20,
        );
        assert!((v - quad).abs() <= 1e-6, "dd={v} quad={quad}");
    }

    #[test]
    fn confluent_pair_matches_derivative_formula() {
        // equal nodes: A = −g'(z)
        let (t, z) = (1.7, 5.0);
        let v = simplex_sin_integral(t, &[z, z]);
        let w = t * z.sqrt();
        let gp = t * w.sin() / (2.0 * z.powf(1.5)) - (1.0 - w.cos()) / (z * z);
        assert!((v + gp).abs() <= 1e-12 * gp.abs(), "v={v} -g'={}", -gp);
    }

    #[test]
    fn near_confluent_is_continuous() {
        // sweep a node across the cluster threshold; values must vary
        // smoothly (the integral is analytic in z)
        let t = 2.0;
        let base = [1.0, 4.0, 4.0, 9.0];
        let exact = simplex_sin_integral(t, &base);
        for &eps in &[1e-12, 1e-9, 1e-7, 1e-5, 1e-3] {
            let pert = [1.0, 4.0, 4.0 + eps, 9.0];
            let v = simplex_sin_integral(t, &pert);
            assert!(
                (v - exact).abs() <= 1e-6 * exact.abs().max(1e-12) + eps.abs(),
                "eps={eps} v={v} exact={exact}"
            );
        }
    }

    #[test]
    fn all_equal_high_order_matches_series_route() {
        // n identical nodes: A = (−1)^{n−1} g^{(n−1)}(z)/(n−1)!; evaluate
        // with both w-routes by scaling t and z inversely.
        for n in 2..=6usize {
            for &(t, z) in &[(1.0f64, 4.0f64), (4.0, 25.0)] {
                let zs = vec![z; n];
                let v = simplex_sin_integral(t, &zs);
                let expect = g_deriv_scaled(t, z, n - 1) * if n % 2 == 1 { 1.0 } else { -1.0 };
                assert!(
                    (v - expect).abs() <= 1e-11 * expect.abs().max(1e-14),
                    "n={n} t={t} z={z}"
                );
            }
        }
    }

    #[test]
    fn scaling_law_in_time() {
        // A(ct; z) = c^{2n} A(t; c² z)
        let t = 0.8;
        let c = 1.9;
        let zs = [0.5, 2.0, 7.0];
        let lhs = simplex_sin_integral(c * t, &zs);
        let zs_scaled: Vec<f64> = zs.iter().map(|z| z * c * c).collect();
        let rhs = c.powi(2 * zs.len() as i32) * simplex_sin_integral(t, &zs_scaled);
        assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(1e-14), "{lhs} vs {rhs}");
    }

    #[test]
    fn laplace_transform_identity() {
        // ∫₀^∞ e^{-t} A(t; z) dt = Π_j (1 + z_j)^{-1}
        let zs = [0.3, 2.0, 5.5];
        let rule = crate::quad::gauss_laguerre(48);
        let val = rule.sum(|t| simplex_sin_integral(t, &zs));
        let expect: f64 = zs.iter().map(|z| 1.0 / (1.0 + z)).product();
        assert!((val - expect).abs() <= 1e-9 * expect, "gl={val} expect={expect}");
    }

    #[test]
    fn cached_interface_matches_plain() {
        let t = 1.1;
        let zs = [4.0, 0.2, 4.0 + 1e-12, 30.0];
        let plain = simplex_sin_integral(t, &zs);
        let mut pts: Vec<(f64, f64)> = zs.iter().map(|&z| (z, g_value(t, z))).collect();
        let cached = simplex_sin_integral_cached(t, &mut pts);
        assert_eq!(plain.to_bits(), cached.to_bits());
    }
}

//! Small numerical kernels shared across modules: quantiles, adaptive
//! quadrature, normal and incomplete-gamma tails.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

/// Empirical quantile of ascending `sorted` data by linear interpolation of
/// order statistics at position `h = (n + 1) p`, clamped to the sample range.
///
/// With two observations the 2.5% and 97.5% quantiles are the minimum and
/// maximum.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let n = sorted.len();
    let h = (n as f64 + 1.0) * p;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor();
    let frac = h - lo;
    let i = lo as usize - 1;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

/// Sorts a copy of `values` and returns the quantile at `p`.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        // Odd Kronrod nodes are the Gauss nodes.
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]` to absolute
/// tolerance `abs_tol`, bisecting until each panel's error estimate is within
/// its share of the budget.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gk15(f, a, b);
        if err <= tol || depth >= 40 {
            return value;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth + 1) + recurse(f, m, b, 0.5 * tol, depth + 1)
    }
    recurse(&f, a, b, abs_tol, 0)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// `ln(1 - Φ(x))`, accurate far into the upper tail.
pub fn normal_log_sf(x: f64) -> f64 {
    if x < 35.0 {
        normal_sf(x).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - x.ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// Inverse Mills ratio `φ(x) / (1 - Φ(x))`.
pub fn inverse_mills(x: f64) -> f64 {
    if x < 35.0 {
        normal_pdf(x) / normal_sf(x)
    } else {
        let x2 = x * x;
        x / (1.0 - 1.0 / x2 + 3.0 / (x2 * x2))
    }
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(a, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_two_points_gives_extremes() {
        let v = [3.0, 1.0];
        assert_eq!(quantile(&v, 0.025), 1.0);
        assert_eq!(quantile(&v, 0.975), 3.0);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        // h = 5 * 0.5 = 2.5
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
        // h = 5 * 0.3 = 1.5
        assert!((quantile(&v, 0.3) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn integrate_polynomial_and_exponential() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-12);
        assert!((v - 9.0).abs() < 1e-12);
        let v = integrate(|t| (-0.1 * t).exp(), 0.0, 20.0, 1e-10);
        assert!((v - (1.0 - (-2.0f64).exp()) / 0.1).abs() < 1e-10);
    }

    #[test]
    fn normal_tails_consistent() {
        for &x in &[-3.0, -0.5, 0.0, 1.0, 4.0, 20.0] {
            assert!((normal_cdf(x) + normal_sf(x) - 1.0).abs() < 1e-15);
            assert!((normal_log_sf(x) - normal_sf(x).ln()).abs() < 1e-10);
        }
        // continuity of the asymptotic branches
        assert!((normal_log_sf(34.999) - normal_log_sf(35.001)).abs() < 0.1);
        assert!((inverse_mills(34.999) - inverse_mills(35.001)).abs() < 0.01);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn gamma_q_closed_form_half_integer() {
        // Q(2.5, x) = erfc(sqrt x) + exp(-x) * 2 sqrt(x / pi) * (1 + 2x/3)
        for &x in &[0.1f64, 1.0, 2.5, 7.0] {
            let closed = erfc(x.sqrt()) + (-x).exp() * 2.0 * (x / PI).sqrt() * (1.0 + 2.0 * x / 3.0);
            assert!((gamma_q(2.5, x) - closed).abs() < 1e-10, "x={x}");
        }
        assert!((gamma_q(2.5, 2.5) - 0.415_880_186_995_508).abs() < 1e-12);
    }
}

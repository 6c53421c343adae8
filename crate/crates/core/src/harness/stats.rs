//! Statistical routines used by the experiments: normal and chi-square
//! distributions, Kolmogorov–Smirnov distances, and sample moments.

use crate::error::{invalid, Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin().abs()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower and upper incomplete gamma, `(P(s, x), Q(s, x))`.
pub fn incomplete_gamma(s: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    let log_front = -x + s * x.ln() - ln_gamma(s);
    if x < s + 1.0 {
        let mut ap = s;
        let mut del = 1.0 / s;
        let mut sum = del;
        for _ in 0..10_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        let p = (sum * log_front.exp()).min(1.0);
        (p, 1.0 - p)
    } else {
        // Lentz continued fraction for Q.
        let tiny = 1e-300;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (h * log_front.exp()).min(1.0);
        (1.0 - q, q)
    }
}

/// Standard normal upper tail `1 − Φ(x)`, accurate far into both tails.
pub fn normal_sf(x: f64) -> f64 {
    let (_, q) = incomplete_gamma(0.5, 0.5 * x * x);
    if x >= 0.0 {
        0.5 * q
    } else {
        1.0 - 0.5 * q
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    normal_sf(-x)
}

/// Inverse of `Φ`: rational first guess refined by one Halley step.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("probability must lie in (0, 1) (got {p})")));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < p_low {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    let e = if x < 0.0 { normal_cdf(x) - p } else { (1.0 - p) - normal_sf(x) };
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x -= u / (1.0 + 0.5 * x * u);
    Ok(x)
}

pub fn chi2_cdf(x: f64, dof: f64) -> f64 {
    incomplete_gamma(0.5 * dof, 0.5 * x).0
}

pub fn chi2_quantile(p: f64, dof: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(dof > 0.0) {
        return Err(invalid(format!("chi-square quantile needs p in (0, 1) and dof > 0 (got {p}, {dof})")));
    }
    let mut hi = dof.max(1.0);
    while chi2_cdf(hi, dof) < p {
        hi *= 2.0;
    }
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `sup_x |F_n(x) − F(x)|` by the sorted-sample sweep.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("KS samples"));
    }
    let mut s = samples.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    let n = s.len() as f64;
    Ok(s.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    }))
}

/// `sup_x |F_n(x) − G_m(x)|` for two samples; ties are consumed together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("KS samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic 1% critical value of the one-sample KS distance, `1.63/√n`.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Two-sided chi-square band for the sample variance of `n` Gaussian draws
/// with true variance `sigma2`, at coverage `level`.
pub fn variance_band(sigma2: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(invalid("variance band needs at least 2 samples"));
    }
    let dof = (n - 1) as f64;
    let tail = 0.5 * (1.0 - level);
    Ok((
        sigma2 * chi2_quantile(tail, dof)? / dof,
        sigma2 * chi2_quantile(1.0 - tail, dof)? / dof,
    ))
}

/// Confidence interval for a variance from its sample value.
pub fn variance_ci(s2: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(invalid("variance interval needs at least 2 samples"));
    }
    let dof = (n - 1) as f64;
    let tail = 0.5 * (1.0 - level);
    Ok((dof * s2 / chi2_quantile(1.0 - tail, dof)?, dof * s2 / chi2_quantile(tail, dof)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

    #[test]
    fn ln_gamma_against_factorials() {
        let mut f = 1.0f64;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - f.ln()).abs() < 1e-12 * f.ln().abs().max(1.0));
            f *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn normal_against_reference() {
        let pinned = [
            (-5.0, 2.866_515_718_791_946e-7),
            (-3.6, 1.591_085_901_575_34e-4),
            (-1.0, 0.158_655_253_931_457_07),
            (0.0, 0.5),
            (0.7, 0.758_036_347_776_927),
            (2.5, 0.993_790_334_674_223_8),
        ];
        for (x, want) in pinned {
            assert!((normal_cdf(x) - want).abs() <= 1e-14 * want, "x = {x}");
        }
        let n = Normal::new(0.0, 1.0).unwrap();
        for i in -80..=80 {
            let x = i as f64 * 0.1;
            let want = n.cdf(x);
            assert!((normal_cdf(x) - want).abs() <= 1e-9 * want, "x = {x}");
            let tail = n.sf(x);
            assert!((normal_sf(x) - tail).abs() <= 1e-9 * tail, "x = {x}");
        }
    }

    #[test]
    fn quantile_round_trips() {
        let n = Normal::new(0.0, 1.0).unwrap();
        for p in [1e-10, 1e-4, 0.005, 0.02, 0.25, 0.5, 0.75, 0.9, 0.995, 1.0 - 1e-9] {
            let x = normal_quantile(p).unwrap();
            assert!((x - n.inverse_cdf(p)).abs() < 1e-9 * x.abs().max(1.0), "p = {p}");
        }
        assert!((normal_quantile(0.75).unwrap() - 0.674_489_750_196_081_7).abs() < 1e-13);
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn chi_square_against_reference() {
        for dof in [1.0, 2.0, 5.0, 99.0, 399.0] {
            let c = ChiSquared::new(dof).unwrap();
            for p in [0.005, 0.5, 0.995] {
                let q = chi2_quantile(p, dof).unwrap();
                assert!((q - c.inverse_cdf(p)).abs() < 1e-8 * q.max(1.0), "dof {dof} p {p}");
                assert!((chi2_cdf(q, dof) - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ks_degenerate_cases() {
        let at_median = vec![0.0; 7];
        assert!((ks_statistic(&at_median, normal_cdf).unwrap() - 0.5).abs() < 1e-15);
        let x = [0.3, 1.0, -2.0, 0.3];
        assert_eq!(ks_two_sample(&x, &x).unwrap(), 0.0);
        assert!(ks_statistic(&[], normal_cdf).is_err());
    }

    #[test]
    fn two_sample_with_ties() {
        let d = ks_two_sample(&[1.0, 2.0], &[1.0, 1.0, 3.0, 3.0]).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        let inf = f64::INFINITY;
        assert_eq!(ks_two_sample(&[1.0, inf], &[1.0, inf]).unwrap(), 0.0);
    }

    #[test]
    fn variance_band_brackets_truth() {
        let (lo, hi) = variance_band(2.0, 400, 0.99).unwrap();
        assert!(lo < 2.0 && 2.0 < hi);
        let (lo, hi) = variance_ci(2.0, 400, 0.99).unwrap();
        assert!(lo < 2.0 && 2.0 < hi);
        assert_eq!(sample_variance(&[1.0, 3.0]), 2.0);
    }
}

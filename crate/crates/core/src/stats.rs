//! Small numerical helpers: normal quantiles, binomial tails, Wilson
//! intervals and empirical quantiles.

#![allow(clippy::excessive_precision)]

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Standard normal quantile `Phi^{-1}(p)` (Wichura, AS 241; relative error ~1e-16).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        133.141_667_891_784_377_45,
        1_971.590_950_306_551_442_7,
        13_731.693_765_509_461_125,
        45_921.953_931_549_871_457,
        67_265.770_927_008_700_853,
        33_430.575_583_588_128_105,
        2_509.080_928_730_122_672_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_911_252,
        687.187_007_492_057_908_3,
        5_394.196_021_424_751_107_7,
        21_213.794_301_586_595_867,
        39_307.895_800_092_710_61,
        28_729.085_735_721_942_674,
        5_226.495_278_852_854_561,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        0.241_780_725_177_450_611_77,
        0.022_723_844_989_269_184_583_3,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        0.689_767_334_985_100_004_55,
        0.148_103_976_427_480_074_59,
        0.015_198_666_563_616_457_196_6,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        0.296_560_571_828_504_891_23,
        0.026_532_189_526_576_123_093,
        0.001_242_660_947_388_078_438_6,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_887_937_69,
        0.136_929_880_922_735_805_31,
        0.014_875_361_290_850_614_852_5,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    fn poly(c: &[f64; 8], r: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * r + k)
    }

    if p.is_nan() || p <= 0.0 {
        return if p == 0.0 { f64::NEG_INFINITY } else { f64::NAN };
    }
    if p >= 1.0 {
        return if p == 1.0 { f64::INFINITY } else { f64::NAN };
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// `z_alpha`, the `(1 - alpha)` quantile of the standard normal.
pub fn normal_upper_quantile(alpha: f64) -> f64 {
    -normal_quantile(alpha)
}

/// `P(Bin(m, p) >= k)`, summed in log space.
pub fn binomial_upper_tail(m: u64, p: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > m {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let lm = ln_gamma(m as f64 + 1.0);
    let terms: Vec<f64> = (k..=m)
        .map(|j| lm - ln_gamma(j as f64 + 1.0) - ln_gamma((m - j) as f64 + 1.0) + j as f64 * lp + (m - j) as f64 * lq)
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    (max + s.ln()).exp().min(1.0)
}

/// Two-sided Wilson score interval for `k` successes out of `n` at `level`.
pub fn wilson_interval(k: u64, n: u64, level: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidArgument("Wilson interval needs n >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds n = {n}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must be in (0,1), got {level}")));
    }
    let z = normal_upper_quantile((1.0 - level) / 2.0);
    let (k, n) = (k as f64, n as f64);
    let z2 = z * z;
    let denom = n + z2;
    let center = (k + z2 / 2.0) / denom;
    let half = z / denom * (k * (n - k) / n + z2 / 4.0).sqrt();
    let lo = if k == 0.0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

/// Inverse-CDF empirical quantile of an ascending slice: the `ceil(q * m)`-th
/// smallest value, clamped to the first and last element.
pub fn empirical_quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let m = sorted.len();
    let k = (q * m as f64).ceil() as usize;
    sorted[k.clamp(1, m) - 1]
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[inline]
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn quantile_matches_reference() {
        let n = Normal::new(0.0, 1.0).unwrap();
        for &p in &[
            1e-300, 1e-12, 1e-6, 0.001, 0.025, 0.05, 0.2, 0.5, 0.7, 0.95, 0.975, 0.999999,
        ] {
            let ours = normal_quantile(p);
            let back = n.cdf(ours);
            assert!((back - p).abs() <= 1e-9 * p.max(1e-9), "p={p} ours={ours} back={back}");
        }
        assert!((normal_upper_quantile(0.05) - 1.644_853_626_951_472_2).abs() < 1e-14);
        assert!((normal_upper_quantile(0.025) - 1.959_963_984_540_054).abs() < 1e-14);
        assert_eq!(normal_quantile(0.5), 0.0);
    }

    fn tail_by_recursion(m: u64, p: f64, k: u64) -> f64 {
        let mut pmf = (1.0 - p).powi(m as i32);
        let mut below = 0.0;
        for j in 0..k {
            below += pmf;
            pmf *= (m - j) as f64 / (j + 1) as f64 * p / (1.0 - p);
        }
        1.0 - below
    }

    #[test]
    fn binomial_tail() {
        for k in 0..=8 {
            let a = binomial_upper_tail(100, 0.05, k);
            let b = tail_by_recursion(100, 0.05, k);
            assert!((a - b).abs() < 1e-12, "k={k}: {a} vs {b}");
        }
        let t2 = binomial_upper_tail(100, 0.05, 2);
        let t3 = binomial_upper_tail(100, 0.05, 3);
        assert!(t2 >= 0.95 && t3 < 0.95, "{t2} {t3}");
        assert!((binomial_upper_tail(1, 0.05, 1) - 0.05).abs() < 1e-15);
        assert_eq!(binomial_upper_tail(10, 0.3, 11), 0.0);
        let big = binomial_upper_tail(20_000, 0.05, 900);
        assert!(big > 0.99 && big <= 1.0);
    }

    #[test]
    fn wilson_examples() {
        assert_eq!(wilson_interval(0, 10, 0.95).unwrap().0, 0.0);
        assert_eq!(wilson_interval(10, 10, 0.95).unwrap().1, 1.0);
        let (lo, hi) = wilson_interval(190, 200, 0.95).unwrap();
        // Reference computed independently from the closed form.
        let z: f64 = 1.959_963_984_540_054;
        let (k, n) = (190.0f64, 200.0f64);
        let c = (k + z * z / 2.0) / (n + z * z);
        let h = z / (n + z * z) * (k * (n - k) / n + z * z / 4.0).sqrt();
        assert!((lo - (c - h)).abs() < 1e-12 && (hi - (c + h)).abs() < 1e-12);
        assert!((lo - 0.9104).abs() < 5e-5 && (hi - 0.9726).abs() < 5e-5, "{lo} {hi}");
        assert!(wilson_interval(1, 0, 0.95).is_err());
        assert!(wilson_interval(3, 2, 0.95).is_err());
    }

    #[test]
    fn quantile_convention() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(empirical_quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(empirical_quantile_sorted(&v, 0.5), 2.0);
        assert_eq!(empirical_quantile_sorted(&v, 0.51), 3.0);
    }
}

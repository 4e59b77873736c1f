use approx::assert_abs_diff_eq;
use predset_core::conformal::{
    inductive_cp_rank, inductive_cp_threshold, weighted_cp_set, CalibrationSet, WeightedCalibration,
};
use predset_core::simbench::{oracle_psi, oracle_tau0, OracleSample, Population};
use predset_core::stats::wilson_interval;
use predset_core::{fit_binary, BinaryLearnerSpec, DgpKind, DgpSpec, Purpose, RiskTargets, RngStream};

fn choose(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn binom_tail(m: u64, p: f64, k: u64) -> f64 {
    (k..=m)
        .map(|j| choose(m, j) * p.powi(j as i32) * (1.0 - p).powi((m - j) as i32))
        .sum()
}

#[test]
fn icp_rank_matches_direct_tail_sums() {
    let t = RiskTargets::new(0.05, 0.05).unwrap();
    assert!(binom_tail(100, 0.05, 2) >= 0.95 && binom_tail(100, 0.05, 3) < 0.95);
    assert_eq!(inductive_cp_rank(100, &t), Some(2));
    assert_eq!(inductive_cp_rank(1, &t), None);
    for m in [20u64, 60, 150, 400] {
        let want = (1..=m)
            .rev()
            .find(|&k| binom_tail(m, 0.05, k) >= 0.95)
            .map(|k| k as usize);
        assert_eq!(inductive_cp_rank(m as usize, &t), want, "m = {m}");
    }
    let scores: Vec<f64> = (1..=100).rev().map(|i| i as f64 / 100.0).collect();
    let cal = CalibrationSet::new(scores).unwrap();
    assert_eq!(inductive_cp_threshold(&cal, &t), Some(0.02));
}

#[test]
fn icp_large_error_target_uses_max_score() {
    let t = RiskTargets::new(0.999, 0.05).unwrap();
    let cal = CalibrationSet::new(vec![0.3, 0.1, 0.2]).unwrap();
    assert_eq!(inductive_cp_threshold(&cal, &t), Some(0.3));
}

#[test]
fn wcp_equal_weights_is_split_conformal() {
    let scores: Vec<f64> = (0..39).map(|i| (i as f64 * 0.37).sin().abs()).collect();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let alpha = 0.1;
    let k = (alpha * 40.0f64).floor() as usize;
    let cutoff = WeightedCalibration::new(&scores, &vec![3.0; 39])
        .unwrap()
        .cutoff(3.0, alpha)
        .unwrap();
    assert_eq!(cutoff, sorted[k - 1]);
    let t = RiskTargets::new(alpha, 0.05).unwrap();
    let set = weighted_cp_set(&scores, &vec![1.0; 39], 1.0, &sorted, &t).unwrap();
    assert_eq!(set.iter().filter(|&&b| !b).count(), k - 1);
}

#[test]
fn wcp_degenerate_weights() {
    assert!(WeightedCalibration::new(&[0.1, 0.2], &[0.0, 0.0])
        .unwrap()
        .cutoff(0.0, 0.1)
        .is_err());
}

#[test]
fn wilson_matches_closed_form() {
    let z = 1.959963984540054;
    let (k, n) = (190.0f64, 200.0f64);
    let p = k / n;
    let centre = (p + z * z / (2.0 * n)) / (1.0 + z * z / n);
    let half = z / (1.0 + z * z / n) * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    let (lo, hi) = wilson_interval(190, 200, 0.95).unwrap();
    assert_abs_diff_eq!(lo, centre - half, epsilon = 1e-9);
    assert_abs_diff_eq!(hi, centre + half, epsilon = 1e-9);
    assert_abs_diff_eq!(lo, 0.9104, epsilon = 1e-4);
    assert_abs_diff_eq!(hi, 0.9726, epsilon = 1e-4);
    assert_eq!(wilson_interval(0, 10, 0.95).unwrap().0, 0.0);
    assert_abs_diff_eq!(wilson_interval(10, 10, 0.95).unwrap().1, 1.0, epsilon = 1e-12);
    assert!(wilson_interval(0, 0, 0.95).is_err());
}

/// Unpenalized logistic MLE by plain Newton on (intercept, slope).
fn newton_logistic(x: &[f64], z: &[bool]) -> (f64, f64) {
    let (mut b0, mut b1) = (0.0, 0.0);
    for _ in 0..100 {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&xi, &zi) in x.iter().zip(z) {
            let p = 1.0 / (1.0 + (-(b0 + b1 * xi)).exp());
            let r = zi as u8 as f64 - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * xi;
            h00 += w;
            h01 += w * xi;
            h11 += w * xi * xi;
        }
        let det = h00 * h11 - h01 * h01;
        b0 += (h11 * g0 - h01 * g1) / det;
        b1 += (h00 * g1 - h01 * g0) / det;
    }
    (b0, b1)
}

#[test]
fn logistic_learner_matches_independent_newton() {
    let x = [-2.0, -1.0, -0.5, 0.0, 0.3, 0.8, 1.2, 2.0];
    let z = [false, false, true, false, true, false, true, true];
    let (b0, b1) = newton_logistic(&x, &z);
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let rng = RngStream::new(0, Purpose::LearnerInit, 0);
    let fit = fit_binary(&BinaryLearnerSpec::logistic_ridge(0.0), &refs, &z, &rng).unwrap();
    for v in [-1.5, 0.0, 0.7] {
        let want = 1.0 / (1.0 + (-(b0 + b1 * v)).exp());
        assert_abs_diff_eq!(fit.predict(&[v]).unwrap(), want, epsilon = 1e-7);
    }
}

#[test]
fn logistic_learner_symmetric_design() {
    let rows = [vec![-1.0], vec![1.0]];
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let rng = RngStream::new(0, Purpose::LearnerInit, 0);
    let fit = fit_binary(&BinaryLearnerSpec::logistic_ridge(1e-6), &refs, &[false, true], &rng).unwrap();
    let (lo, hi) = (fit.predict(&[-1.0]).unwrap(), fit.predict(&[1.0]).unwrap());
    assert!(lo < 0.5 && 0.5 < hi);
    assert_abs_diff_eq!(lo, 1.0 - hi, epsilon = 1e-9);
}

#[test]
fn oracle_psi_extremes_and_curve() {
    let dgp = DgpSpec::new(DgpKind::LowDim);
    let rng = RngStream::new(1, Purpose::Oracle, 0);
    assert_eq!(oracle_psi(&dgp, -0.01, 2000, &rng).unwrap(), 0.0);
    assert_abs_diff_eq!(oracle_psi(&dgp, 1.01, 2000, &rng).unwrap(), 1.0, epsilon = 1e-12);
    let curve = OracleSample::draw(&dgp, Population::Target, 5000, &rng)
        .unwrap()
        .curve();
    let psis: Vec<f64> = (0..=6).map(|k| curve.psi(k as f64 * 0.05)).collect();
    assert!(psis.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn source_threshold_exceeds_target_threshold_under_shift() {
    let dgp = DgpSpec::new(DgpKind::HighDimSparse);
    let rng = RngStream::new(2, Purpose::Oracle, 1);
    let target = oracle_tau0(&dgp, 0.05, 200_000, &rng, Population::Target).unwrap();
    let source = oracle_tau0(&dgp, 0.05, 200_000, &rng, Population::Source).unwrap();
    assert!(source > target, "{source} vs {target}");
}

/// Order-statistic SE of the `alpha` quantile from `m` target score draws.
fn quantile_se(dgp: &DgpSpec, alpha: f64, m: usize, rng: &RngStream) -> f64 {
    let mut r = rng.rng();
    let mut s: Vec<f64> = (0..m)
        .map(|_| {
            let x = dgp.draw_x(Population::Target, &mut r);
            let y = dgp.draw_label(&x, &mut r);
            dgp.scores(&x)[y]
        })
        .collect();
    s.sort_by(f64::total_cmp);
    let c = m as f64 * alpha;
    let d = (c * (1.0 - alpha)).sqrt();
    (s[(c + d).round() as usize] - s[(c - d).round() as usize]) / 2.0
}

#[test]
fn tau0_is_stable_in_m() {
    let dgp = DgpSpec::new(DgpKind::LowDim);
    let ra = RngStream::new(3, Purpose::Oracle, 1);
    let rb = RngStream::new(4, Purpose::Oracle, 1);
    let a = oracle_tau0(&dgp, 0.05, 100_000, &ra, Population::Target).unwrap();
    let b = oracle_tau0(&dgp, 0.05, 200_000, &rb, Population::Target).unwrap();
    let se = quantile_se(&dgp, 0.05, 100_000, &ra).hypot(quantile_se(&dgp, 0.05, 200_000, &rb));
    assert!(se > 0.0 && (a - b).abs() < 3.0 * se, "{a} vs {b}, se {se}");
}

#[test]
fn tau0_consistent_with_oracle_curve() {
    let dgp = DgpSpec::new(DgpKind::LowDim);
    let rng = RngStream::new(5, Purpose::Oracle, 1);
    let tau0 = oracle_tau0(&dgp, 0.05, 100_000, &rng, Population::Target).unwrap();
    let se = quantile_se(&dgp, 0.05, 100_000, &rng);
    let curve = OracleSample::draw(
        &dgp,
        Population::Target,
        100_000,
        &RngStream::new(5, Purpose::Oracle, 0),
    )
    .unwrap()
    .curve();
    assert!(curve.psi(tau0 - 3.0 * se) <= 0.05);
    assert!(curve.psi(tau0 + 3.0 * se) >= 0.05);
}

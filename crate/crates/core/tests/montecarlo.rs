use proptest::prelude::*;

use weakval::montecarlo::{ks_critical_1pct, ks_statistic, run_kick, run_single, run_threshold, RunOptions, ThresholdSetup};
use weakval::pointer::{gaussian, Basis};
use weakval::protocols::{conditional_meter_density, MeasurementSetup};
use weakval::quadrature::GaussLegendre;
use weakval::quantum::{Observable, PureState};

fn setup(lambda: f64) -> MeasurementSetup {
    let psi = PureState::basis(2, 0).unwrap();
    let phi = PureState::from_real(&[0.6, 0.8]).unwrap();
    MeasurementSetup::new(Observable::sigma_x(), lambda, psi, phi).unwrap()
}

/// Cumulative distribution of `density` by quadrature on a fine table.
fn tabulated_cdf(density: impl Fn(f64) -> f64, lo: f64, hi: f64) -> impl Fn(f64) -> f64 {
    let cells = 4000;
    let h = (hi - lo) / cells as f64;
    let gl = GaussLegendre::new(8);
    let mut table = vec![0.0];
    for i in 0..cells {
        let a = lo + i as f64 * h;
        let next = table[i] + gl.integrate(a, a + h, &density);
        table.push(next);
    }
    let total = table[cells];
    move |x: f64| {
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let i = (((x - lo) / h) as usize).min(cells - 1);
        let a = lo + i as f64 * h;
        (table[i] + gl.integrate(a, x, &density)) / total
    }
}

fn kept(records: &[weakval::montecarlo::ExperimentRecord]) -> Vec<f64> {
    records.iter().filter(|r| r.postselected).map(|r| r.x).collect()
}

#[test]
fn single_protocol_samples_follow_conditional_density() {
    let s = setup(0.8);
    let (records, _) = run_single(&s, &RunOptions::new(100_000, 11)).unwrap();
    let xs = kept(&records);
    let cdf = tabulated_cdf(|x| conditional_meter_density(&s, Basis::X, x), -12.0, 12.0);
    let d = ks_statistic(&xs, cdf);
    assert!(d < ks_critical_1pct(xs.len()), "D = {d}, n = {}", xs.len());
}

#[test]
fn kick_protocol_samples_follow_xprime_density() {
    let s = setup(1.5);
    let (records, _) = run_kick(&s, &RunOptions::new(100_000, 12)).unwrap();
    let xs = kept(&records);
    let cdf = tabulated_cdf(|x| conditional_meter_density(&s, Basis::XPrime, x), -12.0, 12.0);
    let d = ks_statistic(&xs, cdf);
    assert!(d < ks_critical_1pct(xs.len()), "D = {d}, n = {}", xs.len());
}

#[test]
fn threshold_samples_follow_truncated_mixture() {
    let ts = ThresholdSetup {
        observable: Observable::sigma_z(),
        lambda: 0.01,
        psi: PureState::from_real(&[1.0, 1.0]).unwrap(),
        threshold_multiple: 100.0,
    };
    let (records, _) = run_threshold(&ts, &RunOptions::new(200_000, 13)).unwrap();
    let xs = kept(&records);
    let t = ts.threshold();
    let mixture = |x: f64| 0.5 * (gaussian(x - 0.01) + gaussian(x + 0.01));
    let cdf = tabulated_cdf(move |x| if x >= t { mixture(x) } else { 0.0 }, t, 12.0);
    let d = ks_statistic(&xs, cdf);
    assert!(d < ks_critical_1pct(xs.len()), "D = {d}, n = {}", xs.len());
    assert!(xs.iter().all(|&x| x >= t));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn records_do_not_depend_on_thread_count(seed in any::<u64>(), trials in 1usize..3000, threads in 2usize..6) {
        let s = setup(0.4);
        let (one, _) = run_single(&s, &RunOptions::new(trials, seed).with_threads(1)).unwrap();
        let (many, _) = run_single(&s, &RunOptions::new(trials, seed).with_threads(threads)).unwrap();
        prop_assert_eq!(one, many);
    }

    #[test]
    fn prefix_of_a_longer_run_is_the_shorter_run(seed in any::<u64>(), trials in 1usize..2000) {
        let s = setup(0.4);
        let (short, _) = run_kick(&s, &RunOptions::new(trials, seed)).unwrap();
        let (long, _) = run_kick(&s, &RunOptions::new(trials + 500, seed)).unwrap();
        prop_assert_eq!(&long[..trials], &short[..]);
    }
}

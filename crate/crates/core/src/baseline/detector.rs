//! Energy-detector sensing baseline.
//!
//! The statistic is the mean echo energy `T = (1/n_c) Σ |y_i|²`; a target is
//! declared present iff `T > τ`. The threshold is calibrated by Monte Carlo:
//! equal numbers of absent and present echoes are drawn through the same
//! round-trip channel the learned system sees, and `τ` is placed at the
//! midpoint that maximizes balanced accuracy.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelKind, ComplexSignal, ScenarioLabel, SensingScenarioSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorCalibration {
    pub threshold: f64,
    pub snr_db: f64,
    pub trials: usize,
    pub n_c: usize,
    /// Balanced accuracy reached on the calibration draws.
    pub balanced_accuracy: f64,
}

/// `(1/n_c) Σ |y_i|²`.
pub fn energy_statistic(echo: &ComplexSignal) -> Result<f64> {
    if echo.is_empty() {
        return Err(Error::Contract("echo must have at least one symbol".into()));
    }
    Ok(echo.mean_energy())
}

/// Present iff the echo energy exceeds the calibrated threshold.
pub fn energy_detect(echo: &ComplexSignal, cal: &DetectorCalibration) -> Result<bool> {
    Ok(energy_statistic(echo)? > cal.threshold)
}

/// Random unit-modulus QPSK probe of `n_c` symbols.
pub fn probe_signal<R: Rng + ?Sized>(n_c: usize, rng: &mut R) -> ComplexSignal {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    ComplexSignal::new(
        (0..n_c)
            .map(|_| {
                let re = if rng.gen::<bool>() { a } else { -a };
                let im = if rng.gen::<bool>() { a } else { -a };
                Complex64::new(re, im)
            })
            .collect(),
    )
}

/// Echo energy of one scenario: probe, round-trip channel, statistic.
pub fn draw_statistic<R: Rng + ?Sized>(
    spec: &SensingScenarioSpec,
    kind: ChannelKind,
    n_c: usize,
    label: ScenarioLabel,
    rng: &mut R,
) -> Result<f64> {
    let probe = probe_signal(n_c, rng);
    let echo = spec.draw(n_c, label, kind, rng)?.apply(&probe);
    energy_statistic(&echo)
}

fn random_present<R: Rng + ?Sized>(spec: &SensingScenarioSpec, rng: &mut R) -> ScenarioLabel {
    ScenarioLabel::range(rng.gen_range(0..spec.num_ranges))
}

/// Threshold maximizing balanced accuracy over absent/present statistics.
///
/// Returns `(τ, balanced accuracy)`; `τ` sits halfway between the two
/// neighbouring sorted statistics that bracket the best split.
pub fn best_threshold(absent: &[f64], present: &[f64]) -> Result<(f64, f64)> {
    if absent.is_empty() || present.is_empty() {
        return Err(Error::Contract("calibration needs both classes".into()));
    }
    let mut all: Vec<(f64, bool)> = absent
        .iter()
        .map(|&t| (t, false))
        .chain(present.iter().map(|&t| (t, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (na, np) = (absent.len() as f64, present.len() as f64);
    // Threshold below everything: all declared present.
    let (mut absent_below, mut present_below) = (0usize, 0usize);
    let mut best = (all[0].0 * 0.5, 0.5);
    for i in 0..all.len() {
        if all[i].1 {
            present_below += 1;
        } else {
            absent_below += 1;
        }
        if i + 1 < all.len() && all[i + 1].0 == all[i].0 {
            continue;
        }
        let bal = 0.5 * (absent_below as f64 / na + (np - present_below as f64) / np);
        if bal > best.1 {
            let next = all.get(i + 1).map_or(all[i].0 * 2.0, |n| n.0);
            best = (0.5 * (all[i].0 + next), bal);
        }
    }
    Ok(best)
}

/// Calibrates `τ` from `trials` absent and `trials` present echoes.
pub fn calibrate_threshold<R: Rng + ?Sized>(
    spec: &SensingScenarioSpec,
    kind: ChannelKind,
    n_c: usize,
    trials: usize,
    rng: &mut R,
) -> Result<DetectorCalibration> {
    spec.validate()?;
    if n_c == 0 || trials == 0 {
        return Err(Error::Contract("calibration needs n_c >= 1 and trials >= 1".into()));
    }
    let mut absent = Vec::with_capacity(trials);
    let mut present = Vec::with_capacity(trials);
    for _ in 0..trials {
        absent.push(draw_statistic(spec, kind, n_c, ScenarioLabel::ABSENT, rng)?);
        let label = random_present(spec, rng);
        present.push(draw_statistic(spec, kind, n_c, label, rng)?);
    }
    let (threshold, balanced_accuracy) = best_threshold(&absent, &present)?;
    Ok(DetectorCalibration {
        threshold,
        snr_db: spec.base_sense_snr_db,
        trials,
        n_c,
        balanced_accuracy,
    })
}

/// Presence-detection accuracy on fresh scenarios drawn with the spec's prior.
pub fn detector_accuracy<R: Rng + ?Sized>(
    spec: &SensingScenarioSpec,
    kind: ChannelKind,
    cal: &DetectorCalibration,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Contract("accuracy needs at least one trial".into()));
    }
    let mut correct = 0usize;
    for _ in 0..trials {
        let label = if rng.gen::<f64>() < spec.absent_prior {
            ScenarioLabel::ABSENT
        } else {
            random_present(spec, rng)
        };
        let t = draw_statistic(spec, kind, cal.n_c, label, rng)?;
        correct += ((t > cal.threshold) == label.is_present()) as usize;
    }
    Ok(correct as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::snr_db_to_noise_var;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, StandardNormal};

    fn spec(snr: f64) -> SensingScenarioSpec {
        SensingScenarioSpec {
            base_sense_snr_db: snr,
            ..Default::default()
        }
    }

    #[test]
    fn absent_mean_energy_is_noise_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = spec(3.0);
        let n = 20_000;
        let mean = (0..n)
            .map(|_| draw_statistic(&s, ChannelKind::Awgn, 10, ScenarioLabel::ABSENT, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        let n0 = snr_db_to_noise_var(3.0);
        assert!((mean - n0).abs() / n0 < 0.01, "{mean} vs {n0}");
    }

    #[test]
    fn present_mean_energy_is_signal_plus_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = spec(3.0);
        let n = 20_000;
        let mean = (0..n)
            .map(|_| draw_statistic(&s, ChannelKind::Awgn, 10, ScenarioLabel::range(0), &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        let expected = 1.0 + snr_db_to_noise_var(3.0);
        assert!((mean - expected).abs() / expected < 0.01, "{mean} vs {expected}");
    }

    #[test]
    fn threshold_sweep_on_separable_sets() {
        let (tau, bal) = best_threshold(&[0.1, 0.2, 0.3], &[0.9, 1.0]).unwrap();
        assert_eq!(bal, 1.0);
        assert!((tau - 0.6).abs() < 1e-12);
        assert!(best_threshold(&[], &[1.0]).is_err());
    }

    #[test]
    fn empty_echo_is_rejected() {
        assert!(energy_statistic(&ComplexSignal::new(vec![])).is_err());
    }

    /// Independent oracle: the absent statistic is Gamma(n_c, N0/n_c) and
    /// the present one is a scaled noncentral chi-square with 2 n_c degrees
    /// of freedom and a unit-energy-per-symbol mean.
    fn oracle_accuracy(snr_db: f64, n_c: usize, tau: f64, trials: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n0 = snr_db_to_noise_var(snr_db);
        let absent = Gamma::new(n_c as f64, n0 / n_c as f64).unwrap();
        let sigma = (n0 / 2.0).sqrt();
        let offset = (n_c as f64).sqrt();
        let mut correct = 0usize;
        for _ in 0..trials {
            let a = absent.sample(&mut rng);
            correct += (a <= tau) as usize;
            let mut e = 0.0;
            for d in 0..2 * n_c {
                let z: f64 = rng.sample(StandardNormal);
                let m = if d == 0 { offset } else { 0.0 };
                e += (m + sigma * z).powi(2);
            }
            correct += (e / n_c as f64 > tau) as usize;
        }
        correct as f64 / (2 * trials) as f64
    }

    #[test]
    fn accuracy_matches_independent_oracle() {
        let s = spec(3.0);
        let cal = calibrate_threshold(&s, ChannelKind::Awgn, 10, 20_000, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert!(cal.threshold > 0.0);
        let acc = detector_accuracy(&s, ChannelKind::Awgn, &cal, 100_000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let oracle = oracle_accuracy(3.0, 10, cal.threshold, 100_000, 6);
        assert!((acc - oracle).abs() <= 0.01, "{acc} vs {oracle}");
    }

    #[test]
    fn accuracy_rises_with_snr() {
        let mut last = 0.0;
        for snr in [-10.0, -5.0, 0.0, 5.0] {
            let s = spec(snr);
            let cal = calibrate_threshold(&s, ChannelKind::Awgn, 10, 5_000, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
            let acc = detector_accuracy(&s, ChannelKind::Awgn, &cal, 20_000, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
            assert!(acc >= last - 0.01, "{snr} dB: {acc} after {last}");
            last = acc;
        }
    }
}

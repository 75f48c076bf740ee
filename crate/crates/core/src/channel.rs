//! Complex-baseband channel models.
//!
//! A latent vector of `n` reals maps to `n/2` complex symbols: the first half
//! holds in-phase parts, the second half quadrature parts. Signals are kept at
//! unit average energy per complex symbol, so a link SNR of `s` dB means a
//! complex noise variance `N0 = 10^(-s/10)` (`N0/2` per real dimension).
//!
//! Every transform is split into a draw ([`Realization`]) and an application.
//! A realization holds one block-fading gain per codeword plus unit-variance
//! noise; applying it is linear in the input, which is what makes the channel
//! a differentiable layer inside training.

pub use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Scalar;

/// Floor added inside the power normalizer's norm.
pub const POWER_EPS: f64 = 1e-12;

/// Complex baseband symbols with a declared average energy per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    pub symbols: Vec<Complex64>,
    pub power: f64,
}

impl ComplexSignal {
    pub fn new(symbols: Vec<Complex64>) -> Self {
        Self {
            symbols,
            power: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// `(1/n_c) Σ |x_i|²`.
    pub fn mean_energy(&self) -> f64 {
        if self.symbols.is_empty() {
            return 0.0;
        }
        self.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.symbols.len() as f64
    }
}

/// Packs a real latent (I parts then Q parts) into complex symbols.
pub fn real_to_complex(latent: &[f64]) -> Result<ComplexSignal> {
    if latent.len() % 2 != 0 {
        return Err(Error::Shape(format!(
            "latent length {} is odd; it must pair into complex symbols",
            latent.len()
        )));
    }
    let half = latent.len() / 2;
    Ok(ComplexSignal::new(
        (0..half)
            .map(|i| Complex64::new(latent[i], latent[half + i]))
            .collect(),
    ))
}

/// Inverse layout of [`real_to_complex`].
pub fn complex_to_real(signal: &ComplexSignal) -> Vec<f64> {
    let mut out: Vec<f64> = signal.symbols.iter().map(|s| s.re).collect();
    out.extend(signal.symbols.iter().map(|s| s.im));
    out
}

fn check_even(n: usize) -> Result<()> {
    if n % 2 != 0 {
        return Err(Error::Shape(format!("latent length {n} is odd")));
    }
    Ok(())
}

/// Scales `latent` so its complex symbols have unit average energy.
///
/// An all-zero input stays (numerically) zero because of [`POWER_EPS`].
pub fn normalize_power<T: Scalar>(latent: &[T]) -> Result<Vec<T>> {
    check_even(latent.len())?;
    let mut out = latent.to_vec();
    normalize_power_in_place(&mut out);
    Ok(out)
}

/// In-place [`normalize_power`]; returns the applied scale. `latent` must
/// have even length.
pub fn normalize_power_in_place<T: Scalar>(latent: &mut [T]) -> T {
    let n_c = T::of((latent.len() / 2) as f64);
    let energy: T = latent.iter().map(|&v| v * v).sum();
    let scale = (n_c / (energy + T::of(POWER_EPS))).sqrt();
    latent.iter_mut().for_each(|v| *v *= scale);
    scale
}

/// Gradient of [`normalize_power`] with respect to its input, given the
/// input `latent` and the upstream gradient `grad_out`.
pub fn normalize_power_backward<T: Scalar>(latent: &[T], grad_out: &[T]) -> Vec<T> {
    let n_c = T::of((latent.len() / 2) as f64);
    let energy: T = latent.iter().map(|&v| v * v).sum::<T>() + T::of(POWER_EPS);
    let scale = (n_c / energy).sqrt();
    let dot: T = latent.iter().zip(grad_out).map(|(&x, &g)| x * g).sum();
    let coef = scale * dot / energy;
    latent
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| scale * g - coef * x)
        .collect()
}

/// Complex noise variance for a given SNR at unit signal energy per symbol.
pub fn snr_db_to_noise_var(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    #[default]
    Awgn,
    Rayleigh,
}

impl std::fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
        })
    }
}

impl std::str::FromStr for ChannelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "awgn" => Ok(ChannelKind::Awgn),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            other => Err(Error::Config(format!("unknown channel kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelRole {
    Communication,
    Sensing,
}

/// Channel law used by one link for a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub snr_db: f64,
    pub role: ChannelRole,
}

impl ChannelSpec {
    pub fn communication(kind: ChannelKind, snr_db: f64) -> Self {
        Self {
            kind,
            snr_db,
            role: ChannelRole::Communication,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config(format!("invalid SNR {}", self.snr_db)));
        }
        Ok(())
    }

    /// Draws one codeword's channel on the communication link.
    pub fn draw<R: Rng + ?Sized>(&self, n_c: usize, rng: &mut R) -> Realization {
        match self.kind {
            ChannelKind::Awgn => Realization::awgn(n_c, self.snr_db, rng),
            ChannelKind::Rayleigh => Realization::rayleigh(n_c, self.snr_db, rng),
        }
    }
}

/// Ground truth of one sensing scenario: target absent, or present in a
/// range bin. Class index 0 is "absent", index `r + 1` is range bin `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioLabel(pub usize);

impl ScenarioLabel {
    pub const ABSENT: ScenarioLabel = ScenarioLabel(0);

    pub fn range(r: usize) -> Self {
        ScenarioLabel(r + 1)
    }

    pub fn class_index(self) -> usize {
        self.0
    }

    /// Range bin, or `None` when the target is absent.
    pub fn range_bin(self) -> Option<usize> {
        self.0.checked_sub(1)
    }

    pub fn is_present(self) -> bool {
        self.0 > 0
    }
}

/// Sensing environment: how many range bins exist and how strong echoes are.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingScenarioSpec {
    pub num_ranges: usize,
    /// Echo SNR of the nearest range bin.
    pub base_sense_snr_db: f64,
    /// Extra attenuation per farther range bin.
    pub range_step_db: f64,
    /// Probability that no target is present.
    pub absent_prior: f64,
}

impl Default for SensingScenarioSpec {
    fn default() -> Self {
        Self {
            num_ranges: 1,
            base_sense_snr_db: 3.0,
            range_step_db: 3.0,
            absent_prior: 0.5,
        }
    }
}

impl SensingScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_ranges == 0 {
            return Err(Error::Config("num_ranges must be at least 1".into()));
        }
        if !(self.absent_prior > 0.0 && self.absent_prior < 1.0) {
            return Err(Error::Config(format!(
                "absent_prior {} must lie in (0, 1)",
                self.absent_prior
            )));
        }
        if !self.base_sense_snr_db.is_finite() || !self.range_step_db.is_finite() {
            return Err(Error::Config("sensing SNR values must be finite".into()));
        }
        Ok(())
    }

    /// Number of sensing classes (absent plus each range bin).
    pub fn num_classes(&self) -> usize {
        self.num_ranges + 1
    }

    /// Echo SNR for range bin `r`.
    pub fn range_snr_db(&self, r: usize) -> f64 {
        self.base_sense_snr_db - r as f64 * self.range_step_db
    }

    /// Amplitude factor of range bin `r` relative to the nearest bin.
    pub fn range_amplitude(&self, r: usize) -> f64 {
        10f64.powf(-(r as f64) * self.range_step_db / 20.0)
    }

    pub fn check_label(&self, label: ScenarioLabel) -> Result<()> {
        if label.0 > self.num_ranges {
            return Err(Error::Domain(format!(
                "range index {} outside 0..{}",
                label.0 - 1,
                self.num_ranges
            )));
        }
        Ok(())
    }

    /// Draws one echo channel for a codeword of `n_c` symbols.
    ///
    /// Absent targets yield pure noise. A target in bin `r` returns
    /// `a_r g x + w`, where `g = 1` on AWGN and `g = h1 h2` (two independent
    /// unit-power complex Gaussians for the two legs) on Rayleigh.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        n_c: usize,
        label: ScenarioLabel,
        kind: ChannelKind,
        rng: &mut R,
    ) -> Result<Realization> {
        self.check_label(label)?;
        let mut real = Realization::awgn(n_c, self.base_sense_snr_db, rng);
        real.gain = match label.range_bin() {
            None => Complex64::new(0.0, 0.0),
            Some(r) => {
                let g = match kind {
                    ChannelKind::Awgn => Complex64::new(1.0, 0.0),
                    ChannelKind::Rayleigh => complex_gaussian(rng) * complex_gaussian(rng),
                };
                g * self.range_amplitude(r)
            }
        };
        Ok(real)
    }
}

/// One circularly-symmetric complex Gaussian draw with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// A frozen channel draw for one codeword: `y_i = gain * x_i + noise_std * noise_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub gain: Complex64,
    /// Unit-variance complex Gaussian samples, one per symbol.
    pub noise: Vec<Complex64>,
    /// `sqrt(N0)`.
    pub noise_std: f64,
}

impl Realization {
    /// AWGN draw. An SNR of `+inf` gives a noiseless channel.
    pub fn awgn<R: Rng + ?Sized>(n_c: usize, snr_db: f64, rng: &mut R) -> Self {
        let noise = (0..n_c).map(|_| complex_gaussian(rng)).collect();
        Self {
            gain: Complex64::new(1.0, 0.0),
            noise,
            noise_std: snr_db_to_noise_var(snr_db).sqrt(),
        }
    }

    /// Block Rayleigh draw: noise first, then one unit-power gain.
    pub fn rayleigh<R: Rng + ?Sized>(n_c: usize, snr_db: f64, rng: &mut R) -> Self {
        let mut r = Self::awgn(n_c, snr_db, rng);
        r.gain = complex_gaussian(rng);
        r
    }

    /// Replaces the gain (used to pin fading in tests).
    pub fn with_gain(mut self, gain: Complex64) -> Self {
        self.gain = gain;
        self
    }

    pub fn apply(&self, signal: &ComplexSignal) -> ComplexSignal {
        assert_eq!(signal.len(), self.noise.len(), "realization length");
        ComplexSignal {
            symbols: signal
                .symbols
                .iter()
                .zip(&self.noise)
                .map(|(&x, &w)| self.gain * x + w * self.noise_std)
                .collect(),
            power: signal.power,
        }
    }

    /// Applies the channel to a real latent laid out as I parts then Q parts.
    pub fn apply_real<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        let n_c = self.noise.len();
        assert_eq!(x.len(), 2 * n_c);
        let (gr, gi) = (T::of(self.gain.re), T::of(self.gain.im));
        let s = T::of(self.noise_std);
        for i in 0..n_c {
            let (xr, xi) = (x[i], x[n_c + i]);
            out[i] = gr * xr - gi * xi + s * T::of(self.noise[i].re);
            out[n_c + i] = gr * xi + gi * xr + s * T::of(self.noise[i].im);
        }
    }

    /// Adds the gradient of [`Realization::apply_real`] w.r.t. its input to `grad_in`.
    pub fn backward_real<T: Scalar>(&self, grad_out: &[T], grad_in: &mut [T]) {
        let n_c = self.noise.len();
        let (gr, gi) = (T::of(self.gain.re), T::of(self.gain.im));
        for i in 0..n_c {
            let (dr, di) = (grad_out[i], grad_out[n_c + i]);
            grad_in[i] += gr * dr + gi * di;
            grad_in[n_c + i] += gr * di - gi * dr;
        }
    }
}

/// Adds white Gaussian noise at `snr_db`.
pub fn apply_awgn<R: Rng + ?Sized>(signal: &ComplexSignal, snr_db: f64, rng: &mut R) -> ComplexSignal {
    Realization::awgn(signal.len(), snr_db, rng).apply(signal)
}

/// Block Rayleigh fading plus noise; no channel state is attached to the output.
pub fn apply_rayleigh<R: Rng + ?Sized>(
    signal: &ComplexSignal,
    snr_db: f64,
    rng: &mut R,
) -> ComplexSignal {
    Realization::rayleigh(signal.len(), snr_db, rng).apply(signal)
}

/// Round-trip echo channel of a sensing scenario.
pub fn apply_sensing_channel<R: Rng + ?Sized>(
    signal: &ComplexSignal,
    scenario: &SensingScenarioSpec,
    true_class: ScenarioLabel,
    kind: ChannelKind,
    rng: &mut R,
) -> Result<ComplexSignal> {
    Ok(scenario.draw(signal.len(), true_class, kind, rng)?.apply(signal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use proptest::prelude::*;

    fn unit_signal(n: usize, seed: u64) -> ComplexSignal {
        let mut rng = stream_rng(seed, &[1]);
        let mut v: Vec<f64> = (0..2 * n).map(|_| rng.sample(StandardNormal)).collect();
        normalize_power_in_place(&mut v);
        real_to_complex(&v).unwrap()
    }

    #[test]
    fn layout() {
        let mut latent = vec![0.0; 20];
        latent[0] = 1.0;
        let s = real_to_complex(&latent).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.symbols[0], Complex64::new(1.0, 0.0));
        assert!(s.symbols[1..].iter().all(|z| z.norm() == 0.0));
        assert!(real_to_complex(&[1.0, 2.0, 3.0]).is_err());
        let one = ComplexSignal::new(vec![Complex64::new(1.0, 2.0)]);
        assert_eq!(complex_to_real(&one), vec![1.0, 2.0]);
        assert_eq!(complex_to_real(&ComplexSignal::new(vec![Complex64::default(); 3])), vec![0.0; 6]);
    }

    #[test]
    fn normalization() {
        let unit = normalize_power(&[2.0f64, 0.0]).unwrap();
        assert!((unit[0] - 1.0).abs() < 1e-9 && unit[1] == 0.0);
        assert!(normalize_power(&[1.0f64, 0.0, 3.0]).is_err());
        let zero = normalize_power(&[0.0f64; 4]).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn noise_variance() {
        assert_eq!(snr_db_to_noise_var(0.0), 1.0);
        assert!((snr_db_to_noise_var(3.0) - 0.501187).abs() < 1e-6);
        assert!((snr_db_to_noise_var(-10.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_limit() {
        let x = unit_signal(16, 3);
        let y = apply_awgn(&x, f64::INFINITY, &mut stream_rng(0, &[0]));
        assert_eq!(x, y);
    }

    #[test]
    fn awgn_noise_energy_at_0db() {
        let x = ComplexSignal::new(vec![Complex64::default(); 1_000_000]);
        let y = apply_awgn(&x, 0.0, &mut stream_rng(5, &[0]));
        let e = y.mean_energy();
        assert!((e - 1.0).abs() < 0.02, "{e}");
    }

    #[test]
    fn awgn_empirical_snr() {
        let x = unit_signal(100_000, 9);
        for snr in [-5.0, 3.0, 10.0] {
            let y = apply_awgn(&x, snr, &mut stream_rng(2, &[snr.to_bits()]));
            let noise: f64 = y
                .symbols
                .iter()
                .zip(&x.symbols)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                / x.len() as f64;
            let measured = 10.0 * (x.mean_energy() / noise).log10();
            assert!((measured - snr).abs() < 0.1, "{snr} vs {measured}");
        }
    }

    #[test]
    fn batch_entries_get_distinct_noise() {
        let mut rng = stream_rng(1, &[0]);
        let a = Realization::awgn(4, 0.0, &mut rng);
        let b = Realization::awgn(4, 0.0, &mut rng);
        assert_ne!(a.noise, b.noise);
    }

    #[test]
    fn rayleigh_gain_power() {
        let mut rng = stream_rng(8, &[0]);
        let n = 1_000_000;
        let p: f64 = (0..n).map(|_| complex_gaussian(&mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 1.0).abs() < 0.02, "{p}");
    }

    #[test]
    fn rayleigh_forced_unit_gain_is_awgn() {
        let x = unit_signal(12, 4);
        let awgn = apply_awgn(&x, 3.0, &mut stream_rng(6, &[0]));
        let fading = Realization::rayleigh(12, 3.0, &mut stream_rng(6, &[0]))
            .with_gain(Complex64::new(1.0, 0.0))
            .apply(&x);
        assert_eq!(awgn, fading);
    }

    #[test]
    fn sensing_absent_is_noise_only() {
        let spec = SensingScenarioSpec::default();
        let x = unit_signal(10, 5);
        let n0 = snr_db_to_noise_var(spec.base_sense_snr_db);
        let mut rng = stream_rng(3, &[0]);
        let trials = 10_000;
        let mut total = 0.0;
        for _ in 0..trials {
            for kind in [ChannelKind::Awgn, ChannelKind::Rayleigh] {
                let y = apply_sensing_channel(&x, &spec, ScenarioLabel::ABSENT, kind, &mut rng).unwrap();
                total += y.mean_energy() * y.len() as f64;
            }
        }
        let mean = total / (2 * trials) as f64;
        let expected = 10.0 * n0;
        assert!((mean / expected - 1.0).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn per_range_snr() {
        let spec = SensingScenarioSpec {
            num_ranges: 3,
            ..Default::default()
        };
        let snrs: Vec<f64> = (0..3).map(|r| spec.range_snr_db(r)).collect();
        assert_eq!(snrs, vec![3.0, 0.0, -3.0]);
        // the amplitude factor realizes the same SNRs
        for r in 0..3 {
            let eff = spec.base_sense_snr_db + 20.0 * spec.range_amplitude(r).log10();
            assert!((eff - snrs[r]).abs() < 1e-12);
        }
        let one = SensingScenarioSpec::default();
        assert_eq!(one.range_snr_db(0), one.base_sense_snr_db);
        assert_eq!(one.range_amplitude(0), 1.0);
    }

    #[test]
    fn sensing_present_awgn_is_signal_plus_noise() {
        let spec = SensingScenarioSpec::default();
        let x = unit_signal(10, 5);
        let mut rng = stream_rng(1, &[0]);
        let r = spec.draw(10, ScenarioLabel::range(0), ChannelKind::Awgn, &mut rng).unwrap();
        assert_eq!(r.gain, Complex64::new(1.0, 0.0));
        let y = r.apply(&x);
        assert_eq!(y.len(), 10);
    }

    #[test]
    fn sensing_range_out_of_domain() {
        let spec = SensingScenarioSpec::default();
        let x = unit_signal(4, 1);
        let err = apply_sensing_channel(
            &x,
            &spec,
            ScenarioLabel::range(1),
            ChannelKind::Awgn,
            &mut stream_rng(0, &[0]),
        );
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn real_path_matches_complex_path() {
        let x = unit_signal(8, 2);
        let real = Realization::rayleigh(8, 1.0, &mut stream_rng(4, &[0]));
        let y = complex_to_real(&real.apply(&x));
        let mut out = vec![0.0; 16];
        real.apply_real(&complex_to_real(&x), &mut out);
        for (a, b) in y.iter().zip(&out) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_gradient_matches_finite_differences() {
        // loss = Σ c_i y_i² with noise frozen through the realization
        let n_c = 6;
        let real = Realization::rayleigh(n_c, 2.0, &mut stream_rng(7, &[0]));
        let mut rng = stream_rng(7, &[1]);
        let x: Vec<f64> = (0..2 * n_c).map(|_| rng.sample(StandardNormal)).collect();
        let c: Vec<f64> = (0..2 * n_c).map(|_| rng.gen_range(0.5..1.5)).collect();
        let loss = |x: &[f64]| {
            let mut y = vec![0.0; 2 * n_c];
            let xn = normalize_power(x).unwrap();
            real.apply_real(&xn, &mut y);
            y.iter().zip(&c).map(|(v, w)| w * v * v).sum::<f64>()
        };
        let xn = normalize_power(&x).unwrap();
        let mut y = vec![0.0; 2 * n_c];
        real.apply_real(&xn, &mut y);
        let dy: Vec<f64> = y.iter().zip(&c).map(|(v, w)| 2.0 * w * v).collect();
        let mut dxn = vec![0.0; 2 * n_c];
        real.backward_real(&dy, &mut dxn);
        let dx = normalize_power_backward(&x, &dxn);
        let h = 1e-6;
        for i in 0..2 * n_c {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            let rel = (fd - dx[i]).abs() / fd.abs().max(dx[i].abs()).max(1e-8);
            assert!(rel < 1e-4, "{i}: fd {fd} analytic {}", dx[i]);
        }
    }

    /// Kolmogorov–Smirnov statistic of |h| against Rayleigh(σ = 1/√2).
    #[test]
    fn rayleigh_magnitude_ks() {
        let mut rng = stream_rng(11, &[0]);
        let mut mags: Vec<f64> = (0..100_000).map(|_| complex_gaussian(&mut rng).norm()).collect();
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = mags.len() as f64;
        let d = mags
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let cdf = 1.0 - (-r * r).exp();
                (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.01, "KS {d}");
    }

    proptest! {
        #[test]
        fn normalized_power_is_unit(v in proptest::collection::vec(-10.0f64..10.0, 1..32)
            .prop_filter("even and non-zero", |v| v.len() % 2 == 0 && v.iter().any(|x| x.abs() > 1e-3))) {
            let out = normalize_power(&v).unwrap();
            let s = real_to_complex(&out).unwrap();
            prop_assert!((s.mean_energy() - 1.0).abs() < 1e-6);
            let again = normalize_power(&out).unwrap();
            for (a, b) in out.iter().zip(&again) { prop_assert!((a - b).abs() < 1e-9); }
            let scaled: Vec<f64> = v.iter().map(|x| x * 5.0).collect();
            for (a, b) in out.iter().zip(&normalize_power(&scaled).unwrap()) { prop_assert!((a - b).abs() < 1e-9); }
        }

        #[test]
        fn complex_layout_round_trip(v in proptest::collection::vec(-1e3f64..1e3, 0..20).prop_filter("even", |v| v.len() % 2 == 0)) {
            prop_assert_eq!(complex_to_real(&real_to_complex(&v).unwrap()), v);
        }
    }
}

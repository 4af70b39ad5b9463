//! Sampled time-series preprocessing: zero-phase Butterworth low-pass,
//! central differencing and edge trimming.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("sample rate must be positive, got {0}")]
    BadSampleRate(f64),
    #[error("channel {name:?} has {len} samples, expected {expected}")]
    RaggedChannels { name: String, len: usize, expected: usize },
    #[error("cutoff {cutoff_hz} Hz must lie strictly between 0 and Nyquist ({nyquist_hz} Hz)")]
    BadCutoff { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("filter order must be at least 1")]
    BadOrder,
    #[error("series has {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("trimming {trim} samples from each end of a {len}-sample series leaves nothing")]
    TrimTooLong { trim: usize, len: usize },
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
}

/// Equal-length named channels sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    sample_rate: f64,
    start_time: f64,
    names: Vec<String>,
    channels: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new<S: Into<String>>(
        sample_rate: f64,
        start_time: f64,
        channels: Vec<(S, Vec<f64>)>,
    ) -> Result<Self, SignalError> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(SignalError::BadSampleRate(sample_rate));
        }
        let (names, channels): (Vec<String>, Vec<Vec<f64>>) =
            channels.into_iter().map(|(n, c)| (n.into(), c)).unzip();
        if let Some(expected) = channels.first().map(Vec::len) {
            for (name, c) in names.iter().zip(&channels) {
                if c.len() != expected {
                    return Err(SignalError::RaggedChannels { name: name.clone(), len: c.len(), expected });
                }
            }
        }
        Ok(TimeSeries { sample_rate, start_time, names, channels })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, name: &str) -> Result<&[f64], SignalError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.channels[i].as_slice())
            .ok_or_else(|| SignalError::UnknownChannel(name.to_string()))
    }

    pub fn channels(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names.iter().map(String::as_str).zip(self.channels.iter().map(Vec::as_slice))
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start_time + k as f64 / self.sample_rate
    }

    pub fn into_channels(self) -> Vec<(String, Vec<f64>)> {
        self.names.into_iter().zip(self.channels).collect()
    }

    fn map_channels(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> TimeSeries {
        TimeSeries {
            sample_rate: self.sample_rate,
            start_time: self.start_time,
            names: self.names.clone(),
            channels: self.channels.iter().map(|c| f(c)).collect(),
        }
    }
}

/// One second-order section in transposed direct form II, normalized so
/// that `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Section {
    b: [f64; 3],
    a: [f64; 3],
}

impl Section {
    /// Filter state that makes a constant input `u` a fixed point.
    fn steady_state(&self, u: f64) -> [f64; 2] {
        let gain = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[1] + self.a[2]);
        let y = gain * u;
        [y - self.b[0] * u, self.b[2] * u - self.a[2] * y]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        for s in x.iter_mut() {
            let u = *s;
            let y = self.b[0] * u + z[0];
            z[0] = self.b[1] * u - self.a[1] * y + z[1];
            z[1] = self.b[2] * u - self.a[2] * y;
            *s = y;
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Complex {
    re: f64,
    im: f64,
}

impl Complex {
    fn div(self, o: Complex) -> Complex {
        let d = o.re * o.re + o.im * o.im;
        Complex {
            re: (self.re * o.re + self.im * o.im) / d,
            im: (self.im * o.re - self.re * o.im) / d,
        }
    }
}

/// Digital Butterworth low-pass designed by the bilinear transform with
/// frequency prewarping, stored as cascaded second-order sections with unit
/// DC gain each.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    sections: Vec<Section>,
    order: usize,
}

impl Butterworth {
    pub fn lowpass(order: usize, cutoff_hz: f64, sample_rate: f64) -> Result<Self, SignalError> {
        if !(sample_rate > 0.0) {
            return Err(SignalError::BadSampleRate(sample_rate));
        }
        let nyquist_hz = sample_rate / 2.0;
        if !(cutoff_hz > 0.0 && cutoff_hz < nyquist_hz) {
            return Err(SignalError::BadCutoff { cutoff_hz, nyquist_hz });
        }
        if order == 0 {
            return Err(SignalError::BadOrder);
        }
        let fs2 = 2.0 * sample_rate;
        let warped = fs2 * (std::f64::consts::PI * cutoff_hz / sample_rate).tan();
        let n = order as f64;
        let bilinear = |s: Complex| {
            Complex { re: fs2 + s.re, im: s.im }.div(Complex { re: fs2 - s.re, im: -s.im })
        };

        let mut sections = Vec::with_capacity(order.div_ceil(2));
        // Upper-half-plane prototype poles; each one pairs with its conjugate.
        for k in 0..order / 2 {
            let theta = std::f64::consts::PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
            let s = Complex { re: warped * theta.cos(), im: warped * theta.sin() };
            let z = bilinear(s);
            let a = [1.0, -2.0 * z.re, z.re * z.re + z.im * z.im];
            let gain = (1.0 + a[1] + a[2]) / 4.0;
            sections.push(Section { b: [gain, 2.0 * gain, gain], a });
        }
        if order % 2 == 1 {
            let z = bilinear(Complex { re: -warped, im: 0.0 });
            let a = [1.0, -z.re, 0.0];
            let gain = (1.0 + a[1]) / 2.0;
            sections.push(Section { b: [gain, gain, 0.0], a });
        }
        Ok(Butterworth { sections, order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Causal single pass, started from the steady state of `x[0]`.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        if let Some(&x0) = x.first() {
            for s in &self.sections {
                s.run(&mut y, s.steady_state(x0));
            }
        }
        y
    }

    /// Zero-phase forward-backward application with odd-extension padding.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|k| 2.0 * x[0] - x[k]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|k| 2.0 * x[n - 1] - x[n - 1 - k]));

        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }

    /// Magnitude response `|H(e^{jω})|` of one pass at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate;
        let eval = |c: &[f64; 3]| {
            let re = c[0] + c[1] * w.cos() + c[2] * (2.0 * w).cos();
            let im = -c[1] * w.sin() - c[2] * (2.0 * w).sin();
            (re * re + im * im).sqrt()
        };
        self.sections.iter().map(|s| eval(&s.b) / eval(&s.a)).product()
    }
}

/// Zero-phase Butterworth low-pass of every channel; length is preserved.
pub fn butterworth_lowpass(x: &TimeSeries, cutoff_hz: f64, order: usize) -> Result<TimeSeries, SignalError> {
    let filter = Butterworth::lowpass(order, cutoff_hz, x.sample_rate)?;
    Ok(x.map_channels(|c| filter.filtfilt(c)))
}

/// Central difference of a sampled signal. Interior samples use
/// `(x[k+1] − x[k−1])·fs/2`; endpoints use one-sided first differences.
pub fn central_difference_slice(x: &[f64], sample_rate: f64) -> Result<Vec<f64>, SignalError> {
    let n = x.len();
    if n < 3 {
        return Err(SignalError::TooShort { len: n, needed: 3 });
    }
    let mut y = Vec::with_capacity(n);
    y.push((x[1] - x[0]) * sample_rate);
    y.extend(x.windows(3).map(|w| (w[2] - w[0]) * sample_rate / 2.0));
    y.push((x[n - 1] - x[n - 2]) * sample_rate);
    Ok(y)
}

pub fn central_difference(x: &TimeSeries) -> Result<TimeSeries, SignalError> {
    if x.len() < 3 {
        return Err(SignalError::TooShort { len: x.len(), needed: 3 });
    }
    let fs = x.sample_rate;
    Ok(x.map_channels(|c| central_difference_slice(c, fs).expect("length checked")))
}

/// Number of samples `floor(seconds·fs)` removed from each end by
/// [`trim_edges`].
pub fn trim_count(seconds: f64, sample_rate: f64) -> usize {
    // The small offset keeps products like 4.9·100 from rounding down.
    (seconds * sample_rate + 1e-9).floor().max(0.0) as usize
}

pub fn trim_edges(x: &TimeSeries, seconds: f64) -> Result<TimeSeries, SignalError> {
    let k = trim_count(seconds, x.sample_rate);
    let len = x.len();
    if 2 * k >= len && k > 0 {
        return Err(SignalError::TrimTooLong { trim: k, len });
    }
    let mut out = x.map_channels(|c| c[k..len - k].to_vec());
    out.start_time = x.start_time + k as f64 / x.sample_rate;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn series(fs: f64, x: Vec<f64>) -> TimeSeries {
        TimeSeries::new(fs, 0.0, vec![("x", x)]).unwrap()
    }

    fn sinusoid(freq: f64, fs: f64, seconds: f64) -> Vec<f64> {
        let n = (seconds * fs) as usize;
        (0..n).map(|k| (2.0 * PI * freq * k as f64 / fs).sin()).collect()
    }

    // Peak amplitude over the middle third, away from edge transients.
    fn steady_amplitude(y: &[f64]) -> f64 {
        let n = y.len();
        y[n / 3..2 * n / 3].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn rejects_bad_configuration() {
        assert!(matches!(Butterworth::lowpass(3, 50.0, 100.0), Err(SignalError::BadCutoff { .. })));
        assert!(matches!(Butterworth::lowpass(3, 0.0, 100.0), Err(SignalError::BadCutoff { .. })));
        assert!(matches!(Butterworth::lowpass(0, 5.0, 100.0), Err(SignalError::BadOrder)));
        assert!(matches!(
            TimeSeries::new(0.0, 0.0, vec![("x", vec![1.0])]),
            Err(SignalError::BadSampleRate(_))
        ));
        assert!(matches!(
            TimeSeries::new(1.0, 0.0, vec![("x", vec![1.0]), ("y", vec![])]),
            Err(SignalError::RaggedChannels { .. })
        ));
    }

    #[test]
    fn design_has_half_power_at_cutoff() {
        for order in 1..=5 {
            let f = Butterworth::lowpass(order, 5.0, 100.0).unwrap();
            assert!((f.magnitude(0.0, 100.0) - 1.0).abs() < 1e-12);
            assert!((f.magnitude(5.0, 100.0) - 0.5f64.sqrt()).abs() < 1e-12, "order {order}");
        }
    }

    #[test]
    fn constant_passes_unchanged() {
        let x = series(100.0, vec![3.25; 500]);
        let y = butterworth_lowpass(&x, 5.0, 3).unwrap();
        for v in y.channel("x").unwrap() {
            assert!((v - 3.25).abs() < 1e-9);
        }
    }

    #[test]
    fn cutoff_sinusoid_is_halved_by_zero_phase_filtering() {
        let fs = 100.0;
        let x = series(fs, sinusoid(5.0, fs, 30.0));
        let y = butterworth_lowpass(&x, 5.0, 3).unwrap();
        let amp = steady_amplitude(y.channel("x").unwrap());
        assert!((amp - 0.5).abs() < 0.025, "amplitude {amp}");
    }

    #[test]
    fn stopband_sinusoid_is_suppressed() {
        let fs = 100.0;
        let x = series(fs, sinusoid(20.0, fs, 30.0));
        let y = butterworth_lowpass(&x, 2.0, 3).unwrap();
        let amp = steady_amplitude(y.channel("x").unwrap());
        assert!(amp < 0.01, "amplitude {amp}");
    }

    #[test]
    fn zero_phase_keeps_peaks_aligned() {
        let fs = 100.0;
        let x = sinusoid(0.5, fs, 20.0);
        let y = Butterworth::lowpass(3, 5.0, fs).unwrap().filtfilt(&x);
        for k in 300..1700 {
            assert!((x[k] - y[k]).abs() < 1e-4);
        }
    }

    #[test]
    fn central_difference_is_exact_on_ramps() {
        let fs = 100.0;
        let x: Vec<f64> = (0..50).map(|k| 1.0 + 2.0 * k as f64 / fs).collect();
        let d = central_difference(&series(fs, x)).unwrap();
        for v in &d.channel("x").unwrap()[1..49] {
            assert!((v - 2.0).abs() < 1e-12);
        }
        let z = central_difference(&series(fs, vec![4.0; 10])).unwrap();
        assert!(z.channel("x").unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn central_difference_of_sinusoid_matches_analytic_response() {
        let fs = 100.0;
        let dt = 1.0 / fs;
        let x = sinusoid(1.0, fs, 3.0);
        let d = central_difference_slice(&x, fs).unwrap();
        let w = 2.0 * PI;
        let sinc = (w * dt).sin() / (w * dt);
        for k in 1..x.len() - 1 {
            let expected = w * (w * k as f64 * dt).cos() * sinc;
            assert!((d[k] - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn central_difference_needs_three_samples() {
        assert_eq!(
            central_difference(&series(10.0, vec![1.0, 2.0])),
            Err(SignalError::TooShort { len: 2, needed: 3 })
        );
    }

    #[test]
    fn central_difference_is_linear() {
        let fs = 100.0;
        let a: Vec<f64> = (0..40).map(|k| ((k * k) as f64).sin()).collect();
        let b: Vec<f64> = (0..40).map(|k| (k as f64).sqrt()).collect();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
        let da = central_difference_slice(&a, fs).unwrap();
        let db = central_difference_slice(&b, fs).unwrap();
        let dm = central_difference_slice(&mix, fs).unwrap();
        for k in 0..40 {
            assert!((dm[k] - (2.0 * da[k] - 0.5 * db[k])).abs() < 1e-9);
        }
    }

    #[test]
    fn trim_floor_rule() {
        let fs = 100.0;
        let x = series(fs, vec![0.0; 1000]);
        let t = trim_edges(&x, 2.0).unwrap();
        assert_eq!(t.len(), 600);
        assert!((t.start_time() - 2.0).abs() < 1e-12);
        assert_eq!(trim_edges(&x, 0.0).unwrap(), x);
        assert_eq!(trim_edges(&x, 4.9).unwrap().len(), 20);
        assert!(matches!(trim_edges(&x, 5.0), Err(SignalError::TrimTooLong { .. })));
    }

    #[test]
    fn filtering_commutes_with_trimming_in_the_interior() {
        let fs = 100.0;
        let x: Vec<f64> = (0..3000)
            .map(|k| {
                let t = k as f64 / fs;
                (0.7 * t).sin() + 0.3 * (3.1 * t).cos() + 0.05 * (17.0 * t).sin()
            })
            .collect();
        let full = butterworth_lowpass(&series(fs, x.clone()), 5.0, 3).unwrap();
        let trimmed_first = trim_edges(&series(fs, x), 2.0).unwrap();
        let part = butterworth_lowpass(&trimmed_first, 5.0, 3).unwrap();
        let full_trimmed = trim_edges(&full, 2.0).unwrap();
        // Compare away from the edges of the shorter series.
        let a = &part.channel("x").unwrap()[200..2400];
        let b = &full_trimmed.channel("x").unwrap()[200..2400];
        for (u, v) in a.iter().zip(b) {
            assert!((u - v).abs() < 1e-6);
        }
    }
}

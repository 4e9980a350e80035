//! Force/torque sensor: zero-order-hold sampling, optional Gaussian noise and
//! a discrete second-order Butterworth low-pass per channel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::Wrench;
use crate::mathcore::Vec6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementModel {
    pub rate_hz: f64,
    pub cutoff_rad_s: f64,
    /// Standard deviation of additive noise on every channel (N or N·m).
    pub noise_std: f64,
}

impl Default for MeasurementModel {
    fn default() -> Self {
        Self { rate_hz: 800.0, cutoff_rad_s: 3.0, noise_std: 0.05 }
    }
}

impl MeasurementModel {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.rate_hz > 0.0) || !self.rate_hz.is_finite() {
            return Err("sensor rate must be positive");
        }
        // The bilinear map needs the cutoff below Nyquist.
        if !(self.cutoff_rad_s > 0.0) || self.cutoff_rad_s >= std::f64::consts::PI * self.rate_hz {
            return Err("sensor cutoff must be positive and below Nyquist");
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err("sensor noise must be non-negative");
        }
        Ok(())
    }
}

/// Second-order Butterworth low-pass, bilinear transform with prewarping at
/// the cutoff. Direct form I, one instance filters all six channels. The
/// first sample primes the delay line at steady state.
#[derive(Debug, Clone)]
pub struct Butterworth2 {
    b: [f64; 3],
    a: [f64; 2],
    x: [[f64; 6]; 2],
    y: [[f64; 6]; 2],
    primed: bool,
}

impl Butterworth2 {
    pub fn new(cutoff_rad_s: f64, sample_rate_hz: f64) -> Self {
        let wc = cutoff_rad_s;
        let c = wc / (wc / (2.0 * sample_rate_hz)).tan();
        let s2 = std::f64::consts::SQRT_2;
        let a0 = c * c + s2 * wc * c + wc * wc;
        let b0 = wc * wc / a0;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (wc * wc - c * c) / a0, (c * c - s2 * wc * c + wc * wc) / a0],
            x: [[0.0; 6]; 2],
            y: [[0.0; 6]; 2],
            primed: false,
        }
    }

    pub fn reset(&mut self) {
        self.x = [[0.0; 6]; 2];
        self.y = [[0.0; 6]; 2];
        self.primed = false;
    }

    pub fn process(&mut self, input: &[f64; 6]) -> [f64; 6] {
        if !self.primed {
            self.x = [*input; 2];
            self.y = [*input; 2];
            self.primed = true;
        }
        let mut out = [0.0; 6];
        for i in 0..6 {
            out[i] = self.b[0] * input[i] + self.b[1] * self.x[0][i] + self.b[2] * self.x[1][i]
                - self.a[0] * self.y[0][i]
                - self.a[1] * self.y[1][i];
        }
        self.x[1] = self.x[0];
        self.x[0] = *input;
        self.y[1] = self.y[0];
        self.y[0] = out;
        out
    }
}

#[derive(Debug, Clone)]
pub struct FtSensor {
    model: MeasurementModel,
    filter: Butterworth2,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    next_sample: u64,
    output: [f64; 6],
}

impl FtSensor {
    pub fn new(model: MeasurementModel, seed: u64) -> Result<Self, &'static str> {
        model.validate()?;
        let noise = if model.noise_std > 0.0 { Normal::new(0.0, model.noise_std).ok() } else { None };
        Ok(Self {
            filter: Butterworth2::new(model.cutoff_rad_s, model.rate_hz),
            model,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_sample: 0,
            output: [0.0; 6],
        })
    }

    pub fn model(&self) -> &MeasurementModel {
        &self.model
    }

    /// Time of the next sampling instant.
    pub fn next_sample_time(&self) -> f64 {
        self.next_sample as f64 / self.model.rate_hz
    }

    /// Takes every sample due at or before `t` using `true_wrench` and
    /// returns the held filter output.
    pub fn measure(&mut self, true_wrench: &Wrench<f64>, t: f64) -> Wrench<f64> {
        let tol = 1e-9 / self.model.rate_hz;
        while self.next_sample_time() <= t + tol {
            let mut x = true_wrench.to_vec6().0;
            if let Some(n) = &self.noise {
                for v in x.iter_mut() {
                    *v += n.sample(&mut self.rng);
                }
            }
            self.output = self.filter.process(&x);
            self.next_sample += 1;
        }
        self.output()
    }

    pub fn output(&self) -> Wrench<f64> {
        Wrench::body(Vec6(self.output))
    }
}

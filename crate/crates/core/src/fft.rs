//! Discrete Fourier transforms: iterative radix-2 for power-of-two lengths,
//! Bluestein's chirp-z algorithm for every other length, and a packed real
//! transform used by the STFT.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

use crate::math;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    /// `exp(i * theta)`
    pub fn cis(theta: f64) -> Self {
        Self { re: math::cos(theta), im: math::sin(theta) }
    }

    pub fn conj(self) -> Self {
        Self { re: self.re, im: -self.im }
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn scale(self, s: f64) -> Self {
        Self { re: self.re * s, im: self.im * s }
    }
}

impl Add for Complex {
    type Output = Complex;
    fn add(self, o: Complex) -> Complex {
        Complex { re: self.re + o.re, im: self.im + o.im }
    }
}

impl Sub for Complex {
    type Output = Complex;
    fn sub(self, o: Complex) -> Complex {
        Complex { re: self.re - o.re, im: self.im - o.im }
    }
}

impl Mul for Complex {
    type Output = Complex;
    fn mul(self, o: Complex) -> Complex {
        Complex {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
}

enum Kind {
    Trivial,
    Radix2 { twiddles: Vec<Complex>, bitrev: Vec<usize> },
    Bluestein { inner: Box<FftPlan>, chirp: Vec<Complex>, kernel: Vec<Complex> },
}

/// Precomputed forward DFT of a fixed length:
/// `X[k] = sum_n x[n] * exp(-2 pi i k n / N)`.
pub struct FftPlan {
    n: usize,
    kind: Kind,
}

impl FftPlan {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "FFT length must be positive");
        if n == 1 {
            return Self { n, kind: Kind::Trivial };
        }
        if n.is_power_of_two() {
            let twiddles = (0..n / 2)
                .map(|k| Complex::cis(-2.0 * PI * k as f64 / n as f64))
                .collect();
            let bits = n.trailing_zeros();
            let bitrev = (0..n)
                .map(|i| i.reverse_bits() >> (usize::BITS - bits))
                .collect();
            return Self { n, kind: Kind::Radix2 { twiddles, bitrev } };
        }
        let m = (2 * n - 1).next_power_of_two();
        let inner = Box::new(FftPlan::new(m));
        // n^2 is reduced mod 2n before scaling so the phase stays accurate.
        let chirp: Vec<Complex> = (0..n)
            .map(|k| {
                let k2 = ((k as u128 * k as u128) % (2 * n as u128)) as f64;
                Complex::cis(-PI * k2 / n as f64)
            })
            .collect();
        let mut kernel = vec![Complex::ZERO; m];
        kernel[0] = chirp[0].conj();
        for k in 1..n {
            kernel[k] = chirp[k].conj();
            kernel[m - k] = chirp[k].conj();
        }
        inner.forward(&mut kernel);
        Self { n, kind: Kind::Bluestein { inner, chirp, kernel } }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform. `buf.len()` must equal the plan length.
    pub fn forward(&self, buf: &mut [Complex]) {
        assert_eq!(buf.len(), self.n, "buffer length does not match FFT plan");
        match &self.kind {
            Kind::Trivial => {}
            Kind::Radix2 { twiddles, bitrev } => radix2(buf, twiddles, bitrev),
            Kind::Bluestein { inner, chirp, kernel } => {
                let m = kernel.len();
                let mut a = vec![Complex::ZERO; m];
                for (k, (x, w)) in buf.iter().zip(chirp).enumerate() {
                    a[k] = *x * *w;
                }
                inner.forward(&mut a);
                for (ai, ki) in a.iter_mut().zip(kernel) {
                    *ai = (*ai * *ki).conj();
                }
                // inverse via conjugation: ifft(x) = conj(fft(conj(x))) / m
                inner.forward(&mut a);
                let inv_m = 1.0 / m as f64;
                for (k, out) in buf.iter_mut().enumerate() {
                    *out = a[k].conj().scale(inv_m) * chirp[k];
                }
            }
        }
    }
}

fn radix2(buf: &mut [Complex], twiddles: &[Complex], bitrev: &[usize]) {
    let n = buf.len();
    for i in 0..n {
        let j = bitrev[i];
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut size = 2;
    while size <= n {
        let half = size / 2;
        let stride = n / size;
        for start in (0..n).step_by(size) {
            for k in 0..half {
                let w = twiddles[k * stride];
                let t = buf[start + k + half] * w;
                let u = buf[start + k];
                buf[start + k] = u + t;
                buf[start + k + half] = u - t;
            }
        }
        size *= 2;
    }
}

/// Power spectrum of real frames. Even lengths pack two real samples into
/// one complex value and run a half-length transform.
pub struct RealFft {
    n: usize,
    plan: FftPlan,
    twiddles: Vec<Complex>,
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "FFT length must be positive");
        if n % 2 == 0 {
            let half = n / 2;
            let twiddles = (0..=half)
                .map(|k| Complex::cis(-2.0 * PI * k as f64 / n as f64))
                .collect();
            Self { n, plan: FftPlan::new(half), twiddles }
        } else {
            Self { n, plan: FftPlan::new(n), twiddles: Vec::new() }
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of non-negative-frequency bins, `n/2 + 1`.
    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// Writes `|X[k]|^2` for `k in 0..=n/2` into `out`.
    pub fn power(&self, frame: &[f64], out: &mut [f64]) {
        assert_eq!(frame.len(), self.n);
        assert_eq!(out.len(), self.bins());
        if self.n % 2 == 1 {
            let mut buf: Vec<Complex> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
            self.plan.forward(&mut buf);
            for (o, z) in out.iter_mut().zip(&buf) {
                *o = z.norm_sqr();
            }
            return;
        }
        let half = self.n / 2;
        let mut z: Vec<Complex> = frame
            .chunks_exact(2)
            .map(|p| Complex::new(p[0], p[1]))
            .collect();
        self.plan.forward(&mut z);
        for k in 0..=half {
            let zk = z[k % half];
            let zr = z[(half - k) % half].conj();
            let even = (zk + zr).scale(0.5);
            let diff = (zk - zr).scale(0.5);
            // odd part = diff / i
            let odd = Complex::new(diff.im, -diff.re);
            out[k] = (even + self.twiddles[k] * odd).norm_sqr();
        }
    }
}

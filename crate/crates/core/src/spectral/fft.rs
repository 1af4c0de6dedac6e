//! One-dimensional forward FFT plans: iterative radix-2 for power-of-two
//! lengths, Bluestein's chirp-z reduction for everything else.
//!
//! All plans use the unnormalized forward convention
//! `X[k] = Σ_n x[n]·e^{−2πi·kn/N}`.

use std::f64::consts::PI;

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    kind: PlanKind,
}

#[derive(Debug, Clone)]
enum PlanKind {
    Radix2(Radix2),
    Bluestein(Box<Bluestein>),
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "FFT length must be positive");
        let kind = if len.is_power_of_two() {
            PlanKind::Radix2(Radix2::new(len))
        } else {
            PlanKind::Bluestein(Box::new(Bluestein::new(len)))
        };
        Self { len, kind }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Transforms `buf` in place. `scratch` is resized as needed so callers
    /// can reuse one allocation across many rows.
    pub fn process(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        assert_eq!(buf.len(), self.len);
        match &self.kind {
            PlanKind::Radix2(p) => p.process(buf),
            PlanKind::Bluestein(p) => p.process(buf, scratch),
        }
    }
}

/// Exact twiddle `e^{−2πi·k/n}`; `k` is reduced first so large indices keep
/// full precision.
fn twiddle(k: usize, n: usize) -> Complex64 {
    let k = k % n;
    let angle = -2.0 * PI * (k as f64) / (n as f64);
    Complex64::new(angle.cos(), angle.sin())
}

#[derive(Debug, Clone)]
struct Radix2 {
    len: usize,
    // twiddles[k] = e^{-2πik/len}, k < len/2
    twiddles: Vec<Complex64>,
}

impl Radix2 {
    fn new(len: usize) -> Self {
        debug_assert!(len.is_power_of_two());
        let twiddles = (0..len / 2).map(|k| twiddle(k, len)).collect();
        Self { len, twiddles }
    }

    fn process(&self, buf: &mut [Complex64]) {
        let n = self.len;
        if n <= 1 {
            return;
        }
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            half *= 2;
        }
    }
}

#[derive(Debug, Clone)]
struct Bluestein {
    len: usize,
    inner: Radix2,
    // chirp[n] = e^{-iπ n²/len}
    chirp: Vec<Complex64>,
    // FFT of the conjugate chirp laid out circularly, pre-divided by the
    // inner length so the inverse needs no extra pass.
    filter_spectrum: Vec<Complex64>,
}

impl Bluestein {
    fn new(len: usize) -> Self {
        let inner_len = (2 * len - 1).next_power_of_two();
        let inner = Radix2::new(inner_len);
        // n² mod 2·len keeps the angle argument small and exact.
        let two_len = 2 * len as u128;
        let chirp: Vec<Complex64> = (0..len)
            .map(|n| {
                let sq = ((n as u128 * n as u128) % two_len) as f64;
                let angle = -PI * sq / len as f64;
                Complex64::new(angle.cos(), angle.sin())
            })
            .collect();
        let mut filter = vec![Complex64::new(0.0, 0.0); inner_len];
        filter[0] = chirp[0].conj();
        for n in 1..len {
            let c = chirp[n].conj();
            filter[n] = c;
            filter[inner_len - n] = c;
        }
        inner.process(&mut filter);
        let scale = 1.0 / inner_len as f64;
        for v in &mut filter {
            *v *= scale;
        }
        Self {
            len,
            inner,
            chirp,
            filter_spectrum: filter,
        }
    }

    fn process(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        let m = self.inner.len;
        scratch.clear();
        scratch.resize(m, Complex64::new(0.0, 0.0));
        for ((s, &x), &c) in scratch.iter_mut().zip(buf.iter()).zip(&self.chirp) {
            *s = x * c;
        }
        self.inner.process(scratch);
        for (s, &f) in scratch.iter_mut().zip(&self.filter_spectrum) {
            // conj so the forward kernel computes the inverse transform
            *s = (*s * f).conj();
        }
        self.inner.process(scratch);
        for ((out, s), &c) in buf.iter_mut().zip(scratch.iter()).zip(&self.chirp) {
            *out = s.conj() * c;
        }
        debug_assert_eq!(buf.len(), self.len);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| v * twiddle(j * k, n))
                    .sum()
            })
            .collect()
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn matches_naive_for_many_lengths() {
        let mut scratch = Vec::new();
        for n in 1..=70 {
            let x: Vec<Complex64> = (0..n)
                .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
                .collect();
            let mut y = x.clone();
            FftPlan::new(n).process(&mut y, &mut scratch);
            let err = max_err(&y, &naive(&x));
            assert!(err < 1e-10 * n as f64, "n={n} err={err}");
        }
    }

    #[test]
    fn bluestein_handles_table_resolution() {
        let n = 224;
        let mut x = vec![Complex64::new(1.0, 0.0); n];
        FftPlan::new(n).process(&mut x, &mut Vec::new());
        assert!((x[0].re - 224.0).abs() < 1e-9);
        assert!(x[1..].iter().all(|v| v.norm() < 1e-9));
    }
}

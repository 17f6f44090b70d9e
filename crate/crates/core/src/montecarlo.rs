//! Reproducible Monte Carlo plumbing.
//!
//! Paths are grouped into fixed chunks of [`CHUNK_SIZE`]. Chunk `i` draws from
//! ChaCha8 seeded with the run seed on stream `i`, and per-chunk partial sums
//! are combined by a pairwise tree in chunk order. Results therefore depend on
//! the seed and the path count only, not on how chunks are scheduled.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::sphere::SphericalPoint;
use crate::Result;

pub const CHUNK_SIZE: usize = 1000;

/// Random stream for chunk `chunk` of a run seeded with `seed`.
pub fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

pub fn chunk_count(n: usize) -> usize {
    n.div_ceil(CHUNK_SIZE)
}

fn chunk_len(n: usize, chunk: usize) -> usize {
    CHUNK_SIZE.min(n - chunk * CHUNK_SIZE)
}

/// Runs independent chunk jobs and returns their results in chunk order.
pub trait Executor {
    fn run<T, F>(&self, n_chunks: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs chunks one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn run<T, F>(&self, n_chunks: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n_chunks).map(job).collect()
    }
}

/// `n` draws of `sample`, in path order.
pub fn sample_paths<T, E, F>(exec: &E, n: usize, seed: u64, sample: F) -> Result<Vec<T>>
where
    T: Send,
    E: Executor,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync + Send,
{
    let chunks = exec.run(chunk_count(n), |c| {
        let mut rng = chunk_rng(seed, c);
        (0..chunk_len(n, c))
            .map(|_| sample(&mut rng))
            .collect::<Result<Vec<T>>>()
    });
    let mut out = Vec::with_capacity(n);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Combine `parts` pairwise, left to right within each level.
pub fn tree_reduce<A, F: Fn(A, A) -> A>(mut parts: Vec<A>, merge: F) -> Option<A> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}

/// Running first and second moments of a complex sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComplexMoments {
    pub n: usize,
    pub sum: Complex64,
    pub sum_sq_re: f64,
    pub sum_sq_im: f64,
}

impl ComplexMoments {
    pub fn push(&mut self, x: Complex64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq_re += x.re * x.re;
        self.sum_sq_im += x.im * x.im;
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            n: self.n + other.n,
            sum: self.sum + other.sum,
            sum_sq_re: self.sum_sq_re + other.sum_sq_re,
            sum_sq_im: self.sum_sq_im + other.sum_sq_im,
        }
    }

    /// Moments of `values`, accumulated chunk by chunk and merged as a tree.
    pub fn of(values: impl ExactSizeIterator<Item = Complex64>) -> Self {
        let mut parts = Vec::with_capacity(chunk_count(values.len()));
        let mut cur = Self::default();
        for x in values {
            cur.push(x);
            if cur.n == CHUNK_SIZE {
                parts.push(cur);
                cur = Self::default();
            }
        }
        if cur.n > 0 {
            parts.push(cur);
        }
        tree_reduce(parts, Self::merge).unwrap_or_default()
    }

    pub fn mean(&self) -> Complex64 {
        self.sum / self.n as f64
    }

    fn var(sum_sq: f64, mean: f64, n: usize) -> f64 {
        if n < 2 {
            return 0.0;
        }
        ((sum_sq - n as f64 * mean * mean) / (n - 1) as f64).max(0.0)
    }

    /// Standard errors of the real and imaginary parts.
    pub fn stderr_parts(&self) -> (f64, f64) {
        let m = self.mean();
        let n = self.n as f64;
        (
            (Self::var(self.sum_sq_re, m.re, self.n) / n).sqrt(),
            (Self::var(self.sum_sq_im, m.im, self.n) / n).sqrt(),
        )
    }

    /// Standard error of the complex mean, `sqrt(se_re² + se_im²)`.
    pub fn stderr(&self) -> f64 {
        let (a, b) = self.stderr_parts();
        a.hypot(b)
    }
}

/// Equal-area partition of the sphere into rings uniform in `cos θ` and
/// equal longitude sectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualAreaBins {
    pub rings: usize,
    pub sectors: usize,
}

impl Default for EqualAreaBins {
    fn default() -> Self {
        Self { rings: 4, sectors: 12 }
    }
}

impl EqualAreaBins {
    pub fn len(&self) -> usize {
        self.rings * self.sectors
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn area(&self) -> f64 {
        4.0 * PI / self.len() as f64
    }

    pub fn bin_of(&self, x: &SphericalPoint) -> usize {
        let z = x.theta().cos();
        let ring = (((1.0 - z) / 2.0 * self.rings as f64) as usize).min(self.rings - 1);
        let sector = ((x.phi() / (2.0 * PI) * self.sectors as f64) as usize).min(self.sectors - 1);
        ring * self.sectors + sector
    }

    /// `(θ_lo, θ_hi, φ_lo, φ_hi)` of bin `i`.
    pub fn bounds(&self, i: usize) -> (f64, f64, f64, f64) {
        let (ring, sector) = (i / self.sectors, i % self.sectors);
        let z_hi = 1.0 - 2.0 * ring as f64 / self.rings as f64;
        let z_lo = 1.0 - 2.0 * (ring + 1) as f64 / self.rings as f64;
        let w = 2.0 * PI / self.sectors as f64;
        (
            z_hi.clamp(-1.0, 1.0).acos(),
            z_lo.clamp(-1.0, 1.0).acos(),
            sector as f64 * w,
            (sector + 1) as f64 * w,
        )
    }

    /// Fraction of `points` in each bin.
    pub fn histogram<'a>(&self, points: impl Iterator<Item = &'a SphericalPoint>) -> Vec<f64> {
        let mut counts = alloc::vec![0.0; self.len()];
        let mut n = 0usize;
        for p in points {
            counts[self.bin_of(p)] += 1.0;
            n += 1;
        }
        for c in &mut counts {
            *c /= n.max(1) as f64;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn chunked_sampling_is_order_stable() {
        let draw = |rng: &mut ChaCha8Rng| Ok(rng.random::<f64>());
        let a = sample_paths(&Sequential, 2500, 42, draw).unwrap();
        let b = sample_paths(&Sequential, 2500, 42, draw).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2500);
        // a longer run shares its prefix chunks
        let c = sample_paths(&Sequential, 3000, 42, draw).unwrap();
        assert_eq!(&c[..2000], &a[..2000]);
        let d = sample_paths(&Sequential, 2500, 43, draw).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn tree_reduce_is_pairwise() {
        let parts: Vec<alloc::string::String> = ["a", "b", "c", "d", "e"]
            .iter()
            .map(|s| alloc::string::String::from(*s))
            .collect();
        let r = tree_reduce(parts, |a, b| alloc::format!("({a}{b})")).unwrap();
        assert_eq!(r, "(((ab)(cd))e)");
    }

    #[test]
    fn moments_of_known_sample() {
        let xs: Vec<Complex64> = (0..3001).map(|i| Complex64::new(i as f64, -2.0)).collect();
        let m = ComplexMoments::of(xs.iter().cloned());
        assert_eq!(m.n, 3001);
        assert!((m.mean().re - 1500.0).abs() < 1e-9);
        let (se_re, se_im) = m.stderr_parts();
        // variance of 0..=3000 is 3001·3002/12
        let exact = (3001.0 * 3002.0 / 12.0 / 3001.0f64).sqrt();
        assert!((se_re - exact).abs() < 1e-6 * exact);
        assert!(se_im < 1e-6);
    }

    #[test]
    fn equal_area_bins_cover_the_sphere() {
        let bins = EqualAreaBins::default();
        assert_eq!(bins.len(), 48);
        let mut total = 0.0;
        for i in 0..bins.len() {
            let (t0, t1, p0, p1) = bins.bounds(i);
            let area = (t0.cos() - t1.cos()) * (p1 - p0);
            assert!((area - bins.area()).abs() < 1e-12);
            total += area;
            let mid = SphericalPoint::new(0.5 * (t0 + t1), 0.5 * (p0 + p1)).unwrap();
            assert_eq!(bins.bin_of(&mid), i);
        }
        assert!((total - 4.0 * PI).abs() < 1e-12);
        assert!(bins.bin_of(&SphericalPoint::new(PI, 0.0).unwrap()) < 48);
    }
}

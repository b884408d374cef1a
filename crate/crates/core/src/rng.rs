//! Seeded random streams and doubly indexed noise draws `ε_{ti}` / `γ_{ti}`.
//!
//! A trial stream is ChaCha8 keyed by the master seed with the trial index as
//! the stream id, so streams for distinct trials never overlap and any trial
//! can be regenerated on its own.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::index_map::IndexMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub master_seed: u64,
    pub counter: u64,
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        RngStream {
            master_seed,
            counter: 0,
        }
    }

    /// Generator for trial `trial`, offset by this stream's counter.
    pub fn trial(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.counter.wrapping_add(trial));
        rng
    }

    /// A stream whose trials are disjoint from this one's, for nested
    /// randomness (e.g. ascent restarts inside a trial).
    pub fn derive(&self, salt: u64) -> RngStream {
        RngStream {
            master_seed: splitmix64(self.master_seed ^ splitmix64(salt)),
            counter: 0,
        }
    }

    /// Generator used where the counter itself is the state.
    pub fn rng(&self) -> ChaCha8Rng {
        self.trial(0)
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Rademacher,
    Gaussian,
}

/// Noise values on the support of an index map: `cells[t][k]` belongs to the
/// pair `(t, I_t[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMatrix {
    pub kind: NoiseKind,
    cells: Vec<Vec<f64>>,
}

impl NoiseMatrix {
    /// Wraps explicit values, checking the support shape against `map`.
    pub fn from_cells(
        kind: NoiseKind,
        map: &IndexMap,
        cells: Vec<Vec<f64>>,
    ) -> crate::Result<Self> {
        if cells.len() != map.t() {
            return Err(crate::Error::DimensionMismatch {
                expected: map.t(),
                found: cells.len(),
            });
        }
        for (c, s) in cells.iter().zip(map.subsets()) {
            if c.len() != s.len() {
                return Err(crate::Error::DimensionMismatch {
                    expected: s.len(),
                    found: c.len(),
                });
            }
        }
        Ok(NoiseMatrix { kind, cells })
    }

    /// Rademacher draw for a sign pattern given as the bits of `pattern`,
    /// cells enumerated in `(t, k)` order; bit set means `+1`.
    pub fn from_pattern(map: &IndexMap, pattern: u64) -> Self {
        let mut bit = 0;
        let cells = map
            .subsets()
            .iter()
            .map(|s| {
                s.iter()
                    .map(|_| {
                        let v = if (pattern >> bit) & 1 == 1 { 1.0 } else { -1.0 };
                        bit += 1;
                        v
                    })
                    .collect()
            })
            .collect();
        NoiseMatrix {
            kind: NoiseKind::Rademacher,
            cells,
        }
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.cells[t]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.cells
    }

    pub fn t(&self) -> usize {
        self.cells.len()
    }

    /// Same draw scaled cellwise.
    pub fn scaled(&self, s: f64) -> Self {
        NoiseMatrix {
            kind: self.kind,
            cells: self
                .cells
                .iter()
                .map(|r| r.iter().map(|v| v * s).collect())
                .collect(),
        }
    }
}

pub fn sample_noise<R: Rng + ?Sized>(kind: NoiseKind, rng: &mut R, map: &IndexMap) -> NoiseMatrix {
    let cells = map
        .subsets()
        .iter()
        .map(|s| {
            s.iter()
                .map(|_| match kind {
                    NoiseKind::Rademacher => {
                        if rng.random::<bool>() {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    NoiseKind::Gaussian => rng.sample(StandardNormal),
                })
                .collect()
        })
        .collect();
    NoiseMatrix { kind, cells }
}

/// Independent signs `ε_{ti}` for trial 0 of `stream`.
pub fn sample_signs(stream: &RngStream, map: &IndexMap) -> NoiseMatrix {
    sample_noise(NoiseKind::Rademacher, &mut stream.rng(), map)
}

/// Independent standard normals `γ_{ti}` for trial 0 of `stream`.
pub fn sample_gauss(stream: &RngStream, map: &IndexMap) -> NoiseMatrix {
    sample_noise(NoiseKind::Gaussian, &mut stream.rng(), map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index_map::{make_mc, make_mt};

    #[test]
    fn same_seed_same_draw() {
        let map = make_mc(3, 5).unwrap();
        let s = RngStream::new(42);
        assert_eq!(sample_signs(&s, &map), sample_signs(&s, &map));
        assert_eq!(sample_gauss(&s, &map), sample_gauss(&s, &map));
        let other = RngStream {
            master_seed: 42,
            counter: 1,
        };
        assert_ne!(sample_gauss(&s, &map), sample_gauss(&other, &map));
    }

    #[test]
    fn support_follows_map() {
        let map = make_mt(3, 2).unwrap();
        let d = sample_signs(&RngStream::new(1), &map);
        assert_eq!(d.t(), 3);
        assert!(d.rows().iter().all(|r| r.len() == 2));
        assert!(d.rows().iter().flatten().all(|v| *v == 1.0 || *v == -1.0));
    }

    #[test]
    fn single_cell_moments() {
        let map = make_mc(1, 1).unwrap();
        let stream = RngStream::new(7);
        let trials = 100_000u64;
        let mut sign_sum = 0.0;
        let mut abs_gauss = 0.0;
        for k in 0..trials {
            let mut rng = stream.trial(k);
            sign_sum += sample_noise(NoiseKind::Rademacher, &mut rng, &map).row(0)[0];
            abs_gauss += sample_noise(NoiseKind::Gaussian, &mut rng, &map).row(0)[0].abs();
        }
        let n = trials as f64;
        assert!((sign_sum / n).abs() < 0.02);
        assert!((abs_gauss / n - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.01);
    }

    #[test]
    fn trial_streams_uncorrelated() {
        let stream = RngStream::new(99);
        let n = 10_000;
        let mut a = stream.trial(3);
        let mut b = stream.trial(4);
        let xs: Vec<f64> = (0..n).map(|_| a.sample(StandardNormal)).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.sample(StandardNormal)).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        assert!((cov / (vx * vy).sqrt()).abs() < 0.05);
    }

    #[test]
    fn pattern_enumeration_order() {
        let map = make_mt(2, 1).unwrap();
        let d = NoiseMatrix::from_pattern(&map, 0b01);
        assert_eq!(d.rows(), &[vec![1.0], vec![-1.0]]);
    }
}

//! Deterministic counter-based random streams.
//!
//! Monte Carlo noise is indexed, not drawn sequentially: the increment for
//! (path, step, channel) is a pure function of the master seed and those
//! indices, so an ensemble is bit-identical no matter how paths are split
//! across threads or in what order they run. Mixing is splitmix64-style;
//! not cryptographic, stable across platforms.

/// Finalizing mix with good avalanche (splitmix64 variant).
#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[inline(always)]
fn unit_open(bits: u64) -> f64 {
    // (0, 1]: the +1 keeps ln() finite.
    (((bits >> 11) + 1) as f64) / ((1u64 << 53) as f64)
}

#[inline(always)]
fn unit_half_open(bits: u64) -> f64 {
    // [0, 1)
    ((bits >> 11) as f64) / ((1u64 << 53) as f64)
}

/// Counter-based standard-normal source for simulation noise.
#[derive(Debug, Clone, Copy)]
pub struct NoiseStreams {
    master: u64,
}

impl NoiseStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            master: mix64(seed ^ 0x243F6A8885A308D3),
        }
    }

    #[inline(always)]
    fn key(&self, path: u64, node: u64, channel: u64) -> u64 {
        let mut h = self.master;
        h = mix64(h ^ path.wrapping_mul(0xA0761D6478BD642F));
        h = mix64(h ^ node.wrapping_mul(0xE7037ED1A0B428DB));
        h = mix64(h ^ channel.wrapping_mul(0x8EBC6AF09C88C6E3));
        h
    }

    /// Standard normal for Brownian increment (path, step, channel).
    #[inline(always)]
    pub fn normal(&self, path: usize, step: usize, channel: usize) -> f64 {
        let h = self.key(path as u64, step as u64, channel as u64);
        box_muller(h)
    }

    /// Standard normal for the initial-state draw of `path`, component `j`.
    /// Kept on a separate index plane from the Brownian increments.
    #[inline(always)]
    pub fn initial_normal(&self, path: usize, j: usize) -> f64 {
        let h = self.key(path as u64, u64::MAX, j as u64);
        box_muller(h)
    }

    /// Sequential stream derived for auxiliary randomness (test instances,
    /// perturbation directions), decoupled from the noise planes.
    pub fn derive(&self, label: u64) -> SeqStream {
        SeqStream {
            state: mix64(self.master ^ label.wrapping_mul(0xD1342543DE82EF95)),
        }
    }
}

#[inline(always)]
fn box_muller(h: u64) -> f64 {
    let u1 = unit_open(h);
    let u2 = unit_half_open(mix64(h ^ 0x2545F4914F6CDD1D));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Small sequential splitmix stream.
#[derive(Debug, Clone)]
pub struct SeqStream {
    state: u64,
}

impl SeqStream {
    pub fn new(seed: u64) -> Self {
        Self {
            state: mix64(seed ^ 0x6C62272E07BB0142),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        mix64(self.state)
    }

    /// Uniform in [0, 1).
    pub fn next_unit(&mut self) -> f64 {
        unit_half_open(self.next_u64())
    }

    /// Uniform in [-1, 1).
    pub fn next_signed_unit(&mut self) -> f64 {
        2.0 * self.next_unit() - 1.0
    }

    /// Standard normal.
    pub fn next_normal(&mut self) -> f64 {
        box_muller(self.next_u64())
    }
}

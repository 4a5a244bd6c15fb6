use rand::Rng;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Halton sequence with a Cranley-Patterson rotation: point `i` is the
/// vector of radical inverses of `i + 1` in the first `dim` primes,
/// shifted by a random offset modulo 1.
#[derive(Debug, Clone)]
pub struct Halton {
    shift: Vec<f64>,
    next: u64,
}

impl Halton {
    pub fn new<R: Rng>(dim: usize, rng: &mut R) -> Self {
        assert!(
            dim <= PRIMES.len(),
            "Halton supports at most {} dimensions",
            PRIMES.len()
        );
        Self {
            shift: (0..dim).map(|_| rng.random::<f64>()).collect(),
            next: 0,
        }
    }

    /// Unshifted sequence, for tests and reproducible designs.
    pub fn unshifted(dim: usize) -> Self {
        assert!(dim <= PRIMES.len());
        Self {
            shift: vec![0.0; dim],
            next: 0,
        }
    }

    pub fn take_points(&mut self, count: usize) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.next_point()).collect()
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        self.next += 1;
        let i = self.next;
        self.shift
            .iter()
            .zip(PRIMES)
            .map(|(s, b)| (radical_inverse(i, b) + s).fract())
            .collect()
    }
}

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = u64::from(base);
    let inv = 1.0 / f64::from(base);
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_points_base_two_and_three() {
        let mut h = Halton::unshifted(2);
        assert_eq!(h.next_point(), vec![0.5, 1.0 / 3.0]);
        assert_eq!(h.next_point(), vec![0.25, 2.0 / 3.0]);
        assert_eq!(h.next_point(), vec![0.75, 1.0 / 9.0]);
    }

    #[test]
    fn fills_strata() {
        // 64 points of the base-2 coordinate hit every 1/64 cell once.
        let mut h = Halton::unshifted(1);
        let mut cells = [0u32; 64];
        for p in h.take_points(64) {
            cells[(p[0] * 64.0) as usize] += 1;
        }
        // i = 1..=64 covers 63 cells plus the wrap of 64 -> 1/128.
        assert!(cells.iter().filter(|&&c| c == 1).count() >= 62);
    }
}

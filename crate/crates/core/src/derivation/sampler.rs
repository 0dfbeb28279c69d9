use rand::seq::index::sample;
use rand::Rng;

use super::genotype::{Encoding, Gene, Genotype, FIRST_NODE};
use crate::error::{Error, Result};
use crate::search::stream_rng;
use crate::searchspace::{OpKind, INTERMEDIATE_NODES};

/// Draws beyond which a parameter floor is declared infeasible.
pub const MAX_REJECTIONS: usize = 100_000;

/// Width at which the toy parameter count is taken.
pub const TOY_DIM: usize = 16;

/// Uniform sampler over cells with two distinct inputs per node, uniform
/// ops, and at most `skip_cap` skips per cell.
#[derive(Debug, Clone)]
pub struct GenotypeSampler {
    pub skip_cap: usize,
    pub param_floor: Option<f64>,
    pub dim: usize,
}

impl GenotypeSampler {
    pub fn new(skip_cap: usize, param_floor: Option<f64>) -> Self {
        Self {
            skip_cap,
            param_floor,
            dim: TOY_DIM,
        }
    }

    fn cell(&self, rng: &mut impl Rng, rejections: &mut usize) -> Result<Vec<Gene>> {
        loop {
            let mut genes = Vec::with_capacity(2 * INTERMEDIATE_NODES);
            for j in 0..INTERMEDIATE_NODES {
                for k in sample(rng, j + 2, 2) {
                    let op = OpKind::ALL[rng.random_range(0..OpKind::ALL.len())];
                    genes.push(Gene::new(op, j + FIRST_NODE, k));
                }
            }
            if genes.iter().filter(|g| g.op == OpKind::Skip).count() <= self.skip_cap {
                return Ok(genes);
            }
            self.reject(rejections)?;
        }
    }

    fn reject(&self, rejections: &mut usize) -> Result<()> {
        *rejections += 1;
        if *rejections >= MAX_REJECTIONS {
            return Err(Error::Infeasible(format!(
                "no genotype with at most {} skips and {:?} parameters after {} draws",
                self.skip_cap, self.param_floor, MAX_REJECTIONS
            )));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<Genotype> {
        let mut rejections = 0;
        loop {
            let normal = self.cell(rng, &mut rejections)?;
            let reduce = self.cell(rng, &mut rejections)?;
            let g = Genotype::new(normal, reduce, Encoding::Pair)?;
            match self.param_floor {
                Some(floor) if (g.param_count(self.dim) as f64) < floor => self.reject(&mut rejections)?,
                _ => return Ok(g),
            }
        }
    }
}

/// One random genotype under the skip cap and optional parameter floor.
pub fn random_genotype(skip_cap: usize, param_floor: Option<f64>, seed: u64) -> Result<Genotype> {
    GenotypeSampler::new(skip_cap, param_floor).sample(&mut stream_rng(seed, 0))
}

/// Parameter count at quantile `q` of `n` unconstrained-by-size samples,
/// used as the default floor (q = 0.6).
pub fn param_floor_quantile(skip_cap: usize, q: f64, n: usize, seed: u64) -> Result<f64> {
    if n == 0 || !(0.0..=1.0).contains(&q) {
        return Err(Error::Config("quantile needs n > 0 and q in [0, 1]".into()));
    }
    let sampler = GenotypeSampler::new(skip_cap, None);
    let mut rng = stream_rng(seed, 0);
    let mut counts = (0..n)
        .map(|_| sampler.sample(&mut rng).map(|g| g.param_count(sampler.dim)))
        .collect::<Result<Vec<_>>>()?;
    counts.sort_unstable();
    let idx = ((n - 1) as f64 * q).round() as usize;
    Ok(counts[idx] as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_cap_has_no_skips() {
        let s = GenotypeSampler::new(0, None);
        let mut rng = stream_rng(1, 0);
        for _ in 0..200 {
            let g = s.sample(&mut rng).unwrap();
            assert_eq!(g.normal.count(OpKind::Skip) + g.reduce.count(OpKind::Skip), 0);
        }
    }

    #[test]
    fn floor_is_respected() {
        let floor = param_floor_quantile(2, 0.6, 300, 4).unwrap();
        let s = GenotypeSampler::new(2, Some(floor));
        let mut rng = stream_rng(5, 0);
        for _ in 0..100 {
            assert!(s.sample(&mut rng).unwrap().param_count(TOY_DIM) as f64 >= floor);
        }
    }

    #[test]
    fn infeasible_floor() {
        let err = random_genotype(2, Some(1e9), 0).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(random_genotype(2, None, 9).unwrap(), random_genotype(2, None, 9).unwrap());
    }
}

//! Forward simulation of the branching process and a Kolmogorov–Smirnov
//! comparison of the normalised population against a density curve.

use crate::error::{Error, Result};
use crate::model::PgfModel;
use crate::quadrature::DensityCurve;
use crate::spectral::SpectralData;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::Serialize;

/// Name of the generator, for output metadata.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha), one stream per path";
/// Individuals of one type per generation above which offspring counts are
/// drawn as a multinomial instead of one by one.
pub const BULK_THRESHOLD: u64 = 32;
/// Upper bound on `E^T · n_paths`.
pub const DEFAULT_BUDGET: f64 = 2e10;
/// Mass tolerance for a curve used as a reference distribution.
pub const CURVE_MASS_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PopulationState {
    pub counts: Vec<u64>,
    pub generation: usize,
}

impl PopulationState {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub start_type: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl SampleSet {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn std_error(&self) -> f64 {
        let n = self.values.len() as f64;
        let m = self.mean();
        let var = self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("w\n");
        for v in &self.values {
            out.push_str(&format!("{v:.16e}\n"));
        }
        out
    }
}

/// Offspring law of one type over its finite support.
#[derive(Debug, Clone)]
struct TypeLaw {
    children: Vec<Vec<u64>>,
    probs: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

/// Per-type samplers for a polynomial model.
#[derive(Debug, Clone)]
pub struct OffspringSampler {
    laws: Vec<TypeLaw>,
}

impl OffspringSampler {
    pub fn new(model: &PgfModel) -> Result<Self> {
        model.ensure_polynomial("exact offspring sampling")?;
        let laws = (0..model.n())
            .map(|i| {
                let terms = model.terms(i).terms();
                if terms.is_empty() {
                    return Err(Error::Domain(format!("type {} has no offspring law", i + 1)));
                }
                let children = terms
                    .iter()
                    .map(|(k, _)| k.entries().iter().map(|&v| v as u64).collect())
                    .collect();
                let probs: Vec<f64> = terms.iter().map(|(_, p)| *p).collect();
                let alias = WeightedAliasIndex::new(probs.clone())
                    .map_err(|e| Error::Domain(format!("type {}: {e}", i + 1)))?;
                Ok(TypeLaw {
                    children,
                    probs,
                    alias,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OffspringSampler { laws })
    }

    pub fn n(&self) -> usize {
        self.laws.len()
    }

    /// One generation: every individual reproduces independently.
    pub fn step<R: rand::Rng>(&self, counts: &[u64], rng: &mut R) -> Vec<u64> {
        let mut next = vec![0u64; self.n()];
        for (law, &c) in self.laws.iter().zip(counts) {
            if c == 0 {
                continue;
            }
            if c < BULK_THRESHOLD {
                for _ in 0..c {
                    let k = &law.children[law.alias.sample(rng)];
                    for (n, v) in next.iter_mut().zip(k) {
                        *n += v;
                    }
                }
            } else {
                // multinomial by successive conditional binomials
                let mut left = c;
                let mut mass = 1.0;
                let last = law.probs.len() - 1;
                for (j, (&p, k)) in law.probs.iter().zip(&law.children).enumerate() {
                    if left == 0 {
                        break;
                    }
                    let draw = if j == last {
                        left
                    } else {
                        let q = (p / mass).clamp(0.0, 1.0);
                        Binomial::new(left, q).expect("valid binomial").sample(rng)
                    };
                    left -= draw;
                    mass -= p;
                    for (n, v) in next.iter_mut().zip(k) {
                        *n += draw * v;
                    }
                }
            }
        }
        next
    }
}

fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

fn check_start(n: usize, start_type: usize) -> Result<()> {
    if start_type >= n {
        return Err(Error::Domain(format!(
            "start type {} outside 1..={n}",
            start_type + 1
        )));
    }
    Ok(())
}

fn run(sampler: &OffspringSampler, start_type: usize, horizon: usize, rng: &mut ChaCha8Rng) -> PopulationState {
    let mut counts = vec![0u64; sampler.n()];
    counts[start_type] = 1;
    for _ in 0..horizon {
        counts = sampler.step(&counts, rng);
    }
    PopulationState {
        counts,
        generation: horizon,
    }
}

/// `X_T` from `X_0 = e_start` (0-based type index).
pub fn simulate_path(model: &PgfModel, start_type: usize, horizon: usize, seed: u64) -> Result<PopulationState> {
    check_start(model.n(), start_type)?;
    let sampler = OffspringSampler::new(model)?;
    Ok(run(&sampler, start_type, horizon, &mut path_rng(seed, 0)))
}

/// `n_paths` independent estimates `E^{−T}·(b·X_T)`; path `j` uses stream
/// `j` of the seeded generator.
pub fn sample_martingale(
    model: &PgfModel,
    spectral: &SpectralData,
    start_type: usize,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<SampleSet> {
    sample_martingale_with_budget(model, spectral, start_type, horizon, n_paths, seed, DEFAULT_BUDGET)
}

pub fn sample_martingale_with_budget(
    model: &PgfModel,
    spectral: &SpectralData,
    start_type: usize,
    horizon: usize,
    n_paths: usize,
    seed: u64,
    budget: f64,
) -> Result<SampleSet> {
    check_start(model.n(), start_type)?;
    if n_paths == 0 {
        return Err(Error::Domain("need at least one path".into()));
    }
    let cost = spectral.perron.powi(horizon as i32) * n_paths as f64;
    if !(cost <= budget) {
        return Err(Error::Domain(format!(
            "E^T·paths = {cost:.3e} exceeds the budget {budget:.3e}"
        )));
    }
    let sampler = OffspringSampler::new(model)?;
    let scale = spectral.perron.powi(-(horizon as i32));
    let b: Vec<f64> = spectral.right.iter().copied().collect();
    let values = (0..n_paths as u64)
        .into_par_iter()
        .map(|j| {
            let st = run(&sampler, start_type, horizon, &mut path_rng(seed, j));
            scale * st.counts.iter().zip(&b).map(|(&c, b)| c as f64 * b).sum::<f64>()
        })
        .collect();
    Ok(SampleSet {
        values,
        start_type,
        horizon,
        seed,
    })
}

/// CDF of component `i` of the curve at `x`, linear between grid points,
/// linear from zero below the grid and flat above it.
fn curve_cdf_at(xs: &[f64], cdf: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return cdf[0] * (x / xs[0]).max(0.0);
    }
    let k = xs.partition_point(|&v| v < x);
    if k >= xs.len() {
        return cdf[cdf.len() - 1];
    }
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    cdf[k - 1] + t * (cdf[k] - cdf[k - 1])
}

/// Two-sided KS statistic between the samples and component
/// `samples.start_type` of the curve.
pub fn ks_test(samples: &SampleSet, curve: &DensityCurve) -> Result<f64> {
    let i = samples.start_type;
    if i >= curve.n_types() || curve.xs.len() < 2 {
        return Err(Error::Domain("curve does not cover the sampled type".into()));
    }
    let cdf = curve.cdf(i);
    let mass = cdf[cdf.len() - 1];
    if !((mass - 1.0).abs() <= CURVE_MASS_TOL) {
        return Err(Error::Domain(format!("curve mass {mass} is not within {CURVE_MASS_TOL} of 1")));
    }
    let mut v = samples.values.clone();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    Ok(v.iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = curve_cdf_at(&curve.xs, &cdf, x);
            ((k + 1) as f64 / n - f).max(f - k as f64 / n)
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::quadrature::linspace;
    use rand::Rng;
    use rand_distr::Exp;

    fn two_type() -> (PgfModel, SpectralData) {
        let m = catalog::two_type_quadratic(1.0 / 3.0, 0.5).unwrap();
        let sd = SpectralData::compute(&m).unwrap();
        (m, sd)
    }

    fn exp_curve() -> DensityCurve {
        let xs = linspace(1e-3, 30.0, 30_000);
        DensityCurve {
            values: xs.iter().map(|x| vec![(-x).exp()]).collect(),
            unreliable: vec![false; xs.len()],
            xs,
        }
    }

    #[test]
    fn zero_horizon_is_the_start() {
        let (m, _) = two_type();
        let s = simulate_path(&m, 1, 0, 7).unwrap();
        assert_eq!(s.counts, vec![0, 1]);
        assert!(simulate_path(&m, 2, 3, 7).is_err());
    }

    #[test]
    fn population_never_shrinks() {
        let (m, _) = two_type();
        let sampler = OffspringSampler::new(&m).unwrap();
        let mut rng = path_rng(3, 0);
        let mut counts = vec![1, 0];
        for _ in 0..20 {
            let next = sampler.step(&counts, &mut rng);
            assert!(next.iter().sum::<u64>() >= counts.iter().sum::<u64>());
            counts = next;
        }
    }

    #[test]
    fn bulk_step_has_the_right_mean() {
        // E[X_1 | X_0 = c·e_1] = c·(p, 2(1-p))
        let (m, _) = two_type();
        let sampler = OffspringSampler::new(&m).unwrap();
        let mut rng = path_rng(11, 0);
        let c = 10_000u64;
        let reps = 200;
        let mut acc = [0.0; 2];
        for _ in 0..reps {
            let x = sampler.step(&[c, 0], &mut rng);
            acc[0] += x[0] as f64;
            acc[1] += x[1] as f64;
        }
        let n = (c * reps) as f64;
        let p = 1.0 / 3.0;
        // binomial standard errors of the two frequencies
        let se = (p * (1.0 - p) / n).sqrt();
        assert!((acc[0] / n - p).abs() < 4.0 * se);
        assert!((acc[1] / n - 2.0 * (1.0 - p)).abs() < 8.0 * se);
    }

    #[test]
    fn reproducible_positive_and_unbiased() {
        let (m, sd) = two_type();
        let a = sample_martingale(&m, &sd, 0, 18, 10_000, 42).unwrap();
        let b = sample_martingale(&m, &sd, 0, 18, 10_000, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.values.iter().all(|&v| v > 0.0));
        assert!((a.mean() - sd.right[0]).abs() <= 3.0 * a.std_error());
        let c = sample_martingale(&m, &sd, 0, 18, 10_000, 43).unwrap();
        assert_ne!(a.values, c.values);
        let early = sample_martingale(&m, &sd, 0, 14, 10_000, 42).unwrap();
        let combined = (a.std_error().powi(2) + early.std_error().powi(2)).sqrt();
        assert!((a.mean() - early.mean()).abs() <= 2.0 * combined);
    }

    #[test]
    fn budget_and_rational_models_rejected() {
        let (m, sd) = two_type();
        assert!(sample_martingale_with_budget(&m, &sd, 0, 30, 1000, 1, 1e6).is_err());
        let g = catalog::geometric(0.5).unwrap();
        assert!(matches!(
            simulate_path(&g, 0, 3, 1),
            Err(Error::RationalUnsupported(_))
        ));
    }

    #[test]
    fn ks_against_exponential() {
        let curve = exp_curve();
        let n = 20_000;
        let mut rng = path_rng(5, 0);
        let exp = Exp::new(1.0).unwrap();
        let set = |values: Vec<f64>| SampleSet {
            values,
            start_type: 0,
            horizon: 0,
            seed: 5,
        };
        let draws: Vec<f64> = (0..n).map(|_| exp.sample(&mut rng)).collect();
        let d = ks_test(&set(draws.clone()), &curve).unwrap();
        assert!(d <= 1.36 / (n as f64).sqrt(), "{d}");
        // shifting by one moves the CDF by up to 1 - e^{-1}
        let shifted: Vec<f64> = draws.iter().map(|v| v + 1.0).collect();
        let d = ks_test(&set(shifted), &curve).unwrap();
        assert!((d - (1.0 - (-1f64).exp())).abs() < 0.02, "{d}");
    }

    #[test]
    fn ks_self_test_by_inverse_cdf() {
        let curve = exp_curve();
        let cdf = curve.cdf(0);
        let mut rng = path_rng(9, 0);
        let n = 10_000;
        let values: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
                let k = cdf.partition_point(|&c| c < u).clamp(1, cdf.len() - 1);
                let t = (u - cdf[k - 1]) / (cdf[k] - cdf[k - 1]);
                curve.xs[k - 1] + t * (curve.xs[k] - curve.xs[k - 1])
            })
            .collect();
        let d = ks_test(
            &SampleSet {
                values,
                start_type: 0,
                horizon: 0,
                seed: 9,
            },
            &curve,
        )
        .unwrap();
        assert!(d <= 2.0 / (n as f64).sqrt());
    }

    #[test]
    fn ks_rejects_unnormalised_curves() {
        let mut curve = exp_curve();
        for v in curve.values.iter_mut() {
            v[0] *= 1.1;
        }
        let s = SampleSet {
            values: vec![1.0],
            start_type: 0,
            horizon: 0,
            seed: 0,
        };
        assert!(ks_test(&s, &curve).is_err());
    }
}

//! Ensemble distances built on the fidelity kernel `F = |<a|b>|^2`: mean
//! fidelity, MMD (biased V-statistic, self pairs included) and discrete
//! Wasserstein distances, plus a finite-shot SWAP-test estimator.

pub mod ot;
pub mod simplex;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

pub use ot::{network_simplex, TransportSolution};

/// Largest `m * n` solved by the dense simplex instead of the network
/// simplex.
pub const DENSE_LP_LIMIT: usize = 16;

/// Infidelities below this count as zero in transport costs.
pub const INFIDELITY_FLOOR: f64 = 1e-13;

/// Measurement budget per fidelity estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ShotBudget {
    #[default]
    Exact,
    Shots(u32),
}

impl FromStr for ShotBudget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("exact") {
            return Ok(ShotBudget::Exact);
        }
        match s.parse::<u32>() {
            Ok(m) if m >= 1 => Ok(ShotBudget::Shots(m)),
            _ => Err(Error::InvalidParameter(format!("shot budget '{s}' is neither 'exact' nor a positive integer"))),
        }
    }
}

impl fmt::Display for ShotBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShotBudget::Exact => write!(f, "exact"),
            ShotBudget::Shots(m) => write!(f, "{m}"),
        }
    }
}

impl Serialize for ShotBudget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ShotBudget::Exact => s.serialize_str("exact"),
            ShotBudget::Shots(m) => s.serialize_u32(*m),
        }
    }
}

impl<'de> Deserialize<'de> for ShotBudget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u32),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(m) if m >= 1 => Ok(ShotBudget::Shots(m)),
            Repr::Num(_) => Err(serde::de::Error::custom("shot budget must be >= 1")),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Ensemble distance used as a loss or diagnostic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mmd,
    W1,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Mmd => "mmd",
            Metric::W1 => "w1",
        })
    }
}

/// Pairwise fidelities, row-major, rows indexing the first ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct FidelityMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl FidelityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }
}

/// One SWAP-test estimate: `m` ancilla readouts with `P(0) = 1/2 + F/2`,
/// returning `clamp(2 k/m - 1, 0, 1)` for `k` zeros.
pub fn swap_test_estimate<R: Rng + ?Sized>(fidelity: f64, m: u32, rng: &mut R) -> f64 {
    let p0 = (0.5 + 0.5 * fidelity).clamp(0.0, 1.0);
    let k = Binomial::new(u64::from(m), p0).expect("valid binomial").sample(rng);
    (2.0 * k as f64 / f64::from(m) - 1.0).clamp(0.0, 1.0)
}

fn check_dims(a: &Ensemble, b: &Ensemble) -> Result<()> {
    if a.n_qubits() != b.n_qubits() {
        return Err(Error::DimensionMismatch(format!("ensembles over {} and {} qubits", a.n_qubits(), b.n_qubits())));
    }
    Ok(())
}

/// `F_ij = |<a_i|b_j>|^2`, exact or SWAP-test estimated. Row `i` of a shot
/// estimate draws from `stream.index(i)`.
pub fn fidelity_matrix(a: &Ensemble, b: &Ensemble, shots: ShotBudget, stream: &RandomStream) -> Result<FidelityMatrix> {
    check_dims(a, b)?;
    let (rows, cols) = (a.len(), b.len());
    let values: Vec<f64> = (0..rows)
        .into_par_iter()
        .flat_map_iter(|i| {
            let ai = a.states()[i].amplitudes();
            let exact =
                b.states().iter().map(move |bj| crate::statevector::inner(ai, bj.amplitudes()).norm_sqr().min(1.0));
            let row: Vec<f64> = match shots {
                ShotBudget::Exact => exact.collect(),
                ShotBudget::Shots(m) => {
                    let mut rng = stream.index(i as u64).rng();
                    exact.map(|f| swap_test_estimate(f, m, &mut rng)).collect()
                }
            };
            row
        })
        .collect();
    Ok(FidelityMatrix { rows, cols, values })
}

/// `sum_ij w_i v_j F_ij`, summed once row-first and once column-first and
/// averaged so that swapping the arguments gives a bit-identical value.
pub fn weighted_mean(f: &FidelityMatrix, wa: &[f64], wb: &[f64]) -> f64 {
    let s1: f64 = (0..f.rows).map(|i| wa[i] * (0..f.cols).map(|j| wb[j] * f.get(i, j)).sum::<f64>()).sum();
    let s2: f64 = (0..f.cols).map(|j| wb[j] * (0..f.rows).map(|i| wa[i] * f.get(i, j)).sum::<f64>()).sum();
    0.5 * (s1 + s2)
}

/// Mean fidelity `sum_ij w_i v_j |<a_i|b_j>|^2`.
pub fn mean_fidelity(a: &Ensemble, b: &Ensemble, shots: ShotBudget, stream: &RandomStream) -> Result<f64> {
    let f = fidelity_matrix(a, b, shots, stream)?;
    Ok(weighted_mean(&f, a.weights(), b.weights()))
}

/// `F(a,a) + F(b,b) - 2 F(a,b)`.
pub fn mmd(a: &Ensemble, b: &Ensemble, shots: ShotBudget, stream: &RandomStream) -> Result<f64> {
    check_dims(a, b)?;
    let faa = mean_fidelity(a, a, shots, &stream.child("aa"))?;
    let fbb = mean_fidelity(b, b, shots, &stream.child("bb"))?;
    let fab = mean_fidelity(a, b, shots, &stream.child("ab"))?;
    Ok(faa + fbb - 2.0 * fab)
}

/// Pairwise transport cost `D^p` with `D^2 = 1 - F`.
pub fn transport_costs(f: &FidelityMatrix, p: u32) -> Vec<f64> {
    f.values
        .iter()
        .map(|&x| {
            // rounding leaves 1 - F ~ 1e-16 for identical states, and its
            // square root would dominate W1 of equal ensembles
            let d2 = if x >= 1.0 - INFIDELITY_FLOOR { 0.0 } else { 1.0 - x };
            match p {
                2 => d2,
                1 => d2.sqrt(),
                _ => d2.powf(f64::from(p) / 2.0),
            }
        })
        .collect()
}

/// Optimal transport between two weighted point sets; dense simplex for
/// tiny instances, network simplex otherwise.
pub fn optimal_transport_value(a: &[f64], b: &[f64], cost: &[f64]) -> Result<f64> {
    if a.len() * b.len() <= DENSE_LP_LIMIT {
        simplex::dense_transport(a, b, cost).map(|(v, _)| v)
    } else {
        network_simplex(a, b, cost).map(|s| s.cost)
    }
}

/// `W_p = OPT^(1/p)` with per-pair cost `(1 - F)^(p/2)`.
pub fn wasserstein(a: &Ensemble, b: &Ensemble, p: u32, shots: ShotBudget, stream: &RandomStream) -> Result<f64> {
    if !(p == 1 || p == 2) {
        return Err(Error::InvalidParameter(format!("Wasserstein order {p} not in {{1, 2}}")));
    }
    let f = fidelity_matrix(a, b, shots, stream)?;
    let c = transport_costs(&f, p);
    let opt = optimal_transport_value(a.weights(), b.weights(), &c)?.max(0.0);
    Ok(if p == 1 { opt } else { opt.sqrt() })
}

/// Dispatches on `metric`.
pub fn distance(a: &Ensemble, b: &Ensemble, metric: Metric, shots: ShotBudget, stream: &RandomStream) -> Result<f64> {
    match metric {
        Metric::Mmd => mmd(a, b, shots, stream),
        Metric::W1 => wasserstein(a, b, 1, shots, stream),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::gen_haar;
    use crate::statevector::StateVector;
    use approx::assert_abs_diff_eq;

    fn singleton(s: StateVector) -> Ensemble {
        Ensemble::uniform(vec![s]).unwrap()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn random_costs(m: usize, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RandomStream::new(seed).rng();
        (0..m * n).map(|_| rng.random::<f64>()).collect()
    }

    fn random_marginal(k: usize, rng: &mut impl Rng) -> Vec<f64> {
        let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    #[test]
    fn uniform_3x3_matches_permutation_brute_force() {
        let w = vec![1.0 / 3.0; 3];
        for seed in 0..25 {
            let c = random_costs(3, 3, seed);
            let brute = permutations(3)
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| c[i * 3 + j]).sum::<f64>() / 3.0)
                .fold(f64::INFINITY, f64::min);
            let (dense, _) = simplex::dense_transport(&w, &w, &c).unwrap();
            let net = network_simplex(&w, &w, &c).unwrap();
            assert_abs_diff_eq!(dense, brute, epsilon = 1e-12);
            assert_abs_diff_eq!(net.cost, brute, epsilon = 1e-12);
        }
    }

    #[test]
    fn network_matches_dense_on_random_weighted_instances() {
        let mut rng = RandomStream::new(77).rng();
        for seed in 0..40 {
            let m = 1 + (seed % 6) as usize;
            let n = 1 + (seed / 6 % 7) as usize;
            let a = random_marginal(m, &mut rng);
            let b = random_marginal(n, &mut rng);
            let c = random_costs(m, n, 1000 + seed);
            let (dense, _) = simplex::dense_transport(&a, &b, &c).unwrap();
            let net = network_simplex(&a, &b, &c).unwrap();
            assert!((dense - net.cost).abs() < 1e-10, "{m}x{n}: {dense} vs {}", net.cost);
            // dual feasibility and complementary slackness
            for i in 0..m {
                for j in 0..n {
                    assert!(net.u[i] + net.v[j] <= c[i * n + j] + 1e-9);
                }
            }
            for &(i, j, _) in &net.plan {
                assert!((net.u[i] + net.v[j] - c[i * n + j]).abs() < 1e-9);
            }
            let dual: f64 = a.iter().zip(&net.u).map(|(x, y)| x * y).sum::<f64>()
                + b.iter().zip(&net.v).map(|(x, y)| x * y).sum::<f64>();
            assert_abs_diff_eq!(dual, net.cost, epsilon = 1e-10);
        }
    }

    #[test]
    fn degenerate_uniform_assignment_is_solved() {
        let n = 60;
        let w = vec![1.0 / n as f64; n];
        let c = random_costs(n, n, 5);
        let net = network_simplex(&w, &w, &c).unwrap();
        let row_sums: Vec<f64> = (0..n).map(|i| net.plan.iter().filter(|x| x.0 == i).map(|x| x.2).sum()).collect();
        assert!(row_sums.iter().all(|s| (s - w[0]).abs() < 1e-12));
        let dual: f64 = w.iter().zip(&net.u).map(|(x, y)| x * y).sum::<f64>()
            + w.iter().zip(&net.v).map(|(x, y)| x * y).sum::<f64>();
        assert_abs_diff_eq!(dual, net.cost, epsilon = 1e-10);
    }

    #[test]
    fn singleton_examples() {
        let s = RandomStream::new(0);
        let zero = singleton(StateVector::zero(1));
        let one = singleton(StateVector::basis(1, 1));
        assert_eq!(mean_fidelity(&zero, &zero, ShotBudget::Exact, &s).unwrap(), 1.0);
        assert_eq!(mmd(&zero, &one, ShotBudget::Exact, &s).unwrap(), 2.0);
        assert_eq!(wasserstein(&zero, &one, 1, ShotBudget::Exact, &s).unwrap(), 1.0);
        assert_eq!(wasserstein(&zero, &zero, 2, ShotBudget::Exact, &s).unwrap(), 0.0);
        assert!(mmd(&zero, &singleton(StateVector::zero(2)), ShotBudget::Exact, &s).is_err());
    }

    #[test]
    fn mmd_is_symmetric_and_zero_on_self() {
        let s = RandomStream::new(4);
        let a = gen_haar(2, 37, &s.child("a")).unwrap();
        let b = gen_haar(2, 23, &s.child("b")).unwrap();
        assert_eq!(mmd(&a, &a, ShotBudget::Exact, &s).unwrap(), 0.0);
        assert_eq!(mmd(&a, &b, ShotBudget::Exact, &s).unwrap(), mmd(&b, &a, ShotBudget::Exact, &s).unwrap());
        assert_eq!(wasserstein(&a, &a, 1, ShotBudget::Exact, &s).unwrap(), 0.0);
    }

    #[test]
    fn mmd_equals_density_matrix_form() {
        let s = RandomStream::new(8);
        let a = gen_haar(2, 40, &s.child("a")).unwrap();
        let b2 = gen_haar(2, 30, &s.child("c")).unwrap();
        let direct = mmd(&a, &b2, ShotBudget::Exact, &s).unwrap();
        let via_rho = crate::density::hs_distance_sqr(&a.density_matrix(), &b2.density_matrix());
        assert_abs_diff_eq!(direct, via_rho, epsilon = 1e-13);
    }

    #[test]
    fn orthogonal_states_give_unbiased_zero_before_clamp() {
        // P(0) = 1/2 exactly, so the raw estimate 2k/m - 1 averages to 0
        let mut rng = RandomStream::new(12).rng();
        let m = 100u32;
        let trials = 10_000;
        let raw: f64 = (0..trials)
            .map(|_| {
                let k = Binomial::new(u64::from(m), 0.5).unwrap().sample(&mut rng);
                2.0 * k as f64 / f64::from(m) - 1.0
            })
            .sum::<f64>()
            / trials as f64;
        assert!(raw.abs() < 3.0 * (1.0 / (f64::from(m) * trials as f64)).sqrt());
    }

    #[test]
    fn shot_budget_parsing() {
        assert_eq!("exact".parse::<ShotBudget>().unwrap(), ShotBudget::Exact);
        assert_eq!("250".parse::<ShotBudget>().unwrap(), ShotBudget::Shots(250));
        assert!("0".parse::<ShotBudget>().is_err());
        let js = serde_json::to_string(&ShotBudget::Shots(7)).unwrap();
        assert_eq!(serde_json::from_str::<ShotBudget>(&js).unwrap(), ShotBudget::Shots(7));
        assert_eq!(serde_json::from_str::<ShotBudget>("\"exact\"").unwrap(), ShotBudget::Exact);
    }
}

//! Forward scrambling diffusion and its derived quantities.

use rayon::prelude::*;

use crate::ansatz::{apply_scrambling_step, sample_step_params, DiffusionSchedule, ScramblingStepParams};
use crate::distance::{distance, Metric, ShotBudget};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::statevector::StateVector;

/// Snapshots `S_0, ..., S_T` of a forward run and the parameters that
/// produced them.
#[derive(Clone, Debug)]
pub struct DiffusionTrajectory {
    pub schedule: DiffusionSchedule,
    /// `snapshots[t]` is the ensemble after `t` steps.
    pub snapshots: Vec<Ensemble>,
    /// `step_params[i][t - 1]` scrambled sample `i` at step `t`.
    pub step_params: Vec<Vec<ScramblingStepParams>>,
}

impl DiffusionTrajectory {
    pub fn n_steps(&self) -> usize {
        self.schedule.steps
    }

    pub fn n_qubits(&self) -> usize {
        self.snapshots[0].n_qubits()
    }

    pub fn snapshot(&self, t: usize) -> &Ensemble {
        &self.snapshots[t]
    }
}

fn step_stream(stream: &RandomStream, i: usize, t: usize) -> RandomStream {
    stream.child("sample").index(i as u64).child("step").index(t as u64)
}

/// Runs the forward diffusion on every sample of `e0`. Sample `i` at step
/// `t` draws its parameters from `stream/sample/i/step/t`, independent of
/// the thread count.
pub fn run_forward(e0: &Ensemble, sched: &DiffusionSchedule, stream: &RandomStream) -> Result<DiffusionTrajectory> {
    sched.validate()?;
    let n = e0.n_qubits();
    let per_sample: Vec<(Vec<StateVector>, Vec<ScramblingStepParams>)> = e0
        .states()
        .par_iter()
        .enumerate()
        .map(|(i, s0)| {
            let mut s = s0.clone();
            let mut states = Vec::with_capacity(sched.steps);
            let mut params = Vec::with_capacity(sched.steps);
            for t in 1..=sched.steps {
                let p = sample_step_params(n, t, sched, &step_stream(stream, i, t))?;
                apply_scrambling_step(&mut s, &p)?;
                states.push(s.clone());
                params.push(p);
            }
            Ok((states, params))
        })
        .collect::<Result<_>>()?;
    let mut snapshots = vec![e0.clone()];
    for t in 0..sched.steps {
        let states = per_sample.iter().map(|(s, _)| s[t].clone()).collect();
        snapshots.push(Ensemble::new(states, e0.weights().to_vec())?);
    }
    let step_params = per_sample.into_iter().map(|(_, p)| p).collect();
    Ok(DiffusionTrajectory { schedule: *sched, snapshots, step_params })
}

/// Re-applies recorded parameters to `e0`; returns `S_0, ..., S_T`.
pub fn replay(e0: &Ensemble, step_params: &[Vec<ScramblingStepParams>]) -> Result<Vec<Ensemble>> {
    if step_params.len() != e0.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} parameter sequences for {} samples",
            step_params.len(),
            e0.len()
        )));
    }
    let steps = step_params.first().map_or(0, |p| p.len());
    if step_params.iter().any(|p| p.len() != steps) {
        return Err(Error::DimensionMismatch("parameter sequences differ in length".into()));
    }
    let mut snapshots = vec![e0.clone()];
    let mut states = e0.states().to_vec();
    for t in 0..steps {
        states = states
            .into_par_iter()
            .zip(step_params.par_iter())
            .map(|(mut s, p)| {
                apply_scrambling_step(&mut s, &p[t])?;
                Ok(s)
            })
            .collect::<Result<_>>()?;
        snapshots.push(Ensemble::new(states.clone(), e0.weights().to_vec())?);
    }
    Ok(snapshots)
}

/// Fresh states from the fully scrambled distribution: `|0...0>` pushed
/// through all `T` steps with new parameters from `stream/sample/i/step/t`.
pub fn noise_sampler(n: usize, sched: &DiffusionSchedule, n_samples: usize, stream: &RandomStream) -> Result<Ensemble> {
    let zero = Ensemble::uniform(vec![StateVector::zero(n); n_samples])?;
    let traj = run_forward(&zero, sched, stream)?;
    Ok(traj.snapshots.into_iter().last().expect("at least S_0"))
}

/// `D(S_t, target)` for `t = 0..=T`.
pub fn diffusion_distance_curve(
    traj: &DiffusionTrajectory,
    target: &Ensemble,
    metric: Metric,
    shots: ShotBudget,
    stream: &RandomStream,
) -> Result<Vec<f64>> {
    traj.snapshots
        .iter()
        .enumerate()
        .map(|(t, s)| distance(s, target, metric, shots, &stream.index(t as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_cluster, gen_haar};
    use crate::distance::mmd;

    #[test]
    fn zero_schedule_is_identity() {
        let s = RandomStream::new(1);
        let e0 = gen_cluster(3, 0.06, 8, &s).unwrap();
        let traj = run_forward(&e0, &DiffusionSchedule::constant(4, 0.0), &s).unwrap();
        for snap in &traj.snapshots {
            assert_eq!(snap.len(), 8);
            for (a, b) in snap.states().iter().zip(e0.states()) {
                assert!((a.fidelity(b).unwrap() - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn replay_is_bit_identical_and_norms_hold() {
        let s = RandomStream::new(2);
        let e0 = gen_cluster(3, 0.06, 10, &s.child("data")).unwrap();
        let traj = run_forward(&e0, &DiffusionSchedule::ramp(6), &s).unwrap();
        assert_eq!(traj.snapshots.len(), 7);
        assert_eq!(traj.step_params.len(), 10);
        let again = replay(&e0, &traj.step_params).unwrap();
        for (a, b) in again.iter().zip(&traj.snapshots) {
            assert_eq!(a, b);
            for st in a.states() {
                assert!((st.norm_sqr() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn forward_run_ignores_thread_count() {
        let s = RandomStream::new(3);
        let e0 = gen_haar(2, 12, &s.child("data")).unwrap();
        let sched = DiffusionSchedule::ramp(5);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let two = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
        let a = one.install(|| run_forward(&e0, &sched, &s).unwrap());
        let b = two.install(|| run_forward(&e0, &sched, &s).unwrap());
        assert_eq!(a.snapshots, b.snapshots);
    }

    #[test]
    fn full_scrambling_approaches_haar() {
        let s = RandomStream::new(4);
        let e0 = gen_cluster(2, 0.06, 300, &s.child("data")).unwrap();
        let traj = run_forward(&e0, &DiffusionSchedule::ramp(20), &s).unwrap();
        let haar = gen_haar(2, 300, &s.child("haar")).unwrap();
        let curve = diffusion_distance_curve(&traj, &haar, Metric::Mmd, ShotBudget::Exact, &s).unwrap();
        assert_eq!(curve.len(), 21);
        assert!(curve[0] > 0.3);
        assert!(curve[20] < 0.03, "final MMD {}", curve[20]);
        let noise = noise_sampler(2, &DiffusionSchedule::ramp(20), 300, &s.child("noise")).unwrap();
        assert!(mmd(&noise, &haar, ShotBudget::Exact, &s).unwrap() < 0.03);
    }
}

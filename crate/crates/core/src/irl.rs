//! Path-integral maximum-entropy IRL over the explored policy sets stored in
//! a replay buffer.

use std::borrow::Borrow;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demos::{BufferCycle, ReplayBuffer};
use crate::error::{Error, Result};
use crate::reward::{feature_names, value_of, FeatureVector, RewardWeights, K, SCHEMA_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrlConfig {
    pub lr0: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Renormalize the demonstration probabilities inside the EVD.
    pub evd_renormalize: bool,
    /// Outer rounds that rebuild the buffer under the current weights.
    pub refresh_rounds: usize,
}

impl Default for IrlConfig {
    fn default() -> Self {
        Self {
            lr0: 0.1,
            lr_decay: 0.98,
            batch_size: 8,
            epochs: 200,
            seed: 0,
            evd_renormalize: true,
            refresh_rounds: 0,
        }
    }
}

impl IrlConfig {
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_decay.powi(epoch as i32)
    }
}

/// Boltzmann distribution over a finite policy set.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyDistribution {
    pub probabilities: Vec<f64>,
    /// Policy values under the weights the distribution was built with.
    pub values: Vec<f64>,
    pub log_partition: f64,
}

impl PolicyDistribution {
    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn log_probability(&self, i: usize) -> f64 {
        self.values[i] - self.log_partition
    }

    pub fn expected_features(&self, features: &[FeatureVector]) -> FeatureVector {
        let mut e = [0.0; K];
        for (p, f) in self.probabilities.iter().zip(features) {
            for k in 0..K {
                e[k] += p * f[k];
            }
        }
        e
    }
}

pub fn policy_distribution(features: &[FeatureVector], theta: &RewardWeights) -> Result<PolicyDistribution> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("empty policy set".into()));
    }
    let values: Vec<f64> = features.iter().map(|f| value_of(f, theta)).collect();
    let c = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !c.is_finite() {
        return Err(Error::InvalidArgument("non-finite policy value".into()));
    }
    let mut probabilities: Vec<f64> = values.iter().map(|v| (v - c).exp()).collect();
    let z: f64 = probabilities.iter().sum();
    for p in &mut probabilities {
        *p /= z;
    }
    Ok(PolicyDistribution {
        probabilities,
        values,
        log_partition: c + z.ln(),
    })
}

fn require_demos(cycle: &BufferCycle) -> Result<()> {
    if cycle.demo_count() == 0 {
        return Err(Error::InvalidArgument(format!("cycle {} has no demonstration", cycle.cycle_id)));
    }
    Ok(())
}

/// Sum of demonstration log-probabilities.
pub fn log_likelihood(cycle: &BufferCycle, theta: &RewardWeights) -> Result<f64> {
    require_demos(cycle)?;
    let dist = policy_distribution(&cycle.feature_integrals, theta)?;
    Ok(cycle.demo_indices().map(|i| dist.log_probability(i)).sum())
}

/// Mean demonstration feature integral.
pub fn empirical_features(cycle: &BufferCycle) -> FeatureVector {
    let mut f = [0.0; K];
    let mut m = 0usize;
    for i in cycle.demo_indices() {
        for k in 0..K {
            f[k] += cycle.feature_integrals[i][k];
        }
        m += 1;
    }
    for v in &mut f {
        *v /= m.max(1) as f64;
    }
    f
}

/// Expected minus empirical feature integrals for one cycle. This is the
/// log-likelihood gradient divided by the number of demonstrations.
pub fn cycle_gradient(cycle: &BufferCycle, theta: &RewardWeights) -> Result<FeatureVector> {
    require_demos(cycle)?;
    let dist = policy_distribution(&cycle.feature_integrals, theta)?;
    let e = dist.expected_features(&cycle.feature_integrals);
    let emp = empirical_features(cycle);
    let mut g = [0.0; K];
    for k in 0..K {
        g[k] = e[k] - emp[k];
    }
    Ok(g)
}

/// Mean of the per-cycle gradients, accumulated in slice order.
pub fn gradient<C: Borrow<BufferCycle> + Sync>(cycles: &[C], theta: &RewardWeights) -> Result<FeatureVector> {
    if cycles.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let parts = cycles
        .par_iter()
        .map(|c| cycle_gradient(c.borrow(), theta))
        .collect::<Result<Vec<_>>>()?;
    let mut g = [0.0; K];
    for p in &parts {
        for k in 0..K {
            g[k] += p[k];
        }
    }
    for v in &mut g {
        *v /= parts.len() as f64;
    }
    Ok(g)
}

/// Expected value over the full set minus expected value over the
/// demonstrations.
pub fn expected_value_difference(cycle: &BufferCycle, theta: &RewardWeights, renormalize: bool) -> Result<f64> {
    require_demos(cycle)?;
    let dist = policy_distribution(&cycle.feature_integrals, theta)?;
    let ev: f64 = dist.probabilities.iter().zip(&dist.values).map(|(p, v)| p * v).sum();
    let (mut num, mut mass) = (0.0, 0.0);
    for i in cycle.demo_indices() {
        num += dist.probabilities[i] * dist.values[i];
        mass += dist.probabilities[i];
    }
    let ev_demo = if renormalize {
        if mass > 0.0 {
            num / mass
        } else {
            // Demonstration mass underflowed; fall back to the plain mean.
            cycle.demo_indices().map(|i| dist.values[i]).sum::<f64>() / cycle.demo_count() as f64
        }
    } else {
        num
    };
    Ok(ev - ev_demo)
}

/// Expected projection distance under the policy distribution.
pub fn expected_distance(cycle: &BufferCycle, theta: &RewardWeights) -> Result<f64> {
    let dist = policy_distribution(&cycle.feature_integrals, theta)?;
    Ok(dist
        .probabilities
        .iter()
        .zip(&cycle.projection_distances)
        .map(|(p, d)| p * d)
        .sum())
}

/// Segment-level metrics: per-cycle means, plus the full-buffer gradient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub loglik: f64,
    pub grad_norm: f64,
    pub evd: f64,
    pub ed: f64,
}

impl EpochMetrics {
    fn is_finite(&self) -> bool {
        [self.loglik, self.grad_norm, self.evd, self.ed].iter().all(|v| v.is_finite())
    }
}

pub fn evaluate(buffer: &ReplayBuffer, theta: &RewardWeights, renormalize: bool) -> Result<EpochMetrics> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let per_cycle = buffer
        .cycles
        .par_iter()
        .map(|c| {
            Ok((
                log_likelihood(c, theta)?,
                expected_value_difference(c, theta, renormalize)?,
                expected_distance(c, theta)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_cycle.len() as f64;
    let (mut ll, mut evd, mut ed) = (0.0, 0.0, 0.0);
    for (a, b, c) in &per_cycle {
        ll += a;
        evd += b;
        ed += c;
    }
    let g = gradient(&buffer.cycles, theta)?;
    Ok(EpochMetrics {
        loglik: ll / n,
        grad_norm: norm(&g),
        evd: evd / n,
        ed: ed / n,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub theta: Vec<f64>,
    pub metrics: EpochMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    /// Metrics of the initial weights, before any update.
    pub initial: EpochMetrics,
    pub theta_init: RewardWeights,
    pub epochs: Vec<EpochRecord>,
    pub final_theta: RewardWeights,
}

impl TrainingReport {
    pub fn final_metrics(&self) -> EpochMetrics {
        self.epochs.last().map_or(self.initial, |e| e.metrics)
    }

    pub fn write_csv_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# driveirl training report schema {SCHEMA_VERSION}")?;
        write!(w, "epoch,loglik,grad_norm,evd,ed")?;
        for n in feature_names() {
            write!(w, ",theta_{n}")?;
        }
        writeln!(w)?;
        for e in &self.epochs {
            let m = &e.metrics;
            write!(w, "{},{:?},{:?},{:?},{:?}", e.epoch, m.loglik, m.grad_norm, m.evd, m.ed)?;
            for t in &e.theta {
                write!(w, ",{t:?}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv_to(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let fin = self.final_metrics();
        serde_json::json!({
            "schema": SCHEMA_VERSION,
            "epochs": self.epochs.len(),
            "initial": self.initial,
            "final": fin,
            "evd_ratio": (fin.evd / self.initial.evd).abs(),
            "ed_ratio": fin.ed / self.initial.ed,
            "theta_init": self.theta_init.theta(),
            "theta_final": self.final_theta.theta(),
            "feature_names": feature_names(),
        })
    }
}

/// Mini-batch projected gradient ascent on the log-likelihood.
pub fn train(buffer: &ReplayBuffer, theta_init: &RewardWeights, cfg: &IrlConfig) -> Result<TrainingReport> {
    train_with(buffer, theta_init, cfg, |_| {})
}

/// As [`train`], calling `progress` after every epoch.
pub fn train_with(
    buffer: &ReplayBuffer,
    theta_init: &RewardWeights,
    cfg: &IrlConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainingReport> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
    }
    let initial = evaluate(buffer, theta_init, cfg.evd_renormalize)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut theta = theta_init.theta().to_vec();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let diverged = |epoch: usize, reason: String, last: &[f64]| Error::Divergence {
        epoch,
        reason,
        last_theta: last.to_vec(),
    };

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let cycles: Vec<&BufferCycle> = batch.iter().map(|&i| &buffer.cycles[i]).collect();
            let w = RewardWeights::from_slice(&theta)?;
            let g = gradient(&cycles, &w)?;
            let gn = norm(&g);
            if !gn.is_finite() {
                return Err(diverged(epoch + 1, format!("gradient norm {gn}"), &theta));
            }
            let next: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| (t + lr * gi).max(0.0)).collect();
            if next.iter().any(|v| !v.is_finite()) {
                return Err(diverged(epoch + 1, "non-finite weights".into(), &theta));
            }
            theta = next;
        }
        let w = RewardWeights::from_slice(&theta)?;
        let metrics = evaluate(buffer, &w, cfg.evd_renormalize)?;
        if !metrics.is_finite() {
            return Err(diverged(epoch + 1, format!("non-finite metrics {metrics:?}"), &theta));
        }
        let rec = EpochRecord {
            epoch: epoch + 1,
            theta: theta.clone(),
            metrics,
        };
        progress(&rec);
        epochs.push(rec);
    }
    Ok(TrainingReport {
        initial,
        theta_init: *theta_init,
        epochs,
        final_theta: RewardWeights::from_slice(&theta)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cycle(features: Vec<FeatureVector>, demos: &[usize]) -> BufferCycle {
        let n = features.len();
        BufferCycle {
            cycle_id: 0,
            feature_integrals: features,
            projection_distances: (0..n).map(|i| i as f64 * 0.1).collect(),
            demo_flags: (0..n).map(|i| demos.contains(&i)).collect(),
        }
    }

    fn fv(vals: &[f64]) -> FeatureVector {
        let mut f = [0.0; K];
        f[..vals.len()].copy_from_slice(vals);
        f
    }

    fn w1(t: f64) -> RewardWeights {
        let mut th = [0.0; K];
        th[0] = t;
        RewardWeights::new(th).unwrap()
    }

    fn random_cycle(rng: &mut ChaCha8Rng) -> (BufferCycle, RewardWeights) {
        let n = rng.gen_range(2..40);
        let feats: Vec<FeatureVector> = (0..n)
            .map(|_| std::array::from_fn(|_| rng.gen_range(0.0..3.0)))
            .collect();
        let m = rng.gen_range(1..=n.min(5));
        let demos: Vec<usize> = (0..m).collect();
        let th: [f64; K] = std::array::from_fn(|_| rng.gen_range(0.1..1.0));
        (cycle(feats, &demos), RewardWeights::new(th).unwrap())
    }

    #[test]
    fn distribution_examples() {
        let d = policy_distribution(&[fv(&[0.0]), fv(&[3f64.ln()])], &w1(1.0)).unwrap();
        assert!((d.probabilities[0] - 0.75).abs() < 1e-15);
        assert!((d.probabilities[1] - 0.25).abs() < 1e-15);
        let d = policy_distribution(&vec![fv(&[2.0, 1.0]); 7], &RewardWeights::expert()).unwrap();
        assert!(d.probabilities.iter().all(|p| (p - 1.0 / 7.0).abs() < 1e-15));
        assert!(policy_distribution(&[], &w1(1.0)).is_err());
    }

    #[test]
    fn likelihood_examples() {
        assert_eq!(log_likelihood(&cycle(vec![fv(&[1.0])], &[0]), &w1(1.0)).unwrap(), 0.0);
        let ll = log_likelihood(&cycle(vec![fv(&[1.0]); 2], &[1]), &w1(1.0)).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_likelihood(&cycle(vec![fv(&[1.0]); 2], &[]), &w1(1.0)).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (c, w) = random_cycle(&mut rng);
            let g = cycle_gradient(&c, &w).unwrap();
            let m = c.demo_count() as f64;
            let h = 1e-5;
            for k in 0..K {
                let mut tp = w.theta().to_vec();
                let mut tm = tp.clone();
                tp[k] += h;
                tm[k] -= h;
                let lp = log_likelihood(&c, &RewardWeights::from_slice(&tp).unwrap()).unwrap();
                let lm = log_likelihood(&c, &RewardWeights::from_slice(&tm).unwrap()).unwrap();
                let fd = (lp - lm) / (2.0 * h) / m;
                let err = (fd - g[k]).abs() / g[k].abs().max(1.0);
                assert!(err < 1e-5, "k={k} fd={fd} g={}", g[k]);
            }
        }
    }

    #[test]
    fn single_policy_and_stationary_gradients() {
        let g = cycle_gradient(&cycle(vec![fv(&[1.0, 2.0])], &[0]), &w1(1.0)).unwrap();
        assert_eq!(g, [0.0; K]);
        // Symmetric pair around a demo at the centre: expectation equals the demo.
        let c = cycle(vec![fv(&[1.0, 2.0]), fv(&[0.0, 2.0]), fv(&[2.0, 2.0])], &[0]);
        let g = cycle_gradient(&c, &RewardWeights::zeros()).unwrap();
        assert!(norm(&g) <= 1e-15);
    }

    #[test]
    fn shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (c, w) = random_cycle(&mut rng);
        let mut shifted = c.clone();
        for f in &mut shifted.feature_integrals {
            for k in 0..K {
                f[k] += 5.0 + k as f64;
            }
        }
        let a = policy_distribution(&c.feature_integrals, &w).unwrap();
        let b = policy_distribution(&shifted.feature_integrals, &w).unwrap();
        for (p, q) in a.probabilities.iter().zip(&b.probabilities) {
            assert!((p - q).abs() < 1e-12);
        }
        let ga = cycle_gradient(&c, &w).unwrap();
        let gb = cycle_gradient(&shifted, &w).unwrap();
        for k in 0..K {
            assert!((ga[k] - gb[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn evd_examples() {
        let c = cycle(vec![fv(&[1.0]), fv(&[2.0]), fv(&[0.5])], &[0, 1, 2]);
        assert!(expected_value_difference(&c, &w1(1.0), true).unwrap().abs() < 1e-15);
        // Two policies, demo is the more probable one.
        let c = cycle(vec![fv(&[1.0]), fv(&[2.0])], &[0]);
        let (v1, v2) = (-1.0f64, -2.0f64);
        let p2 = v2.exp() / (v1.exp() + v2.exp());
        let want = p2 * (v2 - v1);
        let got = expected_value_difference(&c, &w1(1.0), true).unwrap();
        assert!((got - want).abs() < 1e-15);
        let raw = expected_value_difference(&c, &w1(1.0), false).unwrap();
        let p1 = 1.0 - p2;
        assert!((raw - (p1 * v1 + p2 * v2 - p1 * v1)).abs() < 1e-15);
    }

    #[test]
    fn ed_examples() {
        let mut c = cycle(vec![fv(&[1.0]), fv(&[2.0]), fv(&[0.5])], &[0]);
        let ed = expected_distance(&c, &RewardWeights::zeros()).unwrap();
        assert!((ed - 0.1).abs() < 1e-15);
        c.projection_distances = vec![0.3; 3];
        assert!((expected_distance(&c, &w1(2.0)).unwrap() - 0.3).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (c, w) = random_cycle(&mut rng);
        let vals: Vec<f64> = c.feature_integrals.iter().map(|f| -crate::reward::dot(w.theta(), f)).collect();
        let z: f64 = vals.iter().map(|v| v.exp()).sum();
        let oracle: f64 = vals.iter().zip(&c.projection_distances).map(|(v, d)| v.exp() / z * d).sum();
        assert!((expected_distance(&c, &w).unwrap() - oracle).abs() < 1e-12);
    }

    fn small_buffer(seed: u64) -> ReplayBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ReplayBuffer {
            cycles: (0..20)
                .map(|i| {
                    let (mut c, _) = random_cycle(&mut rng);
                    c.cycle_id = i;
                    c
                })
                .collect(),
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let buf = small_buffer(6);
        let init = RewardWeights::random(2);
        let cfg = IrlConfig { lr0: 0.0, epochs: 5, ..Default::default() };
        let rep = train(&buf, &init, &cfg).unwrap();
        assert_eq!(rep.final_theta, init);
        assert_eq!(rep.epochs.len(), 5);
        assert!(rep.epochs.iter().all(|e| e.metrics == rep.initial));
    }

    #[test]
    fn stationary_start_keeps_weights() {
        let c = cycle(vec![fv(&[1.0, 2.0]), fv(&[0.0, 2.0]), fv(&[2.0, 2.0])], &[0]);
        let buf = ReplayBuffer { cycles: vec![c; 4] };
        let init = RewardWeights::zeros();
        let cfg = IrlConfig { epochs: 3, ..Default::default() };
        let rep = train(&buf, &init, &cfg).unwrap();
        for (a, b) in rep.final_theta.theta().iter().zip(init.theta()) {
            assert!((a - b).abs() <= cfg.lr0 * 1e-9);
        }
    }

    #[test]
    fn training_is_deterministic_and_increases_likelihood() {
        let buf = small_buffer(8);
        let init = RewardWeights::random(3);
        let cfg = IrlConfig { epochs: 30, seed: 9, ..Default::default() };
        let a = train(&buf, &init, &cfg).unwrap();
        let b = train(&buf, &init, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.final_metrics().loglik > a.initial.loglik);
        assert!(a.final_theta.theta().iter().all(|t| *t >= 0.0));
        let mut csv = Vec::new();
        a.write_csv_to(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 32);
    }

    #[test]
    fn empty_buffer_rejected() {
        let err = train(&ReplayBuffer::default(), &RewardWeights::zeros(), &IrlConfig::default());
        assert!(matches!(err, Err(Error::EmptyBuffer)));
    }
}

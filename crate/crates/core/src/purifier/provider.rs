//! Two-class score providers used by progressive pruning.
//!
//! A provider is trained on the current positives against the negative pool
//! and then scores every positive as a pair of class scores summing to one.

use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vision::linear::dot;
use crate::vision::FeatureVector;

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider failed: {0}")]
    Failed(String),
    #[error("provider returned invalid scores: {0}")]
    InvalidScores(String),
    #[error("provider used before training")]
    Untrained,
}

/// (S_i1, S_i2): scores for the positive and the negative class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScorePair {
    pub positive: f64,
    pub negative: f64,
}

impl ClassScorePair {
    pub fn new(positive: f64, negative: f64) -> Result<Self, ProviderError> {
        let valid = |v: f64| (0.0..=1.0).contains(&v);
        if !valid(positive) || !valid(negative) || (positive + negative - 1.0).abs() > SUM_TOLERANCE {
            return Err(ProviderError::InvalidScores(format!("({positive}, {negative})")));
        }
        Ok(Self { positive, negative })
    }

    /// Pair from a positive-class probability.
    pub fn from_probability(p: f64) -> Self {
        let p = p.clamp(0.0, 1.0);
        Self {
            positive: p,
            negative: 1.0 - p,
        }
    }

    pub fn gap(&self) -> f64 {
        (self.positive - self.negative).abs()
    }
}

pub trait ScoreProvider {
    fn train(&mut self, positives: &[&FeatureVector], negatives: &[&FeatureVector]) -> Result<(), ProviderError>;

    fn score(&self, x: &FeatureVector) -> Result<ClassScorePair, ProviderError>;

    fn score_all(&self, xs: &[&FeatureVector]) -> Result<Vec<ClassScorePair>, ProviderError> {
        xs.iter().map(|x| self.score(x)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub iterations: usize,
    pub step: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            step: 0.1,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Reference provider: two-class logistic regression trained by full-batch
/// gradient descent from zero weights.
#[derive(Clone, Debug, Default)]
pub struct LogisticProvider {
    pub config: LogisticConfig,
    weights: Option<(Vec<f64>, f64)>,
}

impl LogisticProvider {
    pub fn new(config: LogisticConfig) -> Self {
        Self { config, weights: None }
    }
}

impl ScoreProvider for LogisticProvider {
    fn train(&mut self, positives: &[&FeatureVector], negatives: &[&FeatureVector]) -> Result<(), ProviderError> {
        if positives.is_empty() || negatives.is_empty() {
            return Err(ProviderError::Failed(format!(
                "need both classes, got {} positives and {} negatives",
                positives.len(),
                negatives.len()
            )));
        }
        let dim = positives[0].len();
        if positives.iter().chain(negatives).any(|x| x.len() != dim) {
            return Err(ProviderError::Failed("feature dimensions differ".into()));
        }
        let examples: Vec<(&[f64], f64)> = positives
            .iter()
            .map(|x| (x.as_slice(), 1.0))
            .chain(negatives.iter().map(|x| (x.as_slice(), 0.0)))
            .collect();
        let m = examples.len() as f64;
        let mut w = vec![0.0; dim];
        let mut b = 0.0;
        let mut grad = vec![0.0; dim];
        for _ in 0..self.config.iterations {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut bias_grad = 0.0;
            for &(x, y) in &examples {
                let err = sigmoid(dot(&w, x) + b) - y;
                for (g, xi) in grad.iter_mut().zip(x) {
                    *g += err * xi;
                }
                bias_grad += err;
            }
            let scale = self.config.step / m;
            for (wi, gi) in w.iter_mut().zip(&grad) {
                *wi -= scale * gi;
            }
            b -= scale * bias_grad;
        }
        self.weights = Some((w, b));
        Ok(())
    }

    fn score(&self, x: &FeatureVector) -> Result<ClassScorePair, ProviderError> {
        let (w, b) = self.weights.as_ref().ok_or(ProviderError::Untrained)?;
        if w.len() != x.len() {
            return Err(ProviderError::Failed(format!(
                "feature length {} does not match model length {}",
                x.len(),
                w.len()
            )));
        }
        Ok(ClassScorePair::from_probability(sigmoid(dot(w, x.as_slice()) + b)))
    }
}

#[derive(Serialize)]
struct CommandRequest<'a> {
    positives: &'a [Vec<f64>],
    negatives: &'a [Vec<f64>],
    queries: Vec<&'a [f64]>,
}

/// Provider backed by an external program.
///
/// Each scoring call runs `program args...` once, writes a JSON object
/// `{"positives": [[..]], "negatives": [[..]], "queries": [[..]]}` to its
/// stdin and expects a JSON array of `[s1, s2]` pairs (one per query) on
/// stdout.
#[derive(Clone, Debug)]
pub struct CommandProvider {
    pub program: String,
    pub args: Vec<String>,
    training: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
}

impl CommandProvider {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            training: None,
        }
    }
}

impl ScoreProvider for CommandProvider {
    fn train(&mut self, positives: &[&FeatureVector], negatives: &[&FeatureVector]) -> Result<(), ProviderError> {
        let copy = |xs: &[&FeatureVector]| xs.iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>();
        self.training = Some((copy(positives), copy(negatives)));
        Ok(())
    }

    fn score(&self, x: &FeatureVector) -> Result<ClassScorePair, ProviderError> {
        Ok(self.score_all(&[x])?[0])
    }

    fn score_all(&self, xs: &[&FeatureVector]) -> Result<Vec<ClassScorePair>, ProviderError> {
        let (positives, negatives) = self.training.as_ref().ok_or(ProviderError::Untrained)?;
        let request = CommandRequest {
            positives,
            negatives,
            queries: xs.iter().map(|x| x.as_slice()).collect(),
        };
        let payload = serde_json::to_vec(&request).map_err(|e| ProviderError::Failed(e.to_string()))?;
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ProviderError::Failed(format!("cannot start {}: {e}", self.program)))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            stdin
                .write_all(&payload)
                .map_err(|e| ProviderError::Failed(format!("writing request: {e}")))?;
        }
        let output = child
            .wait_with_output()
            .map_err(|e| ProviderError::Failed(e.to_string()))?;
        if !output.status.success() {
            return Err(ProviderError::Failed(format!(
                "{} exited with {}: {}",
                self.program,
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let pairs: Vec<(f64, f64)> =
            serde_json::from_slice(&output.stdout).map_err(|e| ProviderError::InvalidScores(e.to_string()))?;
        if pairs.len() != xs.len() {
            return Err(ProviderError::InvalidScores(format!(
                "expected {} pairs, got {}",
                xs.len(),
                pairs.len()
            )));
        }
        pairs.into_iter().map(|(a, b)| ClassScorePair::new(a, b)).collect()
    }
}

/// Provider selection as stored in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProviderSpec {
    Logistic {
        #[serde(default = "default_iterations")]
        iterations: usize,
        #[serde(default = "default_step")]
        step: f64,
    },
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

fn default_iterations() -> usize {
    LogisticConfig::default().iterations
}

fn default_step() -> f64 {
    LogisticConfig::default().step
}

impl Default for ProviderSpec {
    fn default() -> Self {
        let c = LogisticConfig::default();
        ProviderSpec::Logistic {
            iterations: c.iterations,
            step: c.step,
        }
    }
}

impl ProviderSpec {
    pub fn build(&self) -> Box<dyn ScoreProvider + Send> {
        match self {
            ProviderSpec::Logistic { iterations, step } => Box::new(LogisticProvider::new(LogisticConfig {
                iterations: *iterations,
                step: *step,
            })),
            ProviderSpec::Command { program, args } => Box::new(CommandProvider::new(program.clone(), args.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn vectors(seed: u64, n: usize, offset: f64) -> Vec<FeatureVector> {
        let mut rng = SplitMix64::new(seed);
        (0..n)
            .map(|_| FeatureVector::new((0..4).map(|_| rng.next_f64() + offset).collect()))
            .collect()
    }

    #[test]
    fn pair_validation() {
        assert!(ClassScorePair::new(0.6, 0.4).is_ok());
        assert!(ClassScorePair::new(0.6, 0.5).is_err());
        assert!(ClassScorePair::new(1.2, -0.2).is_err());
        assert!((ClassScorePair::new(0.6, 0.4).unwrap().gap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn logistic_pairs_are_valid_and_separate_classes() {
        let pos = vectors(1, 40, 1.0);
        let neg = vectors(2, 40, -1.0);
        let mut p = LogisticProvider::default();
        assert_eq!(p.score(&pos[0]), Err(ProviderError::Untrained));
        p.train(&pos.iter().collect::<Vec<_>>(), &neg.iter().collect::<Vec<_>>()).unwrap();
        for x in pos.iter().chain(&neg) {
            let s = p.score(x).unwrap();
            assert!((s.positive + s.negative - 1.0).abs() <= 1e-9);
            assert!((0.0..=1.0).contains(&s.positive));
        }
        assert!(pos.iter().all(|x| p.score(x).unwrap().positive > 0.5));
        assert!(neg.iter().all(|x| p.score(x).unwrap().positive < 0.5));
    }

    #[test]
    fn logistic_training_is_reproducible() {
        let pos = vectors(3, 10, 0.2);
        let neg = vectors(4, 10, 0.0);
        let run = || {
            let mut p = LogisticProvider::default();
            p.train(&pos.iter().collect::<Vec<_>>(), &neg.iter().collect::<Vec<_>>()).unwrap();
            p.score(&pos[0]).unwrap()
        };
        assert_eq!(run().positive.to_bits(), run().positive.to_bits());
    }

    #[test]
    fn command_provider_round_trip() {
        // Scores each query by its first component.
        let script = "import json,sys; r=json.load(sys.stdin); \
                      print(json.dumps([[q[0], 1-q[0]] for q in r['queries']]))";
        let mut p = CommandProvider::new("python3", vec!["-c".into(), script.into()]);
        let pos = [FeatureVector::new(vec![0.25, 9.0]), FeatureVector::new(vec![0.75, 9.0])];
        p.train(&pos.iter().collect::<Vec<_>>(), &[]).unwrap();
        let scores = p.score_all(&pos.iter().collect::<Vec<_>>()).unwrap();
        assert_eq!(scores[0], ClassScorePair::new(0.25, 0.75).unwrap());
        assert_eq!(scores[1].positive, 0.75);
    }

    #[test]
    fn command_provider_failures() {
        let x = FeatureVector::new(vec![0.5]);
        let mut p = CommandProvider::new("python3", vec!["-c".into(), "print('[[0.9, 0.9]]')".into()]);
        p.train(&[&x], &[&x]).unwrap();
        assert!(matches!(p.score(&x), Err(ProviderError::InvalidScores(_))));
        let mut p = CommandProvider::new("python3", vec!["-c".into(), "import sys; sys.exit(3)".into()]);
        p.train(&[&x], &[&x]).unwrap();
        assert!(matches!(p.score(&x), Err(ProviderError::Failed(_))));
        let mut p = CommandProvider::new("/nonexistent/provider", vec![]);
        p.train(&[&x], &[&x]).unwrap();
        assert!(matches!(p.score(&x), Err(ProviderError::Failed(_))));
    }

    #[test]
    fn spec_serialization() {
        let spec: ProviderSpec = serde_json::from_str(r#"{"kind":"logistic"}"#).unwrap();
        assert_eq!(spec, ProviderSpec::default());
        let spec: ProviderSpec = serde_json::from_str(r#"{"kind":"command","program":"x"}"#).unwrap();
        assert_eq!(spec, ProviderSpec::Command { program: "x".into(), args: vec![] });
    }
}

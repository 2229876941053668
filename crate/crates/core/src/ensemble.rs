//! Multiclass balancing ensemble: beta undersampled bags of the majority
//! class, one base learner per bag, soft-voted at inference.
//!
//! Each bag holds ceil(sum(minority counts) / mu) majority samples, so every
//! bag-union training set is (nearly) class balanced while the ensemble as a
//! whole still sees most of the majority class.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autoencoder::{train_autoencoder, AeError, SeqAutoencoder};
use crate::classifier::{
    predict_proba_batch, train_classifier, ClassProbs, ClassifierError, ClassifierParams, LossMode,
};
use crate::features::{Observation, Scaler};
use crate::optim::TrainHyperparams;
use crate::seeds::{indexed_rng, stream_rng, stream_seed};
use crate::types::ManeuverLabel;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("bag size {bag} exceeds majority count {majority}")]
    BagTooLarge { bag: usize, majority: usize },
    #[error("majority class is ambiguous: classes {0} and {1} have equal counts")]
    AmbiguousMajority(&'static str, &'static str),
    #[error("minority classes have no samples")]
    EmptyMinority,
    #[error("ensemble needs at least one member")]
    NoMembers,
    #[error("model has no scaler attached")]
    MissingScaler,
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Autoencoder(#[from] AeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BagMode {
    /// Each bag sampled independently, without replacement within the bag.
    Independent,
    /// Bags drawn without replacement across bags until the majority pool
    /// is exhausted, then the pool reshuffles.
    Coverage,
}

impl BagMode {
    pub fn parse(s: &str) -> Option<BagMode> {
        match s {
            "independent" => Some(BagMode::Independent),
            "coverage" => Some(BagMode::Coverage),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BagMode::Independent => "independent",
            BagMode::Coverage => "coverage",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Number of base learners.
    pub beta: usize,
    /// Training iterations (epochs) per base learner.
    pub train_iters: usize,
    pub seed: u64,
    pub bag_mode: BagMode,
    /// Retrain the autoencoder per bag instead of sharing one encoder.
    pub retrain_encoder: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            beta: 5,
            train_iters: 20,
            seed: 0,
            bag_mode: BagMode::Independent,
            retrain_encoder: false,
        }
    }
}

/// Indices of one undersampled majority subset.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub majority_subset: Vec<usize>,
}

/// Exact bag size per the balancing rule: ceil(sum of minority counts / mu).
pub fn bag_size(minority_counts: &[usize]) -> usize {
    let mu = minority_counts.len();
    let sum: usize = minority_counts.iter().sum();
    sum.div_ceil(mu)
}

/// Draw `beta` bags from the majority indices.
pub fn make_bags(
    majority_indices: &[usize],
    minority_counts: &[usize],
    beta: usize,
    mode: BagMode,
    seed: u64,
) -> Result<Vec<Bag>, EnsembleError> {
    if beta == 0 {
        return Err(EnsembleError::NoMembers);
    }
    if minority_counts.is_empty() || minority_counts.iter().sum::<usize>() == 0 {
        return Err(EnsembleError::EmptyMinority);
    }
    let size = bag_size(minority_counts);
    if size > majority_indices.len() {
        return Err(EnsembleError::BagTooLarge { bag: size, majority: majority_indices.len() });
    }

    let mut bags = Vec::with_capacity(beta);
    match mode {
        BagMode::Independent => {
            for i in 0..beta {
                let mut rng = indexed_rng(seed, "bag", i as u64);
                let mut pool: Vec<usize> = majority_indices.to_vec();
                pool.shuffle(&mut rng);
                pool.truncate(size);
                bags.push(Bag { majority_subset: pool });
            }
        }
        BagMode::Coverage => {
            let mut rng = stream_rng(seed, "bag.coverage");
            let mut pool: Vec<usize> = majority_indices.to_vec();
            pool.shuffle(&mut rng);
            for _ in 0..beta {
                let mut subset = Vec::with_capacity(size);
                while subset.len() < size {
                    match pool.pop() {
                        Some(idx) => subset.push(idx),
                        None => {
                            // Refill with everything not already in this
                            // bag, so a bag never holds duplicates.
                            let taken: std::collections::HashSet<usize> =
                                subset.iter().copied().collect();
                            pool = majority_indices
                                .iter()
                                .copied()
                                .filter(|i| !taken.contains(i))
                                .collect();
                            pool.shuffle(&mut rng);
                        }
                    }
                }
                bags.push(Bag { majority_subset: subset });
            }
        }
    }
    Ok(bags)
}

/// One base learner. `encoder` is set only when the ensemble was trained
/// with per-bag encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub encoder: Option<SeqAutoencoder>,
    pub classifier: ClassifierParams,
}

/// The trained model bundle used for inference: shared encoder, base
/// learners, and the training-set scaler that must travel with it.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub encoder: SeqAutoencoder,
    pub members: Vec<EnsembleMember>,
    pub config: EnsembleConfig,
    pub scaler: Option<Scaler>,
    pub use_static: bool,
}

/// Class counts in label index order.
pub fn class_counts(observations: &[Observation]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    for obs in observations {
        counts[obs.label.index()] += 1;
    }
    counts
}

/// The most frequent class. A tie for the top count is ill-posed input.
pub fn majority_class(counts: &[usize; 3]) -> Result<ManeuverLabel, EnsembleError> {
    let max = *counts.iter().max().unwrap();
    let top: Vec<ManeuverLabel> =
        ManeuverLabel::ALL.into_iter().filter(|l| counts[l.index()] == max).collect();
    if top.len() > 1 {
        return Err(EnsembleError::AmbiguousMajority(top[0].as_str(), top[1].as_str()));
    }
    Ok(top[0])
}

/// Train the full ensemble on scaled observations.
///
/// The passed encoder is shared across members unless
/// `config.retrain_encoder` is set, in which case each member trains its own
/// autoencoder on its bag-union set using `ae_hyper`. Classifier training
/// runs `config.train_iters` epochs per member with per-member seed streams.
pub fn train_ensemble(
    train: &[Observation],
    encoder: &SeqAutoencoder,
    scaler: Option<Scaler>,
    use_static: bool,
    config: &EnsembleConfig,
    cls_hyper: &TrainHyperparams,
    ae_hyper: &TrainHyperparams,
) -> Result<Ensemble, EnsembleError> {
    let counts = class_counts(train);
    let majority = majority_class(&counts)?;
    let majority_indices: Vec<usize> =
        (0..train.len()).filter(|&i| train[i].label == majority).collect();
    let minority_indices: Vec<usize> =
        (0..train.len()).filter(|&i| train[i].label != majority).collect();
    let minority_counts: Vec<usize> = ManeuverLabel::ALL
        .into_iter()
        .filter(|l| *l != majority)
        .map(|l| counts[l.index()])
        .collect();

    let bags = make_bags(&majority_indices, &minority_counts, config.beta, config.bag_mode, config.seed)?;

    // Precompute shared encodings once; bags index into them.
    let shared_encodings = if config.retrain_encoder {
        None
    } else {
        Some(encoder.encode_observations(train, use_static))
    };

    let members: Result<Vec<EnsembleMember>, EnsembleError> = bags
        .par_iter()
        .enumerate()
        .map(|(i, bag)| {
            let member_seed = stream_seed(config.seed, &format!("member.{i}"));
            let mut bag_union: Vec<usize> = bag.majority_subset.clone();
            bag_union.extend_from_slice(&minority_indices);
            let labels: Vec<ManeuverLabel> = bag_union.iter().map(|&j| train[j].label).collect();

            let (own_encoder, inputs) = match &shared_encodings {
                Some(enc) => {
                    let inputs = Array2::from_shape_fn((bag_union.len(), enc.ncols()), |(r, c)| {
                        enc[[bag_union[r], c]]
                    });
                    (None, inputs)
                }
                None => {
                    let bag_obs: Vec<Observation> =
                        bag_union.iter().map(|&j| train[j].clone()).collect();
                    let hyper = TrainHyperparams { seed: member_seed, ..ae_hyper.clone() };
                    let (ae, _) = train_autoencoder(&bag_obs, encoder.embedding(), &hyper)?;
                    let inputs = ae.encode_observations(&bag_obs, use_static);
                    (Some(ae), inputs)
                }
            };

            let mut classifier = ClassifierParams::new(inputs.ncols(), LossMode::CrossEntropy);
            let hyper = TrainHyperparams {
                epochs: config.train_iters,
                seed: member_seed,
                ..cls_hyper.clone()
            };
            train_classifier(&mut classifier, &inputs, &labels, &hyper)?;
            Ok(EnsembleMember { encoder: own_encoder, classifier })
        })
        .collect();

    Ok(Ensemble {
        encoder: encoder.clone(),
        members: members?,
        config: config.clone(),
        scaler,
        use_static,
    })
}

/// Arithmetic mean of member probability vectors; stays on the simplex.
pub fn soft_vote(member_probs: &[ClassProbs]) -> ClassProbs {
    assert!(!member_probs.is_empty(), "soft vote needs at least one member");
    let mut mean = [0.0; 3];
    for p in member_probs {
        for j in 0..3 {
            mean[j] += p.0[j];
        }
    }
    for v in &mut mean {
        *v /= member_probs.len() as f64;
    }
    ClassProbs(mean)
}

impl Ensemble {
    /// Predict one observation: scale (when a scaler is attached), encode,
    /// evaluate every member, soft-vote, argmax with the LK tie rule.
    pub fn predict(&self, obs: &Observation) -> Result<(ManeuverLabel, ClassProbs), EnsembleError> {
        let out = self.predict_batch(std::slice::from_ref(obs))?;
        Ok(out.into_iter().next().unwrap())
    }

    /// Batched prediction over raw observations.
    pub fn predict_batch(
        &self,
        observations: &[Observation],
    ) -> Result<Vec<(ManeuverLabel, ClassProbs)>, EnsembleError> {
        if self.members.is_empty() {
            return Err(EnsembleError::NoMembers);
        }
        if observations.is_empty() {
            return Ok(Vec::new());
        }
        let scaled: Vec<Observation> = match &self.scaler {
            Some(s) => observations.iter().map(|o| s.apply(o)).collect(),
            None => observations.to_vec(),
        };

        let shared = if self.members.iter().any(|m| m.encoder.is_none()) {
            Some(self.encoder.encode_observations(&scaled, self.use_static))
        } else {
            None
        };

        let mut member_probs: Vec<Vec<ClassProbs>> = Vec::with_capacity(self.members.len());
        for member in &self.members {
            let probs = match &member.encoder {
                Some(own) => {
                    let enc = own.encode_observations(&scaled, self.use_static);
                    predict_proba_batch(&member.classifier, &enc)?
                }
                None => predict_proba_batch(&member.classifier, shared.as_ref().unwrap())?,
            };
            member_probs.push(probs);
        }

        Ok((0..observations.len())
            .map(|i| {
                let probs: Vec<ClassProbs> = member_probs.iter().map(|m| m[i]).collect();
                let vote = soft_vote(&probs);
                (vote.argmax_label(), vote)
            })
            .collect())
    }
}

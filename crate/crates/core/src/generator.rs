//! Hierarchical generative model for synthetic sequences.
//!
//! The inventory starts from the atomic alphabet and is expanded `depth`
//! times. Each expansion flips a fair coin: heads creates an object by
//! concatenating 2–5 existing objects or categories (never starting or ending
//! with a category), tails creates a category over 2–5 existing objects.
//! Occurrence probabilities are then drawn from flat Dirichlet distributions.
//!
//! Randomness comes from ChaCha8 with two streams off the same seed: stream
//! [`EXPAND_STREAM`] drives inventory expansion and [`SAMPLE_STREAM`] drives
//! sequence sampling, so either phase can be replayed on its own.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Atom;

pub const EXPAND_STREAM: u64 = 0;
pub const SAMPLE_STREAM: u64 = 1;

const COMBO_SIZES: [usize; 4] = [2, 3, 4, 5];

/// Seeded ChaCha8 generator on the given stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Element {
    Object(ObjectId),
    Category(CategoryId),
}

impl Element {
    fn is_category(&self) -> bool {
        matches!(self, Element::Category(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Object {
    Atomic(Atom),
    Composite(Vec<Element>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub denotees: Vec<ObjectId>,
    pub probs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub alphabet_size: usize,
    pub depth: usize,
    pub seq_length: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            alphabet_size: 10,
            depth: 30,
            seq_length: 1000,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphabet_size == 0 {
            return Err(Error::InvalidArgument("alphabet size must be at least 1".into()));
        }
        if self.seq_length == 0 {
            return Err(Error::InvalidArgument("sequence length must be at least 1".into()));
        }
        Ok(())
    }
}

/// Ground-truth objects and categories with their sampling probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenInventory {
    pub alphabet_size: usize,
    /// Atomic objects occupy ids `0..alphabet_size`.
    pub objects: Vec<Object>,
    pub categories: Vec<Category>,
    pub object_probs: Vec<f64>,
    /// Expansion history after the atoms, one entry per iteration.
    pub created: Vec<Element>,
}

/// One top-level draw in a sampled sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledObject {
    pub object: ObjectId,
    pub start: usize,
    /// Atoms kept in the sequence (less than `atoms.len()` only for the last draw).
    pub kept: usize,
    /// Full grounding of the draw.
    pub atoms: Vec<Atom>,
}

impl SampledObject {
    /// The trimmed final draw counts only if at least half of it survived.
    pub fn counts_toward_parse(&self) -> bool {
        2 * self.kept >= self.atoms.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub draws: Vec<SampledObject>,
}

impl GroundTruth {
    /// Ground-truth parse length |W_GT|.
    pub fn parse_length(&self) -> usize {
        self.draws.iter().filter(|d| d.counts_toward_parse()).count()
    }
}

/// Uniform sample from the (k-1)-simplex: k unit exponentials, normalised.
pub fn sample_flat_dirichlet<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("Dirichlet dimension must be at least 1".into()));
    }
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        Ok(draws.into_iter().map(|x| x / total).collect())
    } else {
        Ok(vec![1.0 / k as f64; k])
    }
}

/// `k` distinct picks from `pool`, or picks with repetition when `distinct`
/// is false or the pool is too small.
fn pick<R: Rng + ?Sized, T: Copy>(pool: &[T], k: usize, distinct: bool, rng: &mut R) -> Vec<T> {
    if distinct && pool.len() >= k {
        pool.choose_multiple(rng, k).copied().collect()
    } else {
        (0..k).map(|_| *pool.choose(rng).expect("nonempty pool")).collect()
    }
}

/// Expands the atomic alphabet into a nested object/category inventory.
pub fn expand_inventory<R: Rng + ?Sized>(config: &GenConfig, rng: &mut R) -> Result<GenInventory> {
    config.validate()?;
    let mut objects: Vec<Object> = (0..config.alphabet_size)
        .map(|a| Object::Atomic(Atom(a as u32)))
        .collect();
    let mut category_members: Vec<Vec<ObjectId>> = Vec::new();
    let mut created = Vec::with_capacity(config.depth);

    for _ in 0..config.depth {
        if rng.random::<f64>() > 0.5 {
            let pool: Vec<Element> = (0..objects.len())
                .map(|i| Element::Object(ObjectId(i as u32)))
                .chain((0..category_members.len()).map(|i| Element::Category(CategoryId(i as u32))))
                .collect();
            let n = *COMBO_SIZES.choose(rng).unwrap();
            // Distinct endpoints need two objects; with one, allow repeats.
            let distinct = objects.len() >= 2;
            let mut parts = pick(&pool, n, distinct, rng);
            while parts[0].is_category() || parts[parts.len() - 1].is_category() {
                parts = pick(&pool, n, distinct, rng);
            }
            created.push(Element::Object(ObjectId(objects.len() as u32)));
            objects.push(Object::Composite(parts));
        } else {
            let pool: Vec<ObjectId> = (0..objects.len()).map(|i| ObjectId(i as u32)).collect();
            let n = *COMBO_SIZES.choose(rng).unwrap();
            created.push(Element::Category(CategoryId(category_members.len() as u32)));
            category_members.push(pick(&pool, n, true, rng));
        }
    }

    let object_probs = sample_flat_dirichlet(objects.len(), rng)?;
    let mut categories = Vec::with_capacity(category_members.len());
    for denotees in category_members {
        let probs = sample_flat_dirichlet(denotees.len(), rng)?;
        categories.push(Category { denotees, probs });
    }
    Ok(GenInventory {
        alphabet_size: config.alphabet_size,
        objects,
        categories,
        object_probs,
        created,
    })
}

impl GenInventory {
    fn ground_object<R: Rng + ?Sized>(
        &self,
        id: ObjectId,
        cat_dists: &[WeightedIndex<f64>],
        rng: &mut R,
        out: &mut Vec<Atom>,
    ) {
        match &self.objects[id.0 as usize] {
            Object::Atomic(a) => out.push(*a),
            Object::Composite(parts) => {
                for part in parts {
                    match *part {
                        Element::Object(o) => self.ground_object(o, cat_dists, rng, out),
                        Element::Category(c) => {
                            let cat = &self.categories[c.0 as usize];
                            let pick = cat_dists[c.0 as usize].sample(rng);
                            self.ground_object(cat.denotees[pick], cat_dists, rng, out);
                        }
                    }
                }
            }
        }
    }

    /// Draws top-level objects until `length` atoms are produced, trimming the
    /// overflow of the final draw.
    pub fn sample_sequence<R: Rng + ?Sized>(&self, length: usize, rng: &mut R) -> Result<(Vec<Atom>, GroundTruth)> {
        let top = WeightedIndex::new(&self.object_probs)
            .map_err(|e| Error::InvalidArgument(format!("object probabilities: {e}")))?;
        let cat_dists = self
            .categories
            .iter()
            .map(|c| {
                WeightedIndex::new(&c.probs).map_err(|e| Error::InvalidArgument(format!("category probabilities: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut seq = Vec::with_capacity(length);
        let mut draws = Vec::new();
        while seq.len() < length {
            let object = ObjectId(top.sample(rng) as u32);
            let mut atoms = Vec::new();
            self.ground_object(object, &cat_dists, rng, &mut atoms);
            let start = seq.len();
            let kept = atoms.len().min(length - start);
            seq.extend_from_slice(&atoms[..kept]);
            draws.push(SampledObject {
                object,
                start,
                kept,
                atoms,
            });
        }
        Ok((seq, GroundTruth { draws }))
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }
}

/// Expansion and sampling in one go, each on its own RNG stream.
pub fn generate(config: &GenConfig) -> Result<(GenInventory, Vec<Atom>, GroundTruth)> {
    let inv = expand_inventory(config, &mut stream_rng(config.seed, EXPAND_STREAM))?;
    let (seq, gt) = inv.sample_sequence(config.seq_length, &mut stream_rng(config.seed, SAMPLE_STREAM))?;
    Ok((inv, seq, gt))
}

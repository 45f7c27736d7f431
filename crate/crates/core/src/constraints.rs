//! Pair and triplet constraints derived from rating labels.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::types::{LabeledDataset, PairSets, Triplet, TripletSet, TripletVariant};

/// Subsample size used when the caller gives none.
pub const DEFAULT_TRIPLET_SUBSAMPLE: usize = 5000;

/// Equal-label pairs are similar, all others dissimilar. Pairs are `(i, j)`, `i < j`,
/// in lexicographic order.
pub fn build_pairs(dataset: &LabeledDataset) -> PairSets {
    let labels = dataset.labels();
    let mut pairs = PairSets::default();
    for i in 0..labels.len() {
        for j in (i + 1)..labels.len() {
            if labels[i] == labels[j] {
                pairs.similar.push((i, j));
            } else {
                pairs.dissimilar.push((i, j));
            }
        }
    }
    pairs
}

fn check_args(n: usize, sigma: f64) -> Result<()> {
    if n < 3 {
        return Err(Error::Config(format!("triplets need at least 3 instances, got {n}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!(
            "sigma must be finite and nonnegative, got {sigma}"
        )));
    }
    Ok(())
}

/// Triplets anchored at `a`, in `(b, c)` lexicographic order.
fn triplets_for_anchor(labels: &[i32], a: usize, sigma: f64, variant: TripletVariant) -> Vec<Triplet> {
    let mut out = Vec::new();
    for_each_anchor_triplet(labels, a, sigma, variant, |t| out.push(t));
    out
}

fn for_each_anchor_triplet(
    labels: &[i32],
    a: usize,
    sigma: f64,
    variant: TripletVariant,
    mut emit: impl FnMut(Triplet),
) {
    let n = labels.len();
    let sa = labels[a];
    for b in (0..n).filter(|&b| b != a) {
        let sb = labels[b];
        for c in (0..n).filter(|&c| c != a && c != b) {
            if variant.accepts(sa, sb, labels[c], sigma) {
                emit(Triplet::new(a, b, c));
            }
        }
    }
}

/// Every ordered triple of distinct indices satisfying the variant's predicate,
/// in lexicographic `(a, b, c)` order.
pub fn build_triplets(dataset: &LabeledDataset, sigma: f64, variant: TripletVariant) -> Result<TripletSet> {
    build_triplets_with(Exec::default(), dataset, sigma, variant)
}

pub fn build_triplets_with(
    exec: Exec,
    dataset: &LabeledDataset,
    sigma: f64,
    variant: TripletVariant,
) -> Result<TripletSet> {
    let labels = dataset.labels();
    check_args(labels.len(), sigma)?;
    let triplets = exec.flat_map_range(labels.len(), |a| triplets_for_anchor(labels, a, sigma, variant));
    Ok(TripletSet {
        triplets,
        sigma,
        variant,
    })
}

/// Uniform sample without replacement of `min(m, |set|)` triplets, returned in
/// the set's order. Deterministic in `seed`.
pub fn subsample_triplets(set: &TripletSet, m: usize, seed: u64) -> Result<TripletSet> {
    if m == 0 {
        return Err(Error::Config("triplet subsample size must be at least 1".into()));
    }
    let picked = sorted_sample(set.len(), m, seed);
    Ok(TripletSet {
        triplets: picked.into_iter().map(|i| set.triplets[i]).collect(),
        sigma: set.sigma,
        variant: set.variant,
    })
}

fn sorted_sample(len: usize, m: usize, seed: u64) -> Vec<usize> {
    if m >= len {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, len, m).into_vec();
    picked.sort_unstable();
    picked
}

/// Same result as `subsample_triplets(build_triplets(..), m, seed)` without
/// materializing the full O(n^3) set: counts per anchor, samples positions,
/// then re-enumerates only the anchors that hold sampled positions.
pub fn sample_triplets(
    exec: Exec,
    dataset: &LabeledDataset,
    sigma: f64,
    variant: TripletVariant,
    m: usize,
    seed: u64,
) -> Result<TripletSet> {
    let labels = dataset.labels();
    check_args(labels.len(), sigma)?;
    if m == 0 {
        return Err(Error::Config("triplet subsample size must be at least 1".into()));
    }
    let counts = exec.map_range(labels.len(), |a| {
        let mut count = 0usize;
        for_each_anchor_triplet(labels, a, sigma, variant, |_| count += 1);
        count
    });
    let total: usize = counts.iter().sum();
    let picked = sorted_sample(total, m, seed);

    let mut triplets = Vec::with_capacity(picked.len());
    let mut next = picked.iter().peekable();
    let mut offset = 0;
    for (a, &count) in counts.iter().enumerate() {
        let end = offset + count;
        if next.peek().is_some_and(|&&p| p < end) {
            let mut pos = offset;
            for_each_anchor_triplet(labels, a, sigma, variant, |t| {
                if next.peek() == Some(&&pos) {
                    triplets.push(t);
                    next.next();
                }
                pos += 1;
            });
        }
        offset = end;
    }
    Ok(TripletSet {
        triplets,
        sigma,
        variant,
    })
}

/// CSV dump with columns `a,b,c`.
pub fn write_triplets_csv<W: std::io::Write>(set: &TripletSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Config(format!("csv write failed: {e}"));
    w.write_record(["a", "b", "c"]).map_err(to_err)?;
    for t in &set.triplets {
        w.write_record([t.a.to_string(), t.b.to_string(), t.c.to_string()])
            .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Config(format!("csv write failed: {e}")))
}

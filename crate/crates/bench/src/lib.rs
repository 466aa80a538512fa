//! Fixtures shared by the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use score_core::index::{Embedding, EntryKind, FlatIndex, IndexBuilder, IndexEntry};

pub fn unit_vector(rng: &mut impl Rng, dim: usize) -> Embedding {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Ok(e) = Embedding::new(v) {
            return e;
        }
    }
}

/// `n` random vectors spread over ten stories.
pub fn random_index(n: usize, dim: usize, seed: u64) -> FlatIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = IndexBuilder::new(dim);
    for i in 0..n {
        b.add(IndexEntry {
            entry_id: format!("e{i:06}"),
            kind: EntryKind::Summary,
            story_id: format!("s{}", i % 10),
            episode_index: i / 10,
            embedding: unit_vector(&mut rng, dim),
        })
        .expect("unique ids and matching dims");
    }
    b.freeze()
}

pub fn queries(count: usize, dim: usize, seed: u64) -> Vec<Embedding> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| unit_vector(&mut rng, dim)).collect()
}

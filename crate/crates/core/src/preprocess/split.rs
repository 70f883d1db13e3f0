use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.65,
            val: 0.10,
            test: 0.25,
            seed: 0,
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {f:?} must be in [0, 1] and sum to 1")));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` items; remainder ties favour
    /// train, then val, then test.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let quotas = [self.train, self.val, self.test].map(|f| {
            // absorb representation error such as 0.65 * 20 = 13.000000000000002
            let q = f * n as f64;
            let r = q.round();
            if (q - r).abs() < 1e-9 {
                r
            } else {
                q
            }
        });
        let mut counts = quotas.map(|q| q.floor() as usize);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let assigned: usize = counts.iter().sum();
        for &k in order.iter().take(n.saturating_sub(assigned)) {
            counts[k] += 1;
        }
        counts
    }
}

/// Sample indices of each partition, each sorted ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle-and-cut of sample indices into train/val/test. When
/// stratified, each class is apportioned separately and a class with at
/// least three samples gets at least one in every partition.
pub fn split_dataset(labels: &[usize], n_classes: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut groups: Vec<Vec<usize>> = if spec.stratified {
        let mut g = vec![Vec::new(); n_classes];
        for (i, &c) in labels.iter().enumerate() {
            g.get_mut(c)
                .ok_or_else(|| Error::Validation(format!("label {c} out of range for {n_classes} classes")))?
                .push(i);
        }
        if let Some(c) = g.iter().position(Vec::is_empty) {
            return Err(Error::Config(format!("class {c} has no samples")));
        }
        g
    } else {
        vec![(0..labels.len()).collect()]
    };
    let mut out = SplitIndices::default();
    for group in &mut groups {
        group.shuffle(&mut rng);
        let mut counts = spec.counts(group.len());
        if spec.stratified && group.len() >= 3 {
            let fractions = [spec.train, spec.val, spec.test];
            for k in 0..3 {
                if counts[k] == 0 && fractions[k] > 0.0 {
                    let donor = (0..3).max_by_key(|&d| (counts[d], std::cmp::Reverse(d))).expect("3 parts");
                    counts[donor] -= 1;
                    counts[k] += 1;
                }
            }
        }
        let (train, rest) = group.split_at(counts[0]);
        let (val, test) = rest.split_at(counts[1]);
        out.train.extend_from_slice(train);
        out.val.extend_from_slice(val);
        out.test.extend_from_slice(test);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KanError, Result};

const SPLIT_STREAM: u64 = 1;

/// Train / validation / test proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

/// Disjoint index lists covering every sample, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class stratified split.
///
/// Totals hit `round(f · n)` for train and val (test takes the rest), and
/// each class gets `floor(f · n_c)` or one more per part. Leftover units go
/// to the part still short of its total, preferring the class's largest
/// fractional share. Samples of a class are shuffled with a ChaCha8 stream
/// seeded by `seed` before being dealt out.
pub fn stratified_split(
    labels: &[usize],
    n_classes: usize,
    fractions: SplitFractions,
    seed: u64,
) -> Result<DatasetSplit> {
    let f = fractions.as_array();
    if f.iter().any(|v| !v.is_finite() || *v < 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(KanError::Domain(format!(
            "split fractions must be non-negative and sum to 1, got {f:?}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(KanError::Label {
                label: l,
                n_classes,
            });
        }
        by_class[l].push(i);
    }
    if let Some((c, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < 3) {
        return Err(KanError::Domain(format!(
            "class {c} has {} samples; stratified splitting needs at least 3",
            members.len()
        )));
    }

    let n = labels.len() as f64;
    let target_train = (f[0] * n).round() as usize;
    let target_val = ((f[1] * n).round() as usize).min(labels.len() - target_train);
    let targets = [
        target_train,
        target_val,
        labels.len() - target_train - target_val,
    ];

    // floor allocation per class, then track how far each part is from its total
    let mut counts: Vec<[usize; 3]> = Vec::with_capacity(n_classes);
    let mut fracs: Vec<[f64; 3]> = Vec::with_capacity(n_classes);
    let mut assigned = [0usize; 3];
    for members in &by_class {
        let nc = members.len() as f64;
        let mut cnt = [0usize; 3];
        let mut fr = [0.0; 3];
        for s in 0..3 {
            let quota = f[s] * nc;
            cnt[s] = quota.floor() as usize;
            fr[s] = quota - quota.floor();
            assigned[s] += cnt[s];
        }
        counts.push(cnt);
        fracs.push(fr);
    }
    let mut deficit: [i64; 3] = [0; 3];
    for s in 0..3 {
        deficit[s] = targets[s] as i64 - assigned[s] as i64;
    }
    for (c, members) in by_class.iter().enumerate() {
        let leftover = members.len() - counts[c].iter().sum::<usize>();
        let mut used = [false; 3];
        for _ in 0..leftover {
            let pick = (0..3)
                .filter(|&s| !used[s])
                .max_by(|&a, &b| {
                    let ka = (deficit[a] > 0, fracs[c][a], deficit[a]);
                    let kb = (deficit[b] > 0, fracs[c][b], deficit[b]);
                    ka.partial_cmp(&kb)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        // prefer the lower part index on ties
                        .then(b.cmp(&a))
                })
                .unwrap_or(0);
            used[pick] = true;
            counts[c][pick] += 1;
            deficit[pick] -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    let mut split = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (c, members) in by_class.iter().enumerate() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        let [a, b, _] = counts[c];
        split.train.extend_from_slice(&shuffled[..a]);
        split.val.extend_from_slice(&shuffled[a..a + b]);
        split.test.extend_from_slice(&shuffled[a + b..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{Rng, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Per-category proportional sampling.
    #[default]
    Stratified,
    Uniform,
}

#[derive(Debug, Clone)]
pub struct Split<T = f64> {
    pub train: Dataset<T>,
    pub val: Dataset<T>,
    pub test: Dataset<T>,
}

/// `(train, val, test)` sizes: test is 10% of `n`, validation 10% of the rest.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let test = n / 10;
    let val = (n - test) / 10;
    (n - test - val, val, test)
}

/// Splits into train/validation/test. All three keep the parent timespan so
/// normalized times agree across splits.
pub fn split<T: Scalar>(ds: &Dataset<T>, rng: &mut Rng, mode: SplitMode) -> Result<Split<T>> {
    let n = ds.len();
    if n < 10 {
        return Err(Error::TooSmall(format!("{n} instances; splitting needs at least 10")));
    }
    let (_, n_val, n_test) = split_sizes(n);

    let mut groups: Vec<Vec<usize>> = match mode {
        SplitMode::Stratified => {
            let mut g = vec![Vec::new(); ds.category_count()];
            for (row, inst) in ds.instances.iter().enumerate() {
                g[inst.category].push(row);
            }
            g
        }
        SplitMode::Uniform => vec![(0..n).collect()],
    };
    for g in &mut groups {
        rng.shuffle(g);
    }

    let take = |groups: &mut Vec<Vec<usize>>, total: usize| -> Vec<usize> {
        let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        let quotas = apportion(&sizes, total);
        let mut picked = Vec::with_capacity(total);
        for (g, q) in groups.iter_mut().zip(quotas) {
            picked.extend(g.drain(..q));
        }
        picked
    };
    let mut test = take(&mut groups, n_test);
    let mut val = take(&mut groups, n_val);
    let mut train: Vec<usize> = groups.into_iter().flatten().collect();
    test.sort_unstable();
    val.sort_unstable();
    train.sort_unstable();

    Ok(Split {
        train: ds.subset(&train),
        val: ds.subset(&val),
        test: ds.subset(&test),
    })
}

/// Largest-remainder allocation of `total` across groups proportional to `sizes`.
fn apportion(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| s * total / n).collect();
    let mut rest: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| ((s * total) % n, i))
        .collect();
    // largest remainder first, lower group index on ties
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut missing = total - quotas.iter().sum::<usize>();
    for &(_, i) in &rest {
        if missing == 0 {
            break;
        }
        if quotas[i] < sizes[i] {
            quotas[i] += 1;
            missing -= 1;
        }
    }
    quotas
}

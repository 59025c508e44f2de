use std::collections::BTreeMap;

use super::time::{month_key, month_start};
use super::Dataset;
use crate::numerics::Scalar;

/// One calendar month of instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bin {
    /// Month offset from the month containing the dataset's `t_s`.
    pub index: usize,
    pub month_start: i64,
    pub month_end: i64,
    /// Rows of the binned dataset, in dataset order.
    pub members: Vec<usize>,
}

impl Bin {
    /// Representative instant used when re-projecting into this bin.
    pub fn midpoint(&self) -> i64 {
        self.month_start + (self.month_end - self.month_start) / 2
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member_ids<'a, T: Scalar>(&'a self, ds: &'a Dataset<T>) -> impl Iterator<Item = &'a str> {
        self.members.iter().map(|&r| ds.instances[r].id.as_str())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Binning {
    /// Chronological.
    pub bins: Vec<Bin>,
    /// Ids of instances that fell in bins below the size threshold.
    pub excluded: Vec<String>,
}

impl Binning {
    /// Bin containing `ts`, if that month was kept.
    pub fn find(&self, ts: i64) -> Option<usize> {
        self.bins
            .iter()
            .position(|b| (b.month_start..b.month_end).contains(&ts))
    }
}

/// Groups instances by calendar month over the dataset timespan and drops
/// months with fewer than `min_bin_size` members. With `min_bin_size == 0`
/// empty months are kept.
pub fn bin_monthly<T: Scalar>(ds: &Dataset<T>, min_bin_size: usize) -> Binning {
    let first = month_key(ds.timespan.start);
    let last = month_key(ds.timespan.end);
    let mut by_month: BTreeMap<i64, Vec<usize>> = (first..=last).map(|k| (k, Vec::new())).collect();
    for (row, inst) in ds.instances.iter().enumerate() {
        by_month.entry(month_key(inst.ts)).or_default().push(row);
    }

    let mut out = Binning::default();
    for (key, members) in by_month {
        if members.len() < min_bin_size || (members.is_empty() && min_bin_size > 0) {
            out.excluded
                .extend(members.iter().map(|&r| ds.instances[r].id.clone()));
            continue;
        }
        out.bins.push(Bin {
            index: (key - first) as usize,
            month_start: month_start(key),
            month_end: month_start(key + 1),
            members,
        });
    }
    out
}

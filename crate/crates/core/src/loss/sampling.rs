use super::{LossConfig, Member, Triplet, TripletKind};
use crate::dataset::{Dataset, Modality};
use crate::numerics::{Rng, Scalar};

/// Up to `k` distinct entries of `cands`, uniformly without replacement.
fn pick(cands: &mut [usize], k: usize, rng: &mut Rng) -> Vec<usize> {
    let k = k.min(cands.len());
    for i in 0..k {
        let j = i + rng.below(cands.len() - i);
        cands.swap(i, j);
    }
    cands[..k].to_vec()
}

/// Triplets for one batch, positions indexing into `rows`.
///
/// Every instance anchors in both modalities. Each anchor gets `k_neg`
/// negatives from other categories and, when the intra term is enabled,
/// `k_pos` same-category partners outside the window. Anchors without
/// eligible partners contribute nothing of that kind.
pub fn sample_batch_triplets<T: Scalar>(
    ds: &Dataset<T>,
    rows: &[usize],
    rng: &mut Rng,
    cfg: &LossConfig,
) -> Vec<Triplet> {
    let months = ds.timespan.months();
    let cat = |pos: usize| ds.instances[rows[pos]].category;
    let time = |pos: usize| ds.time_of(rows[pos]);
    let mut out = Vec::new();
    let mut cands = Vec::with_capacity(rows.len());
    for a in 0..rows.len() {
        for modality in [Modality::Visual, Modality::Text] {
            let opp = modality.opposite();
            let anchor = Member::new(a, modality);
            let positive = Member::new(a, opp);

            cands.clear();
            cands.extend((0..rows.len()).filter(|&n| cat(n) != cat(a)));
            for n in pick(&mut cands, cfg.k_neg, rng) {
                out.push(Triplet {
                    anchor,
                    positive,
                    negative: Member::new(n, opp),
                    kind: TripletKind::Inter,
                });
            }

            if cfg.intra_enabled {
                cands.clear();
                cands.extend((0..rows.len()).filter(|&j| {
                    j != a && cat(j) == cat(a) && (time(j) - time(a)).abs() * months > cfg.window_months
                }));
                for j in pick(&mut cands, cfg.k_pos, rng) {
                    out.push(Triplet {
                        anchor,
                        positive,
                        negative: Member::new(j, opp),
                        kind: TripletKind::Intra,
                    });
                }
            }
        }
    }
    out
}

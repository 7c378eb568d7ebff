use super::{ClientUpdate, ProtocolError};
use crate::model::ModelParams;

fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

/// Sample-weighted FedAvg, `Σ n_k θ_k / Σ n_k`.
///
/// Updates are processed in ascending client id whatever the input order.
/// Each coordinate is computed as `θ_ref + Σ (n_k / N)(θ_k - θ_ref)` with the
/// lowest-id client as reference and a pairwise sum, then clamped to the
/// clients' min/max envelope. Identical updates therefore aggregate to
/// themselves bit for bit.
pub fn aggregate_fedavg(updates: &[ClientUpdate]) -> Result<ModelParams, ProtocolError> {
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    let first = *sorted.first().ok_or(ProtocolError::EmptyUpdates)?;
    for pair in sorted.windows(2) {
        if pair[0].client_id == pair[1].client_id {
            return Err(ProtocolError::Incompatible {
                client_id: pair[1].client_id,
                message: "duplicate update".into(),
            });
        }
    }
    for u in &sorted {
        let incompatible = |message: String| {
            Err(ProtocolError::Incompatible {
                client_id: u.client_id,
                message,
            })
        };
        if u.sample_count == 0 {
            return incompatible("zero sample count".into());
        }
        if u.params.weights.len() != first.params.weights.len()
            || u.params.layer_shapes != first.params.layer_shapes
        {
            return incompatible(format!(
                "{} weights with shapes {:?}, expected {} with {:?}",
                u.params.weights.len(),
                u.params.layer_shapes,
                first.params.weights.len(),
                first.params.layer_shapes
            ));
        }
        if !u.params.is_finite() {
            return incompatible("non-finite parameters".into());
        }
    }
    let total: f64 = sorted.iter().map(|u| u.sample_count as f64).sum();
    let shares: Vec<f64> = sorted
        .iter()
        .map(|u| u.sample_count as f64 / total)
        .collect();
    let mut terms = vec![0.0; sorted.len()];
    let mut coord = |get: &dyn Fn(&ModelParams) -> f64| {
        let base = get(&first.params);
        let (mut lo, mut hi) = (base, base);
        for ((t, u), w) in terms.iter_mut().zip(&sorted).zip(&shares) {
            let v = get(&u.params);
            lo = lo.min(v);
            hi = hi.max(v);
            *t = w * (v - base);
        }
        let delta = pairwise_sum(&terms);
        if delta == 0.0 {
            base
        } else {
            (base + delta).clamp(lo, hi)
        }
    };
    let weights = (0..first.params.weights.len())
        .map(|i| coord(&|p: &ModelParams| p.weights[i]))
        .collect();
    let intercept = coord(&|p: &ModelParams| p.intercept);
    Ok(ModelParams {
        weights,
        intercept,
        layer_shapes: first.params.layer_shapes.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn upd(id: u32, n: usize, w: Vec<f64>, b: f64) -> ClientUpdate {
        ClientUpdate {
            client_id: id,
            sample_count: n,
            params: ModelParams {
                weights: w,
                intercept: b,
                layer_shapes: vec![],
            },
            loss: 0.0,
        }
    }

    #[test]
    fn weighted_mean() {
        let a = aggregate_fedavg(&[
            upd(1, 1, vec![0.0, 0.0], 0.0),
            upd(2, 3, vec![4.0, 4.0], 4.0),
        ])
        .unwrap();
        assert_eq!(a.weights, vec![3.0, 3.0]);
        assert_eq!(a.intercept, 3.0);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(
            aggregate_fedavg(&[]),
            Err(ProtocolError::EmptyUpdates)
        ));
    }

    #[test]
    fn single_client_passthrough() {
        let u = upd(7, 13, vec![0.1, -0.7, 1e-300], 61.3);
        assert_eq!(
            aggregate_fedavg(std::slice::from_ref(&u)).unwrap(),
            u.params
        );
    }

    #[test]
    fn shape_mismatch_and_duplicates() {
        assert!(
            aggregate_fedavg(&[upd(1, 1, vec![0.0], 0.0), upd(2, 1, vec![0.0, 1.0], 0.0)]).is_err()
        );
        assert!(aggregate_fedavg(&[upd(1, 1, vec![0.0], 0.0), upd(1, 1, vec![0.0], 0.0)]).is_err());
        assert!(aggregate_fedavg(&[upd(1, 0, vec![0.0], 0.0)]).is_err());
    }

    fn updates() -> impl Strategy<Value = Vec<ClientUpdate>> {
        (1usize..6, 1usize..12).prop_flat_map(|(dim, k)| {
            prop::collection::vec(
                (
                    1usize..500,
                    prop::collection::vec(-1e3f64..1e3, dim),
                    -1e3f64..1e3,
                ),
                k,
            )
            .prop_map(|v| {
                v.into_iter()
                    .enumerate()
                    .map(|(i, (n, w, b))| upd(i as u32 * 3 + 1, n, w, b))
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn permutation_invariant(us in updates(), seed: u64) {
            use rand::{seq::SliceRandom, SeedableRng};
            let a = aggregate_fedavg(&us).unwrap();
            let mut shuffled = us.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(a, aggregate_fedavg(&shuffled).unwrap());
        }

        #[test]
        fn identical_updates_are_fixed(u in updates(), k in 1usize..16) {
            let base = &u[0];
            let copies: Vec<ClientUpdate> = (0..k).map(|i| upd(i as u32, base.sample_count + i, base.params.weights.clone(), base.params.intercept)).collect();
            prop_assert_eq!(aggregate_fedavg(&copies).unwrap(), base.params.clone());
        }

        #[test]
        fn within_envelope_and_close_to_mean(us in updates()) {
            let a = aggregate_fedavg(&us).unwrap();
            let total: f64 = us.iter().map(|u| u.sample_count as f64).sum();
            for i in 0..a.weights.len() {
                let vals: Vec<f64> = us.iter().map(|u| u.params.weights[i]).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= a.weights[i] && a.weights[i] <= hi);
                let naive: f64 = us.iter().map(|u| u.sample_count as f64 * u.params.weights[i]).sum::<f64>() / total;
                prop_assert!((naive - a.weights[i]).abs() <= 1e-9 * (1.0 + naive.abs()));
            }
        }
    }
}

//! The 300-instance Lite subset: 20 instances from every dataset.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::registry::{canonical_ids, DATASETS};
use super::HarnessError;

pub const LITE_PER_DATASET: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceRef {
    pub dataset: String,
    pub instance_id: String,
}

/// Canonical ids for every registry dataset.
pub fn full_registry_instances() -> BTreeMap<String, Vec<String>> {
    DATASETS
        .iter()
        .map(|d| (d.name.to_string(), canonical_ids(d)))
        .collect()
}

/// Draws [`LITE_PER_DATASET`] ids from each registry dataset, in registry order.
/// Each dataset gets its own stream derived from `seed`, so the draw for one
/// dataset does not depend on the others' sizes. Within a dataset the chosen
/// ids keep their input order.
pub fn sample_lite(
    instances: &BTreeMap<String, Vec<String>>,
    seed: u64,
) -> Result<Vec<InstanceRef>, HarnessError> {
    let mut out = Vec::with_capacity(DATASETS.len() * LITE_PER_DATASET);
    for (i, d) in DATASETS.iter().enumerate() {
        let ids = instances.get(d.name).map(Vec::as_slice).unwrap_or(&[]);
        if ids.len() < LITE_PER_DATASET {
            return Err(HarnessError::InsufficientInstances {
                dataset: d.name.to_string(),
                have: ids.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut picked = rand::seq::index::sample(&mut rng, ids.len(), LITE_PER_DATASET).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|k| InstanceRef {
            dataset: d.name.to_string(),
            instance_id: ids[k].clone(),
        }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn twenty_each_and_small_datasets_complete() {
        let inst = full_registry_instances();
        let refs = sample_lite(&inst, 7).unwrap();
        assert_eq!(refs.len(), 300);
        for d in &DATASETS {
            let chosen: BTreeSet<_> = refs
                .iter()
                .filter(|r| r.dataset == d.name)
                .map(|r| r.instance_id.clone())
                .collect();
            assert_eq!(chosen.len(), 20, "{}", d.name);
        }
        let vs: BTreeSet<_> = refs
            .iter()
            .filter(|r| r.dataset == "vscode")
            .map(|r| r.instance_id.clone())
            .collect();
        assert_eq!(vs, inst["vscode"].iter().cloned().collect());
    }

    #[test]
    fn insufficient() {
        let mut inst = full_registry_instances();
        inst.get_mut("bird").unwrap().truncate(19);
        assert_eq!(
            sample_lite(&inst, 1),
            Err(HarnessError::InsufficientInstances {
                dataset: "bird".into(),
                have: 19
            })
        );
    }

    proptest! {
        #[test]
        fn deterministic_under_seed(seed in any::<u64>()) {
            let inst = full_registry_instances();
            let a = sample_lite(&inst, seed).unwrap();
            prop_assert_eq!(&a, &sample_lite(&inst, seed).unwrap());
            prop_assert_eq!(a.len(), 300);
        }
    }
}

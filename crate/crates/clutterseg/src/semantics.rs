//! Instance embedding aggregation and text-query target ranking.

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::instances::Instance3D;

/// Mean of constituent unit embeddings, re-normalized. A vanishing mean
/// (antipodal constituents) falls back to the largest-area constituent.
pub fn aggregate_group_embedding(constituents: &[(&Embedding, u32)]) -> Result<Embedding> {
    assert!(!constituents.is_empty(), "group must be non-empty");
    let sum = Embedding::component_sum(constituents.iter().map(|(e, _)| *e));
    let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm / constituents.len() as f64 > 1e-9 {
        Embedding::from_raw(sum)
    } else {
        let largest = constituents
            .iter()
            .max_by_key(|(e, area)| (*area, std::cmp::Reverse(e.dim())))
            .unwrap();
        Ok(largest.0.clone())
    }
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    /// (instance id, cosine similarity), non-increasing scores.
    pub ranking: Vec<(u32, f64)>,
}

impl QueryResult {
    pub fn target(&self) -> u32 {
        self.ranking[0].0
    }
}

/// Rank instances by cosine similarity to the query embedding, descending;
/// score ties go to the higher-confidence instance, then the lower id.
pub fn identify_target(query: &Embedding, instances: &[Instance3D]) -> Result<QueryResult> {
    if instances.is_empty() {
        return Err(Error::NoInstances);
    }
    let mut scored: Vec<(u32, f64, u32)> = instances
        .iter()
        .map(|inst| Ok((inst.id, query.dot(&inst.embedding)?, inst.confidence)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then(b.2.cmp(&a.2))
            .then(a.0.cmp(&b.0))
    });
    Ok(QueryResult {
        ranking: scored.into_iter().map(|(id, s, _)| (id, s)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(values: Vec<f64>) -> Embedding {
        Embedding::from_raw(values).unwrap()
    }

    fn instance(id: u32, confidence: u32, e: Embedding) -> Instance3D {
        Instance3D {
            id,
            supervoxels: vec![],
            confidence,
            embedding: e,
            points: vec![],
        }
    }

    #[test]
    fn identical_constituents_aggregate_to_themselves() {
        let e = unit(vec![0.6, 0.8]);
        let agg = aggregate_group_embedding(&[(&e, 10), (&e, 20), (&e, 5)]).unwrap();
        assert!((agg.dot(&e).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_pair_aggregates_to_diagonal() {
        let a = unit(vec![1.0, 0.0]);
        let b = unit(vec![0.0, 1.0]);
        let agg = aggregate_group_embedding(&[(&a, 1), (&b, 1)]).unwrap();
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        assert!((agg.dot(&a).unwrap() - inv_sqrt2).abs() < 1e-12);
        assert!((agg.dot(&b).unwrap() - inv_sqrt2).abs() < 1e-12);
        assert!((agg.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn antipodal_mean_falls_back_to_largest_area() {
        let a = unit(vec![1.0, 0.0]);
        let b = unit(vec![-1.0, 0.0]);
        let agg = aggregate_group_embedding(&[(&a, 5), (&b, 50)]).unwrap();
        assert!((agg.dot(&b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aggregation_is_permutation_invariant() {
        let a = unit(vec![0.6, 0.8, 0.0]);
        let b = unit(vec![0.0, 0.6, 0.8]);
        let c = unit(vec![0.8, 0.0, 0.6]);
        let p1 = aggregate_group_embedding(&[(&a, 1), (&b, 2), (&c, 3)]).unwrap();
        let p2 = aggregate_group_embedding(&[(&c, 3), (&a, 1), (&b, 2)]).unwrap();
        assert!((p1.dot(&p2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_match_ranks_first_with_score_one() {
        let q = unit(vec![1.0, 0.0]);
        let instances = vec![
            instance(0, 3, unit(vec![0.0, 1.0])),
            instance(1, 2, unit(vec![1.0, 0.0])),
        ];
        let result = identify_target(&q, &instances).unwrap();
        assert_eq!(result.target(), 1);
        assert!((result.ranking[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_orthogonal_falls_back_to_confidence() {
        let q = unit(vec![1.0, 0.0, 0.0]);
        let instances = vec![
            instance(0, 2, unit(vec![0.0, 1.0, 0.0])),
            instance(1, 7, unit(vec![0.0, 0.0, 1.0])),
            instance(2, 4, unit(vec![0.0, 1.0, 0.0])),
        ];
        let result = identify_target(&q, &instances).unwrap();
        assert_eq!(result.target(), 1, "highest confidence wins zero ties");
    }

    #[test]
    fn empty_instances_is_an_error() {
        let q = unit(vec![1.0]);
        assert!(matches!(
            identify_target(&q, &[]),
            Err(Error::NoInstances)
        ));
    }

    #[test]
    fn ranking_scores_non_increasing() {
        let q = unit(vec![0.6, 0.8]);
        let instances = vec![
            instance(0, 1, unit(vec![0.8, 0.6])),
            instance(1, 1, unit(vec![1.0, 0.0])),
            instance(2, 1, unit(vec![0.6, 0.8])),
        ];
        let result = identify_target(&q, &instances).unwrap();
        for w in result.ranking.windows(2) {
            assert!(w[0].1 >= w[1].1);
        }
        assert_eq!(result.target(), 2);
    }
}

use nalgebra::DMatrix;

use super::{EmbeddingError, EmbeddingSource, EmbeddingTable, EmbeddingVector};

pub const DEFAULT_TARGET_DIM: usize = 256;

/// Maps an `n x d` row matrix to `n x target_dim`.
pub trait Reducer {
    fn name(&self) -> &str;
    fn reduce(&self, rows: &DMatrix<f64>, target_dim: usize, seed: u64) -> Result<DMatrix<f64>, EmbeddingError>;
}

/// Passes rows through unchanged; only valid when `target_dim` equals the
/// input width.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityReducer;

impl Reducer for IdentityReducer {
    fn name(&self) -> &str {
        "identity"
    }

    fn reduce(&self, rows: &DMatrix<f64>, target_dim: usize, _seed: u64) -> Result<DMatrix<f64>, EmbeddingError> {
        if target_dim != rows.ncols() {
            return Err(EmbeddingError::TargetDim { target: target_dim, max: rows.ncols() });
        }
        Ok(rows.clone())
    }
}

/// Centered principal-component projection via SVD.
///
/// Components are ordered by decreasing singular value. Each component's
/// sign is fixed so that its largest-magnitude loading is positive, which
/// makes the output independent of the decomposition's sign convention.
/// The projection is deterministic, so the seed is unused.
#[derive(Debug, Default, Clone, Copy)]
pub struct PcaReducer;

impl Reducer for PcaReducer {
    fn name(&self) -> &str {
        "pca"
    }

    fn reduce(&self, rows: &DMatrix<f64>, target_dim: usize, _seed: u64) -> Result<DMatrix<f64>, EmbeddingError> {
        let (n, d) = rows.shape();
        let max = n.min(d);
        if target_dim == 0 || target_dim > max {
            return Err(EmbeddingError::TargetDim { target: target_dim, max });
        }
        let mut centered = rows.clone();
        for mut col in centered.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let svd = centered.clone().svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| EmbeddingError::Reducer {
            reducer: "pca".into(),
            message: "SVD did not produce right singular vectors".into(),
        })?;
        let sv = &svd.singular_values;
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

        let mut components = DMatrix::<f64>::zeros(d, target_dim);
        for (k, &src) in order.iter().take(target_dim).enumerate() {
            let row = v_t.row(src);
            let mut pivot = 0;
            for j in 1..d {
                if row[j].abs() > row[pivot].abs() {
                    pivot = j;
                }
            }
            let sign = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..d {
                components[(j, k)] = sign * row[j];
            }
        }
        Ok(centered * components)
    }
}

/// Concatenates `a` and `b` per id (in `a`'s order), reduces the result to
/// `target_dim` columns and renormalizes every row to unit length.
pub fn fuse(
    a: &EmbeddingTable,
    b: &EmbeddingTable,
    target_dim: usize,
    seed: u64,
    reducer: &dyn Reducer,
) -> Result<EmbeddingTable, EmbeddingError> {
    let missing: Vec<String> = a.ids().filter(|id| b.get(id).is_none()).map(String::from).collect();
    let unexpected: Vec<String> = b.ids().filter(|id| a.get(id).is_none()).map(String::from).collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(EmbeddingError::IdMismatch { missing, unexpected });
    }
    let n = a.len();
    let width = a.dim() + b.dim();
    if target_dim == 0 {
        return Err(EmbeddingError::TargetDim { target: target_dim, max: n.min(width) });
    }
    let mut rows = DMatrix::<f64>::zeros(n, width);
    for (i, (id, va)) in a.iter().enumerate() {
        let vb = b.get(id).expect("id sets checked above");
        for (j, x) in va.values().iter().chain(vb.values()).enumerate() {
            rows[(i, j)] = *x;
        }
    }
    let reduced = reducer.reduce(&rows, target_dim, seed)?;
    if reduced.shape() != (n, target_dim) {
        return Err(EmbeddingError::Reducer {
            reducer: reducer.name().to_string(),
            message: format!("returned shape {:?}, expected {:?}", reduced.shape(), (n, target_dim)),
        });
    }
    let mut out = Vec::with_capacity(n);
    for (i, id) in a.ids().enumerate() {
        let v = EmbeddingVector::new(reduced.row(i).iter().copied().collect())?;
        let unit = v.normalized().ok_or_else(|| EmbeddingError::ZeroRow(id.to_string()))?;
        out.push((id.to_string(), unit));
    }
    EmbeddingTable::new(EmbeddingSource::Fused, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_table(ids: usize, dim: usize, seed: u64, model: &str) -> EmbeddingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..ids)
            .map(|i| {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                (format!("r{i}"), EmbeddingVector::new(v).unwrap().normalized().unwrap())
            })
            .collect();
        EmbeddingTable::new(EmbeddingSource::External(model.into()), rows).unwrap()
    }

    #[test]
    fn fused_dimension_matches_target() {
        let a = random_table(90, 96, 1, "bert");
        let b = random_table(90, 40, 2, "tfidf");
        let f = fuse(&a, &b, 64, 0, &PcaReducer).unwrap();
        assert_eq!(f.dim(), 64);
        assert_eq!(f.source, EmbeddingSource::Fused);
        for (_, v) in f.iter() {
            assert!((v.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_reducer_yields_normalized_concatenation() {
        let a = random_table(4, 3, 3, "a");
        let b = random_table(4, 2, 4, "b");
        let f = fuse(&a, &b, 5, 0, &IdentityReducer).unwrap();
        for (id, v) in f.iter() {
            let concat: Vec<f64> =
                a.get(id).unwrap().values().iter().chain(b.get(id).unwrap().values()).copied().collect();
            let expected = EmbeddingVector::new(concat).unwrap().normalized().unwrap();
            for (x, y) in v.values().iter().zip(expected.values()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn same_seed_same_output() {
        let a = random_table(30, 20, 5, "a");
        let b = random_table(30, 10, 6, "b");
        assert_eq!(fuse(&a, &b, 8, 3, &PcaReducer).unwrap(), fuse(&a, &b, 8, 3, &PcaReducer).unwrap());
    }

    #[test]
    fn rejects_bad_target_and_id_mismatch() {
        let a = random_table(5, 4, 7, "a");
        let b = random_table(5, 4, 8, "b");
        assert!(matches!(fuse(&a, &b, 6, 0, &PcaReducer), Err(EmbeddingError::TargetDim { target: 6, max: 5 })));
        assert!(matches!(fuse(&a, &b, 0, 0, &PcaReducer), Err(EmbeddingError::TargetDim { .. })));
        let c = random_table(4, 4, 9, "c");
        assert!(matches!(fuse(&a, &c, 2, 0, &PcaReducer), Err(EmbeddingError::IdMismatch { .. })));
    }

    #[test]
    fn pca_recovers_dominant_axis_with_fixed_sign() {
        // points spread along (1, 1) with small noise along (1, -1)
        let data: Vec<f64> = (0..10)
            .flat_map(|i| {
                let t = i as f64 - 4.5;
                let e = if i % 2 == 0 { 0.01 } else { -0.01 };
                [t + e, t - e]
            })
            .collect();
        let rows = DMatrix::from_row_slice(10, 2, &data);
        let proj = PcaReducer.reduce(&rows, 1, 0).unwrap();
        // first point has the most negative t; positive loading on the axis keeps its sign negative
        assert!(proj[(0, 0)] < 0.0);
        assert!((proj[(0, 0)] + 4.5 * 2f64.sqrt()).abs() < 0.05);
    }
}

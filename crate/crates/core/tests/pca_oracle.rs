//! Power-iteration PCA against a dense eigendecomposition oracle.

use fdrec_core::data::{
    assign_groups, build_matrix, Attribute, DatasetSplit, GroupThresholds, InteractionMatrix,
    NormalizationScheme, RatingDataset, RatingEvent, UserMeta,
};
use fdrec_core::groups::pca_first_pc;
use nalgebra::DMatrix;
use rand::Rng;

/// Dataset with `n_a` group-A users and 2 filler group-B users over `m`
/// items, every cell observed and in the training split.
fn random_instance(m: usize, n_a: usize, seed: u64) -> (InteractionMatrix, DatasetSplit, usize) {
    let mut rng = fdrec_core::rng::stream(seed, "pca-oracle", 0);
    let mut ds = RatingDataset::default();
    for j in 0..(n_a + 2) {
        let user = j as u32 + 1;
        ds.users.insert(
            user,
            UserMeta {
                age: Some(if j < n_a { 20 } else { 60 }),
                ..Default::default()
            },
        );
        for i in 0..m {
            ds.events.push(RatingEvent {
                user_id: user,
                item_id: i as u32,
                rating: rng.random_range(1.0..5.0),
                timestamp: None,
            });
        }
    }
    let matrix = build_matrix(&ds, NormalizationScheme::MinMax).unwrap();
    let mn = matrix.n_items * matrix.n_users;
    let mut split = DatasetSplit {
        n_items: matrix.n_items,
        n_users: matrix.n_users,
        train: vec![1; mn],
        val: vec![0; mn],
        test: vec![0; mn],
        dropped_users: vec![],
    };
    // Only observed cells count as train; everything is observed here.
    for j in 0..matrix.n_users {
        for i in 0..matrix.n_items {
            if !matrix.observed(i, j) {
                split.train[j * matrix.n_items + i] = 0;
            }
        }
    }
    (matrix, split, n_a)
}

/// Explicit row-centered covariance of the group-A block.
fn dense_covariance(matrix: &InteractionMatrix, n_a: usize) -> DMatrix<f64> {
    let m = matrix.n_items;
    let mut row_mean = vec![0.0; m];
    for j in 0..n_a {
        for i in 0..m {
            row_mean[i] += matrix.value(i, j) / n_a as f64;
        }
    }
    let mut cov = DMatrix::zeros(m, m);
    for j in 0..n_a {
        for a in 0..m {
            for b in 0..m {
                cov[(a, b)] += (matrix.value(a, j) - row_mean[a])
                    * (matrix.value(b, j) - row_mean[b])
                    / (n_a - 1) as f64;
            }
        }
    }
    cov
}

fn dominant_eigenvector(cov: &DMatrix<f64>) -> (Vec<f64>, f64, f64) {
    let eig = nalgebra::SymmetricEigen::new(cov.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let top = order[0];
    let second = eig.eigenvalues[order[1]];
    let v: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    (v, eig.eigenvalues[top], second)
}

#[test]
fn matches_dense_eigensolver_on_100_random_blocks() {
    let mut shape_rng = fdrec_core::rng::stream(0xACE, "pca-shapes", 0);
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let m = shape_rng.random_range(3..=20);
        let n_a = shape_rng.random_range(4..=30);
        let (matrix, split, n_a) = random_instance(m, n_a, 1000 + trial);
        let groups = assign_groups(
            &dataset_of(&matrix, n_a),
            Attribute::Age,
            GroupThresholds::default(),
        )
        .unwrap();

        let vectors = pca_first_pc(&matrix, &split, &groups, 1e-12, 100_000).unwrap();
        assert!(
            !vectors.degenerate_a,
            "unexpected degenerate flag on trial {trial}"
        );

        let cov = dense_covariance(&matrix, n_a);
        let (oracle, _l1, _l2) = dominant_eigenvector(&cov);

        // Align signs, then compare componentwise.
        let dot: f64 = vectors.a.iter().zip(&oracle).map(|(x, y)| x * y).sum();
        let sign = if dot >= 0.0 { 1.0 } else { -1.0 };
        let mut max_abs: f64 = 0.0;
        for (x, y) in vectors.a.iter().zip(&oracle) {
            max_abs = max_abs.max((x - sign * y).abs());
        }
        worst = worst.max(max_abs);
        assert!(
            max_abs <= 1e-8,
            "trial {trial} ({m}x{n_a}): eigenvector mismatch {max_abs:.3e}"
        );
    }
    println!("worst componentwise deviation over 100 blocks: {worst:.3e}");
}

#[test]
fn rank_one_three_by_three_case() {
    // Covariance of a rank-1 block: the first PC is the generating vector.
    let u = [0.6, 0.64, 0.48]; // unit vector
    let weights = [0.5, 1.5, 2.5, 3.5];
    let mut ds = RatingDataset::default();
    for (j, &w) in weights.iter().enumerate() {
        let user = j as u32 + 1;
        ds.users.insert(
            user,
            UserMeta {
                age: Some(20),
                ..Default::default()
            },
        );
        for (i, &ui) in u.iter().enumerate() {
            ds.events.push(RatingEvent {
                user_id: user,
                item_id: i as u32,
                rating: 2.0 + w * ui,
                timestamp: None,
            });
        }
    }
    for j in 4..6 {
        let user = j as u32 + 1;
        ds.users.insert(
            user,
            UserMeta {
                age: Some(60),
                ..Default::default()
            },
        );
        for i in 0..3 {
            ds.events.push(RatingEvent {
                user_id: user,
                item_id: i as u32,
                rating: 1.0 + ((i + j) % 4) as f64,
                timestamp: None,
            });
        }
    }
    let matrix = build_matrix(&ds, NormalizationScheme::MinMax).unwrap();
    let mn = matrix.n_items * matrix.n_users;
    let split = DatasetSplit {
        n_items: matrix.n_items,
        n_users: matrix.n_users,
        train: vec![1; mn],
        val: vec![0; mn],
        test: vec![0; mn],
        dropped_users: vec![],
    };
    let groups = assign_groups(&ds, Attribute::Age, GroupThresholds::default()).unwrap();
    let vectors = pca_first_pc(&matrix, &split, &groups, 1e-12, 100_000).unwrap();

    // Brute-force eigendecomposition of the explicit 3x3 covariance.
    let cov = dense_covariance(&matrix, 4);
    let (oracle, l1, l2) = dominant_eigenvector(&cov);
    assert!(l1 > l2 * 1e6, "rank-1 block should have a huge eigengap");
    let dot: f64 = vectors.a.iter().zip(&oracle).map(|(x, y)| x * y).sum();
    assert!(dot.abs() > 1.0 - 1e-10);
    // The normalized matrix is an affine image of the raw block; centering
    // removes the offset, so the PC is parallel to u.
    let norm_u = {
        let n: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        u.iter().map(|x| x / n).collect::<Vec<_>>()
    };
    let dot_u: f64 = vectors.a.iter().zip(&norm_u).map(|(x, y)| x * y).sum();
    assert!(dot_u.abs() > 1.0 - 1e-10, "PC not parallel to u: {dot_u}");
}

/// Reconstruct a RatingDataset shell so assign_groups can partition users
/// the same way the instance builder did (ages only).
fn dataset_of(matrix: &InteractionMatrix, n_a: usize) -> RatingDataset {
    let mut ds = RatingDataset::default();
    for (j, &user) in matrix.user_ids.iter().enumerate() {
        ds.users.insert(
            user,
            UserMeta {
                age: Some(if j < n_a { 20 } else { 60 }),
                ..Default::default()
            },
        );
    }
    ds
}

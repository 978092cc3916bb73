mod common;

use common::{set_partitions, tiny_column_model, tiny_row_model, total_variation};
use omics_bnp::mcmc::columns::existing_column_log_weights;
use omics_bnp::mcmc::density::joint_log_density;
use omics_bnp::mcmc::init::{empty_store, seat_latents};
use omics_bnp::mcmc::rows::existing_row_log_weights;
use omics_bnp::model::{ClusterState, Hyperparameters, Matrix, TransformedDataset};
use omics_bnp::rng;
use rand::Rng;

#[test]
fn oracle_covers_all_partitions() {
    assert_eq!(set_partitions(3).len(), 5);
    let m = tiny_column_model();
    let post = m.column_posterior(&[0, 0], 0.4, 1.0);
    assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn column_kernel_with_positive_discount_matches_enumeration() {
    let m = tiny_column_model();
    let (d, alpha) = (0.4, 1.5);
    for rows in [vec![0, 0], vec![0, 1]] {
        let exact = m.column_posterior(&rows, d, alpha);
        let freq = m.column_chain(&rows, d, alpha, 40_000, 11);
        let tv = total_variation(&exact, &freq);
        assert!(tv < 0.05, "rows {rows:?}: tv {tv}, exact {exact:?}, chain {freq:?}");
    }
}

#[test]
fn row_kernel_with_split_columns_matches_enumeration() {
    let m = tiny_row_model();
    let cols = vec![vec![0, 0], vec![0]];
    let exact = m.row_posterior(&cols, 2.0);
    let freq = m.row_chain(&cols, 2.0, 40_000, 12);
    let tv = total_variation(&exact, &freq);
    assert!(tv < 0.05, "tv {tv}, exact {exact:?}, chain {freq:?}");
}

fn random_dataset<R: Rng>(rng: &mut R, n: usize, ps: &[usize]) -> TransformedDataset {
    let matrices = ps
        .iter()
        .map(|&p| Matrix::new(n, p, (0..n * p).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap())
        .collect();
    TransformedDataset::from_matrices(matrices).unwrap()
}

/// Differences of the kernels' conditional log weights between two target
/// clusters must equal the differences of the full joint density.
#[test]
fn conditional_weights_match_joint_density_differences() {
    let mut rng = rng::stream(3, 0);
    let hyper = Hyperparameters {
        alpha1: 1.3,
        alpha2: 0.7,
        discount: vec![0.25],
        ..Hyperparameters::default()
    };
    let mut checked = 0;
    for _ in 0..30 {
        let data = random_dataset(&mut rng, 7, &[9, 6]);
        let h = rng.random_range(2..4);
        let rows: Vec<usize> = (0..7).map(|i| i % h).collect();
        let columns: Vec<Vec<usize>> = data.platforms.iter().map(|p| (0..p.p()).map(|j| j % 3).collect()).collect();
        let state = ClusterState::new(columns, rows).unwrap();
        let mut store = empty_store(&hyper, data.n_platforms());
        let latents = seat_latents(&data, &state, &mut store, false, &mut rng);
        let discounts = vec![0.25, 0.25];
        let joint = |s: &ClusterState| joint_log_density(&data, s, &latents, &store, &hyper, &discounts, false);

        for t in 0..2 {
            for j in 0..data.platforms[t].p() {
                let w = existing_column_log_weights(&state, &latents, &data, t, j, 0.25);
                let moved: Vec<(usize, f64)> = (0..state.k(t))
                    .filter(|k| w[*k].is_finite())
                    .map(|k| {
                        let mut cols = state.columns.clone();
                        cols[t][j] = k;
                        (k, joint(&ClusterState::new(cols, state.rows.clone()).unwrap()))
                    })
                    .collect();
                for pair in moved.windows(2) {
                    let (a, ja) = pair[0];
                    let (b, jb) = pair[1];
                    assert!(((w[a] - w[b]) - (ja - jb)).abs() < 1e-8);
                    checked += 1;
                }
            }
        }
        for i in 0..7 {
            let w = existing_row_log_weights(&state, &latents, &data, i);
            let moved: Vec<(usize, f64)> = (0..state.h())
                .filter(|h| w[*h].is_finite())
                .map(|h| {
                    let mut rows = state.rows.clone();
                    rows[i] = h;
                    (h, joint(&ClusterState::new(state.columns.clone(), rows).unwrap()))
                })
                .collect();
            for pair in moved.windows(2) {
                let (a, ja) = pair[0];
                let (b, jb) = pair[1];
                assert!(((w[a] - w[b]) - (ja - jb)).abs() < 1e-8);
                checked += 1;
            }
        }
    }
    assert!(checked > 300, "{checked}");
}

fn fixed_store(values: Vec<f64>) -> omics_bnp::mcmc::AtomStore {
    let w = vec![1.0 / values.len() as f64; values.len()];
    omics_bnp::mcmc::AtomStore::Fixed(omics_bnp::mcmc::atoms::FixedAtoms::new(values, w).unwrap())
}

fn latents_with(values: &[Vec<f64>], atoms: &[f64], sigma: f64) -> omics_bnp::model::LatentMatrices {
    use omics_bnp::model::{LatentCell, LatentMatrix};
    let h = values.len();
    let k = values[0].len();
    let cells = values
        .iter()
        .flatten()
        .map(|&v| {
            let a = atoms.iter().position(|&x| x == v).unwrap() as u64;
            LatentCell { value: v, atom: a, table: a }
        })
        .collect();
    omics_bnp::model::LatentMatrices {
        platforms: vec![LatentMatrix::new(h, k, cells).unwrap()],
        noise_sd: vec![sigma],
    }
}

#[test]
fn tiny_noise_forces_columns_onto_matching_latent_columns() {
    use omics_bnp::mcmc::columns::update_column_allocations;
    let atoms = [-4.0, 0.0, 4.0];
    // latent columns: (-4, 4), (0, 0), (4, -4); rows are two subjects each
    let phi = vec![vec![-4.0, 0.0, 4.0], vec![4.0, 0.0, -4.0]];
    let truth = [0usize, 1, 2, 0, 2, 1, 1];
    let mut z = Matrix::zeros(4, truth.len());
    for i in 0..4 {
        for (j, &k) in truth.iter().enumerate() {
            z.set(i, j, phi[i / 2][k]);
        }
    }
    let data = TransformedDataset::from_matrices(vec![z]).unwrap();
    let mut state = ClusterState::new(vec![vec![0, 0, 1, 1, 2, 2, 0]], vec![0, 0, 1, 1]).unwrap();
    let mut latents = latents_with(&phi, &atoms, 0.001);
    let mut store = fixed_store(atoms.to_vec());
    let mut r = rng::stream(13, 0);
    update_column_allocations(&mut state, &mut latents, &mut store, &data, 0, 0.0, 1.0, 3, &mut r);
    assert_eq!(state.columns[0], truth.to_vec());
}

#[test]
fn tiny_noise_co_clusters_duplicate_subjects() {
    use omics_bnp::mcmc::rows::update_row_allocations;
    let atoms = [-3.0, 3.0];
    let z = Matrix::from_rows(&[vec![3.0, -3.0], vec![-3.0, 3.0], vec![3.0, -3.0], vec![-3.0, 3.0]]).unwrap();
    let data = TransformedDataset::from_matrices(vec![z]).unwrap();
    let mut state = ClusterState::new(vec![vec![0, 1]], vec![0, 1, 1, 0]).unwrap();
    let mut latents = latents_with(&[vec![3.0, -3.0], vec![-3.0, 3.0]], &atoms, 0.001);
    let mut store = fixed_store(atoms.to_vec());
    let mut r = rng::stream(14, 0);
    update_row_allocations(&mut state, &mut latents, &mut store, &data, 1.0, 3, &mut r);
    assert_eq!(state.rows[0], state.rows[2]);
    assert_eq!(state.rows[1], state.rows[3]);
    assert_ne!(state.rows[0], state.rows[1]);
}

#[test]
fn single_probe_keeps_its_cluster() {
    use omics_bnp::mcmc::columns::update_column_allocations;
    let data = TransformedDataset::from_matrices(vec![Matrix::from_rows(&[vec![0.3], vec![-0.2]]).unwrap()]).unwrap();
    let mut state = ClusterState::new(vec![vec![0]], vec![0, 0]).unwrap();
    let mut latents = latents_with(&[vec![0.0]], &[0.0, 1.0], 0.5);
    let mut store = fixed_store(vec![0.0, 1.0]);
    let mut r = rng::stream(15, 0);
    for _ in 0..50 {
        update_column_allocations(&mut state, &mut latents, &mut store, &data, 0, 0.3, 1.0, 3, &mut r);
        assert_eq!(state.columns[0], vec![0]);
    }
}

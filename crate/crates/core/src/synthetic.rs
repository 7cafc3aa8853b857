//! Random stochastic matrices and toy control models for tests and studies.

use rand::Rng;

use crate::state_grid::{build_z_grid, GridSpec, TransitionModel};

/// Row-stochastic matrix with strictly positive entries.
pub fn random_stochastic<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    random_rows(dim, dim, rng)
}

fn random_rows<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let raw: Vec<f64> = (0..cols).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect()
}

/// `rows` stochastic rows whose tail sums are nondecreasing in the row index.
pub fn random_monotone_rows<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let base = random_rows(rows, cols, rng);
    // tails[i][j] = Σ_{l ≥ j} base[i][l]
    let mut tails: Vec<Vec<f64>> = base
        .iter()
        .map(|row| {
            let mut t = vec![0.0; cols + 1];
            for j in (0..cols).rev() {
                t[j] = t[j + 1] + row[j];
            }
            t
        })
        .collect();
    for j in 1..cols {
        let mut col: Vec<f64> = tails.iter().map(|t| t[j]).collect();
        col.sort_by(f64::total_cmp);
        for (t, v) in tails.iter_mut().zip(col) {
            t[j] = v;
        }
    }
    tails.iter().map(|t| (0..cols).map(|j| (t[j] - t[j + 1]).max(0.0)).collect()).collect()
}

/// Square monotone stochastic matrix.
pub fn random_monotone_stochastic<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    random_monotone_rows(dim, dim, rng)
}

/// A grid and model satisfying the structural assumptions: increasing ḡ,
/// monotone P0, and feedback rows that dominate every P0 row, with the
/// perfect row dominating the quantized one.
pub fn random_monotone_model<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> (GridSpec, TransitionModel) {
    let mut g_points: Vec<f64> = Vec::with_capacity(m);
    let mut acc = 0.0;
    for _ in 0..m {
        acc += rng.random_range(0.1..2.0);
        g_points.push(acc);
    }
    let mut g_edges = vec![0.0];
    g_edges.extend(g_points.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    g_edges.push(f64::INFINITY);
    let (z_edges, z_points) = build_z_grid(n).expect("n > 0");
    let spec = GridSpec::from_parts(g_edges, g_points, z_edges, z_points).expect("valid synthetic grid");

    let mut rows = random_monotone_rows(n + 2, n, rng);
    let p1_row = rows.pop().expect("n + 2 rows");
    let peps1_row = rows.pop().expect("n + 1 rows");
    let model = TransitionModel {
        ptilde: random_stochastic(m, rng),
        p0: rows,
        p1_row,
        peps1_row: Some(peps1_row),
        sample_count: 0,
        seed: 0,
        warnings: vec![],
    };
    (spec, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::state_grid::is_monotone_stochastic;

    #[test]
    fn model_satisfies_assumptions() {
        let mut rng = seeded(11);
        for _ in 0..100 {
            let (spec, model) = random_monotone_model(3, 5, &mut rng);
            model.validate(&spec).unwrap();
            assert!(is_monotone_stochastic(&model.p0).unwrap());
            let mut stacked = model.p0.clone();
            stacked.push(model.peps1_row.clone().unwrap());
            stacked.push(model.p1_row.clone());
            for j in 1..5 {
                let tails: Vec<f64> = stacked.iter().map(|r| r[j..].iter().sum()).collect();
                assert!(tails.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            }
        }
    }
}

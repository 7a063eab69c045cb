use groundmem_core::expansion::{pagerank_on, Adjacency, ExpansionParams};
use proptest::strategy::{Strategy, ValueTree};

use crate::{ensure, PAGERANK_GRAPHS, PAGERANK_L1_TOL, PAGERANK_SUM_TOL};

/// Solves `(I - d W^T - d s 1_dangling^T) r = (1 - d) s` by Gaussian
/// elimination with partial pivoting.
fn direct_solve(n: usize, edges: &[(usize, usize)], seeds: &[usize], d: f64) -> Vec<f64> {
    let mut degree = vec![0.0; n];
    for &(a, b) in edges {
        degree[a] += 1.0;
        degree[b] += 1.0;
    }
    let mut s = vec![0.0; n];
    for &i in seeds {
        s[i] = 1.0 / seeds.len() as f64;
    }
    let mut m = vec![vec![0.0; n + 1]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
        row[n] = (1.0 - d) * s[i];
        for j in 0..n {
            if degree[j] == 0.0 {
                row[j] -= d * s[i];
            }
        }
    }
    for &(a, b) in edges {
        m[b][a] -= d / degree[a];
        m[a][b] -= d / degree[b];
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = m[row][col] / m[col][col];
                if f != 0.0 {
                    for k in col..=n {
                        m[row][k] -= f * m[col][k];
                    }
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}

fn graph_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<usize>)> {
    (20usize..=50).prop_flat_map(|n| {
        (
            proptest::strategy::Just(n),
            proptest::collection::vec((0..n, 0..n), 0..3 * n),
            proptest::collection::vec(0..n, 1..4),
        )
    })
}

pub fn check() -> Result<String, String> {
    let params = ExpansionParams::default();
    let mut runner = crate::runner(0);
    let strategy = graph_strategy();
    let mut worst: f64 = 0.0;
    let mut capped = 0;
    for case in 0..PAGERANK_GRAPHS {
        let (n, raw, seeds) = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        let edges: Vec<(usize, usize)> = raw.into_iter().filter(|(a, b)| a != b).collect();
        let mut adj = Adjacency::new(n);
        for &(a, b) in &edges {
            adj.add_edge(a, b);
        }
        let run = pagerank_on(&adj, &seeds, &params).map_err(|e| e.to_string())?;
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        let exact = direct_solve(n, &edges, &unique, params.damping);
        let l1: f64 = run.scores.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum();
        worst = worst.max(l1);
        capped += usize::from(!run.converged);
        ensure(l1 <= PAGERANK_L1_TOL, || format!("graph {case} (n={n}): L1 distance {l1:e}"))?;
        let sum: f64 = run.scores.iter().sum();
        ensure((sum - 1.0).abs() <= PAGERANK_SUM_TOL, || format!("graph {case}: scores sum to {sum}"))?;
    }

    let mut path = Adjacency::new(3);
    path.add_edge(0, 1);
    path.add_edge(1, 2);
    let run = pagerank_on(&path, &[1], &params).map_err(|e| e.to_string())?;
    ensure(run.scores[0] == run.scores[2], || format!("A-B-C seeded at B: A={} C={}", run.scores[0], run.scores[2]))?;
    Ok(format!(
        "{PAGERANK_GRAPHS} graphs within L1 {worst:.1e} of the direct solve ({capped} stopped at the iteration cap); A-B-C symmetric"
    ))
}

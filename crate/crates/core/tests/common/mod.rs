//! Shared helpers for the integration suites.
#![allow(dead_code)] // not every suite uses every helper

use rand::Rng;

use leadsel::graph::Topology;

/// Strongly connected random instance: a bidirectional ring backbone plus
/// random chords, all weights drawn from `[wlo, whi]`.
pub fn ring_with_chords(
    n: usize,
    chord_prob: f64,
    wlo: f64,
    whi: f64,
    symmetric: bool,
    rng: &mut impl Rng,
) -> Topology<f64> {
    let draw = |rng: &mut dyn rand::RngCore| wlo + rand::Rng::gen::<f64>(rng) * (whi - wlo);
    let mut edges = Vec::new();
    let link = |i: usize, j: usize, rng: &mut dyn rand::RngCore, edges: &mut Vec<(usize, usize, f64)>| {
        let w1 = draw(rng);
        let w2 = if symmetric { w1 } else { draw(rng) };
        edges.push((i, j, w1));
        edges.push((j, i, w2));
    };
    for i in 0..n {
        let j = (i + 1) % n;
        link(i.min(j), i.max(j), rng, &mut edges);
    }
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue; // ring edge already present
            }
            if rng.gen::<f64>() < chord_prob {
                link(i, j, rng, &mut edges);
            }
        }
    }
    // The ring may duplicate (0, n-1); Topology::new keeps the last weight,
    // which is fine for test instances.
    Topology::new(n, edges).unwrap()
}

/// An arbitrary (not necessarily connected) random digraph.
pub fn random_digraph(n: usize, edge_prob: f64, rng: &mut impl Rng) -> Topology<f64> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen::<f64>() < edge_prob {
                edges.push((i, j, 0.2 + rng.gen::<f64>()));
            }
        }
    }
    Topology::new(n, edges).unwrap()
}

/// Solve `A x = b` by Gaussian elimination; test-side oracle, independent of
/// the library's linear algebra.
#[allow(clippy::needless_range_loop)] // index form mirrors the elimination
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for row in (col + 1)..n {
            if m[row][col].abs() > m[piv][col].abs() {
                piv = row;
            }
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        let d = m[col][col];
        assert!(d.abs() > 1e-14, "singular oracle system");
        for row in (col + 1)..n {
            let f = m[row][col] / d;
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = rhs[col];
        for k in (col + 1)..n {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    x
}
